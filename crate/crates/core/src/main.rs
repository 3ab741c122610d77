fn main() -> std::process::ExitCode {
    sbos::cli::main()
}
