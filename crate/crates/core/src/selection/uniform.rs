use std::time::Instant;

use super::seo::check_evals;
use super::{all_systems, argmax, Estimates, PhaseRecord, SelectionOutcome, SeoConfig};
use crate::error::{config, invalid, Result};
use crate::inner::{run_sgd_phase, solve_saa, SampleStore};
use crate::problems::{DataDrivenProblem, SimulationProblem};
use crate::rng::SimRng;

fn per_system(samples: u64, k: usize) -> Result<u64> {
    let n = samples / k as u64;
    if n == 0 {
        return Err(config(format!("budget of {samples} samples leaves nothing for {k} systems")));
    }
    Ok(n)
}

fn single_phase(k: usize, n: u64, estimates: Estimates) -> Result<(super::SystemId, Vec<PhaseRecord>)> {
    let chosen = argmax(&estimates)?;
    let active = all_systems(k);
    let record = PhaseRecord {
        phase: 1,
        eliminated: active.iter().copied().filter(|&id| id != chosen).collect(),
        active,
        phase_budget: n,
        estimates,
    };
    Ok((chosen, vec![record]))
}

/// Every system gets `floor(T / K)` SGD steps in one phase, run exactly as an
/// SEO phase of that length; the best final estimate wins.
pub fn run_uniform_sgd<P: SimulationProblem>(problems: &[P], config: &SeoConfig, rng: &mut SimRng) -> Result<SelectionOutcome> {
    let clock = Instant::now();
    let k = problems.len();
    match k {
        0 => return Err(invalid("no systems to select from")),
        1 => return Ok(SelectionOutcome::trivial()),
        _ => {}
    }
    config.validate_sgd()?;
    check_evals(problems, config)?;
    let n = per_system(config.sample_budget(), k)?;
    let initial = config.initial_points.resolve(k)?;
    let mut estimates = Estimates::new();
    let mut evaluations = 0;
    for (id, (problem, &start)) in all_systems(k).into_iter().zip(problems.iter().zip(&initial)) {
        let phase = run_sgd_phase(problem, start, n, config.step_coefficient, rng)?;
        evaluations += phase.evaluations;
        estimates.insert(id, phase.estimate.v_hat);
    }
    let (chosen, trace) = single_phase(k, n, estimates)?;
    Ok(SelectionOutcome {
        chosen,
        trace,
        samples_used: n * k as u64,
        evaluations_used: evaluations,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// Every system gets `floor(T / K)` data points and is solved once by SAA.
pub fn run_uniform_saa<P: DataDrivenProblem>(problems: &[P], config: &SeoConfig, rng: &mut SimRng) -> Result<SelectionOutcome> {
    let clock = Instant::now();
    let k = problems.len();
    match k {
        0 => return Err(invalid("no systems to select from")),
        1 => return Ok(SelectionOutcome::trivial()),
        _ => {}
    }
    let n = per_system(config.sample_budget(), k)?;
    let mut estimates = Estimates::new();
    for (id, problem) in all_systems(k).into_iter().zip(problems) {
        let store: SampleStore = (0..n).map(|_| problem.draw(rng)).collect::<Vec<_>>().into();
        estimates.insert(id, solve_saa(problem, &store)?.v_hat);
    }
    let (chosen, trace) = single_phase(k, n, estimates)?;
    let used = n * k as u64;
    Ok(SelectionOutcome {
        chosen,
        trace,
        samples_used: used,
        evaluations_used: used,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}
