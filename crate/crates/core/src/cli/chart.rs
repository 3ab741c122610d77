//! SVG 1.1 charts of PCS against budget, one line per policy.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::report::ResultRow;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChartOptions {
    /// Plot log10(1 - PCS) instead of PCS.
    pub log_pfs: bool,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn frac(&self, v: f64) -> f64 {
        let (v, lo, hi) = if self.log { (v.log10(), self.lo.log10(), self.hi.log10()) } else { (v, self.lo, self.hi) };
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.5
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Series label to rows sorted by budget. Labels carry the experiment name
/// only when the rows mix experiments.
fn series(rows: &[ResultRow]) -> BTreeMap<String, Vec<&ResultRow>> {
    let mixed = rows.iter().any(|r| r.experiment != rows[0].experiment);
    let mut out: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let label = if mixed { format!("{}: {}", r.experiment, r.policy) } else { r.policy.clone() };
        out.entry(label).or_default().push(r);
    }
    for v in out.values_mut() {
        v.sort_by_key(|r| r.t);
    }
    out
}

fn budget_label(t: f64) -> String {
    if t >= 1e6 && t % 1e5 == 0.0 {
        format!("{}M", t / 1e6)
    } else if t >= 1e4 && t % 100.0 == 0.0 {
        format!("{}k", t / 1e3)
    } else {
        format!("{t}")
    }
}

/// Renders rows as a standalone SVG document. Output depends only on `rows`.
pub fn render_svg(rows: &[ResultRow], opts: ChartOptions) -> String {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let mut budgets: Vec<u64> = rows.iter().map(|r| r.t).collect();
    budgets.sort_unstable();
    budgets.dedup();
    let (tmin, tmax) = match (budgets.first(), budgets.last()) {
        (Some(&a), Some(&b)) => (a as f64, b as f64),
        _ => (0.0, 1.0),
    };
    let x_axis = Axis {
        lo: tmin,
        hi: tmax,
        log: tmin > 0.0 && tmax / tmin >= 10.0,
    };
    let max_reps = rows.iter().map(|r| r.replications).max().unwrap_or(1).max(1);
    let floor = 0.5 / max_reps as f64;
    let y_axis = if opts.log_pfs {
        Axis {
            lo: 10f64.powf(floor.log10().floor()),
            hi: 1.0,
            log: true,
        }
    } else {
        Axis { lo: 0.0, hi: 1.0, log: false }
    };
    let value = |r: &ResultRow| if opts.log_pfs { (1.0 - r.pcs).max(floor) } else { r.pcs };
    let clamp = |v: f64| v.clamp(y_axis.lo, y_axis.hi);
    let px = |t: f64| LEFT + pw * x_axis.frac(t);
    let py = |v: f64| TOP + ph * (1.0 - y_axis.frac(clamp(v)));

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if let Some(first) = rows.first() {
        let _ = writeln!(
            s,
            r#"<text class="title" x="{:.2}" y="22" text-anchor="middle" font-size="14">{} ({}, K={})</text>"#,
            LEFT + pw / 2.0,
            escape(&first.experiment),
            escape(&first.family),
            first.k
        );
    }

    // Axes, ticks and grid.
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph
    );
    let _ = writeln!(s, r#"<line class="axis" x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#, TOP + ph);
    let x_ticks: Vec<f64> = if budgets.len() <= 8 {
        budgets.iter().map(|&t| t as f64).collect()
    } else {
        (0..5).map(|i| interpolate(&x_axis, i as f64 / 4.0)).collect()
    };
    for t in x_ticks {
        let x = px(t);
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 18.0,
            budget_label(t.round())
        );
    }
    let y_ticks: Vec<(f64, String)> = if opts.log_pfs {
        let decades = (-y_axis.lo.log10()).round() as i32;
        (0..=decades).map(|d| (10f64.powi(-d), format!("1e-{d}"))).collect()
    } else {
        (0..=5).map(|i| (i as f64 / 5.0, format!("{:.1}", i as f64 / 5.0))).collect()
    };
    for (v, label) in y_ticks {
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">Total budget T</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let (ylabel, ylx, yly) = (if opts.log_pfs { "PFS (log scale)" } else { "PCS" }, 20.0, TOP + ph / 2.0);
    let _ = writeln!(
        s,
        r#"<text class="ylabel" x="{ylx}" y="{yly:.2}" text-anchor="middle" transform="rotate(-90 {ylx} {yly:.2})">{ylabel}</text>"#
    );

    // Series.
    for (i, (label, pts)) in series(rows).iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for r in pts {
            let v = value(r);
            let x = px(r.t as f64);
            let (lo, hi) = if opts.log_pfs {
                ((1.0 - r.pcs - r.stderr).max(floor), (1.0 - r.pcs + r.stderr).max(floor))
            } else {
                (r.pcs - r.stderr, r.pcs + r.stderr)
            };
            let _ = writeln!(
                s,
                r#"<line class="errorbar" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/>"#,
                py(lo),
                py(hi)
            );
            let _ = writeln!(
                s,
                r#"<circle class="marker" cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                py(v)
            );
        }
        let points: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", px(r.t as f64), py(value(r)))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 20.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text class="legend" x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn interpolate(axis: &Axis, f: f64) -> f64 {
    if axis.log {
        10f64.powf(axis.lo.log10() + f * (axis.hi.log10() - axis.lo.log10()))
    } else {
        axis.lo + f * (axis.hi - axis.lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(policies: &[&str], budgets: &[u64]) -> Vec<ResultRow> {
        let mut out = Vec::new();
        for (i, p) in policies.iter().enumerate() {
            for (j, &t) in budgets.iter().enumerate() {
                out.push(ResultRow {
                    experiment: "e".into(),
                    policy: p.to_string(),
                    family: "dosage".into(),
                    k: 16,
                    t,
                    replications: 100,
                    pcs: 0.3 + 0.1 * j as f64 + 0.05 * i as f64,
                    stderr: 0.04,
                    mean_evaluations: t as f64,
                    base_seed: 1,
                    wall_time_s: 0.1,
                });
            }
        }
        out
    }

    #[test]
    fn counts_match_rows() {
        let svg = render_svg(&rows(&["seo-sgd", "uniform-sgd"], &[100, 200, 400, 800, 1600]), ChartOptions::default());
        assert_eq!(svg.matches(r#"class="series""#).count(), 2);
        assert_eq!(svg.matches(r#"class="errorbar""#).count(), 10);
        assert!(svg.contains(">Total budget T<") && svg.contains(">PCS<"));
        assert!(svg.contains(">seo-sgd<") && svg.contains(">uniform-sgd<"));
    }

    #[test]
    fn single_row_renders() {
        let svg = render_svg(&rows(&["ocba"], &[500]), ChartOptions::default());
        assert_eq!(svg.matches(r#"class="marker""#).count(), 1);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn empty_input_renders_axes() {
        let svg = render_svg(&[], ChartOptions::default());
        assert!(svg.contains("Total budget T") && !svg.contains("NaN"));
    }

    #[test]
    fn deterministic_and_log_mode_finite() {
        let r = rows(&["a", "b", "c"], &[10, 100, 1000]);
        let mut perfect = r.clone();
        perfect[0].pcs = 1.0;
        perfect[0].stderr = 0.0;
        for opts in [ChartOptions::default(), ChartOptions { log_pfs: true }] {
            let a = render_svg(&perfect, opts);
            assert_eq!(a, render_svg(&perfect, opts));
            assert!(!a.contains("NaN") && !a.contains("inf"));
        }
    }

    #[test]
    fn labels_are_escaped() {
        let svg = render_svg(&rows(&["a<b"], &[1]), ChartOptions::default());
        assert!(svg.contains("a&lt;b"));
    }
}
