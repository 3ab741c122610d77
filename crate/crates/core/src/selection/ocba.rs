use std::time::Instant;

use super::{all_systems, Estimates, PhaseRecord, SelectionOutcome, SystemId};
use crate::error::{config, invalid, Error, Result};
use crate::problems::adversarial::validate_grid;
use crate::problems::SimulationProblem;
use crate::rng::SimRng;

/// Lower clamp for sample variances and squared mean differences.
pub const OCBA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OcbaConfig {
    pub grid: Vec<f64>,
    pub initial_fraction: f64,
    pub total_budget: u64,
}

impl OcbaConfig {
    pub fn new(grid: Vec<f64>, initial_fraction: f64, total_budget: u64) -> Result<Self> {
        validate_grid(&grid)?;
        if !(initial_fraction > 0.0 && initial_fraction < 1.0) {
            return Err(config(format!("initial fraction must lie in (0, 1), got {initial_fraction}")));
        }
        Ok(Self { grid, initial_fraction, total_budget })
    }

    /// `N0 = max(2, floor(alpha0 T / K / d))`.
    pub fn initial_replications(&self, k: usize) -> Result<u64> {
        let d = self.grid.len();
        let cells = (k * d) as u64;
        if k == 0 || self.total_budget < 2 * cells {
            return Err(config(format!(
                "OCBA needs a budget of at least 2 K d = {}, got {}",
                2 * cells,
                self.total_budget
            )));
        }
        let scaled = self.initial_fraction * self.total_budget as f64 / k as f64 / d as f64;
        Ok(((scaled + 1e-9).floor() as u64).max(2))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Cell {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        (self.m2 / (self.n - 1) as f64).max(OCBA_FLOOR)
    }
}

/// The OCBA ratio for a non-incumbent cell: `S^2 / (mean_best - mean)^2`.
pub(crate) fn ocba_ratio(variance: f64, best_mean: f64, mean: f64) -> f64 {
    let variance = variance.max(OCBA_FLOOR);
    let gap2 = ((best_mean - mean) * (best_mean - mean)).max(OCBA_FLOOR);
    variance / gap2
}

fn best_cell(cells: &[Cell]) -> usize {
    let mut best = 0;
    for (c, cell) in cells.iter().enumerate().skip(1) {
        if cell.mean > cells[best].mean {
            best = c;
        }
    }
    best
}

/// OCBA on the `(system, grid point)` cells; see [`run_ocba_with`].
pub fn run_ocba<P: SimulationProblem>(problems: &[P], config: &OcbaConfig, rng: &mut SimRng) -> Result<SelectionOutcome> {
    run_ocba_with(problems, config, rng, |_, _| {})
}

/// OCBA on the `(system, grid point)` cells.
///
/// Every cell is first sampled `N0` times. Each further replication goes to
/// the cell maximizing `beta / N`, where `beta = S^2 / (mean_b - mean)^2` off
/// the incumbent `b` and `beta_b = S_b sqrt(sum beta^2 / S^2)` for it. Stops
/// after `T` replications and returns the system owning the best cell mean.
/// `observe` sees the replication count and the cell counts (row-major by
/// system) after initialization and after every allocation.
pub fn run_ocba_with<P, F>(problems: &[P], config: &OcbaConfig, rng: &mut SimRng, mut observe: F) -> Result<SelectionOutcome>
where
    P: SimulationProblem,
    F: FnMut(u64, &[u64]),
{
    let clock = Instant::now();
    let k = problems.len();
    match k {
        0 => return Err(invalid("no systems to select from")),
        1 => return Ok(SelectionOutcome::trivial()),
        _ => {}
    }
    let d = config.grid.len();
    for (i, p) in problems.iter().enumerate() {
        let feasible = p.feasible();
        if let Some(x) = config.grid.iter().find(|&&x| !feasible.contains(x)) {
            return Err(crate::error::config(format!("grid point {x} lies outside system {}'s decision set", i + 1)));
        }
    }
    let n0 = config.initial_replications(k)?;
    let total = config.total_budget;

    let mut cells = vec![Cell::default(); k * d];
    for (c, cell) in cells.iter_mut().enumerate() {
        let (i, j) = (c / d, c % d);
        for _ in 0..n0 {
            cell.push(sample(&problems[i], config.grid[j], rng)?);
        }
    }
    let mut used = n0 * (k * d) as u64;
    let mut counts: Vec<u64> = vec![n0; k * d];
    observe(used, &counts);

    let mut beta = vec![0.0; k * d];
    while used < total {
        let b = best_cell(&cells);
        let best_mean = cells[b].mean;
        let mut s = 0.0;
        for (c, cell) in cells.iter().enumerate() {
            if c == b {
                continue;
            }
            let var = cell.variance();
            let ratio = ocba_ratio(var, best_mean, cell.mean);
            beta[c] = ratio;
            s += ratio * ratio / var;
        }
        beta[b] = cells[b].variance().sqrt() * s.sqrt();

        let mut pick = 0;
        let mut pick_score = f64::NEG_INFINITY;
        for (c, cell) in cells.iter().enumerate() {
            let score = beta[c] / cell.n as f64;
            if score > pick_score {
                pick = c;
                pick_score = score;
            }
        }
        if !pick_score.is_finite() {
            return Err(Error::Numerical(format!("OCBA allocation score {pick_score}")));
        }
        let (i, j) = (pick / d, pick % d);
        cells[pick].push(sample(&problems[i], config.grid[j], rng)?);
        counts[pick] += 1;
        used += 1;
        observe(used, &counts);
    }

    let b = best_cell(&cells);
    let chosen = SystemId::from_zero_based(b / d);
    let estimates: Estimates = all_systems(k)
        .into_iter()
        .map(|id| {
            let row = &cells[id.zero_based() * d..(id.zero_based() + 1) * d];
            (id, row.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();
    let active = all_systems(k);
    Ok(SelectionOutcome {
        chosen,
        trace: vec![PhaseRecord {
            phase: 1,
            eliminated: active.iter().copied().filter(|&id| id != chosen).collect(),
            active,
            phase_budget: n0,
            estimates,
        }],
        samples_used: used,
        evaluations_used: used,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

fn sample<P: SimulationProblem>(problem: &P, x: f64, rng: &mut SimRng) -> Result<f64> {
    let v = problem.evaluate(x, rng)?;
    if !v.is_finite() {
        return Err(Error::Numerical(format!("non-finite evaluation at x = {x}")));
    }
    Ok(v)
}
