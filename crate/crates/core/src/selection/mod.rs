//! Outer-layer selection policies under a fixed budget.
//!
//! Sequential elimination splits the budget into `L = floor(log2 K)` phases,
//! spends `floor(T / (L |A|))` samples on every active system in each phase,
//! and keeps the better half. Uniform allocation and OCBA over a decision grid
//! are the benchmarks.

mod ocba;
mod seo;
mod uniform;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Error, Result};

pub use ocba::{run_ocba, run_ocba_with, OcbaConfig, OCBA_FLOOR};
pub use seo::{run_seo_saa, run_seo_sgd};
pub use uniform::{run_uniform_saa, run_uniform_sgd};

/// 1-based system label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemId(usize);

impl SystemId {
    pub fn new(index: usize) -> Result<Self> {
        if index == 0 {
            return Err(invalid("system ids start at 1"));
        }
        Ok(Self(index))
    }

    pub(crate) fn from_zero_based(i: usize) -> Self {
        Self(i + 1)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn zero_based(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type Estimates = BTreeMap<SystemId, f64>;

/// What happened in one phase of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRecord {
    pub phase: usize,
    pub active: Vec<SystemId>,
    pub phase_budget: u64,
    pub estimates: Estimates,
    pub eliminated: Vec<SystemId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub chosen: SystemId,
    pub trace: Vec<PhaseRecord>,
    /// Samples (SGD steps, data points, or OCBA replications).
    pub samples_used: u64,
    /// Function evaluations, counting two per finite-difference sample.
    pub evaluations_used: u64,
    pub wall_time: f64,
}

impl SelectionOutcome {
    pub(crate) fn trivial() -> Self {
        Self {
            chosen: SystemId(1),
            trace: Vec::new(),
            samples_used: 0,
            evaluations_used: 0,
            wall_time: 0.0,
        }
    }
}

/// Where SGD starts in each system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialPoints {
    Common(f64),
    PerSystem(Vec<f64>),
}

impl InitialPoints {
    fn resolve(&self, k: usize) -> Result<Vec<f64>> {
        match self {
            InitialPoints::Common(x) => Ok(vec![*x; k]),
            InitialPoints::PerSystem(xs) if xs.len() == k => Ok(xs.clone()),
            InitialPoints::PerSystem(xs) => Err(config(format!("{} initial points for {k} systems", xs.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeoConfig {
    /// Evaluation budget for SGD systems, data-point budget for SAA systems.
    pub total_budget: u64,
    pub step_coefficient: f64,
    pub initial_points: InitialPoints,
    /// Evaluations per SGD sample; the sample budget is `total_budget / evals_per_sample`.
    pub evals_per_sample: u64,
    /// Resume each phase from the previous phase's final iterate.
    pub warm_start: bool,
}

impl SeoConfig {
    pub fn new(total_budget: u64, step_coefficient: f64, initial_point: f64) -> Self {
        Self {
            total_budget,
            step_coefficient,
            initial_points: InitialPoints::Common(initial_point),
            evals_per_sample: 1,
            warm_start: true,
        }
    }

    /// Config for data-driven systems, where only the budget matters.
    pub fn data_driven(total_budget: u64) -> Self {
        Self::new(total_budget, 1.0, 0.0)
    }

    pub fn with_evals_per_sample(mut self, evals: u64) -> Self {
        self.evals_per_sample = evals;
        self
    }

    pub fn with_warm_start(mut self, warm: bool) -> Self {
        self.warm_start = warm;
        self
    }

    pub fn with_initial_points(mut self, points: InitialPoints) -> Self {
        self.initial_points = points;
        self
    }

    /// Samples available to the selection procedure.
    pub fn sample_budget(&self) -> u64 {
        self.total_budget / self.evals_per_sample.max(1)
    }

    fn validate_sgd(&self) -> Result<()> {
        if self.evals_per_sample == 0 {
            return Err(config("evals_per_sample must be >= 1"));
        }
        if !(self.step_coefficient > 0.0 && self.step_coefficient.is_finite()) {
            return Err(config(format!("step coefficient must be positive, got {}", self.step_coefficient)));
        }
        Ok(())
    }
}

/// `floor(log2 k)`, zero for `k <= 1`.
pub fn phase_count(k: usize) -> usize {
    if k <= 1 {
        0
    } else {
        (usize::BITS - 1 - k.leading_zeros()) as usize
    }
}

/// Per-system samples in a phase, `floor(total / (phases * active))`.
pub fn phase_budget(total: u64, phases: usize, active: usize) -> Result<u64> {
    if phases == 0 || active == 0 {
        return Err(invalid("phase count and active count must be positive"));
    }
    Ok(total / (phases as u64 * active as u64))
}

/// One planned phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhasePlan {
    pub active: usize,
    pub per_system: u64,
}

/// The phase plan for `k` systems and `total` samples.
///
/// Errors when some phase would give an active system zero samples.
pub fn phase_schedule(total: u64, k: usize) -> Result<Vec<PhasePlan>> {
    if k < 2 {
        return Err(invalid(format!("sequential elimination needs K >= 2, got {k}")));
    }
    let phases = phase_count(k);
    let mut active = k;
    let mut plan = Vec::with_capacity(phases);
    for _ in 0..phases {
        let per_system = phase_budget(total, phases, active)?;
        if per_system == 0 {
            return Err(config(format!(
                "budget {total} gives no samples to {active} active systems over {phases} phases"
            )));
        }
        plan.push(PhasePlan { active, per_system });
        active /= 2;
    }
    if active != 1 {
        return Err(Error::Invariant(format!("halving {k} systems {phases} times left {active}")));
    }
    Ok(plan)
}

/// Keeps the `floor(|active| / 2)` systems with the largest estimates, in id order.
pub fn halve(active: &[SystemId], estimates: &Estimates) -> Result<Vec<SystemId>> {
    let scored = active
        .iter()
        .map(|id| match estimates.get(id) {
            Some(v) => Ok((*id, *v)),
            None => Err(Error::Invariant(format!("system {id} has no estimate"))),
        })
        .collect::<Result<Vec<_>>>()?;
    halve_scored(scored)
}

/// [`halve`] over `(system, estimate)` pairs; ties go to the lower id.
pub(crate) fn halve_scored(mut scored: Vec<(SystemId, f64)>) -> Result<Vec<SystemId>> {
    if scored.len() < 2 {
        return Err(invalid(format!("halving needs at least two active systems, got {}", scored.len())));
    }
    if let Some((id, _)) = scored.iter().find(|(_, v)| v.is_nan()) {
        return Err(Error::Numerical(format!("estimate for system {id} is NaN")));
    }
    let keep = scored.len() / 2;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<SystemId> = scored[..keep].iter().map(|(id, _)| *id).collect();
    kept.sort();
    Ok(kept)
}

/// Best system by estimate; ties go to the lower id.
pub fn argmax(estimates: &Estimates) -> Result<SystemId> {
    if let Some((id, _)) = estimates.iter().find(|(_, v)| v.is_nan()) {
        return Err(Error::Numerical(format!("estimate for system {id} is NaN")));
    }
    // keys iterate in id order, so keeping the first maximum breaks ties low
    estimates
        .iter()
        .fold(None, |best: Option<(SystemId, f64)>, (&id, &v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((id, v)),
        })
        .map(|(id, _)| id)
        .ok_or_else(|| invalid("argmax of an empty estimate set"))
}

fn all_systems(k: usize) -> Vec<SystemId> {
    (0..k).map(SystemId::from_zero_based).collect()
}

/// `active` minus `kept`; both are in id order.
fn eliminated(active: &[SystemId], kept: &[SystemId]) -> Vec<SystemId> {
    let mut out = Vec::with_capacity(active.len() - kept.len());
    let mut rest = kept.iter().peekable();
    for &id in active {
        if rest.peek() == Some(&&id) {
            rest.next();
        } else {
            out.push(id);
        }
    }
    out
}
