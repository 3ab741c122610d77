//! Replicated estimation of the probability of correct selection.
//!
//! An [`ExperimentPlan`] names a policy, an instance, a budget grid and a
//! replication count. Replication `r` at budget `T` draws from
//! `derive_stream(base_seed, r, "<policy>/<T>")`, so results depend only on
//! the plan and not on how replications are scheduled across threads.

mod diagnostics;
mod instance;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::rng::{derive_stream, SimRng};
use crate::selection::{
    run_ocba, run_seo_saa, run_seo_sgd, run_uniform_saa, run_uniform_sgd, OcbaConfig, SelectionOutcome, SeoConfig,
    SystemId,
};

pub use diagnostics::{diagnostics, InstanceDiagnostics};
pub use instance::{BuiltInstance, InstanceSpec, PilotSpec, Systems};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    SeoSgd,
    SeoSaa,
    UniformSgd,
    UniformSaa,
    Ocba,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::SeoSgd,
        Policy::SeoSaa,
        Policy::UniformSgd,
        Policy::UniformSaa,
        Policy::Ocba,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::SeoSgd => "seo-sgd",
            Policy::SeoSaa => "seo-saa",
            Policy::UniformSgd => "uniform-sgd",
            Policy::UniformSaa => "uniform-saa",
            Policy::Ocba => "ocba",
        }
    }

    pub fn data_driven(self) -> bool {
        matches!(self, Policy::SeoSaa | Policy::UniformSaa)
    }

    /// Whether the policy can run on `spec`. OCBA also needs a grid, checked
    /// by [`ExperimentPlan::validate`].
    pub fn supports(self, spec: &InstanceSpec) -> bool {
        self.data_driven() == spec.is_data_driven()
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| config(format!("unknown policy '{s}' (expected one of seo-sgd, seo-saa, uniform-sgd, uniform-saa, ocba)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeoSettings {
    /// Defaults to the family's coefficient.
    #[serde(default)]
    pub step_coefficient: Option<f64>,
    /// Defaults to the family's start point.
    #[serde(default)]
    pub initial_point: Option<f64>,
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

impl Default for SeoSettings {
    fn default() -> Self {
        Self {
            step_coefficient: None,
            initial_point: None,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcbaSettings {
    /// Defaults to the family's grid; required for families without one.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_initial_fraction")]
    pub initial_fraction: f64,
}

impl Default for OcbaSettings {
    fn default() -> Self {
        Self {
            grid: None,
            initial_fraction: default_initial_fraction(),
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_initial_fraction() -> f64 {
    0.2
}
fn default_min_gap() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub policy: Policy,
    pub instance: InstanceSpec,
    /// Evaluation budgets (data points for data-driven families).
    pub budgets: Vec<u64>,
    pub replications: usize,
    pub base_seed: u64,
    /// Seed for building the instance; defaults to `base_seed`. Lets two plans
    /// share an instance while drawing independent replications.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_seed: Option<u64>,
    #[serde(default)]
    pub seo: SeoSettings,
    #[serde(default)]
    pub ocba: OcbaSettings,
    /// Rebuild random instances for every replication instead of once per plan.
    #[serde(default)]
    pub regenerate_instance: bool,
    /// Smallest accepted gap between the two best true values.
    #[serde(default = "default_min_gap")]
    pub min_gap: f64,
}

/// A validation failure tied to a plan field.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanIssue {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for PlanIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for PlanIssue {}

impl From<PlanIssue> for Error {
    fn from(issue: PlanIssue) -> Self {
        Error::Config(issue.to_string())
    }
}

fn issue(field: &'static str, message: impl Into<String>) -> PlanIssue {
    PlanIssue {
        field,
        message: message.into(),
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> std::result::Result<(), PlanIssue> {
        if self.replications == 0 {
            return Err(issue("replications", "must be at least 1"));
        }
        if self.budgets.is_empty() {
            return Err(issue("budgets", "must list at least one budget"));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(issue("budgets", "must be strictly increasing"));
        }
        if self.instance.system_count() < 2 {
            return Err(issue("instance.systems", "need at least 2 systems"));
        }
        if !self.policy.supports(&self.instance) {
            let why = if self.instance.is_data_driven() {
                "data-driven families are solved by SAA; use seo-saa or uniform-saa"
            } else {
                "simulation families need seo-sgd, uniform-sgd or ocba"
            };
            return Err(issue(
                "policy",
                format!("{} cannot run on family {}: {why}", self.policy, self.instance.family()),
            ));
        }
        if self.policy == Policy::Ocba {
            if self.ocba_grid().is_none() {
                return Err(issue("ocba.grid", format!("family {} has no default grid", self.instance.family())));
            }
            if !(self.ocba.initial_fraction > 0.0 && self.ocba.initial_fraction < 1.0) {
                return Err(issue("ocba.initial_fraction", "must lie in (0, 1)"));
            }
        }
        if let Some(g) = self.seo.step_coefficient {
            if !(g > 0.0 && g.is_finite()) {
                return Err(issue("seo.step_coefficient", "must be positive"));
            }
        }
        if self.min_gap.is_nan() || self.min_gap < 0.0 {
            return Err(issue("min_gap", "must be >= 0"));
        }
        if self.regenerate_instance && !self.instance.has_oracle() {
            return Err(issue("regenerate_instance", "needs a family with a closed-form optimum"));
        }
        Ok(())
    }

    /// Stream that builds the instance for replication `r` (0 when frozen).
    pub fn instance_stream(&self, r: u64) -> SimRng {
        derive_stream(self.instance_seed.unwrap_or(self.base_seed), r, "instance")
    }

    fn ocba_grid(&self) -> Option<Vec<f64>> {
        self.ocba.grid.clone().or_else(|| match &self.instance {
            InstanceSpec::Dosage { .. } => Some(crate::problems::dosage::ocba_grid()),
            InstanceSpec::Queueing { .. } => Some(crate::problems::queueing::QueueingInstance::ocba_grid()),
            InstanceSpec::GridTrap { grid, .. } => Some(grid.clone()),
            _ => None,
        })
    }
}

/// How the true best system of a prepared instance was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BestSource {
    Oracle,
    Reference,
    Pilot,
}

pub struct PreparedInstance {
    pub built: BuiltInstance,
    pub best: SystemId,
    pub source: BestSource,
    pub diagnostics: Option<InstanceDiagnostics>,
}

/// Builds the plan's instance from `rng` and fixes its best system.
pub fn prepare_instance(plan: &ExperimentPlan, rng: &mut SimRng) -> Result<PreparedInstance> {
    let built = plan.instance.build(rng)?;
    if let Some(values) = &built.true_values {
        let diag = diagnostics(values, plan.min_gap)?;
        return Ok(PreparedInstance {
            best: diag.best,
            source: BestSource::Oracle,
            diagnostics: Some(diag),
            built,
        });
    }
    let InstanceSpec::Queueing { reference_best, pilot, .. } = &plan.instance else {
        return Err(Error::Invariant(format!("family {} lacks an oracle", plan.instance.family())));
    };
    if let Some(x) = reference_best {
        if *x < 1 || *x > built.systems.len() {
            return Err(config(format!("instance.reference_best: {x} is not a system")));
        }
        return Ok(PreparedInstance {
            best: SystemId::new(*x)?,
            source: BestSource::Reference,
            diagnostics: None,
            built,
        });
    }
    let Some(pilot) = pilot else {
        return Err(config(
            "instance: queueing has no closed-form optimum; set reference_best or add a [plan.instance.pilot] table",
        ));
    };
    let best = pilot_best(plan, &built, pilot)?;
    Ok(PreparedInstance {
        best,
        source: BestSource::Pilot,
        diagnostics: None,
        built,
    })
}

/// Runs `pilot.runs` uniform allocations at `budget_multiplier` times the
/// largest plan budget and requires them to agree.
fn pilot_best(plan: &ExperimentPlan, built: &BuiltInstance, pilot: &PilotSpec) -> Result<SystemId> {
    let largest = plan.budgets.iter().copied().max().unwrap_or(0);
    let budget = largest.saturating_mul(pilot.budget_multiplier);
    let picks = (0..pilot.runs.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_stream(plan.base_seed, r, "pilot");
            run_policy(Policy::UniformSgd, built, plan, budget, &mut rng).map(|o| o.chosen)
        })
        .collect::<Result<Vec<_>>>()?;
    if picks.windows(2).any(|w| w[0] != w[1]) {
        let listed: Vec<String> = picks.iter().map(|p| p.to_string()).collect();
        return Err(config(format!("pilot runs disagree on the best system: {}", listed.join(", "))));
    }
    Ok(picks[0])
}

/// Runs one selection with `policy` at `budget`.
pub fn run_policy(
    policy: Policy,
    built: &BuiltInstance,
    plan: &ExperimentPlan,
    budget: u64,
    rng: &mut SimRng,
) -> Result<SelectionOutcome> {
    let seo = || {
        SeoConfig::new(
            budget,
            plan.seo.step_coefficient.unwrap_or(built.step_coefficient),
            plan.seo.initial_point.unwrap_or(built.initial_point),
        )
        .with_evals_per_sample(built.evals_per_sample)
        .with_warm_start(plan.seo.warm_start)
    };
    match (policy, &built.systems) {
        (Policy::SeoSgd, Systems::Simulation(s)) => run_seo_sgd(s, &seo(), rng),
        (Policy::UniformSgd, Systems::Simulation(s)) => run_uniform_sgd(s, &seo(), rng),
        (Policy::Ocba, Systems::Simulation(s)) => {
            let grid = plan
                .ocba_grid()
                .or_else(|| built.ocba_grid.clone())
                .ok_or_else(|| config("ocba.grid: no grid for this family"))?;
            run_ocba(s, &OcbaConfig::new(grid, plan.ocba.initial_fraction, budget)?, rng)
        }
        (Policy::SeoSaa, Systems::Data(d)) => run_seo_saa(d, &SeoConfig::data_driven(budget), rng),
        (Policy::UniformSaa, Systems::Data(d)) => run_uniform_saa(d, &SeoConfig::data_driven(budget), rng),
        (p, _) => Err(config(format!("policy: {p} cannot run on family {}", plan.instance.family()))),
    }
}

/// PCS at one budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfsEstimate {
    pub budget: u64,
    pub pcs: f64,
    pub stderr: f64,
    pub replications: usize,
    pub mean_evaluations: f64,
    pub wall_time: f64,
}

impl PfsEstimate {
    pub fn pfs(&self) -> f64 {
        1.0 - self.pcs
    }
}

/// `(pcs, sqrt(pcs (1 - pcs) / R))` for a list of correct/incorrect outcomes.
pub fn binomial_summary(correct: &[bool]) -> (f64, f64) {
    let r = correct.len() as f64;
    let pcs = correct.iter().filter(|&&c| c).count() as f64 / r;
    (pcs, (pcs * (1.0 - pcs) / r).sqrt())
}

pub struct ExperimentReport {
    pub estimates: Vec<PfsEstimate>,
    /// `None` when the instance is rebuilt per replication.
    pub best: Option<SystemId>,
    pub best_source: Option<BestSource>,
    pub diagnostics: Option<InstanceDiagnostics>,
}

/// Builds a pool with `threads` workers; 0 lets rayon decide.
fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| config(format!("thread pool: {e}")))
}

/// Runs every budget of `plan` with `replications` independent selections each.
pub fn run_experiment(plan: &ExperimentPlan, threads: usize) -> Result<ExperimentReport> {
    plan.validate()?;
    let pool = pool(threads)?;
    pool.install(|| {
        let frozen = if plan.regenerate_instance {
            None
        } else {
            Some(prepare_instance(plan, &mut plan.instance_stream(0))?)
        };
        let mut estimates = Vec::with_capacity(plan.budgets.len());
        for &budget in &plan.budgets {
            let clock = Instant::now();
            let tag = format!("{}/{budget}", plan.policy);
            let results = (0..plan.replications)
                .into_par_iter()
                .map(|r| {
                    let owned;
                    let prepared = match &frozen {
                        Some(p) => p,
                        None => {
                            owned = prepare_instance(plan, &mut plan.instance_stream(r as u64))?;
                            &owned
                        }
                    };
                    let mut rng = derive_stream(plan.base_seed, r as u64, &tag);
                    let out = run_policy(plan.policy, &prepared.built, plan, budget, &mut rng)?;
                    Ok((out.chosen == prepared.best, out.evaluations_used))
                })
                .collect::<Result<Vec<_>>>()?;
            let correct: Vec<bool> = results.iter().map(|r| r.0).collect();
            let (pcs, stderr) = binomial_summary(&correct);
            let total_evals: u64 = results.iter().map(|r| r.1).sum();
            estimates.push(PfsEstimate {
                budget,
                pcs,
                stderr,
                replications: plan.replications,
                mean_evaluations: total_evals as f64 / plan.replications as f64,
                wall_time: clock.elapsed().as_secs_f64(),
            });
        }
        Ok(ExperimentReport {
            estimates,
            best: frozen.as_ref().map(|p| p.best),
            best_source: frozen.as_ref().map(|p| p.source),
            diagnostics: frozen.and_then(|p| p.diagnostics),
        })
    })
}
