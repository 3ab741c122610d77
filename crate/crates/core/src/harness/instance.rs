//! Declarative instance specifications and their construction.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::problems::adversarial::GridTrapInstance;
use crate::problems::dosage::{self, DosageInstance};
use crate::problems::newsvendor::NewsvendorInstance;
use crate::problems::queueing::QueueingInstance;
use crate::problems::synthetic::{self, synthetic_gaussian_family};
use crate::problems::{DataDrivenProblem, SimulationProblem};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Perturbed dose-response quadratics; perturbations are drawn from the
    /// plan's instance stream unless given.
    Dosage {
        systems: usize,
        #[serde(default)]
        perturbations: Option<Vec<f64>>,
    },
    Newsvendor {
        systems: usize,
    },
    /// Staffing and pricing; unset fields take the standard values for `systems`.
    Queueing {
        systems: usize,
        #[serde(default)]
        wait_penalty: Option<f64>,
        #[serde(default)]
        arrival_scale: Option<f64>,
        #[serde(default)]
        horizon: Option<f64>,
        #[serde(default)]
        count_abandoned_wait: Option<bool>,
        /// Known best staffing plan; skips the pilot.
        #[serde(default)]
        reference_best: Option<usize>,
        #[serde(default)]
        pilot: Option<PilotSpec>,
    },
    /// Noisy quadratics with value gaps `gaps` below system 1.
    Synthetic {
        gaps: Vec<f64>,
        noise_sd: f64,
    },
    /// Top two systems indistinguishable on `grid`.
    GridTrap {
        systems: usize,
        grid: Vec<f64>,
        lower: f64,
        upper: f64,
        slope: f64,
        noise_sd: f64,
    },
}

/// Large-budget uniform runs used to fix the best system when no closed form exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSpec {
    /// Pilot budget as a multiple of the largest budget in the plan.
    #[serde(default = "default_multiplier")]
    pub budget_multiplier: u64,
    /// Independent pilots that must agree.
    #[serde(default = "default_runs")]
    pub runs: u64,
}

fn default_multiplier() -> u64 {
    100
}
fn default_runs() -> u64 {
    3
}

impl Default for PilotSpec {
    fn default() -> Self {
        Self {
            budget_multiplier: default_multiplier(),
            runs: default_runs(),
        }
    }
}

pub enum Systems {
    Simulation(Vec<Box<dyn SimulationProblem>>),
    Data(Vec<Box<dyn DataDrivenProblem>>),
}

impl Systems {
    pub fn len(&self) -> usize {
        match self {
            Systems::Simulation(s) => s.len(),
            Systems::Data(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn true_values(&self) -> Option<Vec<f64>> {
        match self {
            Systems::Simulation(s) => s.iter().map(|p| p.true_value()).collect(),
            Systems::Data(s) => s.iter().map(|p| p.true_value()).collect(),
        }
    }
}

/// A constructed instance with the per-family defaults the policies need.
pub struct BuiltInstance {
    pub systems: Systems,
    pub true_values: Option<Vec<f64>>,
    pub step_coefficient: f64,
    pub initial_point: f64,
    pub evals_per_sample: u64,
    pub ocba_grid: Option<Vec<f64>>,
}

impl InstanceSpec {
    pub fn family(&self) -> &'static str {
        match self {
            InstanceSpec::Dosage { .. } => "dosage",
            InstanceSpec::Newsvendor { .. } => "newsvendor",
            InstanceSpec::Queueing { .. } => "queueing",
            InstanceSpec::Synthetic { .. } => "synthetic",
            InstanceSpec::GridTrap { .. } => "grid-trap",
        }
    }

    pub fn system_count(&self) -> usize {
        match self {
            InstanceSpec::Dosage { systems, .. }
            | InstanceSpec::Newsvendor { systems }
            | InstanceSpec::Queueing { systems, .. }
            | InstanceSpec::GridTrap { systems, .. } => *systems,
            InstanceSpec::Synthetic { gaps, .. } => gaps.len() + 1,
        }
    }

    pub fn is_data_driven(&self) -> bool {
        matches!(self, InstanceSpec::Newsvendor { .. })
    }

    /// Whether construction consumes randomness.
    pub fn is_random(&self) -> bool {
        matches!(self, InstanceSpec::Dosage { perturbations: None, .. })
    }

    pub fn has_oracle(&self) -> bool {
        !matches!(self, InstanceSpec::Queueing { .. })
    }

    pub fn queueing_instance(&self) -> Option<QueueingInstance> {
        let InstanceSpec::Queueing {
            systems,
            wait_penalty,
            arrival_scale,
            horizon,
            count_abandoned_wait,
            ..
        } = self
        else {
            return None;
        };
        let mut q = QueueingInstance::standard(*systems);
        if let Some(c) = wait_penalty {
            q.wait_penalty = *c;
        }
        if let Some(l) = arrival_scale {
            q.arrival_scale = *l;
        }
        if let Some(h) = horizon {
            q.horizon = *h;
        }
        if let Some(b) = count_abandoned_wait {
            q.count_abandoned_wait = *b;
        }
        Some(q)
    }

    pub fn build(&self, rng: &mut SimRng) -> Result<BuiltInstance> {
        let k = self.system_count();
        if k < 2 {
            return Err(config(format!("instance needs at least 2 systems, got {k}")));
        }
        let built = match self {
            InstanceSpec::Dosage { systems, perturbations } => {
                let inst = match perturbations {
                    Some(u) if u.len() == *systems => DosageInstance::new(u.clone())?,
                    Some(u) => return Err(config(format!("{} perturbations for {systems} systems", u.len()))),
                    None => DosageInstance::generate(*systems, rng)?,
                };
                BuiltInstance {
                    systems: Systems::Simulation(inst.systems()?.into_iter().map(boxed_sim).collect()),
                    true_values: None,
                    step_coefficient: 1.0,
                    initial_point: 25.0,
                    evals_per_sample: 2,
                    ocba_grid: Some(dosage::ocba_grid()),
                }
            }
            InstanceSpec::Newsvendor { systems } => {
                let inst = NewsvendorInstance::standard(*systems)?;
                BuiltInstance {
                    systems: Systems::Data(inst.products.into_iter().map(boxed_data).collect()),
                    true_values: None,
                    step_coefficient: 1.0,
                    initial_point: 0.0,
                    evals_per_sample: 1,
                    ocba_grid: None,
                }
            }
            InstanceSpec::Queueing { .. } => {
                let inst = self.queueing_instance().expect("queueing spec");
                BuiltInstance {
                    step_coefficient: inst.default_step_coefficient(),
                    systems: Systems::Simulation(inst.systems()?.into_iter().map(boxed_sim).collect()),
                    true_values: None,
                    initial_point: 0.5,
                    evals_per_sample: 2,
                    ocba_grid: Some(QueueingInstance::ocba_grid()),
                }
            }
            InstanceSpec::Synthetic { gaps, noise_sd } => BuiltInstance {
                systems: Systems::Simulation(
                    synthetic_gaussian_family(gaps, *noise_sd)?.into_iter().map(boxed_sim).collect(),
                ),
                true_values: None,
                step_coefficient: 1.0,
                initial_point: synthetic::FAMILY_START,
                evals_per_sample: 1,
                ocba_grid: None,
            },
            InstanceSpec::GridTrap {
                systems,
                grid,
                lower,
                upper,
                slope,
                noise_sd,
            } => {
                let inst = GridTrapInstance {
                    systems: *systems,
                    grid: grid.clone(),
                    lower: *lower,
                    upper: *upper,
                    slope: *slope,
                    noise_sd: *noise_sd,
                };
                BuiltInstance {
                    systems: Systems::Simulation(inst.build()?.into_iter().map(boxed_sim).collect()),
                    true_values: None,
                    step_coefficient: 0.1 * (upper - lower),
                    initial_point: 0.5 * (lower + upper),
                    evals_per_sample: 1,
                    ocba_grid: Some(grid.clone()),
                }
            }
        };
        let true_values = built.systems.true_values();
        Ok(BuiltInstance { true_values, ..built })
    }
}

fn boxed_sim<P: SimulationProblem + 'static>(p: P) -> Box<dyn SimulationProblem> {
    Box::new(p)
}

fn boxed_data<P: DataDrivenProblem + 'static>(p: P) -> Box<dyn DataDrivenProblem> {
    Box::new(p)
}
