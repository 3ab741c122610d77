//! Inner problems: the per-system optimization each selection policy drives.
//!
//! A system is either a simulation system, sampled at a decision `x` for a
//! noisy value and gradient, or a data-driven system, sampled for i.i.d. data
//! and solved exactly on its empirical distribution.

pub mod adversarial;
pub mod dosage;
pub mod newsvendor;
pub mod queueing;
pub mod synthetic;

use crate::error::Result;
use crate::inner::FeasibleBox;
use crate::rng::SimRng;

/// One noisy observation of value and gradient at a decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSample {
    pub value: f64,
    pub gradient: f64,
    /// Function evaluations consumed to produce this sample.
    pub evaluations: u64,
}

/// A system whose value is `max_{x in box} E[F(x, xi)]`, accessed by sampling.
pub trait SimulationProblem: Send + Sync {
    fn feasible(&self) -> FeasibleBox;

    /// Evaluations one call to [`SimulationProblem::sample`] costs.
    fn evals_per_sample(&self) -> u64;

    fn sample(&self, x: f64, rng: &mut SimRng) -> Result<GradientSample>;

    /// A single function evaluation `F(x, xi)`.
    fn evaluate(&self, x: f64, rng: &mut SimRng) -> Result<f64>;

    /// The exact optimal value, when known in closed form.
    fn true_value(&self) -> Option<f64> {
        None
    }
}

/// A system whose value is `sup_g E_P[g(X)]` for an unknown data law `P`.
pub trait DataDrivenProblem: Send + Sync {
    fn draw(&self, rng: &mut SimRng) -> f64;

    /// Optimal value of the empirical problem on `draws` (non-empty).
    fn solve_saa(&self, draws: &[f64]) -> Result<f64>;

    fn true_value(&self) -> Option<f64> {
        None
    }
}

impl<P: SimulationProblem + ?Sized> SimulationProblem for Box<P> {
    fn feasible(&self) -> FeasibleBox {
        (**self).feasible()
    }
    fn evals_per_sample(&self) -> u64 {
        (**self).evals_per_sample()
    }
    fn sample(&self, x: f64, rng: &mut SimRng) -> Result<GradientSample> {
        (**self).sample(x, rng)
    }
    fn evaluate(&self, x: f64, rng: &mut SimRng) -> Result<f64> {
        (**self).evaluate(x, rng)
    }
    fn true_value(&self) -> Option<f64> {
        (**self).true_value()
    }
}

impl<P: DataDrivenProblem + ?Sized> DataDrivenProblem for Box<P> {
    fn draw(&self, rng: &mut SimRng) -> f64 {
        (**self).draw(rng)
    }
    fn solve_saa(&self, draws: &[f64]) -> Result<f64> {
        (**self).solve_saa(draws)
    }
    fn true_value(&self) -> Option<f64> {
        (**self).true_value()
    }
}
