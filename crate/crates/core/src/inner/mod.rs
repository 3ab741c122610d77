//! Inner-layer estimation engines.
//!
//! Projected constant-step stochastic gradient ascent with a running-average
//! value estimator, the backward finite-difference gradient, and the sample
//! average approximation entry point for data-driven systems.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problems::{DataDrivenProblem, GradientSample, SimulationProblem};
use crate::rng::{stream_from_seed, SimRng};

/// One-dimensional decision interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleBox {
    lower: f64,
    upper: f64,
}

impl FeasibleBox {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(invalid(format!("feasible box needs lower < upper, got [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    #[inline]
    pub fn lower(&self) -> f64 {
        self.lower
    }

    #[inline]
    pub fn upper(&self) -> f64 {
        self.upper
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    /// Euclidean projection onto the interval.
    #[inline]
    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

/// Running average of observed values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    pub v_hat: f64,
    pub sample_count: u64,
}

/// State of projected constant-step SGD within one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdState {
    pub iterate: f64,
    pub step: f64,
    pub value_sum: f64,
    pub steps_taken: u64,
}

impl SgdState {
    pub fn new(start: f64, step: f64, feasible: &FeasibleBox) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {step}")));
        }
        if !start.is_finite() {
            return Err(invalid("start point must be finite"));
        }
        Ok(Self {
            iterate: feasible.project(start),
            step,
            value_sum: 0.0,
            steps_taken: 0,
        })
    }

    /// Mean of recorded values, `None` before the first step.
    #[inline]
    pub fn estimate(&self) -> Option<ValueEstimate> {
        (self.steps_taken > 0).then(|| ValueEstimate {
            v_hat: self.value_sum / self.steps_taken as f64,
            sample_count: self.steps_taken,
        })
    }
}

/// One projected ascent step: `clamp(x + step * gradient)`.
#[inline]
pub fn sgd_step(state: SgdState, gradient: f64, feasible: &FeasibleBox) -> Result<SgdState> {
    if !gradient.is_finite() {
        return Err(Error::Numerical(format!("non-finite gradient {gradient} at x = {}", state.iterate)));
    }
    Ok(SgdState {
        iterate: feasible.project(state.iterate + state.step * gradient),
        steps_taken: state.steps_taken + 1,
        ..state
    })
}

/// Result of [`run_sgd_phase`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdPhase {
    pub estimate: ValueEstimate,
    pub final_iterate: f64,
    pub evaluations: u64,
}

/// Runs `steps` iterations with step `step_coefficient / sqrt(steps)`.
///
/// The value is observed at the pre-update iterate; the estimate is the mean
/// of exactly these `steps` observations.
pub fn run_sgd_phase<P>(problem: &P, start: f64, steps: u64, step_coefficient: f64, rng: &mut SimRng) -> Result<SgdPhase>
where
    P: SimulationProblem + ?Sized,
{
    run_sgd_phase_with(problem, start, steps, step_coefficient, rng, |_, _| {})
}

/// [`run_sgd_phase`] with a hook called after every sample, before the update.
pub fn run_sgd_phase_with<P, F>(
    problem: &P,
    start: f64,
    steps: u64,
    step_coefficient: f64,
    rng: &mut SimRng,
    mut observe: F,
) -> Result<SgdPhase>
where
    P: SimulationProblem + ?Sized,
    F: FnMut(&SgdState, &GradientSample),
{
    if steps == 0 {
        return Err(invalid("an SGD phase needs at least one step"));
    }
    let feasible = problem.feasible();
    let step = step_coefficient / (steps as f64).sqrt();
    let mut state = SgdState::new(start, step, &feasible)?;
    let mut evaluations = 0;
    for _ in 0..steps {
        let sample = problem.sample(state.iterate, rng)?;
        if !sample.value.is_finite() {
            return Err(Error::Numerical(format!("non-finite value at x = {}", state.iterate)));
        }
        observe(&state, &sample);
        evaluations += sample.evaluations;
        state.value_sum += sample.value;
        state = sgd_step(state, sample.gradient, &feasible)?;
    }
    Ok(SgdPhase {
        estimate: state.estimate().expect("at least one step was taken"),
        final_iterate: state.iterate,
        evaluations,
    })
}

/// Backward finite-difference sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSample {
    pub value: f64,
    pub gradient: f64,
    pub evaluations: u64,
}

impl From<FdSample> for GradientSample {
    fn from(s: FdSample) -> Self {
        GradientSample {
            value: s.value,
            gradient: s.gradient,
            evaluations: s.evaluations,
        }
    }
}

/// Estimates `f'(x)` by `(F(x) - F(x - delta)) / delta`.
///
/// The lower point is clamped into `feasible` and the divisor shrinks to
/// match. When `x` sits on the lower bound the difference flips to forward,
/// `(F(x + delta) - F(x)) / delta`. With `common_random_numbers` both calls
/// see an identical stream, seeded from one draw of `rng`; otherwise they
/// consume `rng` in sequence, value point first.
pub fn fd_gradient<F>(
    mut objective: F,
    x: f64,
    delta: f64,
    feasible: &FeasibleBox,
    common_random_numbers: bool,
    rng: &mut SimRng,
) -> Result<FdSample>
where
    F: FnMut(f64, &mut SimRng) -> Result<f64>,
{
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("finite-difference width must be positive, got {delta}")));
    }
    let x = feasible.project(x);
    let backward = feasible.project(x - delta);
    let (other, forward) = if backward < x {
        (backward, false)
    } else {
        (feasible.project(x + delta), true)
    };

    let (value, other_value) = if common_random_numbers {
        let seed = rng.next_u64();
        let v = objective(x, &mut stream_from_seed(seed))?;
        let o = objective(other, &mut stream_from_seed(seed))?;
        (v, o)
    } else {
        let v = objective(x, rng)?;
        let o = objective(other, rng)?;
        (v, o)
    };

    let gradient = if forward {
        (other_value - value) / (other - x)
    } else {
        (value - other_value) / (x - other)
    };
    if !gradient.is_finite() {
        return Err(Error::Numerical(format!("finite difference at x = {x} is not finite")));
    }
    Ok(FdSample {
        value,
        gradient,
        evaluations: 2,
    })
}

/// Append-only i.i.d. data for one system.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleStore {
    draws: Vec<f64>,
}

impl SampleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, draw: f64) {
        self.draws.push(draw);
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.draws
    }
}

impl From<Vec<f64>> for SampleStore {
    fn from(draws: Vec<f64>) -> Self {
        Self { draws }
    }
}

/// Optimal value of the empirical problem over the stored data.
pub fn solve_saa<P>(problem: &P, store: &SampleStore) -> Result<ValueEstimate>
where
    P: DataDrivenProblem + ?Sized,
{
    if store.is_empty() {
        return Err(invalid("SAA needs at least one data point"));
    }
    let v_hat = problem.solve_saa(store.as_slice())?;
    Ok(ValueEstimate {
        v_hat,
        sample_count: store.len() as u64,
    })
}
