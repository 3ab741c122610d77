//! Instance on which any procedure that only samples a fixed grid cannot tell
//! the top two systems apart.
//!
//! Take the widest gap `(lo, hi)` between adjacent grid points and its
//! midpoint `m`. System 1 is the tent `-M |x - m|`, peaking at 0 inside the
//! gap. System 2 agrees with it outside `(lo, hi)` and is flat at
//! `-M (hi - lo) / 2` inside, so on every grid point the two have the same
//! law while `v_1 - v_2 = M (hi - lo) / 2`. Systems 3.. are tents shifted
//! down by further multiples of that gap.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{GradientSample, SimulationProblem};
use crate::error::{config, invalid, Result};
use crate::inner::FeasibleBox;
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTrapInstance {
    pub systems: usize,
    pub grid: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub slope: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Tent,
    FlatTop { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridTrapSystem {
    pub shape: Shape,
    pub midpoint: f64,
    pub slope: f64,
    pub offset: f64,
    pub noise_sd: f64,
    pub feasible: FeasibleBox,
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(config("grid needs at least two points"));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config("grid must be finite and strictly increasing"));
    }
    Ok(())
}

impl GridTrapInstance {
    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.grid)?;
        let feasible = FeasibleBox::new(self.lower, self.upper)?;
        if !self.grid.iter().all(|&x| feasible.contains(x)) {
            return Err(config("grid points must lie inside the decision interval"));
        }
        if self.systems < 2 {
            return Err(invalid("the construction needs at least two systems"));
        }
        if !(self.slope > 0.0 && self.noise_sd >= 0.0) {
            return Err(invalid("slope must be positive and noise_sd >= 0"));
        }
        Ok(())
    }

    /// First adjacent pair with the widest spacing.
    pub fn widest_gap(&self) -> (f64, f64) {
        let mut best = (self.grid[0], self.grid[1]);
        for w in self.grid.windows(2) {
            if w[1] - w[0] > best.1 - best.0 {
                best = (w[0], w[1]);
            }
        }
        best
    }

    pub fn build(&self) -> Result<Vec<GridTrapSystem>> {
        self.validate()?;
        let (lo, hi) = self.widest_gap();
        let midpoint = 0.5 * (lo + hi);
        let step = self.slope * (hi - lo) / 2.0;
        let feasible = FeasibleBox::new(self.lower, self.upper)?;
        Ok((0..self.systems)
            .map(|k| GridTrapSystem {
                shape: if k == 1 { Shape::FlatTop { lo, hi } } else { Shape::Tent },
                midpoint,
                slope: self.slope,
                offset: if k >= 2 { k as f64 * step } else { 0.0 },
                noise_sd: self.noise_sd,
                feasible,
            })
            .collect())
    }
}

impl GridTrapSystem {
    pub fn mean(&self, x: f64) -> f64 {
        match self.shape {
            Shape::FlatTop { lo, hi } if x > lo && x < hi => -self.slope * (hi - lo) / 2.0,
            _ => -self.slope * (x - self.midpoint).abs() - self.offset,
        }
    }

    fn supergradient(&self, x: f64) -> f64 {
        match self.shape {
            Shape::FlatTop { lo, hi } if x > lo && x < hi => 0.0,
            _ if x < self.midpoint => self.slope,
            _ if x > self.midpoint => -self.slope,
            _ => 0.0,
        }
    }

    pub fn optimum(&self) -> f64 {
        match self.shape {
            Shape::Tent => 0.0 - self.offset,
            Shape::FlatTop { lo, hi } => -self.slope * (hi - lo) / 2.0,
        }
    }
}

impl SimulationProblem for GridTrapSystem {
    fn feasible(&self) -> FeasibleBox {
        self.feasible
    }

    fn evals_per_sample(&self) -> u64 {
        1
    }

    fn sample(&self, x: f64, rng: &mut SimRng) -> Result<GradientSample> {
        let e: f64 = rng.sample(StandardNormal);
        let g: f64 = rng.sample(StandardNormal);
        Ok(GradientSample {
            value: self.mean(x) + self.noise_sd * e,
            gradient: self.supergradient(x) + self.noise_sd * g,
            evaluations: 1,
        })
    }

    fn evaluate(&self, x: f64, rng: &mut SimRng) -> Result<f64> {
        let e: f64 = rng.sample(StandardNormal);
        Ok(self.mean(x) + self.noise_sd * e)
    }

    fn true_value(&self) -> Option<f64> {
        Some(self.optimum())
    }
}
