//! Calibration family: concave quadratics with known optimal values.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{GradientSample, SimulationProblem};
use crate::error::{invalid, Result};
use crate::inner::FeasibleBox;
use crate::rng::SimRng;

/// `v - curvature (x - optimum_point)^2`, observed with additive Gaussian
/// noise; the gradient observation carries independent noise of the same scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSystem {
    pub optimum_value: f64,
    pub optimum_point: f64,
    pub curvature: f64,
    pub noise_sd: f64,
    pub feasible: FeasibleBox,
}

impl QuadraticSystem {
    pub fn mean(&self, x: f64) -> f64 {
        self.optimum_value - self.curvature * (x - self.optimum_point).powi(2)
    }

    pub fn slope(&self, x: f64) -> f64 {
        -2.0 * self.curvature * (x - self.optimum_point)
    }
}

impl SimulationProblem for QuadraticSystem {
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
            gradient: self.slope(x) + self.noise_sd * g,
            evaluations: 1,
        })
    }

    fn evaluate(&self, x: f64, rng: &mut SimRng) -> Result<f64> {
        let e: f64 = rng.sample(StandardNormal);
        Ok(self.mean(x) + self.noise_sd * e)
    }

    fn true_value(&self) -> Option<f64> {
        Some(self.optimum_value)
    }
}

/// Decision interval and optimum shared by every member of the family.
pub const FAMILY_BOX: (f64, f64) = (-2.0, 2.0);
pub const FAMILY_OPTIMUM: f64 = 0.0;
/// Start point at unit distance from the optimum.
pub const FAMILY_START: f64 = -1.0;

/// `K = gaps.len() + 1` systems; system 1 has value 0 and system `i > 1` has
/// value `-gaps[i - 2]`. All share unit curvature and noise `noise_sd`.
pub fn synthetic_gaussian_family(gaps: &[f64], noise_sd: f64) -> Result<Vec<QuadraticSystem>> {
    if let Some(g) = gaps.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(invalid(format!("gaps must be positive, got {g}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(invalid("noise_sd must be finite and >= 0"));
    }
    let feasible = FeasibleBox::new(FAMILY_BOX.0, FAMILY_BOX.1)?;
    Ok(std::iter::once(0.0)
        .chain(gaps.iter().map(|g| -g))
        .map(|v| QuadraticSystem {
            optimum_value: v,
            optimum_point: FAMILY_OPTIMUM,
            curvature: 1.0,
            noise_sd,
            feasible,
        })
        .collect())
}

/// `H2 = max_i i / gap_(i)^2` over the gaps sorted ascending, ranks from 2.
pub fn complexity_h2(gaps: &[f64]) -> f64 {
    let mut sorted = gaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .iter()
        .enumerate()
        .map(|(k, g)| (k + 2) as f64 / (g * g))
        .fold(0.0, f64::max)
}
