//! Best-drug selection with a concave dose-response per drug.
//!
//! The center response is a fitted quadratic in the dose; lower is better, so
//! each system maximizes the negated quadratic. System `i` scales the center
//! coefficients by `1 + u_i`, which keeps the optimal dose fixed and scales
//! the optimal value, making `argmax u_i` the best drug.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{GradientSample, SimulationProblem};
use crate::error::{invalid, Error, Result};
use crate::inner::{fd_gradient, FeasibleBox};
use crate::rng::SimRng;
use crate::selection::SystemId;

pub const CENTER_A: f64 = 9.0 / 1250.0;
pub const CENTER_B: f64 = -23.0 / 50.0;
pub const CENTER_C: f64 = -5.0;
pub const PERTURBATION_BOUND: f64 = 0.1;
pub const FD_WIDTH: f64 = 0.5;
pub const DOSE_RANGE: (f64, f64) = (0.0, 50.0);

/// Optimal value of the center system, `b^2 / (4a) - c`.
pub fn center_optimum() -> f64 {
    CENTER_B * CENTER_B / (4.0 * CENTER_A) - CENTER_C
}

/// Dose grid used when discretizing for OCBA: 11, 12, ..., 40.
pub fn ocba_grid() -> Vec<f64> {
    (11..=40).map(f64::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosageInstance {
    pub perturbations: Vec<f64>,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default = "default_dose_range")]
    pub dose_range: (f64, f64),
    #[serde(default = "default_fd_width")]
    pub fd_width: f64,
}

fn default_noise_sd() -> f64 {
    1.0
}
fn default_dose_range() -> (f64, f64) {
    DOSE_RANGE
}
fn default_fd_width() -> f64 {
    FD_WIDTH
}

impl DosageInstance {
    pub fn new(perturbations: Vec<f64>) -> Result<Self> {
        let inst = Self {
            perturbations,
            noise_sd: default_noise_sd(),
            dose_range: DOSE_RANGE,
            fd_width: FD_WIDTH,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Draws `k` perturbations uniformly from `[-0.1, 0.1]`.
    pub fn generate(k: usize, rng: &mut SimRng) -> Result<Self> {
        let u = (0..k)
            .map(|_| rng.random_range(-PERTURBATION_BOUND..=PERTURBATION_BOUND))
            .collect();
        Self::new(u)
    }

    pub fn validate(&self) -> Result<()> {
        if self.perturbations.is_empty() {
            return Err(invalid("dosage instance needs at least one system"));
        }
        if let Some(u) = self.perturbations.iter().find(|u| !(u.is_finite() && **u > -1.0)) {
            return Err(Error::Domain(format!("perturbation {u} makes the quadratic non-convex")));
        }
        if !(self.noise_sd >= 0.0 && self.fd_width > 0.0) {
            return Err(invalid("dosage noise_sd must be >= 0 and fd_width > 0"));
        }
        FeasibleBox::new(self.dose_range.0, self.dose_range.1)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.perturbations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perturbations.is_empty()
    }

    pub fn system(&self, id: SystemId) -> Result<DosageSystem> {
        let u = *self
            .perturbations
            .get(id.zero_based())
            .ok_or_else(|| invalid(format!("system {id} out of range")))?;
        let scale = 1.0 + u;
        Ok(DosageSystem {
            a: scale * CENTER_A,
            b: scale * CENTER_B,
            c: scale * CENTER_C,
            noise_sd: self.noise_sd,
            fd_width: self.fd_width,
            feasible: FeasibleBox::new(self.dose_range.0, self.dose_range.1)?,
        })
    }

    pub fn systems(&self) -> Result<Vec<DosageSystem>> {
        (1..=self.len()).map(|i| self.system(SystemId::new(i)?)).collect()
    }

    pub fn true_value(&self, id: SystemId) -> Result<f64> {
        self.system(id)?.true_value()
    }
}

/// One drug: `-(a q^2 + b q + c) + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct DosageSystem {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub noise_sd: f64,
    pub fd_width: f64,
    pub feasible: FeasibleBox,
}

impl DosageSystem {
    /// Noiseless objective.
    pub fn mean(&self, q: f64) -> f64 {
        -(self.a * q * q + self.b * q + self.c)
    }

    pub fn optimal_dose(&self) -> Result<f64> {
        if self.a <= 0.0 {
            return Err(Error::Domain(format!("quadratic coefficient {} is not positive", self.a)));
        }
        Ok(-self.b / (2.0 * self.a))
    }

    /// Maximum of the negated quadratic, `b^2 / (4a) - c`.
    pub fn true_value(&self) -> Result<f64> {
        if self.a <= 0.0 {
            return Err(Error::Domain(format!("quadratic coefficient {} is not positive", self.a)));
        }
        Ok(self.b * self.b / (4.0 * self.a) - self.c)
    }

    fn observe(&self, q: f64, rng: &mut SimRng) -> f64 {
        let eps: f64 = rng.sample(StandardNormal);
        self.mean(q) + self.noise_sd * eps
    }
}

impl SimulationProblem for DosageSystem {
    fn feasible(&self) -> FeasibleBox {
        self.feasible
    }

    fn evals_per_sample(&self) -> u64 {
        2
    }

    /// Backward difference over two independent noisy observations.
    fn sample(&self, q: f64, rng: &mut SimRng) -> Result<GradientSample> {
        fd_gradient(|x, r| Ok(self.observe(x, r)), q, self.fd_width, &self.feasible, false, rng).map(Into::into)
    }

    fn evaluate(&self, q: f64, rng: &mut SimRng) -> Result<f64> {
        Ok(self.observe(q, rng))
    }

    fn true_value(&self) -> Option<f64> {
        DosageSystem::true_value(self).ok()
    }
}
