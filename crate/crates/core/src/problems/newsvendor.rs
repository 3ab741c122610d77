//! Data-driven newsvendor: choose the order quantity `q` maximizing
//! `E[p min(q, X) - c q]` when only samples of the demand `X` are available.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::DataDrivenProblem;
use crate::error::{invalid, Error, Result};
use crate::rng::SimRng;
use crate::selection::SystemId;

/// Price, unit cost and Poisson demand rate of one product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewsvendorProduct {
    pub price: f64,
    pub cost: f64,
    pub rate: f64,
}

impl NewsvendorProduct {
    pub fn new(price: f64, cost: f64, rate: f64) -> Result<Self> {
        let p = Self { price, cost, rate };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.cost > 0.0 && self.price > self.cost && self.price.is_finite()) {
            return Err(Error::Domain(format!(
                "newsvendor needs price > cost > 0, got price {} cost {}",
                self.price, self.cost
            )));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Domain(format!("Poisson rate must be positive, got {}", self.rate)));
        }
        Ok(())
    }

    /// `(p - c) / p`.
    pub fn critical_ratio(&self) -> f64 {
        (self.price - self.cost) / self.price
    }

    /// Exact optimum under the true Poisson demand: `(q*, v)`.
    pub fn poisson_optimum(&self) -> (u64, f64) {
        poisson_optimum(self.price, self.cost, self.rate)
    }
}

impl DataDrivenProblem for NewsvendorProduct {
    fn draw(&self, rng: &mut SimRng) -> f64 {
        Poisson::new(self.rate).expect("rate validated at construction").sample(rng)
    }

    fn solve_saa(&self, draws: &[f64]) -> Result<f64> {
        saa_order_quantity(self.price, self.cost, draws).map(|(_, v)| v)
    }

    fn true_value(&self) -> Option<f64> {
        Some(self.poisson_optimum().1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsvendorInstance {
    pub products: Vec<NewsvendorProduct>,
}

impl NewsvendorInstance {
    pub fn new(products: Vec<NewsvendorProduct>) -> Result<Self> {
        if products.is_empty() {
            return Err(invalid("newsvendor instance needs at least one product"));
        }
        for p in &products {
            p.validate()?;
        }
        Ok(Self { products })
    }

    /// Product `i` has `p = i/2 + 5`, `c = i/5 + 1`, `rate = 250 - 6 i`.
    ///
    /// The rate turns non-positive from `i = 42`, so larger `k` is rejected.
    pub fn standard(k: usize) -> Result<Self> {
        let products = (1..=k)
            .map(|i| {
                let i = i as f64;
                NewsvendorProduct::new(0.5 * i + 5.0, 0.2 * i + 1.0, 250.0 - 6.0 * i)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(products)
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn product(&self, id: SystemId) -> Result<&NewsvendorProduct> {
        self.products
            .get(id.zero_based())
            .ok_or_else(|| invalid(format!("product {id} out of range")))
    }

    pub fn true_value(&self, id: SystemId) -> Result<f64> {
        Ok(self.product(id)?.poisson_optimum().1)
    }
}

/// Empirical objective `p * mean(min(q, x)) - c q`.
pub fn empirical_profit(price: f64, cost: f64, q: f64, draws: &[f64]) -> f64 {
    let served: f64 = draws.iter().map(|&x| q.min(x)).sum();
    price * served / draws.len() as f64 - cost * q
}

/// Solves the newsvendor on the empirical distribution of `draws`.
///
/// The order quantity is the smallest sample whose empirical CDF reaches the
/// critical ratio, i.e. the `ceil(r n)`-th order statistic. Returns `(q, v)`.
pub fn saa_order_quantity(price: f64, cost: f64, draws: &[f64]) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(invalid("SAA needs at least one demand sample"));
    }
    if draws.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite demand sample".into()));
    }
    let ratio = (price - cost) / price;
    let n = draws.len();
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    // smallest k in 1..=n with k / n >= ratio
    let k = ((ratio * n as f64).ceil() as usize).clamp(1, n);
    let q = sorted[k - 1];
    Ok((q, empirical_profit(price, cost, q, &sorted)))
}

/// Exact newsvendor optimum for Poisson(`rate`) demand.
///
/// `q*` is the smallest integer with `P(X <= q*) >= (p - c) / p`; the value is
/// `p E[min(q*, X)] - c q*` with `E[min(q, X)] = sum_{k<q} k pmf(k) + q P(X >= q)`,
/// summed directly from the pmf.
pub fn poisson_optimum(price: f64, cost: f64, rate: f64) -> (u64, f64) {
    let ratio = (price - cost) / price;
    let ln_rate = rate.ln();
    let mut ln_pmf = -rate;
    let mut cdf = 0.0;
    let mut head = 0.0; // sum_{k<q} k pmf(k)
    let mut q = 0u64;
    loop {
        let pmf = ln_pmf.exp();
        // the tail has underflowed; nothing further can change the sums
        if cdf + pmf >= ratio || (pmf == 0.0 && q as f64 > rate) {
            break;
        }
        cdf += pmf;
        head += q as f64 * pmf;
        q += 1;
        ln_pmf += ln_rate - (q as f64).ln();
    }
    let expected_sales = head + q as f64 * (1.0 - cdf);
    (q, price * expected_sales - cost * q as f64)
}
