//! Two-station tandem service system with staffing and pricing.
//!
//! `K + 1` servers are split as `x` at Station One and `K + 1 - x` at Station
//! Two. Customers arrive on `[0, H]` by a non-homogeneous Poisson process with
//! rate `lambda0 t (H - t) / H^2`, accept the price `p` with probability
//! `1 - p`, and need a Station-One service followed by a Station-Two service,
//! with correlated lognormal requirements. Both stations are FIFO with
//! unlimited waiting room; a customer abandons only while waiting at Station
//! One, once the wait exceeds their patience. The run continues past `H`
//! until both stations are empty. The reward is `p D - c W`.
//!
//! Under FIFO, service starts are monotone in queue order, so each station is
//! processed as a multi-server recursion over its arrival sequence instead of
//! a global event calendar. The optional event log is built from the same
//! recursion and is what [`audit_event_log`] checks.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GradientSample, SimulationProblem};
use crate::error::{invalid, Result};
use crate::inner::{fd_gradient, FeasibleBox};
use crate::rng::{stream_from_seed, SimRng};

pub const PRICE_STEP: f64 = 0.03;

/// Patience distribution for customers waiting at Station One.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Patience {
    Gamma { shape: f64, rate: f64 },
    Unlimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueingInstance {
    /// Number of systems `K`; the pool holds `K + 1` servers.
    pub staff: usize,
    pub arrival_scale: f64,
    pub horizon: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub patience: Patience,
    pub wait_penalty: f64,
    #[serde(default = "default_price_step")]
    pub price_step: f64,
    /// Whether abandoning customers add their partial wait to `W`.
    #[serde(default = "default_true")]
    pub count_abandoned_wait: bool,
}

fn default_price_step() -> f64 {
    PRICE_STEP
}
fn default_true() -> bool {
    true
}

/// A customer who accepted the price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Customer {
    pub arrival: f64,
    pub service_one: f64,
    pub service_two: f64,
    pub patience: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOutput {
    /// Customers who completed both services (`D`).
    pub completed: u64,
    /// Total waiting time in queue at both stations (`W`).
    pub total_wait: f64,
    pub entrants: u64,
    pub abandoned: u64,
    pub reward: f64,
    pub last_departure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    Abandon,
    StartService { station: u8, server: usize },
    EndService { station: u8, server: usize },
}

impl EventKind {
    // order of simultaneous events: releases before seizures
    fn rank(&self) -> u8 {
        match self {
            EventKind::EndService { .. } => 0,
            EventKind::Abandon => 1,
            EventKind::Arrival => 2,
            EventKind::StartService { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub customer: usize,
    pub kind: EventKind,
}

/// Intensity `lambda0 t (H - t) / H^2` on `[0, H]`, zero outside.
pub fn arrival_rate(scale: f64, horizon: f64, t: f64) -> f64 {
    if !(0.0..=horizon).contains(&t) {
        return 0.0;
    }
    scale * t * (horizon - t) / (horizon * horizon)
}

/// Thinning envelope, the maximum intensity `lambda0 / 4` at `t = H / 2`.
pub fn envelope_rate(scale: f64) -> f64 {
    scale / 4.0
}

/// Calls `on_arrival` for every arrival of the NHPP on `[0, horizon]`.
fn for_each_arrival<F>(scale: f64, horizon: f64, rng: &mut SimRng, mut on_arrival: F)
where
    F: FnMut(f64, &mut SimRng),
{
    let envelope = envelope_rate(scale);
    if envelope <= 0.0 {
        return;
    }
    let gaps = Exp::new(envelope).expect("positive envelope");
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t > horizon {
            break;
        }
        let u: f64 = rng.random();
        if u * envelope < arrival_rate(scale, horizon, t) {
            on_arrival(t, rng);
        }
    }
}

/// Arrival times of customers who enter, after rate thinning and price acceptance.
pub fn nhpp_arrivals(scale: f64, horizon: f64, acceptance_prob: f64, rng: &mut SimRng) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&acceptance_prob) {
        return Err(invalid(format!("acceptance probability {acceptance_prob} outside [0, 1]")));
    }
    if !(scale >= 0.0 && scale.is_finite() && horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("arrival scale must be >= 0 and horizon > 0"));
    }
    let mut times = Vec::new();
    for_each_arrival(scale, horizon, rng, |t, rng| {
        if rng.random::<f64>() < acceptance_prob {
            times.push(t);
        }
    });
    Ok(times)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    free_at: f64,
    server: usize,
}

impl Eq for Slot {}

impl Ord for Slot {
    fn cmp(&self, other: &Self) -> Ordering {
        self.free_at.total_cmp(&other.free_at).then(self.server.cmp(&other.server))
    }
}

impl PartialOrd for Slot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn pool(servers: usize) -> BinaryHeap<Reverse<Slot>> {
    (0..servers).map(|server| Reverse(Slot { free_at: 0.0, server })).collect()
}

/// Runs both stations over `customers`, which must be sorted by arrival.
pub fn simulate_customers(
    servers_one: usize,
    servers_two: usize,
    customers: &[Customer],
    price: f64,
    wait_penalty: f64,
    count_abandoned_wait: bool,
    mut log: Option<&mut Vec<Event>>,
) -> SimOutput {
    assert!(servers_one >= 1 && servers_two >= 1, "each station needs a server");
    let mut emit = |time: f64, customer: usize, kind: EventKind| {
        if let Some(log) = log.as_deref_mut() {
            log.push(Event { time, customer, kind });
        }
    };

    let mut out = SimOutput {
        entrants: customers.len() as u64,
        ..SimOutput::default()
    };
    let mut station_one = pool(servers_one);
    let mut to_station_two = Vec::with_capacity(customers.len());
    for (id, c) in customers.iter().enumerate() {
        emit(c.arrival, id, EventKind::Arrival);
        let Reverse(slot) = *station_one.peek().expect("non-empty pool");
        let start = c.arrival.max(slot.free_at);
        let waited = start - c.arrival;
        if waited > c.patience {
            out.abandoned += 1;
            if count_abandoned_wait {
                out.total_wait += c.patience;
            }
            emit(c.arrival + c.patience, id, EventKind::Abandon);
            continue;
        }
        station_one.pop();
        let end = start + c.service_one;
        station_one.push(Reverse(Slot { free_at: end, server: slot.server }));
        out.total_wait += waited;
        emit(start, id, EventKind::StartService { station: 1, server: slot.server });
        emit(end, id, EventKind::EndService { station: 1, server: slot.server });
        to_station_two.push((end, id, c.service_two));
    }

    to_station_two.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut station_two = pool(servers_two);
    for (arrival, id, service) in to_station_two {
        let Reverse(slot) = station_two.pop().expect("non-empty pool");
        let start = arrival.max(slot.free_at);
        let end = start + service;
        station_two.push(Reverse(Slot { free_at: end, server: slot.server }));
        out.total_wait += start - arrival;
        out.completed += 1;
        out.last_departure = out.last_departure.max(end);
        emit(start, id, EventKind::StartService { station: 2, server: slot.server });
        emit(end, id, EventKind::EndService { station: 2, server: slot.server });
    }

    if let Some(log) = log {
        log.sort_by(|a, b| {
            a.time
                .total_cmp(&b.time)
                .then(a.kind.rank().cmp(&b.kind.rank()))
                .then(a.customer.cmp(&b.customer))
        });
    }
    out.reward = price * out.completed as f64 - wait_penalty * out.total_wait;
    out
}

/// Checks a sorted event log against conservation and server exclusivity.
pub fn audit_event_log(log: &[Event], out: &SimOutput) -> std::result::Result<(), String> {
    #[derive(Clone, Copy, PartialEq, Debug)]
    enum Stage {
        Absent,
        Waiting,
        InOne,
        BetweenStations,
        InTwo,
        Done,
        Left,
    }
    if log.windows(2).any(|w| w[0].time > w[1].time) {
        return Err("event timestamps decrease".into());
    }
    let customers = log.iter().map(|e| e.customer + 1).max().unwrap_or(0);
    let mut stage = vec![Stage::Absent; customers];
    let mut busy: HashMap<(u8, usize), usize> = HashMap::new();
    for e in log {
        let s = &mut stage[e.customer];
        let next = match (e.kind, *s) {
            (EventKind::Arrival, Stage::Absent) => Stage::Waiting,
            (EventKind::Abandon, Stage::Waiting) => Stage::Left,
            (EventKind::StartService { station: 1, .. }, Stage::Waiting) => Stage::InOne,
            (EventKind::EndService { station: 1, .. }, Stage::InOne) => Stage::BetweenStations,
            (EventKind::StartService { station: 2, .. }, Stage::BetweenStations) => Stage::InTwo,
            (EventKind::EndService { station: 2, .. }, Stage::InTwo) => Stage::Done,
            (kind, from) => return Err(format!("customer {} saw {kind:?} while {from:?} at t = {}", e.customer, e.time)),
        };
        *s = next;
        match e.kind {
            EventKind::StartService { station, server } => {
                if let Some(other) = busy.insert((station, server), e.customer) {
                    return Err(format!("server {server} at station {station} serves {other} and {} at t = {}", e.customer, e.time));
                }
            }
            EventKind::EndService { station, server } if busy.remove(&(station, server)) != Some(e.customer) => {
                return Err(format!("server {server} at station {station} released by {} without serving", e.customer));
            }
            _ => {}
        }
    }
    if !busy.is_empty() {
        return Err("servers still busy at termination".into());
    }
    let count = |want: Stage| stage.iter().filter(|&&s| s == want).count() as u64;
    let (done, left) = (count(Stage::Done), count(Stage::Left));
    if done + left != customers as u64 {
        return Err("some customers never left the system".into());
    }
    if out.entrants != done + left || out.completed != done || out.abandoned != left {
        return Err(format!(
            "counts disagree: entrants {} completed {} abandoned {} vs log {done} + {left}",
            out.entrants, out.completed, out.abandoned
        ));
    }
    if out.total_wait < 0.0 {
        return Err("negative total wait".into());
    }
    Ok(())
}

impl QueueingInstance {
    /// Experiment defaults for `k` systems: `lambda0 = 1`, `H = 2000`,
    /// `mu1 = ln 10 + ln k`, `mu2 = ln 2 + ln k`, unit log-scale deviations
    /// with correlation 0.5, Gamma patience with shape `2 mu1` and rate 1,
    /// and unit wait penalty.
    pub fn standard(k: usize) -> Self {
        let ln_k = (k.max(1) as f64).ln();
        let mu1 = 10f64.ln() + ln_k;
        Self {
            staff: k,
            arrival_scale: 1.0,
            horizon: 2000.0,
            mu1,
            mu2: 2f64.ln() + ln_k,
            sigma1: 1.0,
            sigma2: 1.0,
            rho: 0.5,
            patience: Patience::Gamma { shape: 2.0 * mu1, rate: 1.0 },
            wait_penalty: 1.0,
            price_step: PRICE_STEP,
            count_abandoned_wait: true,
        }
    }

    /// Step coefficient `2 / H`.
    pub fn default_step_coefficient(&self) -> f64 {
        2.0 / self.horizon
    }

    /// Price grid 0.1, 0.2, ..., 1.0 used when discretizing for OCBA.
    pub fn ocba_grid() -> Vec<f64> {
        (1..=10).map(|j| j as f64 / 10.0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.staff < 1 {
            return Err(invalid("queueing staff parameter K must be >= 1"));
        }
        if !(self.arrival_scale >= 0.0 && self.arrival_scale.is_finite()) {
            return Err(invalid("arrival scale must be finite and >= 0"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon must be positive"));
        }
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0) {
            return Err(invalid("lognormal sigmas must be positive"));
        }
        if self.rho.is_nan() || self.rho.abs() >= 1.0 {
            return Err(invalid("lognormal correlation must satisfy |rho| < 1"));
        }
        if !(self.mu1.is_finite() && self.mu2.is_finite()) {
            return Err(invalid("lognormal means must be finite"));
        }
        if let Patience::Gamma { shape, rate } = self.patience {
            if !(shape > 0.0 && rate > 0.0) {
                return Err(invalid("gamma patience needs shape > 0 and rate > 0"));
            }
        }
        if self.wait_penalty.is_nan() || self.wait_penalty < 0.0 {
            return Err(invalid("wait penalty must be >= 0"));
        }
        if !(self.price_step > 0.0 && self.price_step < 1.0) {
            return Err(invalid("price step must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `(x, K + 1 - x)` servers for staffing plan `x`.
    pub fn servers(&self, x: usize) -> Result<(usize, usize)> {
        if x < 1 || x > self.staff {
            return Err(invalid(format!("staffing plan {x} outside 1..={}", self.staff)));
        }
        Ok((x, self.staff + 1 - x))
    }

    /// Customers who accept price `p`.
    ///
    /// Every NHPP arrival draws its acceptance uniform, both service times and
    /// its patience whether or not it enters, so two prices run on the same
    /// stream see the same people.
    pub fn draw_customers(&self, p: f64, rng: &mut SimRng) -> Result<Vec<Customer>> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("price {p} outside [0, 1]")));
        }
        let patience = match self.patience {
            Patience::Gamma { shape, rate } => {
                Some(Gamma::new(shape, 1.0 / rate).map_err(|e| invalid(format!("gamma patience: {e}")))?)
            }
            Patience::Unlimited => None,
        };
        let accept = 1.0 - p;
        let tail = (1.0 - self.rho * self.rho).sqrt();
        let mut customers = Vec::new();
        for_each_arrival(self.arrival_scale, self.horizon, rng, |t, rng| {
            let u: f64 = rng.random();
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let wait_limit = patience.map_or(f64::INFINITY, |g| g.sample(rng));
            if u < accept {
                customers.push(Customer {
                    arrival: t,
                    service_one: (self.mu1 + self.sigma1 * z1).exp(),
                    service_two: (self.mu2 + self.sigma2 * (self.rho * z1 + tail * z2)).exp(),
                    patience: wait_limit,
                });
            }
        });
        Ok(customers)
    }

    pub fn simulate(&self, x: usize, p: f64, rng: &mut SimRng) -> Result<SimOutput> {
        let (one, two) = self.servers(x)?;
        let customers = self.draw_customers(p, rng)?;
        Ok(simulate_customers(one, two, &customers, p, self.wait_penalty, self.count_abandoned_wait, None))
    }

    pub fn simulate_logged(&self, x: usize, p: f64, rng: &mut SimRng) -> Result<(SimOutput, Vec<Event>)> {
        let (one, two) = self.servers(x)?;
        let customers = self.draw_customers(p, rng)?;
        let mut log = Vec::with_capacity(customers.len() * 5);
        let out = simulate_customers(
            one,
            two,
            &customers,
            p,
            self.wait_penalty,
            self.count_abandoned_wait,
            Some(&mut log),
        );
        Ok((out, log))
    }

    /// Single simulation path from a seed.
    pub fn simulate_seeded(&self, x: usize, p: f64, seed: u64) -> Result<SimOutput> {
        self.simulate(x, p, &mut stream_from_seed(seed))
    }

    /// Value at `p` and the backward difference to `p - price_step`, both runs
    /// on common random numbers derived from `seed`. Costs two evaluations.
    pub fn sample(&self, x: usize, p: f64, seed: u64) -> Result<GradientSample> {
        self.system(x)?.sample(p, &mut stream_from_seed(seed))
    }

    pub fn system(&self, x: usize) -> Result<QueueingSystem> {
        QueueingSystem::new(Arc::new(self.clone()), x)
    }

    pub fn systems(&self) -> Result<Vec<QueueingSystem>> {
        let shared = Arc::new(self.clone());
        (1..=self.staff).map(|x| QueueingSystem::new(shared.clone(), x)).collect()
    }
}

/// Staffing plan `x` of a shared instance, optimized over the price.
#[derive(Debug, Clone)]
pub struct QueueingSystem {
    instance: Arc<QueueingInstance>,
    servers_one: usize,
}

impl QueueingSystem {
    pub fn new(instance: Arc<QueueingInstance>, x: usize) -> Result<Self> {
        instance.validate()?;
        instance.servers(x)?;
        Ok(Self { instance, servers_one: x })
    }

    pub fn servers_one(&self) -> usize {
        self.servers_one
    }
}

impl SimulationProblem for QueueingSystem {
    fn feasible(&self) -> FeasibleBox {
        FeasibleBox::new(0.0, 1.0).expect("unit interval")
    }

    fn evals_per_sample(&self) -> u64 {
        2
    }

    fn sample(&self, p: f64, rng: &mut SimRng) -> Result<GradientSample> {
        let inst = &self.instance;
        fd_gradient(
            |price, r| Ok(inst.simulate(self.servers_one, price, r)?.reward),
            p,
            inst.price_step,
            &self.feasible(),
            true,
            rng,
        )
        .map(Into::into)
    }

    fn evaluate(&self, p: f64, rng: &mut SimRng) -> Result<f64> {
        Ok(self.instance.simulate(self.servers_one, p, rng)?.reward)
    }
}
