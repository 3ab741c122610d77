use std::time::Instant;

use super::{all_systems, eliminated, halve_scored, phase_schedule, PhaseRecord, SelectionOutcome, SeoConfig};
use crate::error::{config, invalid, Error, Result};
use crate::inner::{run_sgd_phase, solve_saa, SampleStore};
use crate::problems::{DataDrivenProblem, SimulationProblem};
use crate::rng::SimRng;

/// Sequential elimination with projected SGD inside every active system.
///
/// Phase `l` runs `T_l = floor(T / (L |A_l|))` steps per active system with
/// step `step_coefficient / sqrt(T_l)`, where `T` is the sample budget
/// `total_budget / evals_per_sample`. The estimate is the mean of the values
/// seen along the phase; the lower half by estimate is dropped afterwards.
pub fn run_seo_sgd<P: SimulationProblem>(problems: &[P], config: &SeoConfig, rng: &mut SimRng) -> Result<SelectionOutcome> {
    let clock = Instant::now();
    let k = problems.len();
    match k {
        0 => return Err(invalid("no systems to select from")),
        1 => return Ok(SelectionOutcome::trivial()),
        _ => {}
    }
    config.validate_sgd()?;
    check_evals(problems, config)?;
    let schedule = phase_schedule(config.sample_budget(), k)?;
    let initial = config.initial_points.resolve(k)?;
    let mut iterates = initial.clone();

    let mut active = all_systems(k);
    let mut trace = Vec::with_capacity(schedule.len());
    let (mut samples, mut evaluations) = (0u64, 0u64);
    for (l, plan) in schedule.iter().enumerate() {
        debug_assert_eq!(plan.active, active.len());
        let mut scored = Vec::with_capacity(active.len());
        for &id in &active {
            let i = id.zero_based();
            let start = if config.warm_start { iterates[i] } else { initial[i] };
            let phase = run_sgd_phase(&problems[i], start, plan.per_system, config.step_coefficient, rng)?;
            iterates[i] = phase.final_iterate;
            samples += plan.per_system;
            evaluations += phase.evaluations;
            scored.push((id, phase.estimate.v_hat));
        }
        let kept = halve_scored(scored.clone())?;
        trace.push(PhaseRecord {
            phase: l + 1,
            active: active.clone(),
            phase_budget: plan.per_system,
            eliminated: eliminated(&active, &kept),
            estimates: scored.into_iter().collect(),
        });
        active = kept;
    }
    finish(active, trace, samples, evaluations, config.total_budget, clock)
}

/// Sequential elimination over data-driven systems.
///
/// Each phase collects `T_l` fresh draws per active system, appends them to
/// that system's store, and re-solves the empirical problem on everything
/// collected so far.
pub fn run_seo_saa<P: DataDrivenProblem>(problems: &[P], config: &SeoConfig, rng: &mut SimRng) -> Result<SelectionOutcome> {
    let clock = Instant::now();
    let k = problems.len();
    match k {
        0 => return Err(invalid("no systems to select from")),
        1 => return Ok(SelectionOutcome::trivial()),
        _ => {}
    }
    let schedule = phase_schedule(config.sample_budget(), k)?;
    let mut stores = vec![SampleStore::new(); k];
    let mut active = all_systems(k);
    let mut trace = Vec::with_capacity(schedule.len());
    let mut samples = 0u64;
    for (l, plan) in schedule.iter().enumerate() {
        let mut scored = Vec::with_capacity(active.len());
        for &id in &active {
            let i = id.zero_based();
            for _ in 0..plan.per_system {
                stores[i].push(problems[i].draw(rng));
            }
            samples += plan.per_system;
            scored.push((id, solve_saa(&problems[i], &stores[i])?.v_hat));
        }
        let kept = halve_scored(scored.clone())?;
        trace.push(PhaseRecord {
            phase: l + 1,
            active: active.clone(),
            phase_budget: plan.per_system,
            eliminated: eliminated(&active, &kept),
            estimates: scored.into_iter().collect(),
        });
        active = kept;
    }
    finish(active, trace, samples, samples, config.sample_budget(), clock)
}

pub(super) fn check_evals<P: SimulationProblem>(problems: &[P], config: &SeoConfig) -> Result<()> {
    let needed = problems.iter().map(|p| p.evals_per_sample()).max().unwrap_or(1);
    if needed > config.evals_per_sample {
        return Err(config_err(needed, config.evals_per_sample));
    }
    Ok(())
}

fn config_err(needed: u64, configured: u64) -> Error {
    config(format!(
        "systems need {needed} evaluations per sample but the config allows {configured}"
    ))
}

fn finish(
    active: Vec<super::SystemId>,
    trace: Vec<PhaseRecord>,
    samples: u64,
    evaluations: u64,
    budget: u64,
    clock: Instant,
) -> Result<SelectionOutcome> {
    let [chosen] = active[..] else {
        return Err(Error::Invariant(format!("{} systems survive elimination", active.len())));
    };
    if evaluations > budget {
        return Err(Error::Invariant(format!("used {evaluations} evaluations of a {budget} budget")));
    }
    Ok(SelectionOutcome {
        chosen,
        trace,
        samples_used: samples,
        evaluations_used: evaluations,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::FeasibleBox;
    use crate::problems::synthetic::synthetic_gaussian_family;
    use crate::problems::GradientSample;
    use crate::rng::derive_stream;
    use crate::selection::SystemId;

    /// Constant value, zero gradient, and a count of how often it is sampled.
    struct Flat(f64);

    impl SimulationProblem for Flat {
        fn feasible(&self) -> FeasibleBox {
            FeasibleBox::new(0.0, 1.0).unwrap()
        }
        fn evals_per_sample(&self) -> u64 {
            1
        }
        fn sample(&self, _: f64, _: &mut SimRng) -> Result<GradientSample> {
            Ok(GradientSample { value: self.0, gradient: 0.0, evaluations: 1 })
        }
        fn evaluate(&self, _: f64, _: &mut SimRng) -> Result<f64> {
            Ok(self.0)
        }
    }

    struct PointMass {
        demand: f64,
        price: f64,
        cost: f64,
    }

    impl DataDrivenProblem for PointMass {
        fn draw(&self, _: &mut SimRng) -> f64 {
            self.demand
        }
        fn solve_saa(&self, draws: &[f64]) -> Result<f64> {
            crate::problems::newsvendor::saa_order_quantity(self.price, self.cost, draws).map(|r| r.1)
        }
    }

    #[test]
    fn noiseless_two_systems() {
        let fam = synthetic_gaussian_family(&[1.0], 0.0).unwrap();
        for seed in 0..20 {
            let out = run_seo_sgd(&fam, &SeoConfig::new(10, 0.5, -1.0), &mut derive_stream(seed, 0, "t")).unwrap();
            assert_eq!(out.chosen, SystemId::new(1).unwrap());
            assert_eq!(out.trace.len(), 1);
        }
    }

    #[test]
    fn four_systems_eighty_samples() {
        let probs: Vec<Flat> = [1.0, 4.0, 3.0, 2.0].into_iter().map(Flat).collect();
        let out = run_seo_sgd(&probs, &SeoConfig::new(80, 1.0, 0.5), &mut derive_stream(0, 0, "t")).unwrap();
        let budgets: Vec<u64> = out.trace.iter().map(|p| p.phase_budget).collect();
        assert_eq!(budgets, vec![10, 20]);
        assert_eq!(out.evaluations_used, 80);
        assert_eq!(out.samples_used, 80);
        assert_eq!(out.chosen, SystemId::new(2).unwrap());
        assert_eq!(out.trace[0].eliminated.len(), 2);
    }

    #[test]
    fn double_evaluation_budget_halves_samples() {
        let fam: Vec<_> = crate::problems::dosage::DosageInstance::new(vec![0.05, 0.0, -0.05, 0.01])
            .unwrap()
            .systems()
            .unwrap();
        let cfg = SeoConfig::new(160, 1.0, 25.0).with_evals_per_sample(2);
        let out = run_seo_sgd(&fam, &cfg, &mut derive_stream(0, 0, "t")).unwrap();
        assert_eq!(out.samples_used, 80);
        assert_eq!(out.evaluations_used, 160);
        // evaluations per sample below what the systems need is a config error
        let bad = SeoConfig::new(160, 1.0, 25.0);
        assert!(matches!(run_seo_sgd(&fam, &bad, &mut derive_stream(0, 0, "t")), Err(Error::Config(_))));
    }

    #[test]
    fn degenerate_system_counts() {
        let one = vec![Flat(1.0)];
        let out = run_seo_sgd(&one, &SeoConfig::new(0, 1.0, 0.5), &mut derive_stream(0, 0, "t")).unwrap();
        assert_eq!((out.chosen.index(), out.evaluations_used), (1, 0));
        let none: Vec<Flat> = vec![];
        assert!(run_seo_sgd(&none, &SeoConfig::new(10, 1.0, 0.5), &mut derive_stream(0, 0, "t")).is_err());
        let two = vec![Flat(1.0), Flat(0.0)];
        assert!(matches!(
            run_seo_sgd(&two, &SeoConfig::new(1, 1.0, 0.5), &mut derive_stream(0, 0, "t")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn saa_point_masses() {
        let probs = vec![
            PointMass { demand: 10.0, price: 2.0, cost: 1.0 },
            PointMass { demand: 30.0, price: 2.0, cost: 1.0 },
        ];
        let out = run_seo_saa(&probs, &SeoConfig::data_driven(2), &mut derive_stream(0, 0, "t")).unwrap();
        assert_eq!(out.chosen, SystemId::new(2).unwrap());
        assert_eq!(out.trace[0].estimates[&SystemId::new(2).unwrap()], 30.0);
    }

    #[test]
    fn saa_cumulative_counts() {
        struct Counting;
        impl DataDrivenProblem for Counting {
            fn draw(&self, _: &mut SimRng) -> f64 {
                1.0
            }
            // the estimate is the store size, so survivors report how much they hold
            fn solve_saa(&self, draws: &[f64]) -> Result<f64> {
                Ok(draws.len() as f64)
            }
        }
        let probs: Vec<Counting> = (0..4).map(|_| Counting).collect();
        let out = run_seo_saa(&probs, &SeoConfig::data_driven(80), &mut derive_stream(0, 0, "t")).unwrap();
        assert!(out.trace[0].estimates.values().all(|&n| n == 10.0));
        assert!(out.trace[1].estimates.values().all(|&n| n == 30.0));
        assert_eq!(out.samples_used, 80);
    }

    #[test]
    fn dominant_system_survives_every_phase() {
        let probs: Vec<Flat> = (0..32).map(|i| Flat(if i == 17 { 100.0 } else { i as f64 })).collect();
        let out = run_seo_sgd(&probs, &SeoConfig::new(5000, 1.0, 0.5), &mut derive_stream(3, 0, "t")).unwrap();
        let star = SystemId::new(18).unwrap();
        assert_eq!(out.chosen, star);
        assert!(out.trace.iter().all(|p| p.active.contains(&star) && !p.eliminated.contains(&star)));
    }

    #[test]
    fn same_seed_same_trace() {
        let fam = synthetic_gaussian_family(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], 1.0).unwrap();
        let cfg = SeoConfig::new(3000, 0.5, -1.0);
        let a = run_seo_sgd(&fam, &cfg, &mut derive_stream(11, 4, "t")).unwrap();
        let b = run_seo_sgd(&fam, &cfg, &mut derive_stream(11, 4, "t")).unwrap();
        assert_eq!(a.chosen, b.chosen);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn cold_start_differs_from_warm_start() {
        let fam = synthetic_gaussian_family(&[0.1, 0.2, 0.3], 1.0).unwrap();
        let warm = SeoConfig::new(400, 0.5, -1.0);
        let cold = warm.clone().with_warm_start(false);
        let a = run_seo_sgd(&fam, &warm, &mut derive_stream(1, 0, "t")).unwrap();
        let b = run_seo_sgd(&fam, &cold, &mut derive_stream(1, 0, "t")).unwrap();
        assert_eq!(a.trace[0], b.trace[0]);
        assert_ne!(a.trace[1].estimates, b.trace[1].estimates);
    }
}
