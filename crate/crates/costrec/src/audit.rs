//! Independent verification of mechanisms and curves.
//!
//! Every check here recomputes the quantity it verifies from scratch —
//! interim allocations and payments come from enumerating the mechanism
//! itself, never from curves the mechanism was built with — so a bug in the
//! construction cannot hide itself. Each check returns an [`AuditReport`]
//! carrying the measured numbers, tolerances, and (for sampled checks) the
//! seed and sample count needed to replay it.

use crate::algorithms::AllocationAlgorithm;
use crate::bic::{EvalMode, PaymentRule, SelectionRule};
use crate::config::{BuiltInstance, BuiltMechanism, ExperimentConfig, ReductionChoice};
use crate::error::{Error, Result};
use crate::interim::{estimate_interim_curve, Grid, InterimCurve, SamplingConfig};
use crate::mechanism::{
    algorithm_social_cost_exact, algorithm_social_cost_sampled, expected_totals_exact,
    expected_totals_sampled, interim_for_agent, Mechanism,
};
use crate::model::{CostFunction, ProductPrior, ValuationProfile, ValueDistribution};
use crate::rng::{tag, Stream};
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Outcome of one audit: what was measured, against which tolerance, and
/// whether it passed. `measured` keys are stable so reports serialize
/// deterministically.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub name: String,
    pub pass: bool,
    pub tolerance: f64,
    pub measured: BTreeMap<String, f64>,
    /// human-readable notes: worst violations, parameter choices, caveats
    pub details: Vec<String>,
    pub seed: Option<u64>,
    pub samples: Option<u64>,
}

impl AuditReport {
    fn new(name: &str, tolerance: f64) -> Self {
        AuditReport {
            name: name.to_string(),
            pass: true,
            tolerance,
            measured: BTreeMap::new(),
            details: Vec::new(),
            seed: None,
            samples: None,
        }
    }

    fn put(&mut self, key: &str, value: f64) {
        self.measured.insert(key.to_string(), value);
    }

    fn note(&mut self, detail: String) {
        self.details.push(detail);
    }
}

/// Replicate tag separating audit sampling from selection/experiment runs.
const AUDIT_RUN_TAG: u64 = 9001;

// ---------------------------------------------------------------------------
// Curve monotonicity
// ---------------------------------------------------------------------------

/// Pass iff every agent's interim curve is nondecreasing; the worst drop and
/// its location are recorded either way.
pub fn check_interim_monotone(curve: &InterimCurve) -> AuditReport {
    let mut report = AuditReport::new("interim_monotone", 0.0);
    let mut worst = 0.0_f64;
    for agent in 0..curve.n() {
        if let Some((cell, drop)) = curve.first_violation(agent) {
            report.pass = false;
            report.note(format!(
                "agent {agent}: curve drops by {drop:.3e} entering cell {cell}"
            ));
            worst = worst.max(drop);
        }
    }
    report.put("worst_drop", worst);
    report.put("agents", curve.n() as f64);
    report
}

// ---------------------------------------------------------------------------
// Incentive compatibility
// ---------------------------------------------------------------------------

/// Interim (in expectation over others' values) deviation scan on a discrete
/// prior: for every agent, every support atom as the true value, and every
/// support atom as the report, truthful reporting must maximize interim
/// utility up to `tol`. Allocations and payments are recomputed from the
/// mechanism by enumeration.
pub fn check_bic_on_grid(
    mech: &dyn Mechanism,
    prior: &ProductPrior,
    tol: f64,
    cap: u128,
) -> Result<AuditReport> {
    let mut report = AuditReport::new("bic_on_grid", tol);
    let mut worst_gain = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut pairs = 0usize;
    for agent in 0..prior.n() {
        let atoms = prior
            .marginal(agent)
            .atom_list()
            .ok_or(Error::NotDiscrete { agent })?
            .to_vec();
        // interim allocation and payment per report, recomputed from the
        // mechanism itself
        let mut interim = Vec::with_capacity(atoms.len());
        for &(report_value, _) in &atoms {
            interim.push(interim_for_agent(mech, prior, agent, report_value, cap)?);
        }
        for (ti, &(true_value, mass)) in atoms.iter().enumerate() {
            if mass <= 0.0 {
                continue;
            }
            let (x_t, p_t) = interim[ti];
            let truthful = true_value * x_t - p_t;
            for (ri, &(report_value, _)) in atoms.iter().enumerate() {
                if ri == ti {
                    continue;
                }
                let (x_r, p_r) = interim[ri];
                let gain = (true_value * x_r - p_r) - truthful;
                pairs += 1;
                worst_gain = worst_gain.max(gain);
                if gain > tol {
                    violations += 1;
                    if violations <= 8 {
                        report.note(format!(
                            "agent {agent}: value {true_value} gains {gain:.3e} reporting {report_value}"
                        ));
                    }
                }
            }
        }
    }
    report.pass = violations == 0;
    report.put("worst_gain", if pairs == 0 { 0.0 } else { worst_gain });
    report.put("deviation_pairs", pairs as f64);
    report.put("violations", violations as f64);
    Ok(report)
}

/// Per-profile deviation scan on finite report grids: for every profile and
/// every single-agent misreport, the truthful expected utility (over the
/// mechanism's own randomness) must be within `tol` of optimal.
pub fn check_expost_truthful(
    mech: &dyn Mechanism,
    grids: &[Vec<f64>],
    tol: f64,
    cap: u128,
) -> Result<AuditReport> {
    let mut report = AuditReport::new("expost_truthful", tol);
    let mut profiles: u128 = 1;
    for g in grids {
        if g.is_empty() {
            return Err(Error::InvalidInstance(
                "every agent needs at least one grid value".into(),
            ));
        }
        profiles = profiles.saturating_mul(g.len() as u128);
    }
    let deviations: u128 = grids.iter().map(|g| g.len() as u128).sum();
    let needed = profiles.saturating_mul(deviations.max(1));
    if needed > cap {
        return Err(Error::SupportTooLarge { needed, cap });
    }

    let utility = |res_dist: &[(crate::model::MechanismResult, f64)],
                   agent: usize,
                   true_value: f64| {
        let mut u = 0.0;
        for (res, q) in res_dist {
            let x = if res.served.contains(agent) { 1.0 } else { 0.0 };
            u += q * (x * true_value - res.payments[agent]);
        }
        u
    };

    let n = grids.len();
    let mut worst_gain = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut pairs = 0usize;
    let mut idx = vec![0usize; n];
    'outer: loop {
        let values: Vec<f64> = (0..n).map(|i| grids[i][idx[i]]).collect();
        let profile = ValuationProfile::new(values.clone())?;
        let truth_dist = mech.result_distribution(&profile)?;
        for agent in 0..n {
            let truthful = utility(&truth_dist, agent, values[agent]);
            for &alt in &grids[agent] {
                if alt == values[agent] {
                    continue;
                }
                let deviated = profile.with_value(agent, alt);
                let dev_dist = mech.result_distribution(&deviated)?;
                let gain = utility(&dev_dist, agent, values[agent]) - truthful;
                pairs += 1;
                worst_gain = worst_gain.max(gain);
                if gain > tol {
                    violations += 1;
                    if violations <= 8 {
                        report.note(format!(
                            "agent {agent}: at profile {values:?}, reporting {alt} gains {gain:.3e}"
                        ));
                    }
                }
            }
        }
        let mut i = n;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < grids[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
    report.pass = violations == 0;
    report.put("worst_gain", if pairs == 0 { 0.0 } else { worst_gain });
    report.put("deviation_pairs", pairs as f64);
    report.put("violations", violations as f64);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Cost recovery
// ---------------------------------------------------------------------------

/// Expected payments must cover expected service cost. Exact mode compares
/// enumerated expectations against `tol`; sampled mode passes when the
/// estimated margin is not more than three standard errors below zero.
/// `per_profile` additionally reports, in exact mode, the probability mass
/// of realizations that recover their own cost (the ex-post reductions
/// should score 1).
pub fn check_cost_recovery(
    mech: &dyn Mechanism,
    prior: &ProductPrior,
    cost: &CostFunction,
    mode: EvalMode,
    tol: f64,
    per_profile: bool,
) -> Result<AuditReport> {
    let mut report = AuditReport::new("cost_recovery", tol);
    match mode {
        EvalMode::Exact { cap } => {
            let totals = expected_totals_exact(mech, prior, cost, cap)?;
            let margin = totals.payment - totals.service_cost;
            report.put("expected_payment", totals.payment);
            report.put("expected_cost", totals.service_cost);
            report.put("margin", margin);
            report.pass = margin >= -tol;
            if per_profile {
                let mut recovered = 0.0;
                let mut total = 0.0;
                for (v, p) in prior.enumerate_support(cap)? {
                    for (res, q) in mech.result_distribution(&v)? {
                        total += p * q;
                        if res.total_payment() >= cost.cost(&res.served) - tol {
                            recovered += p * q;
                        }
                    }
                }
                report.put("per_profile_recovery_rate", recovered / total.max(1e-300));
            }
        }
        EvalMode::Sampled { samples, seed } => {
            let totals =
                expected_totals_sampled(mech, prior, cost, samples as usize, seed, AUDIT_RUN_TAG)?;
            let margin = totals.payment - totals.service_cost;
            report.put("expected_payment", totals.payment);
            report.put("expected_cost", totals.service_cost);
            report.put("margin", margin);
            report.put("margin_se", totals.recovery_margin_se);
            report.pass = margin + 3.0 * totals.recovery_margin_se >= 0.0;
            report.seed = Some(seed);
            report.samples = Some(samples);
        }
    }
    Ok(report)
}

/// Every check that applies to a configured mechanism, in a fixed order:
/// curve monotonicity for price-floor reductions, then on fully discrete
/// priors the deviation scan and exact cost recovery (per-profile for the
/// ex-post reductions, which also get the profile-grid deviation scan), and
/// on continuous priors sampled cost recovery.
pub fn standard_suite(
    cfg: &ExperimentConfig,
    instance: &BuiltInstance,
    mech: &BuiltMechanism,
    bic_tol: f64,
    recovery_tol: f64,
) -> Result<Vec<AuditReport>> {
    let mut reports = Vec::new();
    if let BuiltMechanism::PriceFloor(m) = mech {
        reports.push(check_interim_monotone(m.curve()));
    }
    let discrete = (0..instance.n).all(|i| instance.prior.marginal(i).atom_list().is_some());
    if discrete {
        reports.push(check_bic_on_grid(
            mech.mechanism(),
            &instance.prior,
            bic_tol,
            cfg.mode.cap(),
        )?);
        let expost = matches!(
            cfg.reduction.choice,
            ReductionChoice::Expost01 | ReductionChoice::ExpostPow2 | ReductionChoice::ExpostSupport
        );
        if expost {
            let grids: Vec<Vec<f64>> = (0..instance.n)
                .map(|i| {
                    instance
                        .prior
                        .marginal(i)
                        .atom_list()
                        .expect("checked discrete")
                        .iter()
                        .map(|&(v, _)| v)
                        .collect()
                })
                .collect();
            reports.push(check_expost_truthful(
                mech.mechanism(),
                &grids,
                bic_tol,
                cfg.mode.cap(),
            )?);
        }
        reports.push(check_cost_recovery(
            mech.mechanism(),
            &instance.prior,
            &instance.cost,
            EvalMode::Exact {
                cap: cfg.mode.cap(),
            },
            recovery_tol,
            expost,
        )?);
    } else {
        reports.push(check_cost_recovery(
            mech.mechanism(),
            &instance.prior,
            &instance.cost,
            EvalMode::Sampled {
                samples: cfg.mode.sc_samples(),
                seed: cfg.seed,
            },
            recovery_tol,
            false,
        )?);
    }
    Ok(reports)
}

// ---------------------------------------------------------------------------
// Social-cost ratio
// ---------------------------------------------------------------------------

/// Expected social cost of the mechanism and of the bare base algorithm,
/// plus their ratio. In sampled mode both sides see the same random
/// profiles, so the ratio is a paired comparison.
pub fn social_cost_ratio(
    mech: &dyn Mechanism,
    base: &dyn AllocationAlgorithm,
    prior: &ProductPrior,
    cost: &CostFunction,
    mode: EvalMode,
) -> Result<(f64, f64, f64)> {
    let (mech_sc, base_sc) = match mode {
        EvalMode::Exact { cap } => (
            expected_totals_exact(mech, prior, cost, cap)?.social_cost,
            algorithm_social_cost_exact(base, prior, cost, cap)?,
        ),
        EvalMode::Sampled { samples, seed } => (
            expected_totals_sampled(mech, prior, cost, samples as usize, seed, AUDIT_RUN_TAG)?
                .social_cost,
            algorithm_social_cost_sampled(base, prior, cost, samples as usize, seed, AUDIT_RUN_TAG),
        ),
    };
    let ratio = if base_sc > 0.0 {
        mech_sc / base_sc
    } else if mech_sc <= 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok((mech_sc, base_sc, ratio))
}

// ---------------------------------------------------------------------------
// The harmonic suffix-sum inequality
// ---------------------------------------------------------------------------

/// Partial harmonic sum `H_r = Σ_{i=1}^r 1/i`.
pub fn harmonic(r: u64) -> f64 {
    (1..=r).map(|i| 1.0 / i as f64).sum()
}

/// For entries `a_j ≥ 1`: the suffix-share sum `Σ_j a_j / Σ_{t≥j} a_t` is at
/// most `2·H_r` with `r = Σ_j ⌊a_j⌋`. Returns `(lhs, bound, pass)`.
pub fn harmonic_inequality(a: &[f64]) -> Result<(f64, f64, bool)> {
    for (index, &value) in a.iter().enumerate() {
        if !(value >= 1.0) || !value.is_finite() {
            return Err(Error::EntryBelowOne { index, value });
        }
    }
    let mut suffix = 0.0;
    let mut lhs = 0.0;
    for &value in a.iter().rev() {
        suffix += value;
        lhs += value / suffix;
    }
    let r: u64 = a.iter().map(|&x| x.floor() as u64).sum();
    let bound = 2.0 * harmonic(r);
    Ok((lhs, bound, lhs <= bound + 1e-12))
}

// ---------------------------------------------------------------------------
// Equal-revenue lower-bound experiment
// ---------------------------------------------------------------------------

/// Tunables for [`lower_bound_experiment`]; the defaults match a grid of 8
/// cells over the value range and the estimation parameters used elsewhere.
#[derive(Debug, Clone)]
pub struct LowerBoundConfig {
    pub rule: SelectionRule,
    /// grid step; `None` picks an 8-cell grid over `[0, v_max]`
    pub delta: Option<f64>,
    /// estimation accuracy for the interim curve
    pub epsilon: f64,
    /// override for curve samples per (agent, cell)
    pub curve_samples: Option<u64>,
    /// replicates per threshold row
    pub row_samples: u64,
    /// revenue slack; `None` uses the sampled-mode default `2εn`
    pub eps0: Option<f64>,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        LowerBoundConfig {
            rule: SelectionRule::BestOfBoth,
            delta: None,
            epsilon: 0.1,
            curve_samples: Some(2000),
            row_samples: 20_000,
            eps0: None,
        }
    }
}

/// Stress the reductions against a prior engineered to make cost recovery
/// nearly impossible: `n` agents with values `a_i/(4n)` where `a_i` is 0
/// with probability `1/h` and otherwise has the equal-revenue density on
/// `[1, h]`, against a single public facility of cost 1.
///
/// Any mechanism that recovers this cost must usually serve nobody, so its
/// expected social cost stays above `(ln h − 2√(h/n))/8` even though the
/// always-serve baseline achieves exactly 1. The report records:
///
/// * sampler calibration — empirical total value vs `ln(h)/4`, within 5%;
/// * the baseline social cost (exactly 1);
/// * the reduced mechanism's social cost vs the floor above;
/// * the probability the mechanism serves anyone (theory caps it at 1/4
///   for exact cost-recovering mechanisms; informational here because
///   sampled-mode recovery holds only to sampling confidence).
///
/// All logarithms here are natural: the equal-revenue integral
/// `∫₁ʰ dz/z = ln h` fixes the base.
pub fn lower_bound_experiment(
    h: f64,
    n: usize,
    cfg: &LowerBoundConfig,
    samples: u64,
    seed: u64,
) -> Result<AuditReport> {
    if !(h > 1.0) {
        return Err(Error::InvalidInstance(format!(
            "the value spread must exceed 1, got {h}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInstance("need at least one agent".into()));
    }
    let mut report = AuditReport::new("lower_bound_experiment", 0.0);
    report.seed = Some(seed);
    report.samples = Some(samples);
    report.note("logarithms are natural (ln)".into());

    let scale = 1.0 / (4.0 * n as f64);
    let marginal = ValueDistribution::equal_revenue(h, scale)?;
    let prior = ProductPrior::iid(marginal, n)?;
    let cost = CostFunction::public_excludable(1.0)?;
    let base: Arc<dyn AllocationAlgorithm> = Arc::new(crate::algorithms::ServeAll);

    // (a) sampler calibration: empirical expected total value vs ln(h)/4
    let target = h.ln() / 4.0;
    let mut calib = Stream::keyed(seed, tag::LOWER_BOUND, &[0]);
    let mut total_value = 0.0;
    for _ in 0..samples {
        total_value += prior.sample_profile(&mut calib).total_value();
    }
    let empirical = total_value / samples as f64;
    report.put("expected_value", empirical);
    report.put("expected_value_target", target);
    let calibrated = (empirical - target).abs() <= 0.05 * target;

    // (b) the always-serve baseline: cost 1 on every draw, nobody excluded
    let baseline_sc =
        algorithm_social_cost_sampled(base.as_ref(), &prior, &cost, 1024, seed, AUDIT_RUN_TAG);
    report.put("baseline_social_cost", baseline_sc);

    // (c) run the sampled reduction pipeline and measure its social cost
    let v_max = prior.v_max();
    let delta = cfg.delta.unwrap_or(v_max / 8.0);
    let grid = Grid::covering(v_max, delta)?;
    let mut sampling = SamplingConfig::new(cfg.epsilon)?;
    if let Some(s) = cfg.curve_samples {
        sampling = sampling.with_samples(s);
    }
    let curve = Arc::new(estimate_interim_curve(
        base.as_ref(),
        &prior,
        &grid,
        &sampling,
        seed,
    )?);
    let eps0 = cfg
        .eps0
        .unwrap_or(2.0 * cfg.epsilon * n as f64);
    let mech = crate::bic::reduce(
        base.clone(),
        curve,
        &prior,
        &cost,
        cfg.rule,
        eps0,
        EvalMode::Sampled {
            samples: cfg.row_samples,
            seed,
        },
        PaymentRule::ClosedForm,
    )?;
    let totals =
        expected_totals_sampled(&mech, &prior, &cost, samples as usize, seed, AUDIT_RUN_TAG)?;
    let floor = (h.ln() - 2.0 * (h / n as f64).sqrt()) / 8.0;
    report.put("mechanism_social_cost", totals.social_cost);
    report.put("social_cost_floor", floor);
    report.put("pr_nonempty", totals.pr_nonempty);
    report.put("pr_nonempty_bound", 0.25);
    report.note(format!(
        "selected price floor: {} ({:?} rule, eps0 {eps0})",
        mech.threshold(),
        mech.schedule().rule
    ));
    if totals.pr_nonempty > 0.25 {
        report.note(
            "serve probability exceeds the 1/4 bound for exactly cost-recovering mechanisms; \
             sampled-mode recovery holds only to sampling confidence"
                .into(),
        );
    }

    report.pass = calibrated
        && totals.social_cost >= floor
        && (baseline_sc - 1.0).abs() <= 1e-12;
    if !calibrated {
        report.note(format!(
            "sampler calibration off: empirical {empirical:.4} vs target {target:.4}"
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{ServeAll, ServeArgmax, ServeNone};
    use crate::interim::{AgentCurve, CurveProvenance};
    use crate::mechanism::FreeService;
    use crate::model::{MechanismResult, ServiceOutcome, DEFAULT_ENUMERATION_CAP};
    use approx::assert_abs_diff_eq;

    fn exact() -> EvalMode {
        EvalMode::Exact {
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    #[test]
    fn monotone_check_reports_the_worst_drop() {
        let grid = Grid::new(0.5, 2).unwrap();
        let good = InterimCurve {
            grid,
            agents: vec![AgentCurve {
                values: vec![0.0, 0.0, 0.5],
                observed: vec![true; 3],
            }],
            provenance: CurveProvenance::Exact,
        };
        assert!(check_interim_monotone(&good).pass);

        let bad = InterimCurve {
            grid,
            agents: vec![AgentCurve {
                values: vec![0.0, 0.2, 0.1],
                observed: vec![true; 3],
            }],
            provenance: CurveProvenance::Exact,
        };
        let report = check_interim_monotone(&bad);
        assert!(!report.pass);
        assert_abs_diff_eq!(report.measured["worst_drop"], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn free_service_is_trivially_truthful_and_flat_pricing_is_not() {
        let prior = crate::model::ProductPrior::iid(
            ValueDistribution::two_point(1.0, 0.5, 4.0).unwrap(),
            2,
        )
        .unwrap();
        let free = FreeService {
            alg: ServeAll,
            n: 2,
        };
        let report = check_bic_on_grid(&free, &prior, 1e-9, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(report.pass);

        // flat price 5 on the argmax winner: a value-4 agent prefers to
        // lose, so shading to 1 is a profitable deviation
        struct FlatFive;
        impl Mechanism for FlatFive {
            fn n(&self) -> usize {
                2
            }
            fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> Result<MechanismResult> {
                let served = ServeArgmax.run(v, rng);
                let mut payments = vec![0.0; v.len()];
                for i in served.iter() {
                    payments[i] = 5.0;
                }
                Ok(MechanismResult::new(served, payments))
            }
            fn result_distribution(
                &self,
                v: &ValuationProfile,
            ) -> Result<Vec<(MechanismResult, f64)>> {
                let mut rng = Stream::unused();
                Ok(vec![(self.run(v, &mut rng)?, 1.0)])
            }
            fn name(&self) -> String {
                "flat_five".into()
            }
        }
        let report = check_bic_on_grid(&FlatFive, &prior, 1e-9, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(!report.pass);
        assert!(report.measured["worst_gain"] > 0.1);
    }

    #[test]
    fn expost_scan_accepts_posted_prices_and_rejects_pay_your_bid() {
        let cost = CostFunction::public_excludable(1.0).unwrap();
        let mech = crate::expost::ZeroOneMechanism::new(Arc::new(ServeAll), cost, 2);
        let grids = vec![vec![0.0, 1.0]; 2];
        let report = check_expost_truthful(&mech, &grids, 1e-9, 10_000).unwrap();
        assert!(report.pass);

        struct PayYourBid;
        impl Mechanism for PayYourBid {
            fn n(&self) -> usize {
                2
            }
            fn run(&self, v: &ValuationProfile, _rng: &mut Stream) -> Result<MechanismResult> {
                let served = ServiceOutcome::all(2);
                let payments = v.values().to_vec();
                Ok(MechanismResult::new(served, payments))
            }
            fn result_distribution(
                &self,
                v: &ValuationProfile,
            ) -> Result<Vec<(MechanismResult, f64)>> {
                let mut rng = Stream::unused();
                Ok(vec![(self.run(v, &mut rng)?, 1.0)])
            }
            fn name(&self) -> String {
                "pay_your_bid".into()
            }
        }
        let grids = vec![vec![1.0, 2.0, 4.0]; 2];
        let report = check_expost_truthful(&PayYourBid, &grids, 1e-9, 10_000).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn cost_recovery_passes_nobody_and_fails_free_service() {
        let prior = crate::model::ProductPrior::iid(
            ValueDistribution::two_point(1.0, 0.5, 4.0).unwrap(),
            2,
        )
        .unwrap();
        let cost = CostFunction::public_excludable(1.0).unwrap();

        let nobody = FreeService {
            alg: ServeNone,
            n: 2,
        };
        let report =
            check_cost_recovery(&nobody, &prior, &cost, exact(), 1e-9, true).unwrap();
        assert!(report.pass);
        assert_abs_diff_eq!(
            report.measured["per_profile_recovery_rate"],
            1.0,
            epsilon = 1e-12
        );

        let free = FreeService {
            alg: ServeAll,
            n: 2,
        };
        let report = check_cost_recovery(&free, &prior, &cost, exact(), 1e-9, false).unwrap();
        assert!(!report.pass);
        assert_abs_diff_eq!(report.measured["margin"], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_reduction_has_ratio_one() {
        let prior = crate::model::ProductPrior::iid(
            ValueDistribution::two_point(1.0, 0.5, 4.0).unwrap(),
            2,
        )
        .unwrap();
        let cost = CostFunction::public_excludable(1.0).unwrap();
        let free = FreeService {
            alg: ServeAll,
            n: 2,
        };
        let (mech_sc, base_sc, ratio) =
            social_cost_ratio(&free, &ServeAll, &prior, &cost, exact()).unwrap();
        assert_abs_diff_eq!(mech_sc, base_sc, epsilon = 1e-12);
        assert_abs_diff_eq!(ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn harmonic_inequality_matches_hand_arithmetic() {
        let (lhs, bound, pass) = harmonic_inequality(&[1.0]).unwrap();
        assert_abs_diff_eq!(lhs, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bound, 2.0, epsilon = 1e-12);
        assert!(pass);

        let (lhs, bound, pass) = harmonic_inequality(&[1.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(lhs, 1.0 / 3.0 + 0.5 + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bound, 2.0 * (1.0 + 0.5 + 1.0 / 3.0), epsilon = 1e-12);
        assert!(pass);

        assert!(matches!(
            harmonic_inequality(&[1.0, 0.5]),
            Err(Error::EntryBelowOne { index: 1, .. })
        ));
    }

    #[test]
    fn lower_bound_experiment_small_instance() {
        // small but real: h = 4, n = 16, quick sampling
        let cfg = LowerBoundConfig {
            curve_samples: Some(400),
            row_samples: 4000,
            ..LowerBoundConfig::default()
        };
        let report = lower_bound_experiment(4.0, 16, &cfg, 20_000, 71).unwrap();
        assert!(report.pass, "details: {:?}", report.details);
        let target = 4.0_f64.ln() / 4.0;
        assert_abs_diff_eq!(
            report.measured["expected_value_target"],
            target,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(report.measured["baseline_social_cost"], 1.0, epsilon = 1e-12);
        assert!(report.measured["mechanism_social_cost"] >= report.measured["social_cost_floor"]);
    }
}
