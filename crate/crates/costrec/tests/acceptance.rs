//! Release acceptance suite. Each test checks one numbered criterion and
//! prints one `criterion NN ...: PASS/FAIL` line (visible with
//! `--nocapture`; on failure the assertion message carries the details).
//!
//! Tolerances are pinned as constants here, next to the checks they govern.

use costrec::algorithms::{
    AllocationAlgorithm, FiniteMixture, FixedThreshold, MinimizeSocialCost, ServeAll, ServeArgmax,
    ServeNone,
};
use costrec::audit::{
    check_bic_on_grid, check_expost_truthful, harmonic, harmonic_inequality,
    lower_bound_experiment, LowerBoundConfig,
};
use costrec::bic::{floor_log2, reduce, EvalMode, PaymentRule, ReducedMechanism, SelectionRule};
use costrec::expost::{zero_one_outcome, DoublingPriceMechanism, ZeroOneMechanism};
use costrec::interim::{
    estimate_interim_curve, exact_interim_curve, hoeffding_samples, sampled_payment,
    truncated_interim_payment, AgentCurve, CurveProvenance, Grid, InterimCurve, SamplingConfig,
};
use costrec::mechanism::{expected_totals_exact, Mechanism};
use costrec::model::{
    social_cost, CostFunction, MechanismResult, ProductPrior, ValuationProfile,
    ValueDistribution, DEFAULT_ENUMERATION_CAP,
};
use costrec::rng::{tag, Stream};
use std::sync::Arc;
use std::time::Instant;

/// Exact-arithmetic tolerance for enumerated expectations.
const EXACT_TOL: f64 = 1e-9;
/// Deviation-gain tolerance for incentive checks.
const BIC_TOL: f64 = 1e-9;
const CAP: u128 = DEFAULT_ENUMERATION_CAP;

fn verdict(name: &str, failures: &[String]) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("criterion {name}: {status}");
    assert!(
        failures.is_empty(),
        "criterion {name} failed:\n  {}",
        failures.join("\n  ")
    );
}

// ---------------------------------------------------------------------------
// The exact-mode instance roster: n ≤ 4, supports ≤ 4 values, all four cost
// families, assorted base algorithms.
// ---------------------------------------------------------------------------

struct TestInstance {
    label: &'static str,
    prior: ProductPrior,
    cost: CostFunction,
    base: Arc<dyn AllocationAlgorithm>,
    delta: f64,
}

fn roster() -> Vec<TestInstance> {
    let two_point = |lo: f64, p: f64, hi: f64| ValueDistribution::two_point(lo, p, hi).unwrap();
    let atoms = |list: &[(f64, f64)]| ValueDistribution::atoms(list).unwrap();
    let iid = |d: ValueDistribution, n: usize| ProductPrior::iid(d, n).unwrap();

    let mut out: Vec<TestInstance> = Vec::new();
    out.push(TestInstance {
        label: "n1 two-point fixed-cost serve-all",
        prior: iid(two_point(1.0, 0.5, 4.0), 1),
        cost: CostFunction::public_excludable(2.0).unwrap(),
        base: Arc::new(ServeAll),
        delta: 0.5,
    });
    out.push(TestInstance {
        label: "n2 two-point fixed-cost serve-all (worked example)",
        prior: iid(two_point(1.0, 0.5, 4.0), 2),
        cost: CostFunction::public_excludable(3.0).unwrap(),
        base: Arc::new(ServeAll),
        delta: 0.5,
    });
    out.push(TestInstance {
        label: "n2 four-atom additive argmax",
        prior: iid(atoms(&[(1.0, 0.25), (2.0, 0.25), (3.0, 0.25), (4.0, 0.25)]), 2),
        cost: CostFunction::additive(vec![1.0, 0.5]).unwrap(),
        base: Arc::new(ServeArgmax),
        delta: 0.5,
    });
    {
        let cost = CostFunction::cardinality_based(vec![0.0, 2.0, 2.5]).unwrap();
        out.push(TestInstance {
            label: "n2 four-atom cardinality min-social-cost",
            prior: iid(atoms(&[(0.5, 0.2), (1.0, 0.3), (2.0, 0.3), (4.0, 0.2)]), 2),
            cost: cost.clone(),
            base: Arc::new(MinimizeSocialCost { cost }),
            delta: 0.5,
        });
    }
    out.push(TestInstance {
        label: "n3 two-point cardinality serve-all",
        prior: iid(two_point(1.0, 0.3, 8.0), 3),
        cost: CostFunction::cardinality_based(vec![0.0, 1.5, 2.25, 2.75]).unwrap(),
        base: Arc::new(ServeAll),
        delta: 0.5,
    });
    {
        // submodular-ish explicit table on three agents
        let costs: Vec<f64> = (0u32..8)
            .map(|mask| match mask.count_ones() {
                0 => 0.0,
                1 => 1.5,
                2 => 2.5,
                _ => 3.0,
            })
            .collect();
        let cost = CostFunction::explicit_table(3, costs).unwrap();
        out.push(TestInstance {
            label: "n3 three-atom table min-social-cost",
            prior: iid(atoms(&[(1.0, 0.25), (2.0, 0.5), (4.0, 0.25)]), 3),
            cost: cost.clone(),
            base: Arc::new(MinimizeSocialCost { cost }),
            delta: 0.5,
        });
    }
    out.push(TestInstance {
        label: "n4 two-point additive fixed-threshold",
        prior: iid(two_point(1.0, 0.5, 2.0), 4),
        cost: CostFunction::additive(vec![0.5, 0.5, 0.5, 0.5]).unwrap(),
        base: Arc::new(FixedThreshold { threshold: 1.5 }),
        delta: 0.5,
    });
    out.push(TestInstance {
        label: "n4 four-atom fixed-cost argmax",
        prior: iid(atoms(&[(0.5, 0.4), (1.0, 0.3), (2.0, 0.2), (4.0, 0.1)]), 4),
        cost: CostFunction::public_excludable(1.0).unwrap(),
        base: Arc::new(ServeArgmax),
        delta: 0.5,
    });
    {
        // affine-in-cardinality table on four agents
        let costs: Vec<f64> = (0u32..16)
            .map(|mask| {
                if mask == 0 {
                    0.0
                } else {
                    1.0 + 0.5 * mask.count_ones() as f64
                }
            })
            .collect();
        out.push(TestInstance {
            label: "n4 two-point table serve-all",
            prior: iid(two_point(2.0, 0.6, 8.0), 4),
            cost: CostFunction::explicit_table(4, costs).unwrap(),
            base: Arc::new(ServeAll),
            delta: 0.5,
        });
    }
    // heterogeneous marginals exercise the per-agent curve paths
    out.push(TestInstance {
        label: "n2 heterogeneous fixed-cost serve-all",
        prior: ProductPrior::new(vec![
            two_point(1.0, 0.5, 4.0),
            atoms(&[(2.0, 0.5), (3.0, 0.5)]),
        ])
        .unwrap(),
        cost: CostFunction::public_excludable(2.5).unwrap(),
        base: Arc::new(ServeAll),
        delta: 0.5,
    });
    out
}

fn reduce_exact(inst: &TestInstance, rule: SelectionRule) -> ReducedMechanism {
    let grid = Grid::covering(inst.prior.v_max(), inst.delta).unwrap();
    let curve = Arc::new(
        exact_interim_curve(inst.base.as_ref(), &inst.prior, &grid, CAP).unwrap(),
    );
    reduce(
        inst.base.clone(),
        curve,
        &inst.prior,
        &inst.cost,
        rule,
        0.0,
        EvalMode::Exact { cap: CAP },
        PaymentRule::ClosedForm,
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// 1. Exact-mode cost recovery on the roster
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_exact_cost_recovery() {
    let start = Instant::now();
    let mut failures = Vec::new();
    for inst in roster() {
        for rule in [SelectionRule::Doubling, SelectionRule::CostShare] {
            let mech = reduce_exact(&inst, rule);
            let totals =
                expected_totals_exact(&mech, &inst.prior, &inst.cost, CAP).unwrap();
            if totals.payment < totals.service_cost - EXACT_TOL {
                failures.push(format!(
                    "{} [{rule:?}]: revenue {} < cost {}",
                    inst.label, totals.payment, totals.service_cost
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 10.0 {
        failures.push(format!("runtime {elapsed:?} exceeded 10 s"));
    }
    verdict("01 exact-mode cost recovery", &failures);
}

// ---------------------------------------------------------------------------
// 2. Worked schedules on the fixed-cost-3 two-agent instance
// ---------------------------------------------------------------------------

/// Independent oracle for the worked instance: enumerate the four profiles
/// of `{1,4}²` directly. Serve-all gives interim probability 1 at both
/// support values, so for any floor `t` at or above the lowest support
/// value's cell the truthful payment is exactly `t` per served agent
/// (`v·1 − ∫_t^v 1 = t`).
fn worked_oracle_floor(t: f64) -> (f64, f64) {
    let mut cost = 0.0;
    let mut revenue = 0.0;
    for &a in &[1.0, 4.0] {
        for &b in &[1.0, 4.0] {
            let p = 0.25;
            let served = [a, b].iter().filter(|&&v| v >= t).count();
            if served > 0 {
                cost += p * 3.0;
            }
            revenue += p * served as f64 * t;
        }
    }
    (cost, revenue)
}

#[test]
fn criterion_02_worked_schedules() {
    let mut failures = Vec::new();
    let inst = TestInstance {
        label: "worked",
        prior: ProductPrior::iid(ValueDistribution::two_point(1.0, 0.5, 4.0).unwrap(), 2)
            .unwrap(),
        cost: CostFunction::public_excludable(3.0).unwrap(),
        base: Arc::new(ServeAll),
        delta: 0.5,
    };

    // doubling: rows at floors 1, 2, 4, third one chosen
    let mech = reduce_exact(&inst, SelectionRule::Doubling);
    let schedule = mech.schedule();
    let frozen = [(1.0, 3.0, 2.0, false), (2.0, 2.25, 2.0, false), (4.0, 2.25, 4.0, true)];
    if schedule.rows.len() != frozen.len() {
        failures.push(format!("doubling produced {} rows", schedule.rows.len()));
    } else {
        for (row, &(t, cost, revenue, selected)) in schedule.rows.iter().zip(&frozen) {
            let (oracle_cost, oracle_revenue) = worked_oracle_floor(t);
            for (what, got, want) in [
                ("threshold", row.threshold, t),
                ("cost", row.expected_cost, cost),
                ("revenue", row.expected_revenue, revenue),
                ("oracle cost", oracle_cost, cost),
                ("oracle revenue", oracle_revenue, revenue),
            ] {
                if (got - want).abs() > EXACT_TOL {
                    failures.push(format!(
                        "doubling row at floor {t}: {what} = {got}, expected {want}"
                    ));
                }
            }
            if row.selected != selected {
                failures.push(format!("doubling row at floor {t}: selected = {}", row.selected));
            }
        }
    }
    if (mech.threshold() - 4.0).abs() > EXACT_TOL {
        failures.push(format!("doubling chose {}", mech.threshold()));
    }

    // cost share with δ = 0.5: floors 0, 2, 2.5, the last one chosen.
    // Rows above the lowest support cell must match the enumeration oracle;
    // the start row at floor 0 only needs the right cost (its revenue
    // depends on the curve's below-support completion, which the chosen
    // threshold never does).
    let mech = reduce_exact(&inst, SelectionRule::CostShare);
    let schedule = mech.schedule();
    let floors: Vec<f64> = schedule.rows.iter().map(|r| r.threshold).collect();
    if floors.len() != 3
        || (floors[0] - 0.0).abs() > EXACT_TOL
        || (floors[1] - 2.0).abs() > EXACT_TOL
        || (floors[2] - 2.5).abs() > EXACT_TOL
    {
        failures.push(format!("cost-share floors were {floors:?}, expected [0, 2, 2.5]"));
    }
    for row in &schedule.rows {
        let (oracle_cost, oracle_revenue) = worked_oracle_floor(row.threshold);
        if (row.expected_cost - oracle_cost).abs() > EXACT_TOL {
            failures.push(format!(
                "cost-share row at floor {}: cost = {}, oracle says {oracle_cost}",
                row.threshold, row.expected_cost
            ));
        }
        if row.threshold >= 0.5 && (row.expected_revenue - oracle_revenue).abs() > EXACT_TOL {
            failures.push(format!(
                "cost-share row at floor {}: revenue = {}, oracle says {oracle_revenue}",
                row.threshold, row.expected_revenue
            ));
        }
    }
    if schedule.rows.first().is_some_and(|row| row.selected) {
        failures.push("cost-share selected the floor-0 start row".into());
    }
    if (mech.threshold() - 2.5).abs() > EXACT_TOL {
        failures.push(format!("cost-share chose {}", mech.threshold()));
    }

    verdict("02 worked schedules", &failures);
}

// ---------------------------------------------------------------------------
// 3. Interim incentive audit across the roster, plus the broken fixture
// ---------------------------------------------------------------------------

/// Deliberately broken mechanism: argmax winner pays a flat 5 regardless of
/// value, so high types prefer to shade down and lose.
struct FlatFive;

impl Mechanism for FlatFive {
    fn n(&self) -> usize {
        2
    }
    fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> costrec::Result<MechanismResult> {
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
    ) -> costrec::Result<Vec<(MechanismResult, f64)>> {
        Ok(vec![(self.run(v, &mut Stream::unused())?, 1.0)])
    }
    fn name(&self) -> String {
        "flat_five".into()
    }
}

#[test]
fn criterion_03_bic_audit() {
    let mut failures = Vec::new();
    for inst in roster() {
        for rule in [SelectionRule::Doubling, SelectionRule::CostShare] {
            let mech = reduce_exact(&inst, rule);
            let report = check_bic_on_grid(&mech, &inst.prior, BIC_TOL, CAP).unwrap();
            if !report.pass {
                failures.push(format!(
                    "{} [{rule:?}]: {} deviation(s), worst gain {}",
                    inst.label, report.measured["violations"], report.measured["worst_gain"]
                ));
            }
        }
    }
    let prior =
        ProductPrior::iid(ValueDistribution::two_point(1.0, 0.5, 4.0).unwrap(), 2).unwrap();
    let broken = check_bic_on_grid(&FlatFive, &prior, BIC_TOL, CAP).unwrap();
    if broken.pass {
        failures.push("the flat-price-5 fixture passed the deviation scan".into());
    }
    verdict("03 interim incentive audit", &failures);
}

// ---------------------------------------------------------------------------
// 4. Ex-post reductions: full profile grids
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_expost_suite() {
    let start = Instant::now();
    let mut failures = Vec::new();

    // binary reduction on every profile of {0,1}^n, n ≤ 10, including a
    // randomized base (its guarantee needs nothing from the base)
    for n in 1..=10usize {
        let cost = CostFunction::public_excludable(((n as f64) / 3.0).ceil()).unwrap();
        let bases: Vec<Arc<dyn AllocationAlgorithm>> = vec![
            Arc::new(ServeAll),
            Arc::new(FiniteMixture::new(vec![
                (Arc::new(ServeAll) as Arc<dyn AllocationAlgorithm>, 0.5),
                (Arc::new(ServeNone) as Arc<dyn AllocationAlgorithm>, 0.5),
            ])),
        ];
        for base in bases {
            for mask in 0u32..(1 << n) {
                let values: Vec<f64> =
                    (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
                let v = ValuationProfile::new(values).unwrap();
                for (s, _q) in base.outcome_distribution(&v).unwrap() {
                    let result = zero_one_outcome(&s, &v, &cost);
                    let c = cost.cost(&result.served);
                    // zero tolerance on per-profile recovery
                    if !result.served.is_empty() && result.total_payment() < c {
                        failures.push(format!(
                            "binary n={n} mask={mask}: payment {} < cost {c}",
                            result.total_payment()
                        ));
                    }
                    if social_cost(&result.served, &v, &cost) > social_cost(&s, &v, &cost) {
                        failures.push(format!("binary n={n} mask={mask}: social cost rose"));
                    }
                }
            }
            let mech = ZeroOneMechanism::new(base.clone(), cost.clone(), n);
            let grids = vec![vec![0.0, 1.0]; n];
            let report = check_expost_truthful(&mech, &grids, BIC_TOL, CAP).unwrap();
            if !report.pass {
                failures.push(format!(
                    "binary n={n} base={}: {} profitable deviation(s)",
                    base.name(),
                    report.measured["violations"]
                ));
            }
        }
    }

    // powers-of-two reduction on every profile of {1,2,4}^n, n ≤ 4
    for n in 1..=4usize {
        let cost = CostFunction::public_excludable(2.5).unwrap();
        let bases: Vec<Arc<dyn AllocationAlgorithm>> = vec![
            Arc::new(ServeAll),
            Arc::new(MinimizeSocialCost { cost: cost.clone() }),
            Arc::new(FixedThreshold { threshold: 1.5 }),
        ];
        for base in bases {
            let mech =
                DoublingPriceMechanism::new(base.clone(), cost.clone(), 1.0, 4.0, n).unwrap();
            let levels = [1.0, 2.0, 4.0];
            let mut idx = vec![0usize; n];
            'profiles: loop {
                let values: Vec<f64> = idx.iter().map(|&i| levels[i]).collect();
                let v = ValuationProfile::new(values).unwrap();
                let result = mech.run(&v, &mut Stream::unused()).unwrap();
                if !result.served.is_empty() {
                    let price = result
                        .served
                        .iter()
                        .map(|i| result.payments[i])
                        .fold(f64::NAN, |a, b| if a.is_nan() { b } else { a });
                    for i in result.served.iter() {
                        if result.payments[i] != price {
                            failures.push(format!("pow2 n={n}: non-uniform price at {v:?}"));
                        }
                    }
                    // zero tolerance
                    if result.total_payment() < cost.cost(&result.served) {
                        failures.push(format!(
                            "pow2 n={n}: payment {} < cost {} at {v:?}",
                            result.total_payment(),
                            cost.cost(&result.served)
                        ));
                    }
                }
                let mut i = n;
                loop {
                    if i == 0 {
                        break 'profiles;
                    }
                    i -= 1;
                    idx[i] += 1;
                    if idx[i] < levels.len() {
                        break;
                    }
                    idx[i] = 0;
                }
            }
            let grids = vec![vec![1.0, 2.0, 4.0]; n];
            let report = check_expost_truthful(&mech, &grids, BIC_TOL, CAP).unwrap();
            if !report.pass {
                failures.push(format!(
                    "pow2 n={n} base={}: {} profitable deviation(s)",
                    base.name(),
                    report.measured["violations"]
                ));
            }
        }
    }

    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 30.0 {
        failures.push(format!("runtime {elapsed:?} exceeded 30 s"));
    }
    verdict("04 ex-post reductions", &failures);
}

// ---------------------------------------------------------------------------
// 5. Approximation constants on the roster
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_approximation_constants() {
    let mut failures = Vec::new();
    for inst in roster() {
        let h = inst.prior.spread();
        let n = inst.prior.n();

        // doubling: social cost within (3 + 2(1+⌊log₂h⌋)) of the base
        let mech = reduce_exact(&inst, SelectionRule::Doubling);
        let mech_sc = expected_totals_exact(&mech, &inst.prior, &inst.cost, CAP)
            .unwrap()
            .social_cost;
        let base_sc = costrec::mechanism::algorithm_social_cost_exact(
            inst.base.as_ref(),
            &inst.prior,
            &inst.cost,
            CAP,
        )
        .unwrap();
        let factor = 3.0 + 2.0 * (1.0 + floor_log2(h) as f64);
        if mech_sc > factor * base_sc + EXACT_TOL {
            failures.push(format!(
                "{}: doubling SC {mech_sc} exceeds {factor}·{base_sc}",
                inst.label
            ));
        }

        // cost share: excluded value within (1 + 2·H_n)·E[C(S)] + nδ
        let mech = reduce_exact(&inst, SelectionRule::CostShare);
        let t = mech.threshold();
        let mut excluded = 0.0;
        let mut base_cost = 0.0;
        for (v, p) in inst.prior.enumerate_support(CAP).unwrap() {
            for (s, q) in inst.base.outcome_distribution(&v).unwrap() {
                base_cost += p * q * inst.cost.cost(&s);
                excluded += p
                    * q
                    * s.iter()
                        .filter(|&i| v.value(i) < t)
                        .map(|i| v.value(i))
                        .sum::<f64>();
            }
        }
        let bound = (1.0 + 2.0 * harmonic(n as u64)) * base_cost + n as f64 * inst.delta;
        if excluded > bound + EXACT_TOL {
            failures.push(format!(
                "{}: cost-share excluded value {excluded} exceeds bound {bound}",
                inst.label
            ));
        }
    }
    verdict("05 approximation constants", &failures);
}

// ---------------------------------------------------------------------------
// 6. Curve-estimation accuracy at the Hoeffding sample count
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_estimation_accuracy() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let epsilon = 0.1;
    let delta = 0.25;
    let n = 2;

    // the Hoeffding bound's sample count for these parameters
    let samples = hoeffding_samples(epsilon, n, delta);
    let by_formula = ((2.0 * n as f64) / (epsilon * delta)).ln() / (2.0 * epsilon * epsilon);
    if samples != by_formula.ceil() as u64 {
        failures.push(format!("derived N = {samples}, formula gives {by_formula}"));
    }

    let prior =
        ProductPrior::iid(ValueDistribution::two_point(1.0, 0.5, 4.0).unwrap(), n).unwrap();
    let grid = Grid::covering(4.0, delta).unwrap();
    let base = ServeArgmax;
    let exact = exact_interim_curve(&base, &prior, &grid, CAP).unwrap();
    let sampling = SamplingConfig::new(epsilon).unwrap();

    let runs = 500;
    let mut bad_runs = 0;
    for seed in 0..runs {
        let est = estimate_interim_curve(&base, &prior, &grid, &sampling, seed).unwrap();
        if !exact.eps_close(&est, epsilon).unwrap() {
            bad_runs += 1;
        }
    }
    let fraction = bad_runs as f64 / runs as f64;
    if fraction > epsilon {
        failures.push(format!(
            "{bad_runs}/{runs} runs had a cell off by ≥ {epsilon}"
        ));
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 60.0 {
        failures.push(format!("runtime {elapsed:?} exceeded 60 s"));
    }
    verdict("06 estimation accuracy", &failures);
}

// ---------------------------------------------------------------------------
// 7. Unbiased payment sampler
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_payment_sampler() {
    let mut failures = Vec::new();
    let draws = 100_000usize;
    let mut gen = Stream::keyed(2024, tag::PAYMENT, &[999]);

    for case in 0..20u64 {
        // random monotone step curve over a random grid
        let cells = 4 + (gen.next_index(9)) as usize;
        let delta = [0.25, 0.5][gen.next_index(2) as usize];
        let mut values: Vec<f64> = (0..cells).map(|_| gen.next_f64()).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut with_zero = vec![values[0] * gen.next_f64()];
        with_zero.extend(values);
        let curve = InterimCurve {
            grid: Grid::new(delta, cells).unwrap(),
            agents: vec![AgentCurve {
                observed: vec![true; with_zero.len()],
                values: with_zero,
            }],
            provenance: CurveProvenance::Exact,
        };
        let top = curve.grid.top();
        let t = gen.next_f64() * top * 0.8;
        let v = t + gen.next_f64() * (top - t);

        let closed = truncated_interim_payment(&curve, 0, v, t).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut negative = 0usize;
        let mut rng = Stream::keyed(2024, tag::PAYMENT, &[case]);
        for _ in 0..draws {
            let p = sampled_payment(&curve, 0, v, t, &mut rng).unwrap();
            if p < 0.0 {
                negative += 1;
            }
            sum += p;
            sum_sq += p * p;
        }
        let mean = sum / draws as f64;
        let var = (sum_sq / draws as f64 - mean * mean).max(0.0);
        let se = (var / draws as f64).sqrt();
        if negative > 0 {
            failures.push(format!("case {case}: {negative} negative draws"));
        }
        // 4 standard errors, with an absolute floor covering summation
        // round-off when the estimator has zero variance
        if (mean - closed).abs() > 4.0 * se + 1e-9 {
            failures.push(format!(
                "case {case}: sampled mean {mean} vs closed form {closed} (se {se})"
            ));
        }
    }
    verdict("07 payment sampler", &failures);
}

// ---------------------------------------------------------------------------
// 8. Equal-revenue lower-bound experiment at scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_lower_bound_experiment() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let h = 16.0;
    let n = 1024;
    let samples = 100_000;

    let report =
        lower_bound_experiment(h, n, &LowerBoundConfig::default(), samples, 2024).unwrap();
    let target = h.ln() / 4.0;
    let value = report.measured["expected_value"];
    if (value - target).abs() > 0.05 * target {
        failures.push(format!("E[V] = {value}, target {target} ± 5%"));
    }
    if report.measured["baseline_social_cost"] != 1.0 {
        failures.push(format!(
            "serve-all baseline SC = {}, expected exactly 1",
            report.measured["baseline_social_cost"]
        ));
    }
    let floor = (h.ln() - 2.0 * (h / n as f64).sqrt()) / 8.0;
    let mech_sc = report.measured["mechanism_social_cost"];
    if mech_sc < floor {
        failures.push(format!("mechanism SC {mech_sc} fell below the floor {floor}"));
    }
    if !report.pass {
        failures.push(format!("report failed: {:?}", report.details));
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 120.0 {
        failures.push(format!("runtime {elapsed:?} exceeded 120 s"));
    }
    println!(
        "  (E[V] = {value:.4}, mechanism SC = {mech_sc:.4}, floor = {floor:.4}, {elapsed:?})"
    );
    verdict("08 lower-bound experiment", &failures);
}

// ---------------------------------------------------------------------------
// 9. Harmonic suffix-share inequality
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_harmonic_inequality() {
    let mut failures = Vec::new();
    let mut gen = Stream::keyed(9, tag::LOWER_BOUND, &[9]);
    let vectors = 100_000usize;
    let mut violations = 0usize;
    for _ in 0..vectors {
        let k = 1 + gen.next_index(50) as usize;
        let a: Vec<f64> = (0..k).map(|_| 1.0 + 9.0 * gen.next_f64()).collect();
        let (lhs, bound, pass) = harmonic_inequality(&a).unwrap();
        if !pass {
            violations += 1;
            if violations <= 3 {
                failures.push(format!("lhs {lhs} > bound {bound} for k = {k}"));
            }
        }
    }
    if violations > 0 {
        failures.push(format!("{violations} violations in {vectors} vectors"));
    }
    verdict("09 harmonic inequality", &failures);
}

// ---------------------------------------------------------------------------
// 10. Byte-identical reruns across worker counts
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_determinism() {
    let mut failures = Vec::new();
    let bin = env!("CARGO_BIN_EXE_costrec");
    let work = tempfile::tempdir().unwrap();
    let config_path = work.path().join("det.toml");
    std::fs::write(
        &config_path,
        r#"
seed = 11

[instance]
agents = 3

[instance.prior]
family = "uniform"
lo = 1.0
hi = 4.0

[instance.cost]
family = "public_excludable"
constant = 2.0

[instance.algorithm]
kind = "serve_all"

[reduction]
choice = "combined"
delta = 0.5

[mode]
kind = "sampled"
epsilon = 0.15
curve_samples = 500
row_samples = 20000
sc_samples = 20000
"#,
    )
    .unwrap();

    let run = |jobs: &str, out: &std::path::Path| {
        let status = std::process::Command::new(bin)
            .args(["run", "--config"])
            .arg(&config_path)
            .arg("--out-dir")
            .arg(out)
            .args(["--jobs", jobs])
            .env_remove("COSTREC_JOBS")
            .status()
            .unwrap();
        assert!(status.success(), "run with --jobs {jobs} failed");
    };

    let out1 = work.path().join("jobs1");
    let out1b = work.path().join("jobs1b");
    let out4 = work.path().join("jobs4");
    run("1", &out1);
    run("1", &out1b);
    run("4", &out4);

    for name in ["run_schedule.csv", "run_summary.txt"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out1b.join(name)).unwrap();
        let c = std::fs::read(out4.join(name)).unwrap();
        if a != b {
            failures.push(format!("{name}: rerun with the same flags differs"));
        }
        if a != c {
            failures.push(format!("{name}: --jobs 4 differs from --jobs 1"));
        }
        if a.iter().any(|&byte| byte == b'\r') {
            failures.push(format!("{name}: contains CR bytes"));
        }
    }
    verdict("10 determinism across worker counts", &failures);
}
