//! Per-profile (ex-post) cost-recovering reductions.
//!
//! These wrappers query the base algorithm once at the reported profile and
//! then decide, from that single outcome, whom to serve and at what uniform
//! price, recovering the service cost on every profile rather than only in
//! expectation:
//!
//! * [`reduce_zero_one`] — for 0/1 valuations: drop zero-value winners and
//!   serve the rest at price 1 exactly when their headcount covers the cost.
//!   Works for any base algorithm, randomized included.
//! * [`reduce_powers_of_two`] — for values in `[v_min, v_min·h]`: scan price
//!   levels `v_min·2^j` upward and serve the first level whose takers cover
//!   their own cost at that uniform price. Ex-post truthfulness of the
//!   result needs a deterministic base that is monotone (winners keep
//!   winning when they raise their value) and non-bossy (a winner's report
//!   cannot reshape the served set while they stay served), so construction
//!   refuses bases that do not claim both.
//! * [`reduce_support_list`] — same scan, but the price ladder is the known
//!   common support of the values; a finer ladder can stop earlier and
//!   charge less.
//!
//! [`check_no_bossy`] verifies the non-bossiness claim by enumeration on a
//! finite value grid.

use crate::algorithms::AllocationAlgorithm;
use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::model::{CostFunction, MechanismResult, ServiceOutcome, ValuationProfile};
use crate::rng::Stream;
use std::sync::Arc;

/// Tolerance for matching reported values against price levels and support
/// entries.
const VALUE_SNAP: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= VALUE_SNAP * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// 0/1 valuations
// ---------------------------------------------------------------------------

/// One pass of the 0/1 reduction on a single profile and base outcome.
pub fn zero_one_outcome(
    outcome: &ServiceOutcome,
    v: &ValuationProfile,
    cost: &CostFunction,
) -> MechanismResult {
    let kept = outcome.filtered(|i| close(v.value(i), 1.0));
    if cost.cost(&kept) <= kept.len() as f64 {
        let mut payments = vec![0.0; v.len()];
        for i in kept.iter() {
            payments[i] = 1.0;
        }
        MechanismResult::new(kept, payments)
    } else {
        MechanismResult::nobody(v.len())
    }
}

fn require_binary(v: &ValuationProfile) -> Result<()> {
    for (i, &x) in v.values().iter().enumerate() {
        if !(close(x, 0.0) || close(x, 1.0)) {
            return Err(Error::NonBinaryValuation { agent: i, value: x });
        }
    }
    Ok(())
}

/// Run the base algorithm on a 0/1 profile, drop zero-value winners, and
/// serve the remainder at price 1 exactly when their count covers the cost;
/// otherwise serve nobody and charge nothing.
pub fn reduce_zero_one(
    alg: &dyn AllocationAlgorithm,
    v: &ValuationProfile,
    cost: &CostFunction,
    rng: &mut Stream,
) -> Result<MechanismResult> {
    require_binary(v)?;
    Ok(zero_one_outcome(&alg.run(v, rng), v, cost))
}

/// The 0/1 reduction packaged as a mechanism.
pub struct ZeroOneMechanism {
    base: Arc<dyn AllocationAlgorithm>,
    cost: CostFunction,
    n: usize,
}

impl ZeroOneMechanism {
    /// Any base algorithm is acceptable, randomized included: the price-1
    /// rule is truthful for 0/1 values regardless of how the base behaves.
    pub fn new(base: Arc<dyn AllocationAlgorithm>, cost: CostFunction, n: usize) -> Self {
        ZeroOneMechanism { base, cost, n }
    }
}

impl Mechanism for ZeroOneMechanism {
    fn n(&self) -> usize {
        self.n
    }

    fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> Result<MechanismResult> {
        reduce_zero_one(self.base.as_ref(), v, &self.cost, rng)
    }

    fn result_distribution(&self, v: &ValuationProfile) -> Result<Vec<(MechanismResult, f64)>> {
        require_binary(v)?;
        let outcomes = self
            .base
            .outcome_distribution(v)
            .ok_or(Error::UnenumerableAlgorithm)?;
        Ok(outcomes
            .into_iter()
            .map(|(s, p)| (zero_one_outcome(&s, v, &self.cost), p))
            .collect())
    }

    fn name(&self) -> String {
        format!("zero_one({})", self.base.name())
    }
}

// ---------------------------------------------------------------------------
// Ascending uniform-price scans
// ---------------------------------------------------------------------------

/// Serve the first price level whose takers cover their cost: scan `levels`
/// in order, keep the base winners valued at or above each level, and stop
/// at the first level `t` with `t·|S_t| ≥ C(S_t)`. No passing level means
/// nobody is served or charged.
fn ascending_price_outcome(
    outcome: &ServiceOutcome,
    v: &ValuationProfile,
    cost: &CostFunction,
    levels: &[f64],
) -> MechanismResult {
    for &t in levels {
        let takers = outcome.filtered(|i| v.value(i) >= t - VALUE_SNAP * t.max(1.0));
        if t * takers.len() as f64 >= cost.cost(&takers) {
            let mut payments = vec![0.0; v.len()];
            for i in takers.iter() {
                payments[i] = t;
            }
            return MechanismResult::new(takers, payments);
        }
    }
    MechanismResult::nobody(v.len())
}

fn require_monotone_no_bossy(base: &dyn AllocationAlgorithm) -> Result<()> {
    if !base.is_deterministic() {
        return Err(Error::Incompatible(format!(
            "uniform-price scans need a deterministic base, {} is randomized",
            base.name()
        )));
    }
    if !base.claims_monotone() || !base.claims_no_bossy() {
        return Err(Error::Incompatible(format!(
            "uniform-price scans need a monotone, non-bossy base; {} does not claim both",
            base.name()
        )));
    }
    Ok(())
}

/// Price levels `v_min·2^j` for `j = 0 ..= ⌊log₂ h⌋`.
pub fn doubling_price_levels(v_min: f64, h: f64) -> Vec<f64> {
    (0..=crate::bic::floor_log2(h))
        .map(|j| v_min * (j as f64).exp2())
        .collect()
}

/// One-shot powers-of-two reduction on a single profile.
pub fn reduce_powers_of_two(
    base: &dyn AllocationAlgorithm,
    v: &ValuationProfile,
    cost: &CostFunction,
    v_min: f64,
    h: f64,
    rng: &mut Stream,
) -> Result<MechanismResult> {
    require_monotone_no_bossy(base)?;
    let levels = doubling_price_levels(v_min, h);
    Ok(ascending_price_outcome(&base.run(v, rng), v, cost, &levels))
}

/// The powers-of-two reduction packaged as a mechanism.
pub struct DoublingPriceMechanism {
    base: Arc<dyn AllocationAlgorithm>,
    cost: CostFunction,
    levels: Vec<f64>,
    n: usize,
}

impl DoublingPriceMechanism {
    pub fn new(
        base: Arc<dyn AllocationAlgorithm>,
        cost: CostFunction,
        v_min: f64,
        h: f64,
        n: usize,
    ) -> Result<Self> {
        require_monotone_no_bossy(base.as_ref())?;
        if !(v_min > 0.0) || !(h >= 1.0) {
            return Err(Error::InvalidInstance(format!(
                "price ladder needs v_min > 0 and h ≥ 1, got v_min={v_min}, h={h}"
            )));
        }
        Ok(DoublingPriceMechanism {
            base,
            cost,
            levels: doubling_price_levels(v_min, h),
            n,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

impl Mechanism for DoublingPriceMechanism {
    fn n(&self) -> usize {
        self.n
    }

    fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> Result<MechanismResult> {
        Ok(ascending_price_outcome(
            &self.base.run(v, rng),
            v,
            &self.cost,
            &self.levels,
        ))
    }

    fn result_distribution(&self, v: &ValuationProfile) -> Result<Vec<(MechanismResult, f64)>> {
        let outcomes = self
            .base
            .outcome_distribution(v)
            .ok_or(Error::UnenumerableAlgorithm)?;
        Ok(outcomes
            .into_iter()
            .map(|(s, p)| (ascending_price_outcome(&s, v, &self.cost, &self.levels), p))
            .collect())
    }

    fn name(&self) -> String {
        format!("doubling_prices({})", self.base.name())
    }
}

// ---------------------------------------------------------------------------
// Known common support
// ---------------------------------------------------------------------------

/// A strictly increasing list of positive values every report must lie on.
#[derive(Debug, Clone)]
pub struct SupportList {
    values: Vec<f64>,
}

impl SupportList {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInstance("support list is empty".into()));
        }
        for (i, &x) in values.iter().enumerate() {
            if !x.is_finite() || x <= 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "support entry {i} must be positive and finite, got {x}"
                )));
            }
            if i > 0 && x <= values[i - 1] {
                return Err(Error::InvalidInstance(format!(
                    "support must be strictly increasing, entry {i} is {x} after {}",
                    values[i - 1]
                )));
            }
        }
        Ok(SupportList { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn contains(&self, x: f64) -> bool {
        self.values.iter().any(|&s| close(s, x))
    }
}

fn require_on_support(v: &ValuationProfile, support: &SupportList) -> Result<()> {
    for (i, &x) in v.values().iter().enumerate() {
        if !support.contains(x) {
            return Err(Error::ValueOutsideSupport { agent: i, value: x });
        }
    }
    Ok(())
}

/// One-shot support-ladder reduction on a single profile: every report must
/// lie on the support; the price scan walks the support ascending.
pub fn reduce_support_list(
    base: &dyn AllocationAlgorithm,
    v: &ValuationProfile,
    cost: &CostFunction,
    support: &SupportList,
    rng: &mut Stream,
) -> Result<MechanismResult> {
    require_monotone_no_bossy(base)?;
    require_on_support(v, support)?;
    Ok(ascending_price_outcome(
        &base.run(v, rng),
        v,
        cost,
        support.values(),
    ))
}

/// The support-ladder reduction packaged as a mechanism.
pub struct SupportPriceMechanism {
    base: Arc<dyn AllocationAlgorithm>,
    cost: CostFunction,
    support: SupportList,
    n: usize,
}

impl SupportPriceMechanism {
    pub fn new(
        base: Arc<dyn AllocationAlgorithm>,
        cost: CostFunction,
        support: SupportList,
        n: usize,
    ) -> Result<Self> {
        require_monotone_no_bossy(base.as_ref())?;
        Ok(SupportPriceMechanism {
            base,
            cost,
            support,
            n,
        })
    }
}

impl Mechanism for SupportPriceMechanism {
    fn n(&self) -> usize {
        self.n
    }

    fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> Result<MechanismResult> {
        require_on_support(v, &self.support)?;
        Ok(ascending_price_outcome(
            &self.base.run(v, rng),
            v,
            &self.cost,
            self.support.values(),
        ))
    }

    fn result_distribution(&self, v: &ValuationProfile) -> Result<Vec<(MechanismResult, f64)>> {
        require_on_support(v, &self.support)?;
        let outcomes = self
            .base
            .outcome_distribution(v)
            .ok_or(Error::UnenumerableAlgorithm)?;
        Ok(outcomes
            .into_iter()
            .map(|(s, p)| {
                (
                    ascending_price_outcome(&s, v, &self.cost, self.support.values()),
                    p,
                )
            })
            .collect())
    }

    fn name(&self) -> String {
        format!("support_prices({})", self.base.name())
    }
}

// ---------------------------------------------------------------------------
// Non-bossiness audit
// ---------------------------------------------------------------------------

/// A witness that one agent's report reshaped the served set while they
/// stayed served.
#[derive(Debug, Clone)]
pub struct BossyViolation {
    pub agent: usize,
    pub value: f64,
    pub alternative: f64,
    pub others: Vec<f64>,
    pub served: Vec<usize>,
    pub served_alternative: Vec<usize>,
}

/// Maximum number of violations retained in a report.
const MAX_VIOLATIONS: usize = 32;

/// Enumerate all `(agent, value, alternative, rest-of-profile)` quadruples
/// over per-agent value grids and collect every non-bossiness violation:
/// the agent is served under both reports but the served sets differ.
/// Requires a deterministic algorithm; `cap` bounds the number of base
/// evaluations.
pub fn check_no_bossy(
    alg: &dyn AllocationAlgorithm,
    grids: &[Vec<f64>],
    cap: u128,
) -> Result<Vec<BossyViolation>> {
    if !alg.is_deterministic() {
        return Err(Error::Incompatible(format!(
            "non-bossiness enumeration needs a deterministic algorithm, {} is randomized",
            alg.name()
        )));
    }
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

    let n = grids.len();
    let mut rng = Stream::unused();
    let mut violations = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let values: Vec<f64> = (0..n).map(|i| grids[i][idx[i]]).collect();
        let profile = ValuationProfile::new(values.clone())?;
        let served = alg.run(&profile, &mut rng);
        for i in 0..n {
            if !served.contains(i) {
                continue;
            }
            for &alt in &grids[i] {
                if close(alt, values[i]) {
                    continue;
                }
                let deviated = profile.with_value(i, alt);
                let served_alt = alg.run(&deviated, &mut rng);
                if served_alt.contains(i) && served_alt != served {
                    violations.push(BossyViolation {
                        agent: i,
                        value: values[i],
                        alternative: alt,
                        others: values
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(_, &x)| x)
                            .collect(),
                        served: served.as_slice().to_vec(),
                        served_alternative: served_alt.as_slice().to_vec(),
                    });
                    if violations.len() >= MAX_VIOLATIONS {
                        return Ok(violations);
                    }
                }
            }
        }
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(violations);
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < grids[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
}
