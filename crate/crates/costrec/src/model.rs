//! Instance model: valuation profiles, served sets, value distributions,
//! product priors, and cost functions.
//!
//! Conventions used throughout the crate:
//!
//! * agents are indexed `0..n`;
//! * values are nonnegative finite `f64`s;
//! * the *social cost* of serving `S` under profile `v` is
//!   `C(S) + Σ_{i ∉ S} v_i` (service cost plus excluded value), and the
//!   *social welfare* is `Σ_{i ∈ S} v_i`, so the two always add up to
//!   `C(S) + Σ_i v_i`;
//! * discrete supports are enumerated in lexicographic order (agent 0
//!   outermost, atoms ascending), which keeps every exact computation
//!   deterministic.

use crate::error::{Error, Result};
use crate::rng::Stream;
use serde::{Deserialize, Serialize};

/// Hard ceiling on agents for bitmask-indexed cost tables.
pub const MAX_TABLE_AGENTS: usize = 20;

/// Default cap on the number of profiles exact enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

fn ensure_finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidInstance(format!("{what} must be finite, got {x}")))
    }
}

// ---------------------------------------------------------------------------
// Valuation profiles and served sets
// ---------------------------------------------------------------------------

/// One reported value per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationProfile(Vec<f64>);

impl ValuationProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            ensure_finite(v, "value")?;
            if v < 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "value of agent {i} is negative: {v}"
                )));
            }
        }
        Ok(ValuationProfile(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn value(&self, agent: usize) -> f64 {
        self.0[agent]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn total_value(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Copy of the profile with agent `i`'s value replaced — the basic move
    /// in every deviation scan.
    pub fn with_value(&self, agent: usize, value: f64) -> Self {
        let mut v = self.0.clone();
        v[agent] = value;
        ValuationProfile(v)
    }
}

/// A served set, stored as strictly increasing agent indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ServiceOutcome {
    served: Vec<usize>,
}

impl ServiceOutcome {
    pub fn empty() -> Self {
        ServiceOutcome { served: Vec::new() }
    }

    pub fn all(n: usize) -> Self {
        ServiceOutcome {
            served: (0..n).collect(),
        }
    }

    /// Build from arbitrary indices; sorts and deduplicates.
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        ServiceOutcome { served: indices }
    }

    pub fn contains(&self, agent: usize) -> bool {
        self.served.binary_search(&agent).is_ok()
    }

    pub fn len(&self) -> usize {
        self.served.len()
    }

    pub fn is_empty(&self) -> bool {
        self.served.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.served.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.served
    }

    /// Bitmask over `n` agents (table-indexed cost functions).
    pub fn mask(&self, n: usize) -> usize {
        debug_assert!(n <= MAX_TABLE_AGENTS);
        self.served.iter().fold(0usize, |m, &i| {
            debug_assert!(i < n);
            m | (1 << i)
        })
    }

    pub fn from_mask(mask: usize, n: usize) -> Self {
        ServiceOutcome {
            served: (0..n).filter(|i| mask & (1 << i) != 0).collect(),
        }
    }

    /// Members of `self` whose value in `v` passes `keep`.
    pub fn filtered(&self, keep: impl Fn(usize) -> bool) -> Self {
        ServiceOutcome {
            served: self.served.iter().copied().filter(|&i| keep(i)).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &ServiceOutcome) -> bool {
        self.served.iter().all(|&i| other.contains(i))
    }
}

/// Sum of values of agents outside `s` — the exclusion term of social cost.
pub fn excluded_value(s: &ServiceOutcome, v: &ValuationProfile) -> f64 {
    let mut inside = s.as_slice().iter().peekable();
    let mut total = 0.0;
    for (i, &vi) in v.values().iter().enumerate() {
        if inside.peek() == Some(&&i) {
            inside.next();
        } else {
            total += vi;
        }
    }
    total
}

/// Social cost `C(S) + Σ_{i ∉ S} v_i`.
pub fn social_cost(s: &ServiceOutcome, v: &ValuationProfile, cost: &CostFunction) -> f64 {
    cost.cost(s) + excluded_value(s, v)
}

/// Social welfare `Σ_{i ∈ S} v_i`.
pub fn social_welfare(s: &ServiceOutcome, v: &ValuationProfile) -> f64 {
    s.iter().map(|i| v.value(i)).sum()
}

/// Served set plus per-agent payments, as produced by a mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismResult {
    pub served: ServiceOutcome,
    pub payments: Vec<f64>,
}

impl MechanismResult {
    pub fn new(served: ServiceOutcome, payments: Vec<f64>) -> Self {
        debug_assert!(payments.iter().all(|p| p.is_finite() && *p >= 0.0));
        debug_assert!((0..payments.len()).all(|i| served.contains(i) || payments[i] == 0.0));
        MechanismResult { served, payments }
    }

    pub fn nobody(n: usize) -> Self {
        MechanismResult {
            served: ServiceOutcome::empty(),
            payments: vec![0.0; n],
        }
    }

    pub fn total_payment(&self) -> f64 {
        self.payments.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// Value distributions
// ---------------------------------------------------------------------------

/// Marginal distribution of one agent's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValueDistribution {
    /// Finite support: `(value, probability)` pairs, values strictly
    /// increasing, probabilities summing to one.
    DiscreteAtoms { atoms: Vec<(f64, f64)> },
    /// Uniform density on `[lo, hi]`.
    UniformContinuous { lo: f64, hi: f64 },
    /// Scaled equal-revenue distribution: an atom of mass `1/h` at zero and
    /// density `z^-2` on `z ∈ [1, h]` (in units of `scale`), so every posted
    /// price in `[scale, scale·h]` extracts the same expected revenue.
    EqualRevenue { h: f64, scale: f64 },
}

impl ValueDistribution {
    pub fn atoms(values: &[(f64, f64)]) -> Result<Self> {
        let d = ValueDistribution::DiscreteAtoms {
            atoms: values.to_vec(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = ValueDistribution::UniformContinuous { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn equal_revenue(h: f64, scale: f64) -> Result<Self> {
        let d = ValueDistribution::EqualRevenue { h, scale };
        d.validate()?;
        Ok(d)
    }

    /// Two-point shorthand used all over the tests.
    pub fn two_point(lo: f64, p_lo: f64, hi: f64) -> Result<Self> {
        Self::atoms(&[(lo, p_lo), (hi, 1.0 - p_lo)])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ValueDistribution::DiscreteAtoms { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidInstance("atom list is empty".into()));
                }
                let mut total = 0.0;
                for (k, &(v, p)) in atoms.iter().enumerate() {
                    ensure_finite(v, "atom value")?;
                    ensure_finite(p, "atom probability")?;
                    if v < 0.0 {
                        return Err(Error::InvalidInstance(format!("atom value {v} is negative")));
                    }
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidInstance(format!(
                            "atom probability {p} is outside [0, 1]"
                        )));
                    }
                    if k > 0 && v <= atoms[k - 1].0 {
                        return Err(Error::InvalidInstance(
                            "atom values must be strictly increasing".into(),
                        ));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInstance(format!(
                        "atom probabilities sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            ValueDistribution::UniformContinuous { lo, hi } => {
                ensure_finite(*lo, "uniform lo")?;
                ensure_finite(*hi, "uniform hi")?;
                if *lo < 0.0 || hi <= lo {
                    return Err(Error::InvalidInstance(format!(
                        "uniform support [{lo}, {hi}] must satisfy 0 <= lo < hi"
                    )));
                }
                Ok(())
            }
            ValueDistribution::EqualRevenue { h, scale } => {
                ensure_finite(*h, "equal-revenue h")?;
                ensure_finite(*scale, "equal-revenue scale")?;
                if *h <= 1.0 {
                    return Err(Error::InvalidInstance(format!(
                        "equal-revenue spread h must exceed 1, got {h}"
                    )));
                }
                if *scale <= 0.0 {
                    return Err(Error::InvalidInstance(format!(
                        "equal-revenue scale must be positive, got {scale}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ValueDistribution::DiscreteAtoms { .. })
    }

    /// Finite atom list, if discrete.
    pub fn atom_list(&self) -> Option<&[(f64, f64)]> {
        match self {
            ValueDistribution::DiscreteAtoms { atoms } => Some(atoms),
            _ => None,
        }
    }

    /// Supremum of the support.
    pub fn max_value(&self) -> f64 {
        match self {
            ValueDistribution::DiscreteAtoms { atoms } => atoms.last().unwrap().0,
            ValueDistribution::UniformContinuous { hi, .. } => *hi,
            ValueDistribution::EqualRevenue { h, scale } => h * scale,
        }
    }

    /// Infimum of the *nonzero* support; `None` when the distribution never
    /// takes a positive value. Zero means positive values get arbitrarily
    /// close to zero, which no price floor can handle.
    pub fn min_nonzero(&self) -> Option<f64> {
        match self {
            ValueDistribution::DiscreteAtoms { atoms } => {
                atoms.iter().find(|(v, _)| *v > 0.0).map(|(v, _)| *v)
            }
            ValueDistribution::UniformContinuous { lo, .. } => Some(*lo),
            ValueDistribution::EqualRevenue { scale, .. } => Some(*scale),
        }
    }

    /// Probability of the atom at exactly zero.
    pub fn mass_at_zero(&self) -> f64 {
        match self {
            ValueDistribution::DiscreteAtoms { atoms } => atoms
                .iter()
                .take_while(|(v, _)| *v <= 0.0)
                .map(|(_, p)| *p)
                .sum(),
            ValueDistribution::UniformContinuous { .. } => 0.0,
            ValueDistribution::EqualRevenue { h, .. } => 1.0 / h,
        }
    }

    /// `P(V <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ValueDistribution::DiscreteAtoms { atoms } => atoms
                .iter()
                .take_while(|(v, _)| *v <= x)
                .map(|(_, p)| *p)
                .sum(),
            ValueDistribution::UniformContinuous { lo, hi } => {
                ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
            ValueDistribution::EqualRevenue { h, scale } => {
                if x < 0.0 {
                    0.0
                } else if x < *scale {
                    1.0 / h
                } else if x < h * scale {
                    1.0 / h + 1.0 - scale / x
                } else {
                    1.0
                }
            }
        }
    }

    /// Probability of the half-open interval `(lo, hi]`.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo < hi);
        match self {
            ValueDistribution::DiscreteAtoms { atoms } => atoms
                .iter()
                .filter(|(v, _)| *v > lo && *v <= hi)
                .map(|(_, p)| *p)
                .sum(),
            _ => (self.cdf(hi) - self.cdf(lo)).max(0.0),
        }
    }

    /// Expected value (analytic).
    pub fn mean(&self) -> f64 {
        match self {
            ValueDistribution::DiscreteAtoms { atoms } => {
                atoms.iter().map(|(v, p)| v * p).sum()
            }
            ValueDistribution::UniformContinuous { lo, hi } => 0.5 * (lo + hi),
            // atom at zero contributes nothing; ∫_1^h z · z^-2 dz = ln h
            ValueDistribution::EqualRevenue { h, scale } => scale * h.ln(),
        }
    }

    /// Draw one value.
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match self {
            ValueDistribution::DiscreteAtoms { atoms } => {
                let u = rng.next_f64();
                let mut acc = 0.0;
                for &(v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                atoms.last().unwrap().0
            }
            ValueDistribution::UniformContinuous { lo, hi } => rng.next_range(*lo, *hi),
            ValueDistribution::EqualRevenue { h, scale } => {
                let u = rng.next_f64();
                if u < 1.0 / h {
                    0.0
                } else {
                    // inverse of u = 1/h + 1 - 1/z on z ∈ [1, h]
                    scale / (1.0 + 1.0 / h - u)
                }
            }
        }
    }

    /// Draw one value conditional on landing in `(lo, hi]`.
    ///
    /// `agent` is only used to label the error when the interval carries no
    /// mass.
    pub fn conditional_sample(&self, lo: f64, hi: f64, agent: usize, rng: &mut Stream) -> Result<f64> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi <= lo {
            return Err(Error::InvalidInstance(format!(
                "conditioning interval ({lo}, {hi}] is malformed"
            )));
        }
        let fail = || Error::ZeroMassInterval { agent, lo, hi };
        match self {
            ValueDistribution::DiscreteAtoms { atoms } => {
                let inside: Vec<(f64, f64)> = atoms
                    .iter()
                    .copied()
                    .filter(|(v, _)| *v > lo && *v <= hi)
                    .collect();
                let total: f64 = inside.iter().map(|(_, p)| p).sum();
                if total <= 0.0 {
                    return Err(fail());
                }
                let u = rng.next_f64() * total;
                let mut acc = 0.0;
                for &(v, p) in &inside {
                    acc += p;
                    if u < acc {
                        return Ok(v);
                    }
                }
                Ok(inside.last().unwrap().0)
            }
            ValueDistribution::UniformContinuous { lo: a, hi: b } => {
                let l = lo.max(*a);
                let r = hi.min(*b);
                if r <= l {
                    return Err(fail());
                }
                Ok(rng.next_range(l, r))
            }
            ValueDistribution::EqualRevenue { h, scale } => {
                // (lo, hi] with lo >= 0 never contains the zero atom, so only
                // the continuous part [scale, scale·h] matters.
                let zl = (lo / scale).max(1.0);
                let zr = (hi / scale).min(*h);
                if zr <= zl {
                    return Err(fail());
                }
                let mass = 1.0 / zl - 1.0 / zr;
                let u = rng.next_f64();
                Ok(scale / (1.0 / zl - u * mass))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Product priors
// ---------------------------------------------------------------------------

/// Independent per-agent value distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPrior {
    dists: Vec<ValueDistribution>,
}

impl ProductPrior {
    pub fn new(dists: Vec<ValueDistribution>) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::InvalidInstance("prior has no agents".into()));
        }
        for d in &dists {
            d.validate()?;
            if let Some(m) = d.min_nonzero() {
                if m <= 0.0 {
                    return Err(Error::InvalidInstance(
                        "a marginal has positive values arbitrarily close to zero; \
                         price floors need a positive minimum nonzero value"
                            .into(),
                    ));
                }
            }
        }
        if dists.iter().all(|d| d.min_nonzero().is_none()) {
            return Err(Error::InvalidInstance(
                "every marginal is identically zero".into(),
            ));
        }
        Ok(ProductPrior { dists })
    }

    /// `n` i.i.d. agents.
    pub fn iid(dist: ValueDistribution, n: usize) -> Result<Self> {
        Self::new(vec![dist; n])
    }

    pub fn n(&self) -> usize {
        self.dists.len()
    }

    pub fn marginal(&self, agent: usize) -> &ValueDistribution {
        &self.dists[agent]
    }

    pub fn marginals(&self) -> &[ValueDistribution] {
        &self.dists
    }

    pub fn is_discrete(&self) -> bool {
        self.dists.iter().all(|d| d.is_discrete())
    }

    pub fn is_iid(&self) -> bool {
        self.dists.windows(2).all(|w| w[0] == w[1])
    }

    /// Largest support value across agents.
    pub fn v_max(&self) -> f64 {
        self.dists
            .iter()
            .map(|d| d.max_value())
            .fold(0.0, f64::max)
    }

    /// Smallest nonzero support value across agents (ignoring identically
    /// zero marginals, which are allowed).
    pub fn v_min(&self) -> f64 {
        self.dists
            .iter()
            .filter_map(|d| d.min_nonzero())
            .fold(f64::INFINITY, f64::min)
    }

    /// Value spread `h = v_max / v_min ≥ 1`.
    pub fn spread(&self) -> f64 {
        self.v_max() / self.v_min()
    }

    pub fn sample_profile(&self, rng: &mut Stream) -> ValuationProfile {
        ValuationProfile(self.dists.iter().map(|d| d.sample(rng)).collect())
    }

    /// Full joint support as `(profile, probability)` pairs, or an error if
    /// any marginal is continuous or the product exceeds `cap`.
    pub fn enumerate_support(&self, cap: u128) -> Result<Vec<(ValuationProfile, f64)>> {
        let mut atom_lists = Vec::with_capacity(self.n());
        for (i, d) in self.dists.iter().enumerate() {
            match d.atom_list() {
                Some(atoms) => atom_lists.push(atoms),
                None => return Err(Error::NotDiscrete { agent: i }),
            }
        }
        let mut needed: u128 = 1;
        for atoms in &atom_lists {
            needed = needed.saturating_mul(atoms.len() as u128);
            if needed > cap {
                return Err(Error::SupportTooLarge { needed, cap });
            }
        }
        let mut out = Vec::with_capacity(needed as usize);
        let n = self.n();
        let mut idx = vec![0usize; n];
        loop {
            let mut values = Vec::with_capacity(n);
            let mut prob = 1.0;
            for (i, atoms) in atom_lists.iter().enumerate() {
                let (v, p) = atoms[idx[i]];
                values.push(v);
                prob *= p;
            }
            out.push((ValuationProfile(values), prob));
            // odometer increment, last agent fastest
            let mut i = n;
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < atom_lists[i].len() {
                    break;
                }
                idx[i] = 0;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Cost functions
// ---------------------------------------------------------------------------

/// Cost of serving a set of agents. `C(∅) = 0` always.
#[derive(Debug, Clone, PartialEq)]
pub enum CostFunction {
    /// Fixed cost for serving anyone at all.
    PublicExcludable { c: f64 },
    /// Independent per-agent service costs.
    Additive { per_agent: Vec<f64> },
    /// Cost depends only on how many agents are served: `by_size[|S|]`.
    CardinalityBased { by_size: Vec<f64> },
    /// Arbitrary table indexed by served-set bitmask (`n ≤ 20`).
    ExplicitTable { n: usize, costs: Vec<f64> },
}

impl CostFunction {
    pub fn public_excludable(c: f64) -> Result<Self> {
        ensure_finite(c, "service cost")?;
        if c < 0.0 {
            return Err(Error::InvalidInstance(format!("service cost {c} is negative")));
        }
        Ok(CostFunction::PublicExcludable { c })
    }

    pub fn additive(per_agent: Vec<f64>) -> Result<Self> {
        for &c in &per_agent {
            ensure_finite(c, "per-agent cost")?;
            if c < 0.0 {
                return Err(Error::InvalidInstance(format!("per-agent cost {c} is negative")));
            }
        }
        Ok(CostFunction::Additive { per_agent })
    }

    /// `by_size` has one entry per cardinality `0..=n` and must start at 0.
    pub fn cardinality_based(by_size: Vec<f64>) -> Result<Self> {
        if by_size.is_empty() || by_size[0] != 0.0 {
            return Err(Error::InvalidInstance(
                "cardinality cost table must start with cost 0 for the empty set".into(),
            ));
        }
        for &c in &by_size {
            ensure_finite(c, "cardinality cost")?;
            if c < 0.0 {
                return Err(Error::InvalidInstance(format!("cardinality cost {c} is negative")));
            }
        }
        Ok(CostFunction::CardinalityBased { by_size })
    }

    /// `costs[mask]` for every subset bitmask; `costs[0]` must be 0.
    pub fn explicit_table(n: usize, costs: Vec<f64>) -> Result<Self> {
        if n > MAX_TABLE_AGENTS {
            return Err(Error::InvalidInstance(format!(
                "explicit cost tables support at most {MAX_TABLE_AGENTS} agents, got {n}"
            )));
        }
        if costs.len() != 1usize << n {
            return Err(Error::InvalidInstance(format!(
                "explicit cost table needs {} entries for n = {n}, got {}",
                1usize << n,
                costs.len()
            )));
        }
        if costs[0] != 0.0 {
            return Err(Error::InvalidInstance("empty set must cost 0".into()));
        }
        for &c in &costs {
            ensure_finite(c, "table cost")?;
            if c < 0.0 {
                return Err(Error::InvalidInstance(format!("table cost {c} is negative")));
            }
        }
        Ok(CostFunction::ExplicitTable { n, costs })
    }

    /// Number of agents this cost function is pinned to, when the family
    /// fixes one.
    pub fn fixed_n(&self) -> Option<usize> {
        match self {
            CostFunction::PublicExcludable { .. } => None,
            CostFunction::Additive { per_agent } => Some(per_agent.len()),
            CostFunction::CardinalityBased { by_size } => Some(by_size.len() - 1),
            CostFunction::ExplicitTable { n, .. } => Some(*n),
        }
    }

    pub fn cost(&self, s: &ServiceOutcome) -> f64 {
        match self {
            CostFunction::PublicExcludable { c } => {
                if s.is_empty() {
                    0.0
                } else {
                    *c
                }
            }
            CostFunction::Additive { per_agent } => s.iter().map(|i| per_agent[i]).sum(),
            CostFunction::CardinalityBased { by_size } => by_size[s.len()],
            CostFunction::ExplicitTable { n, costs } => costs[s.mask(*n)],
        }
    }

    /// Check `S ⊆ T ⇒ C(S) ≤ C(T)` and report violations.
    ///
    /// Single-element augmentations suffice by transitivity, so the scan is
    /// `O(2^n · n)` in the worst (table) case. The parametric families reduce
    /// to closed-form parameter checks.
    pub fn check_monotone(&self, n: usize, max_violations: usize) -> MonotoneReport {
        let mut violations = Vec::new();
        match self {
            // c ≥ 0 and Σ c_i ≥ 0 are enforced at construction, so these two
            // families are monotone by construction.
            CostFunction::PublicExcludable { .. } | CostFunction::Additive { .. } => {}
            CostFunction::CardinalityBased { by_size } => {
                for k in 1..by_size.len() {
                    if by_size[k] < by_size[k - 1] {
                        violations.push(MonotoneViolation {
                            smaller: ServiceOutcome::all(k - 1),
                            larger: ServiceOutcome::all(k),
                            cost_smaller: by_size[k - 1],
                            cost_larger: by_size[k],
                        });
                        if violations.len() >= max_violations {
                            break;
                        }
                    }
                }
            }
            CostFunction::ExplicitTable { n: tn, costs } => {
                let tn = *tn;
                debug_assert_eq!(tn, n);
                'outer: for mask in 0..costs.len() {
                    for i in 0..tn {
                        if mask & (1 << i) != 0 {
                            continue;
                        }
                        let bigger = mask | (1 << i);
                        if costs[bigger] < costs[mask] {
                            violations.push(MonotoneViolation {
                                smaller: ServiceOutcome::from_mask(mask, tn),
                                larger: ServiceOutcome::from_mask(bigger, tn),
                                cost_smaller: costs[mask],
                                cost_larger: costs[bigger],
                            });
                            if violations.len() >= max_violations {
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
        MonotoneReport {
            monotone: violations.is_empty(),
            violations,
        }
    }
}

/// One `S ⊂ T` pair where the larger set is cheaper.
#[derive(Debug, Clone)]
pub struct MonotoneViolation {
    pub smaller: ServiceOutcome,
    pub larger: ServiceOutcome,
    pub cost_smaller: f64,
    pub cost_larger: f64,
}

#[derive(Debug, Clone)]
pub struct MonotoneReport {
    pub monotone: bool,
    pub violations: Vec<MonotoneViolation>,
}
