//! Allocation algorithms: black boxes mapping a valuation profile to a served
//! set, with optional structural declarations the reductions can rely on.
//!
//! The reductions never inspect an algorithm's internals. What they may use:
//!
//! * [`AllocationAlgorithm::run`] — one (possibly randomized) evaluation;
//! * [`AllocationAlgorithm::outcome_distribution`] — the exact finite
//!   distribution over served sets, when the algorithm can enumerate its own
//!   randomness (deterministic algorithms get this for free). Exact-mode
//!   evaluation requires it;
//! * declared flags: `claims_monotone` (serving is monotone in the agent's
//!   own value, i.e. the rule is implementable truthfully),
//!   `claims_no_bossy` (an agent whose service status is unchanged cannot
//!   alter the rest of the served set), and `is_symmetric` (the rule
//!   commutes with agent permutations, letting estimators share one curve
//!   across i.i.d. agents).
//!
//! Flags are promises made by the implementor; the audit module has
//! enumeration checks to validate them on small grids.

use crate::model::{
    social_cost, CostFunction, ServiceOutcome, ValuationProfile, MAX_TABLE_AGENTS,
};
use crate::rng::Stream;
use std::sync::Arc;

pub trait AllocationAlgorithm: Send + Sync {
    /// Serve a set of agents for the reported profile. Deterministic
    /// algorithms must ignore `rng`.
    fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> ServiceOutcome;

    fn is_deterministic(&self) -> bool {
        true
    }

    /// Finite distribution over served sets at `v`, for exact evaluation.
    /// `None` means the randomness cannot be enumerated.
    fn outcome_distribution(&self, v: &ValuationProfile) -> Option<Vec<(ServiceOutcome, f64)>> {
        if self.is_deterministic() {
            Some(vec![(self.run(v, &mut Stream::unused()), 1.0)])
        } else {
            None
        }
    }

    /// Raising an agent's report never drops them from the served set.
    fn claims_monotone(&self) -> bool {
        false
    }

    /// An agent served under two different own-reports sees the same served
    /// set both times.
    fn claims_no_bossy(&self) -> bool {
        false
    }

    /// Permuting agents permutes the served set accordingly.
    fn is_symmetric(&self) -> bool {
        false
    }

    fn name(&self) -> String;
}

/// Serve everyone, always.
#[derive(Debug, Clone, Default)]
pub struct ServeAll;

impl AllocationAlgorithm for ServeAll {
    fn run(&self, v: &ValuationProfile, _rng: &mut Stream) -> ServiceOutcome {
        ServiceOutcome::all(v.len())
    }
    fn claims_monotone(&self) -> bool {
        true
    }
    fn claims_no_bossy(&self) -> bool {
        true
    }
    fn is_symmetric(&self) -> bool {
        true
    }
    fn name(&self) -> String {
        "serve_all".into()
    }
}

/// Serve nobody, always.
#[derive(Debug, Clone, Default)]
pub struct ServeNone;

impl AllocationAlgorithm for ServeNone {
    fn run(&self, _v: &ValuationProfile, _rng: &mut Stream) -> ServiceOutcome {
        ServiceOutcome::empty()
    }
    fn claims_monotone(&self) -> bool {
        true
    }
    fn claims_no_bossy(&self) -> bool {
        true
    }
    fn is_symmetric(&self) -> bool {
        true
    }
    fn name(&self) -> String {
        "serve_none".into()
    }
}

/// Serve exactly the highest-value agent, breaking ties toward the lowest
/// index.
#[derive(Debug, Clone, Default)]
pub struct ServeArgmax;

impl AllocationAlgorithm for ServeArgmax {
    fn run(&self, v: &ValuationProfile, _rng: &mut Stream) -> ServiceOutcome {
        let mut best = 0usize;
        for i in 1..v.len() {
            if v.value(i) > v.value(best) {
                best = i;
            }
        }
        ServiceOutcome::from_indices(vec![best])
    }
    fn claims_monotone(&self) -> bool {
        true
    }
    // If the winner stays the winner, the served set is {winner} both times.
    fn claims_no_bossy(&self) -> bool {
        true
    }
    fn name(&self) -> String {
        "argmax".into()
    }
}

/// Serve every agent whose value clears a fixed bar.
#[derive(Debug, Clone)]
pub struct FixedThreshold {
    pub threshold: f64,
}

impl AllocationAlgorithm for FixedThreshold {
    fn run(&self, v: &ValuationProfile, _rng: &mut Stream) -> ServiceOutcome {
        ServiceOutcome::from_indices(
            (0..v.len()).filter(|&i| v.value(i) >= self.threshold).collect(),
        )
    }
    fn claims_monotone(&self) -> bool {
        true
    }
    fn claims_no_bossy(&self) -> bool {
        true
    }
    fn is_symmetric(&self) -> bool {
        true
    }
    fn name(&self) -> String {
        format!("threshold({})", self.threshold)
    }
}

/// Brute-force social-cost minimizer: serve the subset minimizing
/// `C(S) + Σ_{i∉S} v_i`, breaking ties toward the smallest bitmask.
///
/// Raising `v_i` leaves the score of every set containing `i` unchanged and
/// raises all others, so the rule is monotone; and when `i` is served under
/// both reports the minimizing sets containing `i` are identical, so it is
/// also non-bossy.
#[derive(Debug, Clone)]
pub struct MinimizeSocialCost {
    pub cost: CostFunction,
}

impl AllocationAlgorithm for MinimizeSocialCost {
    fn run(&self, v: &ValuationProfile, _rng: &mut Stream) -> ServiceOutcome {
        let n = v.len();
        assert!(
            n <= MAX_TABLE_AGENTS,
            "exhaustive minimization is capped at {MAX_TABLE_AGENTS} agents"
        );
        let mut best_mask = 0usize;
        let mut best_score = f64::INFINITY;
        for mask in 0..(1usize << n) {
            let s = ServiceOutcome::from_mask(mask, n);
            let score = social_cost(&s, v, &self.cost);
            if score < best_score {
                best_score = score;
                best_mask = mask;
            }
        }
        ServiceOutcome::from_mask(best_mask, n)
    }
    fn claims_monotone(&self) -> bool {
        true
    }
    fn claims_no_bossy(&self) -> bool {
        true
    }
    fn name(&self) -> String {
        "min_social_cost".into()
    }
}

/// Finite mixture over sub-algorithms; the canonical example of enumerable
/// internal randomness.
pub struct FiniteMixture {
    options: Vec<(Arc<dyn AllocationAlgorithm>, f64)>,
    label: String,
}

impl FiniteMixture {
    pub fn new(options: Vec<(Arc<dyn AllocationAlgorithm>, f64)>) -> Self {
        debug_assert!(!options.is_empty());
        debug_assert!((options.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-9);
        let label = format!(
            "mix({})",
            options
                .iter()
                .map(|(a, p)| format!("{}:{p}", a.name()))
                .collect::<Vec<_>>()
                .join(",")
        );
        FiniteMixture { options, label }
    }
}

impl AllocationAlgorithm for FiniteMixture {
    fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> ServiceOutcome {
        let u = rng.next_f64();
        let mut acc = 0.0;
        for (alg, p) in &self.options {
            acc += p;
            if u < acc {
                return alg.run(v, rng);
            }
        }
        self.options.last().unwrap().0.run(v, rng)
    }
    fn is_deterministic(&self) -> bool {
        false
    }
    fn outcome_distribution(&self, v: &ValuationProfile) -> Option<Vec<(ServiceOutcome, f64)>> {
        let mut out = Vec::new();
        for (alg, p) in &self.options {
            for (s, q) in alg.outcome_distribution(v)? {
                out.push((s, p * q));
            }
        }
        Some(out)
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

/// Closure-backed algorithm for tests and fixtures.
pub struct FnAlgorithm<F> {
    f: F,
    label: String,
    monotone: bool,
    no_bossy: bool,
    symmetric: bool,
}

impl<F> FnAlgorithm<F>
where
    F: Fn(&ValuationProfile) -> ServiceOutcome + Send + Sync,
{
    pub fn new(label: &str, f: F) -> Self {
        FnAlgorithm {
            f,
            label: label.to_string(),
            monotone: false,
            no_bossy: false,
            symmetric: false,
        }
    }

    pub fn monotone(mut self, yes: bool) -> Self {
        self.monotone = yes;
        self
    }

    pub fn no_bossy(mut self, yes: bool) -> Self {
        self.no_bossy = yes;
        self
    }

    pub fn symmetric(mut self, yes: bool) -> Self {
        self.symmetric = yes;
        self
    }
}

impl<F> AllocationAlgorithm for FnAlgorithm<F>
where
    F: Fn(&ValuationProfile) -> ServiceOutcome + Send + Sync,
{
    fn run(&self, v: &ValuationProfile, _rng: &mut Stream) -> ServiceOutcome {
        (self.f)(v)
    }
    fn claims_monotone(&self) -> bool {
        self.monotone
    }
    fn claims_no_bossy(&self) -> bool {
        self.no_bossy
    }
    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}
