//! Experiment configuration: strict TOML in, validated instances out.
//!
//! The format is human-edited, so parsing is deliberately unforgiving:
//! unknown keys are fatal everywhere (a typoed key silently reverting to a
//! default is the classic way to publish numbers from the wrong
//! experiment), every numeric field is range-checked with the field named
//! in the message, and exactly one of the mutually exclusive prior forms
//! must be present.
//!
//! A full config looks like:
//!
//! ```toml
//! seed = 42
//!
//! [instance]
//! agents = 2
//!
//! [instance.prior]            # i.i.d. across agents; or use
//! family = "two_point"        # [[instance.prior_per_agent]] tables
//! lo = 1.0
//! p_lo = 0.5
//! hi = 4.0
//!
//! [instance.cost]
//! family = "public_excludable"
//! constant = 3.0
//!
//! [instance.algorithm]
//! kind = "serve_all"
//!
//! [reduction]
//! choice = "log_h"            # log_n | combined | expost_01 | ...
//! delta = 0.5
//!
//! [mode]
//! kind = "exact"
//!
//! [output]
//! dir = "out"
//! ```

use crate::algorithms::{
    AllocationAlgorithm, FixedThreshold, MinimizeSocialCost, ServeAll, ServeArgmax, ServeNone,
};
use crate::bic::{EvalMode, PaymentRule, ReducedMechanism, SelectionRule, ThresholdSchedule};
use crate::error::{Error, Result};
use crate::expost::{DoublingPriceMechanism, SupportList, SupportPriceMechanism, ZeroOneMechanism};
use crate::interim::{estimate_interim_curve, exact_interim_curve, Grid, SamplingConfig};
use crate::mechanism::Mechanism;
use crate::model::{
    CostFunction, ProductPrior, ValueDistribution, DEFAULT_ENUMERATION_CAP,
};
use serde::Deserialize;
use std::path::Path;
use std::sync::Arc;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Require `value` to be finite and strictly positive; `field` names the
/// offending key in the error.
fn require_positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(config_err(format!(
            "{field} must be a positive finite number, got {value}"
        )))
    }
}

fn require_nonnegative(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(config_err(format!(
            "{field} must be a nonnegative finite number, got {value}"
        )))
    }
}

// ---------------------------------------------------------------------------
// Leaf specs
// ---------------------------------------------------------------------------

/// One value distribution, keyed by `family`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    /// `lo` with probability `p_lo`, else `hi`
    TwoPoint { lo: f64, p_lo: f64, hi: f64 },
    /// arbitrary finite support: `values[i]` with probability `probs[i]`
    Atoms { values: Vec<f64>, probs: Vec<f64> },
    /// continuous uniform on `[lo, hi]`, `lo > 0`
    Uniform { lo: f64, hi: f64 },
    /// scaled equal-revenue distribution on `{0} ∪ [1, h]`; `scale`
    /// defaults to `1/(4n)` so total expected value is `ln(h)/4`
    EqualRevenue { h: f64, scale: Option<f64> },
}

impl MarginalSpec {
    pub fn build(&self, n: usize) -> Result<ValueDistribution> {
        match self {
            MarginalSpec::TwoPoint { lo, p_lo, hi } => ValueDistribution::two_point(*lo, *p_lo, *hi),
            MarginalSpec::Atoms { values, probs } => {
                if values.len() != probs.len() {
                    return Err(config_err(format!(
                        "prior.values has {} entries but prior.probs has {}",
                        values.len(),
                        probs.len()
                    )));
                }
                let pairs: Vec<(f64, f64)> =
                    values.iter().copied().zip(probs.iter().copied()).collect();
                ValueDistribution::atoms(&pairs)
            }
            MarginalSpec::Uniform { lo, hi } => ValueDistribution::uniform(*lo, *hi),
            MarginalSpec::EqualRevenue { h, scale } => {
                let scale = scale.unwrap_or(1.0 / (4.0 * n as f64));
                ValueDistribution::equal_revenue(*h, scale)
            }
        }
    }

    /// Reparametrize the family to have spread `h`, for sweeps. Families
    /// without a natural spread knob are rejected by name.
    pub fn with_spread(&self, h: f64) -> Result<MarginalSpec> {
        match self {
            MarginalSpec::TwoPoint { lo, p_lo, .. } => Ok(MarginalSpec::TwoPoint {
                lo: *lo,
                p_lo: *p_lo,
                hi: lo * h,
            }),
            MarginalSpec::Uniform { lo, .. } => Ok(MarginalSpec::Uniform { lo: *lo, hi: lo * h }),
            MarginalSpec::EqualRevenue { scale, .. } => Ok(MarginalSpec::EqualRevenue {
                h,
                scale: *scale,
            }),
            MarginalSpec::Atoms { .. } => Err(config_err(
                "sweep.h cannot rescale an explicit-atoms prior; use two_point, uniform, or equal_revenue",
            )),
        }
    }
}

/// Cost function, keyed by `family`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    /// every nonempty set costs `constant`
    PublicExcludable { constant: f64 },
    /// `C(S) = Σ_{i∈S} per_agent[i]`
    Additive { per_agent: Vec<f64> },
    /// `C(S) = by_size[|S|]`; needs `agents + 1` entries
    Cardinality { by_size: Vec<f64> },
    /// explicit table indexed by served-set bitmask; needs `2^agents` entries
    Table { costs: Vec<f64> },
}

impl CostSpec {
    pub fn build(&self, n: usize) -> Result<CostFunction> {
        match self {
            CostSpec::PublicExcludable { constant } => CostFunction::public_excludable(*constant),
            CostSpec::Additive { per_agent } => {
                if per_agent.len() != n {
                    return Err(config_err(format!(
                        "cost.per_agent has {} entries for {n} agents",
                        per_agent.len()
                    )));
                }
                CostFunction::additive(per_agent.clone())
            }
            CostSpec::Cardinality { by_size } => {
                if by_size.len() != n + 1 {
                    return Err(config_err(format!(
                        "cost.by_size needs {} entries for {n} agents, got {}",
                        n + 1,
                        by_size.len()
                    )));
                }
                CostFunction::cardinality_based(by_size.clone())
            }
            CostSpec::Table { costs } => CostFunction::explicit_table(n, costs.clone()),
        }
    }
}

/// Base allocation algorithm, keyed by `kind`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    ServeAll,
    ServeNone,
    Argmax,
    /// serve every agent at or above `threshold`
    FixedThreshold { threshold: f64 },
    /// exhaustive social-cost minimizer for the configured cost
    MinSocialCost,
}

impl AlgorithmSpec {
    pub fn build(&self, cost: &CostFunction) -> Result<Arc<dyn AllocationAlgorithm>> {
        Ok(match self {
            AlgorithmSpec::ServeAll => Arc::new(ServeAll),
            AlgorithmSpec::ServeNone => Arc::new(ServeNone),
            AlgorithmSpec::Argmax => Arc::new(ServeArgmax),
            AlgorithmSpec::FixedThreshold { threshold } => {
                require_positive("algorithm.threshold", *threshold)?;
                Arc::new(FixedThreshold {
                    threshold: *threshold,
                })
            }
            AlgorithmSpec::MinSocialCost => Arc::new(MinimizeSocialCost { cost: cost.clone() }),
        })
    }
}

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub agents: usize,
    /// i.i.d. marginal for every agent; mutually exclusive with
    /// `prior_per_agent`
    pub prior: Option<MarginalSpec>,
    /// one marginal per agent, in agent order
    pub prior_per_agent: Option<Vec<MarginalSpec>>,
    pub cost: CostSpec,
    pub algorithm: AlgorithmSpec,
}

impl InstanceSpec {
    pub fn build_prior(&self) -> Result<ProductPrior> {
        match (&self.prior, &self.prior_per_agent) {
            (Some(m), None) => ProductPrior::iid(m.build(self.agents)?, self.agents),
            (None, Some(list)) => {
                if list.len() != self.agents {
                    return Err(config_err(format!(
                        "instance.prior_per_agent has {} entries for {} agents",
                        list.len(),
                        self.agents
                    )));
                }
                let dists = list
                    .iter()
                    .map(|m| m.build(self.agents))
                    .collect::<Result<Vec<_>>>()?;
                ProductPrior::new(dists)
            }
            (Some(_), Some(_)) => Err(config_err(
                "instance.prior and instance.prior_per_agent are mutually exclusive",
            )),
            (None, None) => Err(config_err(
                "one of instance.prior or instance.prior_per_agent is required",
            )),
        }
    }

    pub fn build(&self) -> Result<BuiltInstance> {
        if self.agents == 0 {
            return Err(config_err("instance.agents must be at least 1"));
        }
        let prior = self.build_prior()?;
        let cost = self.cost.build(self.agents)?;
        let base = self.algorithm.build(&cost)?;
        Ok(BuiltInstance {
            n: self.agents,
            prior,
            cost,
            base,
        })
    }
}

/// Which reduction to wrap around the base algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionChoice {
    /// doubling price-floor schedule
    LogH,
    /// cost-share price-floor schedule
    LogN,
    /// run both schedules, keep the lower social cost
    Combined,
    /// binary values, serve at price 1 when cost is covered
    #[serde(rename = "expost_01")]
    Expost01,
    /// ascending powers-of-two uniform price
    ExpostPow2,
    /// ascending scan over an explicit support list
    ExpostSupport,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSpec {
    pub choice: ReductionChoice,
    /// grid step for curves and threshold rounding; required by the
    /// price-floor reductions
    pub delta: Option<f64>,
    /// revenue slack at the stopping test; defaults to 0 in exact mode and
    /// `2·ε·n` in sampled mode
    pub eps0: Option<f64>,
    /// per-service charge: closed-form Myerson price or its single-sample
    /// unbiased estimate
    #[serde(default)]
    pub payment: PaymentRule,
    /// explicit value support for `expost_support`
    pub support: Option<Vec<f64>>,
    /// price-ladder start for `expost_pow2`; defaults to the prior's
    /// smallest positive value
    pub v_min: Option<f64>,
    /// price-ladder spread for `expost_pow2`; defaults to the prior's
    /// `v_max / v_min`
    pub h: Option<f64>,
}

impl ReductionSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(delta) = self.delta {
            require_positive("reduction.delta", delta)?;
        }
        if let Some(eps0) = self.eps0 {
            require_nonnegative("reduction.eps0", eps0)?;
        }
        if let Some(v_min) = self.v_min {
            require_positive("reduction.v_min", v_min)?;
        }
        if let Some(h) = self.h {
            if !(h.is_finite() && h >= 1.0) {
                return Err(config_err(format!(
                    "reduction.h must be at least 1, got {h}"
                )));
            }
        }
        let needs_delta = matches!(
            self.choice,
            ReductionChoice::LogH | ReductionChoice::LogN | ReductionChoice::Combined
        );
        if needs_delta && self.delta.is_none() {
            return Err(config_err(
                "reduction.delta is required for the price-floor reductions",
            ));
        }
        if self.choice == ReductionChoice::ExpostSupport && self.support.is_none() {
            return Err(config_err(
                "reduction.support is required for choice = \"expost_support\"",
            ));
        }
        Ok(())
    }

    pub fn selection_rule(&self) -> Option<SelectionRule> {
        match self.choice {
            ReductionChoice::LogH => Some(SelectionRule::Doubling),
            ReductionChoice::LogN => Some(SelectionRule::CostShare),
            ReductionChoice::Combined => Some(SelectionRule::BestOfBoth),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub kind: ModeKind,
    /// exact mode: profile-enumeration cap
    pub cap: Option<u128>,
    /// sampled mode: curve-estimation accuracy
    pub epsilon: Option<f64>,
    /// sampled mode: override the Hoeffding-derived per-cell curve sample
    /// count
    pub curve_samples: Option<u64>,
    /// sampled mode: replicates per threshold row
    pub row_samples: Option<u64>,
    /// replicates for summary social-cost/revenue estimates
    pub sc_samples: Option<u64>,
}

impl Default for ModeSpec {
    fn default() -> Self {
        ModeSpec {
            kind: ModeKind::Exact,
            cap: None,
            epsilon: None,
            curve_samples: None,
            row_samples: None,
            sc_samples: None,
        }
    }
}

impl ModeSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.epsilon {
            if !(eps.is_finite() && eps > 0.0 && eps < 1.0) {
                return Err(config_err(format!(
                    "mode.epsilon must lie strictly between 0 and 1, got {eps}"
                )));
            }
        }
        for (field, value) in [
            ("mode.curve_samples", self.curve_samples),
            ("mode.row_samples", self.row_samples),
            ("mode.sc_samples", self.sc_samples),
        ] {
            if value == Some(0) {
                return Err(config_err(format!("{field} must be at least 1")));
            }
        }
        if self.cap == Some(0) {
            return Err(config_err("mode.cap must be at least 1"));
        }
        Ok(())
    }

    pub fn cap(&self) -> u128 {
        self.cap.unwrap_or(DEFAULT_ENUMERATION_CAP)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(0.1)
    }

    pub fn row_samples(&self) -> u64 {
        self.row_samples.unwrap_or(50_000)
    }

    pub fn sc_samples(&self) -> u64 {
        self.sc_samples.unwrap_or(100_000)
    }

    /// Row-evaluation mode handed to the reductions.
    pub fn eval(&self, seed: u64) -> EvalMode {
        match self.kind {
            ModeKind::Exact => EvalMode::Exact { cap: self.cap() },
            ModeKind::Sampled => EvalMode::Sampled {
                samples: self.row_samples(),
                seed,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// directory for result files; `--out-dir` overrides
    pub dir: Option<String>,
    /// file-name stem; defaults to the subcommand name
    pub stem: Option<String>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            stem: None,
        }
    }
}

/// Parameter grid for `sweep`: the cross product of the four lists, applied
/// on top of the base config. An empty list yields an empty grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// prior spreads; reparametrizes the configured prior family
    pub h: Option<Vec<f64>>,
    /// agent counts; the cost family must be agent-count-generic
    pub n: Option<Vec<usize>>,
    pub delta: Option<Vec<f64>>,
    pub epsilon: Option<Vec<f64>>,
}

/// One sweep cell: the overrides to apply to the base config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub h: Option<f64>,
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
}

impl SweepSpec {
    /// Deterministic row order: h outermost, then n, then δ, then ε.
    pub fn cells(&self) -> Vec<SweepCell> {
        fn axis<T: Copy>(list: &Option<Vec<T>>) -> Vec<Option<T>> {
            match list {
                None => vec![None],
                Some(values) => values.iter().map(|&v| Some(v)).collect(),
            }
        }
        let mut out = Vec::new();
        for &h in &axis(&self.h) {
            for &n in &axis(&self.n) {
                for &delta in &axis(&self.delta) {
                    for &epsilon in &axis(&self.epsilon) {
                        out.push(SweepCell {
                            h,
                            n,
                            delta,
                            epsilon,
                        });
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Top level
// ---------------------------------------------------------------------------

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub instance: InstanceSpec,
    pub reduction: ReductionSpec,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default)]
    pub output: OutputSpec,
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    /// Parse and validate. TOML syntax and unknown-key errors come back as
    /// config errors carrying the parser's line/column diagnostics.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| config_err(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            config_err(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instance.agents == 0 {
            return Err(config_err("instance.agents must be at least 1"));
        }
        self.reduction.validate()?;
        self.mode.validate()?;
        if let Some(sweep) = &self.sweep {
            for (field, list) in [
                ("sweep.delta", sweep.delta.as_ref()),
                ("sweep.epsilon", sweep.epsilon.as_ref()),
                ("sweep.h", sweep.h.as_ref()),
            ] {
                if let Some(list) = list {
                    for &value in list {
                        require_positive(field, value)?;
                    }
                }
            }
            if let Some(ns) = &sweep.n {
                if ns.contains(&0) {
                    return Err(config_err("sweep.n entries must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// Revenue slack for the stopping test: explicit override, else 0 in
    /// exact mode and `2·ε·n` in sampled mode (the two-sided curve error
    /// deflates estimated revenue by at most `ε·n` and the true revenue can
    /// sit another `ε·n` below the estimate).
    pub fn eps0(&self, n: usize) -> f64 {
        self.reduction.eps0.unwrap_or(match self.mode.kind {
            ModeKind::Exact => 0.0,
            ModeKind::Sampled => 2.0 * self.mode.epsilon() * n as f64,
        })
    }

    /// Apply one sweep cell, returning the modified config.
    pub fn with_cell(&self, cell: &SweepCell) -> Result<ExperimentConfig> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        if let Some(n) = cell.n {
            cfg.instance.agents = n;
        }
        if let Some(h) = cell.h {
            match (&cfg.instance.prior, &cfg.instance.prior_per_agent) {
                (Some(m), _) => cfg.instance.prior = Some(m.with_spread(h)?),
                (None, Some(_)) => {
                    return Err(config_err(
                        "sweep.h requires the i.i.d. instance.prior form",
                    ))
                }
                (None, None) => {
                    return Err(config_err(
                        "one of instance.prior or instance.prior_per_agent is required",
                    ))
                }
            }
        }
        if let Some(delta) = cell.delta {
            cfg.reduction.delta = Some(delta);
        }
        if let Some(epsilon) = cell.epsilon {
            cfg.mode.epsilon = Some(epsilon);
        }
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// Building the configured pipeline
// ---------------------------------------------------------------------------

/// The instance parts shared by every pipeline: who, what it costs, and the
/// base allocation rule.
pub struct BuiltInstance {
    pub n: usize,
    pub prior: ProductPrior,
    pub cost: CostFunction,
    pub base: Arc<dyn AllocationAlgorithm>,
}

/// A configured mechanism, with the threshold schedule exposed when the
/// reduction has one.
pub enum BuiltMechanism {
    PriceFloor(ReducedMechanism),
    Expost(Box<dyn Mechanism>),
}

impl BuiltMechanism {
    pub fn mechanism(&self) -> &dyn Mechanism {
        match self {
            BuiltMechanism::PriceFloor(m) => m,
            BuiltMechanism::Expost(m) => m.as_ref(),
        }
    }

    pub fn schedule(&self) -> Option<&ThresholdSchedule> {
        match self {
            BuiltMechanism::PriceFloor(m) => Some(m.schedule()),
            BuiltMechanism::Expost(_) => None,
        }
    }
}

impl ExperimentConfig {
    /// Build the configured instance and wrap the configured reduction
    /// around it. Exact mode on a continuous prior (or any other
    /// mode/instance mismatch) surfaces as the underlying error so the CLI
    /// can map it to the incompatibility exit code.
    pub fn build(&self) -> Result<(BuiltInstance, BuiltMechanism)> {
        let instance = self.instance.build()?;
        let mech = self.build_mechanism(&instance)?;
        Ok((instance, mech))
    }

    fn build_mechanism(&self, instance: &BuiltInstance) -> Result<BuiltMechanism> {
        let n = instance.n;
        match self.reduction.choice {
            ReductionChoice::LogH | ReductionChoice::LogN | ReductionChoice::Combined => {
                let delta = self.reduction.delta.expect("validated");
                let grid = Grid::covering(instance.prior.v_max(), delta)?;
                let curve = match self.mode.kind {
                    ModeKind::Exact => exact_interim_curve(
                        instance.base.as_ref(),
                        &instance.prior,
                        &grid,
                        self.mode.cap(),
                    )?,
                    ModeKind::Sampled => {
                        let mut sampling = SamplingConfig::new(self.mode.epsilon())?;
                        if let Some(s) = self.mode.curve_samples {
                            sampling = sampling.with_samples(s);
                        }
                        estimate_interim_curve(
                            instance.base.as_ref(),
                            &instance.prior,
                            &grid,
                            &sampling,
                            self.seed,
                        )?
                    }
                };
                let mech = crate::bic::reduce(
                    instance.base.clone(),
                    Arc::new(curve),
                    &instance.prior,
                    &instance.cost,
                    self.reduction.selection_rule().expect("price-floor choice"),
                    self.eps0(n),
                    self.mode.eval(self.seed),
                    self.reduction.payment,
                )?;
                Ok(BuiltMechanism::PriceFloor(mech))
            }
            ReductionChoice::Expost01 => Ok(BuiltMechanism::Expost(Box::new(
                ZeroOneMechanism::new(instance.base.clone(), instance.cost.clone(), n),
            ))),
            ReductionChoice::ExpostPow2 => {
                let v_min = self.reduction.v_min.unwrap_or(instance.prior.v_min());
                let h = self.reduction.h.unwrap_or(instance.prior.spread());
                Ok(BuiltMechanism::Expost(Box::new(
                    DoublingPriceMechanism::new(
                        instance.base.clone(),
                        instance.cost.clone(),
                        v_min,
                        h,
                        n,
                    )?,
                )))
            }
            ReductionChoice::ExpostSupport => {
                let support =
                    SupportList::new(self.reduction.support.clone().expect("validated"))?;
                Ok(BuiltMechanism::Expost(Box::new(
                    SupportPriceMechanism::new(
                        instance.base.clone(),
                        instance.cost.clone(),
                        support,
                        n,
                    )?,
                )))
            }
        }
    }
}
