//! Interim allocation curves and interim payments.
//!
//! The *interim allocation* of agent `i` at value `v` is the probability that
//! an algorithm serves `i` when `i` reports `v` and everyone else draws from
//! the prior. Curves are stored on a uniform grid of half-open cells
//! `I_k = ((k-1)·δ, k·δ]` plus a dedicated cell for the value 0 (priors may
//! put an atom there), and are either computed exactly by enumeration or
//! estimated from conditional Monte Carlo samples.
//!
//! Payments come from the standard one-dimensional characterization: a
//! monotone interim curve `x` supports the truthful payment
//! `p(v) = v·x(v) − ∫_t^v x(y) dy` for any price floor `t` (agents below the
//! floor pay nothing and are not served). With `t = 0` this is the classic
//! payment identity; positive floors truncate the curve from below.

use crate::algorithms::AllocationAlgorithm;
use crate::error::{Error, Result};
use crate::model::{ProductPrior, ValuationProfile, ValueDistribution};
use crate::rng::{tag, Stream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Tolerance for snapping values that sit within floating-point noise of a
/// grid edge into the cell whose closed upper edge they belong to.
pub const GRID_SNAP: f64 = 1e-9;

/// Slack when classifying a curve as monotone: enumeration sums may wobble by
/// a few ulps without the curve being meaningfully decreasing.
const MONOTONE_SLACK: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Uniform value grid: cells `1..=cells` cover `(0, cells·δ]`, cell 0 is the
/// point `{0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub delta: f64,
    pub cells: usize,
}

impl Grid {
    pub fn new(delta: f64, cells: usize) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) || cells == 0 {
            return Err(Error::InvalidInstance(format!(
                "grid needs positive delta and at least one cell, got delta={delta}, cells={cells}"
            )));
        }
        Ok(Grid { delta, cells })
    }

    /// Smallest grid with the given cell width covering `(0, v_max]`.
    pub fn covering(v_max: f64, delta: f64) -> Result<Self> {
        if !(v_max.is_finite() && v_max > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "grid must cover a positive value range, got v_max={v_max}"
            )));
        }
        let cells = ((v_max / delta) - GRID_SNAP).ceil().max(1.0) as usize;
        Grid::new(delta, cells)
    }

    /// Cell index of a value: 0 for `v ≤ 0`, otherwise `⌈v/δ⌉` with edge
    /// snapping, clamped to the top cell.
    pub fn cell_of(&self, v: f64) -> usize {
        if v <= 0.0 {
            return 0;
        }
        let r = v / self.delta;
        let k = if (r - r.round()).abs() <= GRID_SNAP * r.max(1.0) {
            r.round() as usize
        } else {
            r.ceil() as usize
        };
        k.clamp(1, self.cells)
    }

    /// `(lo, hi]` bounds of a positive cell.
    pub fn cell_bounds(&self, k: usize) -> (f64, f64) {
        debug_assert!((1..=self.cells).contains(&k));
        ((k - 1) as f64 * self.delta, k as f64 * self.delta)
    }

    pub fn top(&self) -> f64 {
        self.cells as f64 * self.delta
    }

    pub fn compatible(&self, other: &Grid) -> bool {
        self.cells == other.cells
            && (self.delta - other.delta).abs() <= GRID_SNAP * self.delta.max(other.delta)
    }
}

/// Prior mass of agent `agent`'s marginal inside a grid cell.
pub fn cell_mass(dist: &ValueDistribution, grid: &Grid, k: usize) -> f64 {
    if k == 0 {
        return dist.mass_at_zero();
    }
    match dist.atom_list() {
        // Discrete marginals go through cell_of so edge atoms land in the
        // same cell the estimator and the curve lookup will use.
        Some(atoms) => atoms
            .iter()
            .filter(|(v, _)| *v > 0.0 && grid.cell_of(*v) == k)
            .map(|(_, p)| *p)
            .sum(),
        None => {
            let (lo, hi) = grid.cell_bounds(k);
            dist.mass_in(lo, hi)
        }
    }
}

/// Draw a value from `dist` conditional on landing in cell `k`.
pub fn cell_conditional_sample(
    dist: &ValueDistribution,
    grid: &Grid,
    k: usize,
    agent: usize,
    rng: &mut Stream,
) -> Result<f64> {
    if k == 0 {
        return if dist.mass_at_zero() > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::ZeroMassInterval {
                agent,
                lo: 0.0,
                hi: 0.0,
            })
        };
    }
    let (lo, hi) = grid.cell_bounds(k);
    match dist.atom_list() {
        Some(atoms) => {
            let inside: Vec<(f64, f64)> = atoms
                .iter()
                .copied()
                .filter(|(v, _)| *v > 0.0 && grid.cell_of(*v) == k)
                .collect();
            let total: f64 = inside.iter().map(|(_, p)| p).sum();
            if total <= 0.0 {
                return Err(Error::ZeroMassInterval { agent, lo, hi });
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
        None => dist.conditional_sample(lo, hi, agent, rng),
    }
}

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

/// How a curve was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CurveProvenance {
    Exact,
    Estimated {
        epsilon: f64,
        samples_per_cell: u64,
        seed: u64,
    },
}

/// One agent's interim allocation over the grid. `values[0]` is the
/// allocation at value 0; `values[k]` the (constant) allocation on cell `k`.
/// `observed[k]` records whether the prior puts mass in the cell; values of
/// unobserved cells are filled from the left so the curve is total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCurve {
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
}

/// Interim allocation curves for all agents on a common grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterimCurve {
    pub grid: Grid,
    pub agents: Vec<AgentCurve>,
    pub provenance: CurveProvenance,
}

impl InterimCurve {
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    /// Curve value at an arbitrary nonnegative value.
    pub fn value_at(&self, agent: usize, v: f64) -> f64 {
        let k = self.grid.cell_of(v);
        self.agents[agent].values[k]
    }

    /// First strictly decreasing step of an agent's curve (beyond slack),
    /// with the size of the drop.
    pub fn first_violation(&self, agent: usize) -> Option<(usize, f64)> {
        let vals = &self.agents[agent].values;
        for k in 1..vals.len() {
            let drop = vals[k - 1] - vals[k];
            if drop > MONOTONE_SLACK {
                return Some((k, drop));
            }
        }
        None
    }

    pub fn agent_monotone(&self, agent: usize) -> bool {
        self.first_violation(agent).is_none()
    }

    pub fn monotone(&self) -> bool {
        (0..self.n()).all(|i| self.agent_monotone(i))
    }

    fn require_agent_monotone(&self, agent: usize) -> Result<()> {
        match self.first_violation(agent) {
            None => Ok(()),
            Some((cell, drop)) => Err(Error::NonMonotoneCurve { agent, cell, drop }),
        }
    }

    /// Error out (with the first offending agent and cell) unless every
    /// agent's curve is nondecreasing.
    pub fn require_monotone(&self) -> Result<()> {
        for agent in 0..self.n() {
            self.require_agent_monotone(agent)?;
        }
        Ok(())
    }

    /// `∫_t^v x(y) dy` for one agent, treating the curve as a step function
    /// over the positive cells (the zero point has measure zero).
    pub fn integral(&self, agent: usize, t: f64, v: f64) -> f64 {
        if v <= t {
            return 0.0;
        }
        let vals = &self.agents[agent].values;
        let k_lo = self.grid.cell_of(t.max(0.0)).max(1);
        let k_hi = self.grid.cell_of(v);
        let mut total = 0.0;
        for k in k_lo..=k_hi {
            let (lo, hi) = self.grid.cell_bounds(k);
            let width = v.min(hi) - t.max(lo);
            if width > 0.0 {
                total += width * vals[k];
            }
        }
        // values above the grid keep the top cell's allocation
        if v > self.grid.top() {
            total += (v - self.grid.top().max(t)) * vals[self.grid.cells];
        }
        total
    }

    /// All curves within strict distance `eps` of each other, cell by cell.
    pub fn eps_close(&self, other: &InterimCurve, eps: f64) -> Result<bool> {
        if !self.grid.compatible(&other.grid) {
            return Err(Error::GridMismatch(format!(
                "grids differ: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        if self.n() != other.n() {
            return Err(Error::GridMismatch(format!(
                "agent counts differ: {} vs {}",
                self.n(),
                other.n()
            )));
        }
        for (a, b) in self.agents.iter().zip(other.agents.iter()) {
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                if (x - y).abs() >= eps {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Fill unobserved cells from the left (starting from the zero cell) so the
/// stored step function is total and consistent with the observed cells.
fn fill_forward(values: &mut [f64], observed: &[bool]) {
    let mut prev = if observed[0] { values[0] } else { 0.0 };
    if !observed[0] {
        values[0] = 0.0;
    }
    for k in 1..values.len() {
        if observed[k] {
            prev = values[k];
        } else {
            values[k] = prev;
        }
    }
}

/// Exact interim curve of an algorithm under a discrete prior.
///
/// Cell value = P(agent served | value in cell), combining the conditional
/// atom weights inside the cell with exact enumeration over the other agents
/// and the algorithm's finite outcome distribution.
pub fn exact_interim_curve(
    alg: &dyn AllocationAlgorithm,
    prior: &ProductPrior,
    grid: &Grid,
    cap: u128,
) -> Result<InterimCurve> {
    let n = prior.n();
    let support = prior.enumerate_support(cap)?;
    let mut num = vec![vec![0.0; grid.cells + 1]; n]; // Σ P(profile)·P(served)
    let mut den = vec![vec![0.0; grid.cells + 1]; n]; // Σ P(profile)
    for (v, p) in &support {
        let dist = alg
            .outcome_distribution(v)
            .ok_or(Error::UnenumerableAlgorithm)?;
        let mut serve_prob = vec![0.0; n];
        for (s, q) in &dist {
            for i in s.iter() {
                serve_prob[i] += q;
            }
        }
        for i in 0..n {
            let k = grid.cell_of(v.value(i));
            den[i][k] += p;
            num[i][k] += p * serve_prob[i];
        }
    }
    let agents = (0..n)
        .map(|i| {
            let mut values = vec![0.0; grid.cells + 1];
            let mut observed = vec![false; grid.cells + 1];
            for k in 0..=grid.cells {
                if den[i][k] > 0.0 {
                    observed[k] = true;
                    values[k] = num[i][k] / den[i][k];
                }
            }
            fill_forward(&mut values, &observed);
            AgentCurve { values, observed }
        })
        .collect();
    Ok(InterimCurve {
        grid: *grid,
        agents,
        provenance: CurveProvenance::Exact,
    })
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

/// Monte Carlo settings for curve estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Target uniform accuracy of the estimated curve.
    pub epsilon: f64,
    /// Override for the per-cell sample count; `None` derives it from
    /// `epsilon` via [`hoeffding_samples`].
    pub samples_per_cell: Option<u64>,
}

impl SamplingConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidInstance(format!(
                "estimation accuracy must lie in (0, 1), got {epsilon}"
            )));
        }
        Ok(SamplingConfig {
            epsilon,
            samples_per_cell: None,
        })
    }

    pub fn with_samples(mut self, samples: u64) -> Self {
        self.samples_per_cell = Some(samples);
        self
    }

    pub fn samples(&self, n_agents: usize, delta: f64) -> u64 {
        self.samples_per_cell
            .unwrap_or_else(|| hoeffding_samples(self.epsilon, n_agents, delta))
    }
}

/// Per-cell sample count making every cell of every agent's estimated curve
/// `epsilon`-accurate with probability at least `1 − epsilon`:
/// `N = ⌈ln(2n/(εδ)) / (2ε²)⌉`.
///
/// Union bound over at most `n/(εδ)`-ish cells with Hoeffding tail
/// `2·exp(−2Nε²)` per cell.
pub fn hoeffding_samples(epsilon: f64, n_agents: usize, delta: f64) -> u64 {
    let inside = (2.0 * n_agents as f64) / (epsilon * delta);
    ((inside.ln() / (2.0 * epsilon * epsilon)).ceil().max(1.0)) as u64
}

/// Estimate the interim curve of `alg` under `prior` by conditional Monte
/// Carlo, then force monotonicity with a running maximum (the estimate of a
/// monotone curve may only be pushed up by earlier cells, which keeps it
/// within the same accuracy band).
///
/// Replicate `r` for `(agent i, cell k)` draws from the stream keyed
/// `(seed, CURVE, i, k, r)`: fully deterministic and embarrassingly
/// parallel. When the algorithm is symmetric and the prior i.i.d., one
/// agent's curve is estimated and shared.
pub fn estimate_interim_curve(
    alg: &dyn AllocationAlgorithm,
    prior: &ProductPrior,
    grid: &Grid,
    sampling: &SamplingConfig,
    seed: u64,
) -> Result<InterimCurve> {
    let n = prior.n();
    let samples = sampling.samples(n, grid.delta);
    let share_across_agents = alg.is_symmetric() && prior.is_iid() && n > 1;
    let estimated_agents = if share_across_agents { 1 } else { n };

    let jobs: Vec<(usize, usize)> = (0..estimated_agents)
        .flat_map(|i| (0..=grid.cells).map(move |k| (i, k)))
        .collect();
    let raw: Vec<Result<Option<f64>>> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let dist = prior.marginal(i);
            if cell_mass(dist, grid, k) <= 0.0 {
                return Ok(None);
            }
            let mut hits = 0u64;
            for r in 0..samples {
                let mut rng = Stream::keyed(seed, tag::CURVE, &[i as u64, k as u64, r]);
                let mut values = Vec::with_capacity(n);
                for (j, dj) in prior.marginals().iter().enumerate() {
                    if j == i {
                        values.push(cell_conditional_sample(dj, grid, k, i, &mut rng)?);
                    } else {
                        values.push(dj.sample(&mut rng));
                    }
                }
                let v = ValuationProfile::new(values)?;
                if alg.run(&v, &mut rng).contains(i) {
                    hits += 1;
                }
            }
            Ok(Some(hits as f64 / samples as f64))
        })
        .collect();

    let mut per_agent = Vec::with_capacity(estimated_agents);
    let mut it = raw.into_iter();
    for _ in 0..estimated_agents {
        let mut values = vec![0.0; grid.cells + 1];
        let mut observed = vec![false; grid.cells + 1];
        for k in 0..=grid.cells {
            if let Some(est) = it.next().unwrap()? {
                observed[k] = true;
                values[k] = est;
            }
        }
        // running maximum: monotone by construction, and unobserved cells
        // inherit the maximum so far
        let mut run_max: f64 = 0.0;
        for k in 0..=grid.cells {
            if observed[k] {
                run_max = run_max.max(values[k]);
            }
            values[k] = run_max;
        }
        per_agent.push(AgentCurve { values, observed });
    }
    let agents = if share_across_agents {
        vec![per_agent[0].clone(); n]
    } else {
        per_agent
    };
    Ok(InterimCurve {
        grid: *grid,
        agents,
        provenance: CurveProvenance::Estimated {
            epsilon: sampling.epsilon,
            samples_per_cell: samples,
            seed,
        },
    })
}

// ---------------------------------------------------------------------------
// Payments
// ---------------------------------------------------------------------------

/// Truthful interim payment at value `v` with price floor `t`:
/// `0` below the floor, otherwise `v·x(v) − ∫_t^v x(y) dy`.
pub fn truncated_interim_payment(
    curve: &InterimCurve,
    agent: usize,
    v: f64,
    t: f64,
) -> Result<f64> {
    curve.require_agent_monotone(agent)?;
    if v < t {
        return Ok(0.0);
    }
    Ok(v * curve.value_at(agent, v) - curve.integral(agent, t, v))
}

/// Single-evaluation unbiased estimate of [`truncated_interim_payment`]:
/// draw `Y` uniform on `[t, v]` and return `v·x(v) − (v−t)·x(Y)`.
///
/// Unbiased because `E[(v−t)·x(Y)] = ∫_t^v x`, and nonnegative pointwise
/// because monotonicity gives `x(Y) ≤ x(v)`, so the estimate is at least
/// `t·x(v) ≥ 0`.
pub fn sampled_payment(
    curve: &InterimCurve,
    agent: usize,
    v: f64,
    t: f64,
    rng: &mut Stream,
) -> Result<f64> {
    curve.require_agent_monotone(agent)?;
    if v < t {
        return Ok(0.0);
    }
    let xv = curve.value_at(agent, v);
    if v == t {
        return Ok(v * xv);
    }
    let y = rng.next_range(t, v);
    Ok(v * xv - (v - t) * curve.value_at(agent, y))
}
