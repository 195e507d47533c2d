//! Repairing non-monotone interim curves.
//!
//! Interim payments need monotone curves. Two wrappers restore monotonicity
//! without touching the inner algorithm:
//!
//! * [`pool_adjacent_cells`] — find, per agent, the coarsest partition of the
//!   grid into runs of adjacent cells on which the mass-weighted average
//!   allocation is nondecreasing (pool-adjacent-violators), then wrap the
//!   algorithm so each agent's value is resampled from the prior conditional
//!   on its pooled block before the inner algorithm runs. Resampling within
//!   a block leaves each agent's marginal distribution untouched, so the
//!   wrapper's interim curve is exactly the pooled (hence monotone) curve
//!   and its expected service cost under the prior is unchanged.
//! * [`blatant_monotonize`] — mix the algorithm with a single-agent lottery:
//!   with probability `γ` pick one agent uniformly and serve them alone with
//!   probability `k·δ` when their value lies in cell `k`. The mix adds a
//!   strictly increasing ramp of slope `γ·δ/n` per cell, which swamps dips of
//!   up to `2ε` when `γ = 2ε/δ`.

use crate::algorithms::AllocationAlgorithm;
use crate::error::{Error, Result};
use crate::interim::{cell_conditional_sample, cell_mass, AgentCurve, Grid, InterimCurve};
use crate::model::{ProductPrior, ServiceOutcome, ValuationProfile};
use crate::rng::Stream;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Pool-adjacent-violators over grid cells
// ---------------------------------------------------------------------------

/// A maximal run of adjacent cells sharing one pooled allocation value.
#[derive(Debug, Clone)]
pub struct PooledBlock {
    /// first cell index (0 = the zero cell)
    pub first: usize,
    /// last cell index, inclusive
    pub last: usize,
    /// mass-weighted average allocation over the block
    pub value: f64,
    /// prior mass of the block
    pub mass: f64,
}

/// Mass-weighted pool-adjacent-violators on one agent's cell values.
///
/// Zero-mass cells join blocks without influencing the average; a block with
/// no mass at all keeps the plain average of its raw values (it can never be
/// resampled, the value is only reported for completeness).
pub fn pava(values: &[f64], masses: &[f64]) -> Vec<PooledBlock> {
    struct Acc {
        first: usize,
        last: usize,
        w: f64,
        wv: f64,
        rsum: f64,
        rcount: f64,
    }
    impl Acc {
        fn value(&self) -> f64 {
            if self.w > 0.0 {
                self.wv / self.w
            } else {
                self.rsum / self.rcount
            }
        }
    }
    let mut stack: Vec<Acc> = Vec::with_capacity(values.len());
    for (k, (&x, &m)) in values.iter().zip(masses.iter()).enumerate() {
        stack.push(Acc {
            first: k,
            last: k,
            w: m,
            wv: m * x,
            rsum: x,
            rcount: 1.0,
        });
        while stack.len() >= 2 {
            let cur = stack.len() - 1;
            if stack[cur - 1].value() > stack[cur].value() {
                let top = stack.pop().unwrap();
                let prev = stack.last_mut().unwrap();
                prev.last = top.last;
                prev.w += top.w;
                prev.wv += top.wv;
                prev.rsum += top.rsum;
                prev.rcount += top.rcount;
            } else {
                break;
            }
        }
    }
    stack
        .into_iter()
        .map(|a| PooledBlock {
            first: a.first,
            last: a.last,
            value: a.value(),
            mass: a.w,
        })
        .collect()
}

/// Per-agent pooling of a raw interim curve against the prior masses.
#[derive(Debug, Clone)]
pub struct PooledPartition {
    pub grid: Grid,
    /// blocks per agent, covering cells `0..=grid.cells` without gaps
    pub blocks: Vec<Vec<PooledBlock>>,
}

impl PooledPartition {
    pub fn block_of(&self, agent: usize, cell: usize) -> &PooledBlock {
        let blocks = &self.blocks[agent];
        let pos = blocks
            .partition_point(|b| b.last < cell)
            .min(blocks.len() - 1);
        &blocks[pos]
    }
}

/// The resampling wrapper produced by [`pool_adjacent_cells`].
pub struct PooledResampling {
    inner: Arc<dyn AllocationAlgorithm>,
    prior: ProductPrior,
    partition: PooledPartition,
    pooled: InterimCurve,
    /// conditional atoms per agent per block (discrete marginals only)
    block_atoms: Vec<Option<Vec<Vec<(f64, f64)>>>>,
}

impl PooledResampling {
    /// The wrapper's exact interim curve: the pooled, monotone curve.
    pub fn pooled_curve(&self) -> &InterimCurve {
        &self.pooled
    }

    pub fn partition(&self) -> &PooledPartition {
        &self.partition
    }

    fn resample_agent(&self, agent: usize, value: f64, rng: &mut Stream) -> Result<f64> {
        let grid = &self.partition.grid;
        let block = self.partition.block_of(agent, grid.cell_of(value));
        if block.mass <= 0.0 {
            // off-support query: nothing to resample from, keep the report
            return Ok(value);
        }
        if let Some(per_block) = &self.block_atoms[agent] {
            let blocks = &self.partition.blocks[agent];
            let bi = blocks
                .partition_point(|b| b.last < grid.cell_of(value))
                .min(blocks.len() - 1);
            let atoms = &per_block[bi];
            let total: f64 = atoms.iter().map(|(_, p)| p).sum();
            let u = rng.next_f64() * total;
            let mut acc = 0.0;
            for &(v, p) in atoms {
                acc += p;
                if u < acc {
                    return Ok(v);
                }
            }
            return Ok(atoms.last().unwrap().0);
        }
        // continuous marginal: pick a cell in the block by mass, then draw
        // inside the cell
        let dist = self.prior.marginal(agent);
        let u = rng.next_f64() * block.mass;
        let mut acc = 0.0;
        for k in block.first..=block.last {
            let m = cell_mass(dist, grid, k);
            acc += m;
            if m > 0.0 && u < acc {
                return cell_conditional_sample(dist, grid, k, agent, rng);
            }
        }
        // numerical tail: take the last massive cell
        for k in (block.first..=block.last).rev() {
            if cell_mass(dist, grid, k) > 0.0 {
                return cell_conditional_sample(dist, grid, k, agent, rng);
            }
        }
        Ok(value)
    }

    fn resample_profile(&self, v: &ValuationProfile, rng: &mut Stream) -> Result<ValuationProfile> {
        let mut values = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            values.push(self.resample_agent(i, v.value(i), rng)?);
        }
        ValuationProfile::new(values)
    }
}

impl AllocationAlgorithm for PooledResampling {
    fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> ServiceOutcome {
        // resampling failures are unreachable for on-support inputs; fall
        // back to the reported profile rather than panic
        let resampled = self
            .resample_profile(v, rng)
            .unwrap_or_else(|_| v.clone());
        self.inner.run(&resampled, rng)
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn outcome_distribution(&self, v: &ValuationProfile) -> Option<Vec<(ServiceOutcome, f64)>> {
        // exact only when every marginal is discrete: enumerate the product
        // of conditional block atoms
        let grid = &self.partition.grid;
        let mut lists: Vec<Vec<(f64, f64)>> = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let per_block = self.block_atoms[i].as_ref()?;
            let blocks = &self.partition.blocks[i];
            let bi = blocks
                .partition_point(|b| b.last < grid.cell_of(v.value(i)))
                .min(blocks.len() - 1);
            let atoms = &per_block[bi];
            if atoms.is_empty() {
                lists.push(vec![(v.value(i), 1.0)]);
            } else {
                let total: f64 = atoms.iter().map(|(_, p)| p).sum();
                lists.push(atoms.iter().map(|&(a, p)| (a, p / total)).collect());
            }
        }
        let mut out: Vec<(ServiceOutcome, f64)> = Vec::new();
        let mut idx = vec![0usize; lists.len()];
        loop {
            let mut values = Vec::with_capacity(lists.len());
            let mut prob = 1.0;
            for (i, list) in lists.iter().enumerate() {
                values.push(list[idx[i]].0);
                prob *= list[idx[i]].1;
            }
            let v2 = ValuationProfile::new(values).ok()?;
            for (s, q) in self.inner.outcome_distribution(&v2)? {
                out.push((s, prob * q));
            }
            let mut i = lists.len();
            loop {
                if i == 0 {
                    return Some(out);
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < lists[i].len() {
                    break;
                }
                idx[i] = 0;
            }
        }
    }

    fn name(&self) -> String {
        format!("pooled({})", self.inner.name())
    }
}

/// Build the pooled-resampling wrapper from a raw (possibly non-monotone)
/// interim curve of `inner` under `prior`.
pub fn pool_adjacent_cells(
    inner: Arc<dyn AllocationAlgorithm>,
    prior: &ProductPrior,
    raw: &InterimCurve,
) -> Result<PooledResampling> {
    if raw.n() != prior.n() {
        return Err(Error::GridMismatch(format!(
            "curve covers {} agents, prior has {}",
            raw.n(),
            prior.n()
        )));
    }
    let grid = raw.grid;
    let mut blocks = Vec::with_capacity(prior.n());
    let mut pooled_agents = Vec::with_capacity(prior.n());
    let mut block_atoms = Vec::with_capacity(prior.n());
    for i in 0..prior.n() {
        let dist = prior.marginal(i);
        let masses: Vec<f64> = (0..=grid.cells).map(|k| cell_mass(dist, &grid, k)).collect();
        let agent_blocks = pava(&raw.agents[i].values, &masses);
        let mut values = vec![0.0; grid.cells + 1];
        for b in &agent_blocks {
            for k in b.first..=b.last {
                values[k] = b.value;
            }
        }
        pooled_agents.push(AgentCurve {
            values,
            observed: raw.agents[i].observed.clone(),
        });
        block_atoms.push(dist.atom_list().map(|atoms| {
            agent_blocks
                .iter()
                .map(|b| {
                    atoms
                        .iter()
                        .copied()
                        .filter(|(a, _)| {
                            let k = grid.cell_of(*a);
                            b.first <= k && k <= b.last
                        })
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        }));
        blocks.push(agent_blocks);
    }
    let pooled = InterimCurve {
        grid,
        agents: pooled_agents,
        provenance: raw.provenance.clone(),
    };
    debug_assert!(pooled.monotone());
    Ok(PooledResampling {
        inner,
        prior: prior.clone(),
        partition: PooledPartition { grid, blocks },
        pooled,
        block_atoms,
    })
}

// ---------------------------------------------------------------------------
// Blatant monotonization
// ---------------------------------------------------------------------------

/// Lottery mix wrapper produced by [`blatant_monotonize`].
pub struct BlatantMix {
    inner: Arc<dyn AllocationAlgorithm>,
    grid: Grid,
    gamma: f64,
    n: usize,
}

impl BlatantMix {
    /// Serving probability of the lottery branch for a value in cell `k`.
    fn lottery_prob(&self, k: usize) -> f64 {
        (k as f64 * self.grid.delta).min(1.0)
    }

    /// Interim curve of the mix given the inner algorithm's interim curve:
    /// `(1−γ)·x̄(cell) + (γ/n)·k·δ`.
    pub fn mixed_curve(&self, inner_curve: &InterimCurve) -> InterimCurve {
        let mut agents = Vec::with_capacity(inner_curve.n());
        for a in &inner_curve.agents {
            let values = a
                .values
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    (1.0 - self.gamma) * x + self.gamma / self.n as f64 * self.lottery_prob(k)
                })
                .collect();
            agents.push(AgentCurve {
                values,
                observed: a.observed.clone(),
            });
        }
        InterimCurve {
            grid: self.grid,
            agents,
            provenance: inner_curve.provenance.clone(),
        }
    }
}

impl AllocationAlgorithm for BlatantMix {
    fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> ServiceOutcome {
        if rng.next_f64() < 1.0 - self.gamma {
            return self.inner.run(v, rng);
        }
        let i = rng.next_index(self.n);
        let k = self.grid.cell_of(v.value(i));
        if rng.next_f64() < self.lottery_prob(k) {
            ServiceOutcome::from_indices(vec![i])
        } else {
            ServiceOutcome::empty()
        }
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn outcome_distribution(&self, v: &ValuationProfile) -> Option<Vec<(ServiceOutcome, f64)>> {
        let inner = self.inner.outcome_distribution(v)?;
        let mut out: Vec<(ServiceOutcome, f64)> = inner
            .into_iter()
            .map(|(s, p)| (s, p * (1.0 - self.gamma)))
            .collect();
        let per_agent = self.gamma / self.n as f64;
        let mut none = 0.0;
        for i in 0..self.n {
            let p = self.lottery_prob(self.grid.cell_of(v.value(i)));
            if p > 0.0 {
                out.push((ServiceOutcome::from_indices(vec![i]), per_agent * p));
            }
            none += per_agent * (1.0 - p);
        }
        if none > 0.0 {
            out.push((ServiceOutcome::empty(), none));
        }
        Some(out)
    }

    fn name(&self) -> String {
        format!("blatant({}, gamma={})", self.inner.name(), self.gamma)
    }
}

/// Mix `inner` with the single-agent lottery at weight `gamma ∈ [0, 1]`.
///
/// With `gamma = 2ε/δ`, the added ramp of `γδ/n` per cell dominates any
/// estimation dip of at most `2ε`, making the mixed interim curve monotone.
pub fn blatant_monotonize(
    inner: Arc<dyn AllocationAlgorithm>,
    grid: Grid,
    gamma: f64,
    n: usize,
) -> Result<BlatantMix> {
    if !(0.0..=1.0).contains(&gamma) || !gamma.is_finite() {
        return Err(Error::GammaOutOfRange(gamma));
    }
    if n == 0 {
        return Err(Error::InvalidInstance("lottery needs at least one agent".into()));
    }
    Ok(BlatantMix {
        inner,
        grid,
        gamma,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{FnAlgorithm, ServeNone};
    use crate::interim::{exact_interim_curve, CurveProvenance};
    use crate::model::{ValueDistribution, DEFAULT_ENUMERATION_CAP};
    use approx::assert_abs_diff_eq;

    #[test]
    fn pava_pools_the_violating_pair() {
        // two cells, equal mass, values (0.8, 0.2) → both become 0.5
        let blocks = pava(&[0.8, 0.2], &[0.5, 0.5]);
        assert_eq!(blocks.len(), 1);
        assert_abs_diff_eq!(blocks[0].value, 0.5, epsilon = 1e-12);

        // (0.1, 0.9, 0.3) with masses (1/2, 1/4, 1/4):
        // last two pool to (0.9/4 + 0.3/4)/(1/2) = 0.6, first stays
        let blocks = pava(&[0.1, 0.9, 0.3], &[0.5, 0.25, 0.25]);
        assert_eq!(blocks.len(), 2);
        assert_abs_diff_eq!(blocks[0].value, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(blocks[1].value, 0.6, epsilon = 1e-12);
        assert_eq!((blocks[1].first, blocks[1].last), (1, 2));
    }

    #[test]
    fn pava_keeps_monotone_input_as_singletons() {
        let blocks = pava(&[0.1, 0.2, 0.2, 0.7], &[0.25; 4]);
        assert_eq!(blocks.len(), 4);
    }

    /// A deliberately non-monotone rule: serve agent 0 exactly when their
    /// value is small.
    fn low_value_rule() -> Arc<dyn AllocationAlgorithm> {
        Arc::new(FnAlgorithm::new("serve_low", |v| {
            if v.value(0) <= 1.0 {
                ServiceOutcome::from_indices(vec![0])
            } else {
                ServiceOutcome::empty()
            }
        }))
    }

    #[test]
    fn pooled_wrapper_curve_is_monotone_and_matches_enumeration() {
        let prior = ProductPrior::new(vec![
            ValueDistribution::two_point(1.0, 0.5, 4.0).unwrap(),
            ValueDistribution::two_point(1.0, 0.5, 4.0).unwrap(),
        ])
        .unwrap();
        let grid = Grid::covering(4.0, 0.5).unwrap();
        let alg = low_value_rule();
        let raw = exact_interim_curve(alg.as_ref(), &prior, &grid, DEFAULT_ENUMERATION_CAP)
            .unwrap();
        assert!(!raw.monotone());
        // agent 0: x(1) = 1, x(4) = 0, equal masses → pooled to 0.5
        let wrapped = pool_adjacent_cells(alg, &prior, &raw).unwrap();
        let pooled = wrapped.pooled_curve();
        assert!(pooled.monotone());
        assert_abs_diff_eq!(pooled.value_at(0, 1.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pooled.value_at(0, 4.0), 0.5, epsilon = 1e-12);

        // the wrapper's exact interim curve equals the pooled curve
        let wrapped_curve = exact_interim_curve(
            &wrapped,
            &prior,
            &grid,
            DEFAULT_ENUMERATION_CAP,
        )
        .unwrap();
        for agent in 0..2 {
            for k in 0..=grid.cells {
                assert_abs_diff_eq!(
                    wrapped_curve.agents[agent].values[k],
                    pooled.agents[agent].values[k],
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn pooled_wrapper_keeps_already_monotone_curves() {
        let prior = ProductPrior::new(vec![ValueDistribution::two_point(1.0, 0.5, 4.0).unwrap()])
            .unwrap();
        let grid = Grid::covering(4.0, 0.5).unwrap();
        let alg: Arc<dyn AllocationAlgorithm> = Arc::new(crate::algorithms::ServeArgmax);
        let raw = exact_interim_curve(alg.as_ref(), &prior, &grid, DEFAULT_ENUMERATION_CAP)
            .unwrap();
        let wrapped = pool_adjacent_cells(alg, &prior, &raw).unwrap();
        for k in 0..=grid.cells {
            assert_abs_diff_eq!(
                wrapped.pooled_curve().agents[0].values[k],
                raw.agents[0].values[k],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn blatant_mix_serves_single_agents_by_cell_height() {
        // inner = serve-none, gamma = 1: pure lottery. n = 1 agent with
        // value in cell 3 of a 0.1 grid → served with probability 0.3.
        let grid = Grid::new(0.1, 10).unwrap();
        let mix = blatant_monotonize(Arc::new(ServeNone), grid, 1.0, 1).unwrap();
        let v = ValuationProfile::new(vec![0.25]).unwrap();
        let dist = mix.outcome_distribution(&v).unwrap();
        let mut p_serve = 0.0;
        for (s, p) in &dist {
            if !s.is_empty() {
                p_serve += p;
            }
        }
        assert_abs_diff_eq!(p_serve, 0.3, epsilon = 1e-12);

        let mut rng = Stream::keyed(3, crate::rng::tag::MECHANISM, &[1]);
        let mut hits = 0u32;
        for _ in 0..100_000 {
            if !mix.run(&v, &mut rng).is_empty() {
                hits += 1;
            }
        }
        assert_abs_diff_eq!(hits as f64 / 100_000.0, 0.3, epsilon = 0.01);
    }

    #[test]
    fn blatant_mix_flattens_small_dips() {
        // the uniform-agent lottery adds a ramp of γδ/n per cell, so with
        // γ = 2ε/δ it absorbs dips of up to 2ε(1−γ)/n
        let eps = 0.01;
        let delta = 0.1;
        let grid = Grid::new(delta, 10).unwrap();
        let gamma = 2.0 * eps / delta; // 0.2
        let n = 2;
        let max_dip = 2.0 * eps * (1.0 - gamma) / n as f64; // 0.008
        let mix = blatant_monotonize(Arc::new(ServeNone), grid, gamma, n).unwrap();
        let values = vec![
            0.0, 0.30, 0.292, 0.40, 0.394, 0.398, 0.50, 0.492, 0.60, 0.596, 0.70,
        ];
        for w in values.windows(2) {
            assert!(w[0] - w[1] <= max_dip + 1e-15);
        }
        let dipping = InterimCurve {
            grid,
            agents: vec![
                AgentCurve {
                    values: values.clone(),
                    observed: vec![true; 11],
                };
                2
            ],
            provenance: CurveProvenance::Exact,
        };
        assert!(!dipping.monotone());
        let mixed = mix.mixed_curve(&dipping);
        assert!(mixed.monotone());
        // spot check the formula at cell 1 of agent 0
        assert_abs_diff_eq!(
            mixed.agents[0].values[1],
            (1.0 - gamma) * 0.30 + gamma / 2.0 * 0.1,
            epsilon = 1e-12
        );
    }

    #[test]
    fn blatant_mix_single_agent_absorbs_full_two_epsilon_dips() {
        // with one agent there is no lottery dilution: the ramp is γδ per
        // cell, which covers dips of the full 2ε
        let eps = 0.01;
        let delta = 0.1;
        let grid = Grid::new(delta, 10).unwrap();
        let gamma = 2.0 * eps / delta;
        let mix = blatant_monotonize(Arc::new(ServeNone), grid, gamma, 1).unwrap();
        let dipping = InterimCurve {
            grid,
            agents: vec![AgentCurve {
                values: vec![
                    0.0, 0.30, 0.285, 0.40, 0.380, 0.50, 0.49, 0.60, 0.59, 0.70, 0.75,
                ],
                observed: vec![true; 11],
            }],
            provenance: CurveProvenance::Exact,
        };
        assert!(!dipping.monotone());
        assert!(mix.mixed_curve(&dipping).monotone());
    }

    #[test]
    fn gamma_outside_unit_interval_is_rejected() {
        let grid = Grid::new(0.1, 10).unwrap();
        assert!(matches!(
            blatant_monotonize(Arc::new(ServeNone), grid, 1.5, 1),
            Err(Error::GammaOutOfRange(_))
        ));
    }
}
