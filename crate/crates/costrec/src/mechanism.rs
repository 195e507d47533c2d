//! Mechanisms (allocation + payments) and expectation helpers shared by the
//! reductions and the audit module.

use crate::algorithms::AllocationAlgorithm;
use crate::error::{Error, Result};
use crate::model::{
    excluded_value, CostFunction, MechanismResult, ProductPrior,
    ValuationProfile,
};
use crate::rng::{tag, Stream};
use rayon::prelude::*;

pub trait Mechanism: Send + Sync {
    fn n(&self) -> usize;

    /// Run once on a reported profile.
    fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> Result<MechanismResult>;

    /// Exact finite distribution over `(served, payments)` at `v`, in
    /// expectation over the mechanism's internal randomness. Mechanisms that
    /// cannot enumerate their randomness return `UnenumerableAlgorithm`.
    fn result_distribution(&self, v: &ValuationProfile) -> Result<Vec<(MechanismResult, f64)>>;

    fn name(&self) -> String;
}

/// Expected totals of a mechanism under a discrete prior, by enumeration.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpectedTotals {
    pub payment: f64,
    pub service_cost: f64,
    pub social_cost: f64,
    pub pr_nonempty: f64,
}

pub fn expected_totals_exact(
    mech: &dyn Mechanism,
    prior: &ProductPrior,
    cost: &CostFunction,
    cap: u128,
) -> Result<ExpectedTotals> {
    let mut acc = ExpectedTotals::default();
    for (v, p) in prior.enumerate_support(cap)? {
        for (res, q) in mech.result_distribution(&v)? {
            let w = p * q;
            acc.payment += w * res.total_payment();
            acc.service_cost += w * cost.cost(&res.served);
            acc.social_cost += w * (cost.cost(&res.served) + excluded_value(&res.served, &v));
            if !res.served.is_empty() {
                acc.pr_nonempty += w;
            }
        }
    }
    Ok(acc)
}

/// Monte Carlo totals plus standard errors. Replicate `r` draws its profile
/// and the mechanism's randomness from a stream keyed by `(seed, tag, run_tag,
/// r)`, so results are independent of thread count and schedule.
#[derive(Debug, Clone, Copy)]
pub struct SampledTotals {
    pub payment: f64,
    pub service_cost: f64,
    pub social_cost: f64,
    pub pr_nonempty: f64,
    /// standard error of the (payment − service cost) mean
    pub recovery_margin_se: f64,
    pub social_cost_se: f64,
    pub samples: u64,
}

pub fn expected_totals_sampled(
    mech: &dyn Mechanism,
    prior: &ProductPrior,
    cost: &CostFunction,
    samples: usize,
    seed: u64,
    run_tag: u64,
) -> Result<SampledTotals> {
    // Fixed-size chunks summed in index order keep the floating-point result
    // identical for every thread count.
    const CHUNK: usize = 4096;
    let chunk_stats: Vec<Result<[f64; 7]>> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(samples);
            let mut acc = [0.0; 7];
            for r in lo..hi {
                let mut rng = Stream::keyed(seed, tag::SOCIAL_COST, &[run_tag, r as u64]);
                let v = prior.sample_profile(&mut rng);
                let res = mech.run(&v, &mut rng)?;
                let pay = res.total_payment();
                let c_served = cost.cost(&res.served);
                let sc = c_served + excluded_value(&res.served, &v);
                let margin = pay - c_served;
                acc[0] += pay;
                acc[1] += c_served;
                acc[2] += sc;
                acc[3] += if res.served.is_empty() { 0.0 } else { 1.0 };
                acc[4] += margin * margin;
                acc[5] += sc * sc;
                acc[6] += 0.0;
            }
            Ok(acc)
        })
        .collect();
    let mut total = [0.0; 7];
    for s in chunk_stats {
        let s = s?;
        for (t, v) in total.iter_mut().zip(s.iter()) {
            *t += v;
        }
    }
    let n = samples as f64;
    let mean_pay = total[0] / n;
    let mean_cost = total[1] / n;
    let mean_sc = total[2] / n;
    let mean_margin = mean_pay - mean_cost;
    let var_margin = (total[4] / n - mean_margin * mean_margin).max(0.0);
    let var_sc = (total[5] / n - mean_sc * mean_sc).max(0.0);
    Ok(SampledTotals {
        payment: mean_pay,
        service_cost: mean_cost,
        social_cost: mean_sc,
        pr_nonempty: total[3] / n,
        recovery_margin_se: (var_margin / n).sqrt(),
        social_cost_se: (var_sc / n).sqrt(),
        samples: samples as u64,
    })
}

/// Exact expected social cost of a bare allocation algorithm (no payments).
pub fn algorithm_social_cost_exact(
    alg: &dyn AllocationAlgorithm,
    prior: &ProductPrior,
    cost: &CostFunction,
    cap: u128,
) -> Result<f64> {
    let mut total = 0.0;
    for (v, p) in prior.enumerate_support(cap)? {
        let dist = alg
            .outcome_distribution(&v)
            .ok_or(Error::UnenumerableAlgorithm)?;
        for (s, q) in dist {
            total += p * q * (cost.cost(&s) + excluded_value(&s, &v));
        }
    }
    Ok(total)
}

/// Monte Carlo expected social cost of a bare allocation algorithm.
///
/// Uses the same stream keying as [`expected_totals_sampled`], so passing the
/// same `(seed, run_tag)` compares algorithm and mechanism on common random
/// profiles.
pub fn algorithm_social_cost_sampled(
    alg: &dyn AllocationAlgorithm,
    prior: &ProductPrior,
    cost: &CostFunction,
    samples: usize,
    seed: u64,
    run_tag: u64,
) -> f64 {
    const CHUNK: usize = 4096;
    let sums: Vec<f64> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(samples);
            let mut acc = 0.0;
            for r in lo..hi {
                let mut rng = Stream::keyed(seed, tag::SOCIAL_COST, &[run_tag, r as u64]);
                let v = prior.sample_profile(&mut rng);
                let s = alg.run(&v, &mut rng);
                acc += cost.cost(&s) + excluded_value(&s, &v);
            }
            acc
        })
        .collect();
    sums.iter().sum::<f64>() / samples as f64
}

/// Interim allocation probability and expected payment of `mech` for `agent`
/// reporting `value`, in expectation over the other agents' values and the
/// mechanism's randomness. Exact, by enumeration of the others' atoms.
pub fn interim_for_agent(
    mech: &dyn Mechanism,
    prior: &ProductPrior,
    agent: usize,
    value: f64,
    cap: u128,
) -> Result<(f64, f64)> {
    let n = prior.n();
    let mut atom_lists = Vec::with_capacity(n - 1);
    for (j, d) in prior.marginals().iter().enumerate() {
        if j == agent {
            continue;
        }
        match d.atom_list() {
            Some(atoms) => atom_lists.push((j, atoms)),
            None => return Err(Error::NotDiscrete { agent: j }),
        }
    }
    let mut needed: u128 = 1;
    for (_, atoms) in &atom_lists {
        needed = needed.saturating_mul(atoms.len() as u128);
        if needed > cap {
            return Err(Error::SupportTooLarge { needed, cap });
        }
    }
    let mut alloc = 0.0;
    let mut payment = 0.0;
    let mut idx = vec![0usize; atom_lists.len()];
    loop {
        let mut values = vec![0.0; n];
        values[agent] = value;
        let mut prob = 1.0;
        for (slot, (j, atoms)) in atom_lists.iter().enumerate() {
            let (v, p) = atoms[idx[slot]];
            values[*j] = v;
            prob *= p;
        }
        let v = ValuationProfile::new(values)?;
        for (res, q) in mech.result_distribution(&v)? {
            let w = prob * q;
            if res.served.contains(agent) {
                alloc += w;
            }
            payment += w * res.payments[agent];
        }
        let mut i = atom_lists.len();
        loop {
            if i == 0 {
                return Ok((alloc, payment));
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < atom_lists[i].1.len() {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// Wrap a bare algorithm as a zero-payment mechanism (useful for audits of
/// allocation-only properties).
pub struct FreeService<A: AllocationAlgorithm> {
    pub alg: A,
    pub n: usize,
}

impl<A: AllocationAlgorithm> Mechanism for FreeService<A> {
    fn n(&self) -> usize {
        self.n
    }
    fn run(&self, v: &ValuationProfile, rng: &mut Stream) -> Result<MechanismResult> {
        Ok(MechanismResult::new(self.alg.run(v, rng), vec![0.0; self.n]))
    }
    fn result_distribution(&self, v: &ValuationProfile) -> Result<Vec<(MechanismResult, f64)>> {
        let dist = self
            .alg
            .outcome_distribution(v)
            .ok_or(Error::UnenumerableAlgorithm)?;
        Ok(dist
            .into_iter()
            .map(|(s, p)| (MechanismResult::new(s, vec![0.0; self.n]), p))
            .collect())
    }
    fn name(&self) -> String {
        format!("free({})", self.alg.name())
    }
}
