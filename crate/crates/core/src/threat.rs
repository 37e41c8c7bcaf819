//! Fault hypotheses, their prior probabilities, and the unmonitored residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Constellation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    SatSubset,
    Constellation(Constellation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultMode {
    pub id: usize,
    pub kind: ModeKind,
    /// Measurement indices hypothesised faulty, ascending.
    pub excluded: Vec<usize>,
    pub prior: f64,
    /// False when the prior was moved into `p_not_monitored`.
    pub monitored: bool,
}

impl FaultMode {
    pub fn is_single(&self) -> bool {
        self.kind == ModeKind::SatSubset && self.excluded.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatModel {
    pub modes: Vec<FaultMode>,
    pub p_h0: f64,
    pub p_not_monitored: f64,
    pub k_max: usize,
    pub n_fault_modes: usize,
}

impl ThreatModel {
    pub fn monitored(&self) -> impl Iterator<Item = &FaultMode> {
        self.modes.iter().filter(|m| m.monitored)
    }

    pub fn n_monitored(&self) -> usize {
        self.modes.iter().filter(|m| m.monitored).count()
    }

    /// `P_H0 + sum of priors + P_not_monitored`, counting unmonitored priors once.
    pub fn total_mass(&self) -> f64 {
        self.p_h0 + self.monitored().map(|m| m.prior).sum::<f64>() + self.p_not_monitored
    }
}

/// Per-constellation fault prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationPrior {
    pub constellation: Constellation,
    pub p_const: f64,
}

fn ln_choose(n: usize, k: usize) -> f64 {
    statrs::function::factorial::ln_binomial(n as u64, k as u64)
}

/// `P(exactly k of n independent faults)`.
pub fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// `P(more than k of n independent faults)`, summed upward for accuracy.
pub fn binomial_upper_tail(n: usize, k: usize, p: f64) -> f64 {
    ((k + 1)..=n).map(|j| binomial_pmf(n, j, p)).sum()
}

/// Probability that two or more constellations are faulty at once.
fn multi_constellation_prob(p_const: &[f64]) -> f64 {
    // dist[j] = P(exactly j faulty so far); summed upward to avoid the
    // cancellation in 1 - P(none) - P(one).
    let mut dist = vec![1.0];
    for &p in p_const {
        let mut next = vec![0.0; dist.len() + 1];
        for (j, d) in dist.iter().enumerate() {
            next[j] += d * (1.0 - p);
            next[j + 1] += d * p;
        }
        dist = next;
    }
    dist.iter().skip(2).sum()
}

/// Which single-constellation events stay unmonitored: all of them for a
/// single-constellation user, otherwise the smallest priors that still fit
/// under `p_thres` together with `base`.
fn unmonitored_constellations(p_const: &[f64], base: f64, p_thres: f64) -> Vec<bool> {
    let c = p_const.len();
    if c <= 1 {
        return vec![true; c];
    }
    let singles: Vec<f64> = (0..c)
        .map(|i| {
            p_const[i] * p_const.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| 1.0 - p).product::<f64>()
        })
        .collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|a, b| singles[*a].total_cmp(&singles[*b]));
    let mut out = vec![false; c];
    let mut acc = base;
    for i in order {
        if singles[i] > 0.0 && acc + singles[i] <= p_thres {
            acc += singles[i];
            out[i] = true;
        } else {
            break;
        }
    }
    out
}

/// Smallest `k_max >= 1` whose satellite-fault excess probability is within
/// `p_thres`, and the resulting unmonitored probability.
pub fn determine_kmax(n_sats_per_const: &[usize], p_sat: f64, p_const: &[f64], p_thres: f64) -> (usize, f64) {
    let n: usize = n_sats_per_const.iter().sum();
    let mut k = 1;
    while k < n && binomial_upper_tail(n, k, p_sat) > p_thres {
        k += 1;
    }
    (k, unmonitored_probability(n, k, p_sat, p_const, p_thres))
}

fn unmonitored_probability(n: usize, k_max: usize, p_sat: f64, p_const: &[f64], p_thres: f64) -> f64 {
    let no_const: f64 = p_const.iter().map(|p| 1.0 - p).product();
    let base = no_const * binomial_upper_tail(n, k_max, p_sat) + multi_constellation_prob(p_const);
    let unmon = unmonitored_constellations(p_const, base, p_thres);
    let extra: f64 = (0..p_const.len())
        .filter(|&i| unmon[i])
        .map(|i| {
            p_const[i] * p_const.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| 1.0 - p).product::<f64>()
        })
        .sum();
    base + extra
}

/// Number of modes `sum_{k=1..k_max} C(n, k)` plus one per constellation when
/// more than one is present.
pub fn mode_count(n: usize, k_max: usize, n_consts: usize) -> usize {
    let mut total = 0usize;
    let mut c = 1usize;
    for k in 1..=k_max.min(n) {
        c = c * (n - k + 1) / k;
        total += c;
    }
    total + if n_consts > 1 { n_consts } else { 0 }
}

fn combinations(n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Enumerates satellite subsets of size `1..=k_max` (singles first, in
/// measurement order) followed by one mode per constellation when two or more
/// are present. A constellation with at most `k_max` members in view folds
/// its prior into the matching subset mode instead.
pub fn enumerate_modes(
    n: usize,
    k_max: usize,
    partition: &[(Constellation, Vec<usize>)],
    p_sat: f64,
    p_const: &[ConstellationPrior],
    p_thres: f64,
) -> Result<ThreatModel> {
    let n_states = 3 + partition.len();
    if k_max == 0 || n < n_states + k_max {
        return Err(Error::InsufficientRedundancy(format!(
            "{n} measurements cannot support k_max = {k_max} with {n_states} states"
        )));
    }
    let pc: Vec<f64> = partition
        .iter()
        .map(|(c, _)| {
            p_const
                .iter()
                .find(|p| p.constellation == *c)
                .map(|p| p.p_const)
                .ok_or_else(|| Error::Config(format!("no constellation prior for {c}")))
        })
        .collect::<Result<_>>()?;
    let no_const: f64 = pc.iter().map(|p| 1.0 - p).product();
    let mut modes = Vec::new();
    for k in 1..=k_max {
        let prior = binomial_pmf(n, k, p_sat) / ln_choose(n, k).exp() * no_const;
        let mut sets = Vec::new();
        combinations(n, k, &mut sets);
        for excluded in sets {
            modes.push(FaultMode { id: modes.len() + 1, kind: ModeKind::SatSubset, excluded, prior, monitored: true });
        }
    }
    let p_nm = unmonitored_probability(n, k_max, p_sat, &pc, p_thres);
    if partition.len() > 1 {
        let base = no_const * binomial_upper_tail(n, k_max, p_sat) + multi_constellation_prob(&pc);
        let unmon = unmonitored_constellations(&pc, base, p_thres);
        for (i, (c, idx)) in partition.iter().enumerate() {
            let prior = pc[i] * pc.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| 1.0 - p).product::<f64>();
            // A constellation small enough to coincide with a satellite
            // subset shares that subset's mode.
            if let Some(m) = modes.iter_mut().find(|m| m.kind == ModeKind::SatSubset && m.excluded == *idx) {
                if !unmon[i] {
                    m.prior += prior;
                }
                continue;
            }
            modes.push(FaultMode {
                id: modes.len() + 1,
                kind: ModeKind::Constellation(*c),
                excluded: idx.clone(),
                prior,
                monitored: !unmon[i],
            });
        }
    }
    let p_h0 = no_const * (1.0 - p_sat).powi(n as i32);
    let n_fault_modes = modes.len();
    Ok(ThreatModel { modes, p_h0, p_not_monitored: p_nm, k_max, n_fault_modes })
}
