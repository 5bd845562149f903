use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::seed;

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ratios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl Ratios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = Self { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config(format!("split ratios must be >= 0, got {a:?}")));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items over `weights` (summing to 1).
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.partial_cmp(&fa).expect("finite").then(a.cmp(&b))
    });
    for k in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Splits item indices into train/val/test, stratified on `labels`.
///
/// Split totals follow largest-remainder rounding of `n * ratio`; each class
/// gets `floor(n_c * ratio)` per split plus at most one extra item, with the
/// extras placed by descending fractional remainder so that both the class
/// sizes and the split totals are met exactly. Indices within each split are
/// in ascending (input) order.
pub fn stratified_partition(labels: &[usize], ratios: &Ratios, seed: u64) -> Result<[Vec<usize>; 3]> {
    ratios.validate()?;
    let weights = ratios.as_array();
    let targets = apportion(labels.len(), &weights);

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, 0, 0x5b1d));
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
    }
    let classes: Vec<&Vec<usize>> = by_class.values().collect();

    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(classes.len());
    let mut fracs: Vec<[f64; 3]> = Vec::with_capacity(classes.len());
    let mut supply: Vec<usize> = Vec::with_capacity(classes.len());
    for members in &classes {
        let n = members.len();
        let mut a = [0usize; 3];
        let mut f = [0f64; 3];
        for k in 0..3 {
            let q = n as f64 * weights[k];
            a[k] = q.floor() as usize;
            f[k] = q - q.floor();
        }
        supply.push(n - a.iter().sum::<usize>());
        alloc.push(a);
        fracs.push(f);
    }
    let mut demand = [0usize; 3];
    for k in 0..3 {
        let used: usize = alloc.iter().map(|a| a[k]).sum();
        demand[k] = targets[k]
            .checked_sub(used)
            .ok_or_else(|| Error::Internal("split floor exceeds target".into()))?;
    }

    let mut extra = vec![[false; 3]; classes.len()];
    let mut cells: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|c| (0..3).map(move |k| (c, k)))
        .filter(|&(_, k)| weights[k] > 0.0)
        .collect();
    cells.sort_by(|&(ca, ka), &(cb, kb)| {
        fracs[cb][kb]
            .partial_cmp(&fracs[ca][ka])
            .expect("finite")
            .then(ca.cmp(&cb))
            .then(ka.cmp(&kb))
    });
    for &(c, k) in &cells {
        if supply[c] > 0 && demand[k] > 0 {
            extra[c][k] = true;
            supply[c] -= 1;
            demand[k] -= 1;
        }
    }
    while demand.iter().any(|&d| d > 0) {
        if !augment_extras(&mut extra, &mut supply, &mut demand, &weights) {
            return Err(Error::Internal(format!(
                "stratified split cannot meet totals {targets:?}"
            )));
        }
    }

    let mut parts: [Vec<usize>; 3] = Default::default();
    for (c, members) in classes.iter().enumerate() {
        let mut start = 0;
        for k in 0..3 {
            let take = alloc[c][k] + extra[c][k] as usize;
            parts[k].extend_from_slice(&members[start..start + take]);
            start += take;
        }
        if start != members.len() {
            return Err(Error::Internal("class allocation does not cover class".into()));
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    if parts.iter().map(Vec::len).collect::<Vec<_>>() != targets {
        return Err(Error::Internal("split totals mismatch".into()));
    }
    Ok(parts)
}

/// One augmenting path in the class/split bipartite graph: moves an extra unit
/// from some class with spare supply to a split with unmet demand.
fn augment_extras(
    extra: &mut [[bool; 3]],
    supply: &mut [usize],
    demand: &mut [usize; 3],
    weights: &[f64; 3],
) -> bool {
    let n = extra.len();
    // Nodes: classes 0..n, splits n..n+3.
    let mut prev: Vec<Option<usize>> = vec![None; n + 3];
    let mut visited = vec![false; n + 3];
    let mut queue = VecDeque::new();
    for c in 0..n {
        if supply[c] > 0 {
            visited[c] = true;
            queue.push_back(c);
        }
    }
    while let Some(node) = queue.pop_front() {
        if node < n {
            for k in 0..3 {
                if weights[k] > 0.0 && !extra[node][k] && !visited[n + k] {
                    visited[n + k] = true;
                    prev[n + k] = Some(node);
                    if demand[k] > 0 {
                        // Walk back flipping cells.
                        let mut cur = n + k;
                        while let Some(p) = prev[cur] {
                            if p < n {
                                extra[p][cur - n] = true;
                            } else {
                                extra[cur][p - n] = false;
                            }
                            cur = p;
                        }
                        supply[cur] -= 1;
                        demand[k] -= 1;
                        return true;
                    }
                    queue.push_back(n + k);
                }
            }
        } else {
            let k = node - n;
            for c in 0..n {
                if extra[c][k] && !visited[c] {
                    visited[c] = true;
                    prev[c] = Some(node);
                    queue.push_back(c);
                }
            }
        }
    }
    false
}

pub fn stratified_split(d: &Dataset, ratios: &Ratios, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if d.is_empty() {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    let [train, val, test] = stratified_partition(&d.labels(), ratios, seed)?;
    Ok((
        d.select(&train, SplitTag::Train),
        d.select(&val, SplitTag::Val),
        d.select(&test, SplitTag::Test),
    ))
}
