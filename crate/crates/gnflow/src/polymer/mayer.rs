//! Mayer expansion `exp(sum E) = sum_{disjoint} prod K` and the polymer logarithm
//! `sum_{disjoint} prod K = exp(sum E#)` for scalar activities on a small block torus.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{connected_sets, gamma_n, BlockTorus, GammaParams, PavedSet};
use crate::error::{invalid, Error, Result};

/// Hard limit on the number of blocks for subset-lattice enumeration.
pub const MAYER_MAX_BLOCKS: usize = 16;
/// Hard limit on the number of nonzero activities for the direct enumeration oracle.
pub const ENUMERATION_MAX_SETS: usize = 20;

/// Scalar activities `E(X)` keyed by block mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarFamily {
    pub torus: BlockTorus,
    pub values: BTreeMap<u32, f64>,
}

impl ScalarFamily {
    pub fn new(torus: BlockTorus) -> Result<Self> {
        if torus.len() > MAYER_MAX_BLOCKS {
            return Err(Error::Capacity(format!(
                "{} blocks exceed the {MAYER_MAX_BLOCKS}-block limit of exhaustive enumeration",
                torus.len()
            )));
        }
        Ok(Self { torus, values: BTreeMap::new() })
    }

    pub fn insert(&mut self, x: &PavedSet, v: f64) {
        let m = x.mask(&self.torus);
        *self.values.entry(m).or_default() += v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.values().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn full(&self) -> usize {
        1 << self.torus.len()
    }

    /// `max_anchor sum_{X containing anchor} |E(X)| Gamma_n(X)`.
    pub fn gamma_norm(&self, params: &GammaParams, n: u32) -> Result<f64> {
        weighted_norm(&self.torus, self.values.iter().map(|(&m, &v)| (m, v)), params, n)
    }
}

fn weighted_norm(
    torus: &BlockTorus,
    values: impl Iterator<Item = (u32, f64)>,
    params: &GammaParams,
    n: u32,
) -> Result<f64> {
    let mut per_anchor = vec![0.0; torus.len()];
    for (m, v) in values {
        if v == 0.0 || m == 0 {
            continue;
        }
        let w = v.abs() * gamma_n(&PavedSet::from_mask(torus, m)?, torus, params, n);
        for (b, acc) in per_anchor.iter_mut().enumerate() {
            if m >> b & 1 == 1 {
                *acc += w;
            }
        }
    }
    Ok(per_anchor.into_iter().fold(0.0, f64::max))
}

/// Random activities with `|E(X)| <= max_abs` on every connected set of at most `max_size` blocks.
pub fn random_activities(torus: BlockTorus, max_size: usize, max_abs: f64, seed: u64) -> Result<ScalarFamily> {
    let mut f = ScalarFamily::new(torus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in connected_sets(&torus, max_size) {
        f.insert(&x, rng.random_range(-max_abs..=max_abs));
    }
    Ok(f)
}

/// Lowest set bit of a nonzero mask.
fn low(m: usize) -> usize {
    m & m.wrapping_neg()
}

/// Submasks of `s` containing `bit`, excluding `s` itself when `proper`.
fn rooted_submasks(s: usize, bit: usize, proper: bool) -> impl Iterator<Item = usize> {
    let rest = s & !bit;
    let mut sub = rest;
    let mut done = false;
    std::iter::from_fn(move || loop {
        if done {
            return None;
        }
        let y = sub | bit;
        if sub == 0 {
            done = true;
        } else {
            sub = (sub - 1) & rest;
        }
        if !(proper && y == s) {
            return Some(y);
        }
    })
}

/// `P(S) = exp(sum_{X subset S} E(X))` for every mask `S`.
fn product_partition(f: &ScalarFamily) -> Vec<f64> {
    let nb = f.torus.len();
    let mut sums = vec![0.0; f.full()];
    for (&m, &v) in &f.values {
        sums[m as usize] += v;
    }
    for b in 0..nb {
        for s in 0..sums.len() {
            if s >> b & 1 == 1 {
                sums[s] += sums[s & !(1 << b)];
            }
        }
    }
    sums.into_iter().map(f64::exp).collect()
}

/// `K(Y) = sum over overlap-connected families of distinct sets with union Y of prod (e^{E(X_i)} - 1)`,
/// from the subset-lattice recursion `P(S) = P(S - m) + sum_{Y ni m} K(Y) P(S - Y)`.
pub fn mayer_k(f: &ScalarFamily) -> Vec<f64> {
    let p = product_partition(f);
    let mut k = vec![0.0; p.len()];
    for s in 1..p.len() {
        let m = low(s);
        let mut rest = p[s] - p[s & !m];
        for y in rooted_submasks(s, m, true) {
            rest -= k[y] * p[s & !y];
        }
        k[s] = rest;
    }
    k
}

/// `Xi(S) = sum over disjoint families of polymers inside S of prod K`.
pub fn polymer_partition(k: &[f64]) -> Vec<f64> {
    let mut xi = vec![0.0; k.len()];
    xi[0] = 1.0;
    for s in 1..k.len() {
        let m = low(s);
        let mut acc = xi[s & !m];
        for y in rooted_submasks(s, m, false) {
            acc += k[y] * xi[s & !y];
        }
        xi[s] = acc;
    }
    xi
}

/// `E#(Y)` with `log Xi(S) = sum_{Y subset S} E#(Y)`, by Moebius inversion on the subset lattice.
pub fn e_sharp(xi: &[f64]) -> Result<Vec<f64>> {
    if let Some((s, v)) = xi.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Domain(format!("polymer partition function {v} is not positive on mask {s:#b}")));
    }
    let mut e: Vec<f64> = xi.iter().map(|v| v.ln()).collect();
    let nb = xi.len().trailing_zeros();
    for b in 0..nb {
        for s in 0..e.len() {
            if s >> b & 1 == 1 {
                e[s] -= e[s & !(1 << b)];
            }
        }
    }
    e[0] = 0.0;
    Ok(e)
}

/// Direct enumeration of `K` over all subfamilies of the nonzero activities.
pub fn mayer_k_enumerate(f: &ScalarFamily) -> Result<BTreeMap<u32, f64>> {
    let sets: Vec<(u32, f64)> = f.values.iter().filter(|(_, v)| **v != 0.0).map(|(&m, &v)| (m, v.exp_m1())).collect();
    if sets.len() > ENUMERATION_MAX_SETS {
        return invalid(format!("{} activities exceed the enumeration limit {ENUMERATION_MAX_SETS}", sets.len()));
    }
    let mut k = BTreeMap::new();
    for sel in 1u32..1 << sets.len() {
        let members: Vec<u32> = (0..sets.len()).filter(|&i| sel >> i & 1 == 1).map(|i| sets[i].0).collect();
        if !overlap_connected(&members) {
            continue;
        }
        let prod: f64 = (0..sets.len()).filter(|&i| sel >> i & 1 == 1).map(|i| sets[i].1).product();
        let union = members.iter().fold(0, |u, m| u | m);
        *k.entry(union).or_insert(0.0) += prod;
    }
    Ok(k)
}

/// Overlap graph of the tuple is connected.
pub fn overlap_connected(tuple: &[u32]) -> bool {
    let n = tuple.len();
    if n == 0 {
        return false;
    }
    let mut seen = 1u32;
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            if seen >> i & 1 == 0 && (0..n).any(|j| seen >> j & 1 == 1 && tuple[i] & tuple[j] != 0) {
                seen |= 1 << i;
                changed = true;
            }
        }
    }
    seen.count_ones() as usize == n
}

/// Largest tuple accepted by [`ursell`].
pub const URSELL_MAX: usize = 6;

/// Truncated function `rho^T(X_1..X_n) = sum over connected spanning subgraphs G of the
/// overlap graph of (-1)^{|G|}`.
pub fn ursell(tuple: &[u32]) -> Result<f64> {
    let n = tuple.len();
    if n == 0 || n > URSELL_MAX {
        return invalid(format!("rho^T is evaluated for 1..={URSELL_MAX} sets"));
    }
    let edges: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| tuple[i] & tuple[j] != 0).collect();
    let mut total = 0.0;
    for sel in 0u32..1 << edges.len() {
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(c: &mut [usize], mut i: usize) -> usize {
            while c[i] != i {
                c[i] = c[c[i]];
                i = c[i];
            }
            i
        }
        for (e, &(i, j)) in edges.iter().enumerate() {
            if sel >> e & 1 == 1 {
                let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                comp[a] = b;
            }
        }
        let root = find(&mut comp, 0);
        if (0..n).all(|i| find(&mut comp, i) == root) {
            total += if sel.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    Ok(total)
}

/// `E#(Y) ~ sum_{n <= order} 1/n! sum_{(X_1..X_n), union = Y} rho^T prod K(X_i)` over the nonzero `K`.
pub fn e_sharp_series(k: &BTreeMap<u32, f64>, order: usize) -> Result<BTreeMap<u32, f64>> {
    let support: Vec<(u32, f64)> = k.iter().filter(|(_, v)| **v != 0.0).map(|(&m, &v)| (m, v)).collect();
    let mut out = BTreeMap::new();
    let mut fact = 1.0;
    for n in 1..=order.min(URSELL_MAX) {
        fact *= n as f64;
        let mut idx = vec![0usize; n];
        'tuples: loop {
            let tuple: Vec<u32> = idx.iter().map(|&i| support[i].0).collect();
            if overlap_connected(&tuple) {
                let w = ursell(&tuple)? * idx.iter().map(|&i| support[i].1).product::<f64>() / fact;
                let union = tuple.iter().fold(0, |u, m| u | m);
                *out.entry(union).or_insert(0.0) += w;
            }
            for pos in 0..n {
                idx[pos] += 1;
                if idx[pos] < support.len() {
                    continue 'tuples;
                }
                idx[pos] = 0;
            }
            break;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct MayerReport {
    pub blocks: usize,
    pub activities: usize,
    pub max_activity: f64,
    pub polymers: usize,
    pub log_partition: f64,
    pub sum_e_sharp: f64,
    /// `|exp(sum E#) - Xi| / Xi`.
    pub identity_error: f64,
    /// `max |E#(X) - E(X)|`; the logarithm of a gas generated by scalar activities returns them.
    pub e_sharp_vs_e: f64,
    /// `|E#|_Gamma`.
    pub e_sharp_norm: f64,
    /// `||E||_{Gamma_4}`.
    pub e_norm: f64,
    pub ratio: f64,
}

/// Full pipeline `E -> K -> Xi -> E#` with norms.
pub fn mayer_cluster_log(f: &ScalarFamily, params: &GammaParams) -> Result<(Vec<f64>, Vec<f64>, MayerReport)> {
    let k = mayer_k(f);
    let xi = polymer_partition(&k);
    let es = e_sharp(&xi)?;
    let top = xi.len() - 1;
    let sum_e_sharp: f64 = es.iter().sum();
    let identity_error = (sum_e_sharp.exp() - xi[top]).abs() / xi[top];
    let mut e_full = vec![0.0; xi.len()];
    for (&m, &v) in &f.values {
        e_full[m as usize] = v;
    }
    let e_sharp_vs_e = es.iter().zip(&e_full).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let e_sharp_norm = weighted_norm(&f.torus, es.iter().enumerate().map(|(m, &v)| (m as u32, v)), params, 0)?;
    let e_norm = f.gamma_norm(params, 4)?;
    let report = MayerReport {
        blocks: f.torus.len(),
        activities: f.values.len(),
        max_activity: f.max_abs(),
        polymers: k.iter().filter(|v| **v != 0.0).count(),
        log_partition: xi[top].ln(),
        sum_e_sharp,
        identity_error,
        e_sharp_vs_e,
        e_sharp_norm,
        e_norm,
        ratio: e_sharp_norm / e_norm,
    };
    Ok((k, es, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct MayerStability {
    pub seeds: Vec<u64>,
    pub ratios: Vec<f64>,
    pub identity_errors: Vec<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl MayerStability {
    pub fn spread(&self) -> f64 {
        self.max_ratio / self.min_ratio
    }

    pub fn passed(&self, tol: f64, max_spread: f64) -> bool {
        self.identity_errors.iter().all(|e| *e < tol)
            && self.ratios.iter().all(|r| r.is_finite())
            && self.spread() <= max_spread
    }
}

/// Runs [`mayer_cluster_log`] on random activities for each seed.
pub fn mayer_stability(
    torus: BlockTorus,
    max_size: usize,
    max_abs: f64,
    seeds: &[u64],
    params: &GammaParams,
) -> Result<MayerStability> {
    let mut ratios = Vec::new();
    let mut identity_errors = Vec::new();
    for &s in seeds {
        let f = random_activities(torus, max_size, max_abs, s)?;
        let (_, _, r) = mayer_cluster_log(&f, params)?;
        ratios.push(r.ratio);
        identity_errors.push(r.identity_error);
    }
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(MayerStability { seeds: seeds.to_vec(), ratios, identity_errors, min_ratio, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3() -> BlockTorus {
        BlockTorus::new([3, 3]).unwrap()
    }

    #[test]
    fn one_polymer_gas() {
        let t = t3();
        let mut f = ScalarFamily::new(t).unwrap();
        f.insert(&PavedSet::single(&t, [1, 1]).unwrap(), 0.03);
        let (k, es, r) = mayer_cluster_log(&f, &GammaParams::default()).unwrap();
        let m = 1 << t.index([1, 1]);
        assert!((k[m] - 0.03f64.exp_m1()).abs() < 1e-16);
        assert!((es[m] - 0.03).abs() < 1e-15);
        assert_eq!(r.polymers, 1);
    }

    #[test]
    fn far_blocks_factorize() {
        let t = BlockTorus::new([4, 1]).unwrap();
        let mut f = ScalarFamily::new(t).unwrap();
        f.insert(&PavedSet::single(&t, [0, 0]).unwrap(), 0.02);
        f.insert(&PavedSet::single(&t, [2, 0]).unwrap(), -0.04);
        let (_, es, _) = mayer_cluster_log(&f, &GammaParams::default()).unwrap();
        assert!(es[0b101].abs() < 1e-16);
    }

    #[test]
    fn recursion_matches_enumeration() {
        let t = BlockTorus::new([3, 2]).unwrap();
        let f = random_activities(t, 2, 0.05, 5).unwrap();
        let k = mayer_k(&f);
        let kk = mayer_k_enumerate(&f).unwrap();
        for (m, v) in k.iter().enumerate() {
            let e = kk.get(&(m as u32)).copied().unwrap_or(0.0);
            assert!((v - e).abs() < 1e-14, "mask {m:#b}: {v} vs {e}");
        }
    }

    #[test]
    fn identity_and_series() {
        let f = random_activities(t3(), 2, 0.05, 9).unwrap();
        let (k, es, r) = mayer_cluster_log(&f, &GammaParams::default()).unwrap();
        assert!(r.identity_error < 1e-10 && r.e_sharp_vs_e < 1e-12, "{r:?}");
        // small K gas: the truncated cluster series approaches the Moebius inversion
        let t = BlockTorus::new([2, 1]).unwrap();
        let mut g = ScalarFamily::new(t).unwrap();
        g.insert(&PavedSet::single(&t, [0, 0]).unwrap(), 1e-3);
        g.insert(&PavedSet::new(&t, vec![[0, 0], [1, 0]]).unwrap(), 2e-3);
        let kg = mayer_k(&g);
        let kmap: BTreeMap<u32, f64> = kg.iter().enumerate().map(|(m, &v)| (m as u32, v)).collect();
        let series = e_sharp_series(&kmap, 4).unwrap();
        let exact = e_sharp(&polymer_partition(&kg)).unwrap();
        for (m, v) in series {
            assert!((v - exact[m as usize]).abs() < 1e-13, "{m}: {v} vs {}", exact[m as usize]);
        }
        assert!(k.len() == es.len());
    }

    #[test]
    fn ursell_values() {
        // complete overlap graph on n vertices: (-1)^{n-1} (n-1)!
        assert_eq!(ursell(&[1, 1, 1]).unwrap(), 2.0);
        assert_eq!(ursell(&[1, 1, 1, 1]).unwrap(), -6.0);
        for tuple in [[1u32, 2, 2, 4], [1, 1, 2, 2], [1, 3, 4, 4]] {
            let r = ursell(&tuple).unwrap();
            if !overlap_connected(&tuple) {
                assert_eq!(r, 0.0);
            }
        }
    }

    #[test]
    fn capacity_limit() {
        assert!(matches!(ScalarFamily::new(BlockTorus::new([5, 5]).unwrap()), Err(Error::Capacity(_))));
    }
}
