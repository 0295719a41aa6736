//! Paved sets on a block torus, tree weights `Theta` and `Gamma`, localized
//! families, the extraction of local parts, reblocking, and Mayer logarithms.

mod local;
mod mayer;

pub use local::*;
pub use mayer::*;

use std::collections::VecDeque;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Periodic lattice of unit blocks `Z^2 / (dims[0] Z x dims[1] Z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockTorus {
    pub dims: [usize; 2],
}

impl BlockTorus {
    pub fn new(dims: [usize; 2]) -> Result<Self> {
        if dims[0] == 0 || dims[1] == 0 {
            return invalid("block torus must be nonempty");
        }
        Ok(Self { dims })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, b: [usize; 2]) -> usize {
        b[0] + self.dims[0] * b[1]
    }

    pub fn block(&self, i: usize) -> [usize; 2] {
        [i % self.dims[0], i / self.dims[0]]
    }

    pub fn wrap(&self, b: [i64; 2]) -> [usize; 2] {
        [b[0].rem_euclid(self.dims[0] as i64) as usize, b[1].rem_euclid(self.dims[1] as i64) as usize]
    }

    fn axis_distance(&self, a: usize, b: usize, mu: usize) -> usize {
        let d = a.abs_diff(b);
        d.min(self.dims[mu] - d)
    }

    /// `l^inf` distance between block centers.
    pub fn distance(&self, a: [usize; 2], b: [usize; 2]) -> usize {
        self.axis_distance(a[0], b[0], 0).max(self.axis_distance(a[1], b[1], 1))
    }

    /// Blocks sharing an edge.
    pub fn adjacent(&self, a: [usize; 2], b: [usize; 2]) -> bool {
        a != b && self.axis_distance(a[0], b[0], 0) + self.axis_distance(a[1], b[1], 1) == 1
    }
}

/// Nonempty union of distinct unit blocks, stored sorted.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PavedSet {
    blocks: Vec<[usize; 2]>,
}

impl PavedSet {
    pub fn new(torus: &BlockTorus, mut blocks: Vec<[usize; 2]>) -> Result<Self> {
        if blocks.is_empty() {
            return invalid("paved sets are nonempty");
        }
        if blocks.iter().any(|b| b[0] >= torus.dims[0] || b[1] >= torus.dims[1]) {
            return invalid(format!("block outside the {}x{} torus", torus.dims[0], torus.dims[1]));
        }
        blocks.sort_by_key(|b| (b[1], b[0]));
        let before = blocks.len();
        blocks.dedup();
        if blocks.len() != before {
            return invalid("paved set lists a block twice");
        }
        Ok(Self { blocks })
    }

    pub fn single(torus: &BlockTorus, b: [usize; 2]) -> Result<Self> {
        Self::new(torus, vec![b])
    }

    pub fn from_mask(torus: &BlockTorus, mask: u32) -> Result<Self> {
        Self::new(torus, (0..torus.len()).filter(|&i| mask >> i & 1 == 1).map(|i| torus.block(i)).collect())
    }

    pub fn mask(&self, torus: &BlockTorus) -> u32 {
        self.blocks.iter().fold(0, |m, &b| m | 1 << torus.index(b))
    }

    /// Parse `"x,y; x,y; ..."`.
    pub fn parse(torus: &BlockTorus, s: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let xy: Vec<&str> = part.split(',').map(str::trim).collect();
            match xy.as_slice() {
                [x, y] => match (x.parse::<usize>(), y.parse::<usize>()) {
                    (Ok(x), Ok(y)) => blocks.push([x, y]),
                    _ => return invalid(format!("bad block `{part}`")),
                },
                _ => return invalid(format!("bad block `{part}`; expected `x,y`")),
            }
        }
        Self::new(torus, blocks)
    }

    pub fn blocks(&self) -> &[[usize; 2]] {
        &self.blocks
    }

    /// Volume `|X|`.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, b: [usize; 2]) -> bool {
        self.blocks.binary_search_by_key(&(b[1], b[0]), |c| (c[1], c[0])).is_ok()
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut blocks = self.blocks.clone();
        blocks.extend(other.blocks.iter().filter(|b| !self.contains(**b)));
        blocks.sort_by_key(|b| (b[1], b[0]));
        Self { blocks }
    }

    /// Edge connectivity.
    pub fn is_connected(&self, torus: &BlockTorus) -> bool {
        let n = self.blocks.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if !seen[j] && torus.adjacent(self.blocks[i], self.blocks[j]) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// `min l^inf` distance between blocks of the two sets.
    pub fn distance(&self, other: &Self, torus: &BlockTorus) -> usize {
        self.blocks
            .iter()
            .flat_map(|&a| other.blocks.iter().map(move |&b| torus.distance(a, b)))
            .min()
            .unwrap_or(0)
    }
}

/// Connected (by shared edges) with at most four blocks.
pub fn small_set(x: &PavedSet, torus: &BlockTorus) -> bool {
    x.len() <= 4 && x.is_connected(torus)
}

/// `theta(s) = max(1, s)^power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeWeight {
    pub power: i32,
}

impl Default for TreeWeight {
    fn default() -> Self {
        Self { power: 3 }
    }
}

impl TreeWeight {
    pub fn theta(&self, s: f64) -> f64 {
        s.max(1.0).powi(self.power)
    }
}

/// `Gamma(X) = A^{|X|} Theta(X)`, `Gamma_n(X) = e^{n|X|} Gamma(X)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub a: f64,
    pub theta: TreeWeight,
}

impl GammaParams {
    /// `A = L^4`.
    pub fn for_scale(l: u32) -> Self {
        Self { a: (l as f64).powi(4), theta: TreeWeight::default() }
    }
}

impl Default for GammaParams {
    fn default() -> Self {
        Self::for_scale(2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeWeights {
    pub theta: f64,
    pub gamma: f64,
    pub gamma_n: f64,
    pub n: u32,
    /// Minimum spanning tree as index pairs into the set's blocks.
    pub tree: Vec<(usize, usize)>,
}

/// `Theta(X)` by Kruskal on `log theta(|l|)` with lexicographic tie-breaking.
pub fn theta_tree(x: &PavedSet, torus: &BlockTorus, w: &TreeWeight) -> (f64, Vec<(usize, usize)>) {
    let b = x.blocks();
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..b.len() {
        for j in i + 1..b.len() {
            edges.push((torus.distance(b[i], b[j]), i, j));
        }
    }
    edges.sort();
    let mut uf = UnionFind::<usize>::new(b.len());
    let mut theta = 1.0;
    let mut tree = Vec::new();
    for (d, i, j) in edges {
        if uf.union(i, j) {
            theta *= w.theta(d as f64);
            tree.push((i, j));
        }
    }
    (theta, tree)
}

pub fn theta_gamma(x: &PavedSet, torus: &BlockTorus, params: &GammaParams, n: u32) -> TreeWeights {
    let (theta, tree) = theta_tree(x, torus, &params.theta);
    let vol = x.len() as i32;
    let gamma = params.a.powi(vol) * theta;
    TreeWeights { theta, gamma, gamma_n: (n as f64 * vol as f64).exp() * gamma, n, tree }
}

pub fn gamma_n(x: &PavedSet, torus: &BlockTorus, params: &GammaParams, n: u32) -> f64 {
    theta_gamma(x, torus, params, n).gamma_n
}

/// Largest set size accepted by [`theta_exhaustive`].
pub const TREE_ORACLE_MAX: usize = 7;

/// `Theta(X)` by enumerating all labelled trees through Pruefer sequences.
pub fn theta_exhaustive(x: &PavedSet, torus: &BlockTorus, w: &TreeWeight) -> Result<f64> {
    let n = x.len();
    if n > TREE_ORACLE_MAX {
        return invalid(format!("tree enumeration is limited to {TREE_ORACLE_MAX} blocks"));
    }
    if n <= 1 {
        return Ok(1.0);
    }
    let b = x.blocks();
    let weight = |i: usize, j: usize| w.theta(torus.distance(b[i], b[j]) as f64);
    if n == 2 {
        return Ok(weight(0, 1));
    }
    let mut best = f64::INFINITY;
    let mut seq = vec![0usize; n - 2];
    loop {
        let mut degree = vec![1usize; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut prod = 1.0;
        for &s in &seq {
            let leaf = (0..n).find(|&i| degree[i] == 1).expect("a leaf exists");
            prod *= weight(leaf, s);
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
        prod *= weight(rest[0], rest[1]);
        best = best.min(prod);
        let mut k = 0;
        while k < seq.len() {
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
        if k == seq.len() {
            break;
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScalingCheck {
    pub s: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `theta(s/L) <= L^{-3} theta(s)` at integer distances `1..=max_s`.
pub fn theta_scaling_check(w: &TreeWeight, l: u32, max_s: usize) -> Vec<ScalingCheck> {
    let lf = l as f64;
    (1..=max_s)
        .map(|s| {
            let lhs = w.theta(s as f64 / lf);
            let rhs = lf.powi(-3) * w.theta(s as f64);
            ScalingCheck { s, lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-12) }
        })
        .collect()
}

/// All edge-connected paved sets of the torus with at most `max` blocks.
pub fn connected_sets(torus: &BlockTorus, max: usize) -> Vec<PavedSet> {
    let mut out: Vec<PavedSet> = Vec::new();
    let mut frontier: Vec<PavedSet> =
        (0..torus.len()).map(|i| PavedSet { blocks: vec![torus.block(i)] }).collect();
    for size in 1..=max {
        out.extend(frontier.iter().cloned());
        if size == max {
            break;
        }
        let mut next = std::collections::BTreeSet::new();
        for x in &frontier {
            for &b in x.blocks() {
                for d in [[1i64, 0], [-1, 0], [0, 1], [0, -1]] {
                    let nb = torus.wrap([b[0] as i64 + d[0], b[1] as i64 + d[1]]);
                    if !x.contains(nb) {
                        next.insert(x.union(&PavedSet { blocks: vec![nb] }));
                    }
                }
            }
        }
        frontier = next.into_iter().collect();
    }
    out
}


#[derive(Clone, Copy, Debug, Serialize)]
pub struct SubmultiplicativityCheck {
    pub pairs: usize,
    /// Max of `Gamma(X u Y) / (Gamma(X) Gamma(Y) theta(d(X, Y)))`.
    pub max_ratio: f64,
}

impl SubmultiplicativityCheck {
    pub fn holds(&self) -> bool {
        self.max_ratio <= 1.0 + 1e-12
    }
}

/// Samples disjoint connected pairs of at most `max_size` blocks and checks submultiplicativity of `Gamma`.
pub fn submultiplicativity_check(torus: &BlockTorus, params: &GammaParams, pairs: usize, max_size: usize, seed: u64) -> SubmultiplicativityCheck {
    use rand::{Rng, SeedableRng};
    let sets = connected_sets(torus, max_size);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut done = 0;
    while done < pairs {
        let x = &sets[rng.random_range(0..sets.len())];
        let y = &sets[rng.random_range(0..sets.len())];
        if x.blocks().iter().any(|&b| y.contains(b)) {
            continue;
        }
        let g = |s: &PavedSet| theta_gamma(s, torus, params, 0).gamma;
        let d = x.distance(y, torus) as f64;
        max_ratio = max_ratio.max(g(&x.union(y)) / (g(x) * g(y) * params.theta.theta(d)));
        done += 1;
    }
    SubmultiplicativityCheck { pairs, max_ratio }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus() -> BlockTorus {
        BlockTorus::new([6, 6]).unwrap()
    }

    #[test]
    fn gamma_is_submultiplicative() {
        let t = BlockTorus::new([6, 6]).unwrap();
        let c = submultiplicativity_check(&t, &GammaParams::default(), 200, 4, 1);
        assert!(c.holds(), "{c:?}");
    }

    #[test]
    fn single_and_adjacent() {
        let t = torus();
        let p = GammaParams::default();
        let one = PavedSet::single(&t, [2, 3]).unwrap();
        let w = theta_gamma(&one, &t, &p, 0);
        assert_eq!((w.theta, w.gamma), (1.0, 16.0));
        let two = PavedSet::parse(&t, "2,3; 3,3").unwrap();
        let w = theta_gamma(&two, &t, &p, 2);
        assert_eq!((w.theta, w.gamma), (1.0, 256.0));
        assert!((w.gamma_n - 256.0 * 4f64.exp()).abs() < 1e-9);
        assert_eq!(TreeWeight::default().theta(0.0), 1.0);
    }

    #[test]
    fn kruskal_matches_enumeration() {
        let t = torus();
        let w = TreeWeight::default();
        for s in ["0,0; 1,0; 0,1", "0,0; 3,0; 3,2; 1,4", "0,0; 2,2; 5,5; 3,1; 4,4"] {
            let x = PavedSet::parse(&t, s).unwrap();
            assert_eq!(theta_tree(&x, &t, &w).0, theta_exhaustive(&x, &t, &w).unwrap());
        }
    }

    #[test]
    fn small_sets() {
        let t = BlockTorus::new([8, 8]).unwrap();
        assert!(small_set(&PavedSet::single(&t, [0, 0]).unwrap(), &t));
        assert!(small_set(&PavedSet::parse(&t, "0,0;1,0;2,0;3,0").unwrap(), &t));
        assert!(!small_set(&PavedSet::parse(&t, "0,0;1,0;2,0;3,0;4,0").unwrap(), &t));
        assert!(!small_set(&PavedSet::parse(&t, "0,0;1,1").unwrap(), &t));
    }

    #[test]
    fn wrap_distance() {
        let t = torus();
        assert_eq!(t.distance([0, 0], [5, 3]), 3);
        assert!(t.adjacent([0, 0], [5, 0]));
    }

    #[test]
    fn scaling_fails_only_below_l() {
        let checks = theta_scaling_check(&TreeWeight::default(), 2, 8);
        assert!(!checks[0].holds);
        assert!(checks[1..].iter().all(|c| c.holds));
    }

    #[test]
    fn connected_set_counts() {
        let t = BlockTorus::new([6, 6]).unwrap();
        let sets = connected_sets(&t, 3);
        // monomino, domino and tromino placements: 36 + 72 + 36 * 6
        assert_eq!(sets.len(), 36 + 72 + 216);
        assert!(sets.iter().all(|x| x.is_connected(&t)));
    }
}
