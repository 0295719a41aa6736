//! Grassmann-valued localized families, the local-part extraction, and the
//! reblock/rescale operator.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{gamma_n, small_set, BlockTorus, GammaParams, PavedSet, ScalarFamily};
use crate::error::{invalid, Error, Result};
use crate::grassmann::{sort_sign, Element, MODE_CAPACITY};
use crate::spin::{gamma_basis, invariant_decompose, SpinMatrix, SpinOperator};

fn cr(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `res x res` grid points per unit block, two spinor and `n_int` internal components per point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldLayout {
    pub torus: BlockTorus,
    pub res: usize,
    pub n_int: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointInfo {
    pub block: [usize; 2],
    pub sub: [usize; 2],
    /// Unwrapped coordinates relative to the torus origin.
    pub pos: [f64; 2],
}

/// Sites of a paved set: mode `(point * 2 + spin) * n_int + internal`.
#[derive(Clone, Debug)]
pub struct SetSites {
    pub points: Vec<PointInfo>,
    pub n_int: usize,
    /// Corner of the first block, the reference point `x^0`.
    pub origin: [f64; 2],
    index: HashMap<([usize; 2], [usize; 2]), usize>,
    torus: BlockTorus,
    res: usize,
}

impl SetSites {
    pub fn labels(&self) -> usize {
        2 * self.n_int
    }

    pub fn modes(&self) -> usize {
        self.points.len() * self.labels()
    }

    pub fn mode(&self, point: usize, label: usize) -> usize {
        point * self.labels() + label
    }

    pub fn point_of(&self, mode: usize) -> usize {
        mode / self.labels()
    }

    pub fn label_of(&self, mode: usize) -> usize {
        mode % self.labels()
    }

    /// Grid neighbor one step along `mu` in direction `dir`, if it lies in the set.
    pub fn neighbor(&self, point: usize, mu: usize, dir: i64) -> Option<usize> {
        let p = self.points[point];
        let mut block = [p.block[0] as i64, p.block[1] as i64];
        let mut sub = [p.sub[0] as i64, p.sub[1] as i64];
        sub[mu] += dir;
        if sub[mu] < 0 || sub[mu] >= self.res as i64 {
            block[mu] += dir;
            sub[mu] = sub[mu].rem_euclid(self.res as i64);
        }
        let b = self.torus.wrap(block);
        self.index.get(&(b, [sub[0] as usize, sub[1] as usize])).copied()
    }
}

impl FieldLayout {
    pub fn new(torus: BlockTorus, res: usize, n_int: usize) -> Result<Self> {
        if res == 0 || n_int == 0 {
            return invalid("resolution and internal component count must be positive");
        }
        Ok(Self { torus, res, n_int })
    }

    pub fn cell_area(&self) -> f64 {
        (self.res as f64).powi(-2)
    }

    pub fn labels(&self) -> usize {
        2 * self.n_int
    }

    /// Site list of `x` with positions unwrapped along edge-adjacent paths from its first block.
    pub fn sites(&self, x: &PavedSet) -> Result<SetSites> {
        let modes = x.len() * self.res * self.res * self.labels();
        if modes > MODE_CAPACITY {
            return Err(Error::Capacity(format!(
                "{} blocks at resolution {} with {} internal components need {modes} modes per species (limit {MODE_CAPACITY})",
                x.len(),
                self.res,
                self.n_int
            )));
        }
        let blocks = x.blocks();
        let t = &self.torus;
        let b0 = blocks[0];
        let mut coords: Vec<Option<[i64; 2]>> = vec![None; blocks.len()];
        coords[0] = Some([b0[0] as i64, b0[1] as i64]);
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let ci = coords[i].expect("visited");
            for (j, &bj) in blocks.iter().enumerate() {
                if coords[j].is_some() {
                    continue;
                }
                for d in [[1i64, 0], [-1, 0], [0, 1], [0, -1]] {
                    if t.wrap([ci[0] + d[0], ci[1] + d[1]]) == bj {
                        coords[j] = Some([ci[0] + d[0], ci[1] + d[1]]);
                        queue.push_back(j);
                        break;
                    }
                }
            }
        }
        let res = self.res as f64;
        let mut points = Vec::new();
        let mut index = HashMap::new();
        for (i, &b) in blocks.iter().enumerate() {
            let c = coords[i].unwrap_or_else(|| {
                let image = |mu: usize| {
                    let (d, n) = (b[mu] as i64 - b0[mu] as i64, t.dims[mu] as i64);
                    b0[mu] as i64 + (d + n / 2).rem_euclid(n) - n / 2
                };
                [image(0), image(1)]
            });
            for s1 in 0..self.res {
                for s0 in 0..self.res {
                    index.insert((b, [s0, s1]), points.len());
                    let pos = [c[0] as f64 + (s0 as f64 + 0.5) / res, c[1] as f64 + (s1 as f64 + 0.5) / res];
                    points.push(PointInfo { block: b, sub: [s0, s1], pos });
                }
            }
        }
        Ok(SetSites {
            points,
            n_int: self.n_int,
            origin: [b0[0] as f64, b0[1] as f64],
            index,
            torus: self.torus,
            res: self.res,
        })
    }
}

/// `E = sum_X E(X)` with each `E(X)` an element over the sites of `X`.
#[derive(Clone, Debug)]
pub struct GrassmannFamily {
    pub layout: FieldLayout,
    pub members: BTreeMap<PavedSet, Element>,
}

impl GrassmannFamily {
    pub fn new(layout: FieldLayout) -> Self {
        Self { layout, members: BTreeMap::new() }
    }

    pub fn insert(&mut self, x: PavedSet, e: Element) -> Result<()> {
        let sites = self.layout.sites(&x)?;
        let sup = e.support();
        let limit = sites.modes();
        if limit < MODE_CAPACITY && (sup.0 >> limit != 0 || sup.1 >> limit != 0) {
            return invalid("element uses modes outside its paved set");
        }
        let slot = self.members.entry(x).or_default();
        *slot = slot.add(&e);
        Ok(())
    }

    pub fn get(&self, x: &PavedSet) -> Option<&Element> {
        self.members.get(x)
    }

    /// `max_anchor sum_{X containing anchor} ||E(X)||_h Gamma_n(X)`, or at one anchor.
    pub fn localized_norm(&self, h: f64, params: &GammaParams, n: u32, anchor: Option<[usize; 2]>) -> f64 {
        let t = &self.layout.torus;
        let mut per = vec![0.0; t.len()];
        for (x, e) in &self.members {
            let w = e.surrogate_norm(h) * gamma_n(x, t, params, n);
            for &b in x.blocks() {
                per[t.index(b)] += w;
            }
        }
        match anchor {
            Some(b) => per[t.index(b)],
            None => per.into_iter().fold(0.0, f64::max),
        }
    }

    /// Max coefficient distance between two families over all sets.
    pub fn distance(&self, other: &Self) -> f64 {
        let zero = Element::zero();
        self.members
            .keys()
            .chain(other.members.keys())
            .map(|x| self.get(x).unwrap_or(&zero).distance(other.get(x).unwrap_or(&zero)))
            .fold(0.0, f64::max)
    }
}

fn push(acc: &mut Element, psi: &[usize], bar: &[usize], c: Complex64) {
    if let (Ok(Some((m0, s0))), Ok(Some((m1, s1)))) = (sort_sign(psi), sort_sign(bar)) {
        acc.add_term((m0, m1), c * s0 * s1);
    }
}

/// Low moments of `E(X)`: `E_00`, `E_11(X, 1)`, `E_11(X, x_mu - x^0_mu)` and `E_22(X, 1)`,
/// in the `psibar M psi` and `psibar psibar M psi psi` conventions, indexed by site labels.
#[derive(Clone, Debug)]
pub struct Moments {
    pub e00: Complex64,
    pub m11: DMatrix<Complex64>,
    pub m11_x: [DMatrix<Complex64>; 2],
    /// Flattened `[t1][t2][s1][s2]`.
    pub m22: Vec<Complex64>,
    pub labels: usize,
}

impl Moments {
    fn q(&self, t1: usize, t2: usize, s1: usize, s2: usize) -> usize {
        let l = self.labels;
        ((t1 * l + t2) * l + s1) * l + s2
    }

    pub fn max_abs(&self) -> f64 {
        let mats = [&self.m11, &self.m11_x[0], &self.m11_x[1]];
        let m = mats.iter().flat_map(|m| m.iter()).chain(&self.m22).map(|c| c.norm()).fold(0.0, f64::max);
        m.max(self.e00.norm())
    }
}

pub fn moments(sites: &SetSites, e: &Element) -> Moments {
    let l = sites.labels();
    let zero = || DMatrix::<Complex64>::zeros(l, l);
    let mut m = Moments { e00: e.scalar_part(), m11: zero(), m11_x: [zero(), zero()], m22: vec![cr(0.0); l.pow(4)], labels: l };
    for (&k, &c) in e.terms() {
        let (psi, bar) = Element::indices(k);
        match (psi.len(), bar.len()) {
            (1, 1) => {
                // c psi_s psibar_t = -c psibar_t psi_s
                let (s, t) = (psi[0], bar[0]);
                let (ls, lt) = (sites.label_of(s), sites.label_of(t));
                m.m11[(lt, ls)] -= c;
                let pos = sites.points[sites.point_of(s)].pos;
                for mu in 0..2 {
                    m.m11_x[mu][(lt, ls)] -= c * (pos[mu] - sites.origin[mu]);
                }
            }
            (2, 2) => {
                // psi_{s1} psi_{s2} psibar_{t1} psibar_{t2} = psibar_{t1} psibar_{t2} psi_{s1} psi_{s2}
                let [s1, s2] = [sites.label_of(psi[0]), sites.label_of(psi[1])];
                let [t1, t2] = [sites.label_of(bar[0]), sites.label_of(bar[1])];
                let i = m.q(t1, t2, s1, s2);
                m.m22[i] += c;
                let i = m.q(t2, t1, s1, s2);
                m.m22[i] -= c;
                let i = m.q(t1, t2, s2, s1);
                m.m22[i] -= c;
                let i = m.q(t2, t1, s2, s1);
                m.m22[i] += c;
            }
            _ => {}
        }
    }
    m
}

/// `gamma_mu (x) I_n` in label space `spin * n + internal`.
fn gamma_labels(g: &SpinMatrix, n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(2 * n, 2 * n, |r, c| if r % n == c % n { g[(r / n, c / n)] } else { cr(0.0) })
}

/// `E^loc(X)` for a small set with the moment-matched coefficients.
fn local_element(sites: &SetSites, m: &Moments, volume: f64) -> Element {
    let l = sites.labels();
    let w = cr((sites.res as f64).powi(-2));
    let a = 1.0 / sites.res as f64;
    let mut cm = [0.0; 2];
    for p in &sites.points {
        for mu in 0..2 {
            cm[mu] += w.re * (p.pos[mu] - sites.origin[mu]);
        }
    }
    let alpha2 = &m.m11 / cr(volume);
    let alpha2mu: Vec<DMatrix<Complex64>> =
        (0..2).map(|mu| (&m.m11_x[mu] - &m.m11 * cr(cm[mu] / volume)) / cr(volume)).collect();
    let mut e = Element::scalar(m.e00);
    for x in 0..sites.points.len() {
        for t in 0..l {
            for s in 0..l {
                push(&mut e, &[sites.mode(x, s)], &[sites.mode(x, t)], -w * alpha2[(t, s)]);
            }
        }
        for (mu, amu) in alpha2mu.iter().enumerate() {
            let stencil: Vec<(usize, f64)> = match (sites.neighbor(x, mu, 1), sites.neighbor(x, mu, -1)) {
                (Some(f), Some(b)) => vec![(f, 0.5 / a), (b, -0.5 / a)],
                (Some(f), None) => vec![(f, 1.0 / a), (x, -1.0 / a)],
                (None, Some(b)) => vec![(x, 1.0 / a), (b, -1.0 / a)],
                (None, None) => vec![],
            };
            for (y, coef) in stencil {
                for t in 0..l {
                    for s in 0..l {
                        push(&mut e, &[sites.mode(y, s)], &[sites.mode(x, t)], -w * amu[(t, s)] * coef);
                    }
                }
            }
        }
        for t1 in 0..l {
            for t2 in 0..l {
                for s1 in 0..l {
                    for s2 in 0..l {
                        let v = m.m22[m.q(t1, t2, s1, s2)];
                        if v != cr(0.0) {
                            let (ms, mt) = ([sites.mode(x, s1), sites.mode(x, s2)], [sites.mode(x, t1), sites.mode(x, t2)]);
                            push(&mut e, &ms, &mt, w * 0.25 * v / volume);
                        }
                    }
                }
            }
        }
    }
    e
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuarticCoefficients {
    pub g_star: f64,
    pub p_star: f64,
    pub v_star: f64,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LocalCoefficients {
    pub eps_e: f64,
    pub m_star: f64,
    pub z_star: f64,
    /// Max entry of `alpha_2 - m* I`.
    pub mass_residual: f64,
    /// Max entry of `alpha_{2,mu} + z* gamma_mu`.
    pub kinetic_residual: f64,
    /// `None` for one internal component, where the three quartic invariants coincide.
    pub quartic: Option<QuarticCoefficients>,
}

#[derive(Clone, Debug)]
pub struct Extraction {
    pub coefficients: LocalCoefficients,
    pub local: GrassmannFamily,
    pub remainder: GrassmannFamily,
    /// Max moment of `R E(X)` over small `X`.
    pub normalization_residual: f64,
    pub small_sets: usize,
    pub large_sets: usize,
}

/// `E = E^loc + R E` with `R E(X)` normalized on small sets.
pub fn extract_local(family: &GrassmannFamily) -> Result<Extraction> {
    let layout = family.layout;
    let t = layout.torus;
    if t.dims.iter().any(|&d| d < 5) {
        return invalid("extraction needs a block torus of side at least 5 so that small sets unwrap");
    }
    if layout.res < 2 {
        return invalid("extraction needs at least 2x2 grid points per block for in-set derivatives");
    }
    let l = layout.labels();
    let n = layout.n_int;
    let tvol = t.len() as f64;
    let mut local = GrassmannFamily::new(layout);
    let mut remainder = GrassmannFamily::new(layout);
    let mut eps = cr(0.0);
    let mut alpha2 = DMatrix::<Complex64>::zeros(l, l);
    let mut alpha2mu = [alpha2.clone(), alpha2.clone()];
    let mut alpha4 = vec![cr(0.0); l.pow(4)];
    let (mut small, mut large) = (0usize, 0usize);
    let mut worst: f64 = 0.0;
    for (x, e) in &family.members {
        if !small_set(x, &t) {
            large += 1;
            remainder.insert(x.clone(), e.clone())?;
            continue;
        }
        small += 1;
        let sites = layout.sites(x)?;
        let m = moments(&sites, e);
        let vol = x.len() as f64;
        let loc = local_element(&sites, &m, vol);
        let rest = e.sub(&loc);
        worst = worst.max(moments(&sites, &rest).max_abs());
        let lm = moments(&sites, &loc);
        eps += m.e00;
        alpha2 += &m.m11;
        for mu in 0..2 {
            // |X| alpha_{2,mu}(X) is the derivative part of the local first moment
            let mut cm = 0.0;
            for p in &sites.points {
                cm += layout.cell_area() * (p.pos[mu] - sites.origin[mu]);
            }
            alpha2mu[mu] += &lm.m11_x[mu] - &m.m11 * cr(cm / vol);
        }
        for (acc, v) in alpha4.iter_mut().zip(&m.m22) {
            *acc += v;
        }
        local.insert(x.clone(), loc)?;
        remainder.insert(x.clone(), rest)?;
    }
    eps /= tvol;
    alpha2 /= cr(tvol);
    for a in alpha2mu.iter_mut() {
        *a /= cr(tvol);
    }
    let m_star = alpha2.trace().re / l as f64;
    let mass_residual = (&alpha2 - DMatrix::identity(l, l) * cr(m_star)).iter().map(|c| c.norm()).fold(0.0, f64::max);
    let gb = gamma_basis();
    let gl: Vec<DMatrix<Complex64>> = (0..2).map(|mu| gamma_labels(&gb.mu(mu), n)).collect();
    let z_star = -(0..2).map(|mu| (&alpha2mu[mu] * &gl[mu]).trace().re).sum::<f64>() / (2.0 * l as f64);
    let kinetic_residual = (0..2)
        .map(|mu| (&alpha2mu[mu] + &gl[mu] * cr(z_star)).iter().map(|c| c.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let quartic = (n >= 2).then(|| {
        let lab = |spin: usize, i: usize| spin * n + i;
        let q = |t1, t2, s1, s2| ((t1 * l + t2) * l + s1) * l + s2;
        let op = SpinOperator::from_fn(|r, c| {
            let (a, b, cc, d) = (r / 2, r % 2, c / 2, c % 2);
            -alpha4[q(lab(a, 0), lab(b, 1), lab(cc, 0), lab(d, 1))] / cr(tvol)
        });
        let dec = invariant_decompose(&op);
        QuarticCoefficients {
            g_star: 0.5 * dec.g_star,
            p_star: 0.5 * dec.p_star,
            v_star: 0.5 * dec.v_star,
            residual: dec.residual_norm(),
        }
    });
    let coefficients =
        LocalCoefficients { eps_e: eps.re, m_star, z_star, mass_residual, kinetic_residual, quartic };
    Ok(Extraction { coefficients, local, remainder, normalization_residual: worst, small_sets: small, large_sets: large })
}

/// `sum_{a} psibar_a(x) M psi(x)` on labels of one internal component `i`, summed over `i`.
pub fn local_bilinear(sites: &SetSites, x: usize, m: &SpinMatrix) -> Element {
    let n = sites.n_int;
    let mut e = Element::zero();
    for i in 0..n {
        for a in 0..2 {
            for b in 0..2 {
                push(&mut e, &[sites.mode(x, b * n + i)], &[sites.mode(x, a * n + i)], -m[(a, b)]);
            }
        }
    }
    e
}

/// Families `c sum_{x in block} w (psibar M psi)^2(x)` on every block, for `M` in
/// `{I}`, `{g5}` or `{g0, g1}` according to `kind` = `"g"`, `"p"`, `"v"`.
pub fn quartic_family(layout: FieldLayout, kind: &str, c: f64) -> Result<GrassmannFamily> {
    let gb = gamma_basis();
    let mats = match kind {
        "g" => vec![gb.identity()],
        "p" => vec![gb.gamma5()],
        "v" => vec![gb.mu(0), gb.mu(1)],
        other => return invalid(format!("unknown quartic kind `{other}`")),
    };
    let mut f = GrassmannFamily::new(layout);
    let w = cr(layout.cell_area() * c);
    for i in 0..layout.torus.len() {
        let x = PavedSet::single(&layout.torus, layout.torus.block(i))?;
        let sites = layout.sites(&x)?;
        let mut e = Element::zero();
        for p in 0..sites.points.len() {
            for m in &mats {
                let b = local_bilinear(&sites, p, m);
                e = e.add(&b.mul(&b).scale(w));
            }
        }
        f.insert(x, e)?;
    }
    Ok(f)
}

/// Random elements of degree (0,0), (1,1) and (2,2) on every connected set of at most `max_size` blocks.
pub fn random_family(layout: FieldLayout, max_size: usize, terms: usize, scale: f64, seed: u64) -> Result<GrassmannFamily> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = GrassmannFamily::new(layout);
    for x in super::connected_sets(&layout.torus, max_size) {
        let modes = layout.sites(&x)?.modes();
        let mut e = Element::scalar(cr(scale * rng.random_range(-1.0..1.0)));
        for _ in 0..terms {
            let deg = rng.random_range(1..=2);
            let a = rand::seq::index::sample(&mut rng, modes, deg).into_vec();
            let b = rand::seq::index::sample(&mut rng, modes, deg).into_vec();
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
            push(&mut e, &a, &b, c);
        }
        f.insert(x, e)?;
    }
    Ok(f)
}

/// `(L E)(Y, psi) = sum_{X: Xbar = LY} E(X, psi_L)` with `psi_L(x) = L^{-1/2} psi(x/L)`.
pub fn reblock_rescale(family: &GrassmannFamily, l: usize) -> Result<GrassmannFamily> {
    let old = family.layout;
    if l < 2 || old.torus.dims.iter().any(|d| d % l != 0) {
        return invalid(format!("block torus {:?} is not divisible by L = {l}", old.torus.dims));
    }
    let torus = BlockTorus::new([old.torus.dims[0] / l, old.torus.dims[1] / l])?;
    let layout = FieldLayout::new(torus, old.res * l, old.n_int)?;
    let mut out = GrassmannFamily::new(layout);
    for (x, e) in &family.members {
        let y = PavedSet::new(&torus, {
            let mut v: Vec<[usize; 2]> = x.blocks().iter().map(|b| [b[0] / l, b[1] / l]).collect();
            v.sort();
            v.dedup();
            v
        })?;
        let from = old.sites(x)?;
        let to = layout.sites(&y)?;
        let map: Vec<usize> = (0..from.modes())
            .map(|mode| {
                let p = from.points[from.point_of(mode)];
                let b = [p.block[0] / l, p.block[1] / l];
                let sub = [(p.block[0] % l) * old.res + p.sub[0], (p.block[1] % l) * old.res + p.sub[1]];
                to.mode(to.index[&(b, sub)], from.label_of(mode))
            })
            .collect();
        let mut g = Element::zero();
        for (&k, &c) in e.terms() {
            let (psi, bar) = Element::indices(k);
            let deg = (psi.len() + bar.len()) as i32;
            let ps: Vec<usize> = psi.iter().map(|&i| map[i]).collect();
            let bs: Vec<usize> = bar.iter().map(|&i| map[i]).collect();
            push(&mut g, &ps, &bs, c * (l as f64).powf(-0.5 * deg as f64));
        }
        out.insert(y, g)?;
    }
    Ok(out)
}

/// Reblocking of scalar activities (no fields to scale).
pub fn reblock_scalar(family: &ScalarFamily, l: usize) -> Result<ScalarFamily> {
    let t = family.torus;
    if l < 2 || t.dims.iter().any(|d| d % l != 0) {
        return invalid(format!("block torus {:?} is not divisible by L = {l}", t.dims));
    }
    let coarse = BlockTorus::new([t.dims[0] / l, t.dims[1] / l])?;
    let mut out = ScalarFamily::new(coarse)?;
    for (&m, &v) in &family.values {
        let x = PavedSet::from_mask(&t, m)?;
        let mut blocks: Vec<[usize; 2]> = x.blocks().iter().map(|b| [b[0] / l, b[1] / l]).collect();
        blocks.sort();
        blocks.dedup();
        out.insert(&PavedSet::new(&coarse, blocks)?, v);
    }
    Ok(out)
}


#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuarticNormCheck {
    pub h: f64,
    pub norm: f64,
    /// `A h^4 / 4`.
    pub reference: f64,
    pub overcount: f64,
}

/// Localized norm of the one-block family `(psibar psi)^2` with one component per block.
pub fn one_block_quartic_check(h: f64, params: &GammaParams) -> Result<QuarticNormCheck> {
    let layout = FieldLayout::new(BlockTorus::new([3, 3])?, 1, 1)?;
    let f = quartic_family(layout, "g", 1.0)?;
    let norm = f.localized_norm(h, params, 0, None);
    let reference = 0.25 * params.a * h.powi(4);
    Ok(QuarticNormCheck { h, norm, reference, overcount: norm / reference })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContractionCheck {
    pub l: usize,
    pub before: f64,
    pub after: f64,
    pub ratio: f64,
}

/// `sum_X ||E(X)||_h` before and after [`reblock_rescale`].
pub fn reblock_contraction(family: &GrassmannFamily, l: usize, h: f64) -> Result<ContractionCheck> {
    let total = |f: &GrassmannFamily| f.members.values().map(|e| e.surrogate_norm(h)).sum::<f64>();
    let after = total(&reblock_rescale(family, l)?);
    let before = total(family);
    Ok(ContractionCheck { l, before, after, ratio: after / before })
}

/// Random elements of a single degree `(k, k)` on every block.
pub fn homogeneous_family(layout: FieldLayout, k: usize, terms: usize, seed: u64) -> Result<GrassmannFamily> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = GrassmannFamily::new(layout);
    for i in 0..layout.torus.len() {
        let x = PavedSet::single(&layout.torus, layout.torus.block(i))?;
        let modes = layout.sites(&x)?.modes();
        let mut e = Element::zero();
        for _ in 0..terms {
            let a = rand::seq::index::sample(&mut rng, modes, k).into_vec();
            let b = rand::seq::index::sample(&mut rng, modes, k).into_vec();
            push(&mut e, &a, &b, cr(rng.random_range(-1.0..1.0)));
        }
        f.insert(x, e)?;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(n: usize) -> FieldLayout {
        FieldLayout::new(BlockTorus::new([6, 6]).unwrap(), 2, n).unwrap()
    }

    #[test]
    fn one_block_quartic_overcount() {
        let c = one_block_quartic_check(0.7, &GammaParams::default()).unwrap();
        assert!((c.overcount - 8.0).abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn degree_six_contracts() {
        let lay = FieldLayout::new(BlockTorus::new([4, 4]).unwrap(), 2, 1).unwrap();
        let f = homogeneous_family(lay, 3, 5, 9).unwrap();
        let c = reblock_contraction(&f, 2, 1.0).unwrap();
        assert!((c.ratio - 0.125).abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn constant_family() {
        let lay = layout(1);
        let mut f = GrassmannFamily::new(lay);
        let x = PavedSet::parse(&lay.torus, "0,0;1,0").unwrap();
        f.insert(x.clone(), Element::scalar(cr(0.6))).unwrap();
        let ex = extract_local(&f).unwrap();
        assert!(ex.remainder.get(&x).unwrap().is_empty());
        assert!((ex.coefficients.eps_e - 0.6 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn quartic_recovery() {
        for (kind, want) in [("g", [0.3, 0.0, 0.0]), ("p", [0.0, 0.3, 0.0]), ("v", [0.0, 0.0, 0.3])] {
            let f = quartic_family(layout(2), kind, 0.3).unwrap();
            let q = extract_local(&f).unwrap().coefficients.quartic.unwrap();
            let got = [q.g_star, q.p_star, q.v_star];
            for i in 0..3 {
                assert!((got[i] - want[i]).abs() < 1e-12, "{kind}: {got:?}");
            }
            assert!(q.residual < 1e-12);
        }
    }

    #[test]
    fn random_remainder_is_normalized() {
        let f = random_family(layout(1), 2, 12, 0.1, 3).unwrap();
        let ex = extract_local(&f).unwrap();
        assert!(ex.normalization_residual < 1e-10, "{}", ex.normalization_residual);
        let mut sum = ex.local.clone();
        for (x, r) in &ex.remainder.members {
            sum.insert(x.clone(), r.clone()).unwrap();
        }
        assert!(sum.distance(&f) < 1e-15);
    }

    #[test]
    fn kinetic_family_is_chiral() {
        // forward differences psibar(x) gamma_mu (psi(x + e_mu) - psi(x)) inside single blocks
        let lay = layout(1);
        let gb = gamma_basis();
        let mut f = GrassmannFamily::new(lay);
        for i in 0..lay.torus.len() {
            let x = PavedSet::single(&lay.torus, lay.torus.block(i)).unwrap();
            let s = lay.sites(&x).unwrap();
            let mut e = Element::zero();
            for p in 0..s.points.len() {
                for mu in 0..2 {
                    if let Some(q) = s.neighbor(p, mu, 1) {
                        let g = gb.mu(mu);
                        for a in 0..2 {
                            for b in 0..2 {
                                push(&mut e, &[s.mode(q, b)], &[s.mode(p, a)], -g[(a, b)] * cr(0.5));
                                push(&mut e, &[s.mode(p, b)], &[s.mode(p, a)], g[(a, b)] * cr(0.5));
                            }
                        }
                    }
                }
            }
            f.insert(x, e).unwrap();
        }
        let c = extract_local(&f).unwrap().coefficients;
        assert!(c.m_star.abs() < 1e-15 && c.mass_residual < 1e-15);
        assert!(c.z_star.abs() > 1e-3 && c.kinetic_residual < 1e-12, "{c:?}");
    }

    #[test]
    fn reblock_constant_and_scaling() {
        let lay = FieldLayout::new(BlockTorus::new([4, 4]).unwrap(), 1, 1).unwrap();
        let mut f = GrassmannFamily::new(lay);
        let x = PavedSet::single(&lay.torus, [1, 3]).unwrap();
        f.insert(x.clone(), Element::scalar(cr(0.25))).unwrap();
        let g = reblock_rescale(&f, 2).unwrap();
        let y = PavedSet::single(&g.layout.torus, [0, 1]).unwrap();
        assert_eq!(g.get(&y).unwrap().scalar_part(), cr(0.25));
        assert!(reblock_rescale(&FieldLayout::new(BlockTorus::new([3, 4]).unwrap(), 1, 1).map(GrassmannFamily::new).unwrap(), 2).is_err());
    }
}
