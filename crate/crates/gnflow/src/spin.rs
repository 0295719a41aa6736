//! Gamma matrices, Pin(2) lifts of the lattice symmetries, and basis
//! expansions on `C^2` and `C^2 (x) C^2`.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Result};

/// A 2x2 complex matrix.
pub type SpinMatrix = Matrix2<Complex64>;
/// An operator on `C^2 (x) C^2`, indexed by `2 * a + b`.
pub type SpinOperator = Matrix4<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// The basis `(I, gamma_0, gamma_1, gamma_5)`.
#[derive(Clone, Debug)]
pub struct GammaBasis {
    pub gamma: [SpinMatrix; 4],
}

impl GammaBasis {
    pub fn identity(&self) -> SpinMatrix {
        self.gamma[0]
    }
    /// `gamma_mu` for `mu` in {0, 1}.
    pub fn mu(&self, mu: usize) -> SpinMatrix {
        self.gamma[1 + mu]
    }
    pub fn gamma5(&self) -> SpinMatrix {
        self.gamma[3]
    }
}

/// `gamma_0 = [[0,1],[1,0]]`, `gamma_1 = [[0,-i],[i,0]]`, `gamma_5 = i gamma_0 gamma_1`.
pub fn gamma_basis() -> GammaBasis {
    let id = SpinMatrix::identity();
    let g0 = SpinMatrix::new(c(0.0), c(1.0), c(1.0), c(0.0));
    let g1 = SpinMatrix::new(c(0.0), -I, I, c(0.0));
    let g5 = (g0 * g1).map(|z| I * z);
    GammaBasis { gamma: [id, g0, g1, g5] }
}

/// `sum_mu v_mu gamma_mu`.
pub fn slash(v: [f64; 2]) -> SpinMatrix {
    let b = gamma_basis();
    b.mu(0) * c(v[0]) + b.mu(1) * c(v[1])
}

pub fn kron(a: &SpinMatrix, b: &SpinMatrix) -> SpinOperator {
    SpinOperator::from_fn(|r, s| a[(r / 2, s / 2)] * b[(r % 2, s % 2)])
}

pub fn trace2(a: &SpinMatrix) -> Complex64 {
    a[(0, 0)] + a[(1, 1)]
}

/// A rotation by a multiple of pi/2 or an axis reflection, as an integer matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LatticeSymmetry {
    pub r: [[i8; 2]; 2],
}

impl LatticeSymmetry {
    pub fn new(r: [[i8; 2]; 2]) -> Result<Self> {
        let s = Self { r };
        if !s.is_admissible() {
            return invalid(format!("{r:?} is not a lattice rotation or reflection"));
        }
        Ok(s)
    }

    pub fn identity() -> Self {
        Self { r: [[1, 0], [0, 1]] }
    }

    /// The rotation `x_0 -> x_1, x_1 -> -x_0`.
    pub fn quarter_turn() -> Self {
        Self { r: [[0, 1], [-1, 0]] }
    }

    pub fn det(&self) -> i8 {
        self.r[0][0] * self.r[1][1] - self.r[0][1] * self.r[1][0]
    }

    fn is_admissible(&self) -> bool {
        let r = self.r;
        let entries_ok = r.iter().flatten().all(|&x| (-1..=1).contains(&x));
        let orth = (0..2).all(|i| {
            (0..2).all(|j| {
                let dot: i8 = (0..2).map(|k| r[i][k] * r[j][k]).sum();
                dot == if i == j { 1 } else { 0 }
            })
        });
        entries_ok && orth
    }
}

/// All eight symmetries of the square lattice.
pub fn lattice_symmetries() -> Vec<LatticeSymmetry> {
    let mut out = Vec::with_capacity(8);
    for &(a, b) in &[(1i8, 0i8), (0, 1), (-1, 0), (0, -1)] {
        out.push(LatticeSymmetry { r: [[a, b], [-b, a]] });
        out.push(LatticeSymmetry { r: [[a, b], [b, -a]] });
    }
    out
}

/// The matrix `R_{mu nu} = (1/2) tr(S^{-1} gamma_mu S gamma_nu)` induced by `S`.
pub fn induced_rotation(s: &SpinMatrix) -> [[f64; 2]; 2] {
    let b = gamma_basis();
    let inv = s.try_inverse().expect("Pin element is invertible");
    let mut r = [[0.0; 2]; 2];
    for (mu, row) in r.iter_mut().enumerate() {
        for (nu, entry) in row.iter_mut().enumerate() {
            *entry = 0.5 * trace2(&(inv * b.mu(mu) * s * b.mu(nu))).re;
        }
    }
    r
}

/// A Pin(2) element `S` with `S^{-1} gamma_mu S = sum_nu R_{mu nu} gamma_nu`.
///
/// Of the two lifts `+S` and `-S`, the one returned has non-negative real
/// trace; ties go to non-negative imaginary part of entry (0,0), and then to
/// the first nonzero entry (row-major) having positive real part, or zero
/// real part and positive imaginary part.
pub fn pin_element(sym: &LatticeSymmetry) -> Result<SpinMatrix> {
    if !sym.is_admissible() {
        return invalid(format!("{:?} is not a lattice rotation or reflection", sym.r));
    }
    let b = gamma_basis();
    let g01 = b.mu(0) * b.mu(1);
    for m in 0..4 {
        let phi = -(m as f64) * std::f64::consts::FRAC_PI_4;
        let rot = SpinMatrix::identity() * c(phi.cos()) + g01 * c(phi.sin());
        for cand in [rot, b.mu(0) * rot] {
            let r = induced_rotation(&cand);
            let matches = (0..2).all(|i| (0..2).all(|j| (r[i][j] - sym.r[i][j] as f64).abs() < 1e-12));
            if matches {
                return Ok(canonical_sign(cand));
            }
        }
    }
    invalid(format!("no Pin lift found for {:?}", sym.r))
}

fn canonical_sign(s: SpinMatrix) -> SpinMatrix {
    const TOL: f64 = 1e-14;
    let tr = trace2(&s);
    let flip = if tr.re.abs() > TOL {
        tr.re < 0.0
    } else if s[(0, 0)].im.abs() > TOL {
        s[(0, 0)].im < 0.0
    } else {
        // nalgebra iterates column-major, so walk row-major explicitly
        let first = [s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]]
            .into_iter()
            .find(|z| z.norm() > TOL)
            .unwrap_or(c(1.0));
        if first.re.abs() > TOL {
            first.re < 0.0
        } else {
            first.im < 0.0
        }
    };
    if flip {
        -s
    } else {
        s
    }
}

/// Coefficients `c_i = (1/2) tr(A Gamma_i)`.
pub fn expand2(a: &SpinMatrix) -> [Complex64; 4] {
    let b = gamma_basis();
    std::array::from_fn(|i| trace2(&(a * b.gamma[i])) * 0.5)
}

pub fn reconstruct2(coeffs: &[Complex64; 4]) -> SpinMatrix {
    let b = gamma_basis();
    (0..4).fold(SpinMatrix::zeros(), |acc, i| acc + b.gamma[i] * coeffs[i])
}

/// Coefficients `c_ij = (1/4) tr(A (Gamma_i (x) Gamma_j))`.
pub fn expand4(a: &SpinOperator) -> [[Complex64; 4]; 4] {
    let b = gamma_basis();
    std::array::from_fn(|i| std::array::from_fn(|j| (a * kron(&b.gamma[i], &b.gamma[j])).trace() * 0.25))
}

pub fn reconstruct4(coeffs: &[[Complex64; 4]; 4]) -> SpinOperator {
    let b = gamma_basis();
    let mut out = SpinOperator::zeros();
    for i in 0..4 {
        for j in 0..4 {
            out += kron(&b.gamma[i], &b.gamma[j]) * coeffs[i][j];
        }
    }
    out
}

/// `A = g (I(x)I) + p (g5(x)g5) + v sum_mu (g_mu (x) g_mu) + residual`.
#[derive(Clone, Debug)]
pub struct InvariantDecomposition {
    pub g_star: f64,
    pub p_star: f64,
    pub v_star: f64,
    pub residual: SpinOperator,
}

impl InvariantDecomposition {
    pub fn residual_norm(&self) -> f64 {
        self.residual.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Invariant part of an operator on `C^2 (x) C^2`. Imaginary parts of the
/// three coefficients are left in the residual.
pub fn invariant_decompose(a: &SpinOperator) -> InvariantDecomposition {
    let cij = expand4(a);
    let g_star = cij[0][0].re;
    let p_star = cij[3][3].re;
    let v_star = 0.5 * (cij[1][1].re + cij[2][2].re);
    let b = gamma_basis();
    let recon = kron(&b.gamma[0], &b.gamma[0]) * c(g_star)
        + kron(&b.gamma[3], &b.gamma[3]) * c(p_star)
        + (kron(&b.gamma[1], &b.gamma[1]) + kron(&b.gamma[2], &b.gamma[2])) * c(v_star);
    InvariantDecomposition { g_star, p_star, v_star, residual: a - recon }
}

/// Average of `S^{-1} A S` over the eight lattice symmetries.
pub fn group_average2(a: &SpinMatrix) -> SpinMatrix {
    let syms = lattice_symmetries();
    let mut acc = SpinMatrix::zeros();
    for sym in &syms {
        let s = pin_element(sym).expect("lattice symmetries are admissible");
        acc += s.try_inverse().expect("unitary") * a * s;
    }
    acc / c(syms.len() as f64)
}

/// Average of `(S^{-1} (x) S^{-1}) A (S (x) S)` over the eight lattice symmetries.
pub fn group_average4(a: &SpinOperator) -> SpinOperator {
    let syms = lattice_symmetries();
    let mut acc = SpinOperator::zeros();
    for sym in &syms {
        let s = pin_element(sym).expect("lattice symmetries are admissible");
        let si = s.try_inverse().expect("unitary");
        acc += kron(&si, &si) * a * kron(&s, &s);
    }
    acc / c(syms.len() as f64)
}

fn max_abs2(a: &SpinMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// One line of the identity report.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_error: f64,
    pub passed: bool,
}

/// Runs every Clifford, trace, Pin-conjugation and decomposition identity at
/// tolerance `tol`. Random inputs are drawn from a fixed seed.
pub fn identity_report(tol: f64, seed: u64) -> Vec<IdentityCheck> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rand_c = |rng: &mut rand_chacha::ChaCha8Rng| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));

    let b = gamma_basis();
    let id = SpinMatrix::identity();
    let mut out = Vec::new();
    let mut push = |name: &str, err: f64| out.push(IdentityCheck { name: name.into(), max_error: err, passed: err <= tol });

    let mut err = 0.0f64;
    for mu in 0..2 {
        for nu in 0..2 {
            let anti = b.mu(mu) * b.mu(nu) + b.mu(nu) * b.mu(mu);
            let target = if mu == nu { id * c(2.0) } else { SpinMatrix::zeros() };
            err = err.max(max_abs2(&(anti - target)));
        }
    }
    push("clifford anticommutator {g_mu, g_nu} = 2 delta", err);

    let g5 = b.gamma5();
    let ig5 = g5 * I;
    push("(i g5)^2 = -I", max_abs2(&(ig5 * ig5 + id)));
    push("g5 = i g0 g1", max_abs2(&(g5 - b.mu(0) * b.mu(1) * I)));

    let mut err = 0.0f64;
    for i in 0..4 {
        let gi = b.gamma[i];
        err = err.max(max_abs2(&(gi - gi.adjoint())));
        err = err.max(max_abs2(&(gi * gi - id)));
        if i > 0 {
            err = err.max(trace2(&gi).norm());
        }
        for j in 0..4 {
            let t = trace2(&(gi * b.gamma[j]));
            let target = if i == j { 2.0 } else { 0.0 };
            err = err.max((t - c(target)).norm());
        }
    }
    push("basis self-adjoint, involutive, tr(G_i G_j) = 2 delta", err);

    let mut err = 0.0f64;
    for sym in lattice_symmetries() {
        let s = match pin_element(&sym) {
            Ok(s) => s,
            Err(_) => {
                err = f64::INFINITY;
                continue;
            }
        };
        let si = s.try_inverse().expect("unitary");
        err = err.max(max_abs2(&(s.adjoint() * s - id)));
        for mu in 0..2 {
            let lhs = si * b.mu(mu) * s;
            let rhs = b.mu(0) * c(sym.r[mu][0] as f64) + b.mu(1) * c(sym.r[mu][1] as f64);
            err = err.max(max_abs2(&(lhs - rhs)));
        }
        err = err.max(max_abs2(&(si * g5 * s - g5 * c(sym.det() as f64))));
    }
    push("Pin conjugation S^-1 g_mu S = R g, S^-1 g5 S = det(R) g5", err);

    let mut err = 0.0f64;
    for _ in 0..20 {
        let a = SpinMatrix::from_fn(|_, _| rand_c(&mut rng));
        err = err.max(max_abs2(&(reconstruct2(&expand2(&a)) - a)));
        let a4 = SpinOperator::from_fn(|_, _| rand_c(&mut rng));
        let r = reconstruct4(&expand4(&a4)) - a4;
        err = err.max(r.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    push("expand2 / expand4 reconstruct exactly", err);

    let mut err = 0.0f64;
    for _ in 0..100 {
        let a = SpinMatrix::from_fn(|_, _| rand_c(&mut rng));
        let avg = group_average2(&a);
        let cs = expand2(&avg);
        err = err.max(cs[1].norm().max(cs[2].norm()).max(cs[3].norm()));
    }
    push("group-averaged 2x2 matrices are multiples of I", err);

    let mut err = 0.0f64;
    for _ in 0..20 {
        let a4 = SpinOperator::from_fn(|_, _| rand_c(&mut rng));
        let avg = group_average4(&a4);
        let dec = invariant_decompose(&avg);
        let cij = expand4(&avg);
        // only the imaginary parts of the three invariant coefficients may remain
        let mut imag_free = dec.residual;
        let g = kron(&b.gamma[0], &b.gamma[0]) * c(cij[0][0].im) * I
            + kron(&b.gamma[3], &b.gamma[3]) * c(cij[3][3].im) * I
            + (kron(&b.gamma[1], &b.gamma[1]) + kron(&b.gamma[2], &b.gamma[2])) * c(0.5 * (cij[1][1].im + cij[2][2].im)) * I;
        imag_free -= g;
        err = err.max(imag_free.iter().map(|z| z.norm()).fold(0.0, f64::max));
        err = err.max((cij[1][1] - cij[2][2]).norm());
    }
    push("group-averaged 4x4 operators decompose into I(x)I, g5(x)g5, g_mu(x)g_mu", err);

    let mut err = max_abs2(&(ig5 * id * ig5 + id));
    for mu in 0..2 {
        err = err.max(max_abs2(&(ig5 * b.mu(mu) * ig5 - b.mu(mu))));
    }
    push("chirality: (i g5) I (i g5) = -I, (i g5) g_mu (i g5) = g_mu", err);

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &SpinMatrix, b: &SpinMatrix) -> bool {
        max_abs2(&(a - b)) < 1e-14
    }

    #[test]
    fn gamma_relations() {
        let b = gamma_basis();
        let anti = b.mu(0) * b.mu(1) + b.mu(1) * b.mu(0);
        assert!(close(&anti, &SpinMatrix::zeros()));
        assert!(close(&(b.mu(0) * b.mu(0)), &SpinMatrix::identity()));
        assert!(trace2(&(b.gamma5() * b.mu(0))).norm() < 1e-15);
        let ig5 = b.gamma5() * I;
        assert!(close(&(ig5 * ig5), &-SpinMatrix::identity()));
    }

    #[test]
    fn identity_symmetry_lifts_to_identity() {
        let s = pin_element(&LatticeSymmetry::identity()).unwrap();
        assert!(close(&s, &SpinMatrix::identity()));
    }

    #[test]
    fn quarter_turn_matches_exponential() {
        let b = gamma_basis();
        let s = pin_element(&LatticeSymmetry::quarter_turn()).unwrap();
        // exp((pi/4) g0 g1) = cos(pi/4) + sin(pi/4) g0 g1
        let phi = std::f64::consts::FRAC_PI_4;
        let expected = SpinMatrix::identity() * c(phi.cos()) + b.mu(0) * b.mu(1) * c(phi.sin());
        assert!(close(&s, &expected) || close(&s, &-expected));
        let si = s.try_inverse().unwrap();
        assert!(close(&(si * b.mu(0) * s), &b.mu(1)));
        assert!(close(&(si * b.mu(1) * s), &-b.mu(0)));
    }

    #[test]
    fn reflections_flip_gamma5() {
        let b = gamma_basis();
        for sym in lattice_symmetries().into_iter().filter(|s| s.det() == -1) {
            let s = pin_element(&sym).unwrap();
            let si = s.try_inverse().unwrap();
            assert!(close(&(si * b.gamma5() * s), &-b.gamma5()));
        }
    }

    #[test]
    fn non_lattice_matrix_is_rejected() {
        assert!(LatticeSymmetry::new([[1, 1], [0, 1]]).is_err());
        assert!(pin_element(&LatticeSymmetry { r: [[2, 0], [0, 1]] }).is_err());
    }

    #[test]
    fn pin_lift_is_deterministic() {
        for sym in lattice_symmetries() {
            assert_eq!(pin_element(&sym).unwrap(), pin_element(&sym).unwrap());
        }
    }

    #[test]
    fn expand2_examples() {
        let b = gamma_basis();
        let cs = expand2(&b.mu(0));
        assert!((cs[1] - c(1.0)).norm() < 1e-15 && cs[0].norm() + cs[2].norm() + cs[3].norm() < 1e-15);
        let a = SpinMatrix::identity() + b.gamma5() * c(2.0);
        let cs = expand2(&a);
        assert!((cs[0] - c(1.0)).norm() < 1e-15 && (cs[3] - c(2.0)).norm() < 1e-15);
    }

    #[test]
    fn expand4_examples() {
        let b = gamma_basis();
        let cs = expand4(&kron(&b.gamma[0], &b.gamma[0]));
        for i in 0..4 {
            for j in 0..4 {
                let t = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert!((cs[i][j] - c(t)).norm() < 1e-15);
            }
        }
        let cs = expand4(&kron(&b.gamma5(), &b.gamma5()));
        assert!((cs[3][3] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn invariant_decompose_examples() {
        let b = gamma_basis();
        let vec_op = kron(&b.mu(0), &b.mu(0)) + kron(&b.mu(1), &b.mu(1));
        let d = invariant_decompose(&vec_op);
        assert!(d.g_star.abs() < 1e-15 && d.p_star.abs() < 1e-15 && (d.v_star - 1.0).abs() < 1e-15);
        assert!(d.residual_norm() < 1e-15);

        let d = invariant_decompose(&kron(&b.mu(0), &b.gamma5()));
        assert!(d.g_star.abs() + d.p_star.abs() + d.v_star.abs() < 1e-15);
        assert!(d.residual_norm() > 0.5);
    }

    #[test]
    fn report_passes() {
        for check in identity_report(1e-12, 7) {
            assert!(check.passed, "{} failed with error {}", check.name, check.max_error);
        }
    }
}
