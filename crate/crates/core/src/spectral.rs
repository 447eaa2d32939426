//! Finite-dimensional spectral-gap perturbation lab.
//!
//! A square matrix `L` with a simple leading eigenvalue at (or near) 1 and the rest of its
//! spectrum inside the disc `|z| ≤ η` splits as `L = P + N`, where `P` is the rank-one
//! spectral projection obtained from the Riesz contour integral of the resolvent around 1.
//! Derivatives of `P` along matrix families are given in closed form through the reduced
//! resolvent operators `Q0 = (I−N)^{-1}(I−P)` and `Q1 = −(I−N)^{-2}(I−P)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub mod lab;

/// Node count of the first contour quadrature pass.
pub const CONTOUR_NODES: usize = 64;
const CONTOUR_MAX_NODES: usize = 8192;
const CONTOUR_TOL: f64 = 1e-12;
const SINGULAR_CONDITION: f64 = 1e13;

/// Matrix infinity norm (max absolute row sum).
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm_inf_c(m: &DMatrix<Complex64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `L = P + N` with certified `(1, η)` spectral gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GappedOperator {
    pub matrix: DMatrix<f64>,
    pub eta: f64,
    /// Rank-one spectral projection `P`.
    pub proj: DMatrix<f64>,
    /// `N = L − P`.
    pub nil: DMatrix<f64>,
    /// The isolated eigenvalue enclosed by the contour (1 for a pinned family).
    pub leading: Complex64,
    /// Quadrature nodes used for the converged projection.
    pub nodes: usize,
}

/// Residuals of the structural invariants of a [`GappedOperator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitResiduals {
    /// `‖P² − P‖_∞`
    pub idempotency: f64,
    /// `‖PN‖_∞ + ‖NP‖_∞`
    pub commutation: f64,
    /// `‖L − P − N‖_∞`
    pub reconstruction: f64,
    /// `σ₂ / σ₁` of `P`.
    pub rank_ratio: f64,
    /// Spectral radius of `N`.
    pub nil_radius: f64,
}

impl GappedOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn residuals(&self) -> SplitResiduals {
        let p = &self.proj;
        let n = &self.nil;
        let sv = p.clone().singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let rank_ratio = if s.len() > 1 && s[0] > 0.0 { s[1] / s[0] } else { 0.0 };
        SplitResiduals {
            idempotency: norm_inf(&(p * p - p)),
            commutation: norm_inf(&(p * n)) + norm_inf(&(n * p)),
            reconstruction: norm_inf(&(&self.matrix - p - n)),
            rank_ratio,
            nil_radius: spectral_radius(n),
        }
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn check_square(l: &DMatrix<f64>) -> Result<()> {
    if l.nrows() != l.ncols() || l.nrows() == 0 {
        return Err(Error::InvalidArgument(format!(
            "expected a non-empty square matrix, got {}x{}",
            l.nrows(),
            l.ncols()
        )));
    }
    Ok(())
}

/// `(zI − L)^{-1}` by dense LU. Fails when the 1-norm condition estimate exceeds `1e13`.
pub fn resolvent(l: &DMatrix<f64>, z: Complex64) -> Result<DMatrix<Complex64>> {
    check_square(l)?;
    let n = l.nrows();
    let a = DMatrix::<Complex64>::identity(n, n) * z - l.map(|v| Complex64::new(v, 0.0));
    let singular = || Error::SingularResolvent { re: z.re, im: z.im };
    let inv = a.clone().lu().try_inverse().ok_or_else(singular)?;
    let cond = norm_inf_c(&a) * norm_inf_c(&inv);
    if !cond.is_finite() || cond > SINGULAR_CONDITION {
        return Err(singular());
    }
    Ok(inv)
}

fn contour_projection(l: &DMatrix<f64>, radius: f64, nodes: usize) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let mut acc = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..nodes {
        let theta = 2.0 * PI * k as f64 / nodes as f64;
        let w = Complex64::from_polar(radius, theta);
        // (1/2πi) dz = r e^{iθ} dθ / 2π
        let r = resolvent(l, Complex64::new(1.0, 0.0) + w)?;
        acc += r * (w / nodes as f64);
    }
    Ok(acc.map(|c| c.re))
}

/// Splits `L` into its leading spectral projection and remainder.
///
/// `P` is the trapezoid-rule value of `(1/2πi)∮(z−L)^{-1}dz` on the circle of radius
/// `(1−η)/2` around 1, starting at 64 nodes and doubling until successive results differ
/// by less than `1e-12`. Exactly one eigenvalue must lie inside that circle and all others
/// must satisfy `|λ| ≤ η`.
pub fn spectral_split(l: &DMatrix<f64>, eta: f64) -> Result<GappedOperator> {
    check_square(l)?;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("eta must lie in (0,1), got {eta}")));
    }
    let radius = (1.0 - eta) / 2.0;
    let eig = l.clone().complex_eigenvalues();
    let one = Complex64::new(1.0, 0.0);
    let inside: Vec<Complex64> = eig.iter().copied().filter(|z| (z - one).norm() < radius).collect();
    if inside.len() != 1 {
        return Err(Error::GapViolation(format!(
            "{} eigenvalues inside the contour around 1 (expected exactly one simple eigenvalue)",
            inside.len()
        )));
    }
    let slack = 1e-10 * (1.0 + norm_inf(l));
    if let Some(z) = eig
        .iter()
        .filter(|z| (*z - one).norm() >= radius)
        .find(|z| z.norm() > eta + slack)
    {
        return Err(Error::GapViolation(format!(
            "eigenvalue {:.6}{:+.6}i has modulus {:.6} > eta = {eta}",
            z.re,
            z.im,
            z.norm()
        )));
    }

    let mut nodes = CONTOUR_NODES;
    let mut prev = contour_projection(l, radius, nodes)?;
    loop {
        let next_nodes = nodes * 2;
        let next = contour_projection(l, radius, next_nodes)?;
        let change = norm_inf(&(&next - &prev));
        nodes = next_nodes;
        prev = next;
        if change < CONTOUR_TOL {
            break;
        }
        if nodes >= CONTOUR_MAX_NODES {
            return Err(Error::QuadratureDivergence { nodes, change });
        }
    }
    let nil = l - &prev;
    Ok(GappedOperator {
        matrix: l.clone(),
        eta,
        proj: prev,
        nil,
        leading: inside[0],
        nodes,
    })
}

fn inverse_checked(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let singular = || Error::SingularResolvent { re: 1.0, im: 0.0 };
    let inv = a.clone().lu().try_inverse().ok_or_else(singular)?;
    let cond = norm_inf(a) * norm_inf(&inv);
    if !cond.is_finite() || cond > SINGULAR_CONDITION {
        return Err(singular());
    }
    Ok(inv)
}

/// `Q0 = (I−N)^{-1}(I−P)` and `Q1 = −(I−N)^{-2}(I−P)`.
pub fn q_operators(g: &GappedOperator) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = g.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let inv = inverse_checked(&(&id - &g.nil))?;
    let q0 = &inv * (&id - &g.proj);
    let q1 = -(&inv * &q0);
    Ok((q0, q1))
}

/// Matrix family `L_t = base + Σ t_i D_i + ½ Σ t_i t_j C_ij` over a parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorFamily {
    pub base: DMatrix<f64>,
    pub directions: Vec<DMatrix<f64>>,
    /// Symmetric second-order terms `C_ij = ∂_i∂_j L`; empty for affine families.
    pub curvature: Vec<Vec<DMatrix<f64>>>,
    pub bounds: Vec<(f64, f64)>,
    pub eta: f64,
}

impl OperatorFamily {
    /// Affine family over the box `[-radius, radius]^k`.
    pub fn affine(base: DMatrix<f64>, directions: Vec<DMatrix<f64>>, radius: f64, eta: f64) -> Self {
        let k = directions.len();
        Self {
            base,
            directions,
            curvature: Vec::new(),
            bounds: vec![(-radius, radius); k],
            eta,
        }
    }

    pub fn params(&self) -> usize {
        self.directions.len()
    }

    fn check_point(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.params() {
            return Err(Error::InvalidArgument(format!(
                "parameter point has {} entries, family has {}",
                t.len(),
                self.params()
            )));
        }
        for (ti, (lo, hi)) in t.iter().zip(&self.bounds) {
            if ti < lo || ti > hi {
                return Err(Error::InvalidArgument(format!(
                    "parameter {ti} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    fn curv(&self, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        self.curvature.get(i).and_then(|row| row.get(j))
    }

    pub fn at(&self, t: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(t)?;
        let mut l = self.base.clone();
        for (ti, d) in t.iter().zip(&self.directions) {
            l += d * *ti;
        }
        for i in 0..t.len() {
            for j in 0..t.len() {
                if let Some(c) = self.curv(i, j) {
                    l += c * (0.5 * t[i] * t[j]);
                }
            }
        }
        Ok(l)
    }

    /// `∂_i L_t`
    pub fn partial(&self, t: &[f64], i: usize) -> Result<DMatrix<f64>> {
        self.check_point(t)?;
        let mut d = self
            .directions
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter {i}")))?
            .clone();
        for (j, tj) in t.iter().enumerate() {
            if let Some(c) = self.curv(i, j) {
                d += c * *tj;
            }
        }
        Ok(d)
    }

    /// `∂_i ∂_j L_t`
    pub fn second_partial(&self, i: usize, j: usize) -> DMatrix<f64> {
        let n = self.base.nrows();
        self.curv(i, j).cloned().unwrap_or_else(|| DMatrix::zeros(n, n))
    }

    pub fn split_at(&self, t: &[f64]) -> Result<GappedOperator> {
        spectral_split(&self.at(t)?, self.eta)
    }
}

/// `∂_i P_t = P_t (∂_i L_t) Q0_t + Q0_t (∂_i L_t) P_t`.
pub fn projection_derivative(fam: &OperatorFamily, t: &[f64], i: usize) -> Result<DMatrix<f64>> {
    let g = fam.split_at(t)?;
    let (q0, _) = q_operators(&g)?;
    let d = fam.partial(t, i)?;
    Ok(&g.proj * &d * &q0 + &q0 * &d * &g.proj)
}

/// Truncated series `Σ_{n<len} N_tⁿ (∂_iL_t − P_t ∂_iL_t) P_t`, equal to `(∂_i P_t) P_t`
/// up to a tail of order `η^len`.
pub fn projection_derivative_times_p(
    fam: &OperatorFamily,
    t: &[f64],
    i: usize,
    series_len: usize,
) -> Result<DMatrix<f64>> {
    let g = fam.split_at(t)?;
    let d = fam.partial(t, i)?;
    let mut term = (&d - &g.proj * &d) * &g.proj;
    let mut acc = DMatrix::zeros(g.dim(), g.dim());
    for _ in 0..series_len {
        acc += &term;
        term = &g.nil * &term;
    }
    Ok(acc)
}

/// `(∂_i∂_j P_t) P_t` from the reduced resolvents:
///
/// `Q0 Di Q0 Dj P + P Di Q1 Dj P + Q1 Di P Dj P + (i ↔ j) + Q0 Dij P`.
pub fn mixed_projection_derivative(
    fam: &OperatorFamily,
    t: &[f64],
    i: usize,
    j: usize,
) -> Result<DMatrix<f64>> {
    let g = fam.split_at(t)?;
    let (q0, q1) = q_operators(&g)?;
    let p = &g.proj;
    let di = fam.partial(t, i)?;
    let dj = fam.partial(t, j)?;
    let dij = fam.second_partial(i, j);
    let ordered = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        &q0 * a * &q0 * b * p + p * a * &q1 * b * p + &q1 * a * p * b * p
    };
    Ok(ordered(&di, &dj) + ordered(&dj, &di) + &q0 * dij * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lab::{eigen_projection_oracle, random_gapped_matrix, seeded_rng};

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
    }

    #[test]
    fn split_diagonal() {
        let g = spectral_split(&diag(&[1.0, 0.5]), 0.6).unwrap();
        assert!(norm_inf(&(&g.proj - diag(&[1.0, 0.0]))) < 1e-13);
        assert!(norm_inf(&(&g.nil - diag(&[0.0, 0.5]))) < 1e-13);

        let g = spectral_split(&diag(&[1.0]), 0.5).unwrap();
        assert!((g.proj[(0, 0)] - 1.0).abs() < 1e-13);
        assert!(g.nil[(0, 0)].abs() < 1e-13);
    }

    #[test]
    fn split_matches_eigendecomposition_oracle() {
        let mut rng = seeded_rng(7);
        let (l, v) = random_gapped_matrix(&mut rng, 5, &[1.0, 0.4, 0.3, -0.2, 0.1]);
        let g = spectral_split(&l, 0.5).unwrap();
        let vinv = v.clone().try_inverse().unwrap();
        let exact = &v * diag(&[1.0, 0.0, 0.0, 0.0, 0.0]) * vinv;
        assert!(norm_inf(&(&g.proj - &exact)) < 1e-10);
        assert!(norm_inf(&(&g.proj - eigen_projection_oracle(&l))) < 1e-10);
        let r = g.residuals();
        assert!(r.idempotency < 1e-10 && r.commutation < 1e-10 && r.rank_ratio < 1e-8);
        assert!(r.nil_radius <= 0.5 + 1e-10);
    }

    #[test]
    fn gap_violations() {
        assert!(matches!(
            spectral_split(&diag(&[1.0, 0.8]), 0.5),
            Err(Error::GapViolation(_))
        ));
        assert!(matches!(
            spectral_split(&diag(&[1.0, 1.0, 0.1]), 0.5),
            Err(Error::GapViolation(_))
        ));
        assert!(matches!(
            spectral_split(&diag(&[0.3, 0.1]), 0.5),
            Err(Error::GapViolation(_))
        ));
    }

    #[test]
    fn resolvent_examples() {
        let r = resolvent(&diag(&[1.0, 0.5]), Complex64::new(2.0, 0.0)).unwrap();
        assert!((r[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((r[(1, 1)].re - 2.0 / 3.0).abs() < 1e-15);
        let r = resolvent(&diag(&[0.0]), Complex64::new(1.0, 0.0)).unwrap();
        assert!((r[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!(matches!(
            resolvent(&diag(&[1.0, 0.5]), Complex64::new(1.0, 0.0)),
            Err(Error::SingularResolvent { .. })
        ));

        let mut rng = seeded_rng(3);
        let (l, _) = random_gapped_matrix(&mut rng, 5, &[1.0, 0.4, 0.3, -0.2, 0.1]);
        let z = Complex64::new(1.0, 0.0) + Complex64::from_polar(0.25, 0.7);
        let r = resolvent(&l, z).unwrap();
        let a = DMatrix::<Complex64>::identity(5, 5) * z - l.map(|v| Complex64::new(v, 0.0));
        let resid = &a * &r - DMatrix::<Complex64>::identity(5, 5);
        assert!(norm_inf_c(&resid) < 1e-12);
    }

    #[test]
    fn q_operator_examples() {
        let g = spectral_split(&diag(&[1.0, 0.5]), 0.6).unwrap();
        let (q0, q1) = q_operators(&g).unwrap();
        assert!(norm_inf(&(&q0 - diag(&[0.0, 2.0]))) < 1e-12);
        assert!(norm_inf(&(&q1 - diag(&[0.0, -4.0]))) < 1e-12);

        let g = spectral_split(&diag(&[1.0, 0.0]), 0.5).unwrap();
        let (q0, q1) = q_operators(&g).unwrap();
        assert!(norm_inf(&(&q0 - diag(&[0.0, 1.0]))) < 1e-12);
        assert!(norm_inf(&(&q1 - diag(&[0.0, -1.0]))) < 1e-12);
    }

    #[test]
    fn q0_matches_truncated_neumann_series() {
        let mut rng = seeded_rng(11);
        let (l, _) = random_gapped_matrix(&mut rng, 5, &[1.0, 0.4, 0.3, -0.2, 0.1]);
        let g = spectral_split(&l, 0.5).unwrap();
        let (q0, q1) = q_operators(&g).unwrap();
        let id = DMatrix::<f64>::identity(5, 5);
        let ip = &id - &g.proj;
        let terms = 80;
        let mut series = DMatrix::zeros(5, 5);
        let mut power = id.clone();
        for _ in 0..terms {
            series += &power * &ip;
            power = &g.nil * power;
        }
        // ‖Nⁿ‖ is bounded by cond(V) ηⁿ rather than ηⁿ itself
        let bound = 10.0 * 0.5f64.powi(terms) / 0.5 * norm_inf(&ip) + 1e-12;
        assert!(norm_inf(&(&q0 - &series)) < bound);
        for q in [&q0, &q1] {
            assert!(norm_inf(&(&g.proj * q)) < 1e-11);
            assert!(norm_inf(&(q * &g.proj)) < 1e-11);
        }
    }

    fn offdiag_family() -> OperatorFamily {
        let mut e = DMatrix::zeros(2, 2);
        e[(0, 1)] = 1.0;
        OperatorFamily::affine(diag(&[1.0, 0.5]), vec![e], 0.1, 0.6)
    }

    fn fd_projection(fam: &OperatorFamily, t: &[f64], i: usize, h: f64) -> DMatrix<f64> {
        let mut tp = t.to_vec();
        let mut tm = t.to_vec();
        tp[i] += h;
        tm[i] -= h;
        let pp = fam.split_at(&tp).unwrap().proj;
        let pm = fam.split_at(&tm).unwrap().proj;
        (pp - pm) / (2.0 * h)
    }

    #[test]
    fn projection_derivative_constant_family() {
        let fam = OperatorFamily::affine(diag(&[1.0, 0.5]), vec![DMatrix::zeros(2, 2)], 0.1, 0.6);
        assert!(norm_inf(&projection_derivative(&fam, &[0.0], 0).unwrap()) < 1e-15);
        assert!(norm_inf(&projection_derivative_times_p(&fam, &[0.0], 0, 10).unwrap()) < 1e-15);
    }

    #[test]
    fn projection_derivative_matches_finite_difference() {
        let fam = offdiag_family();
        let dp = projection_derivative(&fam, &[0.0], 0).unwrap();
        let fd = fd_projection(&fam, &[0.0], 0, 1e-5);
        assert!(norm_inf(&(&dp - &fd)) < 1e-6);

        let mut rng = seeded_rng(5);
        let (l, _) = random_gapped_matrix(&mut rng, 5, &[1.0, 0.4, 0.3, -0.2, 0.1]);
        let d = lab::random_matrix(&mut rng, 5, 5, 0.3);
        let fam = OperatorFamily::affine(l, vec![d], 0.1, 0.5);
        let dp = projection_derivative(&fam, &[0.0], 0).unwrap();
        let fd = fd_projection(&fam, &[0.0], 0, 1e-5);
        assert!(norm_inf(&(&dp - &fd)) < 1e-6);
    }

    #[test]
    fn projection_derivative_is_second_order_accurate() {
        let mut rng = seeded_rng(9);
        let (l, _) = random_gapped_matrix(&mut rng, 5, &[1.0, 0.4, 0.3, -0.2, 0.1]);
        let d = lab::random_matrix(&mut rng, 5, 5, 0.3);
        let fam = OperatorFamily::affine(l, vec![d], 0.1, 0.5);
        let dp = projection_derivative(&fam, &[0.0], 0).unwrap();
        let errs: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
            .iter()
            .map(|&h| norm_inf(&(&dp - fd_projection(&fam, &[0.0], 0, h))))
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio} from {errs:?}");
        }
    }

    #[test]
    fn ppp_series_matches_closed_form() {
        let fam = offdiag_family();
        let p = fam.split_at(&[0.0]).unwrap().proj;
        let closed = projection_derivative(&fam, &[0.0], 0).unwrap() * &p;
        let series = projection_derivative_times_p(&fam, &[0.0], 0, 60).unwrap();
        assert!(norm_inf(&(&closed - &series)) < 1e-12);

        let mut rng = seeded_rng(13);
        let (l, _) = random_gapped_matrix(&mut rng, 5, &[1.0, 0.4, 0.3, -0.2, 0.1]);
        let d = lab::random_matrix(&mut rng, 5, 5, 0.3);
        let fam = OperatorFamily::affine(l, vec![d], 0.1, 0.5);
        let p = fam.split_at(&[0.0]).unwrap().proj;
        let series = projection_derivative_times_p(&fam, &[0.0], 0, 80).unwrap();
        let fd = fd_projection(&fam, &[0.0], 0, 1e-5) * &p;
        assert!(norm_inf(&(&series - &fd)) < 1e-6);
    }

    #[test]
    fn pdp_vanishes_on_stochastic_families() {
        let mut rng = seeded_rng(21);
        let fam = lab::stochastic_family(&mut rng, 6, 2);
        for t in [[0.0, 0.0], [0.01, -0.02]] {
            let p = fam.split_at(&t).unwrap().proj;
            for i in 0..2 {
                let d = fam.partial(&t, i).unwrap();
                assert!(norm_inf(&(&p * &d * &p)) < 1e-10);
            }
        }
    }

    fn mixed_fd(fam: &OperatorFamily, h: f64) -> DMatrix<f64> {
        let p = |a: f64, b: f64| fam.split_at(&[a, b]).unwrap().proj;
        (p(h, h) - p(h, -h) - p(-h, h) + p(-h, -h)) / (4.0 * h * h) * p(0.0, 0.0)
    }

    #[test]
    fn mixed_derivative_examples() {
        let fam = OperatorFamily::affine(
            diag(&[1.0, 0.5]),
            vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)],
            0.1,
            0.6,
        );
        assert!(norm_inf(&mixed_projection_derivative(&fam, &[0.0, 0.0], 0, 1).unwrap()) < 1e-15);

        let mut rng = seeded_rng(17);
        let (l, _) = random_gapped_matrix(&mut rng, 4, &[1.0, 0.3, -0.25, 0.1]);
        let d1 = lab::random_matrix(&mut rng, 4, 4, 0.3);
        let d2 = lab::random_matrix(&mut rng, 4, 4, 0.3);
        let fam = OperatorFamily::affine(l, vec![d1.clone(), d2], 0.1, 0.5);
        let formula = mixed_projection_derivative(&fam, &[0.0, 0.0], 0, 1).unwrap();
        assert!(norm_inf(&(&formula - mixed_fd(&fam, 1e-3))) < 1e-4);

        let twin = OperatorFamily::affine(fam.base.clone(), vec![d1.clone(), d1], 0.1, 0.5);
        let a = mixed_projection_derivative(&twin, &[0.0, 0.0], 0, 1).unwrap();
        let b = mixed_projection_derivative(&twin, &[0.0, 0.0], 1, 0).unwrap();
        assert!(norm_inf(&(&a - &b)) < 1e-14);
    }

    #[test]
    fn mixed_derivative_with_curvature() {
        let mut rng = seeded_rng(23);
        let mut fam = lab::stochastic_family(&mut rng, 5, 2);
        let c = lab::zero_column_sum_matrix(&mut rng, 5, 0.2);
        fam.curvature = vec![
            vec![DMatrix::zeros(5, 5), c.clone()],
            vec![c, DMatrix::zeros(5, 5)],
        ];
        let formula = mixed_projection_derivative(&fam, &[0.0, 0.0], 0, 1).unwrap();
        assert!(norm_inf(&(&formula - mixed_fd(&fam, 1e-3))) < 1e-4);
    }
}
