//! Seeded random generators, the eigendecomposition oracle, and the spectral-lab suite.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    mixed_projection_derivative, norm_inf, projection_derivative, projection_derivative_times_p,
    spectral_split, OperatorFamily,
};
use crate::error::Result;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-scale, scale]`.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale))
}

/// `V diag(spectrum) V^{-1}` with `V = I + noise`, returned with `V`.
pub fn random_gapped_matrix(
    rng: &mut impl Rng,
    dim: usize,
    spectrum: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    assert_eq!(spectrum.len(), dim);
    let v = DMatrix::<f64>::identity(dim, dim) + random_matrix(rng, dim, dim, 0.5 / (dim as f64).sqrt());
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(spectrum));
    let vinv = v.clone().try_inverse().expect("near-identity V is invertible");
    (&v * d * vinv, v)
}

/// Random matrix with eigenvalue 1 and the rest of the spectrum (including complex pairs)
/// inside the disc of radius `inner`.
pub fn random_block_gapped_matrix(rng: &mut impl Rng, dim: usize, inner: f64) -> DMatrix<f64> {
    let mut block = DMatrix::<f64>::zeros(dim, dim);
    block[(0, 0)] = 1.0;
    let mut k = 1;
    while k < dim {
        if k + 1 < dim && rng.random_bool(0.4) {
            let r = rng.random_range(0.0..inner);
            let th = rng.random_range(0.0..std::f64::consts::PI);
            block[(k, k)] = r * th.cos();
            block[(k, k + 1)] = -r * th.sin();
            block[(k + 1, k)] = r * th.sin();
            block[(k + 1, k + 1)] = r * th.cos();
            k += 2;
        } else {
            block[(k, k)] = rng.random_range(-inner..inner);
            k += 1;
        }
    }
    let v = DMatrix::<f64>::identity(dim, dim) + random_matrix(rng, dim, dim, 0.5 / (dim as f64).sqrt());
    let vinv = v.clone().try_inverse().expect("near-identity V is invertible");
    &v * block * vinv
}

/// Random matrix whose columns sum to zero.
pub fn zero_column_sum_matrix(rng: &mut impl Rng, dim: usize, scale: f64) -> DMatrix<f64> {
    let mut d = random_matrix(rng, dim, dim, scale / (dim as f64).sqrt());
    for j in 0..dim {
        let mean = d.column(j).sum() / dim as f64;
        for i in 0..dim {
            d[(i, j)] -= mean;
        }
    }
    d
}

/// Affine family `B + Σ t_i D_i` with column-stochastic `B` and zero-column-sum `D_i`,
/// so that eigenvalue 1 (left eigenvector `1ᵀ`) persists along the whole family.
pub fn stochastic_family(rng: &mut impl Rng, dim: usize, params: usize) -> OperatorFamily {
    let uniform = 1.0 / dim as f64;
    let mut b = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(0.0..1.0));
    for j in 0..dim {
        let s = b.column(j).sum();
        for i in 0..dim {
            b[(i, j)] = 0.5 * uniform + 0.5 * b[(i, j)] / s;
        }
    }
    let dirs = (0..params)
        .map(|_| zero_column_sum_matrix(rng, dim, 0.2))
        .collect();
    // the convex mix with the uniform matrix contracts the zero-sum subspace by 1/2
    OperatorFamily::affine(b, dirs, 0.05, 0.75)
}

/// Brute-force eigenprojection `r lᵀ / (lᵀ r)` onto the eigenvalue closest to 1, with `r`
/// and `l` taken as null vectors of `L − λI` and its transpose.
pub fn eigen_projection_oracle(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let lambda = l
        .clone()
        .complex_eigenvalues()
        .iter()
        .copied()
        .min_by(|a, b| {
            (a - Complex64::new(1.0, 0.0))
                .norm()
                .total_cmp(&(b - Complex64::new(1.0, 0.0)).norm())
        })
        .expect("non-empty spectrum")
        .re;
    let shifted = l - DMatrix::<f64>::identity(n, n) * lambda;
    let null_vec = |m: DMatrix<f64>| {
        let svd = m.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let (k, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        vt.row(k).transpose()
    };
    let r = null_vec(shifted.clone());
    let left = null_vec(shifted.transpose());
    let denom = left.dot(&r);
    (&r * left.transpose()) / denom
}

/// One line of the spectral-lab table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabCheck {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
}

impl LabCheck {
    pub fn passed(&self) -> bool {
        self.max_residual < self.tolerance
    }
}

/// Results of [`run_lab`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabReport {
    pub seed: u64,
    pub checks: Vec<LabCheck>,
}

impl LabReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(LabCheck::passed)
    }
}

fn fd_p(fam: &OperatorFamily, t: &[f64], i: usize, h: f64) -> Result<DMatrix<f64>> {
    let mut tp = t.to_vec();
    let mut tm = t.to_vec();
    tp[i] += h;
    tm[i] -= h;
    Ok((fam.split_at(&tp)?.proj - fam.split_at(&tm)?.proj) / (2.0 * h))
}

/// Runs the seeded spectral-lab suite: `matrices` random gapped matrices of dimension up to
/// 16 and `families` two-parameter column-stochastic families.
pub fn run_lab(seed: u64, matrices: usize, families: usize) -> Result<LabReport> {
    let mut rng = seeded_rng(seed);
    let mut idem: f64 = 0.0;
    let mut comm: f64 = 0.0;
    let mut rank: f64 = 0.0;
    let mut oracle: f64 = 0.0;
    let mut dp_fd: f64 = 0.0;
    let mut ppp_fd: f64 = 0.0;
    for _ in 0..matrices {
        let dim = rng.random_range(2..=16);
        let l = random_block_gapped_matrix(&mut rng, dim, 0.5);
        let g = spectral_split(&l, 0.6)?;
        let r = g.residuals();
        idem = idem.max(r.idempotency);
        comm = comm.max(r.commutation);
        rank = rank.max(r.rank_ratio);
        oracle = oracle.max(norm_inf(&(&g.proj - eigen_projection_oracle(&l))));

        let d = random_matrix(&mut rng, dim, dim, 0.3 / (dim as f64).sqrt());
        let fam = OperatorFamily::affine(l, vec![d], 0.01, 0.6);
        let h = 1e-5;
        let fd = fd_p(&fam, &[0.0], 0, h)?;
        dp_fd = dp_fd.max(norm_inf(&(projection_derivative(&fam, &[0.0], 0)? - &fd)));
        let series = projection_derivative_times_p(&fam, &[0.0], 0, 120)?;
        ppp_fd = ppp_fd.max(norm_inf(&(series - fd * &g.proj)));
    }
    let mut mixed: f64 = 0.0;
    for _ in 0..families {
        let dim = rng.random_range(3..=8);
        let fam = stochastic_family(&mut rng, dim, 2);
        let h = 1e-3;
        let p = |a: f64, b: f64| fam.split_at(&[a, b]).map(|g| g.proj);
        let fd = (p(h, h)? - p(h, -h)? - p(-h, h)? + p(-h, -h)?) / (4.0 * h * h) * p(0.0, 0.0)?;
        let formula = mixed_projection_derivative(&fam, &[0.0, 0.0], 0, 1)?;
        mixed = mixed.max(norm_inf(&(formula - fd)));
    }
    let check = |name: &str, r: f64, tol: f64| LabCheck {
        name: name.to_string(),
        max_residual: r,
        tolerance: tol,
    };
    Ok(LabReport {
        seed,
        checks: vec![
            check("P^2 = P", idem, 1e-10),
            check("PN = NP = 0", comm, 1e-10),
            check("rank P = 1", rank, 1e-10),
            check("contour P vs eigenprojection", oracle, 1e-10),
            check("dP formula vs central FD", dp_fd, 1e-6),
            check("(dP)P series vs central FD", ppp_fd, 1e-6),
            check("(d_i d_j P)P formula vs mixed FD", mixed, 1e-4),
        ],
    })
}
