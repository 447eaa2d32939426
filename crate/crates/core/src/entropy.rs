//! SRB entropy `H(f) = ∫ log Jf ρ_f`, its Gateaux derivative, the Sobolev `H^k` metric on
//! trigonometric vector fields, and the Riesz gradient of `H` in that metric.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::map::{multi_indices, Mode, VecField};
use crate::response::{geometric_series, response_source, tail_estimate, FdReport};
use crate::spectral::lab::seeded_rng;
use crate::transfer::TransferContext;

/// Sobolev `H^k` metric truncated at `|m|_∞ ≤ cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolevMetric {
    dim: usize,
    k: u32,
    cutoff: i64,
    alphas: Vec<[u32; 2]>,
}

impl SobolevMetric {
    pub fn new(dim: usize, k: u32, cutoff: i64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidArgument(format!("dim must be 1 or 2, got {dim}")));
        }
        if cutoff < 0 {
            return Err(Error::InvalidArgument("cutoff must be nonnegative".into()));
        }
        Ok(Self {
            dim,
            k,
            cutoff,
            alphas: multi_indices(dim, k),
        })
    }

    /// `k = 4` in one dimension, `k = 5` in two.
    pub fn default_for(dim: usize, cutoff: i64) -> Result<Self> {
        Self::new(dim, if dim == 1 { 4 } else { 5 }, cutoff)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    /// `w_k(m) = Σ_{|α| ≤ k} Π_j (2π m_j)^{2α_j}`
    pub fn weight(&self, freq: [i64; 2]) -> f64 {
        self.alphas
            .iter()
            .map(|a| {
                (0..self.dim)
                    .map(|j| (2.0 * PI * freq[j] as f64).powi(2 * a[j] as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Canonical frequencies `m` (first non-zero entry positive, and `m = 0`) with
    /// `|m|_∞ ≤ cutoff`.
    pub fn frequencies(&self) -> Vec<[i64; 2]> {
        let m = self.cutoff;
        let mut out = vec![[0, 0]];
        if self.dim == 1 {
            out.extend((1..=m).map(|a| [a, 0]));
        } else {
            out.extend((1..=m).map(|b| [0, b]));
            for a in 1..=m {
                out.extend((-m..=m).map(|b| [a, b]));
            }
        }
        out
    }

    /// The `L²`-orthonormal basis fields `√2 cos(2πm·x) e_i`, `√2 sin(2πm·x) e_i`, and `e_i`.
    pub fn basis(&self) -> Vec<BasisField> {
        let mut out = Vec::new();
        for component in 0..self.dim {
            for freq in self.frequencies() {
                if freq == [0, 0] {
                    out.push(BasisField {
                        component,
                        freq,
                        kind: BasisKind::Constant,
                    });
                } else {
                    for kind in [BasisKind::Cos, BasisKind::Sin] {
                        out.push(BasisField {
                            component,
                            freq,
                            kind,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Constant,
    Cos,
    Sin,
}

/// One `L²`-orthonormal trigonometric basis field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisField {
    pub component: usize,
    pub freq: [i64; 2],
    pub kind: BasisKind,
}

impl BasisField {
    pub fn to_field(self, dim: usize) -> VecField {
        let (c, s) = match self.kind {
            BasisKind::Constant => (1.0, 0.0),
            BasisKind::Cos => (SQRT_2, 0.0),
            BasisKind::Sin => (0.0, SQRT_2),
        };
        VecField::mode(dim, self.component, self.freq, c, s).expect("basis mode is valid")
    }
}

/// `⟨u, v⟩_{H^k}` on cos/sin coefficients: `w(0) a_u a_v` for the constant mode and
/// `w(m) (a_u a_v + b_u b_v) / 2` otherwise, summed over components.
pub fn sobolev_inner(metric: &SobolevMetric, u: &VecField, v: &VecField) -> Result<f64> {
    for f in [u, v] {
        if f.dim() != metric.dim {
            return Err(Error::DimMismatch {
                expected: metric.dim,
                got: f.dim(),
            });
        }
        if let Some(m) = f.modes().iter().find(|m| m.order() > metric.cutoff) {
            return Err(Error::CutoffExceeded {
                freq: m.freq,
                cutoff: metric.cutoff,
            });
        }
    }
    let mut s = 0.0;
    for mu in u.modes() {
        let (a, b) = v.coefficient(mu.component, mu.freq);
        let w = metric.weight(mu.freq);
        s += if mu.freq == [0, 0] {
            w * mu.cos * a
        } else {
            w * (mu.cos * a + mu.sin * b) / 2.0
        };
    }
    Ok(s)
}

/// `H(f) = ∫ log Jf · ρ dx` as a grid mean.
pub fn entropy(ctx: &TransferContext) -> Result<f64> {
    Ok(ctx.log_jacobian()?.inner(ctx.density()?))
}

/// `∫ trace(Df^{-1} Dg) ρ dx`
pub fn trace_term(ctx: &TransferContext, g: &VecField) -> Result<f64> {
    let grid = ctx.grid();
    let map = ctx.map();
    let dim = grid.dim();
    let rho = ctx.density()?;
    let vals: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let p = grid.node(idx);
            let inv = inverse2(&map.jacobian(p), dim);
            let dg = g.jacobian(p);
            let mut tr = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    tr += inv[i][j] * dg[j][i];
                }
            }
            tr * rho.values()[idx]
        })
        .collect();
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

fn inverse2(m: &[[f64; 2]; 2], dim: usize) -> [[f64; 2]; 2] {
    if dim == 1 {
        return [[1.0 / m[0][0], 0.0], [0.0, 0.0]];
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

/// Both forms of `DH(f)g` with their truncation data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateauxValue {
    /// `∫tr(Df⁻¹Dg)ρ − Σ_n ∫ 𝓛ⁿ div[𝓛(gρ)] log Jf`
    pub primal: f64,
    /// `∫tr(Df⁻¹Dg)ρ − Σ_n ∫ div[𝓛(gρ)] (log Jf ∘ fⁿ)`
    pub dual: f64,
    pub primal_tail: f64,
    pub dual_tail: f64,
    pub terms: usize,
}

/// Primal form with its tail bound and term count.
pub fn gateaux_primal(ctx: &TransferContext, g: &VecField) -> Result<(f64, f64, usize)> {
    let tr = trace_term(ctx, g)?;
    let v0 = response_source(ctx, g)?;
    let logj = ctx.log_jacobian()?;
    let eta = ctx.gap()?;
    let n = ctx.numerics();
    let s = geometric_series(v0, |u| ctx.apply_deflated(u), n.tol, eta, n.max_terms)?;
    let mut l1 = 0.0;
    for v in logj.values() {
        l1 += v.abs();
    }
    l1 /= logj.values().len() as f64;
    Ok((tr + s.sum.inner(logj), s.tail * l1 + n.tol, s.terms))
}

/// Koopman step `S ↦ P_N(S ∘ f)`: the composition is sampled on an oversampled grid fine
/// enough that the retained coefficients are alias-free, then truncated back.
fn koopman_step(ctx: &TransferContext, s: &GridField, fine: Grid) -> Result<GridField> {
    let map = ctx.map();
    let vals: Vec<f64> = (0..fine.len())
        .into_par_iter()
        .map(|idx| s.eval(map.evaluate(fine.node(idx))))
        .collect();
    GridField::new(fine, vals)?.resample(s.grid().n())
}

fn koopman_grid(ctx: &TransferContext) -> Result<Grid> {
    let a = ctx.map().linear_part();
    let row_max = a
        .iter()
        .map(|r| r.iter().map(|v| v.unsigned_abs()).sum::<u64>())
        .max()
        .unwrap_or(1) as usize;
    let factor = (row_max + 2).div_ceil(2).next_power_of_two();
    ctx.grid().with_n(ctx.grid().n() * factor)
}

/// `DH(f)g` by the primal series and by the dual (composition) series with the same number
/// of terms. Fails with `FormsDisagree` when they differ by more than ten times the summed
/// tail bounds.
pub fn entropy_gateaux(ctx: &TransferContext, g: &VecField) -> Result<GateauxValue> {
    let (primal, primal_tail, terms) = gateaux_primal(ctx, g)?;
    let tr = trace_term(ctx, g)?;
    let v0 = response_source(ctx, g)?;
    let fine = koopman_grid(ctx)?;
    let logj = ctx.log_jacobian()?;
    let mut s = logj.add_scalar(-logj.mean());
    let mut dual_sum = 0.0;
    let mut norms = vec![s.sup_norm()];
    for n in 0..terms {
        dual_sum += v0.inner(&s);
        if n + 1 < terms {
            let next = koopman_step(ctx, &s, fine)?;
            s = next.add_scalar(-next.mean());
            norms.push(s.sup_norm());
        }
    }
    let (tail, _) = tail_estimate(&norms, ctx.gap()?);
    let dual_tail = v0.sup_norm() * tail + ctx.numerics().tol;
    let dual = tr + dual_sum;
    let allowed = 10.0 * (primal_tail + dual_tail);
    if (primal - dual).abs() > allowed {
        return Err(Error::FormsDisagree {
            primal,
            dual,
            allowed,
        });
    }
    Ok(GateauxValue {
        primal,
        dual,
        primal_tail,
        dual_tail,
        terms,
    })
}

/// `‖(H(f+hg) − H(f−hg))/(2h) − DH(f)g‖` at `h` and `h/2`.
pub fn gateaux_fd_check(ctx: &TransferContext, g: &VecField, h: f64) -> Result<FdReport> {
    let d = gateaux_primal(ctx, g)?.0;
    let fd = |h: f64| -> Result<f64> {
        let plus = ctx.perturbed(ctx.map().add_scaled(h, g)?)?;
        let minus = ctx.perturbed(ctx.map().add_scaled(-h, g)?)?;
        Ok((entropy(&plus)? - entropy(&minus)?) / (2.0 * h))
    };
    if g.is_zero() {
        return Ok(FdReport::new(h, 0.0, 0.0));
    }
    Ok(FdReport::new(h, (fd(h)? - d).abs(), (fd(h / 2.0)? - d).abs()))
}

/// Riesz representer of `DH(f)` in the truncated `H^k` metric.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub field: VecField,
    pub hk_norm: f64,
    /// Max `|⟨∇H, e⟩_{H^k} − DH(f)e|` over the sampled basis fields.
    pub l2_pairing_check: f64,
    /// `DH(f)e` for every basis field, in [`SobolevMetric::basis`] order.
    pub derivatives: Vec<(BasisField, f64)>,
}

/// Number of basis fields re-tested by [`gradient_vector`].
pub const PAIRING_SAMPLES: usize = 10;

/// [`gradient_vector_with`] with 10 pairing samples and seed 0.
pub fn gradient_vector(ctx: &TransferContext, metric: &SobolevMetric) -> Result<GradientVector> {
    gradient_vector_with(ctx, metric, PAIRING_SAMPLES, 0)
}

/// Builds `∇H = Σ_e DH(e)/w(e) · e` over the orthonormal basis up to the metric cutoff.
///
/// The series part of every `DH(e)` is evaluated through the adjoint sum
/// `W = Σ_n (Nᵀ)ⁿ log Jf`, so that `DH(e) = trace(e) + ⟨ρ e_i, 𝓛ᵀ ∂_i W⟩`.
/// `samples` basis fields drawn with `seed` are then re-evaluated with the primal series.
pub fn gradient_vector_with(
    ctx: &TransferContext,
    metric: &SobolevMetric,
    samples: usize,
    seed: u64,
) -> Result<GradientVector> {
    let grid = ctx.grid();
    let dim = grid.dim();
    if metric.dim != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            got: metric.dim,
        });
    }
    if 2 * metric.cutoff >= grid.n() as i64 {
        return Err(Error::InvalidArgument(format!(
            "cutoff {} is not resolved on {} nodes",
            metric.cutoff,
            grid.n()
        )));
    }
    let unavailable = |e: Error| Error::GradientUnavailable(e.to_string());
    let rho = ctx.density().map_err(unavailable)?;
    let eta = ctx.gap().map_err(unavailable)?;
    let logj = ctx.log_jacobian().map_err(unavailable)?;
    let n = ctx.numerics();
    let w0 = logj.add_scalar(-rho.inner(logj));
    let w = geometric_series(w0, |u| ctx.apply_transpose_deflated(u), n.tol, eta, n.max_terms)
        .map_err(unavailable)?
        .sum;
    let v: Vec<GridField> = (0..dim)
        .map(|i| ctx.apply_transpose(&w.derivative(i)))
        .collect::<Result<_>>()?;

    let basis = metric.basis();
    let derivatives: Vec<(BasisField, f64)> = basis
        .par_iter()
        .map(|&b| {
            let e = b.to_field(dim);
            let tr = trace_term(ctx, &e)?;
            let comp = e.component_on_grid(b.component, grid);
            let series = rho.mul_dealiased(&comp).inner(&v[b.component]);
            Ok((b, tr + series))
        })
        .collect::<Result<_>>()
        .map_err(unavailable)?;

    let mut modes = Vec::new();
    let mut norm2 = 0.0;
    for &(b, d) in &derivatives {
        let wt = metric.weight(b.freq);
        norm2 += d * d / wt;
        let c = d / wt;
        let mode = match b.kind {
            BasisKind::Constant => Mode::new(b.component, b.freq, c, 0.0),
            BasisKind::Cos => Mode::new(b.component, b.freq, SQRT_2 * c, 0.0),
            BasisKind::Sin => Mode::new(b.component, b.freq, 0.0, SQRT_2 * c),
        };
        modes.push(mode);
    }
    let field = VecField::new(dim, modes)?;

    let mut rng = seeded_rng(seed);
    let picks: Vec<usize> = (0..samples)
        .map(|_| rng.random_range(0..basis.len()))
        .collect();
    let mut check: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for &i in &picks {
        let e = basis[i].to_field(dim);
        let direct = gateaux_primal(ctx, &e).map_err(unavailable)?.0;
        let paired = sobolev_inner(metric, &field, &e)?;
        check = check.max((paired - direct).abs());
        scale = scale.max(direct.abs());
    }
    if check > 10.0 * n.tol * (1.0 + scale) {
        return Err(Error::PairingCheckFailure(check));
    }
    Ok(GradientVector {
        field,
        hk_norm: norm2.sqrt(),
        l2_pairing_check: check,
        derivatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::ExpandingMap;
    use crate::transfer::Numerics;

    #[test]
    fn weights() {
        let m = SobolevMetric::new(1, 1, 4).unwrap();
        assert_eq!(m.weight([0, 0]), 1.0);
        assert!((m.weight([1, 0]) - (1.0 + 4.0 * PI * PI)).abs() < 1e-12);
        let m2 = SobolevMetric::new(2, 2, 4).unwrap();
        let w = m2.weight([1, 1]);
        let s = 4.0 * PI * PI;
        assert!((w - (1.0 + 2.0 * s + 3.0 * s * s)).abs() < 1e-9);
        assert!(m2.weight([2, 1]) > m2.weight([1, 1]));
    }

    #[test]
    fn inner_examples() {
        let m = SobolevMetric::new(2, 3, 4).unwrap();
        let u = VecField::new(2, [Mode::new(0, [0, 0], 1.0, 0.0), Mode::new(1, [0, 0], 1.0, 0.0)])
            .unwrap();
        assert!((sobolev_inner(&m, &u, &u).unwrap() - 2.0).abs() < 1e-15);

        let m1 = SobolevMetric::new(1, 1, 4).unwrap();
        let c = VecField::mode(1, 0, [1, 0], 1.0, 0.0).unwrap();
        let expect = 0.5 * (1.0 + 4.0 * PI * PI);
        assert!((sobolev_inner(&m1, &c, &c).unwrap() - expect).abs() < 1e-12);
        let grid = Grid::new(1, 64).unwrap();
        let f = c.component_on_grid(0, grid);
        let df = f.derivative(0);
        assert!((f.inner(&f) + df.inner(&df) - expect).abs() < 1e-12);

        let big = VecField::mode(1, 0, [5, 0], 1.0, 0.0).unwrap();
        assert!(matches!(
            sobolev_inner(&m1, &big, &c),
            Err(Error::CutoffExceeded { .. })
        ));
    }

    #[test]
    fn basis_is_orthonormal_in_l2() {
        let m = SobolevMetric::new(2, 0, 2).unwrap();
        let basis = m.basis();
        assert_eq!(basis.len(), 2 * (1 + 2 * 12));
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let ip = sobolev_inner(&m, &a.to_field(2), &b.to_field(2)).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn doubling_entropy_and_zero_gradient() {
        let map = ExpandingMap::linear(1, &[vec![2]]).unwrap();
        let ctx = TransferContext::new(map, Numerics::default_for(1).with_grid_size(64)).unwrap();
        assert!((entropy(&ctx).unwrap() - 2f64.ln()).abs() < 1e-12);
        let g = VecField::mode(1, 0, [2, 0], 0.3, -0.7).unwrap();
        let d = entropy_gateaux(&ctx, &g).unwrap();
        assert!(d.primal.abs() < 1e-10 && d.dual.abs() < 1e-10);
        let grad = gradient_vector(&ctx, &SobolevMetric::default_for(1, 8).unwrap()).unwrap();
        assert!(grad.hk_norm < 1e-10);
    }
}
