//! Collocation discretization of the transfer operator
//! `(𝓛φ)(x) = Σ_{f(y)=x} φ(y) / Jf(y)`, the SRB density, the empirical gap rate, and the
//! parameter derivatives of `𝓛` along `f + t g`.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{dot, eval_tensor, interp_weights, Grid, GridField, Point};
use crate::map::{ExpandingMap, VecField};

/// Discretization and series controls shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    /// Nodes per axis.
    pub grid_size: usize,
    /// Power-iteration and series tolerance.
    pub tol: f64,
    /// Power-iteration cap.
    pub max_iter: usize,
    /// Series length cap.
    pub max_terms: usize,
}

impl Numerics {
    pub fn default_for(dim: usize) -> Self {
        Self {
            grid_size: if dim == 1 { 256 } else { 64 },
            tol: 1e-12,
            max_iter: 10_000,
            max_terms: 400,
        }
    }

    pub fn with_grid_size(mut self, n: usize) -> Self {
        self.grid_size = n;
        self
    }
}

/// Gap-window bounds of [`gap_estimate`].
const GAP_WINDOW: (usize, usize) = (10, 30);
const GAP_SPREAD: f64 = 0.2;
const GAP_BLOCK: usize = 6;
/// Relative level below which iterates are treated as exhausted.
const COLLAPSE_FLOOR: f64 = 1e-12;

/// A map together with its branch table on a fixed grid.
#[derive(Debug)]
pub struct TransferContext {
    map: ExpandingMap,
    grid: Grid,
    numerics: Numerics,
    degree: usize,
    /// `branches[node * degree + b]`
    branches: Vec<Point>,
    inv_jac: Vec<f64>,
    /// Interpolation weights per branch point, `dim * n` entries each.
    weights: Vec<f64>,
    density: OnceLock<GridField>,
    gap: OnceLock<f64>,
    log_jac: OnceLock<GridField>,
}

impl Clone for TransferContext {
    fn clone(&self) -> Self {
        Self {
            map: self.map.clone(),
            grid: self.grid,
            numerics: self.numerics,
            degree: self.degree,
            branches: self.branches.clone(),
            inv_jac: self.inv_jac.clone(),
            weights: self.weights.clone(),
            density: self.density.clone(),
            gap: self.gap.clone(),
            log_jac: self.log_jac.clone(),
        }
    }
}

impl TransferContext {
    /// Builds the branch table by Newton iteration from the linear-part seeds.
    pub fn new(map: ExpandingMap, numerics: Numerics) -> Result<Self> {
        let grid = Grid::new(map.dim(), numerics.grid_size)?;
        let rows: Vec<Vec<Point>> = (0..grid.len())
            .into_par_iter()
            .map(|idx| map.inverse_branches(grid.node(idx)))
            .collect::<Result<_>>()?;
        Self::from_rows(map, grid, numerics, rows)
    }

    /// Shorthand for [`TransferContext::new`] with default numerics for the map's dimension.
    pub fn with_defaults(map: ExpandingMap) -> Result<Self> {
        let n = Numerics::default_for(map.dim());
        Self::new(map, n)
    }

    /// Context for a nearby map on the same grid, with branches Newton-refined from the
    /// branches of `self` so that branch labels carry over.
    pub fn perturbed(&self, map: ExpandingMap) -> Result<Self> {
        if map.dim() != self.map.dim() || map.degree() != self.degree {
            return Err(Error::InvalidMap(
                "perturbed map must share the dimension and degree".into(),
            ));
        }
        let d = self.degree;
        let rows: Vec<Vec<Point>> = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                map.inverse_branches_from(self.grid.node(idx), &self.branches[idx * d..(idx + 1) * d])
            })
            .collect::<Result<_>>()?;
        Self::from_rows(map, self.grid, self.numerics, rows)
    }

    fn from_rows(
        map: ExpandingMap,
        grid: Grid,
        numerics: Numerics,
        rows: Vec<Vec<Point>>,
    ) -> Result<Self> {
        let degree = map.degree();
        let n = grid.n();
        let dim = grid.dim();
        let mut branches = Vec::with_capacity(grid.len() * degree);
        for row in rows {
            debug_assert_eq!(row.len(), degree);
            branches.extend(row);
        }
        let inv_jac: Vec<f64> = branches
            .par_iter()
            .map(|&y| {
                let j = map.abs_det_jacobian(y);
                if j < 1e-12 {
                    Err(Error::DegenerateJacobian { point: y, det: j })
                } else {
                    Ok(1.0 / j)
                }
            })
            .collect::<Result<_>>()?;
        let mut weights = vec![0.0; branches.len() * dim * n];
        weights
            .par_chunks_mut(dim * n)
            .zip(branches.par_iter())
            .for_each(|(w, y)| {
                for axis in 0..dim {
                    interp_weights(n, y[axis], &mut w[axis * n..(axis + 1) * n]);
                }
            });
        Ok(Self {
            map,
            grid,
            numerics,
            degree,
            branches,
            inv_jac,
            weights,
            density: OnceLock::new(),
            gap: OnceLock::new(),
            log_jac: OnceLock::new(),
        })
    }

    pub fn map(&self) -> &ExpandingMap {
        &self.map
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn numerics(&self) -> Numerics {
        self.numerics
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Preimages of grid node `idx`.
    pub fn branches_at(&self, idx: usize) -> &[Point] {
        &self.branches[idx * self.degree..(idx + 1) * self.degree]
    }

    /// Largest `|F(y) − (x + q)|` over the branch table, measured on the torus.
    pub fn branch_residual(&self) -> f64 {
        let dim = self.grid.dim();
        (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                let x = self.grid.node(idx);
                self.branches_at(idx)
                    .iter()
                    .map(|&y| {
                        let fy = self.map.evaluate(y);
                        crate::map::torus_distance(fy, x, dim)
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    fn branch_weights(&self, slot: usize) -> (&[f64], &[f64]) {
        let n = self.grid.n();
        let stride = self.grid.dim() * n;
        let w = &self.weights[slot * stride..(slot + 1) * stride];
        if self.grid.dim() == 1 {
            (w, &[])
        } else {
            w.split_at(n)
        }
    }

    fn check_grid(&self, f: &GridField) -> Result<()> {
        if f.grid() != self.grid {
            return Err(Error::GridMismatch(format!(
                "field on {:?}, operator on {:?}",
                f.grid(),
                self.grid
            )));
        }
        Ok(())
    }

    /// `𝓛φ` at the grid nodes.
    pub fn apply(&self, phi: &GridField) -> Result<GridField> {
        self.check_grid(phi)?;
        let v = phi.values();
        let dim = self.grid.dim();
        let d = self.degree;
        let out: Vec<f64> = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                let mut s = 0.0;
                for b in 0..d {
                    let slot = idx * d + b;
                    let (wx, wy) = self.branch_weights(slot);
                    let val = if dim == 1 { dot(wx, v) } else { eval_tensor(wx, wy, v) };
                    s += val * self.inv_jac[slot];
                }
                s
            })
            .collect();
        GridField::new(self.grid, out)
    }

    /// `𝓛ᵀψ`, the transpose of the collocation matrix (adjoint for the grid-mean pairing).
    pub fn apply_transpose(&self, psi: &GridField) -> Result<GridField> {
        self.check_grid(psi)?;
        let n = self.grid.n();
        let len = self.grid.len();
        let dim = self.grid.dim();
        let d = self.degree;
        let psi = psi.values();
        let chunk = (len / rayon::current_num_threads().max(1)).clamp(16, 1024);
        let partials: Vec<Vec<f64>> = (0..len)
            .collect::<Vec<_>>()
            .par_chunks(chunk)
            .map(|nodes| {
                let mut acc = vec![0.0; len];
                for &idx in nodes {
                    for b in 0..d {
                        let slot = idx * d + b;
                        let c = psi[idx] * self.inv_jac[slot];
                        if c == 0.0 {
                            continue;
                        }
                        let (wx, wy) = self.branch_weights(slot);
                        if dim == 1 {
                            for (a, w) in wx.iter().enumerate() {
                                acc[a] += c * w;
                            }
                        } else {
                            for (a, &w0) in wx.iter().enumerate() {
                                let cw = c * w0;
                                let row = &mut acc[a * n..(a + 1) * n];
                                for (r, &w1) in row.iter_mut().zip(wy) {
                                    *r += cw * w1;
                                }
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; len];
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        GridField::new(self.grid, out)
    }

    /// Dense collocation matrix, column `i` being `𝓛` applied to the `i`-th nodal basis field.
    /// Meant for small grids.
    pub fn assemble(&self) -> DMatrix<f64> {
        let len = self.grid.len();
        let mut m = DMatrix::zeros(len, len);
        for i in 0..len {
            let mut e = GridField::zeros(self.grid);
            e.values_mut()[i] = 1.0;
            let col = self.apply(&e).expect("same grid");
            for (r, v) in col.values().iter().enumerate() {
                m[(r, i)] = *v;
            }
        }
        m
    }

    /// `log Jf` on the grid, cached.
    pub fn log_jacobian(&self) -> Result<&GridField> {
        if let Some(l) = self.log_jac.get() {
            return Ok(l);
        }
        let l = self.map.log_jacobian_field(self.grid)?;
        Ok(self.log_jac.get_or_init(|| l))
    }

    /// The SRB density, computed with the context's numerics on first use.
    pub fn density(&self) -> Result<&GridField> {
        if let Some(r) = self.density.get() {
            return Ok(r);
        }
        let r = compute_density(self, self.numerics.tol, self.numerics.max_iter)?.density;
        Ok(self.density.get_or_init(|| r))
    }

    /// The empirical gap rate, computed on first use.
    pub fn gap(&self) -> Result<f64> {
        if let Some(&g) = self.gap.get() {
            return Ok(g);
        }
        let g = compute_gap(self)?;
        Ok(*self.gap.get_or_init(|| g))
    }

    /// `u ↦ 𝓛u − ρ ∫u`, the operator `N` of the spectral split.
    pub fn apply_deflated(&self, u: &GridField) -> Result<GridField> {
        let rho = self.density()?;
        let mut out = self.apply(u)?;
        out.axpy(-u.mean(), rho);
        Ok(out)
    }

    /// `ψ ↦ 𝓛ᵀψ − ⟨ρ, ψ⟩`, the transpose of [`TransferContext::apply_deflated`].
    pub fn apply_transpose_deflated(&self, psi: &GridField) -> Result<GridField> {
        let rho = self.density()?;
        let out = self.apply_transpose(psi)?;
        Ok(out.add_scalar(-rho.inner(psi)))
    }
}

/// `𝓛φ`
pub fn transfer_apply(ctx: &TransferContext, phi: &GridField) -> Result<GridField> {
    ctx.apply(phi)
}

/// `|⟨𝓛φ, ψ⟩ − ⟨φ, ψ∘f⟩|` with grid-mean pairings and `ψ∘f` by trigonometric interpolation.
pub fn duality_residual(ctx: &TransferContext, phi: &GridField, psi: &GridField) -> Result<f64> {
    ctx.check_grid(psi)?;
    let lphi = ctx.apply(phi)?;
    let grid = ctx.grid();
    let map = ctx.map();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| psi.eval(map.evaluate(grid.node(idx))))
        .collect();
    let composed = GridField::new(grid, values)?;
    Ok((lphi.inner(psi) - phi.inner(&composed)).abs())
}

/// Outcome of [`srb_density_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub density: GridField,
    pub iterations: usize,
    /// `‖𝓛ρ − ρ‖_∞` at the last iteration.
    pub last_change: f64,
}

fn compute_density(ctx: &TransferContext, tol: f64, max_iter: usize) -> Result<DensityReport> {
    let mut rho = GridField::constant(ctx.grid(), 1.0);
    for it in 1..=max_iter {
        let mut next = ctx.apply(&rho)?;
        let change = next.sub(&rho).sup_norm();
        let mean = next.mean();
        next = next.scaled(1.0 / mean);
        rho = next;
        if change < tol {
            let min = rho.min();
            if min < 0.0 {
                return Err(Error::NegativeDensity(min));
            }
            return Ok(DensityReport {
                density: rho,
                iterations: it,
                last_change: change,
            });
        }
    }
    Err(Error::NoConvergence(max_iter))
}

/// Power iteration `ρ ← 𝓛ρ` from `ρ ≡ 1` until `‖𝓛ρ − ρ‖_∞ < tol`, renormalized to unit
/// integral. The result is cached in the context when none is stored yet.
pub fn srb_density(ctx: &TransferContext, tol: f64, max_iter: usize) -> Result<GridField> {
    Ok(srb_density_report(ctx, tol, max_iter)?.density)
}

/// [`srb_density`] with its iteration count.
pub fn srb_density_report(ctx: &TransferContext, tol: f64, max_iter: usize) -> Result<DensityReport> {
    let r = compute_density(ctx, tol, max_iter)?;
    let _ = ctx.density.set(r.density.clone());
    Ok(r)
}

fn first_sine_mode(grid: Grid) -> GridField {
    GridField::from_fn(grid, |p| (2.0 * std::f64::consts::PI * p[0]).sin())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn compute_gap(ctx: &TransferContext) -> Result<f64> {
    let rho = ctx.density()?;
    let mut u = first_sine_mode(ctx.grid());
    let floor = COLLAPSE_FLOOR * u.sup_norm();
    let mut norms = vec![u.sup_norm()];
    for _ in 0..=GAP_WINDOW.1 {
        let mut next = ctx.apply(&u)?;
        next.axpy(-u.mean(), rho);
        u = next;
        let nrm = u.sup_norm();
        norms.push(nrm);
        if nrm < floor {
            break;
        }
    }
    // ratios whose numerator is still above the collapse floor
    let ratios: Vec<f64> = norms
        .windows(2)
        .take_while(|w| w[1] >= floor)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return Ok(0.0);
    }
    let window: &[f64] = if ratios.len() > GAP_WINDOW.0 {
        &ratios[GAP_WINDOW.0..ratios.len().min(GAP_WINDOW.1 + 1)]
    } else {
        &ratios[ratios.len() / 2..]
    };
    // complex subdominant pairs make single-step ratios oscillate
    let logs: Vec<f64> = window.iter().map(|r| r.ln()).collect();
    let block = GAP_BLOCK.min(logs.len());
    let mut rates: Vec<f64> = logs
        .windows(block)
        .map(|w| (w.iter().sum::<f64>() / block as f64).exp())
        .collect();
    let spread = rates.iter().cloned().fold(f64::MIN, f64::max)
        - rates.iter().cloned().fold(f64::MAX, f64::min);
    if spread > GAP_SPREAD {
        return Err(Error::GapEstimateUnstable { spread });
    }
    Ok(median(&mut rates).min(1.0 - 1e-6))
}

/// Observed contraction rate of `N = 𝓛 − ρ∫` on the first sine mode.
///
/// The ratios `‖u_{n+1}‖_∞ / ‖u_n‖_∞` for `n ∈ [10, 30]` are averaged geometrically over
/// sliding blocks of 6 steps and the median block rate is returned. When the iterates
/// collapse below `1e-12` relative size earlier, the later half of the available ratios is
/// used, and immediate collapse gives 0.
pub fn gap_estimate(ctx: &TransferContext) -> Result<f64> {
    ctx.gap()
}

/// `−Σ_k ∂_k [𝓛(φ g_k)]`
pub fn transfer_t_derivative(
    ctx: &TransferContext,
    g: &VecField,
    phi: &GridField,
) -> Result<GridField> {
    ctx.check_grid(phi)?;
    check_field_dim(ctx, g)?;
    let grid = ctx.grid();
    let mut out = GridField::zeros(grid);
    for k in 0..grid.dim() {
        let gk = g.component_on_grid(k, grid);
        if gk.sup_norm() == 0.0 {
            continue;
        }
        let pushed = ctx.apply(&phi.mul_dealiased(&gk))?;
        out.axpy(-1.0, &pushed.derivative(k));
    }
    Ok(out)
}

/// `Σ_{k,l} ∂_k ∂_l [𝓛(φ g_i^k g_j^l)]`
pub fn transfer_t_second_derivative(
    ctx: &TransferContext,
    gi: &VecField,
    gj: &VecField,
    phi: &GridField,
) -> Result<GridField> {
    ctx.check_grid(phi)?;
    check_field_dim(ctx, gi)?;
    check_field_dim(ctx, gj)?;
    let grid = ctx.grid();
    let dim = grid.dim();
    let ci: Vec<GridField> = (0..dim).map(|k| gi.component_on_grid(k, grid)).collect();
    let cj: Vec<GridField> = (0..dim).map(|k| gj.component_on_grid(k, grid)).collect();
    let mut out = GridField::zeros(grid);
    for k in 0..dim {
        for l in 0..dim {
            // symmetric product so that swapping gi and gj is exact
            let a = ci[k].mul_dealiased(&cj[l]);
            let b = cj[k].mul_dealiased(&ci[l]);
            let sym = a.add(&b).scaled(0.5);
            if sym.sup_norm() == 0.0 {
                continue;
            }
            let pushed = ctx.apply(&phi.mul_dealiased(&sym))?;
            out.axpy(1.0, &pushed.derivative(k).derivative(l));
        }
    }
    Ok(out)
}

fn check_field_dim(ctx: &TransferContext, g: &VecField) -> Result<()> {
    if g.dim() != ctx.grid().dim() {
        return Err(Error::DimMismatch {
            expected: ctx.grid().dim(),
            got: g.dim(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sin_map(eps: f64) -> ExpandingMap {
        ExpandingMap::new(1, &[vec![2]], VecField::mode(1, 0, [1, 0], 0.0, eps).unwrap()).unwrap()
    }

    fn ctx1(map: ExpandingMap, n: usize) -> TransferContext {
        TransferContext::new(map, Numerics::default_for(1).with_grid_size(n)).unwrap()
    }

    #[test]
    fn doubling_map_examples() {
        let ctx = ctx1(ExpandingMap::linear(1, &[vec![2]]).unwrap(), 64);
        let one = GridField::constant(ctx.grid(), 1.0);
        assert!(ctx.apply(&one).unwrap().sub(&one).sup_norm() < 1e-14);
        let c = GridField::from_fn(ctx.grid(), |p| (2.0 * PI * p[0]).cos());
        assert!(ctx.apply(&c).unwrap().sup_norm() < 1e-14);
        assert!(ctx.branch_residual() < 1e-11);
    }

    #[test]
    fn transpose_matches_dense_matrix() {
        let ctx = ctx1(sin_map(0.1), 32);
        let m = ctx.assemble();
        let psi = GridField::from_fn(ctx.grid(), |p| (2.0 * PI * p[0]).sin() + 0.3);
        let t = ctx.apply_transpose(&psi).unwrap();
        let expect = m.transpose() * nalgebra::DVector::from_column_slice(psi.values());
        for (a, b) in t.values().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn transpose_2d_matches_pairing() {
        let g = VecField::new(
            2,
            [
                crate::map::Mode::new(0, [1, 1], 0.0, 0.05),
                crate::map::Mode::new(1, [0, 1], 0.04, 0.0),
            ],
        )
        .unwrap();
        let map = ExpandingMap::new(2, &[vec![2, 0], vec![0, 2]], g).unwrap();
        let ctx = TransferContext::new(map, Numerics::default_for(2).with_grid_size(16)).unwrap();
        let phi = GridField::from_fn(ctx.grid(), |p| 1.0 + (2.0 * PI * p[1]).cos());
        let psi = GridField::from_fn(ctx.grid(), |p| (2.0 * PI * (p[0] - p[1])).sin());
        let left = ctx.apply(&phi).unwrap().inner(&psi);
        let right = phi.inner(&ctx.apply_transpose(&psi).unwrap());
        assert!((left - right).abs() < 1e-14);
    }

    #[test]
    fn density_of_linear_maps_is_lebesgue() {
        let ctx = ctx1(ExpandingMap::linear(1, &[vec![2]]).unwrap(), 64);
        let rho = srb_density(&ctx, 1e-12, 100).unwrap();
        assert!(rho.add_scalar(-1.0).sup_norm() < 1e-12);
        let map = ExpandingMap::linear(2, &[vec![2, 0], vec![0, 2]]).unwrap();
        let ctx = TransferContext::new(map, Numerics::default_for(2).with_grid_size(16)).unwrap();
        assert!(ctx.density().unwrap().add_scalar(-1.0).sup_norm() < 1e-12);
    }

    #[test]
    fn density_fixed_point_and_mass() {
        let ctx = ctx1(sin_map(0.1), 128);
        let rho = ctx.density().unwrap();
        assert!((rho.mean() - 1.0).abs() < 1e-14);
        assert!(ctx.apply(rho).unwrap().sub(rho).sup_norm() < 2e-12);
        assert!(rho.min() > 0.0);
        assert!(rho.max() - rho.min() > 1e-3);
    }

    #[test]
    fn t_derivative_of_constant_field_vanishes() {
        let ctx = ctx1(ExpandingMap::linear(1, &[vec![2]]).unwrap(), 64);
        let one = GridField::constant(ctx.grid(), 1.0);
        let g = VecField::mode(1, 0, [0, 0], 0.7, 0.0).unwrap();
        assert!(transfer_t_derivative(&ctx, &g, &one).unwrap().sup_norm() < 1e-12);
        let zero = VecField::zero(1);
        assert_eq!(transfer_t_derivative(&ctx, &zero, &one).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn gap_of_linear_maps_collapses() {
        let ctx = ctx1(ExpandingMap::linear(1, &[vec![2]]).unwrap(), 64);
        assert!(gap_estimate(&ctx).unwrap() < 1e-6);
    }
}
