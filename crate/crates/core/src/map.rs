//! Smooth expanding endomorphisms of the 1- and 2-torus.
//!
//! A map is stored through its lift `F(x) = A x + g(x)` where `A` is an integer matrix and
//! `g` is a trigonometric-polynomial vector field ([`VecField`]). The same type `VecField`
//! carries perturbation directions and gradient vectors.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField, Point};

/// One trigonometric term `cos * cos(2π m·x) + sin * sin(2π m·x)` of component `component`.
///
/// Components are zero-based here; the JSON schema uses one-based indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub component: usize,
    pub freq: [i64; 2],
    pub cos: f64,
    pub sin: f64,
}

impl Mode {
    pub fn new(component: usize, freq: [i64; 2], cos: f64, sin: f64) -> Self {
        Self {
            component,
            freq,
            cos,
            sin,
        }
    }

    fn phase(&self, p: Point) -> f64 {
        2.0 * PI * (self.freq[0] as f64 * p[0] + self.freq[1] as f64 * p[1])
    }

    /// `|m|_∞`
    pub fn order(&self) -> i64 {
        self.freq[0].abs().max(self.freq[1].abs())
    }

    /// Value of `∂^alpha` of this term at `p`.
    fn derivative_at(&self, alpha: [u32; 2], p: Point) -> f64 {
        let s = alpha[0] + alpha[1];
        let factor = (2.0 * PI * self.freq[0] as f64).powi(alpha[0] as i32)
            * (2.0 * PI * self.freq[1] as f64).powi(alpha[1] as i32);
        if factor == 0.0 && s > 0 {
            return 0.0;
        }
        let th = self.phase(p) + s as f64 * PI / 2.0;
        factor * (self.cos * th.cos() + self.sin * th.sin())
    }
}

/// Canonical representative of `±m`: first non-zero entry positive.
fn canonical(freq: [i64; 2]) -> ([i64; 2], f64) {
    let neg = freq[0] < 0 || (freq[0] == 0 && freq[1] < 0);
    if neg {
        ([-freq[0], -freq[1]], -1.0)
    } else {
        (freq, 1.0)
    }
}

/// Periodic trigonometric-polynomial vector field `g = (g_1, …, g_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VecField {
    dim: usize,
    modes: Vec<Mode>,
}

impl VecField {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            modes: Vec::new(),
        }
    }

    /// Builds a field from raw modes, folding `-m` onto `m` and merging duplicates.
    pub fn new(dim: usize, modes: impl IntoIterator<Item = Mode>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidMap(format!("dimension must be 1 or 2, got {dim}")));
        }
        let mut out = Self::zero(dim);
        for m in modes {
            if m.component >= dim {
                return Err(Error::InvalidMap(format!(
                    "mode component {} out of range for dimension {dim}",
                    m.component + 1
                )));
            }
            if dim == 1 && m.freq[1] != 0 {
                return Err(Error::InvalidMap(
                    "one-dimensional modes must have a single frequency".into(),
                ));
            }
            if !(m.cos.is_finite() && m.sin.is_finite()) {
                return Err(Error::InvalidMap("non-finite mode coefficient".into()));
            }
            out.accumulate(m.component, m.freq, m.cos, m.sin);
        }
        Ok(out)
    }

    /// Single-mode field.
    pub fn mode(dim: usize, component: usize, freq: [i64; 2], cos: f64, sin: f64) -> Result<Self> {
        Self::new(dim, [Mode::new(component, freq, cos, sin)])
    }

    fn accumulate(&mut self, component: usize, freq: [i64; 2], cos: f64, sin: f64) {
        let (freq, sign) = canonical(freq);
        let sin = if freq == [0, 0] { 0.0 } else { sin * sign };
        match self
            .modes
            .binary_search_by(|m| (m.component, m.freq).cmp(&(component, freq)))
        {
            Ok(i) => {
                self.modes[i].cos += cos;
                self.modes[i].sin += sin;
            }
            Err(i) => self.modes.insert(i, Mode::new(component, freq, cos, sin)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.cos == 0.0 && m.sin == 0.0)
    }

    /// Largest `|m|_∞` among modes with a non-zero coefficient.
    pub fn cutoff(&self) -> i64 {
        self.modes
            .iter()
            .filter(|m| m.cos != 0.0 || m.sin != 0.0)
            .map(Mode::order)
            .max()
            .unwrap_or(0)
    }

    /// `(cos, sin)` coefficient of the canonical mode `(component, freq)`.
    pub fn coefficient(&self, component: usize, freq: [i64; 2]) -> (f64, f64) {
        let (freq, sign) = canonical(freq);
        self.modes
            .iter()
            .find(|m| m.component == component && m.freq == freq)
            .map(|m| (m.cos, m.sin * sign))
            .unwrap_or((0.0, 0.0))
    }

    pub fn eval(&self, p: Point) -> [f64; 2] {
        let mut out = [0.0; 2];
        for m in &self.modes {
            let th = m.phase(p);
            out[m.component] += m.cos * th.cos() + m.sin * th.sin();
        }
        out
    }

    /// `Dg(p)[i][j] = ∂_j g_i(p)`
    pub fn jacobian(&self, p: Point) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for m in &self.modes {
            if m.freq == [0, 0] {
                continue;
            }
            let th = m.phase(p);
            let d = -m.cos * th.sin() + m.sin * th.cos();
            for j in 0..self.dim {
                out[m.component][j] += 2.0 * PI * m.freq[j] as f64 * d;
            }
        }
        out
    }

    /// `∂^alpha g_i` at `p`.
    pub fn partial(&self, component: usize, alpha: [u32; 2], p: Point) -> f64 {
        self.modes
            .iter()
            .filter(|m| m.component == component)
            .map(|m| m.derivative_at(alpha, p))
            .sum()
    }

    /// Component `i` sampled on `grid`.
    pub fn component_on_grid(&self, component: usize, grid: Grid) -> GridField {
        GridField::from_fn(grid, |p| {
            self.modes
                .iter()
                .filter(|m| m.component == component)
                .map(|m| {
                    let th = m.phase(p);
                    m.cos * th.cos() + m.sin * th.sin()
                })
                .sum()
        })
    }

    pub fn scaled(&self, s: f64) -> VecField {
        VecField {
            dim: self.dim,
            modes: self
                .modes
                .iter()
                .map(|m| Mode::new(m.component, m.freq, m.cos * s, m.sin * s))
                .collect(),
        }
    }

    /// `self + t * other`, mode sets united.
    pub fn add_scaled(&self, t: f64, other: &VecField) -> Result<VecField> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = self.clone();
        for m in &other.modes {
            out.accumulate(m.component, m.freq, t * m.cos, t * m.sin);
        }
        Ok(out)
    }

    /// `max_{i, |α| ≤ order, x ∈ grid} |∂^α g_i(x)|`, the grid surrogate of the `C^order` norm.
    pub fn c_norm(&self, order: u32, grid_size: usize) -> f64 {
        let grid = match Grid::new(self.dim, grid_size) {
            Ok(g) => g,
            Err(_) => return f64::NAN,
        };
        let alphas: Vec<[u32; 2]> = multi_indices(self.dim, order);
        let mut best: f64 = 0.0;
        for idx in 0..grid.len() {
            let p = grid.node(idx);
            for i in 0..self.dim {
                for &a in &alphas {
                    best = best.max(self.partial(i, a, p).abs());
                }
            }
        }
        best
    }
}

/// All multi-indices `α` with `|α| ≤ order` in `dim` dimensions.
pub fn multi_indices(dim: usize, order: u32) -> Vec<[u32; 2]> {
    let mut out = Vec::new();
    for a0 in 0..=order {
        if dim == 1 {
            out.push([a0, 0]);
        } else {
            for a1 in 0..=(order - a0) {
                out.push([a0, a1]);
            }
        }
    }
    out
}

type Mat2 = [[f64; 2]; 2];

fn det2(m: &Mat2, dim: usize) -> f64 {
    if dim == 1 {
        m[0][0]
    } else {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

/// Smallest singular value of a 1×1 or 2×2 matrix.
pub fn min_singular_value(m: &Mat2, dim: usize) -> f64 {
    if dim == 1 {
        return m[0][0].abs();
    }
    let fro = m[0][0].powi(2) + m[0][1].powi(2) + m[1][0].powi(2) + m[1][1].powi(2);
    let det = det2(m, 2);
    let disc = (fro * fro - 4.0 * det * det).max(0.0).sqrt();
    let smax = ((fro + disc) / 2.0).sqrt();
    if smax == 0.0 {
        0.0
    } else {
        det.abs() / smax
    }
}

/// Periodic distance on the torus.
pub fn torus_distance(a: Point, b: Point, dim: usize) -> f64 {
    (0..dim)
        .map(|i| {
            let d = (a[i] - b[i]).rem_euclid(1.0);
            d.min(1.0 - d)
        })
        .fold(0.0, f64::max)
}

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_TOL: f64 = 1e-14;

/// Expanding endomorphism `x ↦ A x + g(x) mod 1` of `T^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandingMap {
    dim: usize,
    linear: [[i64; 2]; 2],
    perturbation: VecField,
}

impl ExpandingMap {
    /// Checks that `A` is square of size `dim`, invertible, and has all eigenvalues outside the unit circle.
    pub fn new(dim: usize, linear: &[Vec<i64>], perturbation: VecField) -> Result<Self> {
        if linear.len() != dim || linear.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidMap(format!("A must be {dim}x{dim}")));
        }
        if perturbation.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: perturbation.dim(),
            });
        }
        let mut a = [[0i64; 2]; 2];
        for (i, row) in linear.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a[i][j] = v;
            }
        }
        let map = Self {
            dim,
            linear: a,
            perturbation,
        };
        if map.degree() == 0 {
            return Err(Error::InvalidMap("A is singular".into()));
        }
        let moduli = map.linear_eigen_moduli();
        if moduli.iter().any(|&m| m <= 1.0) {
            return Err(Error::InvalidMap(format!(
                "A has an eigenvalue with modulus <= 1 ({moduli:?})"
            )));
        }
        Ok(map)
    }

    /// The linear map `x ↦ A x` with no perturbation.
    pub fn linear(dim: usize, linear: &[Vec<i64>]) -> Result<Self> {
        Self::new(dim, linear, VecField::zero(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn linear_part(&self) -> Vec<Vec<i64>> {
        (0..self.dim)
            .map(|i| self.linear[i][..self.dim].to_vec())
            .collect()
    }

    pub fn perturbation(&self) -> &VecField {
        &self.perturbation
    }

    fn det_a(&self) -> i64 {
        if self.dim == 1 {
            self.linear[0][0]
        } else {
            self.linear[0][0] * self.linear[1][1] - self.linear[0][1] * self.linear[1][0]
        }
    }

    /// Topological degree `|det A|`, i.e. the number of inverse branches.
    pub fn degree(&self) -> usize {
        self.det_a().unsigned_abs() as usize
    }

    /// `log |det A|`, the topological entropy of every map homotopic to `A`.
    pub fn topological_entropy(&self) -> f64 {
        (self.degree() as f64).ln()
    }

    fn linear_eigen_moduli(&self) -> Vec<f64> {
        if self.dim == 1 {
            return vec![(self.linear[0][0] as f64).abs()];
        }
        let a = self.linear.map(|r| r.map(|v| v as f64));
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let disc = tr * tr - 4.0 * det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            vec![((tr + s) / 2.0).abs(), ((tr - s) / 2.0).abs()]
        } else {
            vec![det.sqrt(); 2]
        }
    }

    /// Unreduced lift `A x + g(x)`.
    pub fn lift(&self, p: Point) -> Point {
        let g = self.perturbation.eval(p);
        let mut out = [0.0; 2];
        for i in 0..self.dim {
            let mut s = g[i];
            for j in 0..self.dim {
                s += self.linear[i][j] as f64 * p[j];
            }
            out[i] = s;
        }
        out
    }

    /// `f(x) = (A x + g(x)) mod 1`
    pub fn evaluate(&self, p: Point) -> Point {
        let mut y = self.lift(p);
        for v in y.iter_mut().take(self.dim) {
            *v = v.rem_euclid(1.0);
            if *v >= 1.0 {
                *v = 0.0;
            }
        }
        y
    }

    /// `Df(x) = A + Dg(x)`
    pub fn jacobian(&self, p: Point) -> Mat2 {
        let mut d = self.perturbation.jacobian(p);
        for (i, row) in d.iter_mut().enumerate().take(self.dim) {
            for (j, v) in row.iter_mut().enumerate().take(self.dim) {
                *v += self.linear[i][j] as f64;
            }
        }
        d
    }

    /// `|det Df(x)|`
    pub fn abs_det_jacobian(&self, p: Point) -> f64 {
        det2(&self.jacobian(p), self.dim).abs()
    }

    /// `log |det Df(x)|`
    pub fn log_jacobian(&self, p: Point) -> Result<f64> {
        let j = self.abs_det_jacobian(p);
        if j < 1e-12 {
            return Err(Error::DegenerateJacobian { point: p, det: j });
        }
        Ok(j.ln())
    }

    /// `log Jf` sampled on a grid.
    pub fn log_jacobian_field(&self, grid: Grid) -> Result<GridField> {
        let mut values = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            values.push(self.log_jacobian(grid.node(idx))?);
        }
        GridField::new(grid, values)
    }

    /// Minimum over the uniform `grid_size^dim` grid of the smallest singular value of `Df`,
    /// with the node where it is attained.
    pub fn expansion(&self, grid_size: usize) -> (f64, Point) {
        let grid = Grid::new(self.dim, grid_size.max(4)).expect("valid grid");
        let mut best = (f64::INFINITY, [0.0; 2]);
        for idx in 0..grid.len() {
            let p = grid.node(idx);
            let s = min_singular_value(&self.jacobian(p), self.dim);
            if s < best.0 {
                best = (s, p);
            }
        }
        best
    }

    /// Returns `μ_min` if it is at least `1 + margin`, otherwise [`Error::NotExpanding`].
    pub fn certify_expanding(&self, grid_size: usize, margin: f64) -> Result<f64> {
        let (mu, p) = self.expansion(grid_size);
        if mu >= 1.0 + margin {
            Ok(mu)
        } else {
            Err(Error::NotExpanding {
                point: p,
                value: mu,
                required: 1.0 + margin,
            })
        }
    }

    /// Representatives of `Z^dim / A Z^dim`: the integer points of the half-open
    /// parallelepiped `A [0,1)^dim`.
    pub fn coset_representatives(&self) -> Vec<[i64; 2]> {
        let det = self.det_a();
        if self.dim == 1 {
            return (0..det.abs()).map(|q| [q, 0]).collect();
        }
        let a = self.linear;
        let corners = [[0, 0], [a[0][0], a[1][0]], [a[0][1], a[1][1]], [
            a[0][0] + a[0][1],
            a[1][0] + a[1][1],
        ]];
        let lo0 = corners.iter().map(|c| c[0]).min().unwrap();
        let hi0 = corners.iter().map(|c| c[0]).max().unwrap();
        let lo1 = corners.iter().map(|c| c[1]).min().unwrap();
        let hi1 = corners.iter().map(|c| c[1]).max().unwrap();
        // adj(A) q / det ∈ [0,1)^2
        let inside = |v: i64| if det > 0 { (0..det).contains(&v) } else { v <= 0 && v > det };
        let mut reps = Vec::with_capacity(det.unsigned_abs() as usize);
        for q0 in lo0..=hi0 {
            for q1 in lo1..=hi1 {
                let u0 = a[1][1] * q0 - a[0][1] * q1;
                let u1 = -a[1][0] * q0 + a[0][0] * q1;
                if inside(u0) && inside(u1) {
                    reps.push([q0, q1]);
                }
            }
        }
        debug_assert_eq!(reps.len(), det.unsigned_abs() as usize);
        reps
    }

    /// Seeds `A^{-1}(x + q)` for the linear part.
    pub fn branch_seeds(&self, x: Point) -> Vec<Point> {
        let det = self.det_a() as f64;
        let a = self.linear.map(|r| r.map(|v| v as f64));
        self.coset_representatives()
            .into_iter()
            .map(|q| {
                let t = [x[0] + q[0] as f64, x[1] + q[1] as f64];
                if self.dim == 1 {
                    [t[0] / det, 0.0]
                } else {
                    [
                        (a[1][1] * t[0] - a[0][1] * t[1]) / det,
                        (-a[1][0] * t[0] + a[0][0] * t[1]) / det,
                    ]
                }
            })
            .collect()
    }

    /// All `|det A|` preimages of `x`, reduced to `[0,1)^dim`.
    ///
    /// Branch `q` solves `A y + g(y) = x + q` by Newton iteration from `A^{-1}(x + q)`.
    pub fn inverse_branches(&self, x: Point) -> Result<Vec<Point>> {
        let seeds = self.branch_seeds(x);
        let targets: Vec<Point> = self
            .coset_representatives()
            .into_iter()
            .map(|q| [x[0] + q[0] as f64, x[1] + q[1] as f64])
            .collect();
        self.solve_branches(x, seeds.into_iter().zip(targets))
    }

    /// Newton-refines preimages of `x` from caller-provided seeds (one per branch), e.g. the
    /// branches of a nearby map. The lift target of each seed is the integer translate of `x`
    /// closest to `F(seed)`.
    pub fn inverse_branches_from(&self, x: Point, seeds: &[Point]) -> Result<Vec<Point>> {
        let pairs: Vec<(Point, Point)> = seeds
            .iter()
            .map(|&seed| {
                let fs = self.lift(seed);
                let mut target = [0.0; 2];
                for i in 0..self.dim {
                    target[i] = x[i] + (fs[i] - x[i]).round();
                }
                (seed, target)
            })
            .collect();
        self.solve_branches(x, pairs)
    }

    fn solve_branches(
        &self,
        x: Point,
        pairs: impl IntoIterator<Item = (Point, Point)>,
    ) -> Result<Vec<Point>> {
        let mut out = Vec::with_capacity(self.degree());
        for (seed, target) in pairs {
            out.push(self.newton(seed, target, x)?);
        }
        for i in 0..out.len() {
            for j in 0..i {
                if torus_distance(out[i], out[j], self.dim) < 1e-9 {
                    return Err(Error::BranchNewtonFailure {
                        point: x,
                        reason: format!("branches {j} and {i} collide"),
                    });
                }
            }
        }
        Ok(out)
    }

    fn newton(&self, seed: Point, target: Point, x: Point) -> Result<Point> {
        let dim = self.dim;
        let residual = |y: Point| {
            let f = self.lift(y);
            let mut r = [0.0; 2];
            for i in 0..dim {
                r[i] = f[i] - target[i];
            }
            r
        };
        let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
        let mut y = seed;
        let mut r = residual(y);
        let mut converged = norm(r) < NEWTON_TOL;
        let mut iter = 0;
        while !converged {
            iter += 1;
            if iter > NEWTON_MAX_ITER {
                return Err(Error::BranchNewtonFailure {
                    point: x,
                    reason: format!("no convergence in {NEWTON_MAX_ITER} iterations"),
                });
            }
            let j = self.jacobian(y);
            let det = det2(&j, dim);
            if det.abs() < 1e-14 {
                return Err(Error::BranchNewtonFailure {
                    point: x,
                    reason: "singular Jacobian".into(),
                });
            }
            let step = if dim == 1 {
                [r[0] / det, 0.0]
            } else {
                [
                    (j[1][1] * r[0] - j[0][1] * r[1]) / det,
                    (-j[1][0] * r[0] + j[0][0] * r[1]) / det,
                ]
            };
            // damped update: halve until the residual decreases
            let r0 = norm(r);
            let mut lambda = 1.0;
            loop {
                let cand = [y[0] - lambda * step[0], y[1] - lambda * step[1]];
                let rc = residual(cand);
                if norm(rc) < r0 || lambda < 1e-6 || r0 < 1e-13 {
                    y = cand;
                    r = rc;
                    break;
                }
                lambda *= 0.5;
            }
            let n = norm(r);
            converged = n < NEWTON_TOL || (n < 1e-13 && norm(step) < 1e-15);
        }
        for v in y.iter_mut().take(dim) {
            *v = v.rem_euclid(1.0);
            if *v >= 1.0 {
                *v = 0.0;
            }
        }
        Ok(y)
    }

    /// `f + t g` with the same linear part. Not re-certified.
    pub fn add_scaled(&self, t: f64, g: &VecField) -> Result<ExpandingMap> {
        if g.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: g.dim(),
            });
        }
        Ok(ExpandingMap {
            dim: self.dim,
            linear: self.linear,
            perturbation: self.perturbation.add_scaled(t, g)?,
        })
    }

    /// Same linear part, perturbation replaced.
    pub fn with_perturbation(&self, perturbation: VecField) -> Result<ExpandingMap> {
        ExpandingMap::new(self.dim, &self.linear_part(), perturbation)
    }
}
