//! Periodic collocation grids on the unit torus and scalar fields sampled on them.
//!
//! A [`GridField`] stores the values of a 1-periodic function at the uniform nodes
//! `x_j = j / N` (tensor product in two dimensions). Everything spectral goes through
//! the discrete Fourier coefficients: differentiation, resampling, de-aliased products
//! and trigonometric interpolation at off-grid points.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A point of `[0,1)^dim`. One-dimensional code uses only the first slot.
pub type Point = [f64; 2];

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Uniform grid with `n` nodes per axis in `dim` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidArgument(format!(
                "grid dimension must be 1 or 2, got {dim}"
            )));
        }
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "grid size must be even and at least 4, got {n}"
            )));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates of the node with flat index `idx` (row-major, first axis slowest).
    pub fn node(&self, idx: usize) -> Point {
        let h = 1.0 / self.n as f64;
        match self.dim {
            1 => [idx as f64 * h, 0.0],
            _ => [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h],
        }
    }

    /// Per-axis integer index of a flat index.
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        match (self.dim, axis) {
            (1, _) => idx,
            (_, 0) => idx / self.n,
            _ => idx % self.n,
        }
    }

    /// Same dimension, `n * factor` nodes per axis.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid {
            dim: self.dim,
            n: self.n * factor,
        }
    }

    pub fn with_n(&self, n: usize) -> Result<Grid> {
        Grid::new(self.dim, n)
    }
}

/// Signed wavenumber of FFT slot `a` on an `n`-point axis. The Nyquist slot maps to `+n/2`.
pub fn wavenumber(a: usize, n: usize) -> i64 {
    if a <= n / 2 {
        a as i64
    } else {
        a as i64 - n as i64
    }
}

/// Trigonometric interpolation weights for evaluating at `x` from an `n`-point periodic grid.
///
/// Uses the even-`n` periodic sinc kernel `sin(pi n d) cot(pi d) / n`, with the sine factor
/// evaluated relative to the nearest node so the weights stay accurate close to nodes.
pub fn interp_weights(n: usize, x: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), n);
    let nf = n as f64;
    let x = x.rem_euclid(1.0);
    let near = ((x * nf).round() as usize) % n;
    let mut d_near = x - near as f64 / nf;
    if d_near > 0.5 {
        d_near -= 1.0;
    }
    let s_near = (PI * nf * d_near).sin();
    if s_near == 0.0 {
        out.fill(0.0);
        out[near] = 1.0;
        return;
    }
    for (a, w) in out.iter_mut().enumerate() {
        let mut d = x - a as f64 / nf;
        if d > 0.5 {
            d -= 1.0;
        } else if d <= -0.5 {
            d += 1.0;
        }
        let t = (PI * d).tan();
        let parity = if (a + n - near) % 2 == 0 { 1.0 } else { -1.0 };
        *w = if t.abs() < 1e-300 {
            1.0
        } else {
            parity * s_near / (nf * t)
        };
    }
}

fn fft_lines(data: &mut [Complex64], n: usize, inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let fft = if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        };
        fft.process(data);
    });
}

/// In-place unnormalised FFT over all axes of a row-major `n^dim` array.
pub(crate) fn fft_nd(data: &mut [Complex64], dim: usize, n: usize, inverse: bool) {
    if dim == 1 {
        fft_lines(data, n, inverse);
        return;
    }
    // axis 1 is contiguous
    fft_lines(data, n, inverse);
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = data[r * n + c];
        }
        fft_lines(&mut col, n, inverse);
        for r in 0..n {
            data[r * n + c] = col[r];
        }
    }
}

/// Spectral resampling of one axis line of Fourier coefficients from `n` to `m` slots.
fn resample_line(src: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = src.len();
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    if m >= n {
        for (a, &c) in src.iter().enumerate() {
            if a == n / 2 && m > n {
                out[n / 2] += c * 0.5;
                out[m - n / 2] += c * 0.5;
            } else {
                let k = wavenumber(a, n);
                out[k.rem_euclid(m as i64) as usize] += c;
            }
        }
    } else {
        let half = (m / 2) as i64;
        for (a, &c) in src.iter().enumerate() {
            if a == n / 2 {
                continue;
            }
            let k = wavenumber(a, n);
            if k.abs() < half {
                out[k.rem_euclid(m as i64) as usize] += c;
            } else if k.abs() == half {
                out[m / 2] += c;
            }
        }
    }
    out
}

/// Real scalar field sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Integral over the torus (the grid mean; spectrally accurate for periodic data).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// L2 pairing `∫ u v dx` computed as a grid mean.
    pub fn inner(&self, other: &GridField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        s / self.values.len() as f64
    }

    pub fn scaled(&self, s: f64) -> GridField {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &GridField) {
        debug_assert_eq!(self.grid, other.grid);
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &GridField) -> GridField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    /// Pointwise product on the collocation grid (no de-aliasing).
    pub fn mul(&self, other: &GridField) -> GridField {
        debug_assert_eq!(self.grid, other.grid);
        GridField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn add_scalar(&self, c: f64) -> GridField {
        self.map(|v| v + c)
    }

    /// Normalised discrete Fourier coefficients, same layout as the values.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft_nd(&mut data, self.grid.dim, self.grid.n, false);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    /// Inverse of [`GridField::spectrum`]; imaginary residue is discarded.
    pub fn from_spectrum(grid: Grid, spec: &[Complex64]) -> Result<GridField> {
        if spec.len() != grid.len() {
            return Err(Error::GridMismatch("spectrum length".into()));
        }
        let mut data = spec.to_vec();
        fft_nd(&mut data, grid.dim, grid.n, true);
        Ok(GridField {
            grid,
            values: data.iter().map(|c| c.re).collect(),
        })
    }

    /// Spectral partial derivative along `axis`; the Nyquist mode is dropped.
    pub fn derivative(&self, axis: usize) -> GridField {
        let n = self.grid.n;
        let mut spec = self.spectrum();
        for (idx, c) in spec.iter_mut().enumerate() {
            let a = self.grid.axis_index(idx, axis);
            if a == n / 2 {
                *c = Complex64::new(0.0, 0.0);
            } else {
                let k = wavenumber(a, n) as f64;
                *c *= Complex64::new(0.0, 2.0 * PI * k);
            }
        }
        GridField::from_spectrum(self.grid, &spec).expect("same grid")
    }

    /// Spectral resampling to `m` nodes per axis (zero padding or truncation).
    pub fn resample(&self, m: usize) -> Result<GridField> {
        let target = self.grid.with_n(m)?;
        if m == self.grid.n {
            return Ok(self.clone());
        }
        let n = self.grid.n;
        let spec = self.spectrum();
        let out = match self.grid.dim {
            1 => resample_line(&spec, m),
            _ => {
                // rows (axis 1) first, then columns (axis 0)
                let mut rows = vec![Complex64::new(0.0, 0.0); n * m];
                for r in 0..n {
                    let line = resample_line(&spec[r * n..(r + 1) * n], m);
                    rows[r * m..(r + 1) * m].copy_from_slice(&line);
                }
                let mut out = vec![Complex64::new(0.0, 0.0); m * m];
                let mut col = vec![Complex64::new(0.0, 0.0); n];
                for c in 0..m {
                    for r in 0..n {
                        col[r] = rows[r * m + c];
                    }
                    let line = resample_line(&col, m);
                    for r in 0..m {
                        out[r * m + c] = line[r];
                    }
                }
                out
            }
        };
        GridField::from_spectrum(target, &out)
    }

    /// Product formed on a twice finer grid and truncated back (2/3-rule style de-aliasing).
    pub fn mul_dealiased(&self, other: &GridField) -> GridField {
        debug_assert_eq!(self.grid, other.grid);
        let n = self.grid.n;
        let a = self.resample(2 * n).expect("valid grid");
        let b = other.resample(2 * n).expect("valid grid");
        a.mul(&b).resample(n).expect("valid grid")
    }

    /// Trigonometric interpolant evaluated at an arbitrary point.
    pub fn eval(&self, p: Point) -> f64 {
        let n = self.grid.n;
        let mut wx = vec![0.0; n];
        interp_weights(n, p[0], &mut wx);
        match self.grid.dim {
            1 => dot(&wx, &self.values),
            _ => {
                let mut wy = vec![0.0; n];
                interp_weights(n, p[1], &mut wy);
                eval_tensor(&wx, &wy, &self.values)
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_a Σ_b wx[a] wy[b] v[a n + b]`
pub(crate) fn eval_tensor(wx: &[f64], wy: &[f64], v: &[f64]) -> f64 {
    let n = wx.len();
    let mut acc = 0.0;
    for (a, &w) in wx.iter().enumerate() {
        if w != 0.0 {
            acc += w * dot(wy, &v[a * n..(a + 1) * n]);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trig(p: Point) -> f64 {
        1.0 + 0.3 * (2.0 * PI * p[0]).cos() - 0.2 * (6.0 * PI * p[0]).sin()
    }

    #[test]
    fn interpolation_reproduces_trig_polynomials() {
        let g = Grid::new(1, 32).unwrap();
        let f = GridField::from_fn(g, trig);
        for &x in &[0.0, 0.123, 0.5, 0.9999, 1.0 / 32.0 + 1e-15, 0.77] {
            assert!((f.eval([x, 0.0]) - trig([x, 0.0])).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn interpolation_2d() {
        let g = Grid::new(2, 16).unwrap();
        let h = |p: Point| (2.0 * PI * (p[0] + 2.0 * p[1])).cos() + 0.5 * (2.0 * PI * p[1]).sin();
        let f = GridField::from_fn(g, h);
        for &p in &[[0.1, 0.7], [0.33, 0.05], [0.5, 0.5]] {
            assert!((f.eval(p) - h(p)).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_cosine() {
        let g = Grid::new(1, 64).unwrap();
        let f = GridField::from_fn(g, |p| (4.0 * PI * p[0]).cos());
        let df = f.derivative(0);
        let exact = GridField::from_fn(g, |p| -4.0 * PI * (4.0 * PI * p[0]).sin());
        assert!(df.sub(&exact).sup_norm() < 1e-11);
        assert!(df.mean().abs() < 1e-14);
    }

    #[test]
    fn derivative_2d_axes() {
        let g = Grid::new(2, 16).unwrap();
        let f = GridField::from_fn(g, |p| (2.0 * PI * (p[0] + 3.0 * p[1])).sin());
        let fy = f.derivative(1);
        let exact = GridField::from_fn(g, |p| 6.0 * PI * (2.0 * PI * (p[0] + 3.0 * p[1])).cos());
        assert!(fy.sub(&exact).sup_norm() < 1e-11);
    }

    #[test]
    fn resample_roundtrip_and_dealiased_product() {
        let g = Grid::new(1, 16).unwrap();
        let f = GridField::from_fn(g, trig);
        let fine = f.resample(64).unwrap();
        let exact = GridField::from_fn(fine.grid(), trig);
        assert!(fine.sub(&exact).sup_norm() < 1e-13);
        assert!(fine.resample(16).unwrap().sub(&f).sup_norm() < 1e-13);

        // cos(6πx)·cos(6πx) has a mode at frequency 6 which aliases on 8 nodes.
        let g8 = Grid::new(1, 8).unwrap();
        let c = GridField::from_fn(g8, |p| (6.0 * PI * p[0]).cos());
        let prod = c.mul_dealiased(&c);
        assert!((prod.mean() - 0.5).abs() < 1e-14);
    }
}
