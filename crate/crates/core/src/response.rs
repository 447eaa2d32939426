//! Linear response of the SRB density, `ξ = −Σ_{n≥0} 𝓛ⁿ div 𝓛(gρ)`, and finite-difference
//! probes of first- and second-order regularity.

use rayon::prelude::*;

use crate::entropy::gateaux_primal;
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::map::{ExpandingMap, VecField};
use crate::transfer::{transfer_t_derivative, Numerics, TransferContext};

/// Safety factor on geometric tail estimates.
pub const TAIL_SAFETY: f64 = 2.0;
const ETA_CAP: f64 = 0.999;
const WINDOW: usize = 20;
const RECENT: usize = 6;

/// Truncated sum of a contracting iteration `u_{n+1} = step(u_n)`.
#[derive(Debug, Clone)]
pub(crate) struct Series {
    pub sum: GridField,
    pub terms: usize,
    pub tail: f64,
    pub eta_used: f64,
}

/// Tail bound `2 b η/(1 − η)` and the rate `η` used, from the norms accumulated so far. `η` is
/// the larger of `η̂` and the geometric step ratio over the last 6 terms; `b` is the largest of
/// the last 6 norms propagated forward at rate `η`.
pub(crate) fn tail_estimate(norms: &[f64], eta_hat: f64) -> (f64, f64) {
    let terms = norms.len();
    let last = norms[terms - 1];
    // sup norms of oscillating modes do not shrink monotonically
    let back = RECENT.min(terms - 1);
    let first_recent = norms[terms - 1 - back];
    let observed = if back > 0 && first_recent > 0.0 {
        (last / first_recent).powf(1.0 / back as f64)
    } else {
        0.0
    };
    let eta = eta_hat.max(observed).min(ETA_CAP);
    let base = (0..=back)
        .map(|k| norms[terms - 1 - k] * eta.powi(k as i32))
        .fold(0.0, f64::max);
    (TAIL_SAFETY * base * eta / (1.0 - eta), eta)
}

/// Accumulates `Σ u_n` until `‖u_n‖_∞ < tol (1 − η̂) / 2` and the tail bound is below `tol`, or
/// `max_terms`. Fails when some 20-term window contracts by less than `((1 + η̂) / 2)^20`.
pub(crate) fn geometric_series(
    first: GridField,
    step: impl Fn(&GridField) -> Result<GridField>,
    tol: f64,
    eta_hat: f64,
    max_terms: usize,
) -> Result<Series> {
    let stop = tol * (1.0 - eta_hat) / 2.0;
    let window_rate = ((1.0 + eta_hat) / 2.0).powi(WINDOW as i32);
    let mut sum = GridField::zeros(first.grid());
    let mut norms = Vec::new();
    let mut u = first;
    loop {
        let nrm = u.sup_norm();
        sum.axpy(1.0, &u);
        norms.push(nrm);
        let n = norms.len() - 1;
        if nrm == 0.0 || norms.len() >= max_terms {
            break;
        }
        if nrm < stop && tail_estimate(&norms, eta_hat).0 < tol {
            break;
        }
        if n >= WINDOW && nrm > norms[n - WINDOW] * window_rate {
            return Err(Error::SeriesNotConverging {
                terms: norms.len(),
                last: nrm,
            });
        }
        u = step(&u)?;
    }
    let terms = norms.len();
    let (tail, eta_used) = if norms[terms - 1] == 0.0 {
        (0.0, eta_hat)
    } else {
        tail_estimate(&norms, eta_hat)
    };
    let rounding = terms as f64 * f64::EPSILON * sum.sup_norm().max(norms[0]);
    Ok(Series {
        sum,
        terms,
        tail: tail + rounding,
        eta_used,
    })
}

/// The response `ξ = ∂_t ρ_t` at `t = 0` with its truncation data.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseResult {
    pub xi: GridField,
    pub terms_used: usize,
    /// Sup-norm bound on the dropped tail.
    pub tail_bound: f64,
    pub eta_used: f64,
}

/// `(∂_t 𝓛) ρ = −div 𝓛(gρ)` with its (round-off) mean removed along `ρ`.
pub(crate) fn response_source(ctx: &TransferContext, g: &VecField) -> Result<GridField> {
    let rho = ctx.density()?;
    let mut v = transfer_t_derivative(ctx, g, rho)?;
    v.axpy(-v.mean(), rho);
    Ok(v)
}

/// `ξ = Σ_n 𝓛ⁿ (∂_t 𝓛) ρ`, iterated with the deflated operator `N = 𝓛 − ρ∫`.
pub fn response_density(ctx: &TransferContext, g: &VecField, tol: f64) -> Result<ResponseResult> {
    let eta = ctx.gap()?;
    let v0 = response_source(ctx, g)?;
    let s = geometric_series(v0, |u| ctx.apply_deflated(u), tol, eta, ctx.numerics().max_terms)?;
    Ok(ResponseResult {
        xi: s.sum,
        terms_used: s.terms,
        tail_bound: s.tail,
        eta_used: s.eta_used,
    })
}

/// Finite-difference errors at `h` and `h/2` and the observed order `log₂(e_h / e_{h/2})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub h: f64,
    pub error_h: f64,
    pub error_half: f64,
    /// `None` when either error is zero.
    pub order: Option<f64>,
}

impl FdReport {
    pub(crate) fn new(h: f64, error_h: f64, error_half: f64) -> Self {
        let order = (error_h > 0.0 && error_half > 0.0).then(|| (error_h / error_half).log2());
        Self {
            h,
            error_h,
            error_half,
            order,
        }
    }
}

/// SRB density of `f + t g`, with branches continued from `ctx`.
pub fn perturbed_density(ctx: &TransferContext, t: f64, g: &VecField) -> Result<GridField> {
    if t == 0.0 {
        return ctx.density().cloned();
    }
    let c = ctx.perturbed(ctx.map().add_scaled(t, g)?)?;
    c.density().cloned()
}

fn central_density_difference(ctx: &TransferContext, g: &VecField, h: f64) -> Result<GridField> {
    let plus = perturbed_density(ctx, h, g)?;
    let minus = perturbed_density(ctx, -h, g)?;
    Ok(plus.sub(&minus).scaled(1.0 / (2.0 * h)))
}

/// `‖(ρ_h − ρ_{−h})/(2h) − ξ‖_∞` at `h` and `h/2`.
pub fn response_fd_check(ctx: &TransferContext, g: &VecField, h: f64) -> Result<FdReport> {
    let xi = response_density(ctx, g, ctx.numerics().tol)?.xi;
    let e1 = central_density_difference(ctx, g, h)?.sub(&xi).sup_norm();
    let e2 = central_density_difference(ctx, g, h / 2.0)?.sub(&xi).sup_norm();
    Ok(FdReport::new(h, e1, e2))
}

/// Outcome of [`second_order_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderProbe {
    /// `‖∂₁∂₂ρ‖_∞ / (‖g₁‖_{C³} ‖g₂‖_{C³})` from the mixed difference at `h`.
    pub ratio: f64,
    /// Same at `h/2`.
    pub ratio_half: f64,
    pub mixed_norm: f64,
}

fn mixed_density_difference(
    ctx: &TransferContext,
    g1: &VecField,
    g2: &VecField,
    h: f64,
) -> Result<GridField> {
    let signs = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let dens: Vec<GridField> = signs
        .par_iter()
        .map(|&(a, b)| {
            let dir = g1.scaled(a).add_scaled(b, g2)?;
            perturbed_density(ctx, h, &dir)
        })
        .collect::<Result<_>>()?;
    Ok(dens[0]
        .sub(&dens[1])
        .sub(&dens[2])
        .add(&dens[3])
        .scaled(1.0 / (4.0 * h * h)))
}

/// Mixed second difference of `ρ` over `f + t₁g₁ + t₂g₂`, normalized by the `C³` norms of the
/// directions, at `h` and `h/2`. Fails with `StepTooLarge` when the two disagree by more than 20%.
pub fn second_order_probe(
    ctx: &TransferContext,
    g1: &VecField,
    g2: &VecField,
    h: f64,
) -> Result<SecondOrderProbe> {
    let n = ctx.grid().n();
    let denom = g1.c_norm(3, n) * g2.c_norm(3, n);
    if denom == 0.0 {
        return Ok(SecondOrderProbe {
            ratio: 0.0,
            ratio_half: 0.0,
            mixed_norm: 0.0,
        });
    }
    let m1 = mixed_density_difference(ctx, g1, g2, h)?.sup_norm();
    let m2 = mixed_density_difference(ctx, g1, g2, h / 2.0)?.sup_norm();
    let (r1, r2) = (m1 / denom, m2 / denom);
    if (r1 - r2).abs() > 0.2 * r1.max(r2) {
        return Err(Error::StepTooLarge(h));
    }
    Ok(SecondOrderProbe {
        ratio: r1,
        ratio_half: r2,
        mixed_norm: m2,
    })
}

/// `max_g |DH(f₁)g − DH(f₂)g| / (‖f₁ − f₂‖_{C³} ‖g‖_{C³})`.
pub fn lipschitz_probe(
    f1: &ExpandingMap,
    f2: &ExpandingMap,
    g_samples: &[VecField],
    numerics: Numerics,
) -> Result<f64> {
    if f1.linear_part() != f2.linear_part() {
        return Err(Error::InvalidArgument(
            "maps must share the linear part".into(),
        ));
    }
    let n = numerics.grid_size;
    let diff = f1.perturbation().add_scaled(-1.0, f2.perturbation())?.c_norm(3, n);
    if diff == 0.0 {
        return Ok(0.0);
    }
    let c1 = TransferContext::new(f1.clone(), numerics)?;
    let c2 = c1.perturbed(f2.clone())?;
    let mut best: f64 = 0.0;
    for g in g_samples {
        let gn = g.c_norm(3, n);
        if gn == 0.0 {
            return Err(Error::InvalidArgument("zero direction".into()));
        }
        let d1 = gateaux_primal(&c1, g)?.0;
        let d2 = gateaux_primal(&c2, g)?.0;
        best = best.max((d1 - d2).abs() / (diff * gn));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling() -> TransferContext {
        let map = ExpandingMap::linear(1, &[vec![2]]).unwrap();
        TransferContext::new(map, Numerics::default_for(1).with_grid_size(64)).unwrap()
    }

    #[test]
    fn trivial_directions_give_zero_response() {
        let ctx = doubling();
        let c = VecField::mode(1, 0, [0, 0], 0.3, 0.0).unwrap();
        assert!(response_density(&ctx, &c, 1e-12).unwrap().xi.sup_norm() < 1e-12);
        let z = response_density(&ctx, &VecField::zero(1), 1e-12).unwrap();
        assert_eq!(z.xi.sup_norm(), 0.0);
        assert_eq!(z.terms_used, 1);
    }

    #[test]
    fn fd_report_order() {
        let r = FdReport::new(1e-3, 4e-6, 1e-6);
        assert!((r.order.unwrap() - 2.0).abs() < 1e-12);
        assert!(FdReport::new(1e-3, 0.0, 0.0).order.is_none());
    }
}
