//! Entropy gradient flow `df/dt = ∇H_f` in the cutoff-`M` trigonometric family, integrated
//! by explicit Euler steps with Armijo backtracking.

use crate::entropy::{entropy, gradient_vector, GradientVector, SobolevMetric};
use crate::error::Result;
use crate::map::ExpandingMap;
use crate::transfer::{Numerics, TransferContext};

/// Step-size schedule and stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub grad_tol: f64,
    pub entropy_tol: f64,
    pub max_steps: usize,
    /// Required expansion margin `μ_min ≥ 1 + margin`.
    pub margin: f64,
    /// Slack in the ascent test.
    pub armijo_tol: f64,
    pub numerics: Numerics,
}

impl FlowConfig {
    pub fn default_for(dim: usize) -> Self {
        Self {
            dt0: 1.0,
            dt_min: 1e-12,
            dt_max: 1e12,
            grad_tol: 1e-10,
            entropy_tol: 1e-6,
            max_steps: 1000,
            margin: 0.05,
            armijo_tol: 1e-13,
            numerics: Numerics::default_for(dim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    MaxSteps,
    /// The step size fell below `dt_min` because candidates lost expansion.
    ExpansionLost,
    /// The step size fell below `dt_min` because the ascent test kept failing.
    Stalled,
}

impl FlowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowStatus::Converged => "Converged",
            FlowStatus::MaxSteps => "MaxSteps",
            FlowStatus::ExpansionLost => "ExpansionLost",
            FlowStatus::Stalled => "Stalled",
        }
    }
}

/// One attempted step. Rejected rows repeat the state they started from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRow {
    pub t: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub mu_min: f64,
    pub eta_hat: f64,
    pub dt: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub rows: Vec<FlowRow>,
    pub status: FlowStatus,
    pub final_map: ExpandingMap,
    pub cutoff: i64,
    pub k: u32,
}

impl FlowTrace {
    pub fn accepted_steps(&self) -> usize {
        self.rows.iter().skip(1).filter(|r| r.accepted).count()
    }

    pub fn final_entropy(&self) -> f64 {
        self.rows.last().map(|r| r.entropy).unwrap_or(f64::NAN)
    }
}

/// Why a candidate was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Expansion,
    Ascent,
}

struct State {
    map: ExpandingMap,
    entropy: f64,
    grad: GradientVector,
    mu: f64,
    eta: f64,
}

impl State {
    fn new(ctx: TransferContext, metric: &SobolevMetric) -> Result<Self> {
        let grad = gradient_vector(&ctx, metric)?;
        let entropy = entropy(&ctx)?;
        let eta = ctx.gap()?;
        let mu = ctx.map().expansion(ctx.grid().n()).0;
        Ok(Self {
            map: ctx.map().clone(),
            entropy,
            grad,
            mu,
            eta,
        })
    }

    fn row(&self, t: f64, dt: f64, accepted: bool) -> FlowRow {
        FlowRow {
            t,
            entropy: self.entropy,
            grad_norm: self.grad.hk_norm,
            mu_min: self.mu,
            eta_hat: self.eta,
            dt,
            accepted,
        }
    }
}

/// Result of [`flow_step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub map: ExpandingMap,
    pub accepted: bool,
    pub entropy: f64,
    pub mu_min: f64,
    pub rejection: Option<Rejection>,
    ctx: Option<TransferContext>,
}

struct Current<'a> {
    map: &'a ExpandingMap,
    entropy: f64,
    grad: &'a GradientVector,
}

fn try_step(cur: &Current<'_>, dt: f64, cfg: &FlowConfig) -> Result<StepOutcome> {
    let cand = cur.map.add_scaled(dt, &cur.grad.field)?;
    let reject = |why: Rejection, entropy: f64, mu: f64| StepOutcome {
        map: cand.clone(),
        accepted: false,
        entropy,
        mu_min: mu,
        rejection: Some(why),
        ctx: None,
    };
    let n = cfg.numerics.grid_size;
    let mu = cand.expansion(n).0;
    if !(mu >= 1.0 + cfg.margin) {
        return Ok(reject(Rejection::Expansion, f64::NAN, mu));
    }
    let ctx = match TransferContext::new(cand.clone(), cfg.numerics) {
        Ok(c) => c,
        Err(_) => return Ok(reject(Rejection::Expansion, f64::NAN, mu)),
    };
    let h = match entropy(&ctx) {
        Ok(h) => h,
        Err(_) => return Ok(reject(Rejection::Expansion, f64::NAN, mu)),
    };
    let slope = 0.5 * dt.abs() * cur.grad.hk_norm * cur.grad.hk_norm;
    let ok = if dt >= 0.0 {
        h >= cur.entropy + slope - cfg.armijo_tol && h >= cur.entropy
    } else {
        h <= cur.entropy - slope + cfg.armijo_tol && h <= cur.entropy
    };
    if !ok {
        return Ok(reject(Rejection::Ascent, h, mu));
    }
    Ok(StepOutcome {
        map: cand,
        accepted: true,
        entropy: h,
        mu_min: mu,
        rejection: None,
        ctx: Some(ctx),
    })
}

/// One Euler step `f' = f + dt ∇H_f`, accepted when `f'` is certified expanding and
/// `H(f') ≥ H(f) + ½ dt ‖∇H_f‖²_{H^k} − tol` (for `dt < 0`, the mirrored descent test).
pub fn flow_step(
    f: &ExpandingMap,
    metric: &SobolevMetric,
    dt: f64,
    cfg: &FlowConfig,
) -> Result<StepOutcome> {
    let ctx = TransferContext::new(f.clone(), cfg.numerics)?;
    let state = State::new(ctx, metric)?;
    if dt == 0.0 || state.grad.hk_norm < cfg.grad_tol {
        return Ok(StepOutcome {
            map: f.clone(),
            accepted: true,
            entropy: state.entropy,
            mu_min: state.mu,
            rejection: None,
            ctx: None,
        });
    }
    let cur = Current {
        map: &state.map,
        entropy: state.entropy,
        grad: &state.grad,
    };
    try_step(&cur, dt, cfg)
}

fn integrate(
    f0: &ExpandingMap,
    metric: &SobolevMetric,
    cfg: &FlowConfig,
    direction: f64,
    max_steps: usize,
) -> Result<FlowTrace> {
    let ctx = TransferContext::new(f0.clone(), cfg.numerics)?;
    let mut state = State::new(ctx, metric)?;
    let top = f0.topological_entropy();
    let done = |s: &State| {
        s.grad.hk_norm < cfg.grad_tol || (direction > 0.0 && s.entropy >= top - cfg.entropy_tol)
    };
    let mut rows = vec![state.row(0.0, 0.0, true)];
    let finish = |rows, status, map: ExpandingMap| FlowTrace {
        rows,
        status,
        final_map: map,
        cutoff: metric.cutoff(),
        k: metric.k(),
    };
    if done(&state) {
        return Ok(finish(rows, FlowStatus::Converged, state.map));
    }
    let mut t = 0.0;
    let mut dt = cfg.dt0.clamp(cfg.dt_min, cfg.dt_max);
    let mut streak = 0;
    for _ in 0..max_steps {
        let cur = Current {
            map: &state.map,
            entropy: state.entropy,
            grad: &state.grad,
        };
        let out = try_step(&cur, direction * dt, cfg)?;
        if out.accepted {
            t += direction * dt;
            let ctx = out.ctx.expect("accepted steps carry their context");
            state = State::new(ctx, metric)?;
            rows.push(state.row(t, direction * dt, true));
            streak += 1;
            if streak == 3 {
                dt = (2.0 * dt).min(cfg.dt_max);
                streak = 0;
            }
            if done(&state) {
                return Ok(finish(rows, FlowStatus::Converged, state.map));
            }
        } else {
            rows.push(state.row(t, direction * dt, false));
            streak = 0;
            dt *= 0.5;
            if dt < cfg.dt_min {
                let status = match out.rejection {
                    Some(Rejection::Expansion) => FlowStatus::ExpansionLost,
                    _ => FlowStatus::Stalled,
                };
                return Ok(finish(rows, status, state.map));
            }
        }
    }
    Ok(finish(rows, FlowStatus::MaxSteps, state.map))
}

/// Forward flow from `f0` with step doubling after three consecutive acceptances and halving
/// on rejection. Stops on `‖∇H‖ < grad_tol`, `H ≥ log|det A| − entropy_tol`, `max_steps`
/// attempts, or `dt < dt_min`.
///
/// An uncertified `f0` is traced but every candidate fails certification, so the run ends
/// `ExpansionLost`.
pub fn run_flow(f0: &ExpandingMap, metric: &SobolevMetric, cfg: &FlowConfig) -> Result<FlowTrace> {
    integrate(f0, metric, cfg, 1.0, cfg.max_steps)
}

/// Backward flow (`dt < 0`, descent test) for at most `steps` attempts.
pub fn backward_probe(
    f0: &ExpandingMap,
    metric: &SobolevMetric,
    steps: usize,
    cfg: &FlowConfig,
) -> Result<FlowTrace> {
    integrate(f0, metric, cfg, -1.0, steps)
}
