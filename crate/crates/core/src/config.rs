//! JSON run configuration.
//!
//! ```json
//! {
//!   "map": {"dim": 1, "A": [[2]], "modes": [{"i": 1, "m": [1], "cos": 0.0, "sin": 0.2}]},
//!   "numerics": {"grid_size": 256, "tol": 1e-12, "h": 1e-3, "cutoff": 8, "margin": 0.05},
//!   "metric": {"k": 4},
//!   "flow": {"dt0": 1.0, "max_steps": 1000},
//!   "seed": 0,
//!   "output": {"dir": "out"}
//! }
//! ```
//!
//! `i` is the 1-based component, `m` the integer frequency vector (one entry per dimension).

use std::path::PathBuf;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::map::{ExpandingMap, Mode, VecField};
use crate::transfer::Numerics;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    map: Option<RawMap>,
    #[serde(default)]
    numerics: RawNumerics,
    #[serde(default)]
    metric: RawMetric,
    #[serde(default)]
    flow: RawFlow,
    seed: Option<u64>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    dim: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<i64>>,
    #[serde(default)]
    modes: Vec<RawMode>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    i: usize,
    m: Vec<i64>,
    #[serde(default)]
    cos: f64,
    #[serde(default)]
    sin: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    grid_size: Option<usize>,
    tol: Option<f64>,
    h: Option<f64>,
    cutoff: Option<i64>,
    margin: Option<f64>,
    max_iter: Option<usize>,
    max_terms: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    k: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    dt0: Option<f64>,
    dt_min: Option<f64>,
    dt_max: Option<f64>,
    grad_tol: Option<f64>,
    entropy_tol: Option<f64>,
    max_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Validated configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub map: ExpandingMap,
    pub numerics: Numerics,
    /// Finite-difference step.
    pub h: f64,
    /// Mode cutoff `M` of the gradient family.
    pub cutoff: i64,
    pub margin: f64,
    /// Sobolev order of the metric.
    pub k: u32,
    /// Flow schedule; its `numerics` and `margin` mirror the fields above.
    pub flow: FlowConfig,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

fn positive(path: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(path, "must be positive"))
    }
}

fn nonzero(path: &str, v: usize) -> Result<usize> {
    if v > 0 {
        Ok(v)
    } else {
        Err(Error::config(path, "must be positive"))
    }
}

fn build_map(raw: RawMap) -> Result<ExpandingMap> {
    if !(1..=2).contains(&raw.dim) {
        return Err(Error::config("map.dim", "must be 1 or 2"));
    }
    if raw.a.len() != raw.dim || raw.a.iter().any(|r| r.len() != raw.dim) {
        return Err(Error::config("map.A", format!("must be {0}x{0}", raw.dim)));
    }
    let mut modes = Vec::with_capacity(raw.modes.len());
    for (idx, m) in raw.modes.iter().enumerate() {
        let path = format!("map.modes[{idx}]");
        if m.i == 0 || m.i > raw.dim {
            return Err(Error::config(
                format!("{path}.i"),
                format!("must be in 1..={}", raw.dim),
            ));
        }
        if m.m.len() != raw.dim {
            return Err(Error::config(
                format!("{path}.m"),
                format!("must have {} entries", raw.dim),
            ));
        }
        if !m.cos.is_finite() || !m.sin.is_finite() {
            return Err(Error::config(path, "coefficients must be finite"));
        }
        let freq = [m.m[0], m.m.get(1).copied().unwrap_or(0)];
        modes.push(Mode::new(m.i - 1, freq, m.cos, m.sin));
    }
    let field = VecField::new(raw.dim, modes).map_err(|e| Error::config("map.modes", e.to_string()))?;
    ExpandingMap::new(raw.dim, &raw.a, field).map_err(|e| Error::config("map", e.to_string()))
}

/// Parses and validates a JSON configuration. Errors name the offending field path.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        Error::config(path, e.inner().to_string())
    })?;

    let n = &raw.numerics;
    if let Some(size) = n.grid_size {
        if !size.is_power_of_two() || size < 8 {
            return Err(Error::config("grid_size", "must be a power of two"));
        }
    }
    let Some(raw_map) = raw.map else {
        return Err(Error::config("map", "required"));
    };
    let map = build_map(raw_map)?;
    let dim = map.dim();

    let mut numerics = Numerics::default_for(dim);
    if let Some(size) = n.grid_size {
        numerics = numerics.with_grid_size(size);
    }
    if let Some(t) = n.tol {
        numerics.tol = positive("numerics.tol", t)?;
    }
    if let Some(v) = n.max_iter {
        numerics.max_iter = nonzero("numerics.max_iter", v)?;
    }
    if let Some(v) = n.max_terms {
        numerics.max_terms = nonzero("numerics.max_terms", v)?;
    }
    let h = positive("numerics.h", n.h.unwrap_or(1e-3))?;
    let cutoff = n.cutoff.unwrap_or(8);
    if cutoff < 1 {
        return Err(Error::config("numerics.cutoff", "must be positive"));
    }
    if cutoff as usize > numerics.grid_size / 8 {
        return Err(Error::config(
            "numerics.cutoff",
            format!("must not exceed grid_size/8 = {}", numerics.grid_size / 8),
        ));
    }
    if map.perturbation().cutoff() > cutoff {
        return Err(Error::config("map.modes", format!("frequency exceeds cutoff {cutoff}")));
    }
    let margin = n.margin.unwrap_or(0.05);
    if !margin.is_finite() || margin < 0.0 {
        return Err(Error::config("numerics.margin", "must be nonnegative"));
    }
    let k = raw.metric.k.unwrap_or(if dim == 1 { 4 } else { 5 });
    if k < 1 {
        return Err(Error::config("metric.k", "must be positive"));
    }

    let mut flow = FlowConfig::default_for(dim);
    flow.numerics = numerics;
    flow.margin = margin;
    let f = &raw.flow;
    if let Some(v) = f.dt0 {
        flow.dt0 = positive("flow.dt0", v)?;
    }
    if let Some(v) = f.dt_min {
        flow.dt_min = positive("flow.dt_min", v)?;
    }
    if let Some(v) = f.dt_max {
        flow.dt_max = positive("flow.dt_max", v)?;
    }
    if flow.dt_min > flow.dt_max {
        return Err(Error::config("flow.dt_min", "must not exceed dt_max"));
    }
    if let Some(v) = f.grad_tol {
        flow.grad_tol = positive("flow.grad_tol", v)?;
    }
    if let Some(v) = f.entropy_tol {
        flow.entropy_tol = positive("flow.entropy_tol", v)?;
    }
    if let Some(v) = f.max_steps {
        flow.max_steps = v;
    }

    Ok(RunConfig {
        map,
        numerics,
        h,
        cutoff,
        margin,
        k,
        flow,
        seed: raw.seed.unwrap_or(0),
        output_dir: raw.output.dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_defaults() {
        let c = parse_config(r#"{"map":{"dim":1,"A":[[2]],"modes":[]}}"#).unwrap();
        assert_eq!(c.map, ExpandingMap::linear(1, &[vec![2]]).unwrap());
        assert_eq!(c.numerics.grid_size, 256);
        assert_eq!(c.numerics.tol, 1e-12);
        assert_eq!((c.h, c.cutoff, c.margin, c.k, c.seed), (1e-3, 8, 0.05, 4, 0));
    }

    #[test]
    fn two_dim_defaults() {
        let c = parse_config(r#"{"map":{"dim":2,"A":[[2,0],[0,2]]}}"#).unwrap();
        assert_eq!(c.numerics.grid_size, 64);
        assert_eq!(c.k, 5);
    }

    #[test]
    fn modes_are_one_based() {
        let c = parse_config(
            r#"{"map":{"dim":2,"A":[[2,0],[0,2]],"modes":[{"i":2,"m":[1,-1],"sin":0.1}]}}"#,
        )
        .unwrap();
        assert_eq!(c.map.perturbation().coefficient(1, [1, -1]), (0.0, 0.1));
    }

    #[test]
    fn error_messages() {
        let e = parse_config("{}").unwrap_err();
        assert_eq!(e.to_string(), "map: required");
        let e = parse_config(r#"{"numerics":{"grid_size":100}}"#).unwrap_err();
        assert_eq!(e.to_string(), "grid_size: must be a power of two");
        let e = parse_config(r#"{"map":{"dim":1,"A":[[2]]},"bogus":1}"#).unwrap_err();
        assert!(e.to_string().contains("unknown field"), "{e}");
        let e = parse_config(r#"{"map":{"dim":1,"A":[[2]]},"numerics":{"tol":"x"}}"#).unwrap_err();
        assert!(e.to_string().starts_with("numerics.tol:"), "{e}");
        let e = parse_config(r#"{"map":{"dim":1,"A":[[2]]},"numerics":{"grid_size":32}}"#).unwrap_err();
        assert!(e.to_string().starts_with("numerics.cutoff:"), "{e}");
    }
}
