use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use srbflow_core::flow::FlowTrace;
use srbflow_core::{ExpandingMap, GridField};

/// Writes `name` into `dir`, or `name.failed` when `failed` is set.
pub fn write_file(dir: &Path, name: &str, failed: bool, body: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = if failed {
        dir.join(format!("{name}.failed"))
    } else {
        dir.join(name)
    };
    let mut f = io::BufWriter::new(fs::File::create(&path)?);
    f.write_all(body.as_bytes())?;
    f.flush()?;
    Ok(path)
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Non-finite floats become `null`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// The map in the config schema (one-based components).
pub fn map_json(map: &ExpandingMap) -> Value {
    let dim = map.dim();
    let modes: Vec<Value> = map
        .perturbation()
        .modes()
        .iter()
        .map(|m| {
            json!({
                "i": m.component + 1,
                "m": &m.freq[..dim],
                "cos": m.cos,
                "sin": m.sin,
            })
        })
        .collect();
    json!({"dim": dim, "A": map.linear_part(), "modes": modes})
}

pub fn density_csv(rho: &GridField) -> String {
    let grid = rho.grid();
    let mut s = String::from(if grid.dim() == 1 { "x,rho\n" } else { "x,y,rho\n" });
    for (idx, v) in rho.values().iter().enumerate() {
        let p = grid.node(idx);
        if grid.dim() == 1 {
            s.push_str(&format!("{},{}\n", p[0], v));
        } else {
            s.push_str(&format!("{},{},{}\n", p[0], p[1], v));
        }
    }
    s
}

pub fn flow_csv(trace: &FlowTrace) -> String {
    let mut s = String::from("t,entropy,grad_norm,mu_min,eta_hat,dt,accepted\n");
    for r in &trace.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.t, r.entropy, r.grad_norm, r.mu_min, r.eta_hat, r.dt, r.accepted as u8
        ));
    }
    s
}
