//! `srbflow`: command-line driver for the SRB entropy laboratory.

mod output;

use std::f64::consts::LN_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use srbflow_core::entropy::{entropy, gateaux_fd_check, gradient_vector_with, SobolevMetric};
use srbflow_core::flow::{backward_probe, run_flow, FlowStatus};
use srbflow_core::response::response_fd_check;
use srbflow_core::spectral::lab::run_lab;
use srbflow_core::transfer::srb_density_report;
use srbflow_core::verify::run_verify;
use srbflow_core::{parse_config, RunConfig, TransferContext, VecField};

use output::{density_csv, flow_csv, map_json, num, pretty, write_file};

#[derive(Parser)]
#[command(name = "srbflow", version, about = "SRB entropy, its gradient and the entropy gradient flow for expanding torus maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print a machine-readable summary to stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every oracle suite; exits nonzero on any failure.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// SRB density on the collocation grid.
    Density {
        #[command(flatten)]
        common: Common,
    },
    /// SRB entropy `∫ log|det Df| dμ`.
    Entropy {
        #[command(flatten)]
        common: Common,
        /// Also check the derivative against central differences.
        #[arg(long)]
        fd: bool,
    },
    /// Sobolev gradient of the entropy.
    Gradient {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fd: bool,
        /// Also check the linear response against central differences.
        #[arg(long)]
        check_response: bool,
    },
    /// Entropy gradient flow.
    Flow {
        #[command(flatten)]
        common: Common,
        /// Descend instead of ascend.
        #[arg(long)]
        backward: bool,
    },
    /// Spectral-gap perturbation lab on seeded random matrices.
    SpectralLab {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: bool,
    },
}

type CliResult<T> = Result<T, String>;

fn load(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("config: {e}"))
}

fn out_dir(common: &Common, cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| common.out.clone())
}

fn emit(json_flag: bool, summary: &Value) {
    if json_flag {
        print!("{}", pretty(summary));
    }
}

fn write(dir: &Path, name: &str, failed: bool, body: &str) -> CliResult<()> {
    write_file(dir, name, failed, body)
        .map(|_| ())
        .map_err(|e| format!("{}: {e}", dir.join(name).display()))
}

fn metric_for(cfg: &RunConfig) -> CliResult<SobolevMetric> {
    SobolevMetric::new(cfg.map.dim(), cfg.k, cfg.cutoff).map_err(|e| e.to_string())
}

fn first_sine(dim: usize) -> VecField {
    VecField::mode(dim, 0, [1, 0], 0.0, 1.0).expect("valid mode")
}

fn verify(common: &Common) -> CliResult<()> {
    let cfg = load(&common.config)?;
    let report = run_verify(&cfg);
    let suites: Vec<Value> = report
        .suites
        .iter()
        .map(|s| {
            json!({
                "suite": s.name,
                "passed": s.passed,
                "max_residual": num(s.max_residual),
                "tolerance": s.tolerance,
                "detail": s.detail,
            })
        })
        .collect();
    let summary = json!({"seed": report.seed, "passed": report.passed(), "suites": suites});
    write(&out_dir(common, &cfg), "verify.json", !report.passed(), &pretty(&summary))?;
    if common.json {
        emit(true, &summary);
    } else {
        for s in &report.suites {
            let mark = if s.passed { "pass" } else { "FAIL" };
            println!("{mark} {:<20} {:>11.3e} (tol {:.0e}) {}", s.name, s.max_residual, s.tolerance, s.detail);
        }
    }
    let failed: Vec<&str> = report.suites.iter().filter(|s| !s.passed).map(|s| s.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(format!("verify failed: {}", failed.join(", ")))
    }
}

fn density(common: &Common) -> CliResult<()> {
    let cfg = load(&common.config)?;
    let dir = out_dir(common, &cfg);
    let ctx = TransferContext::new(cfg.map.clone(), cfg.numerics).map_err(|e| e.to_string())?;
    let r = srb_density_report(&ctx, cfg.numerics.tol, cfg.numerics.max_iter).map_err(|e| e.to_string())?;
    let rho = &r.density;
    let summary = json!({
        "grid_size": cfg.numerics.grid_size,
        "min": rho.min(),
        "max": rho.max(),
        "integral": rho.mean(),
        "iterations": r.iterations,
        "last_change": r.last_change,
    });
    write(&dir, "density.csv", false, &density_csv(rho))?;
    write(&dir, "density.json", false, &pretty(&summary))?;
    if common.json {
        emit(true, &summary);
    } else {
        println!("min {} max {} integral {} iterations {}", rho.min(), rho.max(), rho.mean(), r.iterations);
    }
    Ok(())
}

fn entropy_cmd(common: &Common, fd: bool) -> CliResult<()> {
    let cfg = load(&common.config)?;
    let ctx = TransferContext::new(cfg.map.clone(), cfg.numerics).map_err(|e| e.to_string())?;
    let h = entropy(&ctx).map_err(|e| e.to_string())?;
    let mut summary = json!({"entropy": h, "topological_entropy": cfg.map.topological_entropy()});
    if fd {
        let r = gateaux_fd_check(&ctx, &first_sine(cfg.map.dim()), cfg.h).map_err(|e| e.to_string())?;
        summary["fd"] = json!({
            "direction": "sin(2pi x_1) e_1",
            "h": r.h,
            "error_h": r.error_h,
            "error_half": r.error_half,
            "order": r.order.map(num),
        });
    }
    if common.json {
        emit(true, &summary);
    } else {
        println!("{h}");
        if let Some(f) = summary.get("fd") {
            println!("fd: {f}");
        }
    }
    Ok(())
}

fn gradient(common: &Common, fd: bool, check_response: bool) -> CliResult<()> {
    let cfg = load(&common.config)?;
    let dir = out_dir(common, &cfg);
    let metric = metric_for(&cfg)?;
    let ctx = TransferContext::new(cfg.map.clone(), cfg.numerics).map_err(|e| e.to_string())?;
    let g = gradient_vector_with(&ctx, &metric, 10, cfg.seed).map_err(|e| e.to_string())?;
    let modes: Vec<Value> = g
        .field
        .modes()
        .iter()
        .map(|m| json!({"i": m.component + 1, "m": &m.freq[..cfg.map.dim()], "cos": m.cos, "sin": m.sin}))
        .collect();
    let mut summary = json!({
        "k": cfg.k,
        "cutoff": cfg.cutoff,
        "seed": cfg.seed,
        "hk_norm": g.hk_norm,
        "pairing_check": g.l2_pairing_check,
        "modes": modes,
    });
    let mut failure = None;
    if fd {
        match gateaux_fd_check(&ctx, &first_sine(cfg.map.dim()), cfg.h) {
            Ok(r) => summary["fd"] = json!({"h": r.h, "error_h": r.error_h, "error_half": r.error_half, "order": r.order.map(num)}),
            Err(e) => failure = Some(format!("fd check: {e}")),
        }
    }
    if check_response && failure.is_none() {
        let dirn = if g.field.is_zero() { first_sine(cfg.map.dim()) } else { g.field.clone() };
        match response_fd_check(&ctx, &dirn, cfg.h) {
            Ok(r) => summary["response_check"] = json!({"h": r.h, "error_h": r.error_h, "error_half": r.error_half, "order": r.order.map(num)}),
            Err(e) => failure = Some(format!("response check: {e}")),
        }
    }
    write(&dir, "gradient.json", failure.is_some(), &pretty(&summary))?;
    if let Some(f) = failure {
        return Err(f);
    }
    if common.json {
        emit(true, &summary);
    } else {
        println!("hk_norm {} pairing_check {:.3e}", g.hk_norm, g.l2_pairing_check);
    }
    Ok(())
}

fn flow(common: &Common, backward: bool) -> CliResult<()> {
    let cfg = load(&common.config)?;
    let dir = out_dir(common, &cfg);
    let metric = metric_for(&cfg)?;
    let trace = if backward {
        backward_probe(&cfg.map, &metric, cfg.flow.max_steps, &cfg.flow)
    } else {
        run_flow(&cfg.map, &metric, &cfg.flow)
    }
    .map_err(|e| e.to_string())?;
    let failed = !backward && matches!(trace.status, FlowStatus::ExpansionLost | FlowStatus::Stalled);
    let summary = json!({
        "direction": if backward { "backward" } else { "forward" },
        "status": trace.status.as_str(),
        "steps": trace.rows.len() - 1,
        "accepted_steps": trace.accepted_steps(),
        "initial_entropy": trace.rows[0].entropy,
        "final_entropy": trace.final_entropy(),
        "topological_entropy": cfg.map.topological_entropy(),
        "cutoff": trace.cutoff,
        "k": trace.k,
        "final_map": map_json(&trace.final_map),
    });
    write(&dir, "flow.csv", failed, &flow_csv(&trace))?;
    write(&dir, "flow.json", failed, &pretty(&summary))?;
    if common.json {
        emit(true, &summary);
    } else {
        println!(
            "{} after {} steps: H {} (log 2 = {LN_2})",
            trace.status.as_str(),
            trace.rows.len() - 1,
            trace.final_entropy()
        );
    }
    if failed {
        Err(format!("flow ended {}", trace.status.as_str()))
    } else {
        Ok(())
    }
}

fn spectral_lab(config: Option<&Path>, seed: Option<u64>, json_flag: bool) -> CliResult<()> {
    let cfg_seed = match config {
        Some(p) => load(p)?.seed,
        None => 0,
    };
    let seed = seed.unwrap_or(cfg_seed);
    let report = run_lab(seed, 50, 20).map_err(|e| e.to_string())?;
    if json_flag {
        let checks: Vec<Value> = report
            .checks
            .iter()
            .map(|c| json!({"check": c.name, "passed": c.passed(), "max_residual": num(c.max_residual), "tolerance": c.tolerance}))
            .collect();
        emit(true, &json!({"seed": seed, "passed": report.passed(), "checks": checks}));
    } else {
        println!("seed {seed}");
        for c in &report.checks {
            let mark = if c.passed() { "pass" } else { "FAIL" };
            println!("{mark} {:<28} {:>11.3e} (tol {:.0e})", c.name, c.max_residual, c.tolerance);
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err("spectral lab failed".into())
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SRBFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("SRBFLOW_THREADS: not a thread count: {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("SRBFLOW_THREADS: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = init_threads().and_then(|()| match &cli.command {
        Command::Verify { common } => verify(common),
        Command::Density { common } => density(common),
        Command::Entropy { common, fd } => entropy_cmd(common, *fd),
        Command::Gradient { common, fd, check_response } => gradient(common, *fd, *check_response),
        Command::Flow { common, backward } => flow(common, *backward),
        Command::SpectralLab { config, seed, json } => spectral_lab(config.as_deref(), *seed, *json),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
