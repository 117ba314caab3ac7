//! Experiment runner: exposes the homogenization laboratory as subcommands
//! that read one configuration file and persist CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 2 configuration validation, 3 numerical failure,
//! 4 I/O failure.

mod config;

use clap::{Parser, Subcommand};
use config::RunConfig;
use homlab_core as lab;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "homlab",
    version,
    about = "Periodic homogenization laboratory for two-phase power-law composites"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment configuration (flat key = value text, or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the seed recorded in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one cell problem and report the corrector and b(xi).
    Cell,
    /// Tabulate the homogenized map over the gradient grid.
    Bmap,
    /// Solve the homogenized problem on the unit square.
    Macro,
    /// Solve the fine-scale problem for one eps.
    Epsilon,
    /// Corrector error study over a list of eps values.
    CorrectorStudy,
    /// Both sides of the field-fluctuation lower bound.
    Bounds,
    /// Randomized structure audits (law, homogenized map, integral bounds).
    Audit,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn io(message: impl std::fmt::Display) -> Self {
        Failure {
            code: 4,
            message: message.to_string(),
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<lab::Error> for Failure {
    fn from(e: lab::Error) -> Self {
        let code = if e.is_numerical() {
            3
        } else {
            match e {
                lab::Error::Io(_) | lab::Error::Format(_) => 4,
                _ => 2,
            }
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(f) => {
            eprintln!("error: {}", f.message);
            std::process::exit(f.code);
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .ok();
    }
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::config("--config PATH is required"))?;
    let map = config::read_to_map(config_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::InvalidData {
            Failure::config(e.to_string())
        } else {
            Failure::io(e)
        }
    })?;
    let cfg = config::build(map, cli.seed).map_err(|e| Failure::config(e.to_string()))?;
    std::fs::create_dir_all(&cli.out).map_err(Failure::io)?;
    let hash = cfg.hash();

    match cli.command {
        Cmd::Cell => cmd_cell(&cfg, &cli.out, &hash),
        Cmd::Bmap => cmd_bmap(&cfg, &cli.out, &hash),
        Cmd::Macro => cmd_macro(&cfg, &cli.out, &hash),
        Cmd::Epsilon => cmd_epsilon(&cfg, &cli.out, &hash),
        Cmd::CorrectorStudy => cmd_corrector_study(&cfg, &cli.out, &hash),
        Cmd::Bounds => cmd_bounds(&cfg, &cli.out, &hash),
        Cmd::Audit => cmd_audit(&cfg, &cli.out, &hash),
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(Failure::io)
}

fn cmd_cell(cfg: &RunConfig, out: &Path, hash: &str) -> Result<(), Failure> {
    let xi = cfg
        .xi
        .ok_or_else(|| Failure::config("experiment.xi: missing required key"))?;
    let sol = lab::solve_cell(&cfg.params, &cfg.geom, xi, &cfg.solver)?;
    let bin_path = out.join(format!("cell_{hash}.cellbin"));
    lab::io::write_cell_solution(&bin_path, &sol)?;
    let mean = sol.mean_p();
    let defect = (mean - xi).norm();
    let b = sol.b();
    let summary = json!({
        "config_hash": hash,
        "backend": format!("{:?}", sol.backend()),
        "grid_n": sol.grid_n(),
        "xi": [xi.x, xi.y],
        "residual": sol.residual(),
        "mean_p": [mean.x, mean.y],
        "mean_p_defect": defect,
        "b": [b.x, b.y],
        "upsilon_l2": sol.upsilon_l2(),
        "iterations": sol.iterations(),
        "created_unix": unix_now(),
    });
    write_json(&out.join(format!("cell_{hash}.summary.json")), &summary)?;
    println!(
        "cell {hash}: backend={:?} residual={:.3e}",
        sol.backend(),
        sol.residual()
    );
    println!("cell {hash}: |mean(P) - xi| = {defect:.3e}");
    println!("cell {hash}: b(xi) = ({}, {})", b.x, b.y);
    Ok(())
}

fn cmd_bmap(cfg: &RunConfig, out: &Path, hash: &str) -> Result<(), Failure> {
    let map = lab::tabulate(
        &cfg.params,
        &cfg.geom,
        cfg.table_r,
        cfg.table_h,
        &cfg.solver,
    )?;
    let path = out.join(format!("bmap_{hash}.table"));
    lab::io::write_table(&path, &map)?;
    let sidecar = json!({
        "config_hash": hash,
        "nodes_per_side": map.nodes_per_side(),
        "r": map.range(),
        "h_xi": map.spacing(),
        "created_unix": unix_now(),
    });
    write_json(&out.join(format!("bmap_{hash}.meta.json")), &sidecar)?;
    println!(
        "bmap {hash}: {} nodes over [-{}, {}]^2",
        map.nodes_per_side().pow(2),
        map.range(),
        map.range()
    );
    Ok(())
}

fn cmd_macro(cfg: &RunConfig, out: &Path, hash: &str) -> Result<(), Failure> {
    let map = lab::tabulate(
        &cfg.params,
        &cfg.geom,
        cfg.table_r,
        cfg.table_h,
        &cfg.solver,
    )?;
    let problem = lab::MacroProblem::new(cfg.macro_mesh_n, cfg.load)?;
    let sol = lab::solve_macro(&problem, &map, &cfg.solver)?;
    lab::io::write_field_solution(&out.join(format!("macro_{hash}.field.csv")), &sol)?;
    lab::io::write_gradient_csv(&out.join(format!("macro_{hash}.grad.csv")), &sol)?;
    let hi = lab::higher_integrability_check(&sol, &cfg.params);
    let sidecar = json!({
        "config_hash": hash,
        "mesh_n": sol.mesh_n(),
        "residual": sol.residual(),
        "energy": sol.energy(),
        "higher_integrability_p2": hi,
        "iterations": sol.iterations(),
        "created_unix": unix_now(),
    });
    write_json(&out.join(format!("macro_{hash}.meta.json")), &sidecar)?;
    println!(
        "macro {hash}: residual={:.3e} energy={:.6e} int|grad u|^p2={hi:.6e}",
        sol.residual(),
        sol.energy()
    );
    Ok(())
}

fn cmd_epsilon(cfg: &RunConfig, out: &Path, hash: &str) -> Result<(), Failure> {
    let k = cfg
        .eps
        .or_else(|| cfg.eps_list.first().copied())
        .ok_or_else(|| {
            Failure::config("experiment.eps: missing required key (or provide experiment.eps_list)")
        })?;
    let eps = lab::Epsilon::one_over(k)?;
    let mesh_n = cfg.elems_per_cell * k as usize;
    let problem = lab::MacroProblem::new(mesh_n, cfg.load)?;
    let sol = lab::solve_epsilon(&problem, &cfg.params, &cfg.geom, eps, &cfg.solver)?;
    lab::io::write_field_solution(&out.join(format!("epsilon_{hash}.field.csv")), &sol)?;
    lab::io::write_gradient_csv(&out.join(format!("epsilon_{hash}.grad.csv")), &sol)?;
    let (a1, a2) = lab::apriori_norms(&sol, &cfg.params, &cfg.geom, eps)?;
    let sidecar = json!({
        "config_hash": hash,
        "eps_k": k,
        "mesh_n": mesh_n,
        "residual": sol.residual(),
        "energy": sol.energy(),
        "apriori_p1": a1,
        "apriori_p2": a2,
        "iterations": sol.iterations(),
        "created_unix": unix_now(),
    });
    write_json(&out.join(format!("epsilon_{hash}.meta.json")), &sidecar)?;
    println!(
        "epsilon {hash}: eps=1/{k} mesh={mesh_n} residual={:.3e}",
        sol.residual()
    );
    println!("epsilon {hash}: apriori norms = ({a1:.6e}, {a2:.6e})");
    Ok(())
}

fn cmd_corrector_study(cfg: &RunConfig, out: &Path, hash: &str) -> Result<(), Failure> {
    let eps_list = cfg.eps_list().map_err(|e| Failure::config(e.to_string()))?;
    let problem = lab::MacroProblem::new(cfg.macro_mesh_n, cfg.load)?;
    let report = lab::corrector_study(&problem, &cfg.params, &cfg.geom, &eps_list, &cfg.study())?;
    let csv = lab::io::corrector_report_csv(&report, hash);
    std::fs::write(out.join(format!("corrector_study_{hash}.csv")), &csv).map_err(Failure::io)?;
    let sidecar = json!({
        "config_hash": hash,
        "report": &report,
        "created_unix": unix_now(),
    });
    write_json(
        &out.join(format!("corrector_study_{hash}.meta.json")),
        &sidecar,
    )?;
    for (i, &k) in report.eps_k.iter().enumerate() {
        println!(
            "corrector-study {hash}: eps=1/{k} e1={:.6e} e2={:.6e} apriori=({:.4e}, {:.4e})",
            report.e1[i], report.e2[i], report.apriori_p1[i], report.apriori_p2[i]
        );
    }
    Ok(())
}

fn cmd_bounds(cfg: &RunConfig, out: &Path, hash: &str) -> Result<(), Failure> {
    let eps_list = cfg.eps_list().map_err(|e| Failure::config(e.to_string()))?;
    let problem = lab::MacroProblem::new(cfg.macro_mesh_n, cfg.load)?;
    let report = lab::bound_report(
        &problem,
        &cfg.params,
        &cfg.geom,
        &cfg.domain,
        cfg.q,
        &eps_list,
        &cfg.study(),
    )?;
    let csv = lab::io::bound_report_csv(&report, hash);
    std::fs::write(out.join(format!("bounds_{hash}.csv")), &csv).map_err(Failure::io)?;
    let sidecar = json!({
        "config_hash": hash,
        "report": &report,
        "created_unix": unix_now(),
    });
    write_json(&out.join(format!("bounds_{hash}.meta.json")), &sidecar)?;
    println!(
        "bounds {hash}: q={} region={} LHS=({:.6e}, {:.6e})",
        report.q, report.region, report.lhs1, report.lhs2
    );
    for (i, &k) in report.eps_k.iter().enumerate() {
        println!(
            "bounds {hash}: eps=1/{k} RHS=({:.6e}, {:.6e}) flagged={}",
            report.rhs1[i], report.rhs2[i], report.flagged[i]
        );
    }
    if report.flagged.iter().any(|&f| f) {
        return Err(Failure::numerical(
            "lower bound violated beyond the slack at some eps",
        ));
    }
    Ok(())
}

fn cmd_audit(cfg: &RunConfig, out: &Path, hash: &str) -> Result<(), Failure> {
    let a_report = lab::audit_structure_conditions(&cfg.params, cfg.n_samples, cfg.seed);
    let b_report = lab::audit_b_structure(
        |xi| lab::b_eval(&cfg.params, &cfg.geom, xi, &cfg.solver),
        &cfg.params,
        &cfg.geom,
        cfg.n_samples,
        cfg.seed + 1,
    )?;
    let integral_report = lab::audit_corrector_integrals(
        &cfg.params,
        &cfg.geom,
        cfg.n_samples,
        cfg.seed + 2,
        &cfg.solver,
    )?;
    let combined = json!({
        "config_hash": hash,
        "structure_a": &a_report,
        "structure_b": &b_report,
        "corrector_integrals": &integral_report,
        "created_unix": unix_now(),
    });
    write_json(&out.join(format!("audit_{hash}.json")), &combined)?;
    println!(
        "audit {hash}: law sign_violations={} conA_ratio_max={:.3e} monA_ratio_max={:.3e}",
        a_report.sign_violations, a_report.con_a_ratio_max, a_report.mon_a_ratio_max
    );
    println!(
        "audit {hash}: b sign_violations={} continuity_ratio_max={:.3e}",
        b_report.sign_violations, b_report.continuity_ratio_max
    );
    println!(
        "audit {hash}: integral bounds violations={} power_max={:.3e} difference_max={:.3e}",
        integral_report.violations,
        integral_report.power_ratio_max,
        integral_report.difference_ratio_max
    );
    if !(a_report.passed() && b_report.passed() && integral_report.passed()) {
        return Err(Failure::numerical(
            "an audit recorded violations; see the written report",
        ));
    }
    Ok(())
}
