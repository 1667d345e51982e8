#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alpha_bundle::manifold::{
    christoffel_lower, christoffel_mixed, curvature_tensor, fisher_metric, geodesic, sectional_curvature,
    skewness_tensor,
};
use alpha_bundle::verify::{self, CheckConfig, CheckReport};
use alpha_bundle::{AlphaConnection, DerivativeMode, Frame, StatisticalFamily, Trajectory};
use clap::{Parser, Subcommand};
use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use config::{ConfigError, CurveKind, Format, Overrides, RunConfig};
use output::{indexed, write_csv, write_json};

#[derive(Debug, Parser)]
#[command(name = "alpha-bundle", version, about = "Alpha-geometry of statistical families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// `0,1` for one point, `0,1;2,0.5` for a grid.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = config::parse_theta_list)]
    theta: Option<config::ThetaList>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `closed`, `quad:N` or `mc:N`.
    #[arg(long, global = true)]
    strategy: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Metric, skewness, Christoffel symbols and curvature at each grid point.
    Tensors,
    /// Integrate an α-geodesic.
    Geodesic,
    /// Parallel transport along a line or a geodesic.
    Transport,
    /// Run residual checks and write one report per check.
    Verify,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric(_) | CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

fn numeric_at(theta: &[f64]) -> impl Fn(alpha_bundle::Error) -> CliError + '_ {
    move |e| CliError::Numeric(format!("at theta {theta:?}: {e}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("ALPHA_BUNDLE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("alpha-bundle: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply(Overrides {
        alpha: cli.alpha,
        theta: cli.theta.map(|t| t.0),
        out: cli.out,
        format: cli.format,
        seed: cli.seed,
        strategy: cli.strategy,
    });
    let family = cfg.family()?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    info!("family {} (n = {}), output in {}", family.name(), family.dim(), out.display());
    match cli.command {
        Command::Tensors => cmd_tensors(&cfg, &family, &out),
        Command::Geodesic => cmd_geodesic(&cfg, &family, &out),
        Command::Transport => cmd_transport(&cfg, &family, &out),
        Command::Verify => cmd_verify(&cfg, &family, &out),
    }
}

#[derive(Serialize)]
struct PointTensors {
    theta: Vec<f64>,
    g: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    t: Vec<Vec<Vec<f64>>>,
    /// `Γ_ijk`.
    gamma_lower: Vec<Vec<Vec<f64>>>,
    /// `Γ^k_ij`, indexed `[k][i][j]`.
    gamma_mixed: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    r: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "R_1212", skip_serializing_if = "Option::is_none")]
    r_1212: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sectional_curvature: Option<f64>,
}

fn cube(n: usize, f: impl Fn(usize, usize, usize) -> f64) -> Vec<Vec<Vec<f64>>> {
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| f(i, j, k)).collect()).collect())
        .collect()
}

fn tensors_at(
    family: &StatisticalFamily,
    theta: &[f64],
    alpha: f64,
    strategy: alpha_bundle::ExpectationStrategy,
) -> Result<PointTensors, alpha_bundle::Error> {
    let n = family.dim();
    let g = fisher_metric(family, theta, strategy)?;
    let t = skewness_tensor(family, theta, strategy)?;
    let low = christoffel_lower(family, theta, alpha, strategy)?;
    let mix = christoffel_mixed(family, theta, alpha, strategy)?;
    let r = curvature_tensor(family, theta, alpha, strategy, DerivativeMode::Auto)?;
    let two = n == 2;
    Ok(PointTensors {
        theta: theta.to_vec(),
        g: (0..n).map(|i| (0..n).map(|j| g.get(i, j)).collect()).collect(),
        t: cube(n, |i, j, k| t.get(i, j, k)),
        gamma_lower: cube(n, |i, j, k| low.get(i, j, k)),
        gamma_mixed: cube(n, |k, i, j| mix.get(k, i, j)),
        r: (0..n).map(|i| cube(n, |j, k, l| r.get(i, j, k, l))).collect(),
        r_1212: two.then(|| r.get(0, 1, 0, 1)),
        sectional_curvature: if two {
            Some(sectional_curvature(family, theta, alpha, strategy, DerivativeMode::Auto)?)
        } else {
            None
        },
    })
}

fn cmd_tensors(cfg: &RunConfig, family: &StatisticalFamily, out: &Path) -> Result<(), CliError> {
    let (alpha, strategy) = (cfg.alpha()?, cfg.strategy()?);
    let points = cfg.points(family)?;
    let mut all = Vec::with_capacity(points.len());
    for p in &points {
        all.push(tensors_at(family, p, alpha, strategy).map_err(numeric_at(p))?);
    }
    let path = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => write_json(
            out,
            "tensors.json",
            &json!({
                "family": family.name(),
                "alpha": alpha,
                "strategy": strategy.to_string(),
                "points": all,
            }),
        )?,
        Format::Csv => {
            let n = family.dim();
            let mut header: Vec<String> = indexed("theta", n).collect();
            let idx = |k: usize| -> Vec<Vec<usize>> {
                (0..n.pow(k as u32))
                    .map(|mut m| {
                        let mut v = vec![0; k];
                        for slot in v.iter_mut().rev() {
                            *slot = m % n + 1;
                            m /= n;
                        }
                        v
                    })
                    .collect()
            };
            let name = |p: &str, ix: &[usize]| format!("{p}_{}", ix.iter().map(|i| i.to_string()).collect::<String>());
            for ix in idx(2) {
                header.push(name("g", &ix));
            }
            for p in ["T", "Gamma", "GammaMixed"] {
                for ix in idx(3) {
                    header.push(name(p, &ix));
                }
            }
            for ix in idx(4) {
                header.push(name("R", &ix));
            }
            let rows: Vec<Vec<f64>> = all
                .iter()
                .map(|pt| {
                    let mut row = pt.theta.clone();
                    row.extend(pt.g.iter().flatten());
                    for c in [&pt.t, &pt.gamma_lower, &pt.gamma_mixed] {
                        row.extend(c.iter().flatten().flatten());
                    }
                    row.extend(pt.r.iter().flatten().flatten().flatten());
                    row
                })
                .collect();
            write_csv(out, "tensors.csv", &header, &rows)?
        }
    };
    println!("{}", path.display());
    Ok(())
}

fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.samples
        .iter()
        .map(|s| {
            let mut row = vec![s.t];
            row.extend(&s.theta);
            row.extend(&s.velocity);
            row.push(s.residual);
            row
        })
        .collect()
}

fn cmd_geodesic(cfg: &RunConfig, family: &StatisticalFamily, out: &Path) -> Result<(), CliError> {
    let (alpha, strategy) = (cfg.alpha()?, cfg.strategy()?);
    let theta0 = cfg.start(family)?;
    let (v0, t_end, dt) = cfg.geodesic_params(family)?;
    let traj = geodesic(family, &theta0, &v0, alpha, t_end, dt, strategy).map_err(numeric_at(&theta0))?;
    if traj.exited_domain {
        warn!("geodesic left the parameter domain at t = {}", traj.last().t);
    }
    let n = family.dim();
    let path = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut header = vec!["t".to_string()];
            header.extend(indexed("theta", n));
            header.extend(indexed("thetadot", n));
            header.push("residual".into());
            write_csv(out, "geodesic.csv", &header, &trajectory_rows(&traj))?
        }
        Format::Json => write_json(out, "geodesic.json", &traj)?,
    };
    let last = traj.last();
    let drift = traj.speed_drift(family, strategy).map_err(numeric_at(&last.theta))?;
    let summary = write_json(
        out,
        "geodesic_summary.json",
        &json!({
            "family": family.name(),
            "alpha": alpha,
            "strategy": strategy.to_string(),
            "theta0": theta0,
            "v0": v0,
            "t_end": t_end,
            "dt": dt,
            "samples": traj.len(),
            "exited_domain": traj.exited_domain,
            "final_t": last.t,
            "final_theta": last.theta,
            "final_velocity": last.velocity,
            "max_step_residual": traj.max_residual(),
            "speed_drift": drift,
        }),
    )?;
    println!("{}\n{}", path.display(), summary.display());
    Ok(())
}

fn cmd_transport(cfg: &RunConfig, family: &StatisticalFamily, out: &Path) -> Result<(), CliError> {
    let (alpha, strategy) = (cfg.alpha()?, cfg.strategy()?);
    let theta0 = cfg.start(family)?;
    let n = family.dim();
    let spec = &cfg.transport;
    let velocity = spec
        .velocity
        .clone()
        .ok_or_else(|| ConfigError("transport.velocity is required".into()))?;
    config::check_dim(family, &velocity, "transport.velocity")?;
    let v0 = spec.v0.clone().ok_or_else(|| ConfigError("transport.v0 is required".into()))?;
    config::check_dim(family, &v0, "transport.v0")?;
    let t_end = config::positive(spec.t_end.unwrap_or(1.0), "transport.t_end")?;
    let dt = config::positive(spec.dt.unwrap_or(1e-3), "transport.dt")?;
    let frame = match &spec.frame {
        None => Frame::identity(theta0.clone()),
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(ConfigError(format!("transport.frame must be {n}x{n}")).into());
            }
            let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            Frame::new(theta0.clone(), m).map_err(|e| ConfigError(format!("transport.frame: {e}")))?
        }
    };
    let curve = match spec.curve {
        CurveKind::Line => {
            let (p, v) = (DVector::from_column_slice(&theta0), DVector::from_column_slice(&velocity));
            Trajectory::from_curve(
                |t| ((&p + &v * t).as_slice().to_vec(), velocity.clone()),
                0.0,
                t_end,
                dt,
            )
        }
        CurveKind::Geodesic => geodesic(family, &theta0, &velocity, alpha, t_end, dt, strategy),
    }
    .map_err(numeric_at(&theta0))?;
    if curve.exited_domain {
        warn!("base geodesic left the parameter domain at t = {}", curve.last().t);
    }
    let conn = AlphaConnection::new(family, alpha).with_strategy(strategy);
    let (lift, vectors) = conn
        .parallel_transport_path(&curve, &frame, &DVector::from_column_slice(&v0))
        .map_err(|e| CliError::Numeric(e.to_string()))?;

    let rows: Vec<Vec<f64>> = lift
        .samples
        .iter()
        .zip(&curve.samples)
        .zip(&vectors)
        .map(|((s, b), v)| {
            let mut row = vec![s.t];
            row.extend(&b.theta);
            row.extend(s.frame.rows().into_iter().flatten());
            row.extend(v.iter());
            row
        })
        .collect();
    let path = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut header = vec!["t".to_string()];
            header.extend(indexed("theta", n));
            for i in 1..=n {
                for j in 1..=n {
                    header.push(format!("A_{i}{j}"));
                }
            }
            header.extend(indexed("v", n));
            write_csv(out, "transport.csv", &header, &rows)?
        }
        Format::Json => write_json(out, "transport.json", &rows)?,
    };
    let end = lift.last();
    let summary = write_json(
        out,
        "transport_summary.json",
        &json!({
            "family": family.name(),
            "alpha": alpha,
            "strategy": strategy.to_string(),
            "theta0": theta0,
            "v0": v0,
            "t_end": end.t,
            "dt": dt,
            "final_theta": end.frame.theta(),
            "final_frame": end.frame.rows(),
            "final_vector": vectors.last().map(|v| v.as_slice().to_vec()),
        }),
    )?;
    println!("{}\n{}", path.display(), summary.display());
    Ok(())
}

fn cmd_verify(cfg: &RunConfig, family: &StatisticalFamily, out: &Path) -> Result<(), CliError> {
    let mut check = CheckConfig::for_family(family);
    check.seed = cfg.seed();
    check.strategy = cfg.strategy()?;
    check.tolerance = cfg.tolerance()?;
    let v = &cfg.verify;
    if let Some(s) = v.samples {
        if s == 0 {
            return Err(ConfigError("verify.samples must be positive".into()).into());
        }
        check.samples = s;
    }
    if let Some(a) = &v.alphas {
        if a.is_empty() {
            return Err(ConfigError("verify.alphas must be non-empty".into()).into());
        }
        check.alphas = a.clone();
    }
    if let Some(b) = &v.safe_box {
        if b.len() != family.dim() || b.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(ConfigError("verify.safe_box needs one [lo, hi] per coordinate".into()).into());
        }
        check.safe_box = b.clone();
    }
    let requested = v.checks.is_some();
    let mut reports: Vec<CheckReport> = Vec::new();
    for name in cfg.checks()? {
        info!("running {name}");
        let report = match name.as_str() {
            "bundle_chart_agreement" => verify::check_bundle_chart_agreement(family, &check),
            "structure_equations" => verify::check_structure_equations(family, &check),
            "fundamental_fields" => verify::check_fundamental_fields(family, &check),
            "lift_equivariance" => verify::check_lift_equivariance(family, &check),
            "bianchi" => verify::check_bianchi(family, &check),
            "gauge_law" => {
                let k = v
                    .log_coordinate
                    .or_else(|| family.domain().bounds.iter().position(|&(lo, _)| lo == 0.0));
                match k {
                    Some(k) => verify::check_gauge_law(family, k, &check)
                        .map_err(|e| ConfigError(format!("gauge_law: {e}")))?,
                    None if requested => {
                        return Err(ConfigError(
                            "gauge_law needs verify.log_coordinate (no coordinate is bounded below by 0)".into(),
                        )
                        .into())
                    }
                    None => {
                        info!("skipping gauge_law: no positive coordinate");
                        continue;
                    }
                }
            }
            "geodesic_criterion" => {
                let spec = cfg.verify_geodesic(family)?;
                verify::check_geodesic_criterion(family, &spec, check.tolerance, check.strategy)
            }
            _ => unreachable!("validated by RunConfig::checks"),
        };
        let path = write_json(out, &format!("{name}.json"), &report)?;
        println!(
            "{:<24} {} max_residual={:e} tolerance={:e} -> {}",
            report.name,
            if report.pass { "PASS" } else { "FAIL" },
            report.max_residual,
            report.tolerance,
            path.display()
        );
        reports.push(report);
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}
