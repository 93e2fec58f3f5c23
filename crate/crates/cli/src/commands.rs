use std::io::Write;

use rayon::prelude::*;
use serde_json::json;

use cesp_core::analysis::{classify_point, stationarity_equivalence_scan, Verdict, DEFAULT_TOL};
use cesp_core::basin::{basin_raster, GridSpec, UNRESOLVED};
use cesp_core::curvature::CurvatureMethod;
use cesp_core::dynamics::{format_float, run_to_terminal, run_trajectory, Method, OptimizerConfig, TerminalStatus};
use cesp_core::linalg::symmetric_extremes;
use cesp_core::problems::{
    parse_matrix, quadratic_saddle, robust_mlp_problem, toy_critical_points, toy_problem, PointZ, RobustMlpParams,
};
use cesp_core::{seed, Block, ProblemInstance};

use crate::manifest::Run;
use crate::settings::{parse_floats, Settings};
use crate::{exit, CliError, DEFAULT_BASIN_BUDGET, DEFAULT_GRID, DEFAULT_RADIUS};

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn robust_params(s: &Settings, data_seed: u64) -> Result<RobustMlpParams, CliError> {
    let d = RobustMlpParams::default();
    Ok(RobustMlpParams {
        seed: data_seed,
        n_samples: s.get_or("n-samples", d.n_samples)?,
        n_features: s.get_or("n-features", d.n_features)?,
        n_hidden: s.get_or("n-hidden", d.n_hidden)?,
        lambda_reg: s.get_or("lambda-reg", d.lambda_reg)?,
    })
}

pub fn build_problem(s: &Settings) -> Result<ProblemInstance, CliError> {
    let name = s.raw("problem").unwrap_or("toy");
    let problem = match name {
        "toy" => {
            let toy = toy_problem();
            let c = toy.constants();
            let (rx, ry) = (c.rho_block(Block::X), c.rho_block(Block::Y));
            match (s.get::<f64>("rho-x")?, s.get::<f64>("rho-y")?) {
                (None, None) => toy,
                (x, y) => toy.with_rho(x.unwrap_or(rx), y.unwrap_or(ry))?,
            }
        }
        "quad" => {
            let m = |key: &str, default: &str| parse_matrix(s.raw(key).unwrap_or(default));
            quadratic_saddle(m("a", "1")?, m("b", "1")?, m("c", "0")?)?
        }
        "robust-mlp" => robust_mlp_problem(robust_params(s, s.get_or("data-seed", 0)?)?)?,
        other => return Err(CliError::UnknownProblem(other.to_string())),
    };
    Ok(problem)
}

pub fn optimizer_config(s: &Settings, base: OptimizerConfig) -> Result<OptimizerConfig, CliError> {
    let method = match s.raw("method") {
        Some(m) => m.parse::<Method>()?,
        None => base.method,
    };
    let curvature_method = match s.raw("curvature") {
        None => base.curvature_method,
        Some("dense") => CurvatureMethod::Dense,
        Some("power") => CurvatureMethod::Power,
        Some(other) => return Err(CliError::Usage(format!("unknown curvature method '{other}'"))),
    };
    let p = base.power_cfg;
    let cfg = OptimizerConfig {
        method,
        eta: s.get_or("eta", base.eta)?,
        max_iters: s.get_or("max-iters", base.max_iters)?,
        grad_tol: s.get_or("grad-tol", base.grad_tol)?,
        noise_sigma: s.get_or("noise-sigma", base.noise_sigma)?,
        curvature_method,
        power_cfg: cesp_core::spectral::PowerIterConfig {
            beta: s.get("power-beta")?.or(p.beta),
            max_iters: s.get_or("power-max-iters", p.max_iters)?,
            tol: s.get_or("power-tol", p.tol)?,
            seed: s.get_or("power-seed", p.seed)?,
            delta: s.get_or("power-delta", p.delta)?,
        },
        epsilon_adagrad: s.get_or("epsilon-adagrad", base.epsilon_adagrad)?,
        seed: s.get_or("seed", base.seed)?,
        spectrum_stride: s.get_or("spectrum-stride", base.spectrum_stride)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn split_point(problem: &ProblemInstance, coords: Vec<f64>, what: &str) -> Result<PointZ, CliError> {
    let (k, d) = (problem.k(), problem.d());
    if coords.len() != k + d {
        return Err(CliError::Usage(format!(
            "{what} has {} coordinates, problem '{}' needs {}",
            coords.len(),
            problem.name(),
            k + d
        )));
    }
    Ok(PointZ::new(coords[..k].to_vec(), coords[k..].to_vec()))
}

fn default_start(s: &Settings, problem: &ProblemInstance) -> Result<PointZ, CliError> {
    Ok(match problem.name() {
        "toy" => PointZ::new(vec![-3.0], vec![-1.0]),
        "robust-mlp" => {
            let params = robust_params(s, s.get_or("data-seed", 0)?)?;
            params.initial_point(s.get_or("init-seed", 0)?, s.get_or("init-scale", 0.01)?)
        }
        _ => PointZ::new(vec![1.0; problem.k()], vec![1.0; problem.d()]),
    })
}

fn parse_grid(spec: &str) -> Result<GridSpec, CliError> {
    let bad = || CliError::Usage(format!("grid must be lo:hi:n or xlo:xhi:nx:ylo:yhi:ny, got '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    let f = |i: usize| parts[i].trim().parse::<f64>().map_err(|_| bad());
    let n = |i: usize| parts[i].trim().parse::<usize>().map_err(|_| bad());
    let grid = match parts.len() {
        3 => GridSpec::square(f(0)?, f(1)?, n(2)?),
        6 => GridSpec::new(f(0)?, f(1)?, f(3)?, f(4)?, n(2)?, n(5)?),
        _ => return Err(bad()),
    };
    grid.map_err(|e| CliError::Usage(e.to_string()))
}

fn require_plane(problem: &ProblemInstance) -> Result<(), CliError> {
    if problem.k() == 1 && problem.d() == 1 {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "problem '{}' has blocks ({}, {}); grids need a 2-D problem",
            problem.name(),
            problem.k(),
            problem.d()
        )))
    }
}

fn status_code(status: TerminalStatus) -> i32 {
    match status {
        TerminalStatus::Converged => exit::OK,
        TerminalStatus::MaxIters => exit::MAX_ITERS,
        TerminalStatus::Diverged => exit::DIVERGED,
    }
}

fn coords_json(z: &PointZ) -> serde_json::Value {
    json!({ "x": z.x.as_slice(), "y": z.y.as_slice() })
}

pub fn trajectory(s: &Settings, argv: Vec<String>) -> Result<i32, CliError> {
    let problem = build_problem(s)?;
    let cfg = optimizer_config(s, OptimizerConfig::default())?;
    let z0 = match s.raw("start") {
        Some(v) => split_point(&problem, parse_floats(v)?, "start")?,
        None => default_start(s, &problem)?,
    };
    let mut run = Run::start("trajectory", argv, s)?;
    let rec = run_trajectory(&problem, z0.clone(), &cfg)?;
    if rec.step_size_warning {
        eprintln!(
            "warning: eta = {} exceeds the step-size bound of '{}'",
            cfg.eta,
            problem.name()
        );
    }
    run.write("trajectory.csv", |w| rec.write_csv(w))?;
    let summary = json!({
        "status": rec.status.as_str(),
        "iterations": rec.iterations,
        "start": coords_json(&z0),
        "final": coords_json(&rec.final_z),
        "step_size_warning": rec.step_size_warning,
    });
    run.finish(&problem, &cfg, summary)?;
    let fz: Vec<String> = rec.final_z.coords().map(format_float).collect();
    say!(
        "{} after {} iterations at ({})",
        rec.status.as_str(),
        rec.iterations,
        fz.join(", ")
    );
    Ok(status_code(rec.status))
}

pub fn classify(s: &Settings, argv: Vec<String>) -> Result<i32, CliError> {
    let problem = build_problem(s)?;
    let point = s
        .raw("point")
        .ok_or_else(|| CliError::Usage("classify needs --point".into()))?;
    let z = split_point(&problem, parse_floats(point)?, "point")?;
    let tol = s.get_or("tol", DEFAULT_TOL)?;
    let expect = match s.raw("expect") {
        Some(v) => Some(Verdict::parse(v).ok_or_else(|| CliError::Usage(format!("unknown verdict '{v}'")))?),
        None => None,
    };
    let mut run = Run::start("classify", argv, s)?;
    let report = classify_point(&problem, &z, tol)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    say!("{text}");
    let matched = expect.is_none_or(|v| v == report.verdict);
    if s.raw("out").is_some() {
        run.write("classify.json", |w| writeln!(w, "{text}"))?;
        let cfg = optimizer_config(s, OptimizerConfig::default())?;
        let summary = json!({
            "verdict": report.verdict.as_str(),
            "expect": expect.map(|v| v.as_str()),
            "matched": matched,
        });
        run.finish(&problem, &cfg, summary)?;
    }
    if !matched {
        eprintln!(
            "verdict {} does not match expected {}",
            report.verdict,
            expect.map(|v| v.as_str()).unwrap_or_default()
        );
    }
    Ok(if matched { exit::OK } else { exit::MISMATCH })
}

pub fn scan(s: &Settings, argv: Vec<String>) -> Result<i32, CliError> {
    let problem = build_problem(s)?;
    require_plane(&problem)?;
    let cfg = optimizer_config(s, OptimizerConfig::default())?;
    let grid = parse_grid(s.raw("grid").unwrap_or(DEFAULT_GRID))?;
    let tol = s.get_or("tol", DEFAULT_TOL)?;
    let mut run = Run::start("scan", argv, s)?;
    let report = stationarity_equivalence_scan(&problem, &grid, &cfg, tol)?;
    run.write("scan.csv", |w| {
        writeln!(w, "i,j,x,y,refined,cesp_displacement,gda_displacement,verdict")?;
        for c in &report.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                c.i,
                c.j,
                format_float(c.z.x[0]),
                format_float(c.z.y[0]),
                c.refined,
                format_float(c.cesp_displacement),
                format_float(c.gda_displacement),
                c.verdict.as_str()
            )?;
        }
        Ok(())
    })?;
    let summary = json!({
        "grid": report.grid,
        "tol": report.tol,
        "cesp_fixed": report.cesp_fixed,
        "gda_fixed": report.gda_fixed,
        "locally_optimal": report.locally_optimal,
        "venn_gap": report.venn_gap,
        "sets_equal": report.sets_equal,
    });
    run.write("scan.json", |w| {
        writeln!(
            w,
            "{}",
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        )
    })?;
    run.finish(&problem, &cfg, summary)?;
    say!(
        "cesp-fixed cells: {}, locally optimal cells: {}, gda-fixed cells: {}, sets equal: {}",
        report.cesp_fixed.len(),
        report.locally_optimal.len(),
        report.gda_fixed.len(),
        report.sets_equal
    );
    Ok(if report.sets_equal { exit::OK } else { exit::MISMATCH })
}

fn parse_attractors(spec: &str, problem: &ProblemInstance) -> Result<Vec<PointZ>, CliError> {
    spec.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| split_point(problem, parse_floats(p)?, "attractor"))
        .collect()
}

pub fn basin(s: &Settings, argv: Vec<String>) -> Result<i32, CliError> {
    let problem = build_problem(s)?;
    require_plane(&problem)?;
    let cfg = optimizer_config(
        s,
        OptimizerConfig {
            max_iters: DEFAULT_BASIN_BUDGET,
            ..Default::default()
        },
    )?;
    let grid = parse_grid(s.raw("grid").unwrap_or(DEFAULT_GRID))?;
    let radius = s.get_or("match-radius", DEFAULT_RADIUS)?;
    let attractors = match (s.raw("attractors"), problem.name()) {
        (Some(spec), _) => parse_attractors(spec, &problem)?,
        (None, "toy") => toy_critical_points().to_vec(),
        (None, _) => return Err(CliError::Usage("basin needs --attractors for this problem".into())),
    };
    let mut run = Run::start("basin", argv, s)?;
    let raster = basin_raster(&problem, &cfg, &grid, &attractors, radius)?;
    run.write("basin.csv", |w| raster.write_csv(w))?;
    run.write("basin.ppm", |w| raster.write_ppm(w))?;
    let counts: Vec<usize> = (0..attractors.len()).map(|a| raster.count(a as i32)).collect();
    let unresolved = raster.count(UNRESOLVED);
    let summary = json!({
        "grid": grid,
        "attractors": attractors,
        "match_radius": radius,
        "counts": counts,
        "unresolved": unresolved,
    });
    run.finish(&problem, &cfg, summary)?;
    say!("cells per attractor: {counts:?}, unresolved: {unresolved}");
    Ok(exit::OK)
}

struct RobustRow {
    seed: usize,
    method: Method,
    status: TerminalStatus,
    iterations: usize,
    grad_norm_sq: f64,
    lambda_min_x: f64,
}

pub fn robust(s: &Settings, argv: Vec<String>) -> Result<i32, CliError> {
    if let Some(p) = s.raw("problem") {
        if p != "robust-mlp" {
            return Err(CliError::Usage(format!("robust runs on robust-mlp, not '{p}'")));
        }
    }
    let base = optimizer_config(
        s,
        OptimizerConfig {
            eta: 0.05,
            max_iters: 20_000,
            grad_tol: 1e-4,
            ..Default::default()
        },
    )?;
    let n_seeds: usize = s.get_or("seeds", 20)?;
    let init_scale: f64 = s.get_or("init-scale", 0.01)?;
    let data_offset: u64 = s.get_or("data-seed", 0)?;
    if n_seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    let mut run = Run::start("robust", argv, s)?;
    let jobs: Vec<(usize, Method)> = (0..n_seeds)
        .flat_map(|i| [(i, Method::Gda), (i, Method::Cesp)])
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, method)| -> Result<RobustRow, CliError> {
            let params = robust_params(s, data_offset + i as u64)?;
            let problem = robust_mlp_problem(params)?;
            let cfg = OptimizerConfig {
                method,
                seed: seed::derive(base.seed, i as u64),
                ..base.clone()
            };
            let out = run_to_terminal(&problem, params.initial_point(1000 + i as u64, init_scale), &cfg)?;
            let lambda_min_x = if out.z.is_finite() {
                symmetric_extremes(&problem.hessian_blocks_at(&out.z)?.xx).0
            } else {
                f64::NAN
            };
            Ok(RobustRow {
                seed: i,
                method,
                status: out.status,
                iterations: out.iterations,
                grad_norm_sq: out.grad_norm_sq,
                lambda_min_x,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    run.write("robust.csv", |w| {
        writeln!(w, "seed,method,status,iterations,grad_norm_sq,lambda_min_x")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.seed,
                r.method,
                r.status.as_str(),
                r.iterations,
                format_float(r.grad_norm_sq),
                format_float(r.lambda_min_x)
            )?;
        }
        Ok(())
    })?;
    let tally = |method: Method| {
        let flat: Vec<&RobustRow> = rows
            .iter()
            .filter(|r| r.method == method && r.grad_norm_sq < base.grad_tol)
            .collect();
        let good = flat.iter().filter(|r| r.lambda_min_x > -1e-3).count();
        (good, flat.len())
    };
    let (g_good, g_flat) = tally(Method::Gda);
    let (c_good, c_flat) = tally(Method::Cesp);
    let summary = json!({
        "seeds": n_seeds,
        "init_scale": init_scale,
        "gda": { "flat": g_flat, "nonnegative_curvature": g_good },
        "cesp": { "flat": c_flat, "nonnegative_curvature": c_good },
    });
    let reference = robust_mlp_problem(robust_params(s, data_offset)?)?;
    run.finish(&reference, &base, summary)?;
    say!("lambda_min_x > -1e-3 among flat runs: GDA {g_good}/{g_flat}, CESP {c_good}/{c_flat}");
    Ok(exit::OK)
}
