//! Optimizer steppers and the trajectory driver.
//!
//! All updates are simultaneous: both blocks move from the same snapshot
//! `z_t`.
//!
//! * GDA: `z <- z + eta (-grad_x f, grad_y f)`
//! * CESP: `z <- z + v_z + eta (-grad_x f, grad_y f)`
//! * Adagrad: `z <- z + eta A_t (-grad_x f, grad_y f)`, `A_t` diagonal with
//!   entries `1 / sqrt(sum of squared past gradients + eps)`
//! * Adagrad-CESP: `z <- z + v_z + eta A_t (-grad_x f, grad_y f)`

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curvature::{extreme_curvature_with_gradient, CurvatureMethod, ExtremeCurvature};
use crate::problems::{PointZ, ProblemInstance};
use crate::spectral::PowerIterConfig;
use crate::{Error, Result};

/// `|z|` beyond which a run is declared divergent.
pub const DIVERGENCE_RADIUS: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gda,
    Cesp,
    Adagrad,
    AdagradCesp,
}

impl Method {
    pub fn uses_curvature(self) -> bool {
        matches!(self, Method::Cesp | Method::AdagradCesp)
    }

    pub fn uses_transform(self) -> bool {
        matches!(self, Method::Adagrad | Method::AdagradCesp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gda => "gda",
            Method::Cesp => "cesp",
            Method::Adagrad => "adagrad",
            Method::AdagradCesp => "adagrad-cesp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gda" => Ok(Method::Gda),
            "cesp" => Ok(Method::Cesp),
            "adagrad" => Ok(Method::Adagrad),
            "adagrad-cesp" => Ok(Method::AdagradCesp),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub eta: f64,
    pub max_iters: usize,
    /// Stop once `|grad f|^2` drops below this (and, for curvature methods,
    /// `v_z = 0`).
    pub grad_tol: f64,
    /// Standard deviation of the Gaussian noise added to every gradient
    /// component before the step.
    pub noise_sigma: f64,
    pub curvature_method: CurvatureMethod,
    pub power_cfg: PowerIterConfig,
    pub epsilon_adagrad: f64,
    pub seed: u64,
    /// Spectra are logged every this many steps for methods that do not
    /// need them to step.
    pub spectrum_stride: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Gda,
            eta: 1e-3,
            max_iters: 50_000,
            grad_tol: 1e-10,
            noise_sigma: 0.0,
            curvature_method: CurvatureMethod::Dense,
            power_cfg: PowerIterConfig::default(),
            epsilon_adagrad: 1e-8,
            seed: 0,
            spectrum_stride: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if !(self.epsilon_adagrad > 0.0) {
            return Err(Error::Config(format!(
                "epsilon_adagrad must be positive, got {}",
                self.epsilon_adagrad
            )));
        }
        if self.spectrum_stride == 0 {
            return Err(Error::Config("spectrum_stride must be at least 1".into()));
        }
        self.power_cfg.validate()
    }

    /// True when `eta` violates `eta < min(1/L_x, 1/L_y, 1/(sqrt2 L_z))` for
    /// an untransformed method.
    pub fn step_size_exceeds_bound(&self, problem: &ProblemInstance) -> bool {
        !self.method.uses_transform() && self.eta >= problem.constants().gda_step_bound()
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub z: PointZ,
    pub t: usize,
    /// Running sums of squared (noisy) gradient components.
    pub accum_x: DVector<f64>,
    pub accum_y: DVector<f64>,
    rng: ChaCha8Rng,
}

impl OptimizerState {
    pub fn new(z0: PointZ, seed: u64) -> Self {
        let (k, d) = (z0.k(), z0.d());
        Self {
            z: z0,
            t: 0,
            accum_x: DVector::zeros(k),
            accum_y: DVector::zeros(d),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// What one step saw and did.
#[derive(Clone, Debug)]
pub struct StepReport {
    /// Noise-free gradient at the pre-step iterate.
    pub grad_x: DVector<f64>,
    pub grad_y: DVector<f64>,
    pub curvature: Option<ExtremeCurvature>,
    pub displacement: f64,
}

/// Gradient (and curvature, when requested) at one iterate.
#[derive(Clone, Debug)]
pub(crate) struct PointEval {
    pub grad_x: DVector<f64>,
    pub grad_y: DVector<f64>,
    pub curvature: Option<ExtremeCurvature>,
}

impl PointEval {
    pub fn at(problem: &ProblemInstance, z: &PointZ, cfg: &OptimizerConfig, with_curvature: bool) -> Result<Self> {
        let (grad_x, grad_y) = problem.gradient_at(z)?;
        let curvature = if with_curvature {
            Some(extreme_curvature_with_gradient(
                problem,
                z,
                (&grad_x, &grad_y),
                cfg.curvature_method,
                &cfg.power_cfg,
            )?)
        } else {
            None
        };
        Ok(Self {
            grad_x,
            grad_y,
            curvature,
        })
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.grad_x.norm_squared() + self.grad_y.norm_squared()
    }
}

#[derive(Clone, Copy)]
struct UpdateRule {
    transform: bool,
    curvature: bool,
}

impl From<Method> for UpdateRule {
    fn from(m: Method) -> Self {
        Self {
            transform: m.uses_transform(),
            curvature: m.uses_curvature(),
        }
    }
}

/// Add the current squared gradients to the accumulators and return the
/// diagonals `1 / sqrt(accum + eps)` of the `x` and `y` transforms.
pub fn adagrad_transform(
    state: &mut OptimizerState,
    grad_x: &DVector<f64>,
    grad_y: &DVector<f64>,
    epsilon: f64,
) -> (DVector<f64>, DVector<f64>) {
    state.accum_x += grad_x.component_mul(grad_x);
    state.accum_y += grad_y.component_mul(grad_y);
    let inv_sqrt = |acc: &DVector<f64>| acc.map(|a| 1.0 / (a + epsilon).sqrt());
    (inv_sqrt(&state.accum_x), inv_sqrt(&state.accum_y))
}

fn apply_update(state: &mut OptimizerState, cfg: &OptimizerConfig, eval: &PointEval, rule: UpdateRule) -> Result<f64> {
    let mut gx = eval.grad_x.clone();
    let mut gy = eval.grad_y.clone();
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        for g in gx.iter_mut().chain(gy.iter_mut()) {
            *g += noise.sample(&mut state.rng);
        }
    }
    let (mut x, mut y) = if rule.transform {
        let (ax, by) = adagrad_transform(state, &gx, &gy, cfg.epsilon_adagrad);
        (
            &state.z.x - ax.component_mul(&gx) * cfg.eta,
            &state.z.y + by.component_mul(&gy) * cfg.eta,
        )
    } else {
        (&state.z.x - gx * cfg.eta, &state.z.y + gy * cfg.eta)
    };
    if rule.curvature {
        let curv = eval
            .curvature
            .as_ref()
            .expect("curvature requested for a curvature update");
        // Skipping the zero direction keeps the step bit-identical to GDA.
        if !curv.is_zero() {
            x += &curv.v_minus;
            y += &curv.v_plus;
        }
    }
    let next = PointZ::from_vectors(x, y);
    if !next.is_finite() {
        return Err(Error::Evaluation(format!(
            "step {} produced a non-finite iterate",
            state.t
        )));
    }
    let displacement = next.distance(&state.z);
    state.z = next;
    state.t += 1;
    Ok(displacement)
}

fn step_with(
    problem: &ProblemInstance,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    rule: UpdateRule,
) -> Result<StepReport> {
    problem.check_shape(&state.z)?;
    let eval = PointEval::at(problem, &state.z, cfg, rule.curvature)?;
    let displacement = apply_update(state, cfg, &eval, rule)?;
    Ok(StepReport {
        grad_x: eval.grad_x,
        grad_y: eval.grad_y,
        curvature: eval.curvature,
        displacement,
    })
}

/// One simultaneous gradient descent/ascent step.
pub fn gda_step(problem: &ProblemInstance, state: &mut OptimizerState, cfg: &OptimizerConfig) -> Result<StepReport> {
    step_with(
        problem,
        state,
        cfg,
        UpdateRule {
            transform: false,
            curvature: false,
        },
    )
}

/// One GDA step plus the extreme curvature direction.
pub fn cesp_step(problem: &ProblemInstance, state: &mut OptimizerState, cfg: &OptimizerConfig) -> Result<StepReport> {
    step_with(
        problem,
        state,
        cfg,
        UpdateRule {
            transform: false,
            curvature: true,
        },
    )
}

/// Adagrad-transformed step; adds `v_z` unless `cfg.method` is plain
/// [`Method::Adagrad`].
pub fn transformed_cesp_step(
    problem: &ProblemInstance,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<StepReport> {
    step_with(
        problem,
        state,
        cfg,
        UpdateRule {
            transform: true,
            curvature: cfg.method != Method::Adagrad,
        },
    )
}

/// One step of `cfg.method`.
pub fn step(problem: &ProblemInstance, state: &mut OptimizerState, cfg: &OptimizerConfig) -> Result<StepReport> {
    step_with(problem, state, cfg, cfg.method.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    MaxIters,
    Diverged,
}

impl TerminalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalStatus::Converged => "converged",
            TerminalStatus::MaxIters => "max_iters",
            TerminalStatus::Diverged => "diverged",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: usize,
    pub z: PointZ,
    pub f: f64,
    pub grad_norm_sq: f64,
    pub lambda_min_x: Option<f64>,
    pub lambda_max_y: Option<f64>,
    pub curv_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    pub status: TerminalStatus,
    pub final_z: PointZ,
    pub iterations: usize,
    pub step_size_warning: bool,
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl TrajectoryRecord {
    /// `t,x1..xk,y1..yd,f,grad_norm_sq,lambda_min_x,lambda_max_y,curv_norm`;
    /// spectra left empty on rows where they were not computed.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let (k, d) = (self.final_z.k(), self.final_z.d());
        let mut header = vec!["t".to_string()];
        header.extend((1..=k).map(|i| format!("x{i}")));
        header.extend((1..=d).map(|i| format!("y{i}")));
        header.extend(["f", "grad_norm_sq", "lambda_min_x", "lambda_max_y", "curv_norm"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        for row in &self.rows {
            let mut cells = vec![row.t.to_string()];
            cells.extend(row.z.coords().map(format_float));
            cells.push(format_float(row.f));
            cells.push(format_float(row.grad_norm_sq));
            cells.push(opt(row.lambda_min_x));
            cells.push(opt(row.lambda_max_y));
            cells.push(opt(row.curv_norm));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TerminalOutcome {
    pub status: TerminalStatus,
    pub z: PointZ,
    pub iterations: usize,
    pub grad_norm_sq: f64,
    /// Spectrum at the terminal iterate, when it was computed there.
    pub lambda_min_x: Option<f64>,
    pub lambda_max_y: Option<f64>,
}

fn is_diverged(z: &PointZ) -> bool {
    !z.is_finite() || z.norm() > DIVERGENCE_RADIUS
}

/// Shared driver; `observe` sees every evaluated iterate, and `wants_spectrum`
/// decides whether a non-curvature method computes spectra at step `t`.
fn drive(
    problem: &ProblemInstance,
    z0: PointZ,
    cfg: &OptimizerConfig,
    wants_spectrum: impl Fn(usize) -> bool,
    mut observe: impl FnMut(usize, &PointZ, &PointEval) -> Result<()>,
) -> Result<TerminalOutcome> {
    cfg.validate()?;
    problem.check_shape(&z0)?;
    let rule = UpdateRule::from(cfg.method);
    let mut state = OptimizerState::new(z0, cfg.seed);
    loop {
        let t = state.t;
        let terminal = |status, state: &OptimizerState, eval: Option<&PointEval>| TerminalOutcome {
            status,
            z: state.z.clone(),
            iterations: state.t,
            grad_norm_sq: eval.map_or(f64::NAN, |e| e.grad_norm_sq()),
            lambda_min_x: eval.and_then(|e| e.curvature.as_ref().map(|c| c.lambda_x)),
            lambda_max_y: eval.and_then(|e| e.curvature.as_ref().map(|c| c.lambda_y)),
        };
        let with_curvature = rule.curvature || wants_spectrum(t);
        let eval = match PointEval::at(problem, &state.z, cfg, with_curvature) {
            Ok(e) => e,
            Err(Error::Evaluation(_)) => return Ok(terminal(TerminalStatus::Diverged, &state, None)),
            Err(e) => return Err(e),
        };
        observe(t, &state.z, &eval)?;
        if is_diverged(&state.z) {
            return Ok(terminal(TerminalStatus::Diverged, &state, Some(&eval)));
        }
        let flat = eval.grad_norm_sq() < cfg.grad_tol;
        let fixed = !rule.curvature || eval.curvature.as_ref().is_some_and(|c| c.is_zero());
        if flat && fixed {
            return Ok(terminal(TerminalStatus::Converged, &state, Some(&eval)));
        }
        if t >= cfg.max_iters {
            return Ok(terminal(TerminalStatus::MaxIters, &state, Some(&eval)));
        }
        match apply_update(&mut state, cfg, &eval, rule) {
            Ok(_) => {}
            Err(Error::Evaluation(_)) => return Ok(terminal(TerminalStatus::Diverged, &state, Some(&eval))),
            Err(e) => return Err(e),
        }
    }
}

fn warn_step_size(problem: &ProblemInstance, cfg: &OptimizerConfig) -> bool {
    let exceeds = cfg.step_size_exceeds_bound(problem);
    if exceeds {
        warn!(
            "eta = {} is not below min(1/L_x, 1/L_y, 1/(sqrt2 L_z)) = {} for problem '{}'",
            cfg.eta,
            problem.constants().gda_step_bound(),
            problem.name()
        );
    }
    exceeds
}

/// Run `cfg.method` from `z0`, recording one row per iterate.
///
/// Stops when `|grad f|^2 < grad_tol` (curvature methods additionally need
/// `v_z = 0`, i.e. a fixed point of their update), at `max_iters`, or once
/// `|z| > 1e6` or an evaluation turns non-finite.
pub fn run_trajectory(problem: &ProblemInstance, z0: PointZ, cfg: &OptimizerConfig) -> Result<TrajectoryRecord> {
    let step_size_warning = warn_step_size(problem, cfg);
    let mut rows = Vec::new();
    let stride = cfg.spectrum_stride.max(1);
    let outcome = drive(
        problem,
        z0,
        cfg,
        |t| t % stride == 0,
        |t, z, eval| {
            let curv = eval.curvature.as_ref();
            rows.push(TrajectoryRow {
                t,
                z: z.clone(),
                f: problem.value_at(z).unwrap_or(f64::NAN),
                grad_norm_sq: eval.grad_norm_sq(),
                lambda_min_x: curv.map(|c| c.lambda_x),
                lambda_max_y: curv.map(|c| c.lambda_y),
                curv_norm: curv.map(|c| c.norm()),
            });
            Ok(())
        },
    )?;
    Ok(TrajectoryRecord {
        rows,
        status: outcome.status,
        final_z: outcome.z,
        iterations: outcome.iterations,
        step_size_warning,
    })
}

/// As [`run_trajectory`] without per-step rows.
pub fn run_to_terminal(problem: &ProblemInstance, z0: PointZ, cfg: &OptimizerConfig) -> Result<TerminalOutcome> {
    drive(problem, z0, cfg, |_| false, |_, _, _| Ok(()))
}
