//! Stationary-point classification and checks on the update maps.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::basin::GridSpec;
use crate::curvature::{extreme_curvature, ExtremeCurvature};
use crate::dynamics::{cesp_step, gda_step, OptimizerConfig, OptimizerState};
use crate::linalg::{general_eigenvalues, symmetric_extremes};
use crate::problems::{PointZ, ProblemInstance};
use crate::{Error, Result};

/// Default tolerance for gradient norms and eigenvalue margins.
pub const DEFAULT_TOL: f64 = 1e-6;

/// A one-step displacement below this counts as a fixed point in scans.
pub const FIXED_POINT_TOL: f64 = 1e-9;

/// Jacobian of the GDA vector field `(-grad_x f, grad_y f)`:
/// `[[-H_xx, -H_xy], [H_xy^T, H_yy]]`.
pub fn dynamics_jacobian(problem: &ProblemInstance, z: &PointZ) -> Result<DMatrix<f64>> {
    problem.check_shape(z)?;
    let h = problem.hessian_blocks_at(z)?;
    let (k, d) = (problem.k(), problem.d());
    let mut j = DMatrix::zeros(k + d, k + d);
    j.view_mut((0, 0), (k, k)).copy_from(&(-&h.xx));
    j.view_mut((0, k), (k, d)).copy_from(&(-&h.xy));
    j.view_mut((k, 0), (d, k)).copy_from(&h.xy.transpose());
    j.view_mut((k, k), (d, d)).copy_from(&h.yy);
    Ok(j)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    LocallyOptimalSaddle,
    StableUndesired,
    UnstableStationary,
    NotStationary,
    Degenerate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::LocallyOptimalSaddle => "locally_optimal_saddle",
            Verdict::StableUndesired => "stable_undesired",
            Verdict::UnstableStationary => "unstable_stationary",
            Verdict::NotStationary => "not_stationary",
            Verdict::Degenerate => "degenerate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Verdict::LocallyOptimalSaddle,
            Verdict::StableUndesired,
            Verdict::UnstableStationary,
            Verdict::NotStationary,
            Verdict::Degenerate,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn complex_pairs<S: Serializer>(eigs: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(eigs.iter().map(|c| [c.re, c.im]))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryPointReport {
    pub z: PointZ,
    pub grad_norm: f64,
    pub lambda_x_min: f64,
    pub lambda_y_max: f64,
    /// Serialized as `[re, im]` pairs.
    #[serde(serialize_with = "complex_pairs")]
    pub jacobian_eigs: Vec<Complex64>,
    pub verdict: Verdict,
    /// `(lambda_x_min, -lambda_y_max)`; both positive at a locally optimal
    /// saddle.
    pub margins: (f64, f64),
    pub tol: f64,
}

impl StationaryPointReport {
    pub fn max_real_part(&self) -> f64 {
        self.jacobian_eigs
            .iter()
            .map(|c| c.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Classify `z` by its gradient, its extreme block curvatures and the
/// spectrum of [`dynamics_jacobian`].
///
/// Any test that lands within `tol` of its threshold gives
/// [`Verdict::Degenerate`] rather than a guess.
pub fn classify_point(problem: &ProblemInstance, z: &PointZ, tol: f64) -> Result<StationaryPointReport> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tol must be positive, got {tol}")));
    }
    problem.check_shape(z)?;
    problem.domain().check(z)?;
    let (gx, gy) = problem.gradient_at(z)?;
    let grad_norm = (gx.norm_squared() + gy.norm_squared()).sqrt();
    let h = problem.hessian_blocks_at(z)?;
    let (lambda_x_min, _) = symmetric_extremes(&h.xx);
    let (_, lambda_y_max) = symmetric_extremes(&h.yy);
    let jacobian_eigs = general_eigenvalues(&dynamics_jacobian(problem, z)?)?;
    let max_re = jacobian_eigs.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);

    let verdict = if !(grad_norm < tol) {
        Verdict::NotStationary
    } else if lambda_x_min > tol && lambda_y_max < -tol {
        Verdict::LocallyOptimalSaddle
    } else if lambda_x_min < -tol || lambda_y_max > tol {
        if max_re < -tol {
            Verdict::StableUndesired
        } else if max_re > tol {
            Verdict::UnstableStationary
        } else {
            Verdict::Degenerate
        }
    } else {
        Verdict::Degenerate
    };
    Ok(StationaryPointReport {
        z: z.clone(),
        grad_norm,
        lambda_x_min,
        lambda_y_max,
        jacobian_eigs,
        verdict,
        margins: (lambda_x_min, -lambda_y_max),
        tol,
    })
}

/// True iff every eigenvalue of `diag(a_x, a_y) J(z)` has real part below
/// `-tol`.
pub fn transformed_stability_check(
    problem: &ProblemInstance,
    z: &PointZ,
    transform: (&DVector<f64>, &DVector<f64>),
    tol: f64,
) -> Result<bool> {
    let (ax, ay) = transform;
    if ax.len() != problem.k() || ay.len() != problem.d() {
        return Err(Error::Shape(format!(
            "transform has blocks ({}, {}), problem expects ({}, {})",
            ax.len(),
            ay.len(),
            problem.k(),
            problem.d()
        )));
    }
    if !ax.iter().chain(ay.iter()).all(|a| *a > 0.0 && a.is_finite()) {
        return Err(Error::Value("transform entries must be positive".into()));
    }
    let diag = DVector::from_iterator(ax.len() + ay.len(), ax.iter().chain(ay.iter()).copied());
    let mut m = dynamics_jacobian(problem, z)?;
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row *= diag[i];
    }
    Ok(general_eigenvalues(&m)?.iter().all(|c| c.re < -tol))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeCheckResult {
    pub gamma: f64,
    pub z0: PointZ,
    pub z1: PointZ,
    /// `|z1 - z*| >= gamma`.
    pub escaped: bool,
}

/// Gradient norm below which [`escape_check`] accepts `z_star` as stationary.
const ESCAPE_STATIONARY_TOL: f64 = 1e-6;

/// One CESP step from `probe`, scored against the `gamma`-ball around
/// `z_star`.
pub fn escape_from(
    problem: &ProblemInstance,
    z_star: &PointZ,
    probe: &PointZ,
    gamma: f64,
    cfg: &OptimizerConfig,
) -> Result<EscapeCheckResult> {
    let mut state = OptimizerState::new(probe.clone(), cfg.seed);
    cesp_step(problem, &mut state, cfg)?;
    Ok(EscapeCheckResult {
        gamma,
        z0: probe.clone(),
        escaped: state.z.distance(z_star) >= gamma,
        z1: state.z,
    })
}

/// `n_probes` seeded points drawn uniformly from the `gamma`-ball around the
/// non-optimal stationary point `z_star`, each advanced by one CESP step.
pub fn escape_check(
    problem: &ProblemInstance,
    z_star: &PointZ,
    gamma: f64,
    n_probes: usize,
    cfg: &OptimizerConfig,
) -> Result<Vec<EscapeCheckResult>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    let curv = extreme_curvature(problem, z_star, cfg.curvature_method, &cfg.power_cfg)?;
    let (gx, gy) = problem.gradient_at(z_star)?;
    let grad_norm = (gx.norm_squared() + gy.norm_squared()).sqrt();
    if grad_norm >= ESCAPE_STATIONARY_TOL {
        return Err(Error::Precondition(format!(
            "{z_star} is not stationary (|grad f| = {grad_norm:e})"
        )));
    }
    if curv.is_zero() {
        return Err(Error::Precondition(format!(
            "no extreme curvature at {z_star}; nothing to escape along"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..n_probes)
        .map(|_| {
            let probe = sample_ball(&mut rng, z_star, gamma);
            escape_from(problem, z_star, &probe, gamma, cfg)
        })
        .collect()
}

/// Uniform sample from the closed ball of radius `r` around `center`.
pub fn sample_ball(rng: &mut impl Rng, center: &PointZ, r: f64) -> PointZ {
    let n = center.k() + center.d();
    let mut dir = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let norm = dir.norm();
    if norm > 0.0 {
        dir /= norm;
    }
    let radius = r * rng.random::<f64>().powf(1.0 / n as f64);
    PointZ::from_stacked(&(center.stacked() + dir * radius), center.k())
}

/// `min(mu_x / (sqrt2 rho_x), mu_y / (sqrt2 rho_y))` at a locally optimal
/// saddle; inside this radius the block Hessians keep their signs, so the
/// extreme curvature direction vanishes.
pub fn optimal_saddle_radius(problem: &ProblemInstance, z_star: &PointZ) -> Result<f64> {
    let report = classify_point(problem, z_star, DEFAULT_TOL)?;
    if report.verdict != Verdict::LocallyOptimalSaddle {
        return Err(Error::Precondition(format!(
            "{z_star} is {}, not a locally optimal saddle",
            report.verdict
        )));
    }
    let c = problem.constants();
    let (mu_x, mu_y) = report.margins;
    let s2 = std::f64::consts::SQRT_2;
    Ok((mu_x / (s2 * c.rho_x)).min(mu_y / (s2 * c.rho_y)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanCell {
    pub i: usize,
    pub j: usize,
    /// Newton-refined stationary point when the cell holds one, else the
    /// cell center.
    pub z: PointZ,
    pub refined: bool,
    pub cesp_displacement: f64,
    pub gda_displacement: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub grid: GridSpec,
    pub tol: f64,
    pub cells: Vec<ScanCell>,
    /// Cell indices `(i, j)` whose CESP displacement is below
    /// [`FIXED_POINT_TOL`].
    pub cesp_fixed: Vec<(usize, usize)>,
    pub gda_fixed: Vec<(usize, usize)>,
    pub locally_optimal: Vec<(usize, usize)>,
    /// GDA-stable stationary cells that are not locally optimal.
    pub venn_gap: Vec<(usize, usize)>,
    pub sets_equal: bool,
}

/// Newton's method on `grad f = 0` from the cell center; the root is kept
/// only if it stays within the cell.
fn refine_in_cell(problem: &ProblemInstance, grid: &GridSpec, i: usize, j: usize) -> Option<PointZ> {
    let (cx, cy) = grid.center(i, j);
    let (hx, hy) = (grid.dx() / 2.0, grid.dy() / 2.0);
    let inside = |z: &PointZ| (z.x[0] - cx).abs() <= hx * 1.5 && (z.y[0] - cy).abs() <= hy * 1.5;
    let mut z = PointZ::new(vec![cx], vec![cy]);
    for _ in 0..50 {
        let (gx, gy) = problem.gradient_at(&z).ok()?;
        let g = DVector::from_vec(vec![gx[0], gy[0]]);
        if g.norm() < 1e-13 {
            break;
        }
        let h = problem.hessian_blocks_at(&z).ok()?.full();
        let delta = h.lu().solve(&g)?;
        z = PointZ::from_stacked(&(z.stacked() - delta), 1);
        if !inside(&z) {
            return None;
        }
    }
    let (gx, gy) = problem.gradient_at(&z).ok()?;
    let in_cell = (z.x[0] - cx).abs() <= hx && (z.y[0] - cy).abs() <= hy;
    (in_cell && (gx[0].hypot(gy[0]) < 1e-10)).then_some(z)
}

fn one_step_displacement(
    problem: &ProblemInstance,
    z: &PointZ,
    cfg: &OptimizerConfig,
    stepper: fn(&ProblemInstance, &mut OptimizerState, &OptimizerConfig) -> Result<crate::dynamics::StepReport>,
) -> Result<f64> {
    let mut state = OptimizerState::new(z.clone(), cfg.seed);
    Ok(stepper(problem, &mut state, cfg)?.displacement)
}

/// Scan a 2-D problem cell by cell, comparing CESP fixed points with
/// locally optimal saddles and with GDA fixed points.
///
/// Each cell is represented by the stationary point it contains (found by
/// Newton's method from the center) or, failing that, by its center.
pub fn stationarity_equivalence_scan(
    problem: &ProblemInstance,
    grid: &GridSpec,
    cfg: &OptimizerConfig,
    tol: f64,
) -> Result<EquivalenceReport> {
    if problem.k() != 1 || problem.d() != 1 {
        return Err(Error::Shape(format!(
            "grid scans need a 2-D problem, '{}' has blocks ({}, {})",
            problem.name(),
            problem.k(),
            problem.d()
        )));
    }
    grid.validate()?;
    let cfg = OptimizerConfig {
        noise_sigma: 0.0,
        ..cfg.clone()
    };
    let cells: Vec<ScanCell> = (0..grid.ny)
        .flat_map(|j| (0..grid.nx).map(move |i| (i, j)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, j)| {
            let refined = refine_in_cell(problem, grid, i, j);
            let z = refined.clone().unwrap_or_else(|| {
                let (x, y) = grid.center(i, j);
                PointZ::new(vec![x], vec![y])
            });
            Ok(ScanCell {
                i,
                j,
                cesp_displacement: one_step_displacement(problem, &z, &cfg, cesp_step)?,
                gda_displacement: one_step_displacement(problem, &z, &cfg, gda_step)?,
                verdict: classify_point(problem, &z, tol)?.verdict,
                refined: refined.is_some(),
                z,
            })
        })
        .collect::<Result<_>>()?;

    let select = |pred: &dyn Fn(&ScanCell) -> bool| -> Vec<(usize, usize)> {
        cells.iter().filter(|c| pred(c)).map(|c| (c.i, c.j)).collect()
    };
    let cesp_fixed = select(&|c| c.cesp_displacement < FIXED_POINT_TOL);
    let gda_fixed = select(&|c| c.gda_displacement < FIXED_POINT_TOL);
    let locally_optimal = select(&|c| c.verdict == Verdict::LocallyOptimalSaddle);
    let venn_gap = select(&|c| c.gda_displacement < FIXED_POINT_TOL && c.verdict == Verdict::StableUndesired);
    let sets_equal = cesp_fixed == locally_optimal;
    Ok(EquivalenceReport {
        grid: grid.clone(),
        tol,
        cells,
        cesp_fixed,
        gda_fixed,
        locally_optimal,
        venn_gap,
        sets_equal,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityStep {
    pub t: usize,
    pub f: f64,
    /// `f(x_{t+1}, y_t)`.
    pub f_x_next: f64,
    /// `f(x_t, y_{t+1})`.
    pub f_y_next: f64,
    pub decrease_bound: f64,
    pub increase_bound: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
}

impl MonotonicityStep {
    /// How far `f(x_{t+1}, y_t)` stays below its bound (negative = violated).
    pub fn decrease_margin(&self) -> f64 {
        self.decrease_bound - self.f_x_next
    }

    pub fn increase_margin(&self) -> f64 {
        self.f_y_next - self.increase_bound
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityAudit {
    pub eta: f64,
    pub steps: Vec<MonotonicityStep>,
}

impl MonotonicityAudit {
    /// Steps whose decrease or increase bound fails by more than `slack`.
    pub fn violations(&self, slack: f64) -> Vec<usize> {
        self.steps
            .iter()
            .filter(|s| s.decrease_margin() < -slack || s.increase_margin() < -slack)
            .map(|s| s.t)
            .collect()
    }

    pub fn worst_margin(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.decrease_margin().min(s.increase_margin()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Run `steps` CESP steps from `z0` and record, per step,
///
/// ```text
/// f(x_{t+1}, y_t) <= f(z_t) - (eta/2) |grad_x f|^2 + lambda_x^3 / (24 rho_x^2)
/// f(x_t, y_{t+1}) >= f(z_t) + (eta/2) |grad_y f|^2 + lambda_y^3 / (24 rho_y^2)
/// ```
///
/// which hold whenever `eta` is at most the problem's
/// [`monotone_step_bound`](crate::SmoothnessConstants::monotone_step_bound).
pub fn decrease_increase_audit(
    problem: &ProblemInstance,
    z0: &PointZ,
    cfg: &OptimizerConfig,
    steps: usize,
) -> Result<MonotonicityAudit> {
    let cfg = OptimizerConfig {
        noise_sigma: 0.0,
        ..cfg.clone()
    };
    cfg.validate()?;
    let c = *problem.constants();
    let mut state = OptimizerState::new(z0.clone(), cfg.seed);
    let mut rows = Vec::with_capacity(steps);
    for _ in 0..steps {
        let t = state.t;
        let z_t = state.z.clone();
        let f = problem.value_at(&z_t)?;
        let report = cesp_step(problem, &mut state, &cfg)?;
        let curv: ExtremeCurvature = report.curvature.expect("cesp step computes curvature");
        let f_x_next = problem.value_at(&PointZ::from_vectors(state.z.x.clone(), z_t.y.clone()))?;
        let f_y_next = problem.value_at(&PointZ::from_vectors(z_t.x.clone(), state.z.y.clone()))?;
        rows.push(MonotonicityStep {
            t,
            f,
            f_x_next,
            f_y_next,
            decrease_bound: f - 0.5 * cfg.eta * report.grad_x.norm_squared()
                + curv.lambda_x.powi(3) / (24.0 * c.rho_x * c.rho_x),
            increase_bound: f
                + 0.5 * cfg.eta * report.grad_y.norm_squared()
                + curv.lambda_y.powi(3) / (24.0 * c.rho_y * c.rho_y),
            lambda_x: curv.lambda_x,
            lambda_y: curv.lambda_y,
        });
    }
    Ok(MonotonicityAudit {
        eta: cfg.eta,
        steps: rows,
    })
}
