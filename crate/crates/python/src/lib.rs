//! Python bindings: problems, curvature, classification and trajectories.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cesp_core::analysis::{self, DEFAULT_TOL};
use cesp_core::basin::{self, GridSpec, DEFAULT_MATCH_RADIUS};
use cesp_core::curvature::{self, CurvatureMethod, CurvatureSource};
use cesp_core::dynamics::{self, Method, OptimizerConfig, TrajectoryRecord};
use cesp_core::problems::{self, PointZ, RobustMlpParams};
use cesp_core::spectral::{self, Extreme, PowerIterConfig};
use cesp_core::ProblemInstance;

fn py_err(e: cesp_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>, what: &str) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn point(x: Vec<f64>, y: Vec<f64>) -> PointZ {
    PointZ::new(x, y)
}

/// A smooth min-max objective `f(x, y)` with its smoothness constants.
#[pyclass(frozen, name = "Problem")]
struct Problem {
    inner: ProblemInstance,
}

#[pymethods]
impl Problem {
    /// The two-dimensional toy objective; `rho_x`/`rho_y` override the
    /// declared Hessian Lipschitz constants.
    #[staticmethod]
    #[pyo3(signature = (rho_x=None, rho_y=None))]
    fn toy(rho_x: Option<f64>, rho_y: Option<f64>) -> PyResult<Self> {
        let toy = problems::toy_problem();
        let inner = match (rho_x, rho_y) {
            (None, None) => toy,
            (x, y) => {
                let c = *toy.constants();
                toy.with_rho(x.unwrap_or(c.rho_x), y.unwrap_or(c.rho_y))
                    .map_err(py_err)?
            }
        };
        Ok(Self { inner })
    }

    /// `x'Ax/2 + x'Cy - y'By/2` with `A`, `B` symmetric positive definite.
    #[staticmethod]
    fn quad(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = problems::quadratic_saddle(matrix(a, "a")?, matrix(b, "b")?, matrix(c, "c")?).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (seed=0, n_samples=40, n_features=2, n_hidden=4, lambda_reg=1.0))]
    fn robust_mlp(seed: u64, n_samples: usize, n_features: usize, n_hidden: usize, lambda_reg: f64) -> PyResult<Self> {
        let params = RobustMlpParams {
            seed,
            n_samples,
            n_features,
            n_hidden,
            lambda_reg,
        };
        Ok(Self {
            inner: problems::robust_mlp_problem(params).map_err(py_err)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn params(&self) -> Vec<(String, String)> {
        self.inner.params().to_vec()
    }

    fn evaluate(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&point(x, y)).map_err(py_err)
    }

    /// `(grad_x, grad_y)`.
    fn gradient(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (gx, gy) = self.inner.gradient(&point(x, y)).map_err(py_err)?;
        Ok((gx.as_slice().to_vec(), gy.as_slice().to_vec()))
    }

    /// Dict with `xx`, `xy` and `yy` blocks as lists of rows.
    fn hessian_blocks<'py>(&self, py: Python<'py>, x: Vec<f64>, y: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let h = self.inner.hessian_blocks(&point(x, y)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("xx", rows_of(&h.xx))?;
        d.set_item("xy", rows_of(&h.xy))?;
        d.set_item("yy", rows_of(&h.yy))?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(name={:?}, k={}, d={})",
            self.inner.name(),
            self.inner.k(),
            self.inner.d()
        )
    }
}

fn parse_curvature(s: &str) -> PyResult<CurvatureMethod> {
    match s {
        "dense" => Ok(CurvatureMethod::Dense),
        "power" => Ok(CurvatureMethod::Power),
        other => Err(PyValueError::new_err(format!("unknown curvature method '{other}'"))),
    }
}

/// Optimizer settings; validated on construction.
#[pyclass(frozen, name = "Config")]
struct Config {
    inner: OptimizerConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (
        method="gda", eta=1e-3, max_iters=50_000, grad_tol=1e-10, noise_sigma=0.0,
        curvature="dense", seed=0, epsilon_adagrad=1e-8, spectrum_stride=10, power_max_iters=10_000,
        power_tol=1e-8,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        method: &str,
        eta: f64,
        max_iters: usize,
        grad_tol: f64,
        noise_sigma: f64,
        curvature: &str,
        seed: u64,
        epsilon_adagrad: f64,
        spectrum_stride: usize,
        power_max_iters: usize,
        power_tol: f64,
    ) -> PyResult<Self> {
        let inner = OptimizerConfig {
            method: method.parse::<Method>().map_err(py_err)?,
            eta,
            max_iters,
            grad_tol,
            noise_sigma,
            curvature_method: parse_curvature(curvature)?,
            power_cfg: PowerIterConfig {
                max_iters: power_max_iters,
                tol: power_tol,
                seed,
                ..Default::default()
            },
            epsilon_adagrad,
            seed,
            spectrum_stride,
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn max_iters(&self) -> usize {
        self.inner.max_iters
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(method={:?}, eta={}, max_iters={}, grad_tol={}, noise_sigma={}, seed={})",
            self.inner.method.as_str(),
            self.inner.eta,
            self.inner.max_iters,
            self.inner.grad_tol,
            self.inner.noise_sigma,
            self.inner.seed
        )
    }
}

/// Result of `run_trajectory`.
#[pyclass(frozen, name = "Trajectory")]
struct Trajectory {
    inner: TrajectoryRecord,
}

#[pymethods]
impl Trajectory {
    /// `converged`, `max_iters` or `diverged`.
    #[getter]
    fn status(&self) -> &'static str {
        self.inner.status.as_str()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn final_point(&self) -> (Vec<f64>, Vec<f64>) {
        let z = &self.inner.final_z;
        (z.x.as_slice().to_vec(), z.y.as_slice().to_vec())
    }

    #[getter]
    fn step_size_warning(&self) -> bool {
        self.inner.step_size_warning
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }

    /// One dict per iterate; spectra are `None` where not computed.
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("t", r.t)?;
                d.set_item("x", r.z.x.as_slice().to_vec())?;
                d.set_item("y", r.z.y.as_slice().to_vec())?;
                d.set_item("f", r.f)?;
                d.set_item("grad_norm_sq", r.grad_norm_sq)?;
                d.set_item("lambda_min_x", r.lambda_min_x)?;
                d.set_item("lambda_max_y", r.lambda_max_y)?;
                d.set_item("curv_norm", r.curv_norm)?;
                Ok(d)
            })
            .collect()
    }

    /// The same CSV the `cesp trajectory` command writes.
    fn to_csv(&self) -> PyResult<String> {
        let mut out = Vec::new();
        self.inner
            .write_csv(&mut out)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(String::from_utf8(out).expect("CSV is ASCII"))
    }
}

/// Run `config` from `(x0, y0)` until convergence, divergence or the budget.
#[pyfunction]
#[pyo3(signature = (problem, x0, y0, config=None))]
fn run_trajectory(
    py: Python<'_>,
    problem: &Problem,
    x0: Vec<f64>,
    y0: Vec<f64>,
    config: Option<&Config>,
) -> PyResult<Trajectory> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let z0 = point(x0, y0);
    let inner = py
        .detach(|| dynamics::run_trajectory(&problem.inner, z0, &cfg))
        .map_err(py_err)?;
    Ok(Trajectory { inner })
}

/// Extreme curvature direction `(v_minus, v_plus)` with the block
/// eigenvalues it was built from.
#[pyfunction]
#[pyo3(signature = (problem, x, y, method="dense"))]
fn extreme_curvature<'py>(
    py: Python<'py>,
    problem: &Problem,
    x: Vec<f64>,
    y: Vec<f64>,
    method: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let c = curvature::extreme_curvature(
        &problem.inner,
        &point(x, y),
        parse_curvature(method)?,
        &Default::default(),
    )
    .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("v_minus", c.v_minus.as_slice().to_vec())?;
    d.set_item("v_plus", c.v_plus.as_slice().to_vec())?;
    d.set_item("lambda_x", c.lambda_x)?;
    d.set_item("lambda_y", c.lambda_y)?;
    let source = match c.source {
        CurvatureSource::Dense => Some("dense"),
        CurvatureSource::Power => Some("power"),
        CurvatureSource::None => None,
    };
    d.set_item("source", source)?;
    Ok(d)
}

/// Stationarity and stability report for `(x, y)`.
#[pyfunction]
#[pyo3(signature = (problem, x, y, tol=DEFAULT_TOL))]
fn classify_point<'py>(
    py: Python<'py>,
    problem: &Problem,
    x: Vec<f64>,
    y: Vec<f64>,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = analysis::classify_point(&problem.inner, &point(x, y), tol).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("verdict", r.verdict.as_str())?;
    d.set_item("grad_norm", r.grad_norm)?;
    d.set_item("lambda_x_min", r.lambda_x_min)?;
    d.set_item("lambda_y_max", r.lambda_y_max)?;
    d.set_item("margins", r.margins)?;
    let eigs: Vec<(f64, f64)> = r.jacobian_eigs.iter().map(|e| (e.re, e.im)).collect();
    d.set_item("jacobian_eigs", eigs)?;
    d.set_item("max_real_part", r.max_real_part())?;
    d.set_item("tol", r.tol)?;
    Ok(d)
}

/// Smallest (`which="min"`) or largest eigenpair of a symmetric matrix,
/// by dense decomposition or shifted power iteration.
#[pyfunction]
#[pyo3(signature = (m, which="min", method="dense", beta=None, seed=0, tol=1e-8, max_iters=10_000))]
#[allow(clippy::too_many_arguments)]
fn extreme_eig(
    m: Vec<Vec<f64>>,
    which: &str,
    method: &str,
    beta: Option<f64>,
    seed: u64,
    tol: f64,
    max_iters: usize,
) -> PyResult<(f64, Vec<f64>, bool)> {
    let m = matrix(m, "m")?;
    let which = match which {
        "min" => Extreme::Min,
        "max" => Extreme::Max,
        other => {
            return Err(PyValueError::new_err(format!(
                "which must be 'min' or 'max', got '{other}'"
            )))
        }
    };
    let pair = match parse_curvature(method)? {
        CurvatureMethod::Dense => spectral::dense_extreme_eig(&m, which),
        CurvatureMethod::Power => {
            let cfg = PowerIterConfig {
                beta,
                max_iters,
                tol,
                seed,
                ..Default::default()
            };
            let beta = beta.unwrap_or_else(|| 1.0 / m.norm().max(f64::MIN_POSITIVE));
            spectral::power_iteration_extreme(|v| Ok(&m * v), m.nrows(), which, beta, &cfg)
        }
    }
    .map_err(py_err)?;
    Ok((pair.eigenvalue, pair.eigenvector.as_slice().to_vec(), pair.converged))
}

/// Basin labels over a 2-D grid, row-major from `y_min` upward; `-1` marks
/// cells that reached no attractor.
#[pyfunction]
#[pyo3(signature = (problem, config, grid, attractors, match_radius=DEFAULT_MATCH_RADIUS))]
fn basin_raster(
    py: Python<'_>,
    problem: &Problem,
    config: &Config,
    grid: (f64, f64, f64, f64, usize, usize),
    attractors: Vec<(f64, f64)>,
    match_radius: f64,
) -> PyResult<Vec<i32>> {
    let (x_min, x_max, y_min, y_max, nx, ny) = grid;
    let grid = GridSpec::new(x_min, x_max, y_min, y_max, nx, ny).map_err(py_err)?;
    let attractors: Vec<PointZ> = attractors.into_iter().map(|(x, y)| point(vec![x], vec![y])).collect();
    let raster = py
        .detach(|| basin::basin_raster(&problem.inner, &config.inner, &grid, &attractors, match_radius))
        .map_err(py_err)?;
    Ok(raster.labels)
}

/// The toy's three critical points as `(x, y)` pairs.
#[pyfunction]
fn toy_critical_points() -> Vec<(f64, f64)> {
    problems::toy_critical_points()
        .iter()
        .map(|z| (z.x[0], z.y[0]))
        .collect()
}

#[pymodule]
fn cesp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Problem>()?;
    m.add_class::<Config>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(run_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(extreme_curvature, m)?)?;
    m.add_function(wrap_pyfunction!(classify_point, m)?)?;
    m.add_function(wrap_pyfunction!(extreme_eig, m)?)?;
    m.add_function(wrap_pyfunction!(basin_raster, m)?)?;
    m.add_function(wrap_pyfunction!(toy_critical_points, m)?)?;
    Ok(())
}
