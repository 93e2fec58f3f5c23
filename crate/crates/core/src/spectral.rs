//! Extreme eigenpairs of symmetric operators: exact at desk scale, or
//! matrix-free by power iteration on a shifted operator.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{canonicalize, require_square, symmetric_eigen};
use crate::problems::{PointZ, ProblemInstance};
use crate::{Block, Error, Result};

/// Largest matrix accepted by [`dense_extreme_eig`].
pub const DENSE_MAX_DIM: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extreme {
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub eigenvalue: f64,
    /// Unit norm, first significant component positive.
    pub eigenvector: DVector<f64>,
    /// `|M v - lambda v|`.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIterConfig {
    /// Shift in `I -/+ beta H`. `None` uses `1/L` of the block being probed.
    pub beta: Option<f64>,
    pub max_iters: usize,
    /// Stop once `|H v - (v^T H v) v|` falls below this.
    pub tol: f64,
    pub seed: u64,
    pub delta: f64,
}

impl Default for PowerIterConfig {
    fn default() -> Self {
        Self {
            beta: None,
            max_iters: 10_000,
            tol: 1e-8,
            seed: 0,
            delta: 0.1,
        }
    }
}

impl PowerIterConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(beta) = self.beta {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::Config(format!("beta must be positive, got {beta}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    /// Iterations sufficient to find `v^T H v <= -gamma/2` with probability
    /// `1 - delta` when `lambda_min(H) <= -gamma`:
    /// `ceil((L / gamma) * log(dim / delta^2))`.
    pub fn iteration_budget(l_block: f64, gamma: f64, dim: usize, delta: f64) -> usize {
        let n = (l_block / gamma) * (dim as f64 / (delta * delta)).ln();
        n.ceil().max(1.0) as usize
    }
}

/// Exact extreme eigenpair of a symmetric matrix.
pub fn dense_extreme_eig(m: &DMatrix<f64>, which: Extreme) -> Result<EigenPair> {
    require_square(m)?;
    let n = m.nrows();
    if n == 0 || n > DENSE_MAX_DIM {
        return Err(Error::Shape(format!(
            "dense eigensolver takes 1..={DENSE_MAX_DIM} rows, got {n}"
        )));
    }
    let asym = (m - m.transpose()).amax();
    if asym >= 1e-8 {
        return Err(Error::Shape(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let (values, vectors) = symmetric_eigen(&sym);
    let idx = match which {
        Extreme::Min => 0,
        Extreme::Max => n - 1,
    };
    let mut v = vectors.column(idx).into_owned();
    v.normalize_mut();
    canonicalize(&mut v);
    let eigenvalue = values[idx];
    let residual = (m * &v - &v * eigenvalue).norm();
    Ok(EigenPair {
        eigenvalue,
        eigenvector: v,
        residual,
        converged: true,
        iterations: 0,
    })
}

/// `d2f/d(block)^2 (z) * v`: exact when the problem provides Hessians,
/// otherwise a central difference of the gradient along `v`.
pub fn hvp(problem: &ProblemInstance, block: Block, z: &PointZ, v: &DVector<f64>) -> Result<DVector<f64>> {
    problem.check_shape(z)?;
    problem.hvp_at(block, z, v)
}

/// Power iteration on `I - beta H` (`which = Min`) or `I + beta H`
/// (`which = Max`) from a seeded random unit vector.
///
/// Each pass costs one product with `H`. The shift must keep the operator
/// positive semidefinite (`beta <= 1/|H|`), else the iteration may lock onto
/// the wrong end of the spectrum. A pair that exhausts `max_iters` is
/// returned with `converged = false` and its residual.
pub fn power_iteration_extreme<F>(
    mut apply_h: F,
    dim: usize,
    which: Extreme,
    beta: f64,
    cfg: &PowerIterConfig,
) -> Result<EigenPair>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::Shape("power iteration on an empty operator".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    let sign = match which {
        Extreme::Min => 1.0,
        Extreme::Max => -1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(&mut rng)));
    v.normalize_mut();

    let mut iterations = 0;
    loop {
        let hv = apply_h(&v)?;
        if hv.len() != dim {
            return Err(Error::Shape(format!(
                "operator returned length {}, expected {dim}",
                hv.len()
            )));
        }
        let rayleigh = v.dot(&hv);
        let residual = (&hv - &v * rayleigh).norm();
        let converged = residual < cfg.tol;
        if converged || iterations >= cfg.max_iters {
            let mut eigenvector = v;
            canonicalize(&mut eigenvector);
            return Ok(EigenPair {
                eigenvalue: rayleigh,
                eigenvector,
                residual,
                converged,
                iterations,
            });
        }
        let next = &v - hv * (sign * beta);
        let norm = next.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Evaluation(format!(
                "shifted operator collapsed the iterate (norm {norm}); beta too large?"
            )));
        }
        v = next / norm;
        iterations += 1;
    }
}

/// Power iteration on a Hessian block of `problem` at `z` via HVPs.
pub fn block_extreme_power(
    problem: &ProblemInstance,
    block: Block,
    z: &PointZ,
    which: Extreme,
    cfg: &PowerIterConfig,
) -> Result<EigenPair> {
    let beta = cfg.beta.unwrap_or_else(|| 1.0 / problem.constants().l_block(block));
    power_iteration_extreme(|v| problem.hvp_at(block, z, v), problem.dim(block), which, beta, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{quadratic_saddle, toy_critical_points, toy_problem};

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(values))
    }

    #[test]
    fn dense_scaled_identity() {
        let pair = dense_extreme_eig(&(DMatrix::identity(2, 2) * 3.0), Extreme::Max).unwrap();
        assert!((pair.eigenvalue - 3.0).abs() < 1e-14);
        assert!((pair.eigenvector.norm() - 1.0).abs() < 1e-10);
        assert!(pair.residual < 1e-10);
    }

    #[test]
    fn dense_origin_hessian_min() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 4.0, 4.0, 2.0]);
        let pair = dense_extreme_eig(&m, Extreme::Min).unwrap();
        // lambda^2 - 6 lambda - 8 = 0
        assert!((pair.eigenvalue - (3.0 - 17.0f64.sqrt())).abs() < 1e-12);
        assert!(pair.residual < 1e-10);
    }

    #[test]
    fn dense_diagonal_min() {
        let pair = dense_extreme_eig(&diag(&[-1.0, -3.0]), Extreme::Min).unwrap();
        assert_eq!(pair.eigenvalue, -3.0);
        assert_eq!(pair.eigenvector.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn dense_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(dense_extreme_eig(&m, Extreme::Min), Err(Error::Shape(_))));
    }

    #[test]
    fn hvp_examples() {
        let toy = toy_problem();
        let z = PointZ::new(vec![1.3], vec![-0.4]);
        let one = DVector::from_element(1, 1.0);
        assert_eq!(hvp(&toy, Block::X, &z, &one).unwrap()[0], 4.0);
        let origin = &toy_critical_points()[0];
        assert_eq!(hvp(&toy, Block::Y, origin, &one).unwrap()[0], 2.0);
        let q = quadratic_saddle(
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let five = DVector::from_element(1, 5.0);
        assert_eq!(hvp(&q, Block::X, &origin.clone(), &five).unwrap()[0], 10.0);
        let zero = DVector::from_element(1, 0.0);
        assert!(matches!(hvp(&toy, Block::X, &z, &zero), Err(Error::Value(_))));
    }

    #[test]
    fn power_diagonal_min() {
        let h = diag(&[-1.0, -3.0]);
        let cfg = PowerIterConfig {
            tol: 1e-10,
            ..Default::default()
        };
        let pair = power_iteration_extreme(|v| Ok(&h * v), 2, Extreme::Min, 0.25, &cfg).unwrap();
        assert!(pair.converged);
        assert!((pair.eigenvalue + 3.0).abs() < 1e-4);
        assert!(pair.eigenvector[0].abs() < 1e-4);
        assert!((pair.eigenvector[1].abs() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn power_scaled_identity_stops_immediately() {
        let h = DMatrix::identity(3, 3) * -2.5;
        for which in [Extreme::Min, Extreme::Max] {
            let pair = power_iteration_extreme(|v| Ok(&h * v), 3, which, 0.1, &PowerIterConfig::default()).unwrap();
            assert_eq!(pair.iterations, 0);
            assert!((pair.eigenvalue + 2.5).abs() < 1e-14);
            assert!(pair.residual < 1e-14);
        }
    }

    #[test]
    fn power_on_toy_y_block_at_optimal_saddle() {
        let toy = toy_problem();
        let z1 = &toy_critical_points()[1];
        let pair = block_extreme_power(&toy, Block::Y, z1, Extreme::Max, &PowerIterConfig::default()).unwrap();
        assert!((pair.eigenvalue + 4.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let h = diag(&[-1.0, -1.0 + 1e-9, 5.0]);
        let cfg = PowerIterConfig {
            max_iters: 3,
            tol: 1e-14,
            ..Default::default()
        };
        let pair = power_iteration_extreme(|v| Ok(&h * v), 3, Extreme::Min, 0.2, &cfg).unwrap();
        assert!(!pair.converged);
        assert_eq!(pair.iterations, 3);
        assert!(pair.residual > 0.0);
    }

    #[test]
    fn budget_formula() {
        // (4 / 0.5) * ln(10 / 0.01) = 8 * ln(1000)
        let n = PowerIterConfig::iteration_budget(4.0, 0.5, 10, 0.1);
        assert_eq!(n, (8.0 * 1000f64.ln()).ceil() as usize);
    }
}
