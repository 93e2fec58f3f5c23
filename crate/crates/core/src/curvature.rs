//! The extreme curvature direction `v_z = (v_minus, v_plus)`.
//!
//! With `(lambda_x, v_x)` the smallest eigenpair of `d2f/dx2` and
//! `(lambda_y, v_y)` the largest of `d2f/dy2`:
//!
//! ```text
//! v_minus = 1{lambda_x < 0} * lambda_x / (2 rho_x) * sgn(v_x . grad_x f) * v_x
//! v_plus  = 1{lambda_y > 0} * lambda_y / (2 rho_y) * sgn(v_y . grad_y f) * v_y
//! ```
//!
//! `sgn(0)` is taken as `+1`. The direction vanishes exactly when `x` sees no
//! negative curvature and `y` no positive curvature.

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::problems::{PointZ, ProblemInstance};
use crate::spectral::{block_extreme_power, dense_extreme_eig, EigenPair, Extreme, PowerIterConfig};
use crate::{Block, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureMethod {
    Dense,
    Power,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureSource {
    Dense,
    Power,
    /// Power iteration did not reach `10 * tol`; the direction was zeroed.
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtremeCurvature {
    pub v_minus: DVector<f64>,
    pub v_plus: DVector<f64>,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub source: CurvatureSource,
}

impl ExtremeCurvature {
    pub fn is_zero(&self) -> bool {
        self.v_minus.iter().chain(self.v_plus.iter()).all(|c| *c == 0.0)
    }

    pub fn norm(&self) -> f64 {
        (self.v_minus.norm_squared() + self.v_plus.norm_squared()).sqrt()
    }
}

/// `sgn` with `sgn(0) = +1`.
pub fn sign_or_plus(t: f64) -> f64 {
    if t < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Scaled, sign-adjusted `x` component. Zero unless `lambda_x < 0`.
pub fn minus_component(lambda_x: f64, v_x: &DVector<f64>, grad_x: &DVector<f64>, rho_x: f64) -> DVector<f64> {
    if lambda_x < 0.0 {
        v_x * (lambda_x / (2.0 * rho_x) * sign_or_plus(v_x.dot(grad_x)))
    } else {
        DVector::zeros(v_x.len())
    }
}

/// Scaled, sign-adjusted `y` component. Zero unless `lambda_y > 0`.
pub fn plus_component(lambda_y: f64, v_y: &DVector<f64>, grad_y: &DVector<f64>, rho_y: f64) -> DVector<f64> {
    if lambda_y > 0.0 {
        v_y * (lambda_y / (2.0 * rho_y) * sign_or_plus(v_y.dot(grad_y)))
    } else {
        DVector::zeros(v_y.len())
    }
}

/// Assemble `v_z` from the two extreme eigenpairs and the gradient at `z`.
pub fn assemble(
    problem: &ProblemInstance,
    x_pair: &EigenPair,
    y_pair: &EigenPair,
    grad: (&DVector<f64>, &DVector<f64>),
    source: CurvatureSource,
) -> ExtremeCurvature {
    let c = problem.constants();
    ExtremeCurvature {
        v_minus: minus_component(x_pair.eigenvalue, &x_pair.eigenvector, grad.0, c.rho_x),
        v_plus: plus_component(y_pair.eigenvalue, &y_pair.eigenvector, grad.1, c.rho_y),
        lambda_x: x_pair.eigenvalue,
        lambda_y: y_pair.eigenvalue,
        source,
    }
}

/// Extreme curvature direction at `z`.
pub fn extreme_curvature(
    problem: &ProblemInstance,
    z: &PointZ,
    method: CurvatureMethod,
    cfg: &PowerIterConfig,
) -> Result<ExtremeCurvature> {
    problem.check_shape(z)?;
    let grad = problem.gradient_at(z)?;
    extreme_curvature_with_gradient(problem, z, (&grad.0, &grad.1), method, cfg)
}

/// As [`extreme_curvature`], reusing a gradient the caller already holds.
pub fn extreme_curvature_with_gradient(
    problem: &ProblemInstance,
    z: &PointZ,
    grad: (&DVector<f64>, &DVector<f64>),
    method: CurvatureMethod,
    cfg: &PowerIterConfig,
) -> Result<ExtremeCurvature> {
    match method {
        CurvatureMethod::Dense => {
            let h = problem.hessian_blocks_at(z)?;
            let x_pair = dense_extreme_eig(&h.xx, Extreme::Min)?;
            let y_pair = dense_extreme_eig(&h.yy, Extreme::Max)?;
            Ok(assemble(problem, &x_pair, &y_pair, grad, CurvatureSource::Dense))
        }
        CurvatureMethod::Power => {
            let x_cfg = PowerIterConfig {
                seed: crate::seed::derive(cfg.seed, 0),
                ..*cfg
            };
            let y_cfg = PowerIterConfig {
                seed: crate::seed::derive(cfg.seed, 1),
                ..*cfg
            };
            let x_pair = block_extreme_power(problem, Block::X, z, Extreme::Min, &x_cfg)?;
            let y_pair = block_extreme_power(problem, Block::Y, z, Extreme::Max, &y_cfg)?;
            let limit = 10.0 * cfg.tol;
            if x_pair.residual > limit || y_pair.residual > limit {
                warn!(
                    "power iteration at {z} left residuals ({:e}, {:e}) above {limit:e}; curvature step dropped",
                    x_pair.residual, y_pair.residual
                );
                return Ok(ExtremeCurvature {
                    v_minus: DVector::zeros(problem.k()),
                    v_plus: DVector::zeros(problem.d()),
                    lambda_x: x_pair.eigenvalue,
                    lambda_y: y_pair.eigenvalue,
                    source: CurvatureSource::None,
                });
            }
            Ok(assemble(problem, &x_pair, &y_pair, grad, CurvatureSource::Power))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{quadratic_saddle, toy_critical_points, toy_problem};
    use nalgebra::DMatrix;

    #[test]
    fn zero_at_optimal_saddle() {
        let toy = toy_problem().with_rho(1.0, 1.0).unwrap();
        let z1 = &toy_critical_points()[1];
        for method in [CurvatureMethod::Dense, CurvatureMethod::Power] {
            let c = extreme_curvature(&toy, z1, method, &PowerIterConfig::default()).unwrap();
            assert!(c.is_zero());
            assert_eq!(c.lambda_x, 4.0);
            assert!((c.lambda_y + 4.0 * 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_plus_step_at_origin() {
        let toy = toy_problem().with_rho(1.0, 1.0).unwrap();
        let c = extreme_curvature(
            &toy,
            &toy_critical_points()[0],
            CurvatureMethod::Dense,
            &Default::default(),
        )
        .unwrap();
        assert_eq!(c.v_plus[0], 1.0);
        assert_eq!(c.v_minus[0], 0.0);
        assert_eq!(c.source, CurvatureSource::Dense);
    }

    #[test]
    fn quadratic_family_has_no_extreme_curvature() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let q = quadratic_saddle(one.clone(), one, DMatrix::zeros(1, 1)).unwrap();
        let c = extreme_curvature(
            &q,
            &PointZ::new(vec![2.0], vec![-7.0]),
            CurvatureMethod::Dense,
            &Default::default(),
        )
        .unwrap();
        assert!(c.is_zero());
    }

    #[test]
    fn zero_eigenvalue_contributes_nothing() {
        let v = DVector::from_element(1, 1.0);
        let g = DVector::from_element(1, 3.0);
        assert_eq!(minus_component(0.0, &v, &g, 1.0)[0], 0.0);
        assert_eq!(plus_component(0.0, &v, &g, 1.0)[0], 0.0);
        assert_eq!(sign_or_plus(0.0), 1.0);
        assert_eq!(sign_or_plus(-0.0), 1.0);
    }

    #[test]
    fn non_converged_power_gives_no_direction() {
        // 1x1 blocks converge at once; use a 2-D block, no budget and a
        // tolerance below round-off.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0 + 1e-12]);
        let b = DMatrix::from_element(1, 1, 1.0);
        let q = quadratic_saddle(a, b, DMatrix::zeros(2, 1)).unwrap();
        let cfg = PowerIterConfig {
            max_iters: 0,
            tol: 1e-300,
            ..Default::default()
        };
        let c = extreme_curvature(
            &q,
            &PointZ::new(vec![0.3, 0.1], vec![0.2]),
            CurvatureMethod::Power,
            &cfg,
        )
        .unwrap();
        assert_eq!(c.source, CurvatureSource::None);
        assert!(c.is_zero());
    }
}
