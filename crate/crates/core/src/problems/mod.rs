//! Two-block objectives `f(x, y)` with derivatives and declared smoothness
//! constants.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::finite_diff;
use crate::{Block, Error, Result};

mod quadratic;
mod robust;
mod toy;

pub use quadratic::{format_matrix, parse_matrix, quadratic_saddle};
pub use robust::{robust_mlp_problem, RobustMlpParams, SyntheticDataset};
pub use toy::{toy_critical_points, toy_problem};

/// A point `z = (x, y)`: `x` is minimized, `y` is maximized.
#[derive(Clone, Debug, PartialEq)]
pub struct PointZ {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl PointZ {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            x: DVector::from_vec(x),
            y: DVector::from_vec(y),
        }
    }

    pub fn from_vectors(x: DVector<f64>, y: DVector<f64>) -> Self {
        Self { x, y }
    }

    /// Split a stacked `(x, y)` vector after the first `k` entries.
    pub fn from_stacked(z: &DVector<f64>, k: usize) -> Self {
        let x = z.rows(0, k).into_owned();
        let y = z.rows(k, z.len() - k).into_owned();
        Self { x, y }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.x.len() + self.y.len());
        z.rows_mut(0, self.x.len()).copy_from(&self.x);
        z.rows_mut(self.x.len(), self.y.len()).copy_from(&self.y);
        z
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }

    pub fn d(&self) -> usize {
        self.y.len()
    }

    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.y.norm_squared()).sqrt()
    }

    pub fn distance(&self, other: &PointZ) -> f64 {
        ((&self.x - &other.x).norm_squared() + (&self.y - &other.y).norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }

    pub fn block(&self, block: Block) -> &DVector<f64> {
        match block {
            Block::X => &self.x,
            Block::Y => &self.y,
        }
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().chain(self.y.iter()).copied()
    }
}

impl Serialize for PointZ {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("PointZ", 2)?;
        st.serialize_field("x", self.x.as_slice())?;
        st.serialize_field("y", self.y.as_slice())?;
        st.end()
    }
}

impl fmt::Display for PointZ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &DVector<f64>| v.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(", ");
        write!(f, "(x=[{}], y=[{}])", join(&self.x), join(&self.y))
    }
}

/// Gradient and Hessian Lipschitz constants and gradient bounds, valid over
/// the owning problem's domain box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub l_x: f64,
    pub l_y: f64,
    pub l_z: f64,
    pub rho_x: f64,
    pub rho_y: f64,
    pub rho_z: f64,
    pub ell_x: f64,
    pub ell_y: f64,
    pub ell_z: f64,
}

impl SmoothnessConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("l_x", self.l_x),
            ("l_y", self.l_y),
            ("l_z", self.l_z),
            ("rho_x", self.rho_x),
            ("rho_y", self.rho_y),
            ("rho_z", self.rho_z),
            ("ell_x", self.ell_x),
            ("ell_y", self.ell_y),
            ("ell_z", self.ell_z),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.l_x > self.l_z || self.l_y > self.l_z {
            return Err(Error::Config(format!(
                "block Lipschitz constants ({}, {}) exceed the joint constant {}",
                self.l_x, self.l_y, self.l_z
            )));
        }
        Ok(())
    }

    pub fn l_block(&self, block: Block) -> f64 {
        match block {
            Block::X => self.l_x,
            Block::Y => self.l_y,
        }
    }

    pub fn rho_block(&self, block: Block) -> f64 {
        match block {
            Block::X => self.rho_x,
            Block::Y => self.rho_y,
        }
    }

    /// `min(1/L_x, 1/L_y, 1/(sqrt(2) L_z))`: GDA step sizes below this keep
    /// the update map a diffeomorphism.
    pub fn gda_step_bound(&self) -> f64 {
        (1.0 / self.l_x)
            .min(1.0 / self.l_y)
            .min(1.0 / (std::f64::consts::SQRT_2 * self.l_z))
    }

    /// Largest step size for which each CESP step guarantees
    /// `f(x_{t+1}, y_t) <= f(z_t) - (eta/2)|grad_x f|^2 + lambda_x^3 / (24 rho_x^2)`
    /// and the mirrored increase in `y`.
    pub fn monotone_step_bound(&self) -> f64 {
        let side = |l: f64, rho: f64, ell: f64| ((9.0 * l * l + 48.0 * rho * ell).sqrt() - 3.0 * l) / (8.0 * rho * ell);
        side(self.l_x, self.rho_x, self.ell_x).min(side(self.l_y, self.rho_y, self.ell_y))
    }
}

/// Axis-aligned box over which the smoothness constants hold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; dim],
            upper: vec![upper; dim],
        }
    }

    pub fn check(&self, z: &PointZ) -> Result<()> {
        for (index, value) in z.coords().enumerate() {
            let (lower, upper) = (self.lower[index], self.upper[index]);
            if !(value >= lower && value <= upper) {
                return Err(Error::Domain {
                    index,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }
}

/// Second-derivative blocks `(d2f/dx2, d2f/dy2, d2f/dxdy)`; `xy` is `k x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianBlocks {
    pub xx: DMatrix<f64>,
    pub yy: DMatrix<f64>,
    pub xy: DMatrix<f64>,
}

impl HessianBlocks {
    pub fn block(&self, block: Block) -> &DMatrix<f64> {
        match block {
            Block::X => &self.xx,
            Block::Y => &self.yy,
        }
    }

    /// The full `(k+d) x (k+d)` Hessian.
    pub fn full(&self) -> DMatrix<f64> {
        let (k, d) = (self.xx.nrows(), self.yy.nrows());
        let mut h = DMatrix::zeros(k + d, k + d);
        h.view_mut((0, 0), (k, k)).copy_from(&self.xx);
        h.view_mut((k, k), (d, d)).copy_from(&self.yy);
        h.view_mut((0, k), (k, d)).copy_from(&self.xy);
        h.view_mut((k, 0), (d, k)).copy_from(&self.xy.transpose());
        h
    }

    pub fn is_finite(&self) -> bool {
        self.xx
            .iter()
            .chain(self.yy.iter())
            .chain(self.xy.iter())
            .all(|v| v.is_finite())
    }
}

/// Evaluators for a smooth objective. Implementations must be pure.
pub trait Objective: Send + Sync {
    fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>);

    /// Exact Hessian blocks, when the objective can provide them.
    fn hessian_blocks(&self, _x: &DVector<f64>, _y: &DVector<f64>) -> Option<HessianBlocks> {
        None
    }

    /// Hessian-vector product on one block. The default multiplies the exact
    /// blocks when available; `None` means "fall back to finite differences".
    fn block_hvp(&self, block: Block, x: &DVector<f64>, y: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        self.hessian_blocks(x, y).map(|h| h.block(block) * v)
    }
}

/// A named problem: objective, dimensions, constants and domain.
#[derive(Clone)]
pub struct ProblemInstance {
    name: String,
    k: usize,
    d: usize,
    objective: Arc<dyn Objective>,
    constants: SmoothnessConstants,
    domain: DomainBox,
    params: Vec<(String, String)>,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("k", &self.k)
            .field("d", &self.d)
            .field("constants", &self.constants)
            .field("params", &self.params)
            .finish()
    }
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        k: usize,
        d: usize,
        objective: Arc<dyn Objective>,
        constants: SmoothnessConstants,
        domain: DomainBox,
    ) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::Shape(format!(
                "block dimensions must be positive, got k={k}, d={d}"
            )));
        }
        if domain.lower.len() != k + d || domain.upper.len() != k + d {
            return Err(Error::Shape(format!(
                "domain box has {} coordinates, problem has {}",
                domain.lower.len(),
                k + d
            )));
        }
        constants.validate()?;
        Ok(Self {
            name: name.into(),
            k,
            d,
            objective,
            constants,
            domain,
            params: Vec::new(),
        })
    }

    pub fn with_params(mut self, params: Vec<(String, String)>) -> Self {
        self.params = params;
        self
    }

    /// Replace the Hessian Lipschitz constants that scale the curvature step.
    /// Values below the true constants enlarge the step beyond what the
    /// escape and decrease guarantees assume.
    pub fn with_rho(mut self, rho_x: f64, rho_y: f64) -> Result<Self> {
        self.constants.rho_x = rho_x;
        self.constants.rho_y = rho_y;
        self.constants.validate()?;
        self.params.push(("rho_x".into(), format!("{rho_x}")));
        self.params.push(("rho_y".into(), format!("{rho_y}")));
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self, block: Block) -> usize {
        match block {
            Block::X => self.k,
            Block::Y => self.d,
        }
    }

    pub fn constants(&self) -> &SmoothnessConstants {
        &self.constants
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn params(&self) -> &[(String, String)] {
        &self.params
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective.as_ref()
    }

    pub fn check_shape(&self, z: &PointZ) -> Result<()> {
        if z.k() != self.k || z.d() != self.d {
            return Err(Error::Shape(format!(
                "point has blocks ({}, {}), problem '{}' expects ({}, {})",
                z.k(),
                z.d(),
                self.name,
                self.k,
                self.d
            )));
        }
        if !z.is_finite() {
            return Err(Error::Value(format!("point {z} has non-finite coordinates")));
        }
        Ok(())
    }

    fn check_point(&self, z: &PointZ) -> Result<()> {
        self.check_shape(z)?;
        self.domain.check(z)
    }

    pub fn evaluate(&self, z: &PointZ) -> Result<f64> {
        self.check_point(z)?;
        self.value_at(z)
    }

    pub fn gradient(&self, z: &PointZ) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_point(z)?;
        self.gradient_at(z)
    }

    /// Exact blocks when the objective supplies them, otherwise central
    /// differences of the gradient followed by symmetrization.
    pub fn hessian_blocks(&self, z: &PointZ) -> Result<HessianBlocks> {
        self.check_point(z)?;
        self.hessian_blocks_at(z)
    }

    /// Value without the domain check. The dynamics use these: the box
    /// scopes the declared constants, not where `f` is defined.
    pub fn value_at(&self, z: &PointZ) -> Result<f64> {
        let v = self.objective.value(&z.x, &z.y);
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("f{z} = {v}")));
        }
        Ok(v)
    }

    pub fn gradient_at(&self, z: &PointZ) -> Result<(DVector<f64>, DVector<f64>)> {
        let (gx, gy) = self.objective.gradient(&z.x, &z.y);
        if gx.len() != self.k || gy.len() != self.d {
            return Err(Error::Shape(format!(
                "gradient evaluator returned blocks ({}, {})",
                gx.len(),
                gy.len()
            )));
        }
        if !gx.iter().chain(gy.iter()).all(|v| v.is_finite()) {
            return Err(Error::Evaluation(format!("gradient at {z} is not finite")));
        }
        Ok((gx, gy))
    }

    pub fn hessian_blocks_at(&self, z: &PointZ) -> Result<HessianBlocks> {
        let blocks = match self.objective.hessian_blocks(&z.x, &z.y) {
            Some(h) => h,
            None => finite_diff::hessian_blocks(self.objective.as_ref(), &z.x, &z.y),
        };
        if !blocks.is_finite() {
            return Err(Error::Evaluation(format!("Hessian at {z} is not finite")));
        }
        Ok(blocks)
    }

    /// `d2f/d(block)^2 * v`, matrix-free when the objective has no exact
    /// Hessian.
    pub fn hvp_at(&self, block: Block, z: &PointZ, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim(block) {
            return Err(Error::Shape(format!(
                "vector of length {} for block {:?} of dimension {}",
                v.len(),
                block,
                self.dim(block)
            )));
        }
        if v.iter().all(|c| *c == 0.0) {
            return Err(Error::Value("Hessian-vector product with the zero vector".into()));
        }
        let hv = match self.objective.block_hvp(block, &z.x, &z.y, v) {
            Some(hv) => hv,
            None => finite_diff::directional_hvp(self.objective.as_ref(), block, &z.x, &z.y, v),
        };
        if !hv.iter().all(|c| c.is_finite()) {
            return Err(Error::Evaluation(format!(
                "Hessian-vector product at {z} is not finite"
            )));
        }
        Ok(hv)
    }
}

/// Check that a square matrix is symmetric positive definite.
pub(crate) fn require_spd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "{name} is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Value(format!("{name} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::Value(format!("{name} is not positive definite")));
    }
    Ok(())
}
