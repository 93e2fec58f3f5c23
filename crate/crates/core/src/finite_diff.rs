//! Central finite differences.
//!
//! Second derivatives difference the gradient with a per-coordinate step
//! `cbrt(eps) * (1 + |z_i|)`; directional Hessian-vector products use
//! `sqrt(eps) * (1 + |z|) / |v|`.

use nalgebra::{DMatrix, DVector};

use crate::problems::{HessianBlocks, Objective};
use crate::Block;

pub fn coordinate_step(z_i: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + z_i.abs())
}

fn split(z: &DVector<f64>, k: usize) -> (DVector<f64>, DVector<f64>) {
    (z.rows(0, k).into_owned(), z.rows(k, z.len() - k).into_owned())
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Central-difference gradient of the value evaluator, stacked as `(x, y)`.
pub fn value_gradient(obj: &dyn Objective, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let k = x.len();
    let z = stack(x, y);
    DVector::from_iterator(
        z.len(),
        (0..z.len()).map(|j| {
            let h = coordinate_step(z[j]);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let (xp, yp) = split(&zp, k);
            let (xm, ym) = split(&zm, k);
            (obj.value(&xp, &yp) - obj.value(&xm, &ym)) / (zp[j] - zm[j])
        }),
    )
}

/// Columns `cols` of the full Hessian, differenced from the gradient.
/// Returns a `(k+d) x cols.len()` matrix.
pub fn hessian_columns(
    obj: &dyn Objective,
    x: &DVector<f64>,
    y: &DVector<f64>,
    cols: std::ops::Range<usize>,
) -> DMatrix<f64> {
    let k = x.len();
    let z = stack(x, y);
    let n = z.len();
    let mut out = DMatrix::zeros(n, cols.len());
    for (c, j) in cols.enumerate() {
        let h = coordinate_step(z[j]);
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[j] += h;
        zm[j] -= h;
        let (xp, yp) = split(&zp, k);
        let (xm, ym) = split(&zm, k);
        let (gxp, gyp) = obj.gradient(&xp, &yp);
        let (gxm, gym) = obj.gradient(&xm, &ym);
        let width = zp[j] - zm[j];
        let gp = stack(&gxp, &gyp);
        let gm = stack(&gxm, &gym);
        out.set_column(c, &((gp - gm) / width));
    }
    out
}

/// All three Hessian blocks from gradient differences; the full matrix is
/// symmetrized as `(H + H^T)/2` before splitting.
pub fn hessian_blocks(obj: &dyn Objective, x: &DVector<f64>, y: &DVector<f64>) -> HessianBlocks {
    let (k, d) = (x.len(), y.len());
    let h = hessian_columns(obj, x, y, 0..k + d);
    let h = (&h + h.transpose()) * 0.5;
    HessianBlocks {
        xx: h.view((0, 0), (k, k)).into_owned(),
        yy: h.view((k, k), (d, d)).into_owned(),
        xy: h.view((0, k), (k, d)).into_owned(),
    }
}

/// `d2f/d(block)^2 * v` as a central difference of the block gradient along `v`.
pub fn directional_hvp(
    obj: &dyn Objective,
    block: Block,
    x: &DVector<f64>,
    y: &DVector<f64>,
    v: &DVector<f64>,
) -> DVector<f64> {
    let znorm = (x.norm_squared() + y.norm_squared()).sqrt();
    let h = f64::EPSILON.sqrt() * (1.0 + znorm) / v.norm();
    let (plus, minus) = match block {
        Block::X => {
            let gp = obj.gradient(&(x + v * h), y).0;
            let gm = obj.gradient(&(x - v * h), y).0;
            (gp, gm)
        }
        Block::Y => {
            let gp = obj.gradient(x, &(y + v * h)).1;
            let gm = obj.gradient(x, &(y - v * h)).1;
            (gp, gm)
        }
    };
    (plus - minus) / (2.0 * h)
}
