use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{DomainBox, HessianBlocks, Objective, PointZ, ProblemInstance, SmoothnessConstants};

/// `f(x, y) = 2x^2 + y^2 + 4xy + (4/3)y^3 - (1/4)y^4`.
struct Toy;

impl Objective for Toy {
    fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let (x, y) = (x[0], y[0]);
        2.0 * x * x + y * y + 4.0 * x * y + 4.0 / 3.0 * y.powi(3) - 0.25 * y.powi(4)
    }

    fn gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (x, y) = (x[0], y[0]);
        (
            DVector::from_element(1, 4.0 * x + 4.0 * y),
            DVector::from_element(1, 2.0 * y + 4.0 * x + 4.0 * y * y - y.powi(3)),
        )
    }

    fn hessian_blocks(&self, _x: &DVector<f64>, y: &DVector<f64>) -> Option<HessianBlocks> {
        let y = y[0];
        Some(HessianBlocks {
            xx: DMatrix::from_element(1, 1, 4.0),
            yy: DMatrix::from_element(1, 1, 2.0 + 8.0 * y - 3.0 * y * y),
            xy: DMatrix::from_element(1, 1, 4.0),
        })
    }
}

const HALF_WIDTH: f64 = 6.0;

/// Constants of the toy objective over `[-6, 6]^2`.
///
/// * `L_x = |(4, 4)| = 4 sqrt(2)`.
/// * `L_y = max |(4, 2 + 8y - 3y^2)|`, attained at `y = -6` where `d2f/dy2 = -154`.
/// * `L_z` is the largest spectral norm of `[[4, 4], [4, h]]` for
///   `h` in `[-154, 22/3]`.
/// * `rho_y = rho_z = max |8 - 6y| = 44`. `d2f/dx2` is constant, so any
///   positive `rho_x` is valid; the joint constant 44 is declared.
/// * `ell_x = max |4x + 4y| = 48`, `ell_y = max |4x + 2y + 4y^2 - y^3| = 372`
///   at `(6, -6)`, and `ell_z = sqrt(ell_x^2 + ell_y^2)`.
fn toy_constants() -> SmoothnessConstants {
    let w = HALF_WIDTH;
    let hyy = |y: f64| 2.0 + 8.0 * y - 3.0 * y * y;
    // hyy is a downward parabola peaking at y = 4/3.
    let h_min = hyy(-w).min(hyy(w));
    let h_max = hyy(4.0 / 3.0);
    let spectral = |h: f64| ((4.0 + h).abs() + ((4.0 - h).powi(2) + 64.0).sqrt()) / 2.0;
    let l_y = (16.0 + h_min.abs().max(h_max.abs()).powi(2)).sqrt();
    let l_z = spectral(h_min).max(spectral(h_max));
    let grad_y = |x: f64, y: f64| 4.0 * x + 2.0 * y + 4.0 * y * y - y.powi(3);
    let ell_y = [grad_y(w, -w), grad_y(-w, w), grad_y(w, w), grad_y(-w, -w)]
        .into_iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let ell_x = 8.0 * w;
    SmoothnessConstants {
        l_x: 4.0 * std::f64::consts::SQRT_2,
        l_y,
        l_z,
        rho_x: 8.0 + 6.0 * w,
        rho_y: 8.0 + 6.0 * w,
        rho_z: 8.0 + 6.0 * w,
        ell_x,
        ell_y,
        ell_z: (ell_x * ell_x + ell_y * ell_y).sqrt(),
    }
}

/// The two-dimensional cubic-quartic example whose origin is a stable but
/// undesired stationary point of GDA.
pub fn toy_problem() -> ProblemInstance {
    ProblemInstance::new(
        "toy",
        1,
        1,
        Arc::new(Toy),
        toy_constants(),
        DomainBox::uniform(2, -HALF_WIDTH, HALF_WIDTH),
    )
    .expect("toy constants are valid")
}

/// The critical points `z0 = (0, 0)`, `z1 = (-2-sqrt2, 2+sqrt2)`,
/// `z2 = (-2+sqrt2, 2-sqrt2)`. Only `z1` is a locally optimal saddle.
pub fn toy_critical_points() -> [PointZ; 3] {
    let s = std::f64::consts::SQRT_2;
    [
        PointZ::new(vec![0.0], vec![0.0]),
        PointZ::new(vec![-2.0 - s], vec![2.0 + s]),
        PointZ::new(vec![-2.0 + s], vec![2.0 - s]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_constants() {
        let c = toy_constants();
        assert_eq!(c.rho_y, 44.0);
        assert_eq!(c.ell_x, 48.0);
        assert_eq!(c.ell_y, 372.0);
        assert!((c.l_y - (16.0f64 + 154.0 * 154.0).sqrt()).abs() < 1e-12);
        // spectral norm of [[4, 4], [4, -154]]
        assert!((c.l_z - (150.0 + (158.0f64 * 158.0 + 64.0).sqrt()) / 2.0).abs() < 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn gradient_at_golden_points() {
        let toy = toy_problem();
        for z in toy_critical_points() {
            let (gx, gy) = toy.gradient(&z).unwrap();
            assert!((gx[0].powi(2) + gy[0].powi(2)).sqrt() < 1e-12, "{z}");
        }
        let (gx, gy) = toy.gradient(&PointZ::new(vec![-3.0], vec![-1.0])).unwrap();
        assert_eq!((gx[0], gy[0]), (-16.0, -9.0));
    }
}
