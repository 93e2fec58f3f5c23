use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{require_spd, DomainBox, HessianBlocks, Objective, ProblemInstance, SmoothnessConstants};
use crate::{Error, Result};

/// `f = x^T A x / 2 - y^T B y / 2 + x^T C y`.
struct QuadraticSaddle {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl Objective for QuadraticSaddle {
    fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.a * x)) - 0.5 * y.dot(&(&self.b * y)) + x.dot(&(&self.c * y))
    }

    fn gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.a * x + &self.c * y, self.c.tr_mul(x) - &self.b * y)
    }

    fn hessian_blocks(&self, _x: &DVector<f64>, _y: &DVector<f64>) -> Option<HessianBlocks> {
        Some(HessianBlocks {
            xx: self.a.clone(),
            yy: -&self.b,
            xy: self.c.clone(),
        })
    }
}

const HALF_WIDTH: f64 = 10.0;

/// Strongly convex-concave quadratic whose unique stationary point, the
/// origin, is a locally optimal saddle.
///
/// The Hessian is constant, so every positive `rho` is a valid Hessian
/// Lipschitz constant; 1 is declared. Gradient bounds hold over `[-10, 10]^(k+d)`.
pub fn quadratic_saddle(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<ProblemInstance> {
    require_spd("A", &a)?;
    require_spd("B", &b)?;
    let (k, d) = (a.nrows(), b.nrows());
    if c.nrows() != k || c.ncols() != d {
        return Err(Error::Shape(format!(
            "C is {}x{}, expected {k}x{d}",
            c.nrows(),
            c.ncols()
        )));
    }
    let blocks = HessianBlocks {
        xx: a.clone(),
        yy: -&b,
        xy: c.clone(),
    };
    let full = blocks.full();
    let two_norm = |m: DMatrix<f64>| m.singular_values().max();
    let l_x = two_norm(full.rows(0, k).into_owned());
    let l_y = two_norm(full.rows(k, d).into_owned());
    // Guard against the last-bit disagreement between SVDs of a matrix and its row blocks.
    let l_z = two_norm(full).max(l_x).max(l_y);
    let radius = HALF_WIDTH * ((k + d) as f64).sqrt();
    let params = vec![
        ("a".to_string(), format_matrix(&a)),
        ("b".to_string(), format_matrix(&b)),
        ("c".to_string(), format_matrix(&c)),
    ];
    let constants = SmoothnessConstants {
        l_x,
        l_y,
        l_z,
        rho_x: 1.0,
        rho_y: 1.0,
        rho_z: 1.0,
        ell_x: (l_x * radius).max(f64::MIN_POSITIVE),
        ell_y: (l_y * radius).max(f64::MIN_POSITIVE),
        ell_z: (l_z * radius).max(f64::MIN_POSITIVE),
    };
    Ok(ProblemInstance::new(
        "quad",
        k,
        d,
        Arc::new(QuadraticSaddle { a, b, c }),
        constants,
        DomainBox::uniform(k + d, -HALF_WIDTH, HALF_WIDTH),
    )?
    .with_params(params))
}

/// Rows separated by `;`, entries by `,`.
/// Rows separated by `;`, entries by `,`: `"2,0;0,1"`.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    m.row_iter()
        .map(|r| r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join(";")
}

/// Inverse of [`format_matrix`].
pub fn parse_matrix(s: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad matrix entry '{v}' in '{s}'")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("ragged matrix '{s}'")));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}
