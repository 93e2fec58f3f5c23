//! Small dense eigen-solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// Flip `v` so its first component with magnitude above `1e-12` is positive.
pub fn canonicalize(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

pub fn require_square(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "{}x{} matrix is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Eigenvalues (ascending) and matching orthonormal eigenvector columns of a
/// symmetric matrix.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 1 {
        return (m[(0, 0)], m[(0, 0)]);
    }
    let values = m.clone().symmetric_eigenvalues();
    (values.min(), values.max())
}

/// All eigenvalues of a general real matrix: closed form up to `2x2`,
/// otherwise the real Schur form (Hessenberg reduction + shifted QR).
/// Sorted by real part, then imaginary part.
pub fn general_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    require_square(m)?;
    let mut eigs = match m.nrows() {
        0 => Vec::new(),
        1 => vec![Complex64::new(m[(0, 0)], 0.0)],
        2 => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            quadratic_roots(1.0, -(a + d), a * d - b * c).to_vec()
        }
        _ => {
            let schur = m
                .clone()
                .try_schur(f64::EPSILON, 10_000)
                .ok_or_else(|| Error::Evaluation("Schur decomposition did not converge".into()))?;
            schur.complex_eigenvalues().iter().copied().collect()
        }
    };
    eigs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(eigs)
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        // Citardauq form avoids cancellation in the smaller root.
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        }
        [Complex64::new(q / a, 0.0), Complex64::new(c / q, 0.0)]
    } else {
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a);
        [Complex64::new(re, -im), Complex64::new(re, im)]
    }
}

/// Coefficients `[c0, c1, ..., 1]` of `det(lambda I - M)` for `M` up to `3x3`.
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    require_square(m)?;
    let n = m.nrows();
    match n {
        1 => Ok(vec![-m[(0, 0)], 1.0]),
        2 => Ok(vec![m.determinant(), -m.trace(), 1.0]),
        3 => {
            let trace = m.trace();
            let m2 = m * m;
            let e2 = 0.5 * (trace * trace - m2.trace());
            Ok(vec![-m.determinant(), e2, -trace, 1.0])
        }
        _ => Err(Error::Shape(format!(
            "characteristic polynomial implemented up to 3x3, got {n}x{n}"
        ))),
    }
}

/// Roots of a monic polynomial with real coefficients `[c0, ..., 1]`
/// by Durand-Kerner iteration, polished with Newton steps.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let degree = coeffs.len() - 1;
    let eval = |z: Complex64| coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
    let deriv = |z: Complex64| {
        coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (i, c)| acc * z + c * i as f64)
    };
    let bound = 1.0 + coeffs[..degree].iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree).map(|i| seed.powu(i as u32) * bound).collect();
    for _ in 0..500 {
        let mut moved = 0.0_f64;
        for i in 0..degree {
            let denom = (0..degree)
                .filter(|&j| j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, j| acc * (roots[i] - roots[j]));
            if denom.norm() == 0.0 {
                continue;
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 * bound {
            break;
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let d = deriv(*r);
            if d.norm() == 0.0 {
                break;
            }
            *r -= eval(*r) / d;
        }
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    roots
}
