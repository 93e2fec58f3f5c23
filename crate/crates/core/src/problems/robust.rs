//! Distributionally robust training of a one-hidden-layer sigmoid network.
//!
//! `x = theta` holds the network parameters, `y = p` one adversarial weight
//! per sample:
//!
//! `f(theta, p) = sum_i p_i CE_i(theta) - lambda sum_i (p_i - 1/n)^2`
//!
//! with `CE_i` the binary cross-entropy of sample `i`. The penalty keeps `p`
//! near the empirical distribution and makes `f` strongly concave in `p`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DomainBox, HessianBlocks, Objective, PointZ, ProblemInstance, SmoothnessConstants};
use crate::{finite_diff, Block, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustMlpParams {
    pub seed: u64,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_hidden: usize,
    pub lambda_reg: f64,
}

impl Default for RobustMlpParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_samples: 40,
            n_features: 2,
            n_hidden: 4,
            lambda_reg: 1.0,
        }
    }
}

impl RobustMlpParams {
    /// `n_features * n_hidden + n_hidden + n_hidden + 1`.
    pub fn theta_dim(&self) -> usize {
        self.n_features * self.n_hidden + 2 * self.n_hidden + 1
    }
}

/// Two Gaussian blobs with unit variance centred at `+1` (label 1) and `-1`
/// (label 0) in every feature; labels are fair coin flips.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
}

impl SyntheticDataset {
    pub fn generate(seed: u64, n_samples: usize, n_features: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = DMatrix::zeros(n_samples, n_features);
        let mut labels = Vec::with_capacity(n_samples);
        for i in 0..n_samples {
            let label: bool = rng.random_bool(0.5);
            let centre = if label { 1.0 } else { -1.0 };
            for j in 0..n_features {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features[(i, j)] = centre + noise;
            }
            labels.push(if label { 1.0 } else { 0.0 });
        }
        Self { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

struct RobustMlp {
    data: SyntheticDataset,
    n_hidden: usize,
    lambda: f64,
}

impl RobustMlp {
    fn n_features(&self) -> usize {
        self.data.features.ncols()
    }

    // theta layout: W1 row-major (n_hidden x n_features), b1, w2, b2
    /// Output logit of sample `i`; hidden activations land in `hidden`.
    fn forward(&self, theta: &DVector<f64>, i: usize, hidden: &mut [f64]) -> f64 {
        let (h, m) = (self.n_hidden, self.n_features());
        let b1 = h * m;
        let w2 = b1 + h;
        let b2 = w2 + h;
        let mut logit = theta[b2];
        for j in 0..h {
            let mut a = theta[b1 + j];
            for f in 0..m {
                a += theta[j * m + f] * self.data.features[(i, f)];
            }
            hidden[j] = sigmoid(a);
            logit += theta[w2 + j] * hidden[j];
        }
        logit
    }

    fn cross_entropy(&self, logit: f64, label: f64) -> f64 {
        label * softplus(-logit) + (1.0 - label) * softplus(logit)
    }

    /// Cross-entropy of every sample at `theta`.
    fn losses(&self, theta: &DVector<f64>) -> Vec<f64> {
        let mut hidden = vec![0.0; self.n_hidden];
        (0..self.data.len())
            .map(|i| self.cross_entropy(self.forward(theta, i, &mut hidden), self.data.labels[i]))
            .collect()
    }
}

impl Objective for RobustMlp {
    fn value(&self, theta: &DVector<f64>, p: &DVector<f64>) -> f64 {
        let n = self.data.len() as f64;
        let losses = self.losses(theta);
        let weighted: f64 = losses.iter().zip(p.iter()).map(|(l, w)| w * l).sum();
        let penalty: f64 = p.iter().map(|w| (w - 1.0 / n).powi(2)).sum();
        weighted - self.lambda * penalty
    }

    fn gradient(&self, theta: &DVector<f64>, p: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (h, m) = (self.n_hidden, self.n_features());
        let b1 = h * m;
        let w2 = b1 + h;
        let b2 = w2 + h;
        let n = self.data.len();
        let mut g_theta = DVector::zeros(theta.len());
        let mut g_p = DVector::zeros(n);
        let mut hidden = vec![0.0; h];
        for i in 0..n {
            let logit = self.forward(theta, i, &mut hidden);
            let label = self.data.labels[i];
            g_p[i] = self.cross_entropy(logit, label) - 2.0 * self.lambda * (p[i] - 1.0 / n as f64);
            // d(p_i CE_i)/d logit
            let delta = p[i] * (sigmoid(logit) - label);
            g_theta[b2] += delta;
            for j in 0..h {
                let hj = hidden[j];
                g_theta[w2 + j] += delta * hj;
                let back = delta * theta[w2 + j] * hj * (1.0 - hj);
                g_theta[b1 + j] += back;
                for f in 0..m {
                    g_theta[j * m + f] += back * self.data.features[(i, f)];
                }
            }
        }
        (g_theta, g_p)
    }

    /// Exact blocks. With `o_i` the logit of sample `i` and `s_i = sigmoid(o_i)`,
    /// `d2f/dtheta2 = sum_i p_i [s_i (1 - s_i) g_i g_i^T + (s_i - y_i) d2o_i/dtheta2]`
    /// where `g_i = do_i/dtheta`; the `p` block is `-2 lambda I`.
    fn hessian_blocks(&self, theta: &DVector<f64>, p: &DVector<f64>) -> Option<HessianBlocks> {
        let (h, m) = (self.n_hidden, self.n_features());
        let b1 = h * m;
        let w2 = b1 + h;
        let b2 = w2 + h;
        let (k, n) = (theta.len(), self.data.len());
        let mut xx = DMatrix::zeros(k, k);
        let mut xy = DMatrix::zeros(k, n);
        let mut hidden = vec![0.0; h];
        let mut g = DVector::zeros(k);
        for i in 0..n {
            let logit = self.forward(theta, i, &mut hidden);
            let s = sigmoid(logit);
            let resid = s - self.data.labels[i];
            g[b2] = 1.0;
            for j in 0..h {
                let hj = hidden[j];
                let d1 = hj * (1.0 - hj);
                g[w2 + j] = hj;
                g[b1 + j] = theta[w2 + j] * d1;
                for f in 0..m {
                    g[j * m + f] = theta[w2 + j] * d1 * self.data.features[(i, f)];
                }
            }
            xx.ger(p[i] * s * (1.0 - s), &g, &g, 1.0);
            xy.column_mut(i).axpy(resid, &g, 0.0);
            // Second derivatives of the logit couple w2_j with unit j's
            // input weights, and those weights among themselves.
            let c = p[i] * resid;
            if c == 0.0 {
                continue;
            }
            for j in 0..h {
                let hj = hidden[j];
                let d1 = hj * (1.0 - hj);
                let d2 = d1 * (1.0 - 2.0 * hj);
                let da = |q: usize| if q == m { 1.0 } else { self.data.features[(i, q)] };
                let index = |q: usize| if q == m { b1 + j } else { j * m + q };
                for q in 0..=m {
                    let a = index(q);
                    let cross = c * d1 * da(q);
                    xx[(a, w2 + j)] += cross;
                    xx[(w2 + j, a)] += cross;
                    for r in 0..=m {
                        xx[(a, index(r))] += c * theta[w2 + j] * d2 * da(q) * da(r);
                    }
                }
            }
        }
        Some(HessianBlocks {
            xx: (&xx + xx.transpose()) * 0.5,
            yy: DMatrix::identity(n, n) * (-2.0 * self.lambda),
            xy,
        })
    }

    fn block_hvp(
        &self,
        block: Block,
        theta: &DVector<f64>,
        p: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        match block {
            Block::X => Some(finite_diff::directional_hvp(self, block, theta, p, v)),
            Block::Y => Some(v * (-2.0 * self.lambda)),
        }
    }
}

const THETA_HALF_WIDTH: f64 = 20.0;
const P_HALF_WIDTH: f64 = 20.0;

/// Robust-training saddle problem on a seeded synthetic dataset.
///
/// The declared constants are estimates for the box `|theta_i| <= 20`,
/// `|p_i| <= 20`, not certified bounds: they set the default power-iteration
/// shift `1/L` and the step-size warnings. `rho_x = rho_y = 1` scale the
/// curvature step; `d2f/dp2` is constant, so any positive `rho_y` is exact.
pub fn robust_mlp_problem(params: RobustMlpParams) -> Result<ProblemInstance> {
    if params.n_samples < 4 {
        return Err(Error::Config(format!(
            "n_samples must be at least 4, got {}",
            params.n_samples
        )));
    }
    if params.n_hidden < 1 || params.n_features < 1 {
        return Err(Error::Config("n_hidden and n_features must be at least 1".into()));
    }
    if !(params.lambda_reg > 0.0 && params.lambda_reg.is_finite()) {
        return Err(Error::Config(format!(
            "lambda_reg must be positive, got {}",
            params.lambda_reg
        )));
    }
    let data = SyntheticDataset::generate(params.seed, params.n_samples, params.n_features);
    let first = data.labels[0];
    if data.labels.iter().all(|l| *l == first) {
        return Err(Error::Value(format!(
            "dataset from seed {} has a single class; choose another seed",
            params.seed
        )));
    }
    let k = params.theta_dim();
    let d = params.n_samples;
    let l_x = 25.0;
    let l_y = 2.0 * params.lambda_reg + 10.0;
    let constants = SmoothnessConstants {
        l_x,
        l_y,
        l_z: l_x + l_y,
        rho_x: 1.0,
        rho_y: 1.0,
        rho_z: 10.0,
        ell_x: 50.0,
        ell_y: 50.0 + 4.0 * params.lambda_reg * P_HALF_WIDTH,
        ell_z: 100.0 + 4.0 * params.lambda_reg * P_HALF_WIDTH,
    };
    let mut lower = vec![-THETA_HALF_WIDTH; k];
    lower.extend(std::iter::repeat_n(-P_HALF_WIDTH, d));
    let upper = lower.iter().map(|v| -v).collect();
    let objective = RobustMlp {
        data,
        n_hidden: params.n_hidden,
        lambda: params.lambda_reg,
    };
    Ok(ProblemInstance::new(
        "robust-mlp",
        k,
        d,
        Arc::new(objective),
        constants,
        DomainBox { lower, upper },
    )?
    .with_params(vec![
        ("seed".into(), params.seed.to_string()),
        ("n_samples".into(), params.n_samples.to_string()),
        ("n_features".into(), params.n_features.to_string()),
        ("n_hidden".into(), params.n_hidden.to_string()),
        ("lambda_reg".into(), format!("{}", params.lambda_reg)),
    ]))
}

impl RobustMlpParams {
    /// Seeded start: `theta ~ N(0, scale^2)` and uniform weights `p = 1/n`.
    pub fn initial_point(&self, seed: u64, scale: f64) -> PointZ {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..self.theta_dim())
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                scale * g
            })
            .collect();
        let p = vec![1.0 / self.n_samples as f64; self.n_samples];
        PointZ::new(theta, p)
    }

    /// Per-sample cross-entropies at `theta` for this dataset.
    pub fn sample_losses(&self, theta: &DVector<f64>) -> Vec<f64> {
        RobustMlp {
            data: SyntheticDataset::generate(self.seed, self.n_samples, self.n_features),
            n_hidden: self.n_hidden,
            lambda: self.lambda_reg,
        }
        .losses(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dimensions() {
        let params = RobustMlpParams::default();
        let problem = robust_mlp_problem(params).unwrap();
        assert_eq!(problem.k(), 17);
        assert_eq!(problem.d(), 40);
    }

    #[test]
    fn p_block_is_exactly_minus_two_lambda() {
        let params = RobustMlpParams {
            lambda_reg: 0.75,
            ..Default::default()
        };
        let problem = robust_mlp_problem(params).unwrap();
        let z = params.initial_point(3, 0.5);
        let h = problem.hessian_blocks(&z).unwrap();
        assert_eq!(h.yy, DMatrix::identity(40, 40) * -1.5);
    }

    #[test]
    fn p_gradient_at_uniform_weights_is_the_cross_entropy() {
        let params = RobustMlpParams::default();
        let problem = robust_mlp_problem(params).unwrap();
        let z = params.initial_point(11, 1.0);
        let (_, gp) = problem.gradient(&z).unwrap();
        // hand-rolled forward pass, independent of the objective's layout code
        let data = SyntheticDataset::generate(params.seed, params.n_samples, params.n_features);
        let th = &z.x;
        for i in 0..params.n_samples {
            let mut logit = th[16];
            for j in 0..4 {
                let a = th[8 + j] + th[2 * j] * data.features[(i, 0)] + th[2 * j + 1] * data.features[(i, 1)];
                logit += th[12 + j] / (1.0 + (-a).exp());
            }
            let yhat = 1.0 / (1.0 + (-logit).exp());
            let y = data.labels[i];
            let ce = -(y * yhat.ln() + (1.0 - y) * (1.0 - yhat).ln());
            assert!((gp[i] - ce).abs() < 1e-12, "sample {i}: {} vs {}", gp[i], ce);
        }
    }

    #[test]
    fn exact_hessian_matches_gradient_differences() {
        let params = RobustMlpParams {
            n_hidden: 3,
            n_samples: 12,
            ..Default::default()
        };
        let problem = robust_mlp_problem(params).unwrap();
        let mut z = params.initial_point(5, 1.0);
        z.y.iter_mut().enumerate().for_each(|(i, p)| *p += 0.01 * i as f64);
        let exact = problem.hessian_blocks(&z).unwrap();
        let fd = finite_diff::hessian_blocks(problem.objective(), &z.x, &z.y);
        assert!((&exact.xx - &fd.xx).amax() < 1e-6, "{}", (&exact.xx - &fd.xx).amax());
        assert!((&exact.xy - &fd.xy).amax() < 1e-6);
        assert_eq!(exact.xx, exact.xx.transpose());
    }

    #[test]
    fn rejects_bad_configuration() {
        let small = RobustMlpParams {
            n_samples: 3,
            ..Default::default()
        };
        assert!(robust_mlp_problem(small).is_err());
        let no_reg = RobustMlpParams {
            lambda_reg: 0.0,
            ..Default::default()
        };
        assert!(robust_mlp_problem(no_reg).is_err());
    }

    #[test]
    fn single_class_dataset_is_rejected() {
        // With four samples a fair coin yields one class 1/8 of the time.
        let degenerate = (0..200u64)
            .find(|s| {
                let d = SyntheticDataset::generate(*s, 4, 2);
                d.labels.iter().all(|l| *l == d.labels[0])
            })
            .expect("some seed gives a single class");
        let params = RobustMlpParams {
            seed: degenerate,
            n_samples: 4,
            ..Default::default()
        };
        assert!(matches!(robust_mlp_problem(params), Err(Error::Value(_))));
    }
}
