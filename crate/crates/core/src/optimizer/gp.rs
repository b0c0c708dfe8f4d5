//! Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! Inputs live in the unit cube; targets are standardized before fitting.
//! Signal variance is profiled out of the likelihood in closed form, length
//! scales and the noise ratio are fitted by a bounded pattern search on the
//! log marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

const LOG_LENGTH_RANGE: (f64, f64) = (-4.6, 2.3);

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub length_scales: Vec<f64>,
    /// Noise variance as a fraction of the signal variance.
    pub noise_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    signal_var: f64,
    hyper: Hyperparameters,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn kernel(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    (-0.5 * r2).exp()
}

fn correlation(x: &[Vec<f64>], hyper: &Hyperparameters) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        kernel(&x[i], &x[j], &hyper.length_scales) + if i == j { hyper.noise_ratio } else { 0.0 }
    })
}

/// Profile log likelihood (signal variance maximized out), up to a constant.
fn profile_log_likelihood(x: &[Vec<f64>], y: &DVector<f64>, hyper: &Hyperparameters) -> f64 {
    let n = y.len() as f64;
    let Some(chol) = correlation(x, hyper).cholesky() else {
        return f64::NEG_INFINITY;
    };
    let alpha = chol.solve(y);
    let s2 = (y.dot(&alpha) / n).max(1e-300);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    -0.5 * (n * s2.ln() + log_det)
}

impl GaussianProcess {
    /// Fit with fixed hyperparameters.
    pub fn with_hyperparameters(x: Vec<Vec<f64>>, y: &[f64], hyper: Hyperparameters) -> Option<Self> {
        let n = y.len();
        if n == 0 || x.len() != n {
            return None;
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));
        let chol = correlation(&x, &hyper).cholesky()?;
        let alpha = chol.solve(&ys);
        let signal_var = (ys.dot(&alpha) / n as f64).max(1e-12);
        Some(GaussianProcess {
            x,
            y_mean,
            y_scale,
            signal_var,
            hyper,
            chol,
            alpha,
        })
    }

    /// Fit length scales and noise ratio by maximum likelihood. The noise
    /// ratio never drops below `noise_floor`.
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64], noise_floor: f64, rng: &mut impl Rng) -> Option<Self> {
        let n = y.len();
        let p = x.first()?.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / scale));

        let noise_range = (noise_floor.max(1e-12).ln(), 0.0_f64);
        let decode = |v: &[f64]| Hyperparameters {
            length_scales: v[..p].iter().map(|l| l.exp()).collect(),
            noise_ratio: v[p].exp(),
        };
        let clamp = |v: &mut [f64]| {
            for l in &mut v[..p] {
                *l = l.clamp(LOG_LENGTH_RANGE.0, LOG_LENGTH_RANGE.1);
            }
            v[p] = v[p].clamp(noise_range.0, noise_range.1);
        };
        let score = |v: &[f64]| profile_log_likelihood(&x, &ys, &decode(v));

        let mut starts = vec![{
            let mut v = vec![(0.3f64).ln(); p];
            v.push((1e-3f64).ln().max(noise_range.0));
            v
        }];
        for _ in 0..4 {
            let mut v: Vec<f64> = (0..p).map(|_| rng.random_range(LOG_LENGTH_RANGE.0..LOG_LENGTH_RANGE.1)).collect();
            v.push(rng.random_range(noise_range.0..=noise_range.1));
            starts.push(v);
        }

        let mut best: Option<(Vec<f64>, f64)> = None;
        for mut v in starts {
            clamp(&mut v);
            let mut f = score(&v);
            let mut step = 1.0;
            while step > 0.02 {
                let mut improved = false;
                for k in 0..=p {
                    for dir in [1.0, -1.0] {
                        let mut w = v.clone();
                        w[k] += dir * step;
                        clamp(&mut w);
                        let g = score(&w);
                        if g > f {
                            v = w;
                            f = g;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
                best = Some((v, f));
            }
        }
        let (v, f) = best?;
        if !f.is_finite() {
            return None;
        }
        Self::with_hyperparameters(x, y, decode(&v))
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    /// Posterior mean and standard deviation of the latent function.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| kernel(xi, x, &self.hyper.length_scales)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.solve(&k);
        let var = (self.signal_var * (1.0 - k.dot(&v))).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * var.sqrt())
    }
}

/// Expected improvement below `best` for a Gaussian prediction.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let gap = best - mean;
    if sd <= 1e-12 {
        return gap.max(0.0);
    }
    let z = gap / sd;
    let n = Normal::standard();
    (gap * n.cdf(z) + sd * n.pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interpolates_observations() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| (3.0 * v[0]).sin()).collect();
        let hyper = Hyperparameters {
            length_scales: vec![0.3],
            noise_ratio: 1e-10,
        };
        let gp = GaussianProcess::with_hyperparameters(x.clone(), &y, hyper).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let (m, s) = gp.predict(xi);
            assert!((m - yi).abs() < 1e-6, "{m} vs {yi}");
            assert!(s < 1e-3);
        }
    }

    #[test]
    fn ml_fit_prefers_long_scale_for_linear_data() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0, ((i * 7) % 10) as f64 / 9.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v[0]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gp = GaussianProcess::fit(x, &y, 1e-6, &mut rng).unwrap();
        let ls = &gp.hyperparameters().length_scales;
        // The second input is irrelevant.
        assert!(ls[1] > ls[0], "{ls:?}");
    }

    #[test]
    fn ei_closed_form() {
        assert_eq!(expected_improvement(1.0, 0.0, 0.5), 0.0);
        assert_eq!(expected_improvement(0.2, 0.0, 0.5), 0.3);
        // gap 0: sd·φ(0)
        let ei = expected_improvement(0.5, 2.0, 0.5);
        assert!((ei - 2.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }
}
