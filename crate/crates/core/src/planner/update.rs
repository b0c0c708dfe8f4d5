//! Rank-masked, exponentially weighted refit of the sampling distribution.

use super::{PlannerConfig, RolloutOutcome, SamplingDistribution, Temperature};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateInfo {
    /// No finite outcome; the distribution was returned unchanged.
    pub all_diverged: bool,
    pub diverged: usize,
    pub lambda: f64,
    pub best_cost: f64,
    pub best_index: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `w_n = 1[rank(n) ≤ m] · exp(-(C_n - C_min)/λ)`; rank by ascending cost,
/// ties by sample index. Returns the weighted mean and standard deviation of
/// the samples, with `σ` floored at `sigma_floor`.
pub fn update_distribution(
    outcomes: &[RolloutOutcome],
    dist: &SamplingDistribution,
    cfg: &PlannerConfig,
) -> (SamplingDistribution, UpdateInfo) {
    let diverged = outcomes.iter().filter(|o| !o.cost.is_finite()).count();
    let mut finite: Vec<f64> = outcomes.iter().map(|o| o.cost).filter(|c| c.is_finite()).collect();
    if finite.is_empty() {
        return (
            dist.clone(),
            UpdateInfo {
                all_diverged: true,
                diverged,
                lambda: f64::NAN,
                best_cost: f64::INFINITY,
                best_index: 0,
            },
        );
    }
    finite.sort_by(f64::total_cmp);
    let c_min = finite[0];
    let lambda = match cfg.temperature {
        Temperature::Fixed { lambda } => lambda,
        Temperature::Adaptive { fraction } => fraction * (median(&finite) - c_min),
    };

    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| {
        outcomes[a]
            .cost
            .total_cmp(&outcomes[b].cost)
            .then(outcomes[a].index.cmp(&outcomes[b].index))
    });
    let elites: Vec<(usize, f64)> = order
        .iter()
        .take(cfg.elites)
        .filter(|&&i| outcomes[i].cost.is_finite())
        .map(|&i| {
            let gap = outcomes[i].cost - c_min;
            // λ = 0 happens when at least half the costs tie with the best:
            // only the tied samples keep weight.
            let w = if gap == 0.0 {
                1.0
            } else if lambda > 0.0 {
                (-gap / lambda).exp()
            } else {
                0.0
            };
            (i, w)
        })
        .collect();
    let total: f64 = elites.iter().map(|(_, w)| w).sum();

    let dim = dist.mu.len();
    let mut mu = vec![0.0; dim];
    for &(i, w) in &elites {
        for (m, z) in mu.iter_mut().zip(&outcomes[i].z) {
            *m += w * z;
        }
    }
    for m in &mut mu {
        *m /= total;
    }
    let mut var = vec![0.0; dim];
    for &(i, w) in &elites {
        for ((v, z), m) in var.iter_mut().zip(&outcomes[i].z).zip(&mu) {
            *v += w * (z - m) * (z - m);
        }
    }
    let sigma = var.iter().map(|v| (v / total).sqrt().max(cfg.sigma_floor)).collect();

    let best = order[0];
    (
        SamplingDistribution { mu, sigma },
        UpdateInfo {
            all_diverged: false,
            diverged,
            lambda,
            best_cost: c_min,
            best_index: outcomes[best].index,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(costs: &[f64], z: &[f64]) -> Vec<RolloutOutcome> {
        costs
            .iter()
            .zip(z)
            .enumerate()
            .map(|(index, (&cost, &z))| RolloutOutcome {
                index,
                z: vec![z],
                cost,
                diverged: !cost.is_finite(),
            })
            .collect()
    }

    fn cfg(m: usize, lambda: f64) -> PlannerConfig {
        PlannerConfig {
            n_samples: 4,
            n_instant: 0,
            elites: m,
            temperature: Temperature::Fixed { lambda },
            sigma_floor: 1e-9,
            ..PlannerConfig::default()
        }
    }

    #[test]
    fn two_elites_of_four() {
        let dist = SamplingDistribution {
            mu: vec![0.0],
            sigma: vec![1.0],
        };
        let (d, _) = update_distribution(&outcomes(&[1.0, 2.0, 3.0, 4.0], &[0.0, 1.0, 2.0, 3.0]), &dist, &cfg(2, 1.0));
        let (w1, w2) = ((-1.0f64).exp(), (-2.0f64).exp());
        assert!((d.mu[0] - w2 / (w1 + w2)).abs() < 1e-15);
        assert!((d.mu[0] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn single_elite_is_exact() {
        let dist = SamplingDistribution {
            mu: vec![0.0],
            sigma: vec![1.0],
        };
        let mut c = cfg(1, 1.0);
        c.sigma_floor = 0.03;
        let (d, info) = update_distribution(&outcomes(&[3.0, 0.5, 2.0, 9.0], &[0.1, 0.7, 0.2, 0.3]), &dist, &c);
        assert_eq!(d.mu, vec![0.7]);
        assert_eq!(d.sigma, vec![0.03]);
        assert_eq!(info.best_index, 1);
    }

    #[test]
    fn all_diverged_keeps_distribution() {
        let dist = SamplingDistribution {
            mu: vec![0.4],
            sigma: vec![0.2],
        };
        let inf = f64::INFINITY;
        let (d, info) = update_distribution(&outcomes(&[inf, inf], &[1.0, 2.0]), &dist, &cfg(2, 1.0));
        assert_eq!(d, dist);
        assert!(info.all_diverged);
    }

    #[test]
    fn ties_break_by_index() {
        let dist = SamplingDistribution {
            mu: vec![0.0],
            sigma: vec![1.0],
        };
        let (d, _) = update_distribution(&outcomes(&[1.0, 1.0, 1.0, 5.0], &[0.5, 0.6, 0.7, 0.0]), &dist, &cfg(2, 1.0));
        assert!((d.mu[0] - 0.55).abs() < 1e-15);
    }
}
