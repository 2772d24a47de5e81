//! End-to-end checks of documented behaviour that need more than one module.

use pfair_core::fairness::{assess_principal_fairness, delta_by_stratum, imputed_draws, model_dim};
use pfair_core::sim::{simulate, SimConfig};
use pfair_core::vi::{
    fit_bayes_logistic, log_joint, DesignMatrix, FitConfig, VariationalPosterior,
};
use pfair_core::Stratum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn default_simulation_balances_groups() {
    let sim = simulate(&SimConfig {
        seed: 7,
        ..SimConfig::default()
    })
    .unwrap();
    let n = sim.data.n_rows();
    let share = sim.data.attribute().iter().filter(|&&a| a).count() as f64 / n as f64;
    assert_eq!((n, sim.data.n_features()), (5000, 100));
    assert!((0.47..=0.53).contains(&share), "mean(A) = {share}");
}

#[test]
fn one_degenerate_draw_reports_that_draw() {
    let sim = simulate(&SimConfig {
        n: 300,
        m: 4,
        seed: 2,
        ..SimConfig::default()
    })
    .unwrap();
    let p = model_dim(&sim.data);
    let post0 = VariationalPosterior::new(vec![0.3; p], vec![-30.0; p]).unwrap();
    let post1 = VariationalPosterior::new(vec![-0.2; p], vec![-30.0; p]).unwrap();
    let report = assess_principal_fairness(&sim.data, &post0, &post1, 1, 99).unwrap();
    let draw = &imputed_draws(&sim.data, &post0, &post1, 1, 99).unwrap()[0];
    let cells = delta_by_stratum(&draw.strata, sim.data.decision(), sim.data.attribute());
    for h in Stratum::ALL {
        assert_eq!(
            report.strata[h].delta.map(|i| i.mean),
            cells[h].delta,
            "{h}"
        );
        assert_eq!(
            report.strata[h].imputation_spread.map(|i| i.lower),
            cells[h].delta
        );
    }
    assert_eq!(report.draws_used, 1);
}

/// Random-walk Metropolis over `log_joint`; returns (mean, sd) per coordinate.
fn metropolis(
    x: &DesignMatrix,
    y: &[bool],
    prior_std: f64,
    iters: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let p = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; p];
    let mut current = log_joint(&theta, x, y, prior_std).unwrap();
    let step = 0.25;
    let burn = iters / 5;
    let mut sums = vec![(0.0, 0.0); p];
    for it in 0..iters {
        let proposal: Vec<f64> = theta
            .iter()
            .map(|t| t + step * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = log_joint(&proposal, x, y, prior_std).unwrap();
        if rng.random::<f64>().ln() < lp - current {
            theta = proposal;
            current = lp;
        }
        if it >= burn {
            for (s, t) in sums.iter_mut().zip(&theta) {
                s.0 += t;
                s.1 += t * t;
            }
        }
    }
    let k = (iters - burn) as f64;
    sums.iter()
        .map(|(s, ss)| {
            let mean = s / k;
            (mean, (ss / k - mean * mean).sqrt())
        })
        .collect()
}

#[test]
fn separated_data_gives_a_confident_positive_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let xs: Vec<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<bool> = xs.iter().map(|&x| x > 0.0).collect();
    let features = DesignMatrix::new(xs.clone(), 200, 1).unwrap();
    let cfg = FitConfig {
        seed: 3,
        ..FitConfig::default()
    };
    let fit = fit_bayes_logistic(&features, &y, &cfg).unwrap();
    let (mu, sigma) = (fit.posterior.mu()[0], fit.posterior.sigma()[0]);
    assert!(mu > 0.0 && mu / sigma > 3.0, "slope {mu} +- {sigma}");

    // The exact posterior (slope, intercept) agrees: clearly positive slope,
    // and the variational mean sits near the sampled one.
    let with_intercept = features.with_intercept();
    let mcmc = metropolis(&with_intercept, &y, cfg.prior_std, 200_000, 5);
    let (m_mean, m_sd) = mcmc[0];
    assert!(m_mean / m_sd > 3.0, "mcmc slope {m_mean} +- {m_sd}");
    assert!((mu - m_mean).abs() < 0.5 * m_sd, "vi {mu} vs mcmc {m_mean}");
    let (b_mean, b_sd) = mcmc[1];
    let b = fit.posterior.mu()[1];
    assert!(
        (b - b_mean).abs() < 2.0 * b_sd,
        "intercept vi {b} vs mcmc {b_mean} +- {b_sd}"
    );
}
