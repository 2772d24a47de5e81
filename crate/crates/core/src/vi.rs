//! Bayesian logistic regression with a mean-field Gaussian posterior.
//!
//! The ELBO is estimated by Monte Carlo with reparameterized draws
//! `theta = mu + sigma * eps` and maximized with Adam on the flattened
//! parameter vector `[mu..., log_sigma...]`. Gradients are full-batch; the only
//! randomness is the Gaussian noise, drawn from a seeded stream per step.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::stream_rng;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, PartialEq)]
pub enum ViError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid posterior: {0}")]
    InvalidPosterior(String),
    #[error("cannot fit a model on zero rows")]
    NoRows,
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), ViError> {
    if expected == found {
        Ok(())
    } else {
        Err(ViError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

/// Dense row-major design matrix. Zero columns is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: Vec<f64>,
    nrows: usize,
    ncols: usize,
}

impl DesignMatrix {
    pub fn new(data: Vec<f64>, nrows: usize, ncols: usize) -> Result<Self, ViError> {
        check_len("design matrix", nrows * ncols, data.len())?;
        Ok(DesignMatrix { data, nrows, ncols })
    }

    pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<Self, ViError> {
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            check_len("design row", ncols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(DesignMatrix {
            data,
            nrows: rows.len(),
            ncols,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    /// Appends a constant `1.0` column.
    pub fn with_intercept(&self) -> DesignMatrix {
        let p = self.ncols + 1;
        let mut data = Vec::with_capacity(self.nrows * p);
        for i in 0..self.nrows {
            data.extend_from_slice(self.row(i));
            data.push(1.0);
        }
        DesignMatrix {
            data,
            nrows: self.nrows,
            ncols: p,
        }
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(theta: &[f64], features: &DesignMatrix, labels: &[bool]) -> Result<(), ViError> {
    check_len("coefficients", features.ncols(), theta.len())?;
    check_len("labels", features.nrows(), labels.len())
}

/// Log prior plus log likelihood, accumulating the gradient into `grad` when given.
fn log_joint_impl(
    theta: &[f64],
    features: &DesignMatrix,
    labels: &[bool],
    prior_std: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let prec = 1.0 / (prior_std * prior_std);
    let log_norm = -HALF_LN_2PI - prior_std.ln();
    let mut total = 0.0;
    for (j, &t) in theta.iter().enumerate() {
        total += log_norm - 0.5 * t * t * prec;
        if let Some(g) = grad.as_deref_mut() {
            g[j] = -t * prec;
        }
    }
    for (i, &y) in labels.iter().enumerate() {
        let x = features.row(i);
        let eta = dot(x, theta);
        // y * log s(eta) + (1 - y) * log(1 - s(eta)) = y * eta - softplus(eta)
        total += if y { eta } else { 0.0 } - softplus(eta);
        if let Some(g) = grad.as_deref_mut() {
            let r = f64::from(u8::from(y)) - sigmoid(eta);
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += r * xj;
            }
        }
    }
    total
}

/// `sum_j log N(theta_j; 0, prior_std^2) + sum_i log Bernoulli(y_i; sigmoid(x_i . theta))`.
pub fn log_joint(
    theta: &[f64],
    features: &DesignMatrix,
    labels: &[bool],
    prior_std: f64,
) -> Result<f64, ViError> {
    check_inputs(theta, features, labels)?;
    Ok(log_joint_impl(theta, features, labels, prior_std, None))
}

/// Gradient of [`log_joint`] with respect to `theta`.
pub fn log_joint_gradient(
    theta: &[f64],
    features: &DesignMatrix,
    labels: &[bool],
    prior_std: f64,
) -> Result<Vec<f64>, ViError> {
    check_inputs(theta, features, labels)?;
    let mut g = vec![0.0; theta.len()];
    log_joint_impl(theta, features, labels, prior_std, Some(&mut g));
    Ok(g)
}

/// Mean-field Gaussian `q(theta) = prod_j N(mu_j, exp(log_sigma_j)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalPosterior {
    mu: Vec<f64>,
    log_sigma: Vec<f64>,
}

impl VariationalPosterior {
    pub fn new(mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self, ViError> {
        check_len("log_sigma", mu.len(), log_sigma.len())?;
        if mu.iter().chain(&log_sigma).any(|v| !v.is_finite()) {
            return Err(ViError::InvalidPosterior(
                "mu and log_sigma must be finite".into(),
            ));
        }
        Ok(VariationalPosterior { mu, log_sigma })
    }

    /// `N(0, prior_std^2)` in every coordinate.
    pub fn prior(dim: usize, prior_std: f64) -> Self {
        VariationalPosterior {
            mu: vec![0.0; dim],
            log_sigma: vec![prior_std.ln(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn log_sigma(&self) -> &[f64] {
        &self.log_sigma
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|s| s.exp()).collect()
    }

    fn flatten(&self) -> Vec<f64> {
        [self.mu.as_slice(), self.log_sigma.as_slice()].concat()
    }

    fn from_flat(params: &[f64]) -> Self {
        let p = params.len() / 2;
        VariationalPosterior {
            mu: params[..p].to_vec(),
            log_sigma: params[p..].to_vec(),
        }
    }
}

/// Standard normal noise for `n_draws` reparameterized draws of dimension `dim`.
fn draw_noise(seed: u64, stream: u64, n_draws: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, stream);
    (0..n_draws)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

struct DrawTerm {
    elbo: f64,
    grad: Vec<f64>,
}

/// Per-draw `log_joint(theta) - log q(theta)` and its reparameterized gradient.
fn elbo_terms(
    post: &VariationalPosterior,
    features: &DesignMatrix,
    labels: &[bool],
    prior_std: f64,
    noise: &[Vec<f64>],
    with_grad: bool,
) -> Vec<DrawTerm> {
    let p = post.dim();
    let sigma = post.sigma();
    let neg_log_q_const: f64 = post.log_sigma.iter().map(|ls| HALF_LN_2PI + ls).sum();
    noise
        .par_iter()
        .map(|eps| {
            let theta: Vec<f64> = (0..p).map(|j| post.mu[j] + sigma[j] * eps[j]).collect();
            let neg_log_q = neg_log_q_const + 0.5 * eps.iter().map(|e| e * e).sum::<f64>();
            if !with_grad {
                let lj = log_joint_impl(&theta, features, labels, prior_std, None);
                return DrawTerm {
                    elbo: lj + neg_log_q,
                    grad: Vec::new(),
                };
            }
            let mut g = vec![0.0; p];
            let lj = log_joint_impl(&theta, features, labels, prior_std, Some(&mut g));
            let mut grad = vec![0.0; 2 * p];
            for j in 0..p {
                grad[j] = g[j];
                // d theta_j / d log_sigma_j = sigma_j * eps_j; the entropy term contributes 1.
                grad[p + j] = g[j] * sigma[j] * eps[j] + 1.0;
            }
            DrawTerm {
                elbo: lj + neg_log_q,
                grad,
            }
        })
        .collect()
}

fn check_elbo_inputs(
    post: &VariationalPosterior,
    features: &DesignMatrix,
    labels: &[bool],
    n_draws: usize,
) -> Result<(), ViError> {
    check_inputs(&post.mu, features, labels)?;
    if n_draws == 0 {
        return Err(ViError::InvalidConfig("n_draws must be at least 1".into()));
    }
    Ok(())
}

/// Individual Monte Carlo terms whose mean is [`elbo_estimate`].
pub fn elbo_draws(
    post: &VariationalPosterior,
    features: &DesignMatrix,
    labels: &[bool],
    prior_std: f64,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<f64>, ViError> {
    check_elbo_inputs(post, features, labels, n_draws)?;
    let noise = draw_noise(seed, 0, n_draws, post.dim());
    Ok(elbo_terms(post, features, labels, prior_std, &noise, false)
        .into_iter()
        .map(|t| t.elbo)
        .collect())
}

pub fn elbo_estimate(
    post: &VariationalPosterior,
    features: &DesignMatrix,
    labels: &[bool],
    prior_std: f64,
    n_draws: usize,
    seed: u64,
) -> Result<f64, ViError> {
    let draws = elbo_draws(post, features, labels, prior_std, n_draws, seed)?;
    Ok(draws.iter().sum::<f64>() / n_draws as f64)
}

/// Reparameterized ELBO gradient, `[d/d mu..., d/d log_sigma...]`, using the
/// same noise as [`elbo_estimate`] under the same seed.
pub fn elbo_gradient(
    post: &VariationalPosterior,
    features: &DesignMatrix,
    labels: &[bool],
    prior_std: f64,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<f64>, ViError> {
    check_elbo_inputs(post, features, labels, n_draws)?;
    let noise = draw_noise(seed, 0, n_draws, post.dim());
    Ok(mean_terms(
        &elbo_terms(post, features, labels, prior_std, &noise, true),
        2 * post.dim(),
    )
    .1)
}

/// Averages draw terms in draw order so the result does not depend on scheduling.
fn mean_terms(terms: &[DrawTerm], len: usize) -> (f64, Vec<f64>) {
    let k = terms.len() as f64;
    let mut grad = vec![0.0; len];
    let mut elbo = 0.0;
    for t in terms {
        elbo += t.elbo;
        for (g, v) in grad.iter_mut().zip(&t.grad) {
            *g += v;
        }
    }
    grad.iter_mut().for_each(|g| *g /= k);
    (elbo / k, grad)
}

/// Adam moments for gradient ascent with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// In-place ascent step: `params += lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn ascend(
        &mut self,
        params: &mut [f64],
        grad: &[f64],
        learning_rate: f64,
    ) -> Result<(), ViError> {
        check_len("adam params", self.first_moment.len(), params.len())?;
        check_len("adam gradient", self.first_moment.len(), grad.len())?;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for j in 0..params.len() {
            let m = &mut self.first_moment[j];
            let v = &mut self.second_moment[j];
            *m = self.beta1 * *m + (1.0 - self.beta1) * grad[j];
            *v = self.beta2 * *v + (1.0 - self.beta2) * grad[j] * grad[j];
            params[j] += learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::ascend`].
pub fn adam_step(
    state: &AdamState,
    params: &[f64],
    grad: &[f64],
    learning_rate: f64,
) -> Result<(AdamState, Vec<f64>), ViError> {
    let mut state = state.clone();
    let mut params = params.to_vec();
    state.ascend(&mut params, grad, learning_rate)?;
    Ok((state, params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Standard deviation of the independent Gaussian prior on every coefficient.
    pub prior_std: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Reparameterized draws per gradient step.
    pub mc_samples: usize,
    pub seed: u64,
    /// Starting standard deviation of every variational factor.
    pub init_sigma: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            prior_std: 1.0,
            learning_rate: 0.01,
            steps: 3000,
            mc_samples: 8,
            seed: 0,
            init_sigma: 0.1,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), ViError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ViError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("prior_std", self.prior_std)?;
        positive("learning_rate", self.learning_rate)?;
        positive("init_sigma", self.init_sigma)?;
        if self.steps == 0 {
            return Err(ViError::InvalidConfig("steps must be at least 1".into()));
        }
        if self.mc_samples == 0 {
            return Err(ViError::InvalidConfig(
                "mc_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub posterior: VariationalPosterior,
    /// ELBO estimate at every step, evaluated before that step's update.
    pub trace: Vec<f64>,
    /// ELBO estimate of the returned posterior.
    pub final_elbo: f64,
}

/// Fits `q(theta)` for a logistic regression on `features` plus an intercept
/// column appended last.
pub fn fit_bayes_logistic(
    features: &DesignMatrix,
    labels: &[bool],
    cfg: &FitConfig,
) -> Result<FitResult, ViError> {
    cfg.validate()?;
    check_len("labels", features.nrows(), labels.len())?;
    if labels.is_empty() {
        return Err(ViError::NoRows);
    }
    let design = features.with_intercept();
    let p = design.ncols();
    let init = VariationalPosterior {
        mu: vec![0.0; p],
        log_sigma: vec![cfg.init_sigma.ln(); p],
    };
    let mut params = init.flatten();
    let mut adam = AdamState::new(2 * p);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let post = VariationalPosterior::from_flat(&params);
        let noise = draw_noise(cfg.seed, step as u64, cfg.mc_samples, p);
        let terms = elbo_terms(&post, &design, labels, cfg.prior_std, &noise, true);
        let (elbo, grad) = mean_terms(&terms, 2 * p);
        if !elbo.is_finite() {
            return Err(ViError::NonFinite { what: "ELBO", step });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(ViError::NonFinite {
                what: "gradient",
                step,
            });
        }
        trace.push(elbo);
        adam.ascend(&mut params, &grad, cfg.learning_rate)?;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(ViError::NonFinite {
                what: "parameters",
                step,
            });
        }
    }
    let posterior = VariationalPosterior::from_flat(&params);
    let noise = draw_noise(cfg.seed, cfg.steps as u64, cfg.mc_samples, p);
    let (final_elbo, _) = mean_terms(
        &elbo_terms(&posterior, &design, labels, cfg.prior_std, &noise, false),
        0,
    );
    if !final_elbo.is_finite() {
        return Err(ViError::NonFinite {
            what: "ELBO",
            step: cfg.steps,
        });
    }
    Ok(FitResult {
        posterior,
        trace,
        final_elbo,
    })
}

/// One draw `mu + sigma * eps` from the posterior.
pub fn sample_parameters(post: &VariationalPosterior, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    sample_with(post, &mut rng)
}

pub(crate) fn sample_with<R: Rng>(post: &VariationalPosterior, rng: &mut R) -> Vec<f64> {
    post.mu
        .iter()
        .zip(&post.log_sigma)
        .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `sigmoid(theta . x)`, kept strictly inside `(0, 1)`.
pub fn predict_prob(theta: &[f64], features_row: &[f64]) -> Result<f64, ViError> {
    check_len("feature row", theta.len(), features_row.len())?;
    Ok(prob_of_logit(dot(theta, features_row)))
}

pub(crate) fn prob_of_logit(eta: f64) -> f64 {
    sigmoid(eta).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Moving averages over non-overlapping windows of `window` steps; a trailing
/// partial window is dropped.
pub fn smooth_trace(trace: &[f64], window: usize) -> Vec<f64> {
    trace
        .chunks_exact(window.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}
