//! Posterior imputation of missing potential outcomes, per-stratum decision
//! gaps, and the observed-data fairness baselines.
//!
//! Gaps are always `p(D=1 | h, A=1) - p(D=1 | h, A=0)`.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{split_by_treatment, Dataset, PotentialOutcomes, Source};
use crate::rng::{derive_seed, stream_rng};
use crate::strata::{PerStratum, Stratum};
use crate::vi::{self, DesignMatrix, FitConfig, FitResult, VariationalPosterior, ViError};

/// Strata whose gap is computable in fewer draws than this share are flagged.
pub const RELIABLE_FRACTION: f64 = 0.5;

pub const ATTRIBUTE_FEATURE: &str = "A";
pub const INTERCEPT_FEATURE: &str = "intercept";

#[derive(Debug, Error, PartialEq)]
pub enum FairnessError {
    #[error("posterior has {found} coefficients but the data layout needs {expected} ({covariates} covariates + A + intercept)")]
    LayoutMismatch {
        expected: usize,
        found: usize,
        covariates: usize,
    },
    #[error("draw count must be at least 1")]
    NoDraws,
    #[error("strata for draw {draw} cover {found} rows, dataset has {expected}")]
    StrataLength {
        draw: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Vi(#[from] ViError),
}

/// Names of the outcome-model coefficients: covariates, then `A`, then the intercept.
pub fn model_feature_names(data: &Dataset) -> Vec<String> {
    let mut names = data.feature_names().to_vec();
    names.push(ATTRIBUTE_FEATURE.to_string());
    names.push(INTERCEPT_FEATURE.to_string());
    names
}

pub fn model_dim(data: &Dataset) -> usize {
    data.n_features() + 2
}

/// Full model row for row `i`, intercept included.
pub fn model_row(data: &Dataset, i: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(model_dim(data));
    row.extend_from_slice(data.covariate_row(i));
    row.push(f64::from(u8::from(data.attribute()[i])));
    row.push(1.0);
    row
}

/// Covariates and `A` for the given rows, without the intercept column
/// (the fitter appends it).
pub fn arm_design(data: &Dataset, rows: &[usize]) -> DesignMatrix {
    let p = data.n_features() + 1;
    let mut values = Vec::with_capacity(rows.len() * p);
    for &i in rows {
        values.extend_from_slice(data.covariate_row(i));
        values.push(f64::from(u8::from(data.attribute()[i])));
    }
    DesignMatrix::new(values, rows.len(), p).expect("row width is fixed")
}

/// The two independent outcome-model fits.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmFits {
    /// Model for `Y(0)`, fit on control rows.
    pub control: FitResult,
    /// Model for `Y(1)`, fit on treated rows.
    pub treated: FitResult,
    pub control_config: FitConfig,
    pub treated_config: FitConfig,
    pub control_rows: usize,
    pub treated_rows: usize,
}

/// Per-arm fit configs: `cfg` with the seed replaced by a child seed per arm.
pub fn arm_configs(cfg: &FitConfig) -> (FitConfig, FitConfig) {
    let with_seed = |stream| FitConfig {
        seed: derive_seed(cfg.seed, stream),
        ..cfg.clone()
    };
    (with_seed(0), with_seed(1))
}

/// Fits `q(theta_y0)` on control rows and `q(theta_y1)` on treated rows.
pub fn fit_arms(data: &Dataset, cfg: &FitConfig) -> Result<ArmFits, ViError> {
    let (treated_idx, control_idx) = split_by_treatment(data);
    let (c0, c1) = arm_configs(cfg);
    let labels =
        |rows: &[usize]| -> Vec<bool> { rows.iter().map(|&i| data.outcome()[i]).collect() };
    let (control, treated) = rayon::join(
        || vi::fit_bayes_logistic(&arm_design(data, &control_idx), &labels(&control_idx), &c0),
        || vi::fit_bayes_logistic(&arm_design(data, &treated_idx), &labels(&treated_idx), &c1),
    );
    Ok(ArmFits {
        control: control?,
        treated: treated?,
        control_config: c0,
        treated_config: c1,
        control_rows: control_idx.len(),
        treated_rows: treated_idx.len(),
    })
}

/// One posterior-complete table of potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedDraw {
    pub potential_outcomes: PotentialOutcomes,
    pub strata: Vec<Stratum>,
    pub draw_index: usize,
}

fn check_layout(data: &Dataset, found: usize) -> Result<(), FairnessError> {
    let expected = model_dim(data);
    if found != expected {
        return Err(FairnessError::LayoutMismatch {
            expected,
            found,
            covariates: data.n_features(),
        });
    }
    Ok(())
}

/// Keeps each row's observed outcome and draws the other arm from the
/// outcome model for that arm.
pub fn impute_draw(
    data: &Dataset,
    theta0: &[f64],
    theta1: &[f64],
    seed: u64,
) -> Result<ImputedDraw, FairnessError> {
    check_layout(data, theta0.len())?;
    check_layout(data, theta1.len())?;
    let mut rng = stream_rng(seed, 0);
    let n = data.n_rows();
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut source = Vec::with_capacity(n);
    for i in 0..n {
        let y = data.outcome()[i];
        let row = model_row(data, i);
        let u: f64 = rng.random();
        if data.decision()[i] {
            let p0 = vi::predict_prob(theta0, &row)?;
            y0.push(u < p0);
            y1.push(y);
            source.push([Source::Imputed, Source::Observed]);
        } else {
            let p1 = vi::predict_prob(theta1, &row)?;
            y0.push(y);
            y1.push(u < p1);
            source.push([Source::Observed, Source::Imputed]);
        }
    }
    let potential_outcomes = PotentialOutcomes { y0, y1, source };
    let strata = potential_outcomes.strata();
    Ok(ImputedDraw {
        potential_outcomes,
        strata,
        draw_index: 0,
    })
}

/// Decision counts for one stratum, split by attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeltaCell {
    /// `None` when either attribute cell is empty.
    pub delta: Option<f64>,
    pub treated: [usize; 2],
    pub total: [usize; 2],
}

impl DeltaCell {
    pub fn decision_rate(&self, a: usize) -> Option<f64> {
        (self.total[a] > 0).then(|| self.treated[a] as f64 / self.total[a] as f64)
    }

    /// Binomial sampling variance of `delta` given these counts.
    pub fn sampling_variance(&self) -> Option<f64> {
        let var = |a: usize| {
            let p = self.decision_rate(a)?;
            Some(p * (1.0 - p) / self.total[a] as f64)
        };
        Some(var(0)? + var(1)?)
    }
}

pub fn delta_by_stratum(
    strata: &[Stratum],
    decision: &[bool],
    attribute: &[bool],
) -> PerStratum<DeltaCell> {
    let mut cells = PerStratum::<DeltaCell>::default();
    for ((&h, &d), &a) in strata.iter().zip(decision).zip(attribute) {
        let cell = &mut cells[h];
        cell.total[usize::from(a)] += 1;
        cell.treated[usize::from(a)] += usize::from(d);
    }
    for cell in cells.0.iter_mut() {
        cell.delta = match (cell.decision_rate(1), cell.decision_rate(0)) {
            (Some(p1), Some(p0)) => Some(p1 - p0),
            _ => None,
        };
    }
    cells
}

/// Posterior mean and 95% interval bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

const Z_975: f64 = 1.959_963_984_540_054;

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean with the 2.5% and 97.5% empirical quantiles.
fn quantile_interval(values: &[f64]) -> Option<Interval> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    // Quantiles of a constant sample equal the mean up to rounding.
    Some(Interval {
        mean,
        lower: quantile(&sorted, 0.025).min(mean),
        upper: quantile(&sorted, 0.975).max(mean),
    })
}

/// Combines per-draw estimates and their sampling variances (Rubin's rules):
/// total variance is the mean within-draw variance plus `(1 + 1/S)` times the
/// between-draw variance. Bounds are clipped to `[-1, 1]`.
fn combined_interval(estimates: &[f64], variances: &[f64]) -> Option<Interval> {
    if estimates.is_empty() {
        return None;
    }
    let s = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / s;
    let within = variances.iter().sum::<f64>() / s;
    let between = if estimates.len() > 1 {
        estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (s - 1.0)
    } else {
        0.0
    };
    let half = Z_975 * (within + (1.0 + 1.0 / s) * between).sqrt();
    Some(Interval {
        mean,
        lower: (mean - half).max(-1.0).min(mean),
        upper: (mean + half).min(1.0).max(mean),
    })
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, k) = values
        .flatten()
        .fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
    (k > 0).then(|| sum / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumSummary {
    /// Mean gap over the draws in which it is defined, with a 95% interval that
    /// adds the binomial sampling variance of the decision frequencies to the
    /// spread between draws. `None` if the gap was undefined in every draw.
    pub delta: Option<Interval>,
    /// Mean with 2.5%/97.5% quantiles of the per-draw gaps alone (imputation
    /// uncertainty only).
    pub imputation_spread: Option<Interval>,
    /// Share of draws in which both attribute cells were populated.
    pub defined_fraction: f64,
    pub unreliable: bool,
    /// Posterior-mean `p(D=1 | h, A=a)`, indexed by `a`.
    pub decision_prob: [Option<f64>; 2],
    /// Posterior-mean share of group `a` falling in this stratum.
    pub proportion: [Option<f64>; 2],
}

/// Statistical parity: `p(D=1 | A=a)` and the gap between groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parity {
    pub rate: [Option<f64>; 2],
    /// `rate[1] - rate[0]`.
    pub gap: Option<f64>,
}

/// Conditional frequencies `cells[k][a]` for a binary conditioning variable `k`
/// and attribute `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupTable {
    pub cells: [[Option<f64>; 2]; 2],
}

impl GroupTable {
    /// Between-group gap `cells[k][1] - cells[k][0]`.
    pub fn gap(&self, k: usize) -> Option<f64> {
        Some(self.cells[k][1]? - self.cells[k][0]?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationalMetrics {
    pub statistical_parity: Parity,
    /// `p(Y=1 | D=d, A=a)` as `cells[d][a]`.
    pub calibration: GroupTable,
    /// `p(D=1 | Y=y, A=a)` as `cells[y][a]`.
    pub accuracy: GroupTable,
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn statistical_parity(data: &Dataset) -> Parity {
    let mut hits = [0usize; 2];
    let mut total = [0usize; 2];
    for (&d, &a) in data.decision().iter().zip(data.attribute()) {
        total[usize::from(a)] += 1;
        hits[usize::from(a)] += usize::from(d);
    }
    let rate = [rate(hits[0], total[0]), rate(hits[1], total[1])];
    Parity {
        rate,
        gap: rate[1].zip(rate[0]).map(|(r1, r0)| r1 - r0),
    }
}

/// `p(target=1 | given=k, A=a)` over the four `(k, a)` cells.
fn group_table(target: &[bool], given: &[bool], attribute: &[bool]) -> GroupTable {
    let mut hits = [[0usize; 2]; 2];
    let mut total = [[0usize; 2]; 2];
    for ((&t, &k), &a) in target.iter().zip(given).zip(attribute) {
        total[usize::from(k)][usize::from(a)] += 1;
        hits[usize::from(k)][usize::from(a)] += usize::from(t);
    }
    let mut cells = [[None; 2]; 2];
    for k in 0..2 {
        for a in 0..2 {
            cells[k][a] = rate(hits[k][a], total[k][a]);
        }
    }
    GroupTable { cells }
}

pub fn calibration(data: &Dataset) -> GroupTable {
    group_table(data.outcome(), data.decision(), data.attribute())
}

pub fn accuracy_metric(data: &Dataset) -> GroupTable {
    group_table(data.decision(), data.outcome(), data.attribute())
}

pub fn associational_metrics(data: &Dataset) -> AssociationalMetrics {
    AssociationalMetrics {
        statistical_parity: statistical_parity(data),
        calibration: calibration(data),
        accuracy: accuracy_metric(data),
    }
}

/// Posterior summary of principal fairness plus the associational baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub strata: PerStratum<StratumSummary>,
    pub associational: AssociationalMetrics,
    pub draws_used: usize,
    pub master_seed: u64,
}

/// Aggregates per-draw strata assignments into a report. Draw order does not
/// affect the result.
pub fn summarize_strata_draws(
    data: &Dataset,
    draws: &[Vec<Stratum>],
    master_seed: u64,
) -> Result<FairnessReport, FairnessError> {
    if draws.is_empty() {
        return Err(FairnessError::NoDraws);
    }
    let n = data.n_rows();
    let mut group_size = [0usize; 2];
    for &a in data.attribute() {
        group_size[usize::from(a)] += 1;
    }
    let mut per_draw = Vec::with_capacity(draws.len());
    for (s, strata) in draws.iter().enumerate() {
        if strata.len() != n {
            return Err(FairnessError::StrataLength {
                draw: s,
                expected: n,
                found: strata.len(),
            });
        }
        per_draw.push(delta_by_stratum(strata, data.decision(), data.attribute()));
    }
    let s_count = draws.len() as f64;
    let strata = PerStratum::from_fn(|h| {
        let deltas: Vec<f64> = per_draw.iter().filter_map(|c| c[h].delta).collect();
        let variances: Vec<f64> = per_draw
            .iter()
            .filter_map(|c| c[h].sampling_variance())
            .collect();
        let defined_fraction = deltas.len() as f64 / s_count;
        let decision_prob =
            [0, 1].map(|a| mean_defined(per_draw.iter().map(|c| c[h].decision_rate(a))));
        let proportion = [0, 1]
            .map(|a| mean_defined(per_draw.iter().map(|c| rate(c[h].total[a], group_size[a]))));
        StratumSummary {
            delta: combined_interval(&deltas, &variances),
            imputation_spread: quantile_interval(&deltas),
            defined_fraction,
            unreliable: defined_fraction < RELIABLE_FRACTION,
            decision_prob,
            proportion,
        }
    });
    Ok(FairnessReport {
        strata,
        associational: associational_metrics(data),
        draws_used: draws.len(),
        master_seed,
    })
}

/// Parameter draws and imputation for draw `s`, all derived from the master seed.
fn posterior_draw(
    data: &Dataset,
    post0: &VariationalPosterior,
    post1: &VariationalPosterior,
    seed: u64,
    s: usize,
) -> Result<ImputedDraw, FairnessError> {
    let mut rng = stream_rng(seed, s as u64);
    let theta0 = vi::sample_with(post0, &mut rng);
    let theta1 = vi::sample_with(post1, &mut rng);
    let mut draw = impute_draw(data, &theta0, &theta1, rng.random())?;
    draw.draw_index = s;
    Ok(draw)
}

/// All `draws` imputations, in draw order.
pub fn imputed_draws(
    data: &Dataset,
    post0: &VariationalPosterior,
    post1: &VariationalPosterior,
    draws: usize,
    seed: u64,
) -> Result<Vec<ImputedDraw>, FairnessError> {
    check_layout(data, post0.dim())?;
    check_layout(data, post1.dim())?;
    if draws == 0 {
        return Err(FairnessError::NoDraws);
    }
    (0..draws)
        .into_par_iter()
        .map(|s| posterior_draw(data, post0, post1, seed, s))
        .collect()
}

/// Samples outcome-model parameters, imputes the missing arm, assigns strata
/// and summarizes the gap in every stratum across `draws` repetitions.
pub fn assess_principal_fairness(
    data: &Dataset,
    post0: &VariationalPosterior,
    post1: &VariationalPosterior,
    draws: usize,
    seed: u64,
) -> Result<FairnessReport, FairnessError> {
    let imputed = imputed_draws(data, post0, post1, draws, seed)?;
    let strata: Vec<Vec<Stratum>> = imputed.into_iter().map(|d| d.strata).collect();
    summarize_strata_draws(data, &strata, seed)
}
