//! Synthetic decision data with known potential outcomes and strata.
//!
//! Generation order for a given seed: attribute, covariates, generator
//! weights for both arms, potential outcomes, then decisions. Potential
//! outcomes depend only on the covariates; the attribute enters through the
//! decision probabilities alone.

use std::io::Write;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use thiserror::Error;

use crate::dataset::{bit, DataError, Dataset, PotentialOutcomes, Source};
use crate::rng::stream_rng;
use crate::strata::{PerStratum, Stratum};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("n must be at least 1")]
    EmptyPopulation,
    #[error("m must be at least 1")]
    NoCovariates,
    #[error("decision probability for ({stratum}, A={attribute}) is {value}, outside [0, 1]")]
    BadProbability {
        stratum: Stratum,
        attribute: u8,
        value: f64,
    },
    /// Every simulated decision landed in one arm, so the table fails validation.
    #[error("simulated data is invalid: {0}")]
    Data(#[from] DataError),
}

/// Decision probabilities `p[h][a]` for stratum `h` and attribute `a`.
pub type DecisionTable = PerStratum<[f64; 2]>;

/// Stable: 0.40/0.20, treatable: 0.80/0.80, better-without: 0.20/0.20,
/// severe: 0.40/0.60 (listed as `A=0`/`A=1`). Gaps are -0.2, 0, 0, +0.2.
pub fn default_decision_table() -> DecisionTable {
    PerStratum([[0.40, 0.20], [0.80, 0.80], [0.20, 0.20], [0.40, 0.60]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub m: usize,
    /// Shift of the outcome logit under the decision.
    pub theta_d: f64,
    pub decision_prob: DecisionTable,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 5000,
            m: 100,
            theta_d: -1.0,
            decision_prob: default_decision_table(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::EmptyPopulation);
        }
        if self.m == 0 {
            return Err(SimError::NoCovariates);
        }
        for (h, row) in self.decision_prob.iter() {
            for (a, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(SimError::BadProbability {
                        stratum: h,
                        attribute: a as u8,
                        value: p,
                    });
                }
            }
        }
        Ok(())
    }

    /// Eight probabilities in stratum-major order: `p[0][0], p[0][1], p[1][0], ...`.
    pub fn decision_prob_flat(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (h, row) in self.decision_prob.iter() {
            out[2 * h as usize] = row[0];
            out[2 * h as usize + 1] = row[1];
        }
        out
    }

    pub fn provenance(&self) -> String {
        let probs: Vec<String> = self
            .decision_prob_flat()
            .iter()
            .map(|p| p.to_string())
            .collect();
        format!(
            "simulate n={} m={} theta_d={} decision_probs={} seed={}",
            self.n,
            self.m,
            self.theta_d,
            probs.join(","),
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub data: Dataset,
    pub truth: PotentialOutcomes,
    pub strata: Vec<Stratum>,
    /// Generator weights for `Y(0)`.
    pub weights0: Vec<f64>,
    /// Generator weights for `Y(1)`.
    pub weights1: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimulatedDataset, SimError> {
    config.validate()?;
    let SimConfig { n, m, theta_d, .. } = *config;
    let mut rng = stream_rng(config.seed, 0);

    let attribute: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let covariates: Vec<f64> = (0..n * m).map(|_| rng.sample(StandardNormal)).collect();
    let weights0: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let weights1: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();

    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    for i in 0..n {
        let x = &covariates[i * m..(i + 1) * m];
        let eta0: f64 = x.iter().zip(&weights0).map(|(a, b)| a * b).sum();
        let eta1: f64 = x.iter().zip(&weights1).map(|(a, b)| a * b).sum::<f64>() + theta_d;
        y0.push(rng.random::<f64>() < sigmoid(eta0));
        y1.push(rng.random::<f64>() < sigmoid(eta1));
    }
    let strata: Vec<Stratum> = y0
        .iter()
        .zip(&y1)
        .map(|(&a, &b)| Stratum::from_outcomes(a, b))
        .collect();

    let mut decision = Vec::with_capacity(n);
    for i in 0..n {
        let p = config.decision_prob[strata[i]][usize::from(attribute[i])];
        // Bernoulli::new only fails outside [0, 1], which validate() excludes.
        let draw = Bernoulli::new(p).expect("validated probability");
        decision.push(draw.sample(&mut rng));
    }
    let outcome: Vec<bool> = (0..n)
        .map(|i| if decision[i] { y1[i] } else { y0[i] })
        .collect();

    let feature_names = (1..=m).map(|j| format!("x{j}")).collect();
    let data = Dataset::new(decision, attribute, outcome, covariates, feature_names)?;
    let truth = PotentialOutcomes {
        y0,
        y1,
        source: vec![[Source::Oracle, Source::Oracle]; n],
    };
    Ok(SimulatedDataset {
        data,
        truth,
        strata,
        weights0,
        weights1,
    })
}

/// Configured gap `p[h][1] - p[h][0]` for every stratum.
pub fn true_delta(config: &SimConfig) -> PerStratum<f64> {
    config.decision_prob.map(|row| row[1] - row[0])
}

/// Empirical gap per stratum computed from the true strata and realized
/// decisions. `None` marks a stratum with an empty `(h, a)` cell.
///
/// Counts are tallied here directly so this stays an independent check on the
/// estimator in [`crate::fairness`].
pub fn oracle_delta(sim: &SimulatedDataset) -> PerStratum<Option<f64>> {
    let mut treated = [[0usize; 2]; 4];
    let mut total = [[0usize; 2]; 4];
    for ((&h, &a), &d) in sim
        .strata
        .iter()
        .zip(sim.data.attribute())
        .zip(sim.data.decision())
    {
        total[h as usize][a as usize] += 1;
        treated[h as usize][a as usize] += d as usize;
    }
    PerStratum::from_fn(|h| {
        let (t, c) = (treated[h as usize], total[h as usize]);
        if c[0] == 0 || c[1] == 0 {
            None
        } else {
            Some(t[1] as f64 / c[1] as f64 - t[0] as f64 / c[0] as f64)
        }
    })
}

impl SimulatedDataset {
    /// Writes the truth sidecar: `y0,y1,stratum_code`, one line per row.
    pub fn write_truth_csv<W: Write>(&self, out: W, comments: &[String]) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "y0,y1,stratum_code")?;
        for i in 0..self.strata.len() {
            writeln!(
                out,
                "{},{},{}",
                bit(self.truth.y0[i]),
                bit(self.truth.y1[i]),
                self.strata[i].code()
            )?;
        }
        out.flush()
    }
}
