//! Plain-text posterior artifacts.
//!
//! One `key = value` pair per line; vectors are comma-separated; `#` starts a
//! comment. Floats are written in shortest round-trip form, so an imported
//! posterior is bit-identical to the exported one.

use std::fmt::Write as _;

use thiserror::Error;

use crate::vi::{FitConfig, VariationalPosterior, ViError};

pub const HEADER: &str = "# pfair posterior v1";

#[derive(Debug, Error, PartialEq)]
pub enum ArtifactError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("{names} feature names but {coefficients} coefficients")]
    NameCount { names: usize, coefficients: usize },
    #[error(transparent)]
    Posterior(#[from] ViError),
}

/// A fitted outcome model for one decision arm plus everything needed to
/// reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorArtifact {
    /// Decision arm whose outcome the model predicts (0 or 1).
    pub arm: u8,
    /// Number of training rows.
    pub rows: usize,
    pub feature_names: Vec<String>,
    pub posterior: VariationalPosterior,
    pub config: FitConfig,
    pub final_elbo: f64,
    /// Free-form provenance lines, e.g. the command that produced the input data.
    pub provenance: Vec<String>,
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl PosteriorArtifact {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "{HEADER}");
        for p in &self.provenance {
            let _ = writeln!(s, "# {p}");
        }
        let _ = writeln!(s, "arm = {}", self.arm);
        let _ = writeln!(s, "rows = {}", self.rows);
        let _ = writeln!(s, "feature_names = {}", self.feature_names.join(","));
        let _ = writeln!(s, "mu = {}", join(self.posterior.mu()));
        let _ = writeln!(s, "log_sigma = {}", join(self.posterior.log_sigma()));
        let _ = writeln!(s, "prior_std = {}", c.prior_std);
        let _ = writeln!(s, "learning_rate = {}", c.learning_rate);
        let _ = writeln!(s, "steps = {}", c.steps);
        let _ = writeln!(s, "mc_samples = {}", c.mc_samples);
        let _ = writeln!(s, "init_sigma = {}", c.init_sigma);
        let _ = writeln!(s, "seed = {}", c.seed);
        let _ = writeln!(s, "final_elbo = {}", self.final_elbo);
        s
    }

    pub fn parse(text: &str) -> Result<PosteriorArtifact, ArtifactError> {
        let mut pairs: Vec<(&str, &str)> = Vec::new();
        let mut provenance = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == HEADER {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                provenance.push(c.trim().to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ArtifactError::Syntax { line: idx + 1 })?;
            pairs.push((k.trim(), v.trim()));
        }
        let get = |key: &'static str| -> Result<&str, ArtifactError> {
            pairs
                .iter()
                .rev()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or(ArtifactError::MissingKey(key))
        };
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ArtifactError> {
            v.parse().map_err(|_| ArtifactError::BadValue {
                key: key.to_string(),
                value: v.to_string(),
            })
        }
        let vector = |key: &'static str| -> Result<Vec<f64>, ArtifactError> {
            let v = get(key)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|x| num(key, x.trim())).collect()
        };
        let mu = vector("mu")?;
        let log_sigma = vector("log_sigma")?;
        let names = get("feature_names")?;
        let feature_names: Vec<String> = if names.is_empty() {
            Vec::new()
        } else {
            names.split(',').map(|s| s.trim().to_string()).collect()
        };
        if feature_names.len() != mu.len() {
            return Err(ArtifactError::NameCount {
                names: feature_names.len(),
                coefficients: mu.len(),
            });
        }
        let posterior = VariationalPosterior::new(mu, log_sigma)?;
        let config = FitConfig {
            prior_std: num("prior_std", get("prior_std")?)?,
            learning_rate: num("learning_rate", get("learning_rate")?)?,
            steps: num("steps", get("steps")?)?,
            mc_samples: num("mc_samples", get("mc_samples")?)?,
            seed: num("seed", get("seed")?)?,
            init_sigma: num("init_sigma", get("init_sigma")?)?,
        };
        Ok(PosteriorArtifact {
            arm: num("arm", get("arm")?)?,
            rows: num("rows", get("rows")?)?,
            feature_names,
            posterior,
            config,
            final_elbo: num("final_elbo", get("final_elbo")?)?,
            provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn artifact(mu: Vec<f64>, log_sigma: Vec<f64>) -> PosteriorArtifact {
        let names = (0..mu.len()).map(|j| format!("x{j}")).collect();
        PosteriorArtifact {
            arm: 1,
            rows: 17,
            feature_names: names,
            posterior: VariationalPosterior::new(mu, log_sigma).unwrap(),
            config: FitConfig {
                seed: 42,
                ..FitConfig::default()
            },
            final_elbo: -123.456,
            provenance: vec!["fit seed=42".into()],
        }
    }

    #[test]
    fn missing_and_malformed_keys() {
        let text = artifact(vec![0.5], vec![-1.0]).to_text();
        let no_mu: String = text
            .lines()
            .filter(|l| !l.starts_with("mu"))
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(
            PosteriorArtifact::parse(&no_mu),
            Err(ArtifactError::MissingKey("mu"))
        );
        assert_eq!(
            PosteriorArtifact::parse("arm 1"),
            Err(ArtifactError::Syntax { line: 1 })
        );
        let bad = text.replace("steps = 3000", "steps = many");
        assert!(matches!(
            PosteriorArtifact::parse(&bad),
            Err(ArtifactError::BadValue { .. })
        ));
        let short = text.replace("feature_names = x0", "feature_names = x0,x1");
        assert!(matches!(
            PosteriorArtifact::parse(&short),
            Err(ArtifactError::NameCount { .. })
        ));
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(
            coords in prop::collection::vec((-1e6f64..1e6, -30f64..5.0), 1..12)
        ) {
            let (mu, ls): (Vec<f64>, Vec<f64>) = coords.into_iter().unzip();
            let a = artifact(mu, ls);
            prop_assert_eq!(PosteriorArtifact::parse(&a.to_text()).unwrap(), a);
        }
    }
}
