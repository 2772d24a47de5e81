//! The three file-based stages. Each stage reads its inputs from disk and
//! writes every output with `#` provenance lines, so a file alone says how
//! to reproduce it.

use std::fs;
use std::path::{Path, PathBuf};

use pfair_core::artifact::{ArtifactError, PosteriorArtifact};
use pfair_core::fairness::{self, FairnessError};
use pfair_core::report::{render_csv, render_text, ReportContext};
use pfair_core::sim::{self, DecisionTable, SimConfig, SimError};
use pfair_core::vi::{FitConfig, ViError};
use pfair_core::{validate_dataset, DataError, Dataset, PerStratum, RawTable, Stratum};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::Format;

pub const DATA_FILE: &str = "data.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const TRACE_FILE: &str = "elbo_trace.csv";
pub const POSTERIOR_FILES: [&str; 2] = ["posterior_y0.txt", "posterior_y1.txt"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: DataError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fit(#[from] ViError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error("{path}: {source}")]
    Artifact {
        path: PathBuf,
        source: ArtifactError,
    },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    /// 2 for invalid input, 3 for numeric failure, 4 for file system errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 4,
            CliError::Fit(ViError::NonFinite { .. })
            | CliError::Fairness(FairnessError::Vi(ViError::NonFinite { .. })) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(io_err(path))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A validated input dataset together with what identifies it.
struct Input {
    data: Dataset,
    comments: Vec<String>,
    sha256: String,
}

fn load_input(path: &Path) -> Result<Input, CliError> {
    let bytes = read(path)?;
    let data_err = |source| CliError::Data {
        path: path.to_path_buf(),
        source,
    };
    let raw = RawTable::from_reader(&bytes[..]).map_err(data_err)?;
    let data = validate_dataset(&raw).map_err(data_err)?;
    Ok(Input {
        data,
        comments: raw.comments,
        sha256: sha256(&bytes),
    })
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub theta_d: f64,
    pub decision_probs: Option<Vec<f64>>,
}

fn decision_table(flat: &[f64]) -> Result<DecisionTable, CliError> {
    if flat.len() != 8 {
        return Err(CliError::Invalid(format!(
            "--decision-probs needs 8 values (4 strata x 2 groups), got {}",
            flat.len()
        )));
    }
    Ok(PerStratum::from_fn(|h| {
        let k = 2 * h.code() as usize;
        [flat[k], flat[k + 1]]
    }))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = SimConfig {
        n: args.n,
        m: args.m,
        theta_d: args.theta_d,
        decision_prob: match &args.decision_probs {
            Some(flat) => decision_table(flat)?,
            None => sim::default_decision_table(),
        },
        seed: args.seed,
    };
    let simulated = sim::simulate(&config)?;
    let provenance = vec![config.provenance()];

    create_dir(&args.output_dir)?;
    let mut data = Vec::new();
    simulated
        .data
        .write_csv(&mut data, &provenance)
        .map_err(|source| CliError::Data {
            path: args.output_dir.join(DATA_FILE),
            source,
        })?;
    write(&args.output_dir.join(DATA_FILE), &data)?;
    let mut truth = Vec::new();
    let truth_path = args.output_dir.join(TRUTH_FILE);
    simulated
        .write_truth_csv(&mut truth, &provenance)
        .map_err(io_err(&truth_path))?;
    write(&truth_path, &truth)?;

    let delta = sim::true_delta(&config);
    println!("configured delta = p(D=1|h,A=1) - p(D=1|h,A=0)");
    for h in Stratum::ALL {
        println!("  {:<15} {:>8.4}", h.name(), delta[h]);
    }
    println!(
        "wrote {} rows x {} columns to {}",
        simulated.data.n_rows(),
        simulated.data.n_features() + 3,
        args.output_dir.join(DATA_FILE).display()
    );
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub prior_std: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub mc_samples: usize,
}

fn prior_dominated(arm: u8, rows: usize, dim: usize) -> Option<String> {
    (rows < dim).then(|| {
        format!("theta_y{arm} posterior is prior-dominated: {rows} training rows for {dim} coefficients")
    })
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let input = load_input(&args.input)?;
    let data = &input.data;
    let config = FitConfig {
        prior_std: args.prior_std,
        learning_rate: args.learning_rate,
        steps: args.steps,
        mc_samples: args.mc_samples,
        seed: args.seed,
        ..FitConfig::default()
    };
    config.validate()?;
    let dim = fairness::model_dim(data);
    let fits = fairness::fit_arms(data, &config)?;

    let mut provenance = vec![
        format!(
            "fit seed={} prior_std={} lr={} steps={} mc_samples={} init_sigma={}",
            config.seed,
            config.prior_std,
            config.learning_rate,
            config.steps,
            config.mc_samples,
            config.init_sigma
        ),
        format!("input_sha256={}", input.sha256),
    ];
    for (arm, rows) in [(0, fits.control_rows), (1, fits.treated_rows)] {
        if let Some(w) = prior_dominated(arm, rows, dim) {
            eprintln!("warning: {w}");
            provenance.push(format!("warning: {w}"));
        }
    }

    create_dir(&args.output_dir)?;
    let names = fairness::model_feature_names(data);
    let arms = [
        (0u8, &fits.control, &fits.control_config, fits.control_rows),
        (1u8, &fits.treated, &fits.treated_config, fits.treated_rows),
    ];
    for (arm, result, cfg, rows) in arms {
        let artifact = PosteriorArtifact {
            arm,
            rows,
            feature_names: names.clone(),
            posterior: result.posterior.clone(),
            config: cfg.clone(),
            final_elbo: result.final_elbo,
            provenance: provenance.clone(),
        };
        write(
            &args.output_dir.join(POSTERIOR_FILES[usize::from(arm)]),
            artifact.to_text().as_bytes(),
        )?;
        println!(
            "arm {arm}: {rows} rows, {dim} coefficients, final ELBO {:.3}",
            result.final_elbo
        );
    }

    let mut trace = String::new();
    for p in &provenance {
        trace.push_str(&format!("# {p}\n"));
    }
    trace.push_str("step,elbo_y0,elbo_y1\n");
    for (t, (e0, e1)) in fits
        .control
        .trace
        .iter()
        .zip(&fits.treated.trace)
        .enumerate()
    {
        trace.push_str(&format!("{t},{e0},{e1}\n"));
    }
    write(&args.output_dir.join(TRACE_FILE), trace.as_bytes())
}

#[derive(Debug, Clone)]
pub struct AssessArgs {
    pub input: PathBuf,
    pub posteriors: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub draws: usize,
    pub format: Format,
}

fn load_artifact(dir: &Path, arm: u8) -> Result<(PosteriorArtifact, String), CliError> {
    let path = dir.join(POSTERIOR_FILES[usize::from(arm)]);
    let bytes = read(&path)?;
    let text = String::from_utf8_lossy(&bytes);
    let artifact = PosteriorArtifact::parse(&text).map_err(|source| CliError::Artifact {
        path: path.clone(),
        source,
    })?;
    if artifact.arm != arm {
        return Err(CliError::Invalid(format!(
            "{}: holds the model for arm {}, expected arm {arm}",
            path.display(),
            artifact.arm
        )));
    }
    Ok((artifact, sha256(&bytes)))
}

pub fn assess(args: &AssessArgs) -> Result<(), CliError> {
    let input = load_input(&args.input)?;
    let data = &input.data;
    let (post0, hash0) = load_artifact(&args.posteriors, 0)?;
    let (post1, hash1) = load_artifact(&args.posteriors, 1)?;

    let report = fairness::assess_principal_fairness(
        data,
        &post0.posterior,
        &post1.posterior,
        args.draws,
        args.seed,
    )?;

    let format = match args.format {
        Format::Text => "text",
        Format::Csv => "csv",
    };
    let mut config = vec![
        format!(
            "assess draws={} seed={} format={format}",
            args.draws, args.seed
        ),
        format!("input_sha256={}", input.sha256),
        format!("posterior_y0_sha256={hash0}"),
        format!("posterior_y1_sha256={hash1}"),
    ];
    config.extend(input.comments.iter().map(|c| format!("data: {c}")));
    config.extend(
        post0
            .provenance
            .iter()
            .filter(|p| !p.starts_with("warning:"))
            .map(|p| format!("posterior: {p}")),
    );

    let dim = fairness::model_dim(data);
    let expected_names = fairness::model_feature_names(data);
    let mut warnings = Vec::new();
    for artifact in [&post0, &post1] {
        warnings.extend(prior_dominated(artifact.arm, artifact.rows, dim));
        if artifact.feature_names != expected_names {
            warnings.push(format!(
                "theta_y{} was fit on differently named features than the input columns",
                artifact.arm
            ));
        }
    }
    for h in Stratum::ALL {
        if report.strata[h].unreliable {
            warnings.push(format!(
                "stratum {h} is empty in one group for {:.0}% of draws; its delta is unreliable",
                100.0 * (1.0 - report.strata[h].defined_fraction)
            ));
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let ctx = ReportContext { config, warnings };
    let (name, body) = match args.format {
        Format::Text => ("report.txt", render_text(&report, &ctx)),
        Format::Csv => ("report.csv", render_csv(&report, &ctx)),
    };
    create_dir(&args.output_dir)?;
    let path = args.output_dir.join(name);
    write(&path, body.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}
