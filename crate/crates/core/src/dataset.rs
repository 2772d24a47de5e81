//! Validated decision datasets and the CSV contract they are read from.
//!
//! A CSV file must carry a header row. The reserved columns `D` (decision),
//! `A` (sensitive attribute) and `Y` (observed outcome) must hold exactly `0`
//! or `1`; every other column is a numeric covariate. Lines starting with `#`
//! are comments and carry provenance.

use std::io::{Read, Write};

use thiserror::Error;

use crate::strata::Stratum;

pub const DECISION_COLUMN: &str = "D";
pub const ATTRIBUTE_COLUMN: &str = "A";
pub const OUTCOME_COLUMN: &str = "Y";

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("no covariate columns (need at least one besides D, A, Y)")]
    NoCovariates,
    #[error("column `{column}`, data row {row}: expected 0 or 1, found `{value}`")]
    NonBinary {
        column: String,
        row: usize,
        value: String,
    },
    #[error("column `{column}`, data row {row}: `{value}` is not a number")]
    Unparseable {
        column: String,
        row: usize,
        value: String,
    },
    #[error("column `{column}`, data row {row}: non-finite value `{value}`")]
    NonFinite {
        column: String,
        row: usize,
        value: String,
    },
    #[error("data row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("column `{column}` has {found} values, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("no control rows (every row has D=1)")]
    NoControlRows,
    #[error("no treated rows (every row has D=0)")]
    NoTreatedRows,
    #[error("csv: {0}")]
    Csv(String),
}

/// Unvalidated table of strings, as read from CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub records: Vec<Vec<String>>,
    /// Comment lines (without the leading `#`), kept for provenance.
    pub comments: Vec<String>,
}

impl RawTable {
    pub fn from_reader<R: Read>(reader: R) -> Result<RawTable, DataError> {
        let mut comments = Vec::new();
        let mut text = String::new();
        let mut reader = reader;
        reader
            .read_to_string(&mut text)
            .map_err(|e| DataError::Csv(e.to_string()))?;
        for line in text.lines() {
            if let Some(c) = line.strip_prefix('#') {
                comments.push(c.trim().to_string());
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| DataError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
            records.push(rec.iter().map(str::to_string).collect());
        }
        Ok(RawTable {
            headers,
            records,
            comments,
        })
    }
}

/// Immutable, validated dataset of `(D, A, X, Y)` rows. Row order is the identity key.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    decision: Vec<bool>,
    attribute: Vec<bool>,
    outcome: Vec<bool>,
    /// Row-major `n_rows x n_features`.
    covariates: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from already-typed columns, enforcing every invariant.
    pub fn new(
        decision: Vec<bool>,
        attribute: Vec<bool>,
        outcome: Vec<bool>,
        covariates: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Dataset, DataError> {
        let n = decision.len();
        let m = feature_names.len();
        if m == 0 {
            return Err(DataError::NoCovariates);
        }
        for (name, len) in [
            (ATTRIBUTE_COLUMN, attribute.len()),
            (OUTCOME_COLUMN, outcome.len()),
        ] {
            if len != n {
                return Err(DataError::LengthMismatch {
                    column: name.to_string(),
                    expected: n,
                    found: len,
                });
            }
        }
        if covariates.len() != n * m {
            return Err(DataError::LengthMismatch {
                column: "covariates".to_string(),
                expected: n * m,
                found: covariates.len(),
            });
        }
        if let Some(pos) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                column: feature_names[pos % m].clone(),
                row: pos / m,
                value: covariates[pos].to_string(),
            });
        }
        if !decision.iter().any(|&d| !d) {
            return Err(DataError::NoControlRows);
        }
        if !decision.iter().any(|&d| d) {
            return Err(DataError::NoTreatedRows);
        }
        Ok(Dataset {
            decision,
            attribute,
            outcome,
            covariates,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.decision.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn decision(&self) -> &[bool] {
        &self.decision
    }

    pub fn attribute(&self) -> &[bool] {
        &self.attribute
    }

    pub fn outcome(&self) -> &[bool] {
        &self.outcome
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        let m = self.n_features();
        &self.covariates[i * m..(i + 1) * m]
    }

    /// Copy with `A` flipped on every row.
    pub fn with_relabeled_groups(&self) -> Dataset {
        Dataset {
            attribute: self.attribute.iter().map(|a| !a).collect(),
            ..self.clone()
        }
    }

    /// Writes the CSV contract: `D,A,Y,<covariates...>`, optionally preceded by
    /// `#` comment lines.
    pub fn write_csv<W: Write>(&self, out: W, comments: &[String]) -> Result<(), DataError> {
        let mut out = out;
        for c in comments {
            writeln!(out, "# {c}").map_err(|e| DataError::Csv(e.to_string()))?;
        }
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec![DECISION_COLUMN, ATTRIBUTE_COLUMN, OUTCOME_COLUMN];
        header.extend(self.feature_names.iter().map(String::as_str));
        wtr.write_record(&header)
            .map_err(|e| DataError::Csv(e.to_string()))?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            record.push(bit(self.decision[i]).to_string());
            record.push(bit(self.attribute[i]).to_string());
            record.push(bit(self.outcome[i]).to_string());
            record.extend(self.covariate_row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&record)
                .map_err(|e| DataError::Csv(e.to_string()))?;
        }
        wtr.flush().map_err(|e| DataError::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset, DataError> {
        validate_dataset(&RawTable::from_reader(reader)?)
    }
}

pub(crate) fn bit(b: bool) -> u8 {
    u8::from(b)
}

fn parse_binary(column: &str, row: usize, value: &str) -> Result<bool, DataError> {
    let non_binary = || DataError::NonBinary {
        column: column.to_string(),
        row,
        value: value.to_string(),
    };
    let v: f64 = value.parse().map_err(|_| non_binary())?;
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(non_binary())
    }
}

/// Validates a raw table into a [`Dataset`], preserving row order.
///
/// Diagnostics name the offending column and the 0-based data row.
pub fn validate_dataset(raw: &RawTable) -> Result<Dataset, DataError> {
    let find = |name: &str| -> Result<usize, DataError> {
        let mut hits = raw.headers.iter().enumerate().filter(|(_, h)| *h == name);
        let (idx, _) = hits
            .next()
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))?;
        if hits.next().is_some() {
            return Err(DataError::DuplicateColumn(name.to_string()));
        }
        Ok(idx)
    };
    let d_col = find(DECISION_COLUMN)?;
    let a_col = find(ATTRIBUTE_COLUMN)?;
    let y_col = find(OUTCOME_COLUMN)?;
    let cov_cols: Vec<usize> = (0..raw.headers.len())
        .filter(|&j| j != d_col && j != a_col && j != y_col)
        .collect();
    if cov_cols.is_empty() {
        return Err(DataError::NoCovariates);
    }
    let feature_names: Vec<String> = cov_cols.iter().map(|&j| raw.headers[j].clone()).collect();
    for (k, name) in feature_names.iter().enumerate() {
        if feature_names[..k].contains(name) {
            return Err(DataError::DuplicateColumn(name.clone()));
        }
    }

    let n = raw.records.len();
    let mut decision = Vec::with_capacity(n);
    let mut attribute = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    let mut covariates = Vec::with_capacity(n * cov_cols.len());
    for (row, rec) in raw.records.iter().enumerate() {
        if rec.len() != raw.headers.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: raw.headers.len(),
                found: rec.len(),
            });
        }
        decision.push(parse_binary(DECISION_COLUMN, row, &rec[d_col])?);
        attribute.push(parse_binary(ATTRIBUTE_COLUMN, row, &rec[a_col])?);
        outcome.push(parse_binary(OUTCOME_COLUMN, row, &rec[y_col])?);
        for &j in &cov_cols {
            let value = &rec[j];
            let v: f64 = value.parse().map_err(|_| DataError::Unparseable {
                column: raw.headers[j].clone(),
                row,
                value: value.clone(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    column: raw.headers[j].clone(),
                    row,
                    value: value.clone(),
                });
            }
            covariates.push(v);
        }
    }
    Dataset::new(decision, attribute, outcome, covariates, feature_names)
}

/// Row indices of the treated (`D=1`) and control (`D=0`) arms, in row order.
pub fn split_by_treatment(data: &Dataset) -> (Vec<usize>, Vec<usize>) {
    (0..data.n_rows()).partition(|&i| data.decision[i])
}

/// Where a potential outcome came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Recorded outcome under the received decision.
    Observed,
    /// Drawn from the posterior predictive.
    Imputed,
    /// Known by construction (simulation ground truth).
    Oracle,
}

/// Both potential outcomes for every row plus their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub y0: Vec<bool>,
    pub y1: Vec<bool>,
    /// `source[i][d]` describes `Y_i(d)`.
    pub source: Vec<[Source; 2]>,
}

impl PotentialOutcomes {
    pub fn len(&self) -> usize {
        self.y0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y0.is_empty()
    }

    pub fn get(&self, i: usize, arm: bool) -> bool {
        if arm {
            self.y1[i]
        } else {
            self.y0[i]
        }
    }

    pub fn strata(&self) -> Vec<Stratum> {
        self.y0
            .iter()
            .zip(&self.y1)
            .map(|(&y0, &y1)| Stratum::from_outcomes(y0, y1))
            .collect()
    }

    /// Checks `Y_i(D_i) = Y_i` on every row and the provenance flags: rows with
    /// an observed arm must have exactly that arm observed and the other imputed.
    pub fn is_consistent_with(&self, data: &Dataset) -> bool {
        if self.len() != data.n_rows()
            || self.y1.len() != self.len()
            || self.source.len() != self.len()
        {
            return false;
        }
        (0..self.len()).all(|i| {
            let d = data.decision()[i];
            if self.get(i, d) != data.outcome()[i] {
                return false;
            }
            match self.source[i] {
                [Source::Oracle, Source::Oracle] => true,
                [s0, s1] => {
                    let (obs, other) = if d { (s1, s0) } else { (s0, s1) };
                    obs == Source::Observed && other == Source::Imputed
                }
            }
        })
    }
}
