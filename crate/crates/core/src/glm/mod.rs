//! Logistic regression: estimation, inference, variable selection, scoring
//! and premium computation.
//!
//! Probabilities follow `p = 1 / (1 + exp(-x·β))`, so a positive coefficient
//! raises the accident probability. Features enter in raw units.

mod fit;
mod inference;
pub mod reference;
pub use reference::{default_candidates, paper_reference, paper_reference_models};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::Provenance;

pub use fit::{fit_expected, fit_logistic, log_likelihood, null_log_likelihood, FitOptions};
pub use inference::{
    backward_eliminate, compute_premium, mcfadden_r2, wald_pvalues, wald_pvalue_from_z, WaldTest,
};

/// Name of the intercept column.
pub const INTERCEPT: &str = "const";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("single-class target: {positives} positive and {negatives} negative observations")]
    DegenerateTarget { positives: usize, negatives: usize },
    #[error("separation detected: coefficients diverge for {}", .columns.join(", "))]
    Separation { columns: Vec<String> },
    #[error("collinear design columns: {}", .columns.join(", "))]
    Collinearity { columns: Vec<String> },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("design shape: {0}")]
    Shape(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("missing feature `{0}` required by the model")]
    MissingFeature(String),
    #[error("McFadden R2 undefined: null log-likelihood is zero")]
    UndefinedR2,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model file: {0}")]
    ModelFile(String),
}

/// Feature columns plus an implicit leading intercept, with a binary target.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    /// Column-major feature values, one vector per name.
    columns: Vec<Vec<f64>>,
    y: Vec<u8>,
}

impl DesignMatrix {
    /// Builds a design from column vectors. Values must be finite and the
    /// target must be 0/1.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>, y: Vec<u8>) -> Result<Self, GlmError> {
        if names.len() != columns.len() {
            return Err(GlmError::Shape(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if names.iter().any(|n| n == INTERCEPT) {
            return Err(GlmError::Shape(format!("`{INTERCEPT}` is reserved for the intercept")));
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != y.len() {
                return Err(GlmError::Shape(format!(
                    "column `{name}` has {} rows, target has {}",
                    col.len(),
                    y.len()
                )));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(GlmError::NonFinite { column: name.clone(), row });
            }
        }
        if y.iter().any(|&v| v > 1) {
            return Err(GlmError::Shape("target values must be 0 or 1".into()));
        }
        Ok(DesignMatrix { names, columns, y })
    }

    /// Builds a design from row vectors.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>], y: Vec<u8>) -> Result<Self, GlmError> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != names.len()) {
            return Err(GlmError::Shape(format!(
                "row {i} has {} values for {} names",
                r.len(),
                names.len()
            )));
        }
        let columns = (0..names.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(names, columns, y)
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Feature names, intercept excluded.
    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    /// Coefficient names, intercept first.
    pub fn column_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_string()).chain(self.names.iter().cloned()).collect()
    }

    pub fn target(&self) -> &[u8] {
        &self.y
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|j| self.columns[j].as_slice())
    }

    /// Value of coefficient column `j` (0 is the intercept) at row `i`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.columns[j - 1][i]
        }
    }

    /// Keeps only the named features, in the given order.
    pub fn select(&self, names: &[impl AsRef<str>]) -> Result<Self, GlmError> {
        let mut out_names = Vec::with_capacity(names.len());
        let mut out_cols = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            let col = self.column(name).ok_or_else(|| GlmError::UnknownColumn(name.to_string()))?;
            out_names.push(name.to_string());
            out_cols.push(col.to_vec());
        }
        Ok(DesignMatrix {
            names: out_names,
            columns: out_cols,
            y: self.y.clone(),
        })
    }

    /// Removes the named features.
    pub fn without(&self, drop: &[impl AsRef<str>]) -> Result<Self, GlmError> {
        for d in drop {
            if self.column(d.as_ref()).is_none() {
                return Err(GlmError::UnknownColumn(d.as_ref().to_string()));
            }
        }
        let keep: Vec<&String> = self
            .names
            .iter()
            .filter(|n| !drop.iter().any(|d| d.as_ref() == n.as_str()))
            .collect();
        self.select(&keep)
    }

    /// Subset of rows, in the given order.
    pub fn rows(&self, idx: &[usize]) -> Self {
        DesignMatrix {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Same features with a different target.
    pub fn with_target(&self, y: Vec<u8>) -> Result<Self, GlmError> {
        Self::from_columns(self.names.clone(), self.columns.clone(), y)
    }
}

/// Where a model's coefficients came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSource {
    Fit,
    PaperReference,
}

/// Estimated logistic model. Coefficient vectors are aligned with
/// `columns`, which starts with the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub target: String,
    pub source: ModelSource,
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Two-sided Wald p-values; `None` where the standard error is zero,
    /// non-finite or unpublished.
    pub p_values: Vec<Option<f64>>,
    pub log_likelihood: f64,
    pub null_log_likelihood: Option<f64>,
    pub aic: f64,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the score vector at the returned solution.
    pub score_norm: Option<f64>,
    /// Columns whose coefficients are too coarsely known to score with;
    /// they contribute nothing to the linear predictor.
    #[serde(default)]
    pub non_scorable: Vec<String>,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Numerically stable logistic function.
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl FittedModel {
    /// Number of estimated coefficients, intercept included.
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.columns.iter().position(|c| c == name).map(|j| self.coefficients[j])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.columns.iter().position(|c| c == name).map(|j| self.std_errors[j])
    }

    /// Feature names the model needs for scoring.
    pub fn required_features(&self) -> Vec<&str> {
        self.columns[1..]
            .iter()
            .filter(|c| !self.non_scorable.contains(c))
            .map(String::as_str)
            .collect()
    }

    /// Log-odds `x·β` for the features returned by `lookup`.
    pub fn linear_predictor(&self, lookup: impl Fn(&str) -> Option<f64>) -> Result<f64, GlmError> {
        let mut eta = self.coefficients[0];
        for (name, &beta) in self.columns.iter().zip(&self.coefficients).skip(1) {
            if self.non_scorable.contains(name) {
                continue;
            }
            let x = lookup(name).ok_or_else(|| GlmError::MissingFeature(name.clone()))?;
            if !x.is_finite() {
                return Err(GlmError::InvalidInput(format!("feature `{name}` is not finite")));
            }
            eta += beta * x;
        }
        Ok(eta)
    }

    /// Accident probability for one observation.
    pub fn predict_proba(&self, lookup: impl Fn(&str) -> Option<f64>) -> Result<f64, GlmError> {
        self.linear_predictor(lookup).map(sigmoid)
    }

    pub fn predict_map(&self, features: &BTreeMap<String, f64>) -> Result<f64, GlmError> {
        self.predict_proba(|n| features.get(n).copied())
    }

    /// Probabilities for every row of a design carrying the model's columns.
    pub fn predict_design(&self, design: &DesignMatrix) -> Result<Vec<f64>, GlmError> {
        let cols: Vec<Option<&[f64]>> = self.columns[1..]
            .iter()
            .map(|name| {
                if self.non_scorable.contains(name) {
                    Ok(None)
                } else {
                    design.column(name).map(Some).ok_or_else(|| GlmError::MissingFeature(name.clone()))
                }
            })
            .collect::<Result<_, _>>()?;
        Ok((0..design.n_rows())
            .map(|i| {
                let mut eta = self.coefficients[0];
                for (col, beta) in cols.iter().zip(&self.coefficients[1..]) {
                    if let Some(col) = col {
                        eta += beta * col[i];
                    }
                }
                sigmoid(eta)
            })
            .collect())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, GlmError> {
        let model: FittedModel = serde_json::from_str(text).map_err(|e| GlmError::ModelFile(e.to_string()))?;
        let k = model.columns.len();
        if k == 0 || model.columns[0] != INTERCEPT {
            return Err(GlmError::ModelFile(format!("first column must be `{INTERCEPT}`")));
        }
        if model.coefficients.len() != k || model.std_errors.len() != k || model.p_values.len() != k {
            return Err(GlmError::ModelFile("coefficient vectors do not match the column list".into()));
        }
        Ok(model)
    }
}
