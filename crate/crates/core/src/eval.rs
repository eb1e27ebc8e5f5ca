//! Model evaluation and dataset reporting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::glm::{backward_eliminate, fit_logistic, mcfadden_r2, DesignMatrix, FitOptions, GlmError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("degenerate labels: {positives} positive and {negatives} negative")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("at least {min} rows required, got {got}")]
    TooFewRows { min: usize, got: usize },
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error(transparent)]
    Glm(#[from] GlmError),
}

/// Area under the ROC curve as the Mann-Whitney statistic, with ties
/// credited one half.
///
/// Uses doubled midranks so the rank sum is an exact integer.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let n_pos = labels.iter().filter(|&&l| l != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::DegenerateLabels {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum over positives of doubled midranks (1-based): a tie group covering
    // sorted positions i..j has midrank (i + 1 + j) / 2.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] != 0).count() as u128;
        doubled_rank_sum += pos_in_group * (i as u128 + 1 + j as u128);
        i = j;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    // 2U = doubled rank sum - n_pos (n_pos + 1)
    let doubled_u = doubled_rank_sum - np * (np + 1);
    Ok(doubled_u as f64 / (2 * np * nn) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    /// Sample the test set separately within each class.
    pub stratify: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.10,
            seed: 42,
            stratify: false,
        }
    }
}

/// Disjoint, exhaustive train/test index sets, each sorted ascending.
/// The test set has `round(test_fraction · n)` rows.
pub fn train_test_split(n: usize, labels: Option<&[u8]>, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(EvalError::InvalidFraction(spec.test_fraction));
    }
    if n < 10 {
        return Err(EvalError::TooFewRows { min: 10, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut test = Vec::new();
    match labels.filter(|_| spec.stratify) {
        Some(labels) => {
            let total = (spec.test_fraction * n as f64).round() as usize;
            let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i] != 0).collect();
            let mut neg: Vec<usize> = (0..n).filter(|&i| labels[i] == 0).collect();
            let take_pos = ((spec.test_fraction * pos.len() as f64).round() as usize).min(total);
            pos.shuffle(&mut rng);
            neg.shuffle(&mut rng);
            test.extend_from_slice(&pos[..take_pos]);
            test.extend_from_slice(&neg[..(total - take_pos).min(neg.len())]);
        }
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            test.extend_from_slice(&idx[..(spec.test_fraction * n as f64).round() as usize]);
        }
    }
    test.sort_unstable();
    let mut in_test = vec![false; n];
    for &i in &test {
        in_test[i] = true;
    }
    let train = (0..n).filter(|&i| !in_test[i]).collect();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub target: String,
    pub auc_in_sample: f64,
    /// `None` when the test partition holds a single class.
    pub auc_out_of_sample: Option<f64>,
    pub mcfadden_r2: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub columns: Vec<String>,
    pub diagnostics: Vec<String>,
}

/// Fits on the training partition (with backward elimination at `alpha`)
/// and reports in- and out-of-sample AUC and training McFadden R².
pub fn evaluate_model(
    design: &DesignMatrix,
    target: &str,
    spec: &SplitSpec,
    alpha: f64,
    opts: &FitOptions,
) -> Result<EvalReport, EvalError> {
    let (train_idx, test_idx) = train_test_split(design.n_rows(), Some(design.target()), spec)?;
    let train = design.rows(&train_idx);
    let test = design.rows(&test_idx);
    let model = backward_eliminate(&train, target, alpha, opts)?;
    let auc_in_sample = roc_auc(&model.predict_design(&train)?, train.target())?;
    let mut diagnostics = Vec::new();
    let auc_out_of_sample = match roc_auc(&model.predict_design(&test)?, test.target()) {
        Ok(a) => Some(a),
        Err(EvalError::DegenerateLabels { positives, negatives }) => {
            diagnostics.push(format!(
                "{target}: out-of-sample AUC undefined, test partition has {positives} positive and {negatives} negative rows"
            ));
            None
        }
        Err(e) => return Err(e),
    };
    let null = crate::glm::null_log_likelihood(train.target());
    Ok(EvalReport {
        target: target.to_string(),
        auc_in_sample,
        auc_out_of_sample,
        mcfadden_r2: mcfadden_r2(&model, null)?,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        seed: spec.seed,
        columns: model.columns,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub target: String,
    pub r2_with: f64,
    pub r2_without: f64,
}

impl AblationResult {
    pub fn difference(&self) -> f64 {
        self.r2_with - self.r2_without
    }
}

/// McFadden R² with and without `group` on the same rows. Both models use
/// their full column sets; no elimination.
pub fn ablation_compare(
    design: &DesignMatrix,
    target: &str,
    group: &[impl AsRef<str>],
    opts: &FitOptions,
) -> Result<AblationResult, EvalError> {
    let null = crate::glm::null_log_likelihood(design.target());
    let with = fit_logistic(design, target, opts)?;
    let reduced = design.without(group)?;
    let without = if reduced.feature_names().len() == design.feature_names().len() {
        with.clone()
    } else {
        fit_logistic(&reduced, target, opts)?
    };
    Ok(AblationResult {
        target: target.to_string(),
        r2_with: mcfadden_r2(&with, null)?,
        r2_without: mcfadden_r2(&without, null)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub n: usize,
    /// `None` for an empty group.
    pub mean: Option<f64>,
    /// Sample standard deviation; `None` with fewer than two rows.
    pub std: Option<f64>,
}

fn group_stats(values: impl Iterator<Item = f64>) -> GroupStats {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    if n == 0 {
        return GroupStats { n, mean: None, std: None };
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    GroupStats {
        n,
        mean: Some(mean),
        std,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptiveRow {
    pub feature: String,
    pub with_accidents: GroupStats,
    pub without_accidents: GroupStats,
}

/// Mean and sample standard deviation of each column split by target.
pub fn descriptive_stats(names: &[String], columns: &[Vec<f64>], target: &[u8]) -> Vec<DescriptiveRow> {
    names
        .iter()
        .zip(columns)
        .map(|(name, col)| DescriptiveRow {
            feature: name.clone(),
            with_accidents: group_stats(col.iter().zip(target).filter(|(_, &t)| t != 0).map(|(&v, _)| v)),
            without_accidents: group_stats(col.iter().zip(target).filter(|(_, &t)| t == 0).map(|(&v, _)| v)),
        })
        .collect()
}

/// Pearson correlation matrix; entries touching a zero-variance column are
/// `None`.
pub fn correlation_matrix(columns: &[Vec<f64>]) -> Result<Vec<Vec<Option<f64>>>, EvalError> {
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(EvalError::TooFewRows { min: 2, got: n });
    }
    let centered: Vec<Option<Vec<f64>>> = columns
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n as f64;
            let d: Vec<f64> = c.iter().map(|x| x - mean).collect();
            let ss: f64 = d.iter().map(|x| x * x).sum();
            (ss > 0.0).then(|| {
                let norm = ss.sqrt();
                d.into_iter().map(|x| x / norm).collect()
            })
        })
        .collect();
    let k = columns.len();
    let mut out = vec![vec![None; k]; k];
    for a in 0..k {
        for b in a..k {
            if let (Some(x), Some(y)) = (&centered[a], &centered[b]) {
                let r = if a == b {
                    1.0
                } else {
                    x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>().clamp(-1.0, 1.0)
                };
                out[a][b] = Some(r);
                out[b][a] = Some(r);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// Exhaustive pair counting.
    fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
        let mut twice_wins = 0u64;
        let mut pairs = 0u64;
        for (i, &si) in scores.iter().enumerate().filter(|(i, _)| labels[*i] != 0) {
            let _ = i;
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] == 0 {
                    pairs += 1;
                    twice_wins += if si > sj { 2 } else if si == sj { 1 } else { 0 };
                }
            }
        }
        twice_wins as f64 / (2 * pairs) as f64
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(EvalError::DegenerateLabels { .. })));
        assert!(roc_auc(&[0.1], &[1, 0]).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(data in prop::collection::vec((0u8..20, 0u8..2), 2..200)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 7.0).collect();
            let labels: Vec<u8> = data.iter().map(|d| d.1).collect();
            if let Ok(a) = roc_auc(&scores, &labels) {
                prop_assert_eq!(a, auc_pairs(&scores, &labels));
                let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
                prop_assert_eq!(roc_auc(&transformed, &labels).unwrap(), a);
            }
        }

        #[test]
        fn auc_complement_without_ties(mut data in prop::collection::vec((0.0f64..1.0, 0u8..2), 2..200)) {
            data.sort_by(|a, b| a.0.total_cmp(&b.0));
            data.dedup_by(|a, b| a.0 == b.0);
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<u8> = data.iter().map(|d| d.1).collect();
            let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
            if let (Ok(a), Ok(b)) = (roc_auc(&scores, &labels), roc_auc(&scores, &flipped)) {
                prop_assert!((a + b - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn split_partitions(n in 10usize..500, frac in 0.01f64..0.99, seed in 0u64..1000, stratify: bool) {
            let labels: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
            let spec = SplitSpec { test_fraction: frac, seed, stratify };
            let (train, test) = train_test_split(n, Some(&labels), &spec).unwrap();
            prop_assert_eq!(test.len(), (frac * n as f64).round() as usize);
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(train_test_split(n, Some(&labels), &spec).unwrap(), (train, test));
        }

        #[test]
        fn correlation_is_symmetric_psd(cols in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 12), 2..6)) {
            let m = correlation_matrix(&cols).unwrap();
            let k = cols.len();
            let valid: Vec<usize> = (0..k).filter(|&i| m[i][i].is_some()).collect();
            let dense = nalgebra::DMatrix::from_fn(valid.len(), valid.len(), |a, b| m[valid[a]][valid[b]].unwrap());
            for (a, row) in m.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    prop_assert_eq!(*v, m[b][a]);
                }
            }
            if !valid.is_empty() {
                let eig = dense.symmetric_eigenvalues();
                prop_assert!(eig.iter().all(|&e| e >= -1e-9), "{:?}", eig);
            }
        }
    }

    #[test]
    fn split_examples() {
        let (train, test) = train_test_split(100, None, &SplitSpec::default()).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        assert!(train_test_split(100, None, &SplitSpec { test_fraction: 1.0, ..Default::default() }).is_err());
        assert!(train_test_split(5, None, &SplitSpec::default()).is_err());
    }

    #[test]
    fn stats_examples() {
        let names = vec!["c".to_string(), "v".to_string()];
        let cols = vec![vec![4.0, 4.0, 4.0, 9.0], vec![1.0, 2.0, 3.0, 7.0]];
        let rows = descriptive_stats(&names, &cols, &[0, 0, 0, 1]);
        assert_eq!(rows[0].without_accidents.std, Some(0.0));
        assert_eq!(rows[1].without_accidents.mean, Some(2.0));
        assert_eq!(rows[1].without_accidents.std, Some(1.0));
        assert_eq!(rows[1].with_accidents.std, None);
        let empty = descriptive_stats(&names, &cols, &[0, 0, 0, 0]);
        assert_eq!(empty[0].with_accidents.mean, None);
    }

    #[test]
    fn correlation_examples() {
        let x = vec![1.0, 2.0, 4.0, 8.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let m = correlation_matrix(&[x.clone(), neg, vec![3.0; 4]]).unwrap();
        assert_abs_diff_eq!(m[0][0].unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[0][1].unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(m[0][2], None);
        assert!(correlation_matrix(&[vec![1.0]]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        assert!(correlation_matrix(&[a, b]).unwrap()[0][1].unwrap().abs() < 0.05);
    }

    fn noise_design(n: usize, seed: u64) -> DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random()).collect()).collect();
        let y = (0..n).map(|_| (rng.random::<f64>() < 0.3) as u8).collect();
        DesignMatrix::from_columns(vec!["x1".into(), "x2".into(), "x3".into()], cols, y).unwrap()
    }

    #[test]
    fn noise_features_give_chance_auc() {
        let d = noise_design(5000, 5);
        let r = evaluate_model(&d, "any", &SplitSpec::default(), 0.05, &FitOptions::default()).unwrap();
        assert!((r.auc_in_sample - 0.5).abs() < 0.05);
        assert!((r.auc_out_of_sample.unwrap() - 0.5).abs() < 0.05);
        assert_eq!((r.n_train, r.n_test), (4500, 500));
    }

    #[test]
    fn ablation_edge_cases() {
        let d = noise_design(500, 6);
        let none: [&str; 0] = [];
        let r = ablation_compare(&d, "any", &none, &FitOptions::default()).unwrap();
        assert_eq!(r.difference(), 0.0);
        let all = ablation_compare(&d, "any", &["x1", "x2", "x3"], &FitOptions::default()).unwrap();
        assert_abs_diff_eq!(all.r2_without, 0.0, epsilon = 1e-12);
    }
}
