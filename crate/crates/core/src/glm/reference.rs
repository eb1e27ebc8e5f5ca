//! Published reference coefficients for the four accident models.
//!
//! Values are as printed (three decimals). Mileage was printed as 0.000 with
//! a 0.000 standard error, so its coefficient is unknown beyond its sign and
//! it is excluded from scoring. P-values were only published as star
//! levels and are left empty.

use super::{FittedModel, ModelSource, INTERCEPT};
use crate::labeling::Target;

pub const REFERENCE_N_OBS: usize = 5050;

struct Published {
    target: Target,
    coefs: &'static [(&'static str, f64, f64)],
    constant: (f64, f64),
    log_likelihood: f64,
    aic: f64,
}

const PUBLISHED: [Published; 4] = [
    Published {
        target: Target::Any,
        coefs: &[
            ("mileage", 0.000, 0.000),
            ("a1", 0.010, 0.003),
            ("a2", -0.029, 0.013),
            ("max_mj_sp", 0.004, 0.001),
            ("avg_sp", -0.020, 0.006),
            ("max_n_sp", 0.005, 0.001),
        ],
        constant: (-2.880, 0.196),
        log_likelihood: -2080.0,
        aic: 4174.6,
    },
    Published {
        target: Target::Weak,
        coefs: &[
            ("mileage", 0.000, 0.000),
            ("a1", 0.007, 0.003),
            ("max_mj_sp", 0.009, 0.002),
            ("s1", -0.047, 0.013),
            ("avg_sp", -0.021, 0.007),
        ],
        constant: (-3.352, 0.249),
        log_likelihood: -1303.0,
        aic: 2618.3,
    },
    Published {
        target: Target::Medium,
        coefs: &[
            ("mileage", 0.000, 0.000),
            ("a1", 0.006, 0.003),
            ("max_n_sp", 0.004, 0.002),
            ("d_night_m", 0.004, 0.002),
        ],
        constant: (-3.863, 0.229),
        log_likelihood: -1038.0,
        aic: 2087.4,
    },
    Published {
        target: Target::Strong,
        coefs: &[
            ("max_ej_sp", 0.007, 0.003),
            ("a1", 0.022, 0.006),
            ("a2", -0.119, 0.042),
            ("s1", 0.017, 0.005),
            ("max_n_sp", 0.005, 0.003),
        ],
        constant: (-5.641, 0.388),
        log_likelihood: -480.0,
        aic: 972.7,
    },
];

/// The published model for one target, read-only scoring bundle.
///
/// `log_likelihood` and `aic` are the printed values; the log-likelihood was
/// rounded to an integer, so the AIC identity holds only to within ±1.
pub fn paper_reference(target: Target) -> FittedModel {
    let p = PUBLISHED.iter().find(|p| p.target == target).expect("all targets published");
    let mut columns = vec![INTERCEPT.to_string()];
    let mut coefficients = vec![p.constant.0];
    let mut std_errors = vec![p.constant.1];
    let mut non_scorable = Vec::new();
    for &(name, beta, se) in p.coefs {
        columns.push(name.to_string());
        coefficients.push(beta);
        std_errors.push(se);
        if beta == 0.0 && se == 0.0 {
            non_scorable.push(name.to_string());
        }
    }
    let k = columns.len();
    FittedModel {
        target: target.as_str().to_string(),
        source: ModelSource::PaperReference,
        columns,
        coefficients,
        std_errors,
        p_values: vec![None; k],
        log_likelihood: p.log_likelihood,
        null_log_likelihood: None,
        aic: p.aic,
        n_obs: REFERENCE_N_OBS,
        converged: true,
        iterations: 0,
        score_norm: None,
        non_scorable,
        tool_version: crate::TOOL_VERSION.to_string(),
        provenance: None,
    }
}

/// Candidate feature set for a target: the indicators of its published
/// model, in published order.
pub fn default_candidates(target: Target) -> Vec<&'static str> {
    let p = PUBLISHED.iter().find(|p| p.target == target).expect("all targets published");
    p.coefs.iter().map(|c| c.0).collect()
}

/// All four published models, in target order.
pub fn paper_reference_models() -> Vec<FittedModel> {
    Target::ALL.iter().map(|&t| paper_reference(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn all_accidents_model() {
        let m = paper_reference(Target::Any);
        assert_eq!(m.k(), 7);
        assert_eq!(m.non_scorable, vec!["mileage".to_string()]);
        assert_eq!(m.required_features(), vec!["a1", "a2", "max_mj_sp", "avg_sp", "max_n_sp"]);
        let p = m.predict_proba(|_| Some(0.0)).unwrap();
        assert_abs_diff_eq!(p, 1.0 / (1.0 + 2.880f64.exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(p, 0.053151, epsilon = 1e-6);
        // Published log-likelihood is rounded to an integer.
        assert!((2.0 * m.k() as f64 - 2.0 * m.log_likelihood - m.aic).abs() <= 1.0);
    }

    #[test]
    fn strong_model_has_no_mileage() {
        let m = paper_reference(Target::Strong);
        assert!(m.non_scorable.is_empty());
        assert_eq!(m.coefficient("a2"), Some(-0.119));
        assert!(matches!(
            m.predict_proba(|n| (n != "s1").then_some(0.0)),
            Err(crate::glm::GlmError::MissingFeature(f)) if f == "s1"
        ));
    }

    #[test]
    fn json_round_trip() {
        for m in paper_reference_models() {
            let back = FittedModel::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
        }
        assert!(FittedModel::from_json("{}").is_err());
    }
}
