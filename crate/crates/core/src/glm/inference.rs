//! Wald tests, backward elimination, pseudo-R² and pricing.

use statrs::function::erf::erfc;

use super::{fit_logistic, DesignMatrix, FitOptions, FittedModel, GlmError};

/// Two-sided p-value for a standard-normal statistic.
pub fn wald_pvalue_from_z(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

pub(crate) fn wald_p(beta: f64, se: f64) -> Option<f64> {
    if se > 0.0 && se.is_finite() && beta.is_finite() {
        Some(wald_pvalue_from_z(beta / se))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldTest {
    pub column: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: Option<f64>,
    /// `None` flags a zero or non-finite standard error.
    pub p_value: Option<f64>,
}

impl WaldTest {
    /// Significance stars: `***` p < 0.001, `**` p < 0.01, `*` p < 0.05.
    pub fn stars(&self) -> &'static str {
        match self.p_value {
            Some(p) if p < 0.001 => "***",
            Some(p) if p < 0.01 => "**",
            Some(p) if p < 0.05 => "*",
            _ => "",
        }
    }
}

pub fn wald_pvalues(model: &FittedModel) -> Vec<WaldTest> {
    model
        .columns
        .iter()
        .zip(&model.coefficients)
        .zip(&model.std_errors)
        .map(|((column, &estimate), &std_error)| {
            let p_value = wald_p(estimate, std_error);
            WaldTest {
                column: column.clone(),
                estimate,
                std_error,
                z: p_value.map(|_| estimate / std_error),
                p_value,
            }
        })
        .collect()
}

/// Refits while any non-intercept coefficient has p > `alpha`, dropping the
/// single least significant column each round. Flagged p-values count as 1.
/// Ties go to the earlier column.
pub fn backward_eliminate(
    design: &DesignMatrix,
    target: &str,
    alpha: f64,
    opts: &FitOptions,
) -> Result<FittedModel, GlmError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(GlmError::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let mut current = design.clone();
    loop {
        let model = fit_logistic(&current, target, opts)?;
        let mut worst: Option<(usize, f64)> = None;
        for (j, p) in model.p_values.iter().enumerate().skip(1) {
            let p = p.unwrap_or(1.0);
            if p > alpha && worst.is_none_or(|(_, wp)| p > wp) {
                worst = Some((j, p));
            }
        }
        match worst {
            None => return Ok(model),
            Some((j, _)) => current = current.without(&[model.columns[j].as_str()])?,
        }
    }
}

/// `1 − logL(model) / logL(constant)`.
pub fn mcfadden_r2(model: &FittedModel, null_loglik: f64) -> Result<f64, GlmError> {
    if null_loglik == 0.0 || !null_loglik.is_finite() {
        return Err(GlmError::UndefinedR2);
    }
    Ok(1.0 - model.log_likelihood / null_loglik)
}

/// Premium = accident probability × predicted loss + admin costs + margin.
pub fn compute_premium(p_accident: f64, predicted_loss: f64, admin_costs: f64, margin: f64) -> Result<f64, GlmError> {
    if !(0.0..=1.0).contains(&p_accident) {
        return Err(GlmError::InvalidInput(format!("probability {p_accident} outside [0, 1]")));
    }
    for (name, v) in [("predicted loss", predicted_loss), ("admin costs", admin_costs), ("margin", margin)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(GlmError::InvalidInput(format!("{name} must be non-negative, got {v}")));
        }
    }
    Ok(p_accident * predicted_loss + admin_costs + margin)
}
