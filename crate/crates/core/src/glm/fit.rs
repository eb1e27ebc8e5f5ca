//! Newton / IRLS maximum-likelihood fit.
//!
//! Iterations run on a column-scaled copy of the design (each feature divided
//! by its root mean square) so that raw-unit columns of very different
//! magnitude do not wreck the conditioning of the information matrix. The
//! estimates and covariance are mapped back to raw units before returning.

use nalgebra::{DMatrix, DVector};

use super::{sigmoid, DesignMatrix, FittedModel, GlmError, ModelSource};

/// Scaled-coefficient magnitude treated as divergence.
const SEPARATION_LIMIT: f64 = 30.0;
/// Relative Gram-Schmidt residual below which a column is a linear
/// combination of earlier ones.
const COLLINEARITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the max-norm of the score `Xᵀ(y − p)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: 1e-8, max_iter: 50 }
    }
}

/// Compensated (Neumaier) sum.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `ln(1 + e^x)` without overflow.
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood for linear predictors `eta`.
pub fn log_likelihood(eta: &[f64], y: &[u8]) -> f64 {
    neumaier(eta.iter().zip(y).map(|(&e, &yi)| yi as f64 * e - log1p_exp(e)))
}

fn soft_log_likelihood(eta: &[f64], y: &[f64]) -> f64 {
    neumaier(eta.iter().zip(y).map(|(&e, &yi)| yi * e - log1p_exp(e)))
}

/// Log-likelihood of the intercept-only model, in closed form.
pub fn null_log_likelihood(y: &[u8]) -> f64 {
    let n = y.len() as f64;
    let n1 = y.iter().filter(|&&v| v == 1).count() as f64;
    let n0 = n - n1;
    let term = |k: f64| if k > 0.0 { k * (k / n).ln() } else { 0.0 };
    term(n1) + term(n0)
}

struct Scaled {
    /// Row-major n×k scaled design, intercept first.
    x: Vec<f64>,
    k: usize,
    scale: Vec<f64>,
}

impl Scaled {
    fn new(design: &DesignMatrix) -> Result<Self, GlmError> {
        let n = design.n_rows();
        let k = design.feature_names().len() + 1;
        let names = design.column_names();
        let mut scale = vec![1.0; k];
        for j in 1..k {
            let ms = neumaier((0..n).map(|i| design.value(i, j).powi(2))) / n as f64;
            if ms <= 0.0 {
                return Err(GlmError::Collinearity { columns: vec![names[j].clone()] });
            }
            scale[j] = ms.sqrt();
        }
        let mut x = Vec::with_capacity(n * k);
        for i in 0..n {
            for (j, s) in scale.iter().enumerate() {
                x.push(design.value(i, j) / s);
            }
        }
        Ok(Scaled { x, k, scale })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    fn n(&self) -> usize {
        self.x.len() / self.k
    }

    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Rejects designs whose columns are linearly dependent, naming the column
/// that adds nothing and the earlier columns that span it.
fn check_collinearity(s: &Scaled, names: &[String]) -> Result<(), GlmError> {
    let n = s.n();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    // Each basis vector written as a combination of the original columns.
    let mut combos: Vec<Vec<f64>> = Vec::new();
    for j in 0..s.k {
        let col: Vec<f64> = (0..n).map(|i| s.row(i)[j]).collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r = col;
        let mut combo = vec![0.0; s.k];
        combo[j] = 1.0;
        for (q, t) in basis.iter().zip(&combos) {
            let proj: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= proj * qi;
            }
            for (c, ti) in combo.iter_mut().zip(t) {
                *c -= proj * ti;
            }
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= COLLINEARITY_TOL * norm {
            // combo now expresses a (near) zero vector: the columns involved.
            let columns = combo
                .iter()
                .enumerate()
                .filter(|(_, c)| c.abs() > 1e-6)
                .map(|(c, _)| names[c].clone())
                .collect();
            return Err(GlmError::Collinearity { columns });
        }
        basis.push(r.iter().map(|v| v / rnorm).collect());
        combos.push(combo.iter().map(|c| c / rnorm).collect());
    }
    Ok(())
}

struct State {
    beta: Vec<f64>,
    p: Vec<f64>,
    ll: f64,
}

fn evaluate(s: &Scaled, y: &[f64], beta: Vec<f64>) -> State {
    let eta = s.eta(&beta);
    let ll = soft_log_likelihood(&eta, y);
    let p = eta.into_iter().map(sigmoid).collect();
    State { beta, p, ll }
}

/// Score in scaled coordinates.
fn score(s: &Scaled, y: &[f64], p: &[f64]) -> Vec<f64> {
    (0..s.k)
        .map(|j| neumaier((0..s.n()).map(|i| s.row(i)[j] * (y[i] - p[i]))))
        .collect()
}

fn information(s: &Scaled, p: &[f64]) -> DMatrix<f64> {
    let k = s.k;
    let mut m = DMatrix::zeros(k, k);
    for (i, &pi) in p.iter().enumerate().take(s.n()) {
        let w = pi * (1.0 - pi);
        let row = s.row(i);
        for a in 0..k {
            let wa = w * row[a];
            for b in a..k {
                m[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            m[(a, b)] = m[(b, a)];
        }
    }
    m
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct NewtonFit {
    state: State,
    converged: bool,
    iterations: usize,
    raw_norm: f64,
}

fn newton(s: &Scaled, y: &[f64], names: &[String], opts: &FitOptions) -> Result<NewtonFit, GlmError> {
    let n = y.len() as f64;
    let mean = (y.iter().sum::<f64>() / n).clamp(1e-12, 1.0 - 1e-12);
    let mut start = vec![0.0; s.k];
    start[0] = (mean / (1.0 - mean)).ln();
    let mut state = evaluate(s, y, start);
    let mut converged = false;
    let mut iterations = 0;
    let mut raw_norm;

    loop {
        let g = score(s, y, &state.p);
        raw_norm = max_abs(&g.iter().zip(&s.scale).map(|(gj, sj)| gj * sj).collect::<Vec<_>>());
        if raw_norm <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let info = information(s, &state.p);
        let chol = info.cholesky().ok_or_else(|| GlmError::Collinearity { columns: names[1..].to_vec() })?;
        let step = chol.solve(&DVector::from_column_slice(&g));
        let stalled = max_abs(step.as_slice()) <= 1e-15 * (1.0 + max_abs(&state.beta));
        if stalled {
            converged = max_abs(&g) <= opts.tol;
            break;
        }

        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let cand: Vec<f64> = state.beta.iter().zip(step.iter()).map(|(b, d)| b + t * d).collect();
            let eval = evaluate(s, y, cand);
            if eval.ll >= state.ll - 1e-12 * (1.0 + state.ll.abs()) {
                next = Some(eval);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = next else {
            converged = max_abs(&g) <= opts.tol;
            break;
        };
        state = next;

        let diverging: Vec<String> = state
            .beta
            .iter()
            .zip(names)
            .filter(|(b, _)| b.abs() > SEPARATION_LIMIT)
            .map(|(_, name)| name.clone())
            .collect();
        if !diverging.is_empty() {
            return Err(GlmError::Separation { columns: diverging });
        }
    }

    Ok(NewtonFit {
        state,
        converged,
        iterations,
        raw_norm,
    })
}

/// Coefficients (raw units, intercept first) of the logistic model that best
/// fits expected outcomes `probs` in [0, 1]: the population projection of
/// an arbitrary probability model onto the design's columns.
pub fn fit_expected(design: &DesignMatrix, probs: &[f64], opts: &FitOptions) -> Result<Vec<f64>, GlmError> {
    if probs.len() != design.n_rows() {
        return Err(GlmError::Shape(format!("{} probabilities for {} rows", probs.len(), design.n_rows())));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(GlmError::InvalidInput(format!("probability {p} outside [0, 1]")));
    }
    let names = design.column_names();
    let s = Scaled::new(design)?;
    check_collinearity(&s, &names)?;
    let fit = newton(&s, probs, &names, opts)?;
    Ok(fit.state.beta.iter().zip(&s.scale).map(|(b, sj)| b / sj).collect())
}

/// Fits a logistic regression by Newton's method with step halving.
///
/// Converges when the raw-unit score max-norm is at most `tol`. When
/// floating-point rounding keeps the raw score of a large-magnitude column
/// just above `tol` even though Newton steps have stopped changing the
/// estimate, the fit is accepted once the scaled score is within `tol`; the
/// achieved norm is reported in `score_norm`.
pub fn fit_logistic(design: &DesignMatrix, target: &str, opts: &FitOptions) -> Result<FittedModel, GlmError> {
    let y = design.target();
    let n = y.len();
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == n {
        return Err(GlmError::DegenerateTarget {
            positives,
            negatives: n - positives,
        });
    }
    let names = design.column_names();
    let s = Scaled::new(design)?;
    check_collinearity(&s, &names)?;
    let k = s.k;
    let y_soft: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let fit = newton(&s, &y_soft, &names, opts)?;
    let (state, converged, iterations, raw_norm) = (fit.state, fit.converged, fit.iterations, fit.raw_norm);

    let info = information(&s, &state.p);
    let cov = info
        .try_inverse()
        .ok_or_else(|| GlmError::Collinearity { columns: names[1..].to_vec() })?;
    let coefficients: Vec<f64> = state.beta.iter().zip(&s.scale).map(|(b, sj)| b / sj).collect();
    let std_errors: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt() / s.scale[j]).collect();
    let p_values = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(&b, &se)| super::inference::wald_p(b, se))
        .collect();
    let ll = state.ll;
    Ok(FittedModel {
        target: target.to_string(),
        source: ModelSource::Fit,
        columns: names,
        coefficients,
        std_errors,
        p_values,
        log_likelihood: ll,
        null_log_likelihood: Some(null_log_likelihood(y)),
        aic: 2.0 * k as f64 - 2.0 * ll,
        n_obs: n,
        converged,
        iterations,
        score_norm: Some(raw_norm),
        non_scorable: Vec::new(),
        tool_version: crate::TOOL_VERSION.to_string(),
        provenance: None,
    })
}
