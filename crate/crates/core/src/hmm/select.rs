//! State-count sweep and AIC-based selection.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::em::{em_fit, em_fit_from, CovarianceMode, EmConfig};
use super::inference::forward_backward;
use super::{Design, HmmError, HmmModel, ObservationSeq};

/// An extra state is worth adding only while its AIC gain is at least this
/// fraction of the gain from the first step of the sweep.
pub const SELECTION_FRACTION: f64 = 0.05;

pub(crate) fn parameter_count(n_states: usize, n_pc: usize, m_active: usize, mode: CovarianceMode) -> usize {
    let n = n_states;
    let cov = match mode {
        CovarianceMode::Full => n * n_pc * (n_pc + 1) / 2,
        CovarianceMode::Diagonal => n * n_pc,
    };
    (n - 1) + n * (n - 1) + n * n_pc * (1 + m_active) + cov
}

/// Free parameters of a fitted model: initial distribution, transition rows,
/// regression coefficients for the active covariate columns, covariances.
pub fn n_free_parameters(model: &HmmModel) -> usize {
    let m_active = model.design.n_covariates() - model.dropped_columns().len();
    parameter_count(model.n_states, model.n_pc, m_active, model.covariance_mode)
}

pub fn aic(log_likelihood: f64, n_parameters: usize) -> f64 {
    2.0 * n_parameters as f64 - 2.0 * log_likelihood
}

/// One cell of the sweep. Failed cells keep the error message and have no
/// likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_states: usize,
    pub log_likelihood: Option<f64>,
    pub n_parameters: Option<usize>,
    pub aic: Option<f64>,
    pub converged: bool,
    /// Whether the kept fit came from splitting the previous model.
    pub nested: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub selected: usize,
    /// Fitted model per row; `None` where the cell failed.
    pub models: Vec<Option<HmmModel>>,
}

impl SweepResult {
    pub fn selected_model(&self) -> &HmmModel {
        let idx = self.rows.iter().position(|r| r.n_states == self.selected).expect("selected row exists");
        self.models[idx].as_ref().expect("selected cell was fitted")
    }
}

/// Applies the selection rule to `(n_states, aic)` pairs sorted by state
/// count with consecutive counts.
///
/// Returns the smallest `n` whose gain `AIC(n) - AIC(n+1)` drops below
/// [`SELECTION_FRACTION`] of the first gain. If no step qualifies the largest
/// count is returned; if the first gain is not positive the smallest is.
pub fn choose_state_count(rows: &[(usize, f64)]) -> usize {
    assert!(!rows.is_empty(), "choose_state_count: empty sweep");
    if rows.len() == 1 {
        return rows[0].0;
    }
    let gain = |i: usize| rows[i].1 - rows[i + 1].1;
    let base = gain(0);
    if !(base > 0.0) {
        return rows[0].0;
    }
    (0..rows.len() - 1)
        .find(|&i| gain(i) < SELECTION_FRACTION * base)
        .map(|i| rows[i].0)
        .unwrap_or(rows[rows.len() - 1].0)
}

/// Splits the most occupied state of `model` into two, perturbing the two
/// copies' intercepts in opposite directions along the state's principal
/// covariance axis. With `scale = 0` the likelihood is unchanged.
pub fn split_largest_state(model: &HmmModel, sequences: &[ObservationSeq], scale: f64) -> Result<HmmModel, HmmError> {
    let n = model.n_states;
    let mut mass = vec![0.0; n];
    for seq in sequences {
        let fb = forward_backward(model, seq)?;
        for g in &fb.gamma {
            for (m, v) in mass.iter_mut().zip(g) {
                *m += v;
            }
        }
    }
    let k = (0..n).max_by(|&a, &b| mass[a].total_cmp(&mass[b]).then(b.cmp(&a))).expect("n >= 1");

    let eig = SymmetricEigen::new(model.states[k].covariance());
    let top = eig.eigenvalues.imax();
    let dir: Vec<f64> = eig
        .eigenvectors
        .column(top)
        .iter()
        .map(|v| v * scale * eig.eigenvalues[top].max(0.0).sqrt())
        .collect();

    let n2 = n + 1;
    let mut out = model.clone();
    out.n_states = n2;
    out.fit = None;
    out.initial.push(model.initial[k] / 2.0);
    out.initial[k] /= 2.0;
    let src = |i: usize| if i == n { k } else { i };
    out.transition = vec![0.0; n2 * n2];
    for i in 0..n2 {
        for j in 0..n2 {
            let base = model.transition_prob(src(i), src(j));
            out.transition[i * n2 + j] = if src(j) == k { base / 2.0 } else { base };
        }
    }
    let mut copy = model.states[k].clone();
    for (row, d) in out.states[k].coefficients.iter_mut().zip(&dir) {
        row[0] += d;
    }
    for (row, d) in copy.coefficients.iter_mut().zip(&dir) {
        row[0] -= d;
    }
    out.states.push(copy);
    Ok(out)
}

/// Fits every state count in `n_min..=n_max` and applies
/// [`choose_state_count`].
///
/// Each count keeps the better of the random-restart fit and a fit started by
/// splitting the previous count's best model, so the log-likelihood column
/// does not decrease along the sweep.
pub fn select_states(
    sequences: &[ObservationSeq],
    design: Design,
    n_min: usize,
    n_max: usize,
    config: &EmConfig,
) -> Result<SweepResult, HmmError> {
    if n_min < 2 || n_max < n_min {
        return Err(HmmError::InvalidStateCount(format!(
            "sweep {n_min}..{n_max}: need 2 <= n_min <= n_max"
        )));
    }
    let ll = |m: &HmmModel| m.fit.as_ref().map(|f| f.log_likelihood).unwrap_or(f64::NEG_INFINITY);
    let mut rows = Vec::new();
    let mut models: Vec<Option<HmmModel>> = Vec::new();
    for n in n_min..=n_max {
        let random = em_fit(sequences, n, design, config).map(|(m, _)| m);
        let nested = match models.last() {
            Some(Some(prev)) => split_largest_state(prev, sequences, 0.25)
                .and_then(|split| em_fit_from(sequences, &split, config))
                .map(|(m, _)| m)
                .map_err(|e| log::info!("nested start for {n} states failed: {e}"))
                .ok(),
            _ => None,
        };
        let (best, from_nested) = match (random, nested) {
            (Ok(r), Some(s)) if ll(&s) > ll(&r) => (Ok(s), true),
            (Ok(r), _) => (Ok(r), false),
            (Err(_), Some(s)) => (Ok(s), true),
            (Err(e), None) => (Err(e), false),
        };
        match best {
            Ok(model) => {
                let fit = model.fit.as_ref().expect("fitted model has metadata");
                log::info!("{n} states: logL {:.4}, AIC {:.4}", fit.log_likelihood, fit.aic);
                rows.push(SweepRow {
                    n_states: n,
                    log_likelihood: Some(fit.log_likelihood),
                    n_parameters: Some(fit.n_parameters),
                    aic: Some(fit.aic),
                    converged: fit.converged,
                    nested: from_nested,
                    error: None,
                });
                models.push(Some(model));
            }
            Err(e) => {
                log::warn!("{n} states: fit failed: {e}");
                rows.push(SweepRow {
                    n_states: n,
                    log_likelihood: None,
                    n_parameters: None,
                    aic: None,
                    converged: false,
                    nested: false,
                    error: Some(e.to_string()),
                });
                models.push(None);
            }
        }
    }
    let pairs: Vec<(usize, f64)> = rows.iter().filter_map(|r| r.aic.map(|a| (r.n_states, a))).collect();
    if pairs.is_empty() {
        let errors = rows.iter().filter_map(|r| r.error.clone()).collect();
        return Err(HmmError::AllRestartsFailed(errors));
    }
    let selected = choose_state_count(&pairs);
    Ok(SweepResult { rows, selected, models })
}
