//! Hidden Markov model over careers of PC-score vectors.
//!
//! One constant transition matrix and initial distribution are shared by
//! every athlete. Each state emits a multivariate Gaussian whose mean is a
//! linear function of the race covariates:
//! `μ_ij = β_ij0 + Σ_k β_ijk x_k` for PC `i` in state `j`.

mod align;
mod design;
mod em;
mod emission;
mod inference;
mod select;

pub use align::{align_states, hungarian};
pub use design::{CovariateVector, Design};
pub use em::{em_fit, em_fit_from, CovarianceMode, EmConfig, FitReport, InitialMode, RestartOutcome};
pub use emission::{emission_mean, log_emission_density, mixture_mean, PreparedHmm};
pub use inference::{
    forward_backward, forward_log_likelihood, viterbi_decode, DecodedCareer, ForwardBackward, ObservationSeq,
};
pub use select::{
    aic, choose_state_count, n_free_parameters, select_states, split_largest_state, SweepResult, SweepRow,
    SELECTION_FRACTION,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmmError {
    #[error("no observation sequences given")]
    NoSequences,
    #[error("sequence {0:?} is empty")]
    EmptySequence(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("covariance of state {state} is not positive definite")]
    NotPositiveDefinite { state: usize },
    #[error("unknown covariate level {level} for design {design}")]
    UnknownCovariateLevel { level: String, design: Design },
    #[error("invalid covariates: {0}")]
    InvalidCovariates(String),
    #[error("DegenerateState: state {state} responsibility mass {mass:e}")]
    DegenerateState { state: usize, mass: f64 },
    #[error("all {} EM restarts failed: {}", .0.len(), .0.join("; "))]
    AllRestartsFailed(Vec<String>),
    #[error("invalid state count: {0}")]
    InvalidStateCount(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

/// Emission parameters of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEmission {
    /// `n_pc` rows of `1 + m` coefficients: intercept, then one per covariate.
    pub coefficients: Vec<Vec<f64>>,
    /// Packed lower triangle of Σ, row by row: Σ00, Σ10, Σ11, Σ20, ...
    pub covariance_lower: Vec<f64>,
}

impl StateEmission {
    pub fn new(coefficients: Vec<Vec<f64>>, covariance: &DMatrix<f64>) -> Self {
        StateEmission {
            coefficients,
            covariance_lower: pack_lower(covariance),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        unpack_lower(&self.covariance_lower, self.coefficients.len())
    }

    pub fn intercepts(&self) -> Vec<f64> {
        self.coefficients.iter().map(|row| row[0]).collect()
    }
}

pub fn pack_lower(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * (m.nrows() + 1) / 2);
    for i in 0..m.nrows() {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn unpack_lower(packed: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in 0..=i {
            m[(i, j)] = packed[idx];
            m[(j, i)] = packed[idx];
            idx += 1;
        }
    }
    m
}

/// How states are numbered in a stored model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelOrdering {
    /// State 1 has the largest PC1 intercept.
    Pc1InterceptDescending,
    AsFitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_parameters: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    /// Covariate columns absent from (or constant in) the training data;
    /// their coefficients are held at zero.
    #[serde(default)]
    pub dropped_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "hmm")]
pub struct HmmModel {
    pub n_states: usize,
    pub n_pc: usize,
    pub design: Design,
    pub covariance_mode: CovarianceMode,
    pub initial: Vec<f64>,
    /// Row-major `n_states × n_states`; row i holds P(next = j | current = i).
    pub transition: Vec<f64>,
    pub states: Vec<StateEmission>,
    pub label_ordering: LabelOrdering,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitMetadata>,
}

impl HmmModel {
    pub fn transition_prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.n_states + to]
    }

    pub fn transition_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_states, self.n_states, &self.transition)
    }

    /// Columns of the design held at zero in this model.
    pub fn dropped_columns(&self) -> &[String] {
        self.fit.as_ref().map(|f| f.dropped_columns.as_slice()).unwrap_or(&[])
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        let n = self.n_states;
        if n == 0 {
            return Err(HmmError::InvalidStateCount("model has zero states".into()));
        }
        if self.initial.len() != n || self.transition.len() != n * n || self.states.len() != n {
            return Err(HmmError::DimensionMismatch(format!(
                "{n} states but initial {}, transition {}, emissions {}",
                self.initial.len(),
                self.transition.len(),
                self.states.len()
            )));
        }
        check_distribution("initial", &self.initial)?;
        for i in 0..n {
            check_distribution(&format!("transition row {}", i + 1), &self.transition[i * n..(i + 1) * n])?;
        }
        let p = 1 + self.design.n_covariates();
        for (j, s) in self.states.iter().enumerate() {
            if s.coefficients.len() != self.n_pc || s.coefficients.iter().any(|r| r.len() != p) {
                return Err(HmmError::DimensionMismatch(format!(
                    "state {} coefficients must be {} × {p}",
                    j + 1,
                    self.n_pc
                )));
            }
            if s.covariance_lower.len() != self.n_pc * (self.n_pc + 1) / 2 {
                return Err(HmmError::DimensionMismatch(format!(
                    "state {} covariance needs {} packed entries",
                    j + 1,
                    self.n_pc * (self.n_pc + 1) / 2
                )));
            }
            if s.coefficients.iter().flatten().chain(&s.covariance_lower).any(|v| !v.is_finite()) {
                return Err(HmmError::NonFinite(format!("state {} parameters", j + 1)));
            }
        }
        PreparedHmm::new(self).map(|_| ())
    }

    /// Returns the model with states renumbered: new state `k` is old state
    /// `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> HmmModel {
        let n = self.n_states;
        let mut out = self.clone();
        out.initial = perm.iter().map(|&p| self.initial[p]).collect();
        out.states = perm.iter().map(|&p| self.states[p].clone()).collect();
        out.transition = (0..n * n)
            .map(|idx| self.transition[perm[idx / n] * n + perm[idx % n]])
            .collect();
        out
    }

    /// Renumbers states by descending PC1 intercept.
    pub fn sorted_by_pc1_intercept(&self) -> HmmModel {
        let mut perm: Vec<usize> = (0..self.n_states).collect();
        perm.sort_by(|&a, &b| {
            self.states[b].coefficients[0][0].total_cmp(&self.states[a].coefficients[0][0])
        });
        let mut out = self.permuted(&perm);
        out.label_ordering = LabelOrdering::Pc1InterceptDescending;
        out
    }
}

pub(crate) fn check_distribution(name: &str, p: &[f64]) -> Result<(), HmmError> {
    if p.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(HmmError::InvalidProbabilities(format!("{name} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(HmmError::InvalidProbabilities(format!("{name} sums to {s}")));
    }
    Ok(())
}

/// Stationary distribution `π = π A` of a row-stochastic matrix, solved as a
/// linear system with the normalization replacing one balance equation.
pub fn stationary_distribution(transition: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = transition.nrows();
    let mut lhs = transition.transpose() - DMatrix::identity(n, n);
    let mut rhs = nalgebra::DVector::zeros(n);
    for j in 0..n {
        lhs[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let pi = lhs.lu().solve(&rhs)?;
    Some(pi.iter().copied().collect())
}
