use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{CovariateVector, HmmError, HmmModel};

/// `μ_j(x) = β_j0 + Σ_k β_jk x_k` for every PC.
pub fn emission_mean(model: &HmmModel, state: usize, cov: &CovariateVector) -> Vec<f64> {
    model.states[state]
        .coefficients
        .iter()
        .map(|row| {
            let mut mu = row[0];
            for (b, x) in row[1..].iter().zip(cov.as_slice()) {
                mu += b * x;
            }
            mu
        })
        .collect()
}

/// Probability-weighted combination of the per-state emission means.
pub fn mixture_mean(model: &HmmModel, state_probs: &[f64], cov: &CovariateVector) -> Vec<f64> {
    let mut out = vec![0.0; model.n_pc];
    for (j, &p) in state_probs.iter().enumerate() {
        for (o, mu) in out.iter_mut().zip(emission_mean(model, j, cov)) {
            *o += p * mu;
        }
    }
    out
}

/// Multivariate normal log-density of `scores` under state `state`.
pub fn log_emission_density(
    model: &HmmModel,
    state: usize,
    cov: &CovariateVector,
    scores: &[f64],
) -> Result<f64, HmmError> {
    let prepared = PreparedState::new(model, state)?;
    Ok(prepared.log_density(&emission_mean(model, state, cov), scores))
}

#[derive(Debug, Clone)]
pub(crate) struct PreparedState {
    /// Lower Cholesky factor of Σ.
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl PreparedState {
    pub(crate) fn new(model: &HmmModel, state: usize) -> Result<Self, HmmError> {
        let sigma = model.states[state].covariance();
        let chol = sigma
            .cholesky()
            .ok_or(HmmError::NotPositiveDefinite { state })?
            .unpack();
        let d = model.n_pc as f64;
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(PreparedState {
            chol,
            log_norm: -0.5 * (d * (2.0 * PI).ln() + log_det),
        })
    }

    pub(crate) fn log_density(&self, mean: &[f64], scores: &[f64]) -> f64 {
        let diff = DVector::from_iterator(mean.len(), scores.iter().zip(mean).map(|(s, m)| s - m));
        let z = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * z.norm_squared()
    }
}

/// Log-space parameters and factored covariances, built once per model.
#[derive(Debug, Clone)]
pub struct PreparedHmm<'a> {
    pub(crate) model: &'a HmmModel,
    pub(crate) log_initial: Vec<f64>,
    pub(crate) log_transition: Vec<f64>,
    states: Vec<PreparedState>,
}

impl<'a> PreparedHmm<'a> {
    pub fn new(model: &'a HmmModel) -> Result<Self, HmmError> {
        let states = (0..model.n_states)
            .map(|j| PreparedState::new(model, j))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PreparedHmm {
            model,
            log_initial: model.initial.iter().map(|p| p.ln()).collect(),
            log_transition: model.transition.iter().map(|p| p.ln()).collect(),
            states,
        })
    }

    pub fn model(&self) -> &HmmModel {
        self.model
    }

    pub fn n_states(&self) -> usize {
        self.model.n_states
    }

    pub fn log_transition(&self, from: usize, to: usize) -> f64 {
        self.log_transition[from * self.model.n_states + to]
    }

    pub fn log_density(&self, state: usize, cov: &CovariateVector, scores: &[f64]) -> f64 {
        self.states[state].log_density(&emission_mean(self.model, state, cov), scores)
    }

    /// `T × n_states` matrix of emission log-densities.
    pub fn log_emissions(&self, scores: &[Vec<f64>], covariates: &[CovariateVector]) -> Vec<Vec<f64>> {
        scores
            .iter()
            .zip(covariates)
            .map(|(y, x)| (0..self.n_states()).map(|j| self.log_density(j, x, y)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::toy_model;
    use super::super::{Design, StateEmission};
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn identity_model(n_pc: usize) -> HmmModel {
        let mut m = toy_model(1, n_pc, Design::Age500, 0);
        m.states[0] = StateEmission::new(vec![vec![0.0; 5]; n_pc], &DMatrix::identity(n_pc, n_pc));
        m
    }

    #[test]
    fn zero_coefficients_give_zero_mean() {
        let mut m = toy_model(2, 4, Design::Age500, 9);
        for s in &mut m.states {
            for row in &mut s.coefficients {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let x = CovariateVector(vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(emission_mean(&m, 1, &x), vec![0.0; 4]);
    }

    #[test]
    fn baseline_mean_is_intercept() {
        let m = toy_model(3, 4, Design::Age1000, 2);
        for j in 0..3 {
            assert_eq!(emission_mean(&m, j, &Design::Age1000.baseline()), m.states[j].intercepts());
        }
    }

    #[test]
    fn one_hot_mixture_is_state_mean() {
        let m = toy_model(3, 4, Design::Age500, 5);
        let x = CovariateVector(vec![1.0, 0.0, 1.0, 0.0]);
        for j in 0..3 {
            let mut p = vec![0.0; 3];
            p[j] = 1.0;
            assert_eq!(mixture_mean(&m, &p, &x), emission_mean(&m, j, &x));
        }
    }

    #[test]
    fn standard_normal_at_mean() {
        let m = identity_model(4);
        let x = Design::Age500.baseline();
        let v = log_emission_density(&m, 0, &x, &[0.0; 4]).unwrap();
        assert!((v + 2.0 * (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn translation_invariance() {
        let mut m = toy_model(1, 3, Design::Age500, 7);
        let x = CovariateVector(vec![0.0, 1.0, 1.0, 0.0]);
        let y = [0.3, -0.2, 0.9];
        let before = log_emission_density(&m, 0, &x, &y).unwrap();
        let shift = [0.7, -1.1, 0.05];
        for (row, s) in m.states[0].coefficients.iter_mut().zip(shift) {
            row[0] += s;
        }
        let moved: Vec<f64> = y.iter().zip(shift).map(|(a, b)| a + b).collect();
        let after = log_emission_density(&m, 0, &x, &moved).unwrap();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one_monte_carlo() {
        // importance sampling from a wide isotropic proposal
        let m = toy_model(1, 2, Design::Age500, 11);
        let x = Design::Age500.baseline();
        let mean = emission_mean(&m, 0, &x);
        let scale = 3.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y: Vec<f64> = z.iter().zip(&mean).map(|(z, m)| m + scale * z).collect();
            let log_q = -(2.0 * PI).ln() - 2.0 * scale.ln() - 0.5 * z.iter().map(|v| v * v).sum::<f64>();
            acc += (log_emission_density(&m, 0, &x, &y).unwrap() - log_q).exp();
        }
        let estimate = acc / n as f64;
        assert!((estimate - 1.0).abs() < 0.02, "{estimate}");
    }

    #[test]
    fn non_spd_covariance_rejected() {
        let mut m = identity_model(2);
        m.states[0].covariance_lower = vec![1.0, 0.0, -1.0];
        assert_eq!(
            log_emission_density(&m, 0, &Design::Age500.baseline(), &[0.0, 0.0]),
            Err(HmmError::NotPositiveDefinite { state: 0 })
        );
    }
}
