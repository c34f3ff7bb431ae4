//! Forward, forward–backward and Viterbi recursions, all in log space.

use serde::{Deserialize, Serialize};

use super::emission::PreparedHmm;
use super::{CovariateVector, HmmError, HmmModel};

/// One athlete's career: a PC-score vector and covariates per race, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeq {
    pub id: String,
    pub scores: Vec<Vec<f64>>,
    pub covariates: Vec<CovariateVector>,
}

impl ObservationSeq {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn check(&self, model: &HmmModel) -> Result<(), HmmError> {
        if self.scores.is_empty() {
            return Err(HmmError::EmptySequence(self.id.clone()));
        }
        if self.covariates.len() != self.scores.len() {
            return Err(HmmError::DimensionMismatch(format!(
                "sequence {:?}: {} score vectors but {} covariate vectors",
                self.id,
                self.scores.len(),
                self.covariates.len()
            )));
        }
        if let Some(y) = self.scores.iter().find(|y| y.len() != model.n_pc) {
            return Err(HmmError::DimensionMismatch(format!(
                "sequence {:?}: score vector of length {}, model has {} PCs",
                self.id,
                y.len(),
                model.n_pc
            )));
        }
        if self.scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(HmmError::NonFinite(format!("scores of sequence {:?}", self.id)));
        }
        for x in &self.covariates {
            model.design.validate(x)?;
        }
        Ok(())
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log forward variables `α_t(j) = log p(y_1..y_t, s_t = j)`.
pub(crate) fn forward_log(hmm: &PreparedHmm<'_>, log_b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = hmm.n_states();
    let mut alpha = Vec::with_capacity(log_b.len());
    alpha.push((0..n).map(|j| hmm.log_initial[j] + log_b[0][j]).collect::<Vec<f64>>());
    let mut terms = vec![0.0; n];
    for b in &log_b[1..] {
        let prev = alpha.last().expect("alpha is non-empty");
        let next = (0..n)
            .map(|j| {
                for i in 0..n {
                    terms[i] = prev[i] + hmm.log_transition(i, j);
                }
                log_sum_exp(&terms) + b[j]
            })
            .collect();
        alpha.push(next);
    }
    alpha
}

/// Log backward variables `β_t(i) = log p(y_{t+1}..y_T | s_t = i)`.
pub(crate) fn backward_log(hmm: &PreparedHmm<'_>, log_b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = hmm.n_states();
    let t_len = log_b.len();
    let mut beta = vec![vec![0.0; n]; t_len];
    let mut terms = vec![0.0; n];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..n {
            for j in 0..n {
                terms[j] = hmm.log_transition(i, j) + log_b[t + 1][j] + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&terms);
        }
    }
    beta
}

/// Smoothed state posteriors and pairwise transition posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBackward {
    /// `gamma[t][j] = p(s_t = j | y)`.
    pub gamma: Vec<Vec<f64>>,
    /// `xi[t][i * n + j] = p(s_t = i, s_{t+1} = j | y)`, for t < T − 1.
    pub xi: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

pub(crate) fn forward_backward_log(hmm: &PreparedHmm<'_>, log_b: &[Vec<f64>]) -> Result<ForwardBackward, HmmError> {
    let n = hmm.n_states();
    let alpha = forward_log(hmm, log_b);
    let beta = backward_log(hmm, log_b);
    let ll = log_sum_exp(alpha.last().expect("non-empty"));
    if !ll.is_finite() {
        return Err(HmmError::NonFinite(format!("log-likelihood {ll}")));
    }
    let gamma = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| {
            let mut g: Vec<f64> = a.iter().zip(b).map(|(a, b)| (a + b - ll).exp()).collect();
            let s: f64 = g.iter().sum();
            g.iter_mut().for_each(|v| *v /= s);
            g
        })
        .collect();
    let mut xi = Vec::with_capacity(log_b.len().saturating_sub(1));
    for t in 0..log_b.len().saturating_sub(1) {
        let mut x = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                x[i * n + j] =
                    (alpha[t][i] + hmm.log_transition(i, j) + log_b[t + 1][j] + beta[t + 1][j] - ll).exp();
            }
        }
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= s);
        xi.push(x);
    }
    Ok(ForwardBackward {
        gamma,
        xi,
        log_likelihood: ll,
    })
}

/// Max-product path. Among equally probable paths the one with the lowest
/// final state wins, then the lowest predecessor, and so on backwards.
pub(crate) fn viterbi_log(hmm: &PreparedHmm<'_>, log_b: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = hmm.n_states();
    let t_len = log_b.len();
    let mut delta: Vec<f64> = (0..n).map(|j| hmm.log_initial[j] + log_b[0][j]).collect();
    let mut back = vec![vec![0usize; n]; t_len];
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; n];
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, d) in delta.iter().enumerate() {
                let v = d + hmm.log_transition(i, j);
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + log_b[t][j];
            back[t][j] = arg;
        }
        delta = next;
    }
    let mut last = 0;
    let mut best = f64::NEG_INFINITY;
    for (j, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            last = j;
        }
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    (path, best)
}

pub fn forward_log_likelihood(model: &HmmModel, seq: &ObservationSeq) -> Result<f64, HmmError> {
    seq.check(model)?;
    let hmm = PreparedHmm::new(model)?;
    let log_b = hmm.log_emissions(&seq.scores, &seq.covariates);
    let ll = log_sum_exp(forward_log(&hmm, &log_b).last().expect("non-empty"));
    if !ll.is_finite() {
        return Err(HmmError::NonFinite(format!("log-likelihood {ll}")));
    }
    Ok(ll)
}

pub fn forward_backward(model: &HmmModel, seq: &ObservationSeq) -> Result<ForwardBackward, HmmError> {
    seq.check(model)?;
    let hmm = PreparedHmm::new(model)?;
    let log_b = hmm.log_emissions(&seq.scores, &seq.covariates);
    forward_backward_log(&hmm, &log_b)
}

/// Per-race posteriors and the Viterbi path for one career.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedCareer {
    pub athlete_id: String,
    pub posteriors: Vec<Vec<f64>>,
    /// 1-based state labels.
    pub viterbi_path: Vec<usize>,
    pub viterbi_log_prob: f64,
    pub log_likelihood: f64,
}

impl DecodedCareer {
    /// Viterbi path as 0-based state indices.
    pub fn path_indices(&self) -> Vec<usize> {
        self.viterbi_path.iter().map(|s| s - 1).collect()
    }
}

impl PreparedHmm<'_> {
    pub fn decode(&self, seq: &ObservationSeq) -> Result<DecodedCareer, HmmError> {
        seq.check(self.model)?;
        let log_b = self.log_emissions(&seq.scores, &seq.covariates);
        let fb = forward_backward_log(self, &log_b)?;
        let (path, viterbi_log_prob) = viterbi_log(self, &log_b);
        Ok(DecodedCareer {
            athlete_id: seq.id.clone(),
            posteriors: fb.gamma,
            viterbi_path: path.into_iter().map(|s| s + 1).collect(),
            viterbi_log_prob,
            log_likelihood: fb.log_likelihood,
        })
    }
}

pub fn viterbi_decode(model: &HmmModel, seq: &ObservationSeq) -> Result<DecodedCareer, HmmError> {
    PreparedHmm::new(model)?.decode(seq)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{toy_model, toy_sequence};
    use super::super::{log_emission_density, Design};
    use super::*;

    /// Every path with its joint log-probability, summed in the same order as
    /// the Viterbi recursion.
    fn all_paths(model: &HmmModel, seq: &ObservationSeq) -> Vec<(Vec<usize>, f64)> {
        let n = model.n_states;
        let t_len = seq.len();
        let lb: Vec<Vec<f64>> = (0..t_len)
            .map(|t| {
                (0..n)
                    .map(|j| log_emission_density(model, j, &seq.covariates[t], &seq.scores[t]).unwrap())
                    .collect()
            })
            .collect();
        let total = n.pow(t_len as u32);
        (0..total)
            .map(|mut code| {
                let mut path = vec![0; t_len];
                for p in path.iter_mut() {
                    *p = code % n;
                    code /= n;
                }
                let mut s = model.initial[path[0]].ln() + lb[0][path[0]];
                for t in 1..t_len {
                    s = s + model.transition_prob(path[t - 1], path[t]).ln() + lb[t][path[t]];
                }
                (path, s)
            })
            .collect()
    }

    #[test]
    fn forward_matches_enumeration() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 2);
            let t = 2 + (seed as usize % 5);
            let m = toy_model(n, 3, Design::Age500, seed);
            let s = toy_sequence(&m, t, seed + 100);
            let paths = all_paths(&m, &s);
            let lps: Vec<f64> = paths.iter().map(|p| p.1).collect();
            let brute = log_sum_exp(&lps);
            let fwd = forward_log_likelihood(&m, &s).unwrap();
            assert!(((fwd - brute) / brute).abs() < 1e-10, "{fwd} vs {brute}");
        }
    }

    #[test]
    fn single_observation_and_single_state() {
        let m = toy_model(3, 2, Design::Age500, 8);
        let s = toy_sequence(&m, 1, 3);
        let direct: Vec<f64> = (0..3)
            .map(|j| m.initial[j].ln() + log_emission_density(&m, j, &s.covariates[0], &s.scores[0]).unwrap())
            .collect();
        assert!((forward_log_likelihood(&m, &s).unwrap() - log_sum_exp(&direct)).abs() < 1e-12);

        let m1 = toy_model(1, 2, Design::Age500, 8);
        let s = toy_sequence(&m1, 7, 3);
        let sum: f64 = (0..7)
            .map(|t| log_emission_density(&m1, 0, &s.covariates[t], &s.scores[t]).unwrap())
            .sum();
        assert!((forward_log_likelihood(&m1, &s).unwrap() - sum).abs() < 1e-10);
        let fb = forward_backward(&m1, &s).unwrap();
        assert!(fb.gamma.iter().all(|g| (g[0] - 1.0).abs() < 1e-15));
        let d = viterbi_decode(&m1, &s).unwrap();
        assert_eq!(d.viterbi_path, vec![1; 7]);
    }

    #[test]
    fn posteriors_match_enumeration_and_marginalize() {
        for seed in 0..10 {
            let n = 2 + (seed as usize % 2);
            let t = 2 + (seed as usize % 4);
            let m = toy_model(n, 2, Design::Age1000, seed + 50);
            let s = toy_sequence(&m, t, seed);
            let paths = all_paths(&m, &s);
            let z = log_sum_exp(&paths.iter().map(|p| p.1).collect::<Vec<_>>());
            let fb = forward_backward(&m, &s).unwrap();
            for step in 0..t {
                for j in 0..n {
                    let brute: f64 = paths.iter().filter(|p| p.0[step] == j).map(|p| (p.1 - z).exp()).sum();
                    assert!((fb.gamma[step][j] - brute).abs() < 1e-10);
                }
                assert!((fb.gamma[step].iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
            for step in 0..t - 1 {
                for i in 0..n {
                    let row: f64 = (0..n).map(|j| fb.xi[step][i * n + j]).sum();
                    assert!((row - fb.gamma[step][i]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn viterbi_matches_enumeration() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 2);
            let t = 2 + (seed as usize % 5);
            let m = toy_model(n, 2, Design::Age500, seed + 7);
            let s = toy_sequence(&m, t, seed + 9);
            let best = all_paths(&m, &s)
                .into_iter()
                .fold(None::<(Vec<usize>, f64)>, |acc, p| match acc {
                    Some(a) if a.1 >= p.1 => Some(a),
                    _ => Some(p),
                })
                .unwrap();
            let d = viterbi_decode(&m, &s).unwrap();
            assert_eq!(d.path_indices(), best.0);
            assert_eq!(d.viterbi_log_prob, best.1);
        }
    }

    #[test]
    fn ties_go_to_lower_index() {
        let mut m = toy_model(3, 2, Design::Age500, 1);
        let e = m.states[0].clone();
        m.states = vec![e.clone(), e.clone(), e];
        m.initial = vec![1.0 / 3.0; 3];
        m.transition = vec![1.0 / 3.0; 9];
        let s = toy_sequence(&m, 5, 2);
        let d = viterbi_decode(&m, &s).unwrap();
        assert_eq!(d.viterbi_path, vec![1; 5]);
    }

    #[test]
    fn bad_sequences_rejected() {
        let m = toy_model(2, 2, Design::Age500, 1);
        let mut s = toy_sequence(&m, 3, 1);
        s.scores[1].push(0.0);
        assert!(matches!(forward_log_likelihood(&m, &s), Err(HmmError::DimensionMismatch(_))));
        let empty = ObservationSeq {
            id: "e".into(),
            scores: vec![],
            covariates: vec![],
        };
        assert_eq!(forward_log_likelihood(&m, &empty), Err(HmmError::EmptySequence("e".into())));
    }
}
