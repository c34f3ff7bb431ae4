//! Baum–Welch for several independent sequences sharing one parameter set.
//!
//! E-step: forward–backward per sequence. M-step: initial distribution from
//! the first-step posteriors, transitions from summed pairwise posteriors,
//! per-state regression coefficients by weighted least squares on the design
//! `[1, x_1, …, x_m]`, and per-state covariance from weighted residuals.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emission::PreparedHmm;
use super::inference::forward_backward_log;
use super::select::parameter_count;
use super::{stationary_distribution, FitMetadata, HmmError, HmmModel, LabelOrdering, ObservationSeq, StateEmission};
use super::Design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    Full,
    Diagonal,
}

/// How the initial state distribution is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMode {
    /// Shared vector re-estimated from the first-race posteriors.
    Estimated,
    /// Tied to the stationary distribution of the transition matrix. The
    /// likelihood is then no longer guaranteed to increase every iteration.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop when the relative log-likelihood gain falls below this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub covariance_mode: CovarianceMode,
    /// Added to the diagonal of every covariance after each M-step.
    pub covariance_floor: f64,
    /// A state whose total responsibility falls below this fails the run.
    pub min_state_mass: f64,
    pub self_transition_init: f64,
    pub kmeans_iters: usize,
    pub initial_mode: InitialMode,
    /// Renumber states by descending PC1 intercept after fitting.
    pub sort_states: bool,
    pub parallel: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 500,
            tol: 1e-6,
            restarts: 5,
            seed: 0,
            covariance_mode: CovarianceMode::Full,
            covariance_floor: 1e-8,
            min_state_mass: 1e-6,
            self_transition_init: 0.7,
            kmeans_iters: 20,
            initial_mode: InitialMode::Estimated,
            sort_states: true,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub restart: usize,
    pub seed: u64,
    pub log_likelihood: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n_states: usize,
    pub best_restart: usize,
    pub seed: u64,
    pub log_likelihood: f64,
    /// Log-likelihood of the best run at every iteration, starting from its
    /// initialization.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: Vec<RestartOutcome>,
    pub dropped_columns: Vec<String>,
    pub warnings: Vec<String>,
}

/// Seed of restart `r`: splitmix64 of the base seed offset by `r`.
pub(crate) fn restart_seed(base: u64, r: usize) -> u64 {
    let mut z = base.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Training data in flat form, shared by every restart.
struct Data<'a> {
    sequences: &'a [ObservationSeq],
    n_pc: usize,
    design: Design,
    /// Indices of covariate columns that vary in the data.
    active: Vec<usize>,
    dropped: Vec<String>,
    n_obs: usize,
}

impl<'a> Data<'a> {
    fn new(sequences: &'a [ObservationSeq], design: Design) -> Result<Self, HmmError> {
        let first = sequences.first().ok_or(HmmError::NoSequences)?;
        let n_pc = first
            .scores
            .first()
            .map(|y| y.len())
            .ok_or_else(|| HmmError::EmptySequence(first.id.clone()))?;
        // validate against a placeholder model of the right shape
        let shape = HmmModel {
            n_states: 1,
            n_pc,
            design,
            covariance_mode: CovarianceMode::Full,
            initial: vec![1.0],
            transition: vec![1.0],
            states: vec![],
            label_ordering: LabelOrdering::AsFitted,
            fit: None,
        };
        for s in sequences {
            s.check(&shape)?;
        }
        let m = design.n_covariates();
        let n_obs: usize = sequences.iter().map(|s| s.len()).sum();
        let mut sums = vec![0.0; m];
        for s in sequences {
            for x in &s.covariates {
                for (acc, v) in sums.iter_mut().zip(x.as_slice()) {
                    *acc += v;
                }
            }
        }
        let mut active = Vec::new();
        let mut dropped = Vec::new();
        for (c, &s) in sums.iter().enumerate() {
            if s == 0.0 || s == n_obs as f64 {
                dropped.push(design.column_names()[c].to_string());
            } else {
                active.push(c);
            }
        }
        Ok(Data {
            sequences,
            n_pc,
            design,
            active,
            dropped,
            n_obs,
        })
    }

    fn all_scores(&self) -> Vec<&[f64]> {
        self.sequences.iter().flat_map(|s| s.scores.iter().map(|y| y.as_slice())).collect()
    }

    fn global_covariance(&self) -> DMatrix<f64> {
        let d = self.n_pc;
        let ys = self.all_scores();
        let n = ys.len() as f64;
        let mut mean = DVector::zeros(d);
        for y in &ys {
            mean += DVector::from_column_slice(y);
        }
        mean /= n;
        let mut cov = DMatrix::zeros(d, d);
        for y in &ys {
            let r = DVector::from_column_slice(y) - &mean;
            cov += &r * r.transpose();
        }
        cov / n
    }
}

fn finish_covariance(mut cov: DMatrix<f64>, config: &EmConfig) -> DMatrix<f64> {
    if config.covariance_mode == CovarianceMode::Diagonal {
        cov = DMatrix::from_diagonal(&cov.diagonal());
    }
    cov = (&cov + cov.transpose()) * 0.5;
    for i in 0..cov.nrows() {
        cov[(i, i)] += config.covariance_floor;
    }
    cov
}

/// k-means++ seeding followed by Lloyd iterations on the raw score vectors.
fn kmeans(points: &[&[f64]], k: usize, iters: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].to_vec()];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = d.len() - 1;
            for (i, v) in d.iter().enumerate() {
                if u < *v {
                    idx = i;
                    break;
                }
                u -= v;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].to_vec());
    }
    let dim = points[0].len();
    for _ in 0..iters {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for p in points {
            let c = (0..k)
                .min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b])))
                .expect("k > 0");
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    centers
}

fn initial_model(data: &Data<'_>, n_states: usize, config: &EmConfig, rng: &mut ChaCha8Rng) -> HmmModel {
    let points = data.all_scores();
    let centers = kmeans(&points, n_states, config.kmeans_iters, rng);
    let cov = finish_covariance(data.global_covariance(), config);
    let m = data.design.n_covariates();
    let states = centers
        .into_iter()
        .map(|c| {
            let coefficients = c
                .into_iter()
                .map(|mu| {
                    let mut row = vec![0.0; 1 + m];
                    row[0] = mu;
                    row
                })
                .collect();
            StateEmission::new(coefficients, &cov)
        })
        .collect();
    let mut transition = vec![0.0; n_states * n_states];
    for i in 0..n_states {
        for j in 0..n_states {
            transition[i * n_states + j] = if n_states == 1 {
                1.0
            } else if i == j {
                config.self_transition_init
            } else {
                (1.0 - config.self_transition_init) / (n_states - 1) as f64
            };
        }
    }
    HmmModel {
        n_states,
        n_pc: data.n_pc,
        design: data.design,
        covariance_mode: config.covariance_mode,
        initial: vec![1.0 / n_states as f64; n_states],
        transition,
        states,
        label_ordering: LabelOrdering::AsFitted,
        fit: None,
    }
}

struct EStep {
    log_likelihood: f64,
    /// Flattened over all observations in sequence order.
    gamma: Vec<Vec<f64>>,
    first_gamma_sum: Vec<f64>,
    xi_sum: Vec<f64>,
}

fn e_step(model: &HmmModel, data: &Data<'_>) -> Result<EStep, HmmError> {
    let hmm = PreparedHmm::new(model)?;
    let n = model.n_states;
    let mut out = EStep {
        log_likelihood: 0.0,
        gamma: Vec::with_capacity(data.n_obs),
        first_gamma_sum: vec![0.0; n],
        xi_sum: vec![0.0; n * n],
    };
    for seq in data.sequences {
        let log_b = hmm.log_emissions(&seq.scores, &seq.covariates);
        let fb = forward_backward_log(&hmm, &log_b)?;
        out.log_likelihood += fb.log_likelihood;
        for (acc, g) in out.first_gamma_sum.iter_mut().zip(&fb.gamma[0]) {
            *acc += g;
        }
        for x in &fb.xi {
            for (acc, v) in out.xi_sum.iter_mut().zip(x) {
                *acc += v;
            }
        }
        out.gamma.extend(fb.gamma);
    }
    Ok(out)
}

fn m_step(model: &HmmModel, data: &Data<'_>, e: &EStep, config: &EmConfig) -> Result<HmmModel, HmmError> {
    let n = model.n_states;
    let d = data.n_pc;
    let m = data.design.n_covariates();
    let p = 1 + data.active.len();
    let mut next = model.clone();

    let n_seq = data.sequences.len() as f64;
    let estimated_initial: Vec<f64> = e.first_gamma_sum.iter().map(|g| g / n_seq).collect();
    for i in 0..n {
        let row = &e.xi_sum[i * n..(i + 1) * n];
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            for j in 0..n {
                next.transition[i * n + j] = row[j] / s;
            }
        }
    }
    next.initial = match config.initial_mode {
        InitialMode::Estimated => estimated_initial,
        InitialMode::Stationary => stationary_distribution(&next.transition_matrix())
            .filter(|pi| pi.iter().all(|v| *v >= 0.0))
            .unwrap_or(estimated_initial),
    };
    let s: f64 = next.initial.iter().sum();
    next.initial.iter_mut().for_each(|v| *v /= s);

    let design_row = |x: &[f64]| {
        let mut z = DVector::zeros(p);
        z[0] = 1.0;
        for (a, &c) in data.active.iter().enumerate() {
            z[1 + a] = x[c];
        }
        z
    };
    for j in 0..n {
        let mut xtx = DMatrix::<f64>::zeros(p, p);
        let mut xty = DMatrix::<f64>::zeros(p, d);
        let mut mass = 0.0;
        let mut idx = 0;
        for seq in data.sequences {
            for (y, x) in seq.scores.iter().zip(&seq.covariates) {
                let g = e.gamma[idx][j];
                idx += 1;
                if g == 0.0 {
                    continue;
                }
                mass += g;
                let z = design_row(x.as_slice());
                xtx += &z * z.transpose() * g;
                xty += &z * DVector::from_column_slice(y).transpose() * g;
            }
        }
        if mass < config.min_state_mass {
            return Err(HmmError::DegenerateState { state: j, mass });
        }
        let coef = match xtx.clone().cholesky() {
            Some(ch) => ch.solve(&xty),
            None => {
                log::debug!("state {j}: weighted design is singular, using pseudo-inverse");
                xtx.pseudo_inverse(1e-12).map_err(|e| HmmError::NonFinite(e.to_string()))? * &xty
            }
        };
        let mut coefficients = vec![vec![0.0; 1 + m]; d];
        for (i, row) in coefficients.iter_mut().enumerate() {
            row[0] = coef[(0, i)];
            for (a, &c) in data.active.iter().enumerate() {
                row[1 + c] = coef[(1 + a, i)];
            }
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        idx = 0;
        for seq in data.sequences {
            for (y, x) in seq.scores.iter().zip(&seq.covariates) {
                let g = e.gamma[idx][j];
                idx += 1;
                if g == 0.0 {
                    continue;
                }
                let z = design_row(x.as_slice());
                let mu = coef.transpose() * z;
                let r = DVector::from_column_slice(y) - mu;
                cov += &r * r.transpose() * g;
            }
        }
        let cov = finish_covariance(cov / mass, config);
        next.states[j] = StateEmission::new(coefficients, &cov);
    }
    Ok(next)
}

struct RunResult {
    model: HmmModel,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn run_em(mut model: HmmModel, data: &Data<'_>, config: &EmConfig) -> Result<RunResult, HmmError> {
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let e = e_step(&model, data)?;
        for j in 0..model.n_states {
            let mass: f64 = e.gamma.iter().map(|g| g[j]).sum();
            if mass < config.min_state_mass {
                return Err(HmmError::DegenerateState { state: j, mass });
            }
        }
        let ll = e.log_likelihood;
        if let Some(&prev) = trace.last() {
            let gain: f64 = ll - prev;
            if gain < config.tol * f64::abs(prev) {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iterations == config.max_iter {
            break;
        }
        model = m_step(&model, data, &e, config)?;
        iterations += 1;
    }
    Ok(RunResult {
        model,
        trace,
        iterations,
        converged,
    })
}

fn finalize(mut model: HmmModel, data: &Data<'_>, run_ll: f64, seed: u64, run: &RunResult, config: &EmConfig) -> HmmModel {
    if config.sort_states {
        model = model.sorted_by_pc1_intercept();
    }
    let k = parameter_count(model.n_states, model.n_pc, data.active.len(), model.covariance_mode);
    model.fit = Some(FitMetadata {
        log_likelihood: run_ll,
        aic: 2.0 * k as f64 - 2.0 * run_ll,
        n_parameters: k,
        seed,
        iterations: run.iterations,
        converged: run.converged,
        dropped_columns: data.dropped.clone(),
    });
    model
}

fn common_warnings(data: &Data<'_>, n_states: usize, mode: CovarianceMode) -> Vec<String> {
    let mut warnings = Vec::new();
    let k = parameter_count(n_states, data.n_pc, data.active.len(), mode);
    if data.n_obs < k {
        let msg = format!("{} observations for {k} free parameters", data.n_obs);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if !data.dropped.is_empty() {
        let msg = format!("covariate columns dropped (absent or constant): {}", data.dropped.join(", "));
        log::warn!("{msg}");
        warnings.push(msg);
    }
    warnings
}

/// Fits an `n_states` model with `config.restarts` k-means++ initializations
/// and keeps the best log-likelihood (earliest restart on ties).
pub fn em_fit(
    sequences: &[ObservationSeq],
    n_states: usize,
    design: Design,
    config: &EmConfig,
) -> Result<(HmmModel, FitReport), HmmError> {
    if n_states == 0 {
        return Err(HmmError::InvalidStateCount("n_states must be at least 1".into()));
    }
    if config.restarts == 0 {
        return Err(HmmError::InvalidStateCount("restarts must be at least 1".into()));
    }
    let data = Data::new(sequences, design)?;
    if data.n_obs < n_states {
        return Err(HmmError::InvalidStateCount(format!(
            "{n_states} states for {} observations",
            data.n_obs
        )));
    }
    let one = |r: usize| {
        let seed = restart_seed(config.seed, r);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = initial_model(&data, n_states, config, &mut rng);
        (seed, run_em(init, &data, config))
    };
    let runs: Vec<(u64, Result<RunResult, HmmError>)> = if config.parallel {
        (0..config.restarts).into_par_iter().map(one).collect()
    } else {
        (0..config.restarts).map(one).collect()
    };
    reduce_runs(runs, &data, n_states, config)
}

/// Runs EM once from a caller-supplied starting model.
pub fn em_fit_from(
    sequences: &[ObservationSeq],
    init: &HmmModel,
    config: &EmConfig,
) -> Result<(HmmModel, FitReport), HmmError> {
    init.validate()?;
    let data = Data::new(sequences, init.design)?;
    let mut start = init.clone();
    start.covariance_mode = config.covariance_mode;
    start.fit = None;
    let run = run_em(start, &data, config);
    reduce_runs(vec![(config.seed, run)], &data, init.n_states, config)
}

fn reduce_runs(
    runs: Vec<(u64, Result<RunResult, HmmError>)>,
    data: &Data<'_>,
    n_states: usize,
    config: &EmConfig,
) -> Result<(HmmModel, FitReport), HmmError> {
    let mut outcomes = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, u64, RunResult)> = None;
    let mut errors = Vec::new();
    for (r, (seed, result)) in runs.into_iter().enumerate() {
        match result {
            Ok(run) => {
                let ll = *run.trace.last().expect("trace has at least one entry");
                outcomes.push(RestartOutcome {
                    restart: r,
                    seed,
                    log_likelihood: Some(ll),
                    iterations: run.iterations,
                    converged: run.converged,
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((_, _, b)) => ll > *b.trace.last().expect("non-empty"),
                };
                if better {
                    best = Some((r, seed, run));
                }
            }
            Err(e) => {
                log::info!("restart {r} (seed {seed}) failed: {e}");
                errors.push(format!("restart {r}: {e}"));
                outcomes.push(RestartOutcome {
                    restart: r,
                    seed,
                    log_likelihood: None,
                    iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (r, seed, run) = best.ok_or(HmmError::AllRestartsFailed(errors))?;
    let ll = *run.trace.last().expect("non-empty");
    let model = finalize(run.model.clone(), data, ll, seed, &run, config);
    let report = FitReport {
        n_states,
        best_restart: r,
        seed,
        log_likelihood: ll,
        log_likelihood_trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        restarts: outcomes,
        dropped_columns: data.dropped.clone(),
        warnings: common_warnings(data, n_states, config.covariance_mode),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{toy_model, toy_sequence};
    use super::super::{forward_log_likelihood, CovariateVector};
    use super::*;

    fn sequences(model: &HmmModel, n: usize, t: usize) -> Vec<ObservationSeq> {
        (0..n).map(|i| toy_sequence(model, t, 1000 + i as u64)).collect()
    }

    #[test]
    fn likelihood_never_decreases() {
        let truth = toy_model(3, 2, Design::Age500, 21);
        let seqs = sequences(&truth, 12, 15);
        for seed in 0..4 {
            let config = EmConfig {
                seed,
                restarts: 1,
                max_iter: 60,
                ..EmConfig::default()
            };
            let (_, report) = em_fit(&seqs, 3, Design::Age500, &config).unwrap();
            for w in report.log_likelihood_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn reported_likelihood_matches_forward() {
        let truth = toy_model(2, 2, Design::Age500, 3);
        let seqs = sequences(&truth, 6, 10);
        let (model, report) = em_fit(&seqs, 2, Design::Age500, &EmConfig { restarts: 2, ..EmConfig::default() }).unwrap();
        model.validate().unwrap();
        let ll: f64 = seqs.iter().map(|s| forward_log_likelihood(&model, s).unwrap()).sum();
        assert!((ll - report.log_likelihood).abs() < 1e-9 * ll.abs());
        let fit = model.fit.as_ref().unwrap();
        assert_eq!(fit.log_likelihood, report.log_likelihood);
        assert_eq!(model.label_ordering, LabelOrdering::Pc1InterceptDescending);
        assert!(model.states[0].coefficients[0][0] >= model.states[1].coefficients[0][0]);
    }

    #[test]
    fn deterministic_regardless_of_parallelism() {
        let truth = toy_model(2, 2, Design::Age500, 5);
        let seqs = sequences(&truth, 5, 8);
        let par = EmConfig { restarts: 4, seed: 77, ..EmConfig::default() };
        let ser = EmConfig { parallel: false, ..par.clone() };
        let a = em_fit(&seqs, 2, Design::Age500, &par).unwrap();
        let b = em_fit(&seqs, 2, Design::Age500, &ser).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn absent_covariate_column_is_dropped() {
        let truth = toy_model(2, 2, Design::Age500, 5);
        let mut seqs = sequences(&truth, 5, 8);
        for s in &mut seqs {
            for x in &mut s.covariates {
                x.0[3] = 0.0;
            }
        }
        let (model, report) = em_fit(&seqs, 2, Design::Age500, &EmConfig::default()).unwrap();
        assert_eq!(report.dropped_columns, vec!["WCO".to_string()]);
        assert!(model.states.iter().all(|s| s.coefficients.iter().all(|r| r[4] == 0.0)));
        assert_eq!(model.dropped_columns(), &["WCO".to_string()]);
    }

    #[test]
    fn diagonal_mode_has_zero_off_diagonals() {
        let truth = toy_model(2, 3, Design::Age500, 8);
        let seqs = sequences(&truth, 5, 8);
        let config = EmConfig {
            covariance_mode: CovarianceMode::Diagonal,
            ..EmConfig::default()
        };
        let (model, _) = em_fit(&seqs, 2, Design::Age500, &config).unwrap();
        for s in &model.states {
            let c = s.covariance();
            assert_eq!(c[(1, 0)], 0.0);
            assert_eq!(c[(2, 1)], 0.0);
        }
    }

    #[test]
    fn degenerate_state_fails_the_run() {
        // two identical observations cannot support three states
        let seqs = vec![ObservationSeq {
            id: "a".into(),
            scores: vec![vec![0.0, 0.0]; 3],
            covariates: vec![CovariateVector(vec![0.0; 4]); 3],
        }];
        let init = {
            let mut m = toy_model(2, 2, Design::Age500, 1);
            m.states[1].coefficients[0][0] = 1e6;
            m.states[1].coefficients[1][0] = 1e6;
            m.states[1].covariance_lower = vec![1e-6, 0.0, 1e-6];
            m
        };
        let err = em_fit_from(&seqs, &init, &EmConfig::default()).unwrap_err();
        assert!(matches!(err, HmmError::AllRestartsFailed(_)), "{err:?}");
        assert!(err.to_string().contains("DegenerateState"));
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(em_fit(&[], 2, Design::Age500, &EmConfig::default()), Err(HmmError::NoSequences));
        let truth = toy_model(2, 2, Design::Age500, 5);
        let seqs = sequences(&truth, 1, 2);
        assert!(matches!(
            em_fit(&seqs, 3, Design::Age500, &EmConfig::default()),
            Err(HmmError::InvalidStateCount(_))
        ));
    }

    #[test]
    fn restart_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..100).map(|r| restart_seed(42, r)).collect();
        let mut uniq = seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), seeds.len());
    }
}
