//! Synthetic race corpora with known ground truth.
//!
//! A [`GeneratorSpec`] fixes a mean curve, a set of eigenfunctions, a score
//! model and a covariate schedule. Each athlete's races are produced by
//! drawing a state path and scores, building the curve
//! `μ + Σ β_j Φ_j`, sampling it at the 50 m segment midpoints and converting
//! the velocities to split times.
//!
//! Generated curves are shifted by a multiple of the component of the
//! constant function orthogonal to every Φ_j, chosen so the sampled
//! velocities have harmonic mean exactly 1. The shift leaves every score
//! unchanged, so with zero noise the normalized profile is the curve itself
//! and projecting it returns the drawn scores.

use std::path::Path;

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fbasis::{BasisConfig, BasisError, FunctionalBasis};
use crate::fpca::{orient_eigenfunction, FpcaModel};
use crate::hmm::{emission_mean, CovariateVector, Design, HmmError, HmmModel};
use crate::ingest::{
    build_career_sequences, segment_grid, write_race_csv, AgeGroup, CareerSequence, EventType, RaceRecord,
    SEGMENT_M,
};
use crate::reference::reference_model;

/// Tolerance below which a Gram–Schmidt residual counts as linearly dependent.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec at {path}: {reason}")]
    InvalidSpec { path: String, reason: String },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error("harmonic-mean correction failed: {0}")]
    Correction(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec {
        path: path.into(),
        reason: reason.into(),
    }
}

/// A curve on `[0, distance_m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CurveSpec {
    /// Linear interpolation through `(x, y)` points sorted by `x`, constant
    /// beyond the ends. Projected onto the basis in L².
    Piecewise { points: Vec<[f64; 2]> },
    /// Basis coefficients used as they are.
    Coefficients { coeffs: Vec<f64> },
}

impl CurveSpec {
    fn eval_piecewise(points: &[[f64; 2]], x: f64) -> f64 {
        if x <= points[0][0] {
            return points[0][1];
        }
        for w in points.windows(2) {
            let ([x0, y0], [x1, y1]) = (w[0], w[1]);
            if x <= x1 {
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            }
        }
        points[points.len() - 1][1]
    }

    fn validate(&self, path: &str, n_basis: usize) -> Result<(), SynthError> {
        match self {
            CurveSpec::Piecewise { points } => {
                if points.len() < 2 {
                    return Err(invalid(format!("{path}.points"), "need at least two points"));
                }
                for (i, p) in points.iter().enumerate() {
                    if !(p[0].is_finite() && p[1].is_finite()) {
                        return Err(invalid(format!("{path}.points[{i}]"), "non-finite value"));
                    }
                }
                if let Some(i) = points.windows(2).position(|w| w[1][0] <= w[0][0]) {
                    return Err(invalid(format!("{path}.points[{}]", i + 1), "x values must increase"));
                }
            }
            CurveSpec::Coefficients { coeffs } => {
                if coeffs.len() != n_basis {
                    return Err(invalid(
                        format!("{path}.coeffs"),
                        format!("expected {n_basis} coefficients, got {}", coeffs.len()),
                    ));
                }
                if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
                    return Err(invalid(format!("{path}.coeffs[{i}]"), "non-finite value"));
                }
            }
        }
        Ok(())
    }

    fn coefficients(&self, basis: &FunctionalBasis) -> Vec<f64> {
        match self {
            CurveSpec::Piecewise { points } => basis.project_function(|x| Self::eval_piecewise(points, x)),
            CurveSpec::Coefficients { coeffs } => coeffs.clone(),
        }
    }
}

/// Distribution of the per-race PC scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScoreModel {
    /// Independent zero-mean normals with the given variances; no states.
    Independent { variances: Vec<f64> },
    /// Hidden Markov chain with covariate-dependent Gaussian emissions.
    Hmm { model: HmmModel },
}

/// How ages, dates and event types evolve along a career.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub first_season: NaiveDate,
    /// Inclusive range of ages at the first race.
    pub start_age: [u32; 2],
    /// Athletes start in a season drawn uniformly from `0..=stagger_seasons`.
    pub stagger_seasons: u32,
    pub races_per_season: u32,
    /// Probabilities of Domestic, World Cup / Juniors and World
    /// Championships / Olympics events. Championship draws for U18 and U21
    /// athletes become World Cup / Juniors.
    pub event_probs: [f64; 3],
    /// Race counts vary uniformly by up to this many either side of the
    /// requested count (never below 1).
    pub race_count_jitter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "generator_spec")]
pub struct GeneratorSpec {
    pub distance_m: u32,
    pub basis: BasisConfig,
    pub mean_curve: CurveSpec,
    /// Orthonormalized (Gram–Schmidt in L², in this order) and oriented by
    /// the eigenfunction sign convention before use.
    pub eigenfunctions: Vec<CurveSpec>,
    pub scores: ScoreModel,
    pub schedule: ScheduleSpec,
    /// Standard deviation of additive noise on each normalized segment velocity.
    pub noise_sd: f64,
    /// Median finishing time in seconds.
    pub base_time_s: f64,
    /// Log-scale standard deviation of finishing time between races.
    pub time_sd: f64,
    pub seed: u64,
}

fn scale_points(points: &[[f64; 2]], sx: f64) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p[0] * sx, p[1]]).collect()
}

fn default_eigenfunctions(distance: f64) -> Vec<CurveSpec> {
    let s = distance / 500.0;
    [
        vec![[0.0, 1.0], [500.0, -1.0]],
        vec![[0.0, 0.0], [250.0, -0.5], [400.0, -0.3], [500.0, 1.0]],
        vec![[0.0, -1.0], [100.0, 1.0], [250.0, 0.0], [500.0, -0.5]],
        vec![[0.0, 0.5], [150.0, -1.0], [300.0, 1.0], [500.0, -0.5]],
    ]
    .iter()
    .map(|p| CurveSpec::Piecewise { points: scale_points(p, s) })
    .collect()
}

impl GeneratorSpec {
    /// 500 m: fast rise to a peak near 80 m, then a steady decline to about
    /// 0.95. Four-state chain with the reference coefficients.
    pub fn default_500m() -> Self {
        GeneratorSpec {
            distance_m: 500,
            basis: BasisConfig::default_for(500),
            mean_curve: CurveSpec::Piecewise {
                points: vec![[0.0, 0.78], [80.0, 1.08], [150.0, 1.06], [300.0, 1.0], [500.0, 0.95]],
            },
            eigenfunctions: default_eigenfunctions(500.0),
            scores: ScoreModel::Hmm {
                model: reference_model(Design::Age500, 0.05, 0.8),
            },
            schedule: ScheduleSpec {
                first_season: NaiveDate::from_ymd_opt(2012, 3, 1).expect("valid date"),
                start_age: [18, 24],
                stagger_seasons: 3,
                races_per_season: 4,
                event_probs: [0.6, 0.25, 0.15],
                race_count_jitter: 3,
            },
            noise_sd: 0.005,
            base_time_s: 110.0,
            time_sd: 0.03,
            seed: 1,
        }
    }

    /// 1000 m: same opening shape, a long plateau and a small late kick.
    pub fn default_1000m() -> Self {
        GeneratorSpec {
            distance_m: 1000,
            basis: BasisConfig::default_for(1000),
            mean_curve: CurveSpec::Piecewise {
                points: vec![
                    [0.0, 0.80],
                    [80.0, 1.07],
                    [200.0, 1.04],
                    [500.0, 0.99],
                    [750.0, 0.97],
                    [900.0, 0.98],
                    [1000.0, 1.0],
                ],
            },
            eigenfunctions: default_eigenfunctions(1000.0),
            scores: ScoreModel::Hmm {
                model: reference_model(Design::Age1000, 0.05, 0.8),
            },
            schedule: ScheduleSpec {
                first_season: NaiveDate::from_ymd_opt(2012, 3, 1).expect("valid date"),
                start_age: [16, 24],
                stagger_seasons: 3,
                races_per_season: 4,
                event_probs: [0.6, 0.25, 0.15],
                race_count_jitter: 3,
            },
            noise_sd: 0.005,
            base_time_s: 215.0,
            time_sd: 0.03,
            seed: 1,
        }
    }

    pub fn default_for(distance_m: u32) -> Option<Self> {
        match distance_m {
            500 => Some(Self::default_500m()),
            1000 => Some(Self::default_1000m()),
            _ => None,
        }
    }

    pub fn n_pc(&self) -> usize {
        self.eigenfunctions.len()
    }

    pub fn design(&self) -> Option<Design> {
        Design::for_distance(self.distance_m)
    }

    /// Checks every field, reporting the first problem with its JSON path.
    pub fn validate(&self) -> Result<(), SynthError> {
        let design = self
            .design()
            .ok_or_else(|| invalid("distance_m", format!("{} is not 500 or 1000", self.distance_m)))?;
        if self.basis.domain_m != self.distance_m {
            return Err(invalid("basis.domain_m", "must equal distance_m"));
        }
        FunctionalBasis::new(self.basis).map_err(|e| invalid("basis", e.to_string()))?;
        let nb = self.basis.n_basis;
        self.mean_curve.validate("mean_curve", nb)?;
        if self.eigenfunctions.is_empty() {
            return Err(invalid("eigenfunctions", "need at least one eigenfunction"));
        }
        if self.eigenfunctions.len() >= nb {
            return Err(invalid(
                "eigenfunctions",
                format!("at most {} eigenfunctions for {nb} basis functions", nb - 1),
            ));
        }
        for (j, e) in self.eigenfunctions.iter().enumerate() {
            e.validate(&format!("eigenfunctions[{j}]"), nb)?;
        }
        let n_pc = self.n_pc();
        match &self.scores {
            ScoreModel::Independent { variances } => {
                if variances.len() != n_pc {
                    return Err(invalid(
                        "scores.variances",
                        format!("expected {n_pc} variances, got {}", variances.len()),
                    ));
                }
                if let Some(i) = variances.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid(format!("scores.variances[{i}]"), "must be finite and non-negative"));
                }
            }
            ScoreModel::Hmm { model } => {
                if model.n_pc != n_pc {
                    return Err(invalid(
                        "scores.model.n_pc",
                        format!("{} does not match {n_pc} eigenfunctions", model.n_pc),
                    ));
                }
                if model.design != design {
                    return Err(invalid("scores.model.design", format!("expected {design}")));
                }
                model.validate().map_err(|e| invalid("scores.model", e.to_string()))?;
            }
        }
        let s = &self.schedule;
        if s.start_age[0] > s.start_age[1] {
            return Err(invalid("schedule.start_age", "range is reversed"));
        }
        if design == Design::Age500 && s.start_age[0] < 18 {
            return Err(invalid("schedule.start_age", "500 m careers cannot include U18 races"));
        }
        if s.races_per_season == 0 {
            return Err(invalid("schedule.races_per_season", "must be positive"));
        }
        if s.event_probs.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || (s.event_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(invalid("schedule.event_probs", "must be a probability vector"));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(invalid("noise_sd", "must be finite and non-negative"));
        }
        if !(self.base_time_s.is_finite() && self.base_time_s > 0.0) {
            return Err(invalid("base_time_s", "must be positive"));
        }
        if !(self.time_sd.is_finite() && self.time_sd >= 0.0) {
            return Err(invalid("time_sd", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Validates, builds the basis and orthonormalizes the eigenfunctions.
    pub fn prepare(&self) -> Result<PreparedSpec, SynthError> {
        self.validate()?;
        let basis = FunctionalBasis::new(self.basis)?;
        let gram = basis.gram_matrix();
        let mean_coeffs = self.mean_curve.coefficients(&basis);
        let mut phi: Vec<DVector<f64>> = Vec::new();
        for (j, e) in self.eigenfunctions.iter().enumerate() {
            let mut v = DVector::from_vec(e.coefficients(&basis));
            for p in &phi {
                let proj = (p.transpose() * &gram * &v)[(0, 0)];
                v -= p * proj;
            }
            let norm = (v.transpose() * &gram * &v)[(0, 0)].max(0.0).sqrt();
            if norm < ORTHONORMAL_TOL {
                return Err(invalid(
                    format!("eigenfunctions[{j}]"),
                    "linearly dependent on the preceding eigenfunctions",
                ));
            }
            v /= norm;
            orient_eigenfunction(&basis, v.as_mut_slice());
            phi.push(v);
        }
        let ones = DVector::from_element(basis.n_basis(), 1.0);
        let mut psi = ones.clone();
        for p in &phi {
            psi -= p * (p.transpose() * &gram * &ones)[(0, 0)];
        }
        let grid = segment_grid(self.distance_m);
        let design_matrix = basis.design_matrix(&grid)?;
        let psi_grid: Vec<f64> = (&design_matrix * &psi).iter().copied().collect();
        if psi_grid.iter().all(|v| v.abs() < ORTHONORMAL_TOL) {
            return Err(invalid(
                "eigenfunctions",
                "constants lie in their span, so the harmonic-mean correction is impossible",
            ));
        }
        Ok(PreparedSpec {
            spec: self.clone(),
            design: self.design().expect("validated"),
            basis,
            mean_coeffs,
            eigenfunctions: phi.into_iter().map(|v| v.iter().copied().collect()).collect(),
            psi: psi.iter().copied().collect(),
            design_matrix,
            psi_grid,
        })
    }
}

/// A validated spec with its basis and orthonormal eigenfunctions.
#[derive(Debug, Clone)]
pub struct PreparedSpec {
    pub spec: GeneratorSpec,
    pub design: Design,
    pub basis: FunctionalBasis,
    pub mean_coeffs: Vec<f64>,
    /// Orthonormal, sign-oriented eigenfunction coefficients.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Coefficients of the constant function's component orthogonal to the
    /// eigenfunctions.
    pub psi: Vec<f64>,
    design_matrix: DMatrix<f64>,
    psi_grid: Vec<f64>,
}

/// Ground truth for one race.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceTruth {
    pub race_date: NaiveDate,
    /// 1-based state in the spec's own numbering; absent for independent
    /// score models.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub state: Option<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareerTruth {
    pub athlete_id: String,
    pub races: Vec<RaceTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "synth_truth")]
pub struct DatasetTruth {
    pub seed: u64,
    pub distance_m: u32,
    pub n_pc: usize,
    pub athletes: Vec<CareerTruth>,
}

impl DatasetTruth {
    /// Per-athlete 0-based state paths.
    pub fn state_paths(&self) -> Vec<Vec<usize>> {
        self.athletes
            .iter()
            .map(|a| a.races.iter().filter_map(|r| r.state.map(|s| s - 1)).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledCareer {
    pub records: Vec<RaceRecord>,
    pub career: CareerSequence,
    pub truth: CareerTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<RaceRecord>,
    pub truth: DatasetTruth,
}

impl Dataset {
    pub fn to_csv(&self) -> String {
        write_race_csv(&self.records)
    }

    pub fn truth_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.truth).expect("truth serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, csv_path: &Path, truth_path: &Path) -> Result<(), SynthError> {
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| SynthError::Io { path, source }
        };
        std::fs::write(csv_path, self.to_csv()).map_err(io(csv_path))?;
        std::fs::write(truth_path, self.truth_json()).map_err(io(truth_path))?;
        Ok(())
    }
}

/// Draws a state path of length `t` from the model's chain.
pub fn sample_state_path<R: Rng + ?Sized>(model: &HmmModel, t: usize, rng: &mut R) -> Vec<usize> {
    let draw = |p: &[f64], rng: &mut R| {
        let mut u: f64 = rng.random();
        for (i, &pi) in p.iter().enumerate() {
            if u < pi {
                return i;
            }
            u -= pi;
        }
        // rounding left u just above the last cumulative bound
        p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1)
    };
    let n = model.n_states;
    let mut path = Vec::with_capacity(t);
    for k in 0..t {
        let s = if k == 0 {
            draw(&model.initial, rng)
        } else {
            let prev = path[k - 1];
            draw(&model.transition[prev * n..(prev + 1) * n], rng)
        };
        path.push(s);
    }
    path
}

/// One draw from `N(mean, L Lᵀ)`.
fn sample_normal<R: Rng + ?Sized>(mean: &[f64], chol: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let z = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| StandardNormal.sample(rng)));
    let v = chol * z;
    mean.iter().zip(v.iter()).map(|(m, e)| m + e).collect()
}

/// Emission scores for a given state and covariates.
pub fn sample_scores<R: Rng + ?Sized>(
    model: &HmmModel,
    state: usize,
    cov: &CovariateVector,
    rng: &mut R,
) -> Result<Vec<f64>, HmmError> {
    let chol = model.states[state]
        .covariance()
        .cholesky()
        .ok_or(HmmError::NotPositiveDefinite { state })?
        .unpack();
    Ok(sample_normal(&emission_mean(model, state, cov), &chol, rng))
}

fn age_group(age: u32) -> AgeGroup {
    match age {
        0..=17 => AgeGroup::U18,
        18..=20 => AgeGroup::U21,
        21..=22 => AgeGroup::U23,
        _ => AgeGroup::Open,
    }
}

impl PreparedSpec {
    /// Fpca model whose mean and eigenfunctions are the generating ones.
    /// Eigenvalues are the score variances for independent score models and
    /// zero otherwise.
    pub fn fpca_model(&self) -> FpcaModel {
        let n_pc = self.eigenfunctions.len();
        let eigenvalues = match &self.spec.scores {
            ScoreModel::Independent { variances } => variances.clone(),
            ScoreModel::Hmm { .. } => vec![0.0; n_pc],
        };
        let total: f64 = eigenvalues.iter().sum();
        FpcaModel {
            basis: self.spec.basis,
            n_pc,
            mean_coeffs: self.mean_coeffs.clone(),
            eigenfunction_coeffs: self.eigenfunctions.concat(),
            variance_explained: eigenvalues
                .iter()
                .map(|l| if total > 0.0 { l / total } else { 0.0 })
                .collect(),
            eigenvalues,
            total_variance: total,
            n_profiles: 0,
        }
    }

    /// Basis coefficients of `μ + Σ β_j Φ_j`.
    pub fn curve_coeffs(&self, scores: &[f64]) -> Vec<f64> {
        let mut c = self.mean_coeffs.clone();
        for (phi, b) in self.eigenfunctions.iter().zip(scores) {
            for (ci, p) in c.iter_mut().zip(phi) {
                *ci += b * p;
            }
        }
        c
    }

    /// Grid velocities of the curve for `scores`, shifted along ψ so their
    /// harmonic mean is 1.
    pub fn profile_values(&self, scores: &[f64]) -> Result<Vec<f64>, SynthError> {
        let coeffs = DVector::from_vec(self.curve_coeffs(scores));
        let base: Vec<f64> = (&self.design_matrix * coeffs).iter().copied().collect();
        let c = solve_harmonic_shift(&base, &self.psi_grid)?;
        Ok(base.iter().zip(&self.psi_grid).map(|(b, p)| b + c * p).collect())
    }

    /// Converts normalized velocities into split times for a race of total
    /// duration `total_s`.
    fn split_times(&self, v: &[f64], total_s: f64) -> Vec<f64> {
        let raw: Vec<f64> = v.iter().map(|vi| SEGMENT_M / vi).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|t| t * total_s / sum).collect()
    }

    fn schedule(&self, n_races: usize, rng: &mut ChaCha8Rng) -> Vec<(NaiveDate, AgeGroup, EventType)> {
        let s = &self.spec.schedule;
        let start_age = rng.random_range(s.start_age[0]..=s.start_age[1]);
        let offset = rng.random_range(0..=s.stagger_seasons);
        let gap = 240 / s.races_per_season.max(1);
        (0..n_races)
            .map(|k| {
                let season = offset + k as u32 / s.races_per_season;
                let slot = k as u32 % s.races_per_season;
                let days = 365 * season as u64 + (slot * gap) as u64 + rng.random_range(0..gap.max(1) as u64);
                let date = s.first_season.checked_add_days(Days::new(days)).expect("date in range");
                let age = age_group(start_age + season - offset);
                let u: f64 = rng.random();
                let mut event = if u < s.event_probs[0] {
                    EventType::Domestic
                } else if u < s.event_probs[0] + s.event_probs[1] {
                    EventType::WorldCupJuniors
                } else {
                    EventType::WorldChampsOlympics
                };
                if event == EventType::WorldChampsOlympics && matches!(age, AgeGroup::U18 | AgeGroup::U21) {
                    event = EventType::WorldCupJuniors;
                }
                (date, age, event)
            })
            .collect()
    }

    /// Generates one career of `n_races` races.
    pub fn sample_career(&self, athlete_id: &str, n_races: usize, rng: &mut ChaCha8Rng) -> Result<SampledCareer, SynthError> {
        let schedule = self.schedule(n_races, rng);
        let n_pc = self.eigenfunctions.len();
        let (states, scores): (Vec<Option<usize>>, Vec<Vec<f64>>) = match &self.spec.scores {
            ScoreModel::Independent { variances } => {
                let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
                let scores = (0..n_races)
                    .map(|_| {
                        sd.iter()
                            .map(|s| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                            .collect()
                    })
                    .collect();
                (vec![None; n_races], scores)
            }
            ScoreModel::Hmm { model } => {
                let path = sample_state_path(model, n_races, rng);
                let mut scores = Vec::with_capacity(n_races);
                for (&s, (_, age, event)) in path.iter().zip(&schedule) {
                    let x = self.design.covariates(*age, *event)?;
                    scores.push(sample_scores(model, s, &x, rng)?);
                }
                (path.into_iter().map(Some).collect(), scores)
            }
        };
        debug_assert!(scores.iter().all(|s| s.len() == n_pc));

        let mut records = Vec::with_capacity(n_races);
        for ((date, age, event), beta) in schedule.iter().zip(&scores) {
            let mut v = self.profile_values(beta)?;
            if self.spec.noise_sd > 0.0 {
                for vi in &mut v {
                    let e: f64 = StandardNormal.sample(rng);
                    *vi = (*vi + self.spec.noise_sd * e).max(0.05);
                }
            }
            let z: f64 = StandardNormal.sample(rng);
            let total = self.spec.base_time_s * (self.spec.time_sd * z).exp();
            records.push(RaceRecord {
                athlete_id: athlete_id.to_string(),
                race_date: *date,
                distance_m: self.spec.distance_m,
                segment_times_s: self.split_times(&v, total),
                age_group: *age,
                event_type: *event,
                race_phase: None,
            });
        }
        let career = build_career_sequences(&records)
            .expect("generated records are valid")
            .sequences
            .pop()
            .expect("one career");
        let truth = CareerTruth {
            athlete_id: athlete_id.to_string(),
            races: schedule
                .iter()
                .zip(states)
                .zip(scores)
                .map(|(((date, _, _), state), scores)| RaceTruth {
                    race_date: *date,
                    state: state.map(|s| s + 1),
                    scores,
                })
                .collect(),
        };
        Ok(SampledCareer { records, career, truth })
    }
}

/// Newton iteration for `c` with `n / Σ 1/(base_i + c·psi_i) = 1`, keeping
/// every shifted value positive.
fn solve_harmonic_shift(base: &[f64], psi: &[f64]) -> Result<f64, SynthError> {
    if base.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(SynthError::Correction(
            "curve is not positive at every segment midpoint; reduce score scale".into(),
        ));
    }
    let n = base.len() as f64;
    let f = |c: f64| base.iter().zip(psi).map(|(b, p)| 1.0 / (b + c * p)).sum::<f64>() - n;
    let df = |c: f64| -base.iter().zip(psi).map(|(b, p)| p / (b + c * p).powi(2)).sum::<f64>();
    let feasible = |c: f64| base.iter().zip(psi).all(|(b, p)| b + c * p > 0.0);
    let mut c = 0.0;
    for _ in 0..200 {
        let fc = f(c);
        if fc.abs() <= 1e-15 * n {
            return Ok(c);
        }
        let d = df(c);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let mut step = fc / d;
        let mut next = c - step;
        let mut halvings = 0;
        while !(feasible(next) && f(next).abs() < fc.abs()) && halvings < 60 {
            step /= 2.0;
            next = c - step;
            halvings += 1;
        }
        if halvings == 60 {
            // no further progress possible in floating point
            return if fc.abs() <= 1e-12 * n {
                Ok(c)
            } else {
                Err(SynthError::Correction(format!("stalled with residual {fc:e}")))
            };
        }
        c = next;
    }
    if f(c).abs() <= 1e-12 * n {
        Ok(c)
    } else {
        Err(SynthError::Correction("did not converge".into()))
    }
}

/// Seed of athlete `i`: the spec seed on ChaCha stream `i`.
fn athlete_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Generates `n_athletes` careers of about `races_per_athlete` races.
/// Deterministic in the spec (including its seed); athletes are generated
/// in parallel on independent streams.
pub fn generate_dataset(spec: &GeneratorSpec, n_athletes: usize, races_per_athlete: usize) -> Result<Dataset, SynthError> {
    if races_per_athlete == 0 {
        return Err(invalid("races_per_athlete", "must be positive"));
    }
    let prepared = spec.prepare()?;
    let jitter = spec.schedule.race_count_jitter;
    let width = (n_athletes.max(1) as f64).log10().floor() as usize + 1;
    let careers = (0..n_athletes)
        .into_par_iter()
        .map(|i| {
            let mut rng = athlete_rng(spec.seed, i);
            let n = if jitter > 0 {
                let lo = races_per_athlete.saturating_sub(jitter).max(1);
                rng.random_range(lo..=races_per_athlete + jitter)
            } else {
                races_per_athlete
            };
            prepared.sample_career(&format!("A{:0width$}", i + 1, width = width.max(3)), n, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    let mut athletes = Vec::with_capacity(careers.len());
    for c in careers {
        records.extend(c.records);
        athletes.push(c.truth);
    }
    Ok(Dataset {
        records,
        truth: DatasetTruth {
            seed: spec.seed,
            distance_m: spec.distance_m,
            n_pc: spec.n_pc(),
            athletes,
        },
    })
}
