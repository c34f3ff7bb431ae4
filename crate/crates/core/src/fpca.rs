//! Functional principal components of smoothed profiles.
//!
//! The covariance operator of the centred curves is diagonalized in
//! coefficient space under the Gram metric `G`: with coefficient covariance
//! `C`, the symmetric matrix `G^{1/2} C G^{1/2}` has eigenpairs `(λ_j, u_j)`,
//! and `b_j = G^{-1/2} u_j` are the eigenfunction coefficients, orthonormal in
//! L². Scores are `β_j = ⟨Φ_j, f − μ̂⟩`. The covariance uses divisor `N`, so
//! the variance of the training scores (divisor `N`) equals `λ_j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fbasis::{inner_product, BasisConfig, BasisError, FunctionalBasis, QuadratureRule, SmoothedProfile};

/// Eigenvalues below this are a numerical failure rather than round-off.
pub const NEGATIVE_EIGENVALUE_TOL: f64 = -1e-10;
/// Total variance below which the data is treated as identical curves.
pub const DEGENERATE_VARIANCE: f64 = 1e-14;
/// Allowed disagreement between quadrature and coefficient-space scores.
pub const SCORE_PATH_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FpcaError {
    #[error("InsufficientData: need at least {need} profiles, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("requested {n_pc} components but the basis has only {n_basis} functions")]
    TooManyComponents { n_pc: usize, n_basis: usize },
    #[error("NonPsdCovariance: eigenvalue {0} is below tolerance")]
    NonPsdCovariance(f64),
    #[error("DegenerateData: total variance {0} (all profiles identical)")]
    DegenerateData(f64),
    #[error("BasisMismatch: profiles or model use different bases")]
    BasisMismatch,
    #[error("component index {j} outside 1..={n_pc}")]
    InvalidComponent { j: usize, n_pc: usize },
    #[error("score paths disagree for PC{pc}: quadrature {quadrature} vs coefficient {coefficient}")]
    ScorePathMismatch {
        pc: usize,
        quadrature: f64,
        coefficient: f64,
    },
    #[error("score vector has length {got}, model has {expected} components")]
    ScoreLength { got: usize, expected: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Mean function, eigenfunctions and eigenvalues of a fitted fPCA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "fpca")]
pub struct FpcaModel {
    pub basis: BasisConfig,
    pub n_pc: usize,
    pub mean_coeffs: Vec<f64>,
    /// Row-major `n_pc × n_basis`; row j is Φ_{j+1}.
    pub eigenfunction_coeffs: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// `λ_j / Σ_all λ`, where the sum runs over every eigenvalue, retained or not.
    pub variance_explained: Vec<f64>,
    pub total_variance: f64,
    pub n_profiles: usize,
}

/// Per-race principal component scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcScores {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub pc: usize,
    pub fraction: f64,
    pub cumulative: f64,
}

fn symmetric_power(m: &DMatrix<f64>, power: f64) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(power)));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// `∫_0^{domain/2} B_k(x) dx` for every basis function.
fn first_half_integrals(basis: &FunctionalBasis) -> DVector<f64> {
    let half = basis.domain().1 / 2.0;
    let mut breaks: Vec<f64> = basis.breakpoints().into_iter().filter(|&b| b < half).collect();
    breaks.push(half);
    let rule = QuadratureRule::composite_gauss_legendre(&breaks);
    let mut out = DVector::zeros(basis.n_basis());
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        for (k, b) in basis.eval_all(x).expect("node in domain").into_iter().enumerate() {
            out[k] += w * b;
        }
    }
    out
}

/// Flips `coeffs` so the eigenfunction has a non-negative integral over the
/// first half of the domain; near-zero integrals fall back to the sign at a
/// quarter of the domain.
fn apply_sign_convention(basis: &FunctionalBasis, half_integrals: &DVector<f64>, coeffs: &mut DVector<f64>) {
    let integral = coeffs.dot(half_integrals);
    let flip = if integral.abs() <= 1e-12 {
        let quarter = basis.domain().1 / 4.0;
        let v = basis
            .eval_expansion(coeffs.as_slice(), quarter)
            .expect("quarter point in domain");
        v < 0.0
    } else {
        integral < 0.0
    };
    if flip {
        coeffs.neg_mut();
    }
}

/// Applies the eigenfunction sign convention to a coefficient vector in place.
pub fn orient_eigenfunction(basis: &FunctionalBasis, coeffs: &mut [f64]) {
    let half = first_half_integrals(basis);
    let mut v = DVector::from_column_slice(coeffs);
    apply_sign_convention(basis, &half, &mut v);
    coeffs.copy_from_slice(v.as_slice());
}

pub fn fit_fpca(profiles: &[SmoothedProfile], n_pc: usize) -> Result<FpcaModel, FpcaError> {
    let first = profiles.first().ok_or(FpcaError::InsufficientData {
        need: n_pc + 1,
        got: 0,
    })?;
    if profiles.len() < n_pc + 1 {
        return Err(FpcaError::InsufficientData {
            need: n_pc + 1,
            got: profiles.len(),
        });
    }
    if profiles.iter().any(|p| p.basis != first.basis) {
        return Err(FpcaError::BasisMismatch);
    }
    let basis = FunctionalBasis::new(first.basis)?;
    let k = basis.n_basis();
    if n_pc > k {
        return Err(FpcaError::TooManyComponents { n_pc, n_basis: k });
    }
    if let Some(p) = profiles.iter().find(|p| p.coeffs.len() != k) {
        return Err(BasisError::CoefficientLength {
            got: p.coeffs.len(),
            expected: k,
        }
        .into());
    }

    let n = profiles.len();
    let mut mean = DVector::zeros(k);
    for p in profiles {
        mean += DVector::from_column_slice(&p.coeffs);
    }
    mean /= n as f64;
    let mut centred = DMatrix::zeros(n, k);
    for (i, p) in profiles.iter().enumerate() {
        for j in 0..k {
            centred[(i, j)] = p.coeffs[j] - mean[j];
        }
    }
    let cov = centred.transpose() * &centred / n as f64;

    let gram = basis.gram_matrix();
    let g_half = symmetric_power(&gram, 0.5);
    let g_inv_half = symmetric_power(&gram, -0.5);
    let mut metric_cov = &g_half * &cov * &g_half;
    metric_cov = (&metric_cov + metric_cov.transpose()) * 0.5;
    let eig = metric_cov.symmetric_eigen();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut eigenvalues = Vec::with_capacity(k);
    for &i in &order {
        let l = eig.eigenvalues[i];
        if l < NEGATIVE_EIGENVALUE_TOL {
            return Err(FpcaError::NonPsdCovariance(l));
        }
        eigenvalues.push(l.max(0.0));
    }
    let total: f64 = eigenvalues.iter().sum();
    if n_pc > 0 && total < DEGENERATE_VARIANCE {
        return Err(FpcaError::DegenerateData(total));
    }

    let half_integrals = first_half_integrals(&basis);
    let mut eigenfunction_coeffs = Vec::with_capacity(n_pc * k);
    for &i in order.iter().take(n_pc) {
        let mut b = &g_inv_half * eig.eigenvectors.column(i);
        apply_sign_convention(&basis, &half_integrals, &mut b);
        eigenfunction_coeffs.extend(b.iter());
    }
    eigenvalues.truncate(n_pc);
    let variance_explained = eigenvalues
        .iter()
        .map(|l| if total > 0.0 { l / total } else { 0.0 })
        .collect();

    Ok(FpcaModel {
        basis: first.basis,
        n_pc,
        mean_coeffs: mean.iter().copied().collect(),
        eigenfunction_coeffs,
        eigenvalues,
        variance_explained,
        total_variance: total,
        n_profiles: n,
    })
}

impl FpcaModel {
    pub fn n_basis(&self) -> usize {
        self.basis.n_basis
    }

    /// Coefficients of Φ_j, 1-based.
    pub fn eigenfunction(&self, j: usize) -> Result<&[f64], FpcaError> {
        if j == 0 || j > self.n_pc {
            return Err(FpcaError::InvalidComponent { j, n_pc: self.n_pc });
        }
        let k = self.n_basis();
        Ok(&self.eigenfunction_coeffs[(j - 1) * k..j * k])
    }

    /// Builds the cached evaluation state used for projection.
    pub fn projector(&self) -> Result<FpcaProjector<'_>, FpcaError> {
        FpcaProjector::new(self)
    }

    /// Checks internal shapes after deserialization.
    pub fn validate(&self) -> Result<(), FpcaError> {
        let basis = FunctionalBasis::new(self.basis)?;
        let k = basis.n_basis();
        let bad_len = self.mean_coeffs.len() != k
            || self.eigenfunction_coeffs.len() != self.n_pc * k
            || self.eigenvalues.len() != self.n_pc
            || self.variance_explained.len() != self.n_pc;
        if bad_len {
            return Err(BasisError::CoefficientLength {
                got: self.eigenfunction_coeffs.len(),
                expected: self.n_pc * k,
            }
            .into());
        }
        if self
            .mean_coeffs
            .iter()
            .chain(&self.eigenfunction_coeffs)
            .chain(&self.eigenvalues)
            .any(|v| !v.is_finite())
        {
            return Err(FpcaError::NonPsdCovariance(f64::NAN));
        }
        if let Some(&l) = self.eigenvalues.iter().find(|&&l| l < 0.0) {
            return Err(FpcaError::NonPsdCovariance(l));
        }
        Ok(())
    }
}

/// Basis, Gram matrix and quadrature for one model, reused across races.
#[derive(Debug, Clone)]
pub struct FpcaProjector<'a> {
    model: &'a FpcaModel,
    basis: FunctionalBasis,
    gram: DMatrix<f64>,
    rule: QuadratureRule,
}

impl<'a> FpcaProjector<'a> {
    fn new(model: &'a FpcaModel) -> Result<Self, FpcaError> {
        let basis = FunctionalBasis::new(model.basis)?;
        Ok(FpcaProjector {
            model,
            gram: basis.gram_matrix(),
            rule: basis.quadrature(),
            basis,
        })
    }

    pub fn basis(&self) -> &FunctionalBasis {
        &self.basis
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    fn centred(&self, profile: &SmoothedProfile) -> Result<DVector<f64>, FpcaError> {
        if profile.basis != self.model.basis {
            return Err(FpcaError::BasisMismatch);
        }
        if profile.coeffs.len() != self.basis.n_basis() {
            return Err(BasisError::CoefficientLength {
                got: profile.coeffs.len(),
                expected: self.basis.n_basis(),
            }
            .into());
        }
        Ok(DVector::from_column_slice(&profile.coeffs) - DVector::from_column_slice(&self.model.mean_coeffs))
    }

    /// `β_j = (c_f − c_μ)ᵀ G b_j`.
    pub fn scores_coefficient_space(&self, profile: &SmoothedProfile) -> Result<Vec<f64>, FpcaError> {
        let g_centred = &self.gram * self.centred(profile)?;
        (1..=self.model.n_pc)
            .map(|j| {
                let b = self.model.eigenfunction(j)?;
                Ok(g_centred.iter().zip(b).map(|(a, b)| a * b).sum())
            })
            .collect()
    }

    /// `β_j = ∫ Φ_j (f − μ̂)` evaluated with the basis quadrature rule.
    pub fn scores_quadrature(&self, profile: &SmoothedProfile) -> Result<Vec<f64>, FpcaError> {
        let centred = self.centred(profile)?;
        let centred = centred.as_slice();
        (1..=self.model.n_pc)
            .map(|j| {
                let phi = self.model.eigenfunction(j)?;
                Ok(inner_product(
                    |x| self.basis.eval_expansion(phi, x).expect("node in domain"),
                    |x| self.basis.eval_expansion(centred, x).expect("node in domain"),
                    &self.rule,
                ))
            })
            .collect()
    }

    /// Computes scores by both routes and fails if they disagree.
    pub fn project(&self, profile: &SmoothedProfile) -> Result<PcScores, FpcaError> {
        let coef = self.scores_coefficient_space(profile)?;
        let quad = self.scores_quadrature(profile)?;
        for (j, (c, q)) in coef.iter().zip(&quad).enumerate() {
            if (c - q).abs() > SCORE_PATH_TOL * c.abs().max(1.0) {
                return Err(FpcaError::ScorePathMismatch {
                    pc: j + 1,
                    quadrature: *q,
                    coefficient: *c,
                });
            }
        }
        Ok(PcScores { scores: coef })
    }

    /// `‖a − b‖` in L².
    pub fn l2_distance(&self, a: &SmoothedProfile, b: &SmoothedProfile) -> f64 {
        let d = DVector::from_column_slice(&a.coeffs) - DVector::from_column_slice(&b.coeffs);
        (d.transpose() * &self.gram * &d)[(0, 0)].max(0.0).sqrt()
    }
}

pub fn project_scores(model: &FpcaModel, profile: &SmoothedProfile) -> Result<PcScores, FpcaError> {
    model.projector()?.project(profile)
}

/// `μ̂ + Σ_{j ≤ k} β_j Φ_j` in basis coefficients.
pub fn reconstruct_profile(model: &FpcaModel, scores: &PcScores, k: usize) -> Result<SmoothedProfile, FpcaError> {
    if k == 0 || k > model.n_pc {
        return Err(FpcaError::InvalidComponent { j: k, n_pc: model.n_pc });
    }
    if scores.scores.len() < k {
        return Err(FpcaError::ScoreLength {
            got: scores.scores.len(),
            expected: model.n_pc,
        });
    }
    let mut coeffs = model.mean_coeffs.clone();
    for j in 1..=k {
        let phi = model.eigenfunction(j)?;
        let beta = scores.scores[j - 1];
        for (c, p) in coeffs.iter_mut().zip(phi) {
            *c += beta * p;
        }
    }
    Ok(SmoothedProfile {
        basis: model.basis,
        coeffs,
    })
}

pub fn variance_report(model: &FpcaModel) -> Vec<VarianceRow> {
    let mut cumulative = 0.0;
    model
        .variance_explained
        .iter()
        .enumerate()
        .map(|(j, &fraction)| {
            cumulative += fraction;
            VarianceRow {
                pc: j + 1,
                fraction,
                cumulative,
            }
        })
        .collect()
}

/// Φ_j at each of `xs`, 1-based `j`.
pub fn eigenfunction_curve(model: &FpcaModel, j: usize, xs: &[f64]) -> Result<Vec<f64>, FpcaError> {
    let basis = FunctionalBasis::new(model.basis)?;
    let phi = model.eigenfunction(j)?;
    xs.iter()
        .map(|&x| basis.eval_expansion(phi, x).map_err(FpcaError::from))
        .collect()
}
