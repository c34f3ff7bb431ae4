//! Clamped B-spline bases on a race-distance domain, least-squares smoothing
//! of velocity profiles, and the quadrature used for functional inner products.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{VelocityProfile, SEGMENT_M};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("order must be at least 2, got {0}")]
    InvalidOrder(usize),
    #[error("n_basis {n_basis} is smaller than the order {order}")]
    TooFewBasisFunctions { n_basis: usize, order: usize },
    #[error("TooManyBasisFunctions: n_basis {n_basis} exceeds the {n_points} grid points")]
    TooManyBasisFunctions { n_basis: usize, n_points: usize },
    #[error("domain_m {0} must be a positive multiple of 50")]
    InvalidDomain(u32),
    #[error("roughness penalty must be finite and non-negative, got {0}")]
    InvalidPenalty(f64),
    #[error("profile distance {profile} m does not match basis domain {basis} m")]
    DomainMismatch { profile: u32, basis: u32 },
    #[error("SingularDesign: basis evaluations at the grid are collinear")]
    SingularDesign,
    #[error("OutOfDomain: x = {x} outside [0, {domain}]")]
    OutOfDomain { x: f64, domain: f64 },
    #[error("BasisMismatch: smoothed profile was fitted on a different basis")]
    BasisMismatch,
    #[error("coefficient vector has length {got}, basis has {expected} functions")]
    CoefficientLength { got: usize, expected: usize },
}

/// Serialized basis description, e.g. `{"order":4,"n_basis":8,"domain_m":500}`.
/// Two smoothed profiles share a basis exactly when their configs are equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub order: usize,
    pub n_basis: usize,
    pub domain_m: u32,
    /// Weight of the integrated squared second derivative. Zero gives plain
    /// least squares.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub roughness_penalty: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl BasisConfig {
    /// Cubic basis with 8 functions for 500 m and 12 for 1000 m; other
    /// distances get four fifths of their grid points, at least 4.
    pub fn default_for(distance_m: u32) -> Self {
        let n_points = (distance_m / SEGMENT_M as u32) as usize;
        let n_basis = match distance_m {
            500 => 8,
            1000 => 12,
            _ => (n_points * 4 / 5).max(4),
        };
        BasisConfig {
            order: 4,
            n_basis,
            domain_m: distance_m,
            roughness_penalty: 0.0,
        }
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], 5 points.
const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Weighted nodes for approximating integrals on a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Highest polynomial degree integrated exactly on each panel.
    pub exact_degree: usize,
}

impl QuadratureRule {
    /// Composite 5-point Gauss–Legendre over the panels delimited by `breaks`
    /// (sorted; repeated breakpoints are skipped). Exact for piecewise
    /// polynomials of degree ≤ 9 whose pieces align with the panels.
    pub fn composite_gauss_legendre(breaks: &[f64]) -> Self {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, wt) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
                nodes.push(mid + half * x);
                weights.push(half * wt);
            }
        }
        QuadratureRule {
            nodes,
            weights,
            exact_degree: 9,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `Σ_q w_q f(x_q) g(x_q)`.
pub fn inner_product<F, G>(f: F, g: G, rule: &QuadratureRule) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w * (f(x) * g(x)))
        .sum()
}

/// Clamped B-spline basis with equally spaced interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalBasis {
    config: BasisConfig,
    interior_knots: Vec<f64>,
    knots: Vec<f64>,
}

pub fn make_basis(distance_m: u32, n_basis: usize, order: usize) -> Result<FunctionalBasis, BasisError> {
    FunctionalBasis::new(BasisConfig {
        order,
        n_basis,
        domain_m: distance_m,
        roughness_penalty: 0.0,
    })
}

impl FunctionalBasis {
    pub fn new(config: BasisConfig) -> Result<Self, BasisError> {
        let BasisConfig {
            order,
            n_basis,
            domain_m,
            roughness_penalty,
        } = config;
        if domain_m == 0 || domain_m % SEGMENT_M as u32 != 0 {
            return Err(BasisError::InvalidDomain(domain_m));
        }
        if order < 2 {
            return Err(BasisError::InvalidOrder(order));
        }
        if n_basis < order {
            return Err(BasisError::TooFewBasisFunctions { n_basis, order });
        }
        let n_points = (domain_m / SEGMENT_M as u32) as usize;
        if n_basis > n_points {
            return Err(BasisError::TooManyBasisFunctions { n_basis, n_points });
        }
        if !(roughness_penalty.is_finite() && roughness_penalty >= 0.0) {
            return Err(BasisError::InvalidPenalty(roughness_penalty));
        }
        let domain = domain_m as f64;
        let n_interior = n_basis - order;
        let interior_knots: Vec<f64> = (1..=n_interior)
            .map(|i| domain * i as f64 / (n_interior + 1) as f64)
            .collect();
        let mut knots = vec![0.0; order];
        knots.extend_from_slice(&interior_knots);
        knots.extend(std::iter::repeat_n(domain, order));
        Ok(FunctionalBasis {
            config,
            interior_knots,
            knots,
        })
    }

    pub fn config(&self) -> &BasisConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn n_basis(&self) -> usize {
        self.config.n_basis
    }

    pub fn domain(&self) -> (f64, f64) {
        (0.0, self.config.domain_m as f64)
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    /// Distinct breakpoints: 0, interior knots, domain end.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        b.extend_from_slice(&self.interior_knots);
        b.push(self.config.domain_m as f64);
        b
    }

    /// Five Gauss–Legendre nodes per knot interval.
    pub fn quadrature(&self) -> QuadratureRule {
        QuadratureRule::composite_gauss_legendre(&self.breakpoints())
    }

    fn check_domain(&self, x: f64) -> Result<(), BasisError> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(BasisError::OutOfDomain { x, domain: hi });
        }
        Ok(())
    }

    /// Knot-vector index `i` with `knots[i] <= x < knots[i + 1]`; the right
    /// end of the domain maps to the last non-empty interval.
    fn span(&self, x: f64) -> usize {
        let p = self.order() - 1;
        let n = self.n_basis();
        if x >= self.knots[n] {
            return n - 1;
        }
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Cox–de Boor triangle: the `order` non-zero basis values at `x`, for
    /// basis indices `span - order + 1 ..= span`.
    fn nonzero(&self, span: usize, x: f64) -> Vec<f64> {
        let p = self.order() - 1;
        let u = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Values of all basis functions at `x`.
    pub fn eval_all(&self, x: f64) -> Result<Vec<f64>, BasisError> {
        self.check_domain(x)?;
        let span = self.span(x);
        let mut out = vec![0.0; self.n_basis()];
        let first = span + 1 - self.order();
        for (k, v) in self.nonzero(span, x).into_iter().enumerate() {
            out[first + k] = v;
        }
        Ok(out)
    }

    /// `deriv`-th derivative of every basis function at `x`.
    pub fn eval_all_deriv(&self, x: f64, deriv: usize) -> Result<Vec<f64>, BasisError> {
        self.check_domain(x)?;
        let span = self.span(x);
        let ders = self.nonzero_derivs(span, x, deriv);
        let mut out = vec![0.0; self.n_basis()];
        let first = span + 1 - self.order();
        for (k, v) in ders[deriv].iter().enumerate() {
            out[first + k] = *v;
        }
        Ok(out)
    }

    /// Non-zero basis derivatives up to order `nd` at `x`; row k holds the
    /// k-th derivatives.
    fn nonzero_derivs(&self, span: usize, x: f64, nd: usize) -> Vec<Vec<f64>> {
        let p = self.order() - 1;
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                // lower triangle holds knot differences
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nd.min(p) {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=nd.min(p) {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }

    /// Evaluates `Σ_k c_k B_k(x)`.
    pub fn eval_expansion(&self, coeffs: &[f64], x: f64) -> Result<f64, BasisError> {
        if coeffs.len() != self.n_basis() {
            return Err(BasisError::CoefficientLength {
                got: coeffs.len(),
                expected: self.n_basis(),
            });
        }
        self.check_domain(x)?;
        let span = self.span(x);
        let first = span + 1 - self.order();
        Ok(self
            .nonzero(span, x)
            .iter()
            .enumerate()
            .map(|(k, b)| coeffs[first + k] * b)
            .sum())
    }

    /// Rows are points, columns basis functions.
    pub fn design_matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>, BasisError> {
        let mut m = DMatrix::zeros(xs.len(), self.n_basis());
        for (i, &x) in xs.iter().enumerate() {
            for (k, v) in self.eval_all(x)?.into_iter().enumerate() {
                m[(i, k)] = v;
            }
        }
        Ok(m)
    }

    /// `G_jk = ⟨B_j, B_k⟩` on the domain.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        self.weighted_cross(0)
    }

    /// `R_jk = ∫ B_j'' B_k''`.
    pub fn roughness_matrix(&self) -> DMatrix<f64> {
        self.weighted_cross(2)
    }

    fn weighted_cross(&self, deriv: usize) -> DMatrix<f64> {
        let rule = self.quadrature();
        let n = self.n_basis();
        let mut g = DMatrix::zeros(n, n);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let b = self
                .eval_all_deriv(x, deriv)
                .expect("quadrature nodes lie inside the domain");
            for j in 0..n {
                if b[j] == 0.0 {
                    continue;
                }
                for k in j..n {
                    g[(j, k)] += w * b[j] * b[k];
                }
            }
        }
        for j in 0..n {
            for k in 0..j {
                g[(j, k)] = g[(k, j)];
            }
        }
        g
    }

    /// L² projection of an arbitrary function onto the basis.
    pub fn project_function<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        let rule = self.quadrature();
        let mut rhs = DVector::zeros(self.n_basis());
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let b = self.eval_all(x).expect("node in domain");
            let fx = f(x);
            for k in 0..self.n_basis() {
                rhs[k] += w * b[k] * fx;
            }
        }
        let chol = self
            .gram_matrix()
            .cholesky()
            .expect("B-spline Gram matrix is positive definite");
        chol.solve(&rhs).iter().copied().collect()
    }
}

/// A profile expressed as basis coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedProfile {
    pub basis: BasisConfig,
    pub coeffs: Vec<f64>,
}

/// Output of [`smooth_profile`]: the fit plus its residual sum of squares at
/// the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothing {
    pub profile: SmoothedProfile,
    pub rss: f64,
}

/// Least-squares fit of the basis to the profile's grid values, with an
/// optional second-derivative penalty from the basis config.
pub fn smooth_profile(p: &VelocityProfile, basis: &FunctionalBasis) -> Result<Smoothing, BasisError> {
    if p.distance_m != basis.config.domain_m {
        return Err(BasisError::DomainMismatch {
            profile: p.distance_m,
            basis: basis.config.domain_m,
        });
    }
    let x = basis.design_matrix(&p.grid_m)?;
    if x.nrows() < x.ncols() {
        return Err(BasisError::TooManyBasisFunctions {
            n_basis: x.ncols(),
            n_points: x.nrows(),
        });
    }
    let y = DVector::from_column_slice(&p.v_norm);
    let lambda = basis.config.roughness_penalty;
    let coeffs = if lambda == 0.0 {
        let qr = x.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if r.diagonal().iter().any(|v| v.abs() <= 1e-10 * diag_max) {
            return Err(BasisError::SingularDesign);
        }
        let qty = qr.q().transpose() * &y;
        r.solve_upper_triangular(&qty)
            .ok_or(BasisError::SingularDesign)?
    } else {
        let lhs = x.transpose() * &x + basis.roughness_matrix() * lambda;
        let rhs = x.transpose() * &y;
        lhs.cholesky().ok_or(BasisError::SingularDesign)?.solve(&rhs)
    };
    let resid = &y - &x * &coeffs;
    Ok(Smoothing {
        profile: SmoothedProfile {
            basis: *basis.config(),
            coeffs: coeffs.iter().copied().collect(),
        },
        rss: resid.norm_squared(),
    })
}

pub fn eval_smoothed(
    basis: &FunctionalBasis,
    s: &SmoothedProfile,
    xs: &[f64],
) -> Result<Vec<f64>, BasisError> {
    if s.basis != basis.config {
        return Err(BasisError::BasisMismatch);
    }
    xs.iter().map(|&x| basis.eval_expansion(&s.coeffs, x)).collect()
}
