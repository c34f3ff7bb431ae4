//! Reference four-state emission coefficients for 500 m and 1000 m races.
//!
//! Intercepts are the state centroids at baseline covariates (Open age group,
//! Domestic event). Event and age effects are additive offsets per PC. These
//! values seed the default generators and the recovery experiments; they are
//! not estimated by anything in this crate.

use nalgebra::DMatrix;

use crate::hmm::{CovarianceMode, Design, HmmModel, LabelOrdering, StateEmission};

/// `[state][pc]` intercepts, 500 m.
pub const INTERCEPTS_500: [[f64; 4]; 4] = [
    [0.173, 0.230, -0.003, -0.028],
    [-0.418, 0.552, -0.136, 0.168],
    [-0.373, -0.105, 0.070, 0.050],
    [0.063, -0.045, -0.045, -0.039],
];

/// `[state][pc]` intercepts, 1000 m.
pub const INTERCEPTS_1000: [[f64; 4]; 4] = [
    [-0.871, 0.182, -0.126, -0.137],
    [0.979, 0.287, 0.030, -0.068],
    [-0.107, 0.654, 0.080, 0.185],
    [0.118, 0.007, -0.023, 0.030],
];

/// `[state][pc][WCJ, WCO]`, 500 m.
pub const EVENT_EFFECTS_500: [[[f64; 2]; 4]; 4] = [
    [[-0.570, 0.045], [-0.273, -0.176], [0.190, 0.262], [-0.016, 0.073]],
    [[0.051, 0.246], [-0.045, 0.154], [-0.108, -0.154], [-0.009, -0.012]],
    [[0.363, 0.618], [-0.241, -0.384], [-0.092, 0.037], [-0.012, -0.277]],
    [[0.078, 0.060], [-0.051, -0.047], [0.018, 0.048], [0.014, -0.010]],
];

/// `[state][pc][WCJ, WCO]`, 1000 m.
pub const EVENT_EFFECTS_1000: [[[f64; 2]; 4]; 4] = [
    [[0.061, 0.023], [-0.088, -0.119], [0.088, 0.120], [0.084, 0.062]],
    [[0.585, 1.355], [0.285, -0.338], [0.104, 0.647], [-0.664, -0.422]],
    [[0.134, 0.310], [-0.493, 0.404], [-0.193, -0.547], [-0.225, 0.174]],
    [[0.060, 0.424], [-0.082, 0.065], [-0.042, -0.062], [-0.096, -0.047]],
];

/// `[state][pc][U21, U23]`, 500 m.
pub const AGE_EFFECTS_500: [[[f64; 2]; 4]; 4] = [
    [[-0.016, -0.024], [-0.098, -0.040], [0.028, -0.055], [0.100, 0.040]],
    [[0.287, -0.384], [0.339, 0.103], [-0.041, -0.277], [-0.160, -0.148]],
    [[0.206, 0.288], [-0.645, 0.200], [0.243, 0.376], [-0.176, -0.280]],
    [[-0.383, -0.136], [0.090, 0.103], [-0.023, -0.010], [0.041, -0.021]],
];

/// `[state][pc][U18, U21, U23]`, 1000 m.
pub const AGE_EFFECTS_1000: [[[f64; 3]; 4]; 4] = [
    [[1.008, 0.895, 1.216], [0.213, -0.029, -0.061], [-0.037, 0.008, 0.059], [0.124, 0.022, -0.058]],
    [[-1.710, -1.656, -1.529], [-0.291, -0.410, -0.238], [-0.022, 0.238, 0.234], [0.326, 0.312, -0.049]],
    [[0.285, -0.285, -0.090], [-0.231, -0.788, -0.414], [-0.258, -0.442, -0.283], [-0.217, -0.256, 0.099]],
    [[0.538, 0.119, 0.026], [-0.728, 0.118, 0.049], [0.241, 0.148, -0.052], [0.217, 0.049, -0.168]],
];

/// Per-state coefficient matrices `[state][pc][1 + m]` laid out in the
/// column order of `design`.
pub fn coefficients(design: Design) -> Vec<Vec<Vec<f64>>> {
    (0..4)
        .map(|j| {
            (0..4)
                .map(|i| match design {
                    Design::Age500 => vec![
                        INTERCEPTS_500[j][i],
                        AGE_EFFECTS_500[j][i][0],
                        AGE_EFFECTS_500[j][i][1],
                        EVENT_EFFECTS_500[j][i][0],
                        EVENT_EFFECTS_500[j][i][1],
                    ],
                    Design::Age1000 => vec![
                        INTERCEPTS_1000[j][i],
                        AGE_EFFECTS_1000[j][i][1],
                        AGE_EFFECTS_1000[j][i][2],
                        EVENT_EFFECTS_1000[j][i][0],
                        EVENT_EFFECTS_1000[j][i][1],
                        AGE_EFFECTS_1000[j][i][0],
                    ],
                })
                .collect()
        })
        .collect()
}

/// Four-state model with the reference coefficients, isotropic covariance
/// `variance · I`, a uniform initial distribution and `self_loop` on the
/// transition diagonal (the remainder spread evenly).
pub fn reference_model(design: Design, variance: f64, self_loop: f64) -> HmmModel {
    let cov = DMatrix::identity(4, 4) * variance;
    let off = (1.0 - self_loop) / 3.0;
    let mut transition = Vec::with_capacity(16);
    for i in 0..4 {
        for j in 0..4 {
            transition.push(if i == j { self_loop } else { off });
        }
    }
    HmmModel {
        n_states: 4,
        n_pc: 4,
        design,
        covariance_mode: CovarianceMode::Full,
        initial: vec![0.25; 4],
        transition,
        states: coefficients(design)
            .into_iter()
            .map(|c| StateEmission::new(c, &cov))
            .collect(),
        label_ordering: LabelOrdering::AsFitted,
        fit: None,
    }
}

/// Same as [`reference_model`] but with every covariate effect set to zero,
/// so each state's mean is its intercept whatever the covariates.
pub fn intercept_only_model(design: Design, variance: f64, self_loop: f64) -> HmmModel {
    let mut m = reference_model(design, variance, self_loop);
    for s in &mut m.states {
        for row in &mut s.coefficients {
            row[1..].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    m
}
