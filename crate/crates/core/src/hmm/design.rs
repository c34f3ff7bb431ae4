//! Covariate designs: indicator columns for age group and event type.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::HmmError;
use crate::ingest::{AgeGroup, EventType};

/// Covariate schema. Open age and Domestic events are the all-zero baseline.
///
/// * `Age500`: x1 = U21, x2 = U23, x3 = World Cup / Juniors, x4 = World
///   Championships / Olympics. U18 has no column and is rejected.
/// * `Age1000`: the same four columns plus x5 = U18.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Design {
    #[serde(rename = "age_event_500m")]
    Age500,
    #[serde(rename = "age_event_1000m")]
    Age1000,
}

impl Design {
    pub fn for_distance(distance_m: u32) -> Option<Design> {
        match distance_m {
            500 => Some(Design::Age500),
            1000 => Some(Design::Age1000),
            _ => None,
        }
    }

    /// Number of indicator columns `m` (the intercept is extra).
    pub fn n_covariates(self) -> usize {
        match self {
            Design::Age500 => 4,
            Design::Age1000 => 5,
        }
    }

    pub fn column_names(self) -> &'static [&'static str] {
        match self {
            Design::Age500 => &["U21", "U23", "WCJ", "WCO"],
            Design::Age1000 => &["U21", "U23", "WCJ", "WCO", "U18"],
        }
    }

    fn age_columns(self) -> &'static [usize] {
        match self {
            Design::Age500 => &[0, 1],
            Design::Age1000 => &[0, 1, 4],
        }
    }

    pub fn covariates(self, age: AgeGroup, event: EventType) -> Result<CovariateVector, HmmError> {
        let mut x = vec![0.0; self.n_covariates()];
        match age {
            AgeGroup::Open => {}
            AgeGroup::U21 => x[0] = 1.0,
            AgeGroup::U23 => x[1] = 1.0,
            AgeGroup::U18 => match self {
                Design::Age1000 => x[4] = 1.0,
                Design::Age500 => {
                    return Err(HmmError::UnknownCovariateLevel {
                        level: age.code().to_string(),
                        design: self,
                    })
                }
            },
        }
        match event {
            EventType::Domestic => {}
            EventType::WorldCupJuniors => x[2] = 1.0,
            EventType::WorldChampsOlympics => x[3] = 1.0,
        }
        Ok(CovariateVector(x))
    }

    pub fn baseline(self) -> CovariateVector {
        CovariateVector(vec![0.0; self.n_covariates()])
    }

    /// Checks length, 0/1 entries and at most one active indicator per factor.
    pub fn validate(self, x: &CovariateVector) -> Result<(), HmmError> {
        if x.0.len() != self.n_covariates() {
            return Err(HmmError::InvalidCovariates(format!(
                "{self} expects {} indicators, got {}",
                self.n_covariates(),
                x.0.len()
            )));
        }
        if x.0.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(HmmError::InvalidCovariates(format!("non-indicator value in {:?}", x.0)));
        }
        let ages: f64 = self.age_columns().iter().map(|&c| x.0[c]).sum();
        let events = x.0[2] + x.0[3];
        if ages > 1.0 || events > 1.0 {
            return Err(HmmError::InvalidCovariates(format!(
                "more than one level set per factor in {:?}",
                x.0
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Design::Age500 => f.write_str("age_event_500m"),
            Design::Age1000 => f.write_str("age_event_1000m"),
        }
    }
}

/// Indicator values `x_1 … x_m` for one race.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateVector(pub Vec<f64>);

impl CovariateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}
