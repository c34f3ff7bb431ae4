//! Glue between the stages: records to smoothed profiles, profiles to
//! scores, careers to HMM observation sequences.

use chrono::NaiveDate;
use thiserror::Error;

use crate::fbasis::{smooth_profile, BasisConfig, BasisError, FunctionalBasis, SmoothedProfile};
use crate::fpca::{fit_fpca, FpcaError, FpcaModel, FpcaProjector};
use crate::hmm::{Design, HmmError, ObservationSeq};
use crate::ingest::{normalize_profile, CareerSequence, IngestError, RacePhase, RaceRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Fpca(#[from] FpcaError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error("corpus mixes distances {0:?}; fit one distance at a time")]
    MixedDistances(Vec<u32>),
}

/// Normalizes and smooths every record onto `basis`.
pub fn smooth_records(records: &[RaceRecord], basis: &FunctionalBasis) -> Result<Vec<SmoothedProfile>, PipelineError> {
    records
        .iter()
        .map(|r| {
            let p = normalize_profile(r)?;
            Ok(smooth_profile(&p, basis)?.profile)
        })
        .collect()
}

/// The single race distance of a corpus.
pub fn corpus_distance(records: &[RaceRecord]) -> Result<u32, PipelineError> {
    let mut ds: Vec<u32> = records.iter().map(|r| r.distance_m).collect();
    ds.sort_unstable();
    ds.dedup();
    match ds.as_slice() {
        [] => Err(IngestError::EmptyInput.into()),
        [d] => Ok(*d),
        _ => Err(PipelineError::MixedDistances(ds)),
    }
}

/// Smooths a single-distance corpus and fits `n_pc` components.
pub fn fit_fpca_records(records: &[RaceRecord], config: BasisConfig, n_pc: usize) -> Result<FpcaModel, PipelineError> {
    let basis = FunctionalBasis::new(config)?;
    let smoothed = smooth_records(records, &basis)?;
    Ok(fit_fpca(&smoothed, n_pc)?)
}

/// A career's observation sequence plus the per-race metadata needed to
/// report decoded states.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCareer {
    pub distance_m: u32,
    pub dates: Vec<NaiveDate>,
    pub phases: Vec<Option<RacePhase>>,
    pub observations: ObservationSeq,
}

fn score_one(career: &CareerSequence, projector: &FpcaProjector<'_>, design: Design) -> Result<ScoredCareer, PipelineError> {
    let basis = projector.basis();
    let mut scores = Vec::with_capacity(career.races.len());
    let mut covariates = Vec::with_capacity(career.races.len());
    for race in &career.races {
        let smoothed = smooth_profile(&race.profile, basis)?.profile;
        scores.push(projector.project(&smoothed)?.scores);
        covariates.push(design.covariates(race.age_group, race.event_type)?);
    }
    Ok(ScoredCareer {
        distance_m: career.distance_m,
        dates: career.races.iter().map(|r| r.race_date).collect(),
        phases: career.races.iter().map(|r| r.race_phase).collect(),
        observations: ObservationSeq {
            id: career.athlete_id.clone(),
            scores,
            covariates,
        },
    })
}

/// Projects every race onto the fPCA model and builds covariates under
/// `design`. Careers at other distances than the model's are skipped.
pub fn score_careers(careers: &[CareerSequence], fpca: &FpcaModel, design: Design) -> Result<Vec<ScoredCareer>, PipelineError> {
    let projector = fpca.projector()?;
    careers
        .iter()
        .filter(|c| c.distance_m == fpca.basis.domain_m)
        .map(|c| score_one(c, &projector, design))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_career_sequences, AgeGroup, EventType};

    fn record(id: &str, day: u32, distance: u32, tweak: f64, age: AgeGroup) -> RaceRecord {
        let n = (distance / 50) as usize;
        RaceRecord {
            athlete_id: id.into(),
            race_date: NaiveDate::from_ymd_opt(2020, 1, day).unwrap(),
            distance_m: distance,
            segment_times_s: (0..n).map(|i| 10.0 + tweak * (i as f64 - 4.0).powi(2) + 0.01 * i as f64).collect(),
            age_group: age,
            event_type: EventType::Domestic,
            race_phase: None,
        }
    }

    #[test]
    fn end_to_end_shapes() {
        let records: Vec<_> = (0..12)
            .map(|k| record(&format!("a{}", k % 3), 1 + k, 500, 0.01 * k as f64, AgeGroup::Open))
            .collect();
        let fpca = fit_fpca_records(&records, BasisConfig::default_for(500), 3).unwrap();
        let careers = build_career_sequences(&records).unwrap().sequences;
        let scored = score_careers(&careers, &fpca, Design::Age500).unwrap();
        assert_eq!(scored.len(), 3);
        assert!(scored.iter().all(|s| s.observations.len() == 4 && s.observations.scores[0].len() == 3));
    }

    #[test]
    fn u18_in_500m_design_fails() {
        let records: Vec<_> = (0..6).map(|k| record("a", 1 + k, 500, 0.01 * k as f64, AgeGroup::U18)).collect();
        let fpca = fit_fpca_records(&records, BasisConfig::default_for(500), 2).unwrap();
        let careers = build_career_sequences(&records).unwrap().sequences;
        let err = score_careers(&careers, &fpca, Design::Age500).unwrap_err();
        assert!(matches!(err, PipelineError::Hmm(HmmError::UnknownCovariateLevel { .. })));
        assert!(err.to_string().contains("U18"));
    }

    #[test]
    fn mixed_distances_rejected() {
        let records = vec![record("a", 1, 500, 0.0, AgeGroup::Open), record("a", 2, 1000, 0.0, AgeGroup::Open)];
        assert!(matches!(corpus_distance(&records), Err(PipelineError::MixedDistances(_))));
    }
}
