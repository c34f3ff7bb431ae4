//! Race split ingestion: CSV parsing, validation, velocity normalization and
//! grouping of races into per-athlete careers.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of one timing segment in meters.
pub const SEGMENT_M: f64 = 50.0;

/// Fixed leading columns of the race CSV, in order.
pub const FIXED_COLUMNS: [&str; 6] = [
    "athlete_id",
    "race_date",
    "distance_m",
    "age_group",
    "event_type",
    "race_phase",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("EmptyFile: no race rows in input")]
    EmptyFile,
    #[error("MalformedHeader: {0}")]
    MalformedHeader(String),
    #[error("BadRow at line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error("EmptyInput: no profiles given")]
    EmptyInput,
    #[error("GridMismatch: profiles do not share a distance grid")]
    GridMismatch,
    #[error("InvalidRecord: {0}")]
    InvalidRecord(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    U18,
    U21,
    U23,
    Open,
}

impl AgeGroup {
    pub fn code(self) -> &'static str {
        match self {
            AgeGroup::U18 => "U18",
            AgeGroup::U21 => "U21",
            AgeGroup::U23 => "U23",
            AgeGroup::Open => "OPEN",
        }
    }
}

impl FromStr for AgeGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "U18" => Ok(AgeGroup::U18),
            "U21" => Ok(AgeGroup::U21),
            "U23" => Ok(AgeGroup::U23),
            "OPEN" => Ok(AgeGroup::Open),
            other => Err(format!("unknown age_group {other:?}")),
        }
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    Domestic,
    WorldCupJuniors,
    WorldChampsOlympics,
}

impl EventType {
    pub fn code(self) -> &'static str {
        match self {
            EventType::Domestic => "DOM",
            EventType::WorldCupJuniors => "WCJ",
            EventType::WorldChampsOlympics => "WCO",
        }
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "DOM" => Ok(EventType::Domestic),
            "WCJ" => Ok(EventType::WorldCupJuniors),
            "WCO" => Ok(EventType::WorldChampsOlympics),
            other => Err(format!("unknown event_type {other:?}")),
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Variant order is the same-day ordering rule: heats before semis before finals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RacePhase {
    Heat,
    SemiFinal,
    Final,
}

impl RacePhase {
    pub fn code(phase: Option<RacePhase>) -> &'static str {
        match phase {
            None => "NA",
            Some(RacePhase::Heat) => "HEAT",
            Some(RacePhase::SemiFinal) => "SEMI",
            Some(RacePhase::Final) => "FINAL",
        }
    }

    pub fn parse(s: &str) -> Result<Option<RacePhase>, String> {
        match s {
            "NA" => Ok(None),
            "HEAT" => Ok(Some(RacePhase::Heat)),
            "SEMI" => Ok(Some(RacePhase::SemiFinal)),
            "FINAL" => Ok(Some(RacePhase::Final)),
            other => Err(format!("unknown race_phase {other:?}")),
        }
    }
}

/// One race: raw 50 m split times plus the athlete and covariate metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceRecord {
    pub athlete_id: String,
    pub race_date: NaiveDate,
    pub distance_m: u32,
    pub segment_times_s: Vec<f64>,
    pub age_group: AgeGroup,
    pub event_type: EventType,
    pub race_phase: Option<RacePhase>,
}

impl RaceRecord {
    /// Number of 50 m segments implied by `distance_m`.
    pub fn n_segments(&self) -> usize {
        (self.distance_m / SEGMENT_M as u32) as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.distance_m == 0 || self.distance_m % SEGMENT_M as u32 != 0 {
            return Err(format!(
                "distance_m {} is not a positive multiple of 50",
                self.distance_m
            ));
        }
        if self.segment_times_s.len() != self.n_segments() {
            return Err(format!(
                "expected {} segment times for {} m, found {}",
                self.n_segments(),
                self.distance_m,
                self.segment_times_s.len()
            ));
        }
        if let Some((i, t)) = self
            .segment_times_s
            .iter()
            .enumerate()
            .find(|(_, t)| !(t.is_finite() && **t > 0.0))
        {
            return Err(format!("segment time t{} = {t} is not positive and finite", i + 1));
        }
        Ok(())
    }
}

/// Segment velocities divided by the whole-race average velocity, placed at
/// segment midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub grid_m: Vec<f64>,
    pub v_norm: Vec<f64>,
    pub distance_m: u32,
}

impl VelocityProfile {
    /// `n / Σ 1/v`, which is exactly one for a profile produced by
    /// [`normalize_profile`].
    pub fn harmonic_mean(&self) -> f64 {
        let inv: f64 = self.v_norm.iter().map(|v| 1.0 / v).sum();
        self.v_norm.len() as f64 / inv
    }
}

/// Segment midpoints 25, 75, ..., distance - 25.
pub fn segment_grid(distance_m: u32) -> Vec<f64> {
    let n = (distance_m / SEGMENT_M as u32) as usize;
    (0..n).map(|i| SEGMENT_M * (i as f64 + 0.5)).collect()
}

pub fn normalize_profile(rec: &RaceRecord) -> Result<VelocityProfile, IngestError> {
    rec.validate().map_err(IngestError::InvalidRecord)?;
    let total: f64 = rec.segment_times_s.iter().sum();
    let avg_v = rec.distance_m as f64 / total;
    let v_norm = rec
        .segment_times_s
        .iter()
        .map(|t| (SEGMENT_M / t) / avg_v)
        .collect();
    Ok(VelocityProfile {
        grid_m: segment_grid(rec.distance_m),
        v_norm,
        distance_m: rec.distance_m,
    })
}

/// Result of a lenient parse: accepted records plus every rejected row.
#[derive(Debug, Clone, Default)]
pub struct ParsedCorpus {
    pub records: Vec<RaceRecord>,
    pub rejected: Vec<IngestError>,
}

/// Parses a race CSV, failing on the first bad row.
pub fn parse_race_csv(bytes: &[u8]) -> Result<Vec<RaceRecord>, IngestError> {
    let parsed = parse_race_csv_lenient(bytes)?;
    if let Some(err) = parsed.rejected.into_iter().next() {
        return Err(err);
    }
    Ok(parsed.records)
}

/// Parses a race CSV, collecting bad rows instead of stopping at them.
/// Header problems and empty input are still fatal.
pub fn parse_race_csv_lenient(bytes: &[u8]) -> Result<ParsedCorpus, IngestError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| IngestError::MalformedHeader(format!("input is not UTF-8: {e}")))?;
    if text.trim().is_empty() {
        return Err(IngestError::EmptyFile);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| IngestError::MalformedHeader(e.to_string()))?
        .clone();
    let n_split_cols = check_header(&header)?;

    let mut out = ParsedCorpus::default();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.rejected.push(IngestError::BadRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(str::is_empty) {
            continue;
        }
        match parse_row(&row, n_split_cols) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejected.push(IngestError::BadRow { line, reason }),
        }
    }
    if out.records.is_empty() && out.rejected.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Ok(out)
}

fn check_header(header: &csv::StringRecord) -> Result<usize, IngestError> {
    if header.len() < FIXED_COLUMNS.len() + 1 {
        return Err(IngestError::MalformedHeader(format!(
            "expected at least {} columns, found {}",
            FIXED_COLUMNS.len() + 1,
            header.len()
        )));
    }
    for (i, expected) in FIXED_COLUMNS.iter().enumerate() {
        let got = &header[i];
        // tolerate the documented "race_date(YYYY-MM-DD)" spelling
        let ok = got == *expected || (i == 1 && got.starts_with("race_date("));
        if !ok {
            return Err(IngestError::MalformedHeader(format!(
                "column {} should be {expected:?}, found {got:?}",
                i + 1
            )));
        }
    }
    for (k, got) in header.iter().skip(FIXED_COLUMNS.len()).enumerate() {
        let expected = format!("t{}", k + 1);
        if got != expected {
            return Err(IngestError::MalformedHeader(format!(
                "split column {} should be {expected:?}, found {got:?}",
                FIXED_COLUMNS.len() + k + 1
            )));
        }
    }
    Ok(header.len() - FIXED_COLUMNS.len())
}

fn parse_row(row: &csv::StringRecord, n_split_cols: usize) -> Result<RaceRecord, String> {
    if row.len() < FIXED_COLUMNS.len() {
        return Err(format!("only {} fields", row.len()));
    }
    if row.len() > FIXED_COLUMNS.len() + n_split_cols {
        return Err(format!(
            "{} fields exceed the {} header columns",
            row.len(),
            FIXED_COLUMNS.len() + n_split_cols
        ));
    }
    let athlete_id = row[0].to_string();
    if athlete_id.is_empty() {
        return Err("empty athlete_id".into());
    }
    let race_date = NaiveDate::parse_from_str(&row[1], "%Y-%m-%d")
        .map_err(|e| format!("race_date {:?}: {e}", &row[1]))?;
    let distance_m: u32 = row[2]
        .parse()
        .map_err(|_| format!("distance_m {:?} is not an integer", &row[2]))?;
    if distance_m != 500 && distance_m != 1000 {
        return Err(format!("distance_m {distance_m} must be 500 or 1000"));
    }
    let age_group: AgeGroup = row[3].parse()?;
    let event_type: EventType = row[4].parse()?;
    let race_phase = RacePhase::parse(&row[5])?;

    let cells: Vec<&str> = row.iter().skip(FIXED_COLUMNS.len()).collect();
    let n_filled = cells.iter().rposition(|c| !c.is_empty()).map_or(0, |p| p + 1);
    let mut segment_times_s = Vec::with_capacity(n_filled);
    for (k, cell) in cells[..n_filled].iter().enumerate() {
        let t: f64 = cell
            .parse()
            .map_err(|_| format!("t{} = {cell:?} is not a number", k + 1))?;
        segment_times_s.push(t);
    }
    let rec = RaceRecord {
        athlete_id,
        race_date,
        distance_m,
        segment_times_s,
        age_group,
        event_type,
        race_phase,
    };
    rec.validate()?;
    Ok(rec)
}

/// Formats a split with at least three decimals while keeping the shortest
/// representation that parses back to the same `f64`.
fn format_time(t: f64) -> String {
    let s = format!("{t}");
    match s.find('.') {
        Some(dot) if s.len() - dot - 1 >= 3 => s,
        Some(dot) => format!("{s}{}", "0".repeat(3 - (s.len() - dot - 1))),
        None => format!("{s}.000"),
    }
}

/// Serializes records to the race CSV schema. The header carries as many
/// split columns as the longest race; shorter races leave trailing cells empty.
pub fn write_race_csv(records: &[RaceRecord]) -> String {
    let max_splits = records
        .iter()
        .map(|r| r.segment_times_s.len())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    out.push_str(&FIXED_COLUMNS.join(","));
    for k in 1..=max_splits {
        out.push_str(&format!(",t{k}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.athlete_id,
            r.race_date.format("%Y-%m-%d"),
            r.distance_m,
            r.age_group,
            r.event_type,
            RacePhase::code(r.race_phase)
        ));
        for t in &r.segment_times_s {
            out.push(',');
            out.push_str(&format_time(*t));
        }
        for _ in r.segment_times_s.len()..max_splits {
            out.push(',');
        }
        out.push('\n');
    }
    out
}

/// One race inside a career, with its normalized profile and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareerRace {
    pub race_date: NaiveDate,
    pub race_phase: Option<RacePhase>,
    pub age_group: AgeGroup,
    pub event_type: EventType,
    pub profile: VelocityProfile,
}

/// Time-ordered races of one athlete at one distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareerSequence {
    pub athlete_id: String,
    pub distance_m: u32,
    pub races: Vec<CareerRace>,
}

/// Two races of one athlete sharing date and phase. Kept, but reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateRace {
    pub athlete_id: String,
    pub race_date: NaiveDate,
    pub race_phase: Option<RacePhase>,
}

impl fmt::Display for DuplicateRace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DuplicateRace{{athlete: {}, date: {}, phase: {}}}",
            self.athlete_id,
            self.race_date,
            RacePhase::code(self.race_phase)
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct CareerBuild {
    pub sequences: Vec<CareerSequence>,
    pub warnings: Vec<DuplicateRace>,
}

fn phase_rank(phase: Option<RacePhase>) -> u8 {
    match phase {
        None => 0,
        Some(RacePhase::Heat) => 1,
        Some(RacePhase::SemiFinal) => 2,
        Some(RacePhase::Final) => 3,
    }
}

/// Groups records by (athlete, distance) and orders each group by date, then
/// phase, then input order. Sequences come out sorted by athlete id and distance.
pub fn build_career_sequences(records: &[RaceRecord]) -> Result<CareerBuild, IngestError> {
    let mut groups: BTreeMap<(&str, u32), Vec<&RaceRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.athlete_id.as_str(), r.distance_m))
            .or_default()
            .push(r);
    }
    let mut build = CareerBuild::default();
    for ((athlete, distance_m), mut recs) in groups {
        // stable sort keeps input order among exact ties
        recs.sort_by(|a, b| {
            a.race_date
                .cmp(&b.race_date)
                .then_with(|| phase_rank(a.race_phase).cmp(&phase_rank(b.race_phase)))
        });
        for w in recs.windows(2) {
            if w[0].race_date == w[1].race_date && w[0].race_phase == w[1].race_phase {
                let dup = DuplicateRace {
                    athlete_id: athlete.to_string(),
                    race_date: w[1].race_date,
                    race_phase: w[1].race_phase,
                };
                log::warn!("{dup}");
                build.warnings.push(dup);
            }
        }
        let races = recs
            .into_iter()
            .map(|r| {
                Ok(CareerRace {
                    race_date: r.race_date,
                    race_phase: r.race_phase,
                    age_group: r.age_group,
                    event_type: r.event_type,
                    profile: normalize_profile(r)?,
                })
            })
            .collect::<Result<Vec<_>, IngestError>>()?;
        build.sequences.push(CareerSequence {
            athlete_id: athlete.to_string(),
            distance_m,
            races,
        });
    }
    Ok(build)
}

/// Pointwise arithmetic mean of profiles sharing one grid.
pub fn mean_profile(profiles: &[VelocityProfile]) -> Result<VelocityProfile, IngestError> {
    let first = profiles.first().ok_or(IngestError::EmptyInput)?;
    let mut sum = vec![0.0; first.v_norm.len()];
    for p in profiles {
        if p.distance_m != first.distance_m
            || p.grid_m.len() != first.grid_m.len()
            || p.grid_m
                .iter()
                .zip(&first.grid_m)
                .any(|(a, b)| a.partial_cmp(b) != Some(Ordering::Equal))
            || p.v_norm.len() != p.grid_m.len()
        {
            return Err(IngestError::GridMismatch);
        }
        for (s, v) in sum.iter_mut().zip(&p.v_norm) {
            *s += v;
        }
    }
    let n = profiles.len() as f64;
    Ok(VelocityProfile {
        grid_m: first.grid_m.clone(),
        v_norm: sum.into_iter().map(|s| s / n).collect(),
        distance_m: first.distance_m,
    })
}
