use std::fmt::Write as _;
use std::path::Path;

use pacecurve::fbasis::BasisConfig;
use pacecurve::fpca::{eigenfunction_curve, variance_report, FpcaModel};
use pacecurve::hmm::{self, CovarianceMode, Design, EmConfig, HmmModel, InitialMode, ObservationSeq};
use pacecurve::ingest::{build_career_sequences, parse_race_csv, CareerBuild, RaceRecord};
use pacecurve::pipeline::{corpus_distance, fit_fpca_records, score_careers, PipelineError, ScoredCareer};
use pacecurve::synth::{generate_dataset, GeneratorSpec};
use serde::Serialize;

use crate::error::{self, fit, ingest, CliError};
use crate::output::{ensure_dir, to_json, write_atomic};
use crate::{
    CovarianceArg, DecodeArgs, EmArgs, ExportArgs, FitFpcaArgs, FitHmmArgs, InitialArg, SelectArgs, SimulateArgs,
};

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} does not exist or is not a file", path.display())))
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Ingest(format!("cannot read {}: {e}", path.display())))
}

fn load_corpus(path: &Path) -> Result<(Vec<RaceRecord>, CareerBuild), CliError> {
    require_file(path)?;
    let records = parse_race_csv(&read_bytes(path)?).map_err(ingest)?;
    let build = build_career_sequences(&records).map_err(ingest)?;
    for w in &build.warnings {
        log::warn!("{w}");
    }
    Ok((records, build))
}

/// A model file, identified by its `kind` tag.
enum LoadedModel {
    Fpca(FpcaModel),
    Hmm(HmmModel),
}

fn load_model(path: &Path) -> Result<LoadedModel, CliError> {
    require_file(path)?;
    let bytes = read_bytes(path)?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Ingest(format!("{}: {e}", path.display())))?;
    let bad = |e: &dyn std::fmt::Display| CliError::Ingest(format!("{}: {e}", path.display()));
    match value.get("kind").and_then(|k| k.as_str()) {
        Some("fpca") => {
            let m: FpcaModel = serde_json::from_value(value).map_err(|e| bad(&e))?;
            m.validate().map_err(|e| bad(&e))?;
            Ok(LoadedModel::Fpca(m))
        }
        Some("hmm") => {
            let m: HmmModel = serde_json::from_value(value).map_err(|e| bad(&e))?;
            m.validate().map_err(|e| bad(&e))?;
            Ok(LoadedModel::Hmm(m))
        }
        other => Err(bad(&format!("unknown model kind {other:?}"))),
    }
}

fn load_fpca(path: &Path) -> Result<FpcaModel, CliError> {
    match load_model(path)? {
        LoadedModel::Fpca(m) => Ok(m),
        LoadedModel::Hmm(_) => Err(CliError::Usage(format!("{} is an HMM model, expected fPCA", path.display()))),
    }
}

fn em_config(a: &EmArgs) -> Result<EmConfig, CliError> {
    if a.restarts == 0 {
        return Err(CliError::Usage("--restarts must be at least 1".into()));
    }
    Ok(EmConfig {
        seed: a.seed,
        restarts: a.restarts,
        max_iter: a.max_iter,
        covariance_mode: match a.covariance {
            CovarianceArg::Full => CovarianceMode::Full,
            CovarianceArg::Diagonal => CovarianceMode::Diagonal,
        },
        initial_mode: match a.initial {
            InitialArg::Estimated => InitialMode::Estimated,
            InitialArg::Stationary => InitialMode::Stationary,
        },
        ..EmConfig::default()
    })
}

/// Scores every career, mapping failures through `on_error`.
fn scored_careers(
    build: &CareerBuild,
    fpca: &FpcaModel,
    on_error: impl Fn(PipelineError) -> CliError,
) -> Result<(Design, Vec<ScoredCareer>), CliError> {
    let distance = fpca.basis.domain_m;
    let design = Design::for_distance(distance)
        .ok_or_else(|| CliError::Usage(format!("no covariate design for {distance} m")))?;
    let skipped = build.sequences.iter().filter(|s| s.distance_m != distance).count();
    if skipped > 0 {
        log::warn!("skipping {skipped} careers not at {distance} m");
    }
    let scored = score_careers(&build.sequences, fpca, design).map_err(on_error)?;
    if scored.is_empty() {
        return Err(CliError::Ingest(format!("no {distance} m races in the corpus")));
    }
    Ok((design, scored))
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

pub fn fit_fpca(a: &FitFpcaArgs) -> Result<(), CliError> {
    let (records, _) = load_corpus(&a.input)?;
    let distance = corpus_distance(&records).map_err(ingest)?;
    let mut config = BasisConfig::default_for(distance);
    if let Some(n) = a.basis_size {
        config.n_basis = n;
    }
    let model = fit_fpca_records(&records, config, a.n_pc).map_err(fit)?;
    ensure_dir(&a.out)?;
    write_atomic(&a.out, "fpca_model.json", &to_json(&model))?;

    let mut table = String::from("pc,fraction,cumulative\n");
    for row in variance_report(&model) {
        writeln!(table, "{},{},{}", row.pc, fmt_f(row.fraction), fmt_f(row.cumulative)).expect("string write");
    }
    write_atomic(&a.out, "variance.csv", &table)?;
    write_atomic(&a.out, "eigenfunctions.csv", &eigenfunction_csv(&model)?)?;

    println!("{} profiles, {} m, {} basis functions", model.n_profiles, distance, config.n_basis);
    println!("{:>3} {:>10} {:>11}", "PC", "variance", "cumulative");
    for row in variance_report(&model) {
        println!("{:>3} {:>9.2}% {:>10.2}%", row.pc, 100.0 * row.fraction, 100.0 * row.cumulative);
    }
    Ok(())
}

fn eigenfunction_csv(model: &FpcaModel) -> Result<String, CliError> {
    let d = model.basis.domain_m;
    let xs: Vec<f64> = (0..=d).map(f64::from).collect();
    let curves = (1..=model.n_pc)
        .map(|j| eigenfunction_curve(model, j, &xs))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fit)?;
    let mut out = String::from("x");
    for j in 1..=model.n_pc {
        write!(out, ",phi{j}").expect("string write");
    }
    out.push('\n');
    for (i, x) in xs.iter().enumerate() {
        out.push_str(&fmt_f(*x));
        for c in &curves {
            write!(out, ",{}", fmt_f(c[i])).expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_plot(a: &ExportArgs) -> Result<(), CliError> {
    let model = load_fpca(&a.model)?;
    ensure_dir(&a.out)?;
    let path = write_atomic(&a.out, "eigenfunctions.csv", &eigenfunction_csv(&model)?)?;
    println!("{}", path.display());
    Ok(())
}

fn sweep_csv(rows: &[hmm::SweepRow]) -> String {
    let mut out = String::from("n_states,log_likelihood,n_parameters,aic,converged,nested,error\n");
    let opt = |v: Option<f64>| v.map(fmt_f).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n_states,
            opt(r.log_likelihood),
            r.n_parameters.map(|k| k.to_string()).unwrap_or_default(),
            opt(r.aic),
            r.converged,
            r.nested,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        )
        .expect("string write");
    }
    out
}

fn print_sweep(rows: &[hmm::SweepRow], selected: usize) {
    println!("{:>6} {:>14} {:>6} {:>14}", "states", "logL", "k", "AIC");
    for r in rows {
        match (r.log_likelihood, r.aic, r.n_parameters) {
            (Some(ll), Some(aic), Some(k)) => {
                let mark = if r.n_states == selected { "  <- selected" } else { "" };
                println!("{:>6} {:>14.3} {:>6} {:>14.3}{mark}", r.n_states, ll, k, aic);
            }
            _ => println!("{:>6} failed: {}", r.n_states, r.error.as_deref().unwrap_or("?")),
        }
    }
}

#[derive(Serialize)]
struct HmmRunReport<'a> {
    n_sequences: usize,
    n_observations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<&'a hmm::FitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<&'a [hmm::SweepRow]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected_states: Option<usize>,
    duplicate_races: Vec<String>,
}

fn observations(scored: &[ScoredCareer]) -> Vec<ObservationSeq> {
    scored.iter().map(|s| s.observations.clone()).collect()
}

pub fn fit_hmm(a: &FitHmmArgs) -> Result<(), CliError> {
    let config = em_config(&a.em)?;
    let fpca = load_fpca(&a.model)?;
    let (_, build) = load_corpus(&a.input)?;
    let (design, scored) = scored_careers(&build, &fpca, fit)?;
    let seqs = observations(&scored);
    if a.states == Some(0) {
        return Err(CliError::Usage("--states must be at least 1".into()));
    }

    ensure_dir(&a.out)?;
    let duplicate_races = build.warnings.iter().map(|w| w.to_string()).collect();
    let n_obs = seqs.iter().map(|s| s.len()).sum();
    if let Some((lo, hi)) = a.sweep {
        let sweep = hmm::select_states(&seqs, design, lo, hi, &config).map_err(fit)?;
        let n = a.states.unwrap_or(sweep.selected);
        let model = match sweep.rows.iter().position(|r| r.n_states == n) {
            Some(i) => sweep.models[i].clone().ok_or_else(|| CliError::Fit(format!("{n}-state fit failed")))?,
            None => hmm::em_fit(&seqs, n, design, &config).map_err(fit)?.0,
        };
        write_atomic(&a.out, "aic_sweep.csv", &sweep_csv(&sweep.rows))?;
        write_atomic(&a.out, "hmm_model.json", &to_json(&model))?;
        let report = HmmRunReport {
            n_sequences: seqs.len(),
            n_observations: n_obs,
            fit: None,
            sweep: Some(&sweep.rows),
            selected_states: Some(sweep.selected),
            duplicate_races,
        };
        write_atomic(&a.out, "fit_report.json", &to_json(&report))?;
        print_sweep(&sweep.rows, sweep.selected);
    } else {
        let n = a.states.unwrap_or(4);
        let (model, report) = hmm::em_fit(&seqs, n, design, &config).map_err(fit)?;
        write_atomic(&a.out, "hmm_model.json", &to_json(&model))?;
        let run = HmmRunReport {
            n_sequences: seqs.len(),
            n_observations: n_obs,
            fit: Some(&report),
            sweep: None,
            selected_states: None,
            duplicate_races,
        };
        write_atomic(&a.out, "fit_report.json", &to_json(&run))?;
        let meta = model.fit.as_ref().expect("fitted");
        println!(
            "{} states, logL {:.3}, AIC {:.3}, k {}, {} iterations{}",
            n,
            meta.log_likelihood,
            meta.aic,
            meta.n_parameters,
            meta.iterations,
            if meta.converged { "" } else { " (not converged)" }
        );
    }
    Ok(())
}

pub fn select_states(a: &SelectArgs) -> Result<(), CliError> {
    let config = em_config(&a.em)?;
    let fpca = load_fpca(&a.model)?;
    let (_, build) = load_corpus(&a.input)?;
    let (design, scored) = scored_careers(&build, &fpca, fit)?;
    let seqs = observations(&scored);
    let (lo, hi) = a.sweep;
    let sweep = hmm::select_states(&seqs, design, lo, hi, &config).map_err(fit)?;
    ensure_dir(&a.out)?;
    write_atomic(&a.out, "aic_sweep.csv", &sweep_csv(&sweep.rows))?;
    write_atomic(&a.out, "hmm_model.json", &to_json(sweep.selected_model()))?;
    print_sweep(&sweep.rows, sweep.selected);
    println!("selected {} states", sweep.selected);
    Ok(())
}

pub fn decode(a: &DecodeArgs) -> Result<(), CliError> {
    let mut fpca = None;
    let mut hmm_model = None;
    for path in &a.model {
        match load_model(path)? {
            LoadedModel::Fpca(m) if fpca.is_none() => fpca = Some(m),
            LoadedModel::Hmm(m) if hmm_model.is_none() => hmm_model = Some(m),
            _ => return Err(CliError::Usage("pass exactly one fPCA and one HMM model".into())),
        }
    }
    let (Some(fpca), Some(model)) = (fpca, hmm_model) else {
        return Err(CliError::Usage("decode needs one fPCA and one HMM model".into()));
    };
    if fpca.n_pc != model.n_pc {
        return Err(CliError::Decode(format!(
            "fPCA model has {} components but the HMM expects {}",
            fpca.n_pc, model.n_pc
        )));
    }
    if Design::for_distance(fpca.basis.domain_m) != Some(model.design) {
        return Err(CliError::Decode(format!(
            "HMM design {} does not match {} m races",
            model.design, fpca.basis.domain_m
        )));
    }
    let (_, build) = load_corpus(&a.input)?;
    let (_, scored) = scored_careers(&build, &fpca, error::decode)?;
    let prepared = hmm::PreparedHmm::new(&model).map_err(error::decode)?;

    let n = model.n_states;
    let mut table = String::from("athlete_id,race_date,race_index,state_viterbi");
    for j in 1..=n {
        write!(table, ",p_state_{j}").expect("string write");
    }
    table.push('\n');
    let mut plot = String::from("athlete_id,race_index,days_since_first_race,state_viterbi\n");
    let mut n_races = 0;
    for career in &scored {
        let d = prepared.decode(&career.observations).map_err(error::decode)?;
        let first = career.dates[0];
        for (t, date) in career.dates.iter().enumerate() {
            write!(table, "{},{},{},{}", d.athlete_id, date, t + 1, d.viterbi_path[t]).expect("string write");
            for p in &d.posteriors[t] {
                write!(table, ",{}", fmt_f(*p)).expect("string write");
            }
            table.push('\n');
            writeln!(
                plot,
                "{},{},{},{}",
                d.athlete_id,
                t + 1,
                (*date - first).num_days(),
                d.viterbi_path[t]
            )
            .expect("string write");
            n_races += 1;
        }
    }
    ensure_dir(&a.out)?;
    write_atomic(&a.out, "decode.csv", &table)?;
    if a.plot_data {
        write_atomic(&a.out, "state_plot.csv", &plot)?;
    }
    println!("decoded {} races for {} athletes", n_races, scored.len());
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut spec = match &a.input {
        Some(path) => {
            require_file(path)?;
            serde_json::from_slice::<GeneratorSpec>(&read_bytes(path)?)
                .map_err(|e| CliError::Ingest(format!("{}: {e}", path.display())))?
        }
        None => GeneratorSpec::default_for(a.distance)
            .ok_or_else(|| CliError::Usage(format!("no built-in spec for {} m", a.distance)))?,
    };
    spec.seed = a.seed;
    let data = generate_dataset(&spec, a.athletes, a.races).map_err(ingest)?;
    ensure_dir(&a.out)?;
    write_atomic(&a.out, "spec.json", &to_json(&spec))?;
    write_atomic(&a.out, "corpus.csv", &data.to_csv())?;
    write_atomic(&a.out, "truth.json", &data.truth_json())?;
    println!(
        "{} races for {} athletes at {} m",
        data.records.len(),
        data.truth.athletes.len(),
        spec.distance_m
    );
    Ok(())
}
