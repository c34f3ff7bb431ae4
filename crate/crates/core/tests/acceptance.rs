//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if an asserted criterion fails.
//!
//! The AIC-pattern ratio is reported but not asserted; see the README.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use pacecurve::fbasis::{BasisConfig, FunctionalBasis};
use pacecurve::fpca::{fit_fpca, FpcaModel};
use pacecurve::hmm::{
    align_states, em_fit, emission_mean, forward_backward, forward_log_likelihood, log_emission_density,
    mixture_mean, select_states, viterbi_decode, CovarianceMode, CovariateVector, Design, EmConfig, HmmModel,
    LabelOrdering, ObservationSeq, StateEmission,
};
use pacecurve::ingest::{build_career_sequences, AgeGroup, EventType};
use pacecurve::pipeline::{score_careers, smooth_records};
use pacecurve::reference::{intercept_only_model, reference_model, INTERCEPTS_500};
use pacecurve::synth::{generate_dataset, GeneratorSpec, ScoreModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const RECOVERY_SEEDS: u64 = 10;
const RECOVERY_ATHLETES: usize = 70;
const RECOVERY_RACES: usize = 15;
const RECOVERY_VARIANCE: f64 = 0.05;
const RECOVERY_SELF_LOOP: f64 = 0.95;
const RECOVERY_RESTARTS: usize = 10;
const INTERCEPT_TOL: f64 = 0.05;
const VITERBI_MIN: f64 = 0.90;
const AIC_RATIO_MIN: f64 = 10.0;
const SEEDS_NEEDED: usize = 8;

struct Report {
    lines: Vec<String>,
    failed: Vec<String>,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, asserted: bool, detail: String, elapsed: Duration) {
        let status = match (pass, asserted) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (reported, not asserted)",
        };
        let line = format!("{status:<4} {name}: {detail} [{:.2?}]", elapsed);
        println!("{line}");
        if !pass && asserted {
            self.failed.push(name.to_string());
        }
        self.lines.push(line);
    }
}

fn data_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data"))
}

fn read_tsv(name: &str) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(data_dir().join(name)).expect("fixture");
    text.lines().skip(1).map(|l| l.split('\t').map(str::to_string).collect()).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn reference_values(report: &mut Report) {
    let t = Instant::now();
    let mut mismatches = 0;
    let mut checked = 0;
    for row in read_tsv("intercepts.tsv") {
        let design = Design::for_distance(row[0].parse().unwrap()).unwrap();
        let state: usize = row[1].parse::<usize>().unwrap() - 1;
        let model = reference_model(design, 0.05, 0.8);
        let mu = emission_mean(&model, state, &design.baseline());
        for (i, cell) in row[2..].iter().enumerate() {
            checked += 1;
            if mu[i].to_bits() != cell.parse::<f64>().unwrap().to_bits() {
                mismatches += 1;
            }
        }
    }
    let wco_state3_pc1: f64 = read_tsv("event_effects_500.tsv")
        .iter()
        .find(|r| r[0] == "3" && r[1] == "1")
        .map(|r| r[3].parse().unwrap())
        .unwrap();
    let model = reference_model(Design::Age500, 0.05, 0.8);
    let x = Design::Age500.covariates(AgeGroup::Open, EventType::WorldChampsOlympics).unwrap();
    let composite = emission_mean(&model, 2, &x)[0];
    let hand = wco_state3_pc1 + INTERCEPTS_500[2][0];
    let composite_ok = (composite - hand).abs() <= 1e-12 && (composite - 0.245).abs() <= 1e-12;
    let elapsed = t.elapsed();
    report.record(
        "reference coefficients",
        checked == 32 && mismatches == 0 && composite_ok && elapsed < Duration::from_secs(1),
        true,
        format!("{checked} intercepts, {mismatches} bit mismatches; state 3 world champs PC1 = {composite:.15}"),
        elapsed,
    );
}

fn mixture_check(report: &mut Report) {
    let t = Instant::now();
    let mut exact = true;
    for design in [Design::Age500, Design::Age1000] {
        let model = reference_model(design, 0.05, 0.8);
        let ages: &[AgeGroup] = match design {
            Design::Age500 => &[AgeGroup::U21, AgeGroup::U23, AgeGroup::Open],
            Design::Age1000 => &[AgeGroup::U18, AgeGroup::U21, AgeGroup::U23, AgeGroup::Open],
        };
        for &age in ages {
            for ev in [EventType::Domestic, EventType::WorldCupJuniors, EventType::WorldChampsOlympics] {
                let x = design.covariates(age, ev).unwrap();
                for j in 0..4 {
                    let mut p = vec![0.0; 4];
                    p[j] = 1.0;
                    exact &= mixture_mean(&model, &p, &x) == emission_mean(&model, j, &x);
                }
            }
        }
    }
    let model = reference_model(Design::Age500, 0.05, 0.8);
    let uniform = mixture_mean(&model, &[0.25; 4], &Design::Age500.baseline())[0];
    let uniform_ok = (uniform - (-0.13875)).abs() <= 1e-12;
    report.record(
        "mixture mean",
        exact && uniform_ok,
        true,
        format!("one-hot exact = {exact}; uniform baseline PC1 = {uniform:.15}"),
        t.elapsed(),
    );
}

/// Composite PC1 mean for a U23 athlete at a world championship, states 1 and 4,
/// with the coefficients as stored and with the U23 effects read as positive.
fn worked_example(report: &mut Report) {
    let t = Instant::now();
    let x = Design::Age500.covariates(AgeGroup::U23, EventType::WorldChampsOlympics).unwrap();
    let tabled = reference_model(Design::Age500, 0.05, 0.8);
    let mut flipped = tabled.clone();
    for s in &mut flipped.states {
        // column 2 is U23
        s.coefficients[0][2] = s.coefficients[0][2].abs();
    }
    let a = [emission_mean(&tabled, 0, &x)[0], emission_mean(&tabled, 3, &x)[0]];
    let b = [emission_mean(&flipped, 0, &x)[0], emission_mean(&flipped, 3, &x)[0]];
    let ok = (a[0] - 0.194).abs() < 1e-12
        && (a[1] - (-0.013)).abs() < 1e-12
        && (b[0] - 0.242).abs() < 1e-12
        && (b[1] - 0.259).abs() < 1e-12;
    report.record(
        "worked example, both sign readings",
        ok,
        true,
        format!("as stored ({:.3}, {:.3}); positive U23 ({:.3}, {:.3})", a[0], a[1], b[0], b[1]),
        t.elapsed(),
    );
}

fn independent_spec(seed: u64) -> GeneratorSpec {
    let mut spec = GeneratorSpec::default_500m();
    spec.scores = ScoreModel::Independent {
        variances: vec![0.04, 0.02, 0.01, 0.01],
    };
    spec.noise_sd = 0.002;
    spec.schedule.race_count_jitter = 0;
    spec.seed = seed;
    spec
}

fn fit_profiles(athletes: usize, races: usize, seed: u64) -> (FpcaModel, Vec<pacecurve::fbasis::SmoothedProfile>) {
    let data = generate_dataset(&independent_spec(seed), athletes, races).unwrap();
    let basis = FunctionalBasis::new(BasisConfig::default_for(500)).unwrap();
    let profiles = smooth_records(&data.records, &basis).unwrap();
    (fit_fpca(&profiles, 4).unwrap(), profiles)
}

fn fpca_orthonormality(report: &mut Report) {
    let t = Instant::now();
    let (model, profiles) = fit_profiles(20, 10, 101);
    let proj = model.projector().unwrap();
    let g = proj.gram();
    let k = model.n_pc;
    let nb = model.n_basis();
    let c = DMatrix::from_row_slice(k, nb, &model.eigenfunction_coeffs);
    let inner = &c * g * c.transpose();
    let (mut off, mut diag) = (0.0f64, 0.0f64);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                diag = diag.max((inner[(i, j)] - 1.0).abs());
            } else {
                off = off.max(inner[(i, j)].abs());
            }
        }
    }
    let scores: Vec<Vec<f64>> = profiles.iter().map(|p| proj.project(p).unwrap().scores).collect();
    let n = scores.len() as f64;
    let mut worst = 0.0f64;
    for j in 0..k {
        let mean = scores.iter().map(|s| s[j]).sum::<f64>() / n;
        let var = scores.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / n;
        worst = worst.max(rel_err(var, model.eigenvalues[j]));
    }
    let elapsed = t.elapsed();
    report.record(
        "fPCA orthonormality",
        profiles.len() == 200 && off < 1e-6 && diag < 1e-6 && worst < 1e-6 && elapsed < Duration::from_secs(10),
        true,
        format!(
            "{} profiles; max |off-diag| {off:.2e}, max |diag - 1| {diag:.2e}, max rel var error {worst:.2e}",
            profiles.len()
        ),
        elapsed,
    );
}

fn dual_path(report: &mut Report) {
    let t = Instant::now();
    let (model, profiles) = fit_profiles(100, 10, 202);
    let proj = model.projector().unwrap();
    let mut worst = 0.0f64;
    for p in &profiles {
        let a = proj.scores_quadrature(p).unwrap();
        let b = proj.scores_coefficient_space(p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    report.record(
        "dual-path scores",
        profiles.len() == 1000 && worst <= 1e-8,
        true,
        format!("{} profiles, max |quadrature - coefficient| {worst:.2e}", profiles.len()),
        t.elapsed(),
    );
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, t_len: usize) -> (HmmModel, ObservationSeq) {
    let design = Design::Age500;
    let d = 4;
    let m = design.n_covariates();
    let normalized = |rng: &mut ChaCha8Rng, len: usize| {
        let v: Vec<f64> = (0..len).map(|_| 0.05 + rng.random::<f64>()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let initial = normalized(rng, n);
    let transition: Vec<f64> = (0..n).flat_map(|_| normalized(rng, n)).collect();
    let states = (0..n)
        .map(|_| {
            let coefficients: Vec<Vec<f64>> = (0..d)
                .map(|_| (0..=m).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect())
                .collect();
            let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.3);
            let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.2;
            StateEmission::new(coefficients, &cov)
        })
        .collect();
    let model = HmmModel {
        n_states: n,
        n_pc: d,
        design,
        covariance_mode: CovarianceMode::Full,
        initial,
        transition,
        states,
        label_ordering: LabelOrdering::AsFitted,
        fit: None,
    };
    let levels = [
        (AgeGroup::Open, EventType::Domestic),
        (AgeGroup::U21, EventType::WorldCupJuniors),
        (AgeGroup::U23, EventType::WorldChampsOlympics),
        (AgeGroup::Open, EventType::WorldCupJuniors),
    ];
    let covariates: Vec<CovariateVector> = (0..t_len)
        .map(|_| {
            let (a, e) = levels[rng.random_range(0..levels.len())];
            design.covariates(a, e).unwrap()
        })
        .collect();
    let scores = (0..t_len)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    (model, ObservationSeq { id: "x".into(), scores, covariates })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Every state path in lexicographic order with its joint log-probability.
fn enumerate_paths(model: &HmmModel, seq: &ObservationSeq) -> Vec<(Vec<usize>, f64)> {
    let n = model.n_states;
    let t_len = seq.len();
    let lb: Vec<Vec<f64>> = (0..t_len)
        .map(|t| (0..n).map(|j| log_emission_density(model, j, &seq.covariates[t], &seq.scores[t]).unwrap()).collect())
        .collect();
    let mut out = Vec::new();
    for code in 0..n.pow(t_len as u32) {
        let mut path = vec![0; t_len];
        let mut c = code;
        for t in (0..t_len).rev() {
            path[t] = c % n;
            c /= n;
        }
        let mut lp = model.initial[path[0]].ln() + lb[0][path[0]];
        for t in 1..t_len {
            lp += model.transition_prob(path[t - 1], path[t]).ln() + lb[t][path[t]];
        }
        out.push((path, lp));
    }
    out
}

fn hmm_oracle(report: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut ll_err, mut post_err) = (0.0f64, 0.0f64);
    let mut path_mismatch = 0;
    for inst in 0..100 {
        let n = 2 + inst % 2;
        let t_len = 2 + (inst / 2) % 5;
        let (model, seq) = random_instance(&mut rng, n, t_len);
        let paths = enumerate_paths(&model, &seq);
        let lps: Vec<f64> = paths.iter().map(|p| p.1).collect();
        let brute_ll = log_sum_exp(&lps);
        ll_err = ll_err.max(rel_err(forward_log_likelihood(&model, &seq).unwrap(), brute_ll));

        let fb = forward_backward(&model, &seq).unwrap();
        for tt in 0..t_len {
            for j in 0..n {
                let sel: Vec<f64> = paths.iter().filter(|p| p.0[tt] == j).map(|p| p.1).collect();
                let brute = (log_sum_exp(&sel) - brute_ll).exp();
                post_err = post_err.max(rel_err(fb.gamma[tt][j], brute));
            }
        }
        // strict > keeps the lexicographically first maximiser
        let mut best = &paths[0];
        for p in &paths {
            if p.1 > best.1 {
                best = p;
            }
        }
        if viterbi_decode(&model, &seq).unwrap().path_indices() != best.0 {
            path_mismatch += 1;
        }
    }
    let elapsed = t.elapsed();
    report.record(
        "HMM exhaustive oracle",
        ll_err <= 1e-10 && post_err <= 1e-10 && path_mismatch == 0 && elapsed < Duration::from_secs(30),
        true,
        format!("100 instances; max rel err logL {ll_err:.2e}, posteriors {post_err:.2e}; {path_mismatch} Viterbi mismatches"),
        elapsed,
    );
}

fn scored_sequences(spec: &GeneratorSpec, athletes: usize, races: usize) -> (Vec<ObservationSeq>, Vec<Vec<usize>>) {
    let data = generate_dataset(spec, athletes, races).unwrap();
    let fpca = spec.prepare().unwrap().fpca_model();
    let careers = build_career_sequences(&data.records).unwrap().sequences;
    let design = spec.design().unwrap();
    let seqs = score_careers(&careers, &fpca, design)
        .unwrap()
        .into_iter()
        .map(|s| s.observations)
        .collect();
    (seqs, data.truth.state_paths())
}

fn em_monotonicity(report: &mut Report) {
    let t = Instant::now();
    let mut worst_drop = 0.0f64;
    let mut fits = 0;
    for seed in 0..20u64 {
        let mut spec = GeneratorSpec::default_500m();
        spec.seed = 1000 + seed;
        let (seqs, _) = scored_sequences(&spec, 20, 8);
        let config = EmConfig {
            restarts: 1,
            seed,
            ..EmConfig::default()
        };
        let (_, fit) = em_fit(&seqs, 3, Design::Age500, &config).unwrap();
        for w in fit.log_likelihood_trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        fits += 1;
    }
    report.record(
        "EM monotonicity",
        fits == 20 && worst_drop <= 1e-8,
        true,
        format!("{fits} fits; largest per-iteration decrease {worst_drop:.2e}"),
        t.elapsed(),
    );
}

/// Truth has the tabled intercepts as state means and no covariate effects;
/// fits use the all-zero baseline covariates.
fn recovery_sequences(seed: u64) -> (Vec<ObservationSeq>, Vec<Vec<usize>>) {
    let mut spec = GeneratorSpec::default_500m();
    spec.scores = ScoreModel::Hmm {
        model: intercept_only_model(Design::Age500, RECOVERY_VARIANCE, RECOVERY_SELF_LOOP),
    };
    spec.schedule.race_count_jitter = 0;
    spec.noise_sd = 0.0;
    spec.seed = seed;
    let (mut seqs, paths) = scored_sequences(&spec, RECOVERY_ATHLETES, RECOVERY_RACES);
    for s in &mut seqs {
        s.covariates = vec![Design::Age500.baseline(); s.len()];
    }
    (seqs, paths)
}

fn recovery_config(seed: u64) -> EmConfig {
    EmConfig {
        restarts: RECOVERY_RESTARTS,
        seed,
        ..EmConfig::default()
    }
}

fn parameter_recovery(report: &mut Report) {
    let t = Instant::now();
    let truth: Vec<Vec<f64>> = INTERCEPTS_500.iter().map(|r| r.to_vec()).collect();
    let mut good = 0;
    let mut cells = Vec::new();
    for seed in 0..RECOVERY_SEEDS {
        let (seqs, paths) = recovery_sequences(seed);
        let (model, _) = em_fit(&seqs, 4, Design::Age500, &recovery_config(seed)).unwrap();
        let est: Vec<Vec<f64>> = model.states.iter().map(|s| s.intercepts()).collect();
        let aligned = model.permuted(&align_states(&truth, &est));
        let mut max_err = 0.0f64;
        for (j, row) in truth.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                max_err = max_err.max((aligned.states[j].coefficients[i][0] - v).abs());
            }
        }
        let (mut hit, mut total) = (0usize, 0usize);
        for (s, p) in seqs.iter().zip(&paths) {
            let decoded = viterbi_decode(&aligned, s).unwrap().path_indices();
            hit += decoded.iter().zip(p).filter(|(a, b)| a == b).count();
            total += p.len();
        }
        let acc = hit as f64 / total as f64;
        if max_err <= INTERCEPT_TOL && acc >= VITERBI_MIN {
            good += 1;
        }
        cells.push(format!("{max_err:.3}/{acc:.3}"));
    }
    let elapsed = t.elapsed();
    report.record(
        "parameter recovery",
        good >= SEEDS_NEEDED && elapsed < Duration::from_secs(300),
        true,
        format!(
            "{good}/{RECOVERY_SEEDS} seeds within {INTERCEPT_TOL} and >= {VITERBI_MIN} Viterbi (max err/accuracy: {})",
            cells.join(" ")
        ),
        elapsed,
    );
}

fn aic_pattern(report: &mut Report) {
    let t = Instant::now();
    let mut ratio_ok = 0;
    let mut four = 0;
    let mut cells = Vec::new();
    for seed in 0..RECOVERY_SEEDS {
        let (seqs, _) = recovery_sequences(seed);
        let sweep = select_states(&seqs, Design::Age500, 2, 7, &recovery_config(seed)).unwrap();
        let aic = |n: usize| sweep.rows.iter().find(|r| r.n_states == n).and_then(|r| r.aic);
        let gain_34 = aic(3).unwrap() - aic(4).unwrap();
        let gain_45 = aic(4).unwrap() - aic(5).unwrap();
        // a 4 -> 5 loss satisfies the pattern outright
        if gain_34 > 0.0 && (gain_45 <= 0.0 || gain_34 >= AIC_RATIO_MIN * gain_45) {
            ratio_ok += 1;
        }
        if sweep.selected == 4 {
            four += 1;
        }
        cells.push(format!("{:.1}:{}", gain_34 / gain_45, sweep.selected));
    }
    let elapsed = t.elapsed();
    let detail = format!("ratio:selected per seed {}", cells.join(" "));
    report.record(
        "AIC pattern, gain(3->4) >= 10 x gain(4->5)",
        ratio_ok >= SEEDS_NEEDED,
        false,
        format!("{ratio_ok}/{RECOVERY_SEEDS} seeds; {detail}"),
        elapsed,
    );
    report.record(
        "AIC selection rule returns 4",
        four >= SEEDS_NEEDED,
        true,
        format!("{four}/{RECOVERY_SEEDS} seeds"),
        elapsed,
    );
}

fn main() -> ExitCode {
    let mut report = Report {
        lines: Vec::new(),
        failed: Vec::new(),
    };
    reference_values(&mut report);
    mixture_check(&mut report);
    worked_example(&mut report);
    fpca_orthonormality(&mut report);
    dual_path(&mut report);
    hmm_oracle(&mut report);
    em_monotonicity(&mut report);
    parameter_recovery(&mut report);
    aic_pattern(&mut report);
    println!("{} criteria checked, {} asserted failures", report.lines.len(), report.failed.len());
    if report.failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed: {}", report.failed.join(", "));
        ExitCode::FAILURE
    }
}
