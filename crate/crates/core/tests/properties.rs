use chrono::NaiveDate;
use pacecurve::fbasis::{smooth_profile, BasisConfig, FunctionalBasis};
use pacecurve::fpca::{reconstruct_profile, PcScores};
use pacecurve::ingest::{
    normalize_profile, parse_race_csv, write_race_csv, AgeGroup, EventType, RaceRecord, RacePhase, VelocityProfile,
};
use pacecurve::synth::{GeneratorSpec, ScoreModel};
use proptest::prelude::*;

fn distance() -> impl Strategy<Value = u32> {
    prop_oneof![Just(500u32), Just(1000u32)]
}

fn record() -> impl Strategy<Value = RaceRecord> {
    (
        "[A-Za-z0-9_]{1,12}",
        0i64..20_000,
        distance(),
        prop::sample::select(vec![AgeGroup::U18, AgeGroup::U21, AgeGroup::U23, AgeGroup::Open]),
        prop::sample::select(vec![EventType::Domestic, EventType::WorldCupJuniors, EventType::WorldChampsOlympics]),
        prop::option::of(prop::sample::select(vec![RacePhase::Heat, RacePhase::SemiFinal, RacePhase::Final])),
    )
        .prop_flat_map(|(id, day, d, age, ev, phase)| {
            prop::collection::vec(5.0f64..20.0, (d / 50) as usize).prop_map(move |times| RaceRecord {
                athlete_id: id.clone(),
                race_date: NaiveDate::from_ymd_opt(1990, 1, 1).unwrap() + chrono::Duration::days(day),
                distance_m: d,
                segment_times_s: times,
                age_group: age,
                event_type: ev,
                race_phase: phase,
            })
        })
}

fn profile_500() -> impl Strategy<Value = VelocityProfile> {
    prop::collection::vec(0.5f64..1.5, 10).prop_map(|v| VelocityProfile {
        grid_m: (0..10).map(|i| 25.0 + 50.0 * i as f64).collect(),
        v_norm: v,
        distance_m: 500,
    })
}

proptest! {
    #[test]
    fn normalization_is_scale_invariant(rec in record(), c in 0.01f64..100.0) {
        let mut scaled = rec.clone();
        scaled.segment_times_s.iter_mut().for_each(|t| *t *= c);
        let a = normalize_profile(&rec).unwrap();
        let b = normalize_profile(&scaled).unwrap();
        for (x, y) in a.v_norm.iter().zip(&b.v_norm) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn harmonic_mean_is_one(rec in record()) {
        let p = normalize_profile(&rec).unwrap();
        let n = p.v_norm.len() as f64;
        let h = n / p.v_norm.iter().map(|v| 1.0 / v).sum::<f64>();
        prop_assert!((h - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn csv_round_trip(recs in prop::collection::vec(record(), 1..6)) {
        let text = write_race_csv(&recs);
        let parsed = parse_race_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(&parsed, &recs);
        prop_assert_eq!(write_race_csv(&parsed), text);
    }

    #[test]
    fn smoothing_is_linear(p in profile_500(), q in profile_500(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let basis = FunctionalBasis::new(BasisConfig::default_for(500)).unwrap();
        let combo = VelocityProfile {
            v_norm: p.v_norm.iter().zip(&q.v_norm).map(|(x, y)| a * x + b * y).collect(),
            ..p.clone()
        };
        let sp = smooth_profile(&p, &basis).unwrap().profile.coeffs;
        let sq = smooth_profile(&q, &basis).unwrap().profile.coeffs;
        let sc = smooth_profile(&combo, &basis).unwrap().profile.coeffs;
        for k in 0..sc.len() {
            prop_assert!((sc[k] - (a * sp[k] + b * sq[k])).abs() <= 1e-10);
        }
    }

    #[test]
    fn sign_flip_leaves_reconstruction_unchanged(scores in prop::collection::vec(-0.3f64..0.3, 4), j in 0usize..4) {
        let mut spec = GeneratorSpec::default_500m();
        spec.scores = ScoreModel::Independent { variances: vec![0.04, 0.02, 0.01, 0.01] };
        let model = spec.prepare().unwrap().fpca_model();
        let mut flipped = model.clone();
        let nb = model.n_basis();
        flipped.eigenfunction_coeffs[j * nb..(j + 1) * nb].iter_mut().for_each(|c| *c = -*c);
        let mut neg = scores.clone();
        neg[j] = -neg[j];
        let a = reconstruct_profile(&model, &PcScores { scores }, 4).unwrap();
        let b = reconstruct_profile(&flipped, &PcScores { scores: neg }, 4).unwrap();
        prop_assert_eq!(a.coeffs, b.coeffs);
    }
}
