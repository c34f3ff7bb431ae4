#![no_main]

use libfuzzer_sys::fuzz_target;
use pacecurve::ingest::{build_career_sequences, normalize_profile, parse_race_csv, parse_race_csv_lenient};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_race_csv(data) {
        for r in &records {
            let p = normalize_profile(r).expect("parsed records normalize");
            assert!(p.v_norm.iter().all(|v| v.is_finite() && *v > 0.0));
        }
        let _ = build_career_sequences(&records);
    }
    let _ = parse_race_csv_lenient(data);
});
