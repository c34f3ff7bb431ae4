#![no_main]

//! Input is an fPCA model JSON, a NUL byte, an HMM model JSON, a NUL byte,
//! then a race CSV.

use libfuzzer_sys::fuzz_target;
use pacecurve::fpca::FpcaModel;
use pacecurve::hmm::{viterbi_decode, HmmModel};
use pacecurve::ingest::{build_career_sequences, parse_race_csv};
use pacecurve::pipeline::score_careers;

fuzz_target!(|data: &[u8]| {
    let mut parts = data.splitn(3, |b| *b == 0);
    let (Some(f), Some(h), Some(csv)) = (parts.next(), parts.next(), parts.next()) else {
        return;
    };
    let (Ok(fpca), Ok(hmm)) = (serde_json::from_slice::<FpcaModel>(f), serde_json::from_slice::<HmmModel>(h)) else {
        return;
    };
    if fpca.validate().is_err() || hmm.validate().is_err() || fpca.n_pc != hmm.n_pc {
        return;
    }
    let Ok(records) = parse_race_csv(csv) else {
        return;
    };
    let Ok(build) = build_career_sequences(&records) else {
        return;
    };
    let Ok(scored) = score_careers(&build.sequences, &fpca, hmm.design) else {
        return;
    };
    for s in &scored {
        if let Ok(d) = viterbi_decode(&hmm, &s.observations) {
            assert!(d.viterbi_path.iter().all(|&k| k >= 1 && k <= hmm.n_states));
        }
    }
});
