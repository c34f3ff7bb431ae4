#![no_main]

use libfuzzer_sys::fuzz_target;
use pacecurve::hmm::{forward_backward, viterbi_decode, HmmModel, ObservationSeq};

fuzz_target!(|data: &[u8]| {
    let Ok(model) = serde_json::from_slice::<HmmModel>(data) else {
        return;
    };
    if model.validate().is_err() {
        return;
    }
    let seq = ObservationSeq {
        id: "fuzz".into(),
        scores: vec![vec![0.0; model.n_pc]; 3],
        covariates: vec![model.design.baseline(); 3],
    };
    if let Ok(fb) = forward_backward(&model, &seq) {
        for g in &fb.gamma {
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }
    let _ = viterbi_decode(&model, &seq);
});
