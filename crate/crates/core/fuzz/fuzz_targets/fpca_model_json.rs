#![no_main]

use libfuzzer_sys::fuzz_target;
use pacecurve::fpca::{eigenfunction_curve, variance_report, FpcaModel};

fuzz_target!(|data: &[u8]| {
    let Ok(model) = serde_json::from_slice::<FpcaModel>(data) else {
        return;
    };
    if model.validate().is_err() {
        return;
    }
    let _ = variance_report(&model);
    let (lo, hi) = (0.0, model.basis.domain_m as f64);
    for j in 1..=model.n_pc {
        let _ = eigenfunction_curve(&model, j, &[lo, 0.5 * (lo + hi), hi]);
    }
});
