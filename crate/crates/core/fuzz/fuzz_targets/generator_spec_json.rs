#![no_main]

use libfuzzer_sys::fuzz_target;
use pacecurve::synth::GeneratorSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<GeneratorSpec>(data) else {
        return;
    };
    if spec.validate().is_ok() {
        let _ = spec.prepare();
    }
});
