//! Pacing-profile analysis for timed races.
//!
//! Split times are normalized into velocity profiles ([`ingest`]), smoothed
//! with a B-spline basis ([`fbasis`]) and summarized by functional principal
//! component scores ([`fpca`]). Each athlete's career of score vectors is then
//! modelled by a hidden Markov model whose Gaussian emission means depend
//! linearly on age-group and event-type indicators ([`hmm`]). [`synth`]
//! generates corpora with known ground truth for all of the above.

pub mod fbasis;
pub mod ingest;
pub mod fpca;
pub mod hmm;
pub mod reference;
pub mod pipeline;
pub mod synth;
