//! Heralded photon-pair simulation, conditional g² analysis and homodyne
//! variance envelopes of single-photon temporal modes.

pub mod correlation;
pub mod experiment;
pub mod expfit;
pub mod homodyne;
pub mod pair_source;
pub mod rng;
pub mod stream;
pub mod tagio;
pub mod temporal_mode;

pub use correlation::{
    accidental_estimate, conditional_histogram, cross_histogram, heralding_efficiency, normalize_g2,
    AccidentalEstimate, BinGeometry, CorrelationError, CorrelationHistogram, NormalizedG2,
};
pub use experiment::{run_hbt, run_homodyne, EnvelopeFit, HbtAnalysis, HbtResult, HomodyneRun, RunError};
pub use expfit::{fit_exp, initial_guess, BaselineMode, ExpFitResult, FitError, FitOptions, T0Mode};
pub use homodyne::{
    matched_filter, synth_moments, synth_reference, synth_traces, variance_envelope, HomodyneConfig, HomodyneError,
    NoiseModel, SampleMoments, TraceSet, VarianceEnvelope,
};
pub use pair_source::{simulate_hbt, DetectorConfig, HbtSetup, HbtStreams, HeraldRole, SimError, SourceConfig};
pub use stream::{TagStream, TICKS_PER_NS, TICK_PS};
pub use tagio::{parse_config, ConfigError, RunConfig};
pub use temporal_mode::{Envelope, EnvelopeKind};
