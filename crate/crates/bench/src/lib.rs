//! Fixed inputs shared by the benchmarks.

use herald_core::expfit::model_value;
use herald_core::{
    simulate_hbt, DetectorConfig, Envelope, EnvelopeKind, HbtSetup, HbtStreams, HeraldRole, HomodyneConfig, RunConfig,
    SourceConfig,
};

/// Default source and detectors over `duration_s` seconds.
pub fn default_source(duration_s: f64) -> (SourceConfig, HbtSetup) {
    let cfg = RunConfig::defaults(7.2);
    (
        SourceConfig {
            duration_s,
            ..cfg.source
        },
        cfg.hbt,
    )
}

/// Herald and arm streams of a default run.
pub fn default_streams(duration_s: f64, seed: u64) -> HbtStreams {
    let (src, setup) = default_source(duration_s);
    simulate_hbt(&src, &setup, seed).expect("valid fixture")
}

/// Three mutually independent Poisson streams at `rate` per second.
pub fn independent_streams(rate: f64, duration_s: f64, seed: u64) -> HbtStreams {
    let src = SourceConfig {
        pair_rate: 0.0,
        tau_ns: 7.2,
        duration_s,
        background_rate_signal: 0.0,
        background_rate_idler: 0.0,
    };
    let det = DetectorConfig {
        dark_rate: rate,
        ..DetectorConfig::ideal()
    };
    let setup = HbtSetup {
        herald: HeraldRole::Signal,
        herald_detector: det,
        arm1_detector: det,
        arm2_detector: det,
        split_ratio: 0.5,
    };
    simulate_hbt(&src, &setup, seed).expect("valid fixture")
}

/// Default homodyne geometry with `n_traces` decaying-photon traces.
pub fn homodyne(n_traces: usize) -> HomodyneConfig {
    HomodyneConfig {
        n_traces,
        envelope: Envelope::decay(0.0, 7.2).expect("positive tau"),
        ..RunConfig::defaults(7.2).homodyne
    }
}

/// Noiseless decay envelope on a 1 ns grid with unit errors of `sigma`.
pub fn envelope_points(sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = [0.05, 7.2, 1.0, 0.0];
    let x: Vec<f64> = (-64..=64).map(|k| k as f64).collect();
    let y = x.iter().map(|&t| model_value(EnvelopeKind::Decay, &p, t)).collect();
    let s = vec![sigma; x.len()];
    (x, y, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_populated() {
        let s = default_streams(0.01, 1);
        assert!(!s.herald.is_empty() && !s.arm1.is_empty());
        let i = independent_streams(1e5, 0.01, 1);
        assert!(!i.arm2.is_empty());
        assert_eq!(homodyne(10).n_traces, 10);
        assert_eq!(envelope_points(1e-3).0.len(), 129);
    }
}
