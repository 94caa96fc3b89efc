use herald_core::tagio::{decode_tags, encode_tags};
use herald_core::{
    run_hbt, run_homodyne, simulate_hbt, DetectorConfig, Envelope, EnvelopeFit, EnvelopeKind, HbtAnalysis, HbtSetup,
    HeraldRole, HomodyneConfig, SourceConfig,
};

fn source(pair_rate: f64, duration_s: f64) -> SourceConfig {
    SourceConfig {
        pair_rate,
        tau_ns: 7.2,
        duration_s,
        background_rate_signal: 0.0,
        background_rate_idler: 0.0,
    }
}

fn setup(herald: HeraldRole, det: DetectorConfig) -> HbtSetup {
    HbtSetup {
        herald,
        herald_detector: det,
        arm1_detector: det,
        arm2_detector: det,
        split_ratio: 0.5,
    }
}

fn g2_zero(src: &SourceConfig, hbt: &HbtSetup, analysis: &HbtAnalysis, seed: u64) -> (f64, f64) {
    let s = simulate_hbt(src, hbt, seed).unwrap();
    let r = run_hbt(&s.herald, &s.arm1, &s.arm2, analysis).unwrap();
    let (v, e) = r.g2_zero().unwrap();
    (v, e.unwrap())
}

#[test]
fn ideal_detectors_antibunch() {
    let src = source(1e5, 1.0);
    let (v, e) = g2_zero(
        &src,
        &setup(HeraldRole::Signal, DetectorConfig::ideal()),
        &HbtAnalysis::default(),
        4,
    );
    assert!(v < 0.02, "g2(0) = {v} ± {e}");
}

#[test]
fn multi_pair_contamination_grows_with_rate() {
    let det = DetectorConfig {
        efficiency: 0.5,
        dark_rate: 0.0,
        ..DetectorConfig::default()
    };
    let hbt = setup(HeraldRole::Signal, det);
    let a = HbtAnalysis::default();
    let g: Vec<(f64, f64)> = [(2e5, 4.0), (1e6, 1.0), (5e6, 0.3)]
        .iter()
        .map(|&(rate, dur)| g2_zero(&source(rate, dur), &hbt, &a, 11))
        .collect();
    for w in g.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        assert!(hi.0 - lo.0 > 3.0 * (lo.1 * lo.1 + hi.1 * hi.1).sqrt(), "{g:?}");
    }
}

#[test]
fn idler_herald_with_shifted_window() {
    let det = DetectorConfig {
        efficiency: 0.6,
        dark_rate: 50.0,
        ..DetectorConfig::default()
    };
    let hbt = setup(HeraldRole::Idler, det);
    let src = source(3e5, 2.0);
    let shifted = HbtAnalysis {
        herald_shift_ns: -30.0,
        ..HbtAnalysis::default()
    };
    let s = simulate_hbt(&src, &hbt, 8).unwrap();
    let r = run_hbt(&s.herald, &s.arm1, &s.arm2, &shifted).unwrap();
    let (v, e) = r.g2_zero().unwrap();
    assert!(v < 0.1, "g2(0) = {v} ± {e:?}");
    // With the herald moved back, most partners land inside the window.
    assert!(r.heralding_efficiency > 0.5, "{}", r.heralding_efficiency);
    let unshifted = run_hbt(&s.herald, &s.arm1, &s.arm2, &HbtAnalysis::default()).unwrap();
    assert!(
        unshifted.heralding_efficiency < 0.05,
        "{}",
        unshifted.heralding_efficiency
    );
}

#[test]
fn simulated_tags_survive_the_file_format() {
    let s = simulate_hbt(
        &source(2e5, 0.5),
        &setup(HeraldRole::Signal, DetectorConfig::default()),
        2,
    )
    .unwrap();
    let streams = s.into_vec();
    let back = decode_tags(&encode_tags(&streams).unwrap()).unwrap();
    assert_eq!(back, streams);
}

fn homodyne(kind: EnvelopeKind, eta: f64, n: usize) -> HomodyneConfig {
    HomodyneConfig {
        sample_rate: 1e9,
        bandwidth: Some(210e6),
        trace_length: 129,
        trigger_index: 64,
        eta,
        mode_match: 0.95,
        n_traces: n,
        envelope: Envelope::new(kind, 0.0, 7.2).unwrap(),
        electronic_noise: 0.0,
    }
}

#[test]
fn rise_peaks_before_trigger_and_higher_with_more_efficiency() {
    let decay = run_homodyne(
        &homodyne(EnvelopeKind::Decay, 0.13, 200_000),
        1,
        &EnvelopeFit::new(EnvelopeKind::Decay),
    )
    .unwrap();
    let rise = run_homodyne(
        &homodyne(EnvelopeKind::Rise, 0.19, 200_000),
        2,
        &EnvelopeFit::new(EnvelopeKind::Rise),
    )
    .unwrap();
    let peak = |r: &herald_core::HomodyneRun| {
        let j = r.envelope.smoothed_peak_index(5).unwrap();
        (j, r.envelope.values[j])
    };
    let (jd, vd) = peak(&decay);
    let (jr, vr) = peak(&rise);
    assert!(jd >= 64 && jr < 64, "decay peak {jd}, rise peak {jr}");
    assert!(vr > vd, "rise {vr} vs decay {vd}");
    assert!(rise.fit.amplitude() > decay.fit.amplitude());
}
