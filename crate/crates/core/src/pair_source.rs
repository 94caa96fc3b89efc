//! Monte Carlo model of the cascade photon-pair source and its detectors.
//!
//! Pairs are emitted as a homogeneous Poisson process. The idler follows
//! its signal photon after an exponentially distributed delay (the lifetime
//! of the intermediate level). Uncorrelated background photons and detector
//! dark counts are independent Poisson processes.
//!
//! Long runs are generated in fixed one-second windows, each with its own
//! random substreams, and then merged. The result is the same for any
//! number of worker threads.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;

use crate::rng::{domain, substream, StreamRng};
use crate::stream::{TagStream, TICKS_PER_NS};

/// Length of one generation window.
pub const WINDOW_NS: f64 = 1e9;

/// Upper bound on the expected number of events held in memory at once.
pub const MAX_EVENTS: f64 = (1u64 << 31) as f64;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("invalid source configuration: {0}")]
    InvalidSource(String),
    #[error("invalid detector configuration: {0}")]
    InvalidDetector(String),
    #[error("expected {expected:.3e} events exceeds capacity of {MAX_EVENTS:.3e}")]
    Capacity { expected: f64 },
    #[error("photon times must be sorted ascending (index {0})")]
    Unsorted(usize),
    #[error("splitting ratio must lie in [0, 1], got {0}")]
    InvalidSplit(f64),
}

/// Physical parameters of the simulated pair source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    /// Generated pairs per second.
    pub pair_rate: f64,
    /// Lifetime of the intermediate level, ns.
    pub tau_ns: f64,
    /// Simulated wall time, s.
    pub duration_s: f64,
    /// Uncorrelated photons per second reaching the signal path.
    pub background_rate_signal: f64,
    /// Uncorrelated photons per second reaching the idler path.
    pub background_rate_idler: f64,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str, v: f64| SimError::InvalidSource(format!("{what} = {v}"));
        for (name, v) in [
            ("pair_rate", self.pair_rate),
            ("background_rate_signal", self.background_rate_signal),
            ("background_rate_idler", self.background_rate_idler),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(name, v));
            }
        }
        if !(self.tau_ns.is_finite() && self.tau_ns > 0.0) {
            return Err(bad("tau_ns", self.tau_ns));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(bad("duration_s", self.duration_s));
        }
        Ok(())
    }

    pub fn duration_ns(&self) -> f64 {
        self.duration_s * 1e9
    }

    pub fn window_count(&self) -> usize {
        (self.duration_ns() / WINDOW_NS).ceil().max(1.0) as usize
    }

    fn window_span(&self, window: usize) -> (f64, f64) {
        let start = window as f64 * WINDOW_NS;
        (start, (start + WINDOW_NS).min(self.duration_ns()))
    }

    fn expected_events(&self) -> f64 {
        (2.0 * self.pair_rate + self.background_rate_signal + self.background_rate_idler) * self.duration_s
    }
}

/// Single-photon counting detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Probability that an arriving photon produces a tag.
    pub efficiency: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    /// Gaussian timing jitter standard deviation, ps.
    pub jitter_sigma_ps: f64,
    /// Minimum separation between consecutive tags, ns.
    pub dead_time_ns: f64,
}

/// Per-detector jitter such that the difference of two detectors has the
/// combined 600 ps spread.
pub const DEFAULT_JITTER_PS: f64 = 424.264_068_711_928_5;

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            efficiency: 0.4,
            dark_rate: 100.0,
            jitter_sigma_ps: DEFAULT_JITTER_PS,
            dead_time_ns: 0.0,
        }
    }
}

impl DetectorConfig {
    /// Perfect detector: every photon, exact timing, no dark counts.
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_rate: 0.0,
            jitter_sigma_ps: 0.0,
            dead_time_ns: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str, v: f64| SimError::InvalidDetector(format!("{what} = {v}"));
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(bad("efficiency", self.efficiency));
        }
        for (name, v) in [
            ("dark_rate", self.dark_rate),
            ("jitter_sigma_ps", self.jitter_sigma_ps),
            ("dead_time_ns", self.dead_time_ns),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(name, v));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonPair {
    pub signal: f64,
    pub idler: f64,
}

/// Ground-truth emission times in ns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthEvents {
    /// Sorted by signal time; `idler >= signal` always.
    pub pairs: Vec<PhotonPair>,
    pub background_signal: Vec<f64>,
    pub background_idler: Vec<f64>,
}

impl TruthEvents {
    /// Signal-path photons, pairs and background merged, sorted.
    pub fn signal_photons(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pairs.iter().map(|p| p.signal).collect();
        v.extend_from_slice(&self.background_signal);
        v.sort_unstable_by(f64::total_cmp);
        v
    }

    /// Idler-path photons, pairs and background merged, sorted.
    pub fn idler_photons(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pairs.iter().map(|p| p.idler).collect();
        v.extend_from_slice(&self.background_idler);
        v.sort_unstable_by(f64::total_cmp);
        v
    }

    fn append(&mut self, mut other: TruthEvents) {
        self.pairs.append(&mut other.pairs);
        self.background_signal.append(&mut other.background_signal);
        self.background_idler.append(&mut other.background_idler);
    }
}

/// Arrival times of a homogeneous Poisson process on `[start, end)` ns.
fn poisson_times(rate_per_s: f64, start: f64, end: f64, rng: &mut StreamRng) -> Vec<f64> {
    if rate_per_s <= 0.0 || end <= start {
        return Vec::new();
    }
    let gap = Exp::new(rate_per_s * 1e-9).expect("positive rate");
    let mut out = Vec::with_capacity(((end - start) * rate_per_s * 1e-9 * 1.1) as usize + 8);
    let mut t = start + gap.sample(rng);
    while t < end {
        out.push(t);
        t += gap.sample(rng);
    }
    out
}

/// Truth events for one generation window.
pub fn generate_window(cfg: &SourceConfig, seed: u64, window: usize) -> TruthEvents {
    let (start, end) = cfg.window_span(window);
    let w = window as u64;

    let mut rng = substream(seed, domain::PAIRS, w);
    let delay = Exp::new(1.0 / cfg.tau_ns).expect("validated tau");
    let pairs = poisson_times(cfg.pair_rate, start, end, &mut rng)
        .into_iter()
        .map(|signal| PhotonPair {
            signal,
            idler: signal + delay.sample(&mut rng),
        })
        .collect();

    let mut rng = substream(seed, domain::BACKGROUND_SIGNAL, w);
    let background_signal = poisson_times(cfg.background_rate_signal, start, end, &mut rng);
    let mut rng = substream(seed, domain::BACKGROUND_IDLER, w);
    let background_idler = poisson_times(cfg.background_rate_idler, start, end, &mut rng);

    TruthEvents {
        pairs,
        background_signal,
        background_idler,
    }
}

/// Generates all emission events of a run. Identical to concatenating
/// [`generate_window`] over every window.
pub fn generate_pairs(cfg: &SourceConfig, seed: u64) -> Result<TruthEvents, SimError> {
    cfg.validate()?;
    let expected = cfg.expected_events();
    if expected > MAX_EVENTS {
        return Err(SimError::Capacity { expected });
    }
    let mut all = TruthEvents::default();
    for w in 0..cfg.window_count() {
        all.append(generate_window(cfg, seed, w));
    }
    Ok(all)
}

/// Routes each item to the first output with probability `p`.
pub fn split_by<T: Copy>(items: &[T], p: f64, rng: &mut StreamRng) -> (Vec<T>, Vec<T>) {
    let mut first = Vec::with_capacity((items.len() as f64 * p) as usize + 8);
    let mut second = Vec::with_capacity((items.len() as f64 * (1.0 - p)) as usize + 8);
    for &x in items {
        if rng.gen::<f64>() < p {
            first.push(x);
        } else {
            second.push(x);
        }
    }
    (first, second)
}

/// Fiber beam splitter acting on an already tagged stream. Both arms keep
/// the input channel id.
pub fn beamsplit(tags: &TagStream, p: f64, seed: u64) -> Result<(TagStream, TagStream), SimError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SimError::InvalidSplit(p));
    }
    let mut rng = substream(seed, domain::SPLITTER, 0);
    let (a, b) = split_by(tags.ticks(), p, &mut rng);
    // Subsequences of a sorted stream stay sorted.
    Ok((
        TagStream::from_unsorted(tags.channel(), a),
        TagStream::from_unsorted(tags.channel(), b),
    ))
}

fn quantize(t_ns: f64) -> u64 {
    (t_ns * TICKS_PER_NS).floor() as u64
}

/// Detector response without dead time: efficiency thinning, jitter, dark
/// counts over `span` (ns), sorting and quantization. Tags that jitter
/// below zero are dropped.
pub fn detect_raw(times: &[f64], span: (f64, f64), det: &DetectorConfig, rng: &mut StreamRng) -> Vec<u64> {
    let jitter = Normal::new(0.0, det.jitter_sigma_ps * 1e-3).expect("validated jitter");
    let mut kept: Vec<f64> = Vec::with_capacity((times.len() as f64 * det.efficiency) as usize + 8);
    for &t in times {
        if det.efficiency >= 1.0 || rng.gen::<f64>() < det.efficiency {
            kept.push(t);
        }
    }
    if det.jitter_sigma_ps > 0.0 {
        for t in &mut kept {
            *t += jitter.sample(rng);
        }
    }
    kept.extend(poisson_times(det.dark_rate, span.0, span.1, rng));
    kept.retain(|&t| t >= 0.0);
    let mut ticks: Vec<u64> = kept.into_iter().map(quantize).collect();
    ticks.sort_unstable();
    ticks
}

/// Drops every tag closer than `dead_time_ns` to the previous surviving tag.
pub fn apply_dead_time(ticks: Vec<u64>, dead_time_ns: f64) -> Vec<u64> {
    if dead_time_ns <= 0.0 {
        return ticks;
    }
    let mut out = Vec::with_capacity(ticks.len());
    let mut last: Option<u64> = None;
    for t in ticks {
        match last {
            Some(l) if ((t - l) as f64) / TICKS_PER_NS < dead_time_ns => {}
            _ => {
                out.push(t);
                last = Some(t);
            }
        }
    }
    out
}

/// Full single-detector response for a sorted list of photon arrival times.
/// `span` is the time range (ns) over which dark counts occur.
pub fn detect(
    times: &[f64],
    span: (f64, f64),
    det: &DetectorConfig,
    channel: u8,
    seed: u64,
) -> Result<TagStream, SimError> {
    det.validate()?;
    if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
        return Err(SimError::Unsorted(i + 1));
    }
    let expected = times.len() as f64 + det.dark_rate * (span.1 - span.0).max(0.0) * 1e-9;
    if expected > MAX_EVENTS {
        return Err(SimError::Capacity { expected });
    }
    let mut rng = substream(seed, domain::DETECTOR, channel as u64);
    let raw = detect_raw(times, span, det, &mut rng);
    Ok(TagStream::from_unsorted(
        channel,
        apply_dead_time(raw, det.dead_time_ns),
    ))
}

/// Which photon of the pair announces the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeraldRole {
    Signal,
    Idler,
}

impl std::str::FromStr for HeraldRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "signal" => Ok(HeraldRole::Signal),
            "idler" => Ok(HeraldRole::Idler),
            other => Err(format!("unknown herald `{other}` (expected signal or idler)")),
        }
    }
}

impl HeraldRole {
    pub fn as_str(self) -> &'static str {
        match self {
            HeraldRole::Signal => "signal",
            HeraldRole::Idler => "idler",
        }
    }
}

/// Herald detector plus the two detectors behind the HBT splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbtSetup {
    pub herald: HeraldRole,
    pub herald_detector: DetectorConfig,
    pub arm1_detector: DetectorConfig,
    pub arm2_detector: DetectorConfig,
    /// Probability that a partner photon goes to arm 1.
    pub split_ratio: f64,
}

impl Default for HbtSetup {
    fn default() -> Self {
        Self {
            herald: HeraldRole::Signal,
            herald_detector: DetectorConfig::default(),
            arm1_detector: DetectorConfig::default(),
            arm2_detector: DetectorConfig::default(),
            split_ratio: 0.5,
        }
    }
}

/// Tag streams of a heralded HBT run: channel 0 herald, 1 and 2 the arms.
#[derive(Debug, Clone, PartialEq)]
pub struct HbtStreams {
    pub herald: TagStream,
    pub arm1: TagStream,
    pub arm2: TagStream,
}

impl HbtStreams {
    pub fn into_vec(self) -> Vec<TagStream> {
        vec![self.herald, self.arm1, self.arm2]
    }
}

/// Simulates source, splitter and detectors window by window (in parallel
/// on the current rayon pool) and merges the tag streams.
pub fn simulate_hbt(src: &SourceConfig, setup: &HbtSetup, seed: u64) -> Result<HbtStreams, SimError> {
    src.validate()?;
    for d in [&setup.herald_detector, &setup.arm1_detector, &setup.arm2_detector] {
        d.validate()?;
    }
    if !(0.0..=1.0).contains(&setup.split_ratio) {
        return Err(SimError::InvalidSplit(setup.split_ratio));
    }
    let per_window = src.expected_events() * (WINDOW_NS.min(src.duration_ns()) / src.duration_ns());
    if per_window > MAX_EVENTS {
        return Err(SimError::Capacity { expected: per_window });
    }

    let windows: Vec<[Vec<u64>; 3]> = (0..src.window_count())
        .into_par_iter()
        .map(|w| {
            let truth = generate_window(src, seed, w);
            let (herald_photons, partner_photons) = match setup.herald {
                HeraldRole::Signal => (truth.signal_photons(), truth.idler_photons()),
                HeraldRole::Idler => (truth.idler_photons(), truth.signal_photons()),
            };
            drop(truth);
            let mut rng = substream(seed, domain::SPLITTER, w as u64);
            let (p1, p2) = split_by(&partner_photons, setup.split_ratio, &mut rng);
            let span = src.window_span(w);
            let det = |photons: &[f64], d: &DetectorConfig, k: u64| {
                let mut rng = substream(seed, domain::DETECTOR, 3 * w as u64 + k);
                detect_raw(photons, span, d, &mut rng)
            };
            [
                det(&herald_photons, &setup.herald_detector, 0),
                det(&p1, &setup.arm1_detector, 1),
                det(&p2, &setup.arm2_detector, 2),
            ]
        })
        .collect();

    let dets = [setup.herald_detector, setup.arm1_detector, setup.arm2_detector];
    let mut merged: Vec<Vec<u64>> = vec![Vec::new(), Vec::new(), Vec::new()];
    for (c, out) in merged.iter_mut().enumerate() {
        out.reserve(windows.iter().map(|w| w[c].len()).sum());
    }
    for w in windows {
        for (c, ticks) in w.into_iter().enumerate() {
            merged[c].extend_from_slice(&ticks);
        }
    }
    let mut streams = merged.into_iter().enumerate().map(|(c, mut ticks)| {
        // Windows overlap only by the idler delay and jitter, so this is
        // nearly sorted already.
        ticks.sort();
        TagStream::from_unsorted(c as u8, apply_dead_time(ticks, dets[c].dead_time_ns))
    });
    Ok(HbtStreams {
        herald: streams.next().unwrap(),
        arm1: streams.next().unwrap(),
        arm2: streams.next().unwrap(),
    })
}
