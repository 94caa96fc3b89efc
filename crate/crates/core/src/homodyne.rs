//! Triggered balanced-homodyne trace synthesis and variance envelopes.
//!
//! Each trace is band-limited Gaussian shot noise normalized to unit
//! variance per sample. With probability `η_eff = eta · mode_match²` a
//! photon term `a · c · ψ̃(t)` is added, where `a` is standard normal, `ψ̃`
//! is the mode passed through the same filter as the noise, and `c` makes
//! the matched-filter quadrature variance equal `1 + 2 η_eff`.
//!
//! The band limit is a first-order low-pass run forwards and backwards
//! (zero phase), with the single-pass corner placed so the combined
//! response is 3 dB down at `bandwidth`. Sample `j` sits at
//! `(j − trigger_index) / sample_rate`; envelope times are in ns on that
//! axis.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::rng::{domain, substream, StreamRng};
use crate::temporal_mode::Envelope;

/// Traces per work item when accumulating moments.
const BLOCK: usize = 4096;
/// Traces filtered side by side.
pub const LANES: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HomodyneError {
    #[error("invalid homodyne configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least 2 traces, got {0}")]
    TooFewTraces(u64),
    #[error("trace geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("trace data length {got} does not match {n_traces} x {trace_length}")]
    DataLength {
        got: usize,
        n_traces: usize,
        trace_length: usize,
    },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("reference variance is zero at sample {0}")]
    ZeroReference(usize),
}

/// Sampling and band limit shared by noise and signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Samples per second.
    pub sample_rate: f64,
    /// Low-pass corner in Hz; `None` means white samples.
    pub bandwidth: Option<f64>,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), HomodyneError> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(HomodyneError::InvalidConfig(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if let Some(b) = self.bandwidth {
            if !(b.is_finite() && b > 0.0) {
                return Err(HomodyneError::InvalidConfig(format!(
                    "bandwidth must be positive, got {b}"
                )));
            }
            if self.sample_rate <= 2.0 * b {
                return Err(HomodyneError::InvalidConfig(format!(
                    "sample_rate {} must exceed twice the bandwidth {b}",
                    self.sample_rate
                )));
            }
        }
        Ok(())
    }

    pub fn dt_ns(&self) -> f64 {
        1e9 / self.sample_rate
    }

    fn filter(&self) -> Option<LowPass> {
        self.bandwidth.map(|b| LowPass::new(self.sample_rate, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LowPass {
    alpha: f64,
    pad: usize,
}

impl LowPass {
    fn new(sample_rate: f64, bandwidth: f64) -> Self {
        let corner = bandwidth / (std::f64::consts::SQRT_2 - 1.0).sqrt();
        let alpha = (-2.0 * std::f64::consts::PI * corner / sample_rate).exp();
        let pad = if alpha > 0.0 {
            ((1e-13f64).ln() / alpha.ln()).ceil().max(1.0) as usize
        } else {
            1
        };
        Self { alpha, pad }
    }

    /// Same recursion as [`LowPass::apply`] on independent columns.
    fn apply_lanes<const L: usize>(&self, x: &mut [[f64; L]]) {
        let (a, b) = (self.alpha, 1.0 - self.alpha);
        let mut y = [0.0; L];
        for row in x.iter_mut() {
            for k in 0..L {
                y[k] = b * row[k] + a * y[k];
                row[k] = y[k];
            }
        }
        y = [0.0; L];
        for row in x.iter_mut().rev() {
            for k in 0..L {
                y[k] = b * row[k] + a * y[k];
                row[k] = y[k];
            }
        }
    }

    fn apply(&self, x: &mut [f64]) {
        let (a, b) = (self.alpha, 1.0 - self.alpha);
        let mut y = 0.0;
        for v in x.iter_mut() {
            y = b * *v + a * y;
            *v = y;
        }
        y = 0.0;
        for v in x.iter_mut().rev() {
            y = b * *v + a * y;
            *v = y;
        }
    }

    /// Standard deviation of filtered unit white noise.
    fn gain(&self) -> f64 {
        let a = self.alpha;
        ((1.0 - a) * (1.0 + a * a) / (1.0 + a).powi(3)).sqrt()
    }
}

/// Filters `x` in place after padding it with `pad` zeros on each side,
/// returning the padded result.
fn filter_padded(filter: Option<LowPass>, x: &[f64]) -> Vec<f64> {
    match filter {
        None => x.to_vec(),
        Some(f) => {
            let mut buf = vec![0.0; x.len() + 2 * f.pad];
            buf[f.pad..f.pad + x.len()].copy_from_slice(x);
            f.apply(&mut buf);
            buf
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneConfig {
    pub sample_rate: f64,
    pub bandwidth: Option<f64>,
    pub trace_length: usize,
    pub trigger_index: usize,
    pub eta: f64,
    pub mode_match: f64,
    pub n_traces: usize,
    pub envelope: Envelope,
    /// White electronic noise added after the filter, as a variance in
    /// shot-noise units.
    pub electronic_noise: f64,
}

impl HomodyneConfig {
    pub fn validate(&self) -> Result<(), HomodyneError> {
        self.noise_model().validate()?;
        let bad = |m: String| Err(HomodyneError::InvalidConfig(m));
        if self.trace_length == 0 {
            return bad("trace_length must be positive".into());
        }
        if self.trigger_index >= self.trace_length {
            return bad(format!(
                "trigger_index {} outside trace of length {}",
                self.trigger_index, self.trace_length
            ));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        if !(0.0..=1.0).contains(&self.mode_match) {
            return bad(format!("mode_match must lie in [0, 1], got {}", self.mode_match));
        }
        if !(self.electronic_noise.is_finite() && self.electronic_noise >= 0.0) {
            return bad(format!(
                "electronic_noise must be non-negative, got {}",
                self.electronic_noise
            ));
        }
        if u32::try_from(self.trace_length).is_err() || u32::try_from(self.n_traces).is_err() {
            return bad("trace_length and n_traces must fit in 32 bits".into());
        }
        Ok(())
    }

    pub fn eta_eff(&self) -> f64 {
        self.eta * self.mode_match * self.mode_match
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            sample_rate: self.sample_rate,
            bandwidth: self.bandwidth,
        }
    }

    pub fn time_ns(&self, j: usize) -> f64 {
        (j as f64 - self.trigger_index as f64) * self.noise_model().dt_ns()
    }

    /// The shot-noise reference: same geometry, no photon.
    pub fn reference(&self) -> Self {
        Self { eta: 0.0, ..*self }
    }
}

/// Precomputed per-configuration state for drawing traces.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    cfg: HomodyneConfig,
    filter: Option<LowPass>,
    noise_scale: f64,
    /// `c · ψ̃` on the trace grid.
    photon: Vec<f64>,
    eta_eff: f64,
}

impl Synthesizer {
    pub fn new(cfg: &HomodyneConfig) -> Result<Self, HomodyneError> {
        cfg.validate()?;
        let noise = cfg.noise_model();
        let filter = noise.filter();
        let gain = filter.map_or(1.0, |f| f.gain());
        let pad = filter.map_or(0, |f| f.pad);
        let n = cfg.trace_length;
        let dt = noise.dt_ns();

        // The mode extends past the window; filter it on the padded grid.
        let psi_ext: Vec<f64> = (0..n + 2 * pad)
            .map(|k| cfg.envelope.psi(cfg.time_ns(k) - pad as f64 * dt))
            .collect();
        let mut psi_tilde = psi_ext.clone();
        if let Some(f) = filter {
            f.apply(&mut psi_tilde);
        }
        let psi_tilde: Vec<f64> = psi_tilde[pad..pad + n].iter().map(|v| v / gain).collect();
        let psi = &psi_ext[pad..pad + n];

        let s: f64 = psi_tilde.iter().zip(psi).map(|(a, b)| a * b).sum::<f64>() * dt;
        let norm2 = matched_norm2(psi, &noise);
        let c = if s > 0.0 { (2.0 * norm2).sqrt() / s } else { 0.0 };
        Ok(Self {
            cfg: *cfg,
            filter,
            noise_scale: 1.0 / gain,
            photon: psi_tilde.iter().map(|v| c * v).collect(),
            eta_eff: cfg.eta_eff(),
        })
    }

    pub fn config(&self) -> &HomodyneConfig {
        &self.cfg
    }

    /// Expected per-sample variance in shot-noise units.
    pub fn expected_variance(&self) -> Vec<f64> {
        self.photon
            .iter()
            .map(|p| 1.0 + self.cfg.electronic_noise + self.eta_eff * p * p)
            .collect()
    }

    /// Draws trace `index` of stream `(seed, domain)` into `out`.
    pub fn trace_into(&self, seed: u64, domain: u64, index: u64, out: &mut [f64]) {
        self.traces_into(seed, domain, index, out, &mut Vec::new());
    }

    /// Draws traces `first..first + count` into `out` (trace-major,
    /// `count ≤ LANES`). Each trace has its own substream, so the result
    /// equals drawing them one at a time.
    pub fn traces_into(&self, seed: u64, domain: u64, first: u64, out: &mut [f64], scratch: &mut Vec<[f64; LANES]>) {
        let n = self.cfg.trace_length;
        let count = out.len() / n;
        assert!(
            count <= LANES && out.len() == count * n,
            "bad batch of {} samples",
            out.len()
        );
        let mut rngs: Vec<StreamRng> = (0..count as u64).map(|k| substream(seed, domain, first + k)).collect();
        match self.filter {
            None => {
                for (rng, t) in rngs.iter_mut().zip(out.chunks_mut(n)) {
                    for v in t.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                }
            }
            Some(f) => {
                scratch.clear();
                scratch.resize(n + 2 * f.pad, [0.0; LANES]);
                for (k, rng) in rngs.iter_mut().enumerate() {
                    for row in scratch.iter_mut() {
                        row[k] = rng.sample(StandardNormal);
                    }
                }
                f.apply_lanes(scratch);
                for (k, t) in out.chunks_mut(n).enumerate() {
                    for (o, row) in t.iter_mut().zip(&scratch[f.pad..f.pad + n]) {
                        *o = row[k] * self.noise_scale;
                    }
                }
            }
        }
        for (rng, t) in rngs.iter_mut().zip(out.chunks_mut(n)) {
            let present = rng.gen::<f64>() < self.eta_eff;
            let a: f64 = rng.sample(StandardNormal);
            if present {
                for (o, p) in t.iter_mut().zip(&self.photon) {
                    *o += a * p;
                }
            }
            if self.cfg.electronic_noise > 0.0 {
                let e = self.cfg.electronic_noise.sqrt();
                for o in t.iter_mut() {
                    *o += e * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
}

/// `norm²` such that `Σ_j x_j ψ_j Δt / norm` has unit variance for shot
/// noise `x` under `noise`.
fn matched_norm2(psi: &[f64], noise: &NoiseModel) -> f64 {
    let dt = noise.dt_ns();
    let filter = noise.filter();
    let gain = filter.map_or(1.0, |f| f.gain());
    let filtered = filter_padded(filter, psi);
    filtered.iter().map(|v| v * v).sum::<f64>() * dt * dt / (gain * gain)
}

/// `n_traces × trace_length` samples, trace-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    sample_rate: f64,
    trace_length: usize,
    trigger_index: usize,
    data: Vec<f32>,
}

impl TraceSet {
    pub fn new(
        sample_rate: f64,
        trace_length: usize,
        trigger_index: usize,
        data: Vec<f32>,
    ) -> Result<Self, HomodyneError> {
        if trace_length == 0 || trigger_index >= trace_length {
            return Err(HomodyneError::GeometryMismatch(format!(
                "trigger_index {trigger_index} outside trace of length {trace_length}"
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(HomodyneError::InvalidConfig(format!(
                "sample_rate must be positive, got {sample_rate}"
            )));
        }
        if !data.len().is_multiple_of(trace_length) {
            return Err(HomodyneError::DataLength {
                got: data.len(),
                n_traces: data.len() / trace_length,
                trace_length,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(HomodyneError::NonFinite(i));
        }
        Ok(Self {
            sample_rate,
            trace_length,
            trigger_index,
            data,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn trace_length(&self) -> usize {
        self.trace_length
    }

    pub fn trigger_index(&self) -> usize {
        self.trigger_index
    }

    pub fn n_traces(&self) -> usize {
        self.data.len() / self.trace_length
    }

    pub fn trace(&self, k: usize) -> &[f32] {
        &self.data[k * self.trace_length..(k + 1) * self.trace_length]
    }

    pub fn samples(&self) -> &[f32] {
        &self.data
    }

    pub fn time_ns(&self, j: usize) -> f64 {
        (j as f64 - self.trigger_index as f64) * 1e9 / self.sample_rate
    }

    fn same_geometry(&self, other: &TraceSet) -> Result<(), HomodyneError> {
        if self.trace_length != other.trace_length
            || self.trigger_index != other.trigger_index
            || self.sample_rate != other.sample_rate
        {
            return Err(HomodyneError::GeometryMismatch(format!(
                "({} S/s, {} samples, trigger {}) vs ({} S/s, {} samples, trigger {})",
                self.sample_rate,
                self.trace_length,
                self.trigger_index,
                other.sample_rate,
                other.trace_length,
                other.trigger_index
            )));
        }
        Ok(())
    }
}

fn synth_set(cfg: &HomodyneConfig, seed: u64, domain: u64) -> Result<TraceSet, HomodyneError> {
    let synth = Synthesizer::new(cfg)?;
    let n = cfg.trace_length;
    let mut data = vec![0f32; n * cfg.n_traces];
    data.par_chunks_mut(n * BLOCK).enumerate().for_each(|(b, chunk)| {
        let mut buf = vec![0.0; n * LANES];
        let mut scratch = Vec::new();
        for (g, out) in chunk.chunks_mut(n * LANES).enumerate() {
            let buf = &mut buf[..out.len()];
            synth.traces_into(seed, domain, (b * BLOCK + g * LANES) as u64, buf, &mut scratch);
            for (o, v) in out.iter_mut().zip(buf.iter()) {
                *o = *v as f32;
            }
        }
    });
    TraceSet::new(cfg.sample_rate, n, cfg.trigger_index, data)
}

/// Heralded traces for `cfg`. Deterministic in `seed` for any thread count.
pub fn synth_traces(cfg: &HomodyneConfig, seed: u64) -> Result<TraceSet, HomodyneError> {
    synth_set(cfg, seed, domain::TRACES)
}

/// Shot-noise reference traces with the geometry of `cfg`.
pub fn synth_reference(cfg: &HomodyneConfig, seed: u64) -> Result<TraceSet, HomodyneError> {
    synth_set(&cfg.reference(), seed, domain::REFERENCE)
}

/// Per-sample count, mean and sum of squared deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl SampleMoments {
    pub fn empty(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn from_sums(count: u64, sum: &[f64], sumsq: &[f64]) -> Self {
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let m2 = sumsq.iter().zip(sum).map(|(q, s)| (q - s * s / n).max(0.0)).collect();
        Self { count, mean, m2 }
    }

    /// Combines two disjoint samples.
    pub fn merge(&mut self, other: &SampleMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for j in 0..self.mean.len() {
            let d = other.mean[j] - self.mean[j];
            self.mean[j] += d * nb / n;
            self.m2[j] += other.m2[j] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Unbiased per-sample variance.
    pub fn variance(&self) -> Vec<f64> {
        let d = self.count.saturating_sub(1).max(1) as f64;
        self.m2.iter().map(|m| m / d).collect()
    }

    pub fn from_traces(traces: &TraceSet) -> Self {
        let n = traces.trace_length;
        let parts: Vec<SampleMoments> = traces
            .data
            .par_chunks(n * BLOCK)
            .map(|chunk| {
                let mut sum = vec![0.0; n];
                let mut sumsq = vec![0.0; n];
                for t in chunk.chunks(n) {
                    for j in 0..n {
                        let v = t[j] as f64;
                        sum[j] += v;
                        sumsq[j] += v * v;
                    }
                }
                Self::from_sums((chunk.len() / n) as u64, &sum, &sumsq)
            })
            .collect();
        merge_all(n, parts)
    }
}

fn merge_all(len: usize, parts: Vec<SampleMoments>) -> SampleMoments {
    let mut total = SampleMoments::empty(len);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Moments of `cfg.n_traces` traces drawn as by [`synth_traces`] (or
/// [`synth_reference`] when `reference` is set) without storing them.
pub fn synth_moments(cfg: &HomodyneConfig, seed: u64, reference: bool) -> Result<SampleMoments, HomodyneError> {
    let (cfg, dom) = if reference {
        (cfg.reference(), domain::REFERENCE)
    } else {
        (*cfg, domain::TRACES)
    };
    let synth = Synthesizer::new(&cfg)?;
    let n = cfg.trace_length;
    let n_blocks = cfg.n_traces.div_ceil(BLOCK);
    let parts: Vec<SampleMoments> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(cfg.n_traces);
            let mut buf = vec![0.0; n * LANES];
            let mut scratch = Vec::new();
            let mut sum = vec![0.0; n];
            let mut sumsq = vec![0.0; n];
            for first in (lo..hi).step_by(LANES) {
                let count = LANES.min(hi - first);
                let buf = &mut buf[..count * n];
                synth.traces_into(seed, dom, first as u64, buf, &mut scratch);
                for t in buf.chunks(n) {
                    for j in 0..n {
                        // Match the f32 storage of synth_traces.
                        let v = t[j] as f32 as f64;
                        sum[j] += v;
                        sumsq[j] += v * v;
                    }
                }
            }
            SampleMoments::from_sums((hi - lo) as u64, &sum, &sumsq)
        })
        .collect();
    Ok(merge_all(n, parts))
}

/// Shot-noise-normalized variance per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEnvelope {
    pub time_ns: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub trigger_index: usize,
}

impl VarianceEnvelope {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Averages groups of `k` samples; a trailing partial group is dropped.
    /// Errors combine as if neighbouring samples were independent.
    pub fn rebin(&self, k: usize) -> VarianceEnvelope {
        let k = k.max(1);
        let groups = self.len() / k;
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mut out = VarianceEnvelope {
            time_ns: Vec::with_capacity(groups),
            values: Vec::with_capacity(groups),
            errors: Vec::with_capacity(groups),
            trigger_index: self.trigger_index / k,
        };
        for g in 0..groups {
            let r = g * k..(g + 1) * k;
            out.time_ns.push(avg(&self.time_ns[r.clone()]));
            out.values.push(avg(&self.values[r.clone()]));
            out.errors
                .push(self.errors[r].iter().map(|e| e * e).sum::<f64>().sqrt() / k as f64);
        }
        out
    }

    /// Index of the maximum of a centred `width`-sample moving average.
    pub fn smoothed_peak_index(&self, width: usize) -> Option<usize> {
        let half = width / 2;
        let n = self.len();
        (0..n)
            .map(|j| {
                let r = j.saturating_sub(half)..(j + half + 1).min(n);
                let len = r.len() as f64;
                (j, self.values[r].iter().sum::<f64>() / len)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j)
    }

    /// Sample order reversed about the trigger (`j → 2·trigger − j`).
    /// Requires the trigger to sit at the trace centre.
    pub fn reversed(&self) -> Option<VarianceEnvelope> {
        if self.is_empty() || 2 * self.trigger_index + 1 != self.len() {
            return None;
        }
        let rev = |v: &[f64]| v.iter().rev().cloned().collect::<Vec<_>>();
        Some(VarianceEnvelope {
            time_ns: self.time_ns.clone(),
            values: rev(&self.values),
            errors: rev(&self.errors),
            trigger_index: self.trigger_index,
        })
    }
}

/// Ratio of per-sample variances with errors
/// `v · √(2/(n−1) + 2/(n_ref−1))`.
pub fn variance_envelope_from_moments(
    signal: &SampleMoments,
    reference: &SampleMoments,
    sample_rate: f64,
    trigger_index: usize,
) -> Result<VarianceEnvelope, HomodyneError> {
    for m in [signal, reference] {
        if m.count < 2 {
            return Err(HomodyneError::TooFewTraces(m.count));
        }
    }
    if signal.mean.len() != reference.mean.len() {
        return Err(HomodyneError::GeometryMismatch(format!(
            "trace lengths {} and {}",
            signal.mean.len(),
            reference.mean.len()
        )));
    }
    let vs = signal.variance();
    let vr = reference.variance();
    let rel = (2.0 / (signal.count - 1) as f64 + 2.0 / (reference.count - 1) as f64).sqrt();
    let mut values = Vec::with_capacity(vs.len());
    for (j, (s, r)) in vs.iter().zip(&vr).enumerate() {
        if *r <= 0.0 {
            return Err(HomodyneError::ZeroReference(j));
        }
        values.push(s / r);
    }
    let dt = 1e9 / sample_rate;
    Ok(VarianceEnvelope {
        time_ns: (0..vs.len()).map(|j| (j as f64 - trigger_index as f64) * dt).collect(),
        errors: values.iter().map(|v| v * rel).collect(),
        values,
        trigger_index,
    })
}

pub fn variance_envelope(traces: &TraceSet, reference: &TraceSet) -> Result<VarianceEnvelope, HomodyneError> {
    traces.same_geometry(reference)?;
    let s = SampleMoments::from_traces(traces);
    let r = SampleMoments::from_traces(reference);
    variance_envelope_from_moments(&s, &r, traces.sample_rate, traces.trigger_index)
}

/// Projects every trace on `env`: `X_k = Σ_t x_k(t) ψ(t) Δt / norm`, with
/// `norm` fixed by `noise` so that pure shot noise gives `Var(X) = 1`.
pub fn matched_filter(traces: &TraceSet, env: &Envelope, noise: &NoiseModel) -> Vec<f64> {
    let dt = 1e9 / traces.sample_rate;
    let psi: Vec<f64> = (0..traces.trace_length).map(|j| env.psi(traces.time_ns(j))).collect();
    let norm = matched_norm2(&psi, noise).sqrt();
    let w: Vec<f64> = psi.iter().map(|p| p * dt / norm).collect();
    traces
        .data
        .par_chunks(traces.trace_length)
        .map(|t| t.iter().zip(&w).map(|(x, w)| *x as f64 * w).sum())
        .collect()
}

/// Sample variance of `x` and its Gaussian standard error.
pub fn sample_variance(x: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let v = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((v, v * (2.0 / (n - 1) as f64).sqrt()))
}
