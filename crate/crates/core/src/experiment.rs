//! End-to-end analysis pipelines built from the lower-level modules.

use crate::correlation::{
    accidental_estimate, conditional_histogram, cross_histogram, heralding_efficiency, normalize_g2,
    AccidentalEstimate, BinGeometry, CorrelationError, CorrelationHistogram, NormalizedG2,
};
use crate::expfit::{fit_exp, BaselineMode, ExpFitResult, FitError, FitOptions, T0Mode};
use crate::homodyne::{synth_moments, variance_envelope_from_moments, HomodyneConfig, HomodyneError, VarianceEnvelope};
use crate::stream::{ns_to_ticks_exact, TagStream};
use crate::temporal_mode::EnvelopeKind;

/// Window and binning of a heralded HBT analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbtAnalysis {
    pub tc_ns: f64,
    pub bin_ns: f64,
    /// Half-width of the `Δt12` axis; defaults to `Tc + bin/2`.
    pub range_ns: Option<f64>,
    /// Added to every herald time before correlating. A negative shift
    /// lets a herald that arrives after its partner open the window early.
    pub herald_shift_ns: f64,
}

impl Default for HbtAnalysis {
    fn default() -> Self {
        Self {
            tc_ns: 30.0,
            bin_ns: 2.0,
            range_ns: None,
            herald_shift_ns: 0.0,
        }
    }
}

impl HbtAnalysis {
    pub fn half_range_ns(&self) -> f64 {
        self.range_ns.unwrap_or(self.tc_ns + 0.5 * self.bin_ns)
    }

    /// Geometry of the `Δt12` histogram.
    pub fn target_geometry(&self) -> Result<BinGeometry, CorrelationError> {
        let r = self.half_range_ns();
        BinGeometry::from_ns(-r, r, self.bin_ns)
    }

    /// Geometry of the herald–arm histograms, `[0, 2 Tc)`.
    pub fn support_geometry(&self) -> Result<BinGeometry, CorrelationError> {
        BinGeometry::from_ns(0.0, 2.0 * self.tc_ns, self.bin_ns)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbtResult {
    pub analysis: HbtAnalysis,
    pub g_si1: CorrelationHistogram,
    pub g_si2: CorrelationHistogram,
    pub raw: CorrelationHistogram,
    pub accidentals: AccidentalEstimate,
    pub g2: NormalizedG2,
    pub n_heralds: u64,
    pub heralding_efficiency: f64,
}

impl HbtResult {
    /// `(value, error)` of the bin containing `Δt12 = 0`.
    pub fn g2_zero(&self) -> Option<(f64, Option<f64>)> {
        self.g2.at_ns(&self.raw.geometry, 0.0)
    }

    /// Centre, value and error of the smallest bin.
    pub fn g2_min(&self) -> Option<(f64, f64, Option<f64>)> {
        self.g2
            .argmin()
            .map(|b| (self.g2.centers_ns[b], self.g2.values[b], self.g2.errors[b]))
    }

    /// Flat `key = value` summary.
    pub fn summary(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let (z, ze) = self.g2_zero().map_or((f64::NAN, None), |(v, e)| (v, e));
        let (mc, mv, me) = self.g2_min().unwrap_or((f64::NAN, f64::NAN, None));
        let mut s = String::new();
        s.push_str(&format!("n_heralds = {}\n", self.n_heralds));
        s.push_str(&format!("coincidences = {}\n", self.raw.total()));
        s.push_str(&format!("heralding_efficiency = {}\n", self.heralding_efficiency));
        s.push_str(&format!("tc_ns = {}\n", self.analysis.tc_ns));
        s.push_str(&format!("bin_ns = {}\n", self.analysis.bin_ns));
        s.push_str(&format!("g2_zero = {z}\n"));
        s.push_str(&format!("g2_zero_error = {}\n", opt(ze)));
        s.push_str(&format!("g2_min_center_ns = {mc}\n"));
        s.push_str(&format!("g2_min = {mv}\n"));
        s.push_str(&format!("g2_min_error = {}\n", opt(me)));
        s
    }
}

/// Raw histogram, accidental estimate and `g²` for one herald and two arms.
pub fn run_hbt(
    herald: &TagStream,
    arm1: &TagStream,
    arm2: &TagStream,
    analysis: &HbtAnalysis,
) -> Result<HbtResult, CorrelationError> {
    let shift = ns_to_ticks_exact(analysis.herald_shift_ns).ok_or_else(|| {
        CorrelationError::Geometry(format!(
            "herald shift {} ns is not a whole number of ticks",
            analysis.herald_shift_ns
        ))
    })?;
    let herald = herald.shifted(shift);
    if herald.is_empty() {
        return Err(CorrelationError::NoHeralds);
    }
    let support = analysis.support_geometry()?;
    let target = analysis.target_geometry()?;
    let g_si1 = cross_histogram(&herald, arm1, support)?;
    let g_si2 = cross_histogram(&herald, arm2, support)?;
    let raw = conditional_histogram(&herald, arm1, arm2, analysis.tc_ns, target)?;
    let accidentals = accidental_estimate(&g_si1, &g_si2, analysis.tc_ns, &target)?;
    let g2 = normalize_g2(&raw, &accidentals)?;
    let arms = arm1.merged(arm2, arm1.channel());
    let eff = heralding_efficiency(&herald, &arms, analysis.tc_ns)?;
    Ok(HbtResult {
        analysis: *analysis,
        n_heralds: herald.len() as u64,
        g_si1,
        g_si2,
        raw,
        accidentals,
        g2,
        heralding_efficiency: eff,
    })
}

/// How a variance envelope is fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeFit {
    pub model: EnvelopeKind,
    pub t0: T0Mode,
    pub baseline: BaselineMode,
    /// Points closer than this to the trigger are left out, since the
    /// band limit rounds the edge.
    pub edge_skip_ns: f64,
}

impl EnvelopeFit {
    pub fn new(model: EnvelopeKind) -> Self {
        Self {
            model,
            t0: T0Mode::Fixed(0.0),
            baseline: BaselineMode::Free,
            edge_skip_ns: 3.0,
        }
    }

    fn edge(&self) -> f64 {
        match self.t0 {
            T0Mode::Fixed(t) => t,
            T0Mode::Free => 0.0,
        }
    }

    /// Fits the points of `(x, y, sigma)` outside the edge region.
    pub fn fit(&self, x: &[f64], y: &[f64], sigma: &[f64]) -> Result<ExpFitResult, FitError> {
        if x.len() != y.len() || x.len() != sigma.len() {
            return Err(FitError::LengthMismatch(x.len(), y.len(), sigma.len()));
        }
        let edge = self.edge();
        let keep: Vec<usize> = (0..x.len())
            .filter(|&i| (x[i] - edge).abs() >= self.edge_skip_ns)
            .collect();
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let opts = FitOptions::new(self.model, self.t0).with_baseline(self.baseline);
        fit_exp(&pick(x), &pick(y), &pick(sigma), &opts)
    }

    pub fn fit_envelope(&self, env: &VarianceEnvelope) -> Result<ExpFitResult, FitError> {
        self.fit(&env.time_ns, &env.values, &env.errors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneRun {
    pub envelope: VarianceEnvelope,
    pub fit: ExpFitResult,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Homodyne(#[from] HomodyneError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Streams `cfg.n_traces` signal and reference traces, forms the variance
/// envelope and fits it.
pub fn run_homodyne(cfg: &HomodyneConfig, seed: u64, fit: &EnvelopeFit) -> Result<HomodyneRun, RunError> {
    let signal = synth_moments(cfg, seed, false)?;
    let reference = synth_moments(cfg, seed, true)?;
    let envelope = variance_envelope_from_moments(&signal, &reference, cfg.sample_rate, cfg.trigger_index)?;
    let fit = fit.fit_envelope(&envelope)?;
    Ok(HomodyneRun { envelope, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfit::model_value;
    use crate::temporal_mode::Envelope;

    #[test]
    fn default_geometry() {
        let a = HbtAnalysis::default();
        let t = a.target_geometry().unwrap();
        assert_eq!(t.n_bins(), 31);
        assert_eq!(t.bin_of_ns(0.0), Some(15));
        assert_eq!(a.support_geometry().unwrap().n_bins(), 30);
    }

    #[test]
    fn fractional_shift_rejected() {
        let s = TagStream::new(0, vec![100, 200]).unwrap();
        let a = HbtAnalysis {
            herald_shift_ns: 0.01,
            ..HbtAnalysis::default()
        };
        assert!(matches!(run_hbt(&s, &s, &s, &a), Err(CorrelationError::Geometry(_))));
        let empty = TagStream::empty(0);
        assert_eq!(
            run_hbt(&empty, &s, &s, &HbtAnalysis::default()).unwrap_err(),
            CorrelationError::NoHeralds
        );
    }

    #[test]
    fn edge_points_skipped() {
        let truth = [0.05, 7.2, 1.0, 0.0];
        let x: Vec<f64> = (-20..=60).map(|v| v as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|&t| model_value(EnvelopeKind::Decay, &truth, t)).collect();
        // Corrupt the rounded edge; the fit must not see it.
        for (xi, yi) in x.iter().zip(y.iter_mut()) {
            if xi.abs() < 3.0 {
                *yi += 0.5;
            }
        }
        let r = EnvelopeFit::new(EnvelopeKind::Decay)
            .fit(&x, &y, &vec![1e-3; x.len()])
            .unwrap();
        assert!((r.tau() - 7.2).abs() < 1e-6);
    }

    #[test]
    fn small_homodyne_run() {
        let cfg = HomodyneConfig {
            sample_rate: 1e9,
            bandwidth: Some(210e6),
            trace_length: 129,
            trigger_index: 64,
            eta: 1.0,
            mode_match: 1.0,
            n_traces: 200_000,
            envelope: Envelope::decay(0.0, 7.2).unwrap(),
            electronic_noise: 0.0,
        };
        let run = run_homodyne(&cfg, 3, &EnvelopeFit::new(EnvelopeKind::Decay)).unwrap();
        assert!(run.fit.converged);
        let err = run.fit.errors()[1];
        assert!((run.fit.tau() - 7.2).abs() < 5.0 * err, "{} ± {err}", run.fit.tau());
    }
}
