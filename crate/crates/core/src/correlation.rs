//! Heralded coincidence estimators.
//!
//! * [`cross_histogram`] builds the two-channel time-difference histogram
//!   `G_si(Δt)` used to characterize signal–idler correlations.
//! * [`conditional_histogram`] counts HBT coincidences `G_i1i2|s(Δt12)`
//!   between two partner arms, given a herald.
//! * [`accidental_estimate`] predicts the number of accidental
//!   coincidences `N_i1i2|s(Δt12)` from the two `G_si` histograms.
//! * [`normalize_g2`] forms `g² = G / N` with Poisson error bars.
//!
//! # Conventions
//!
//! A partner pair `(t1, t2)` with `Δt12 = t2 − t1` contributes to the
//! conditional histogram of a herald at `ts` when the *earlier* of the two
//! tags lies in the half-open window `[ts, ts + Tc)`. Every herald is
//! processed independently, so one pair can be counted by several heralds
//! whose windows overlap.
//!
//! The accidental estimate sums products of the `G_si` bins over the window,
//!
//! ```text
//! N(Δ ≥ 0) = w · Σ_{x ∈ [0, Tc)} G_si1(x) · G_si2(x + Δ)
//! N(Δ < 0) = w · Σ_{x ∈ [0, Tc)} G_si1(x + |Δ|) · G_si2(x)
//! ```
//!
//! with `w = 1 / n_heralds`, which makes `N` the expected number of
//! accidental counts per bin when the two arms are independent given the
//! herald. `G_si` must cover `[0, 2 Tc)` for `|Δ| ≤ Tc`. Each output bin is
//! evaluated at the lag of its centre; non-integer lags interpolate
//! linearly between neighbouring integer lags.
//!
//! Bins are half-open `[lo, hi)`; a difference on an edge belongs to the
//! upper bin.

use rayon::prelude::*;

use crate::stream::{ns_to_ticks_exact, ticks_to_ns, TagStream, UnsortedStream, TICKS_PER_NS};

/// Heralds per work item. Fixed so merged results never depend on the
/// thread count.
const CHUNK: usize = 1 << 15;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CorrelationError {
    #[error(transparent)]
    Unsorted(#[from] UnsortedStream),
    #[error("invalid bin geometry: {0}")]
    Geometry(String),
    #[error("coincidence window must be a positive multiple of the bin width, got {0} ns")]
    Window(f64),
    #[error("histogram support too short: {0}")]
    Support(String),
    #[error("histograms are incompatible: {0}")]
    Mismatch(String),
    #[error("bin {bin} has {raw} raw counts but no expected accidentals")]
    UndefinedRatio { bin: usize, raw: u64 },
    #[error("no herald events")]
    NoHeralds,
}

/// Uniform bins over `[lo, hi)`, held in integer ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinGeometry {
    lo: i64,
    width: i64,
    n_bins: usize,
}

impl BinGeometry {
    /// `hi − lo` must be an exact multiple of `width`, and all three must be
    /// whole numbers of 125 ps ticks.
    pub fn from_ns(lo_ns: f64, hi_ns: f64, width_ns: f64) -> Result<Self, CorrelationError> {
        let g = |m: String| CorrelationError::Geometry(m);
        if !(width_ns.is_finite() && width_ns > 0.0) {
            return Err(g(format!("bin width {width_ns} ns must be positive")));
        }
        if !(lo_ns.is_finite() && hi_ns.is_finite() && hi_ns > lo_ns) {
            return Err(g(format!("empty range [{lo_ns}, {hi_ns})")));
        }
        let tick =
            |v: f64| ns_to_ticks_exact(v).ok_or_else(|| g(format!("{v} ns is not a whole number of 125 ps ticks")));
        let (lo, hi, width) = (tick(lo_ns)?, tick(hi_ns)?, tick(width_ns)?);
        if width == 0 {
            return Err(g("bin width rounds to zero ticks".into()));
        }
        if (hi - lo) % width != 0 {
            return Err(g(format!(
                "range [{lo_ns}, {hi_ns}) is not a multiple of the bin width {width_ns}"
            )));
        }
        Ok(Self {
            lo,
            width,
            n_bins: ((hi - lo) / width) as usize,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn lo_ticks(&self) -> i64 {
        self.lo
    }

    pub fn hi_ticks(&self) -> i64 {
        self.lo + self.width * self.n_bins as i64
    }

    pub fn width_ticks(&self) -> i64 {
        self.width
    }

    pub fn width_ns(&self) -> f64 {
        ticks_to_ns(self.width)
    }

    pub fn lo_ns(&self) -> f64 {
        ticks_to_ns(self.lo)
    }

    pub fn hi_ns(&self) -> f64 {
        ticks_to_ns(self.hi_ticks())
    }

    pub fn center_ns(&self, bin: usize) -> f64 {
        (self.lo as f64 + (bin as f64 + 0.5) * self.width as f64) / TICKS_PER_NS
    }

    pub fn centers_ns(&self) -> Vec<f64> {
        (0..self.n_bins).map(|b| self.center_ns(b)).collect()
    }

    #[inline]
    pub fn bin_of(&self, delta_ticks: i64) -> Option<usize> {
        if delta_ticks < self.lo {
            return None;
        }
        let b = ((delta_ticks - self.lo) / self.width) as usize;
        (b < self.n_bins).then_some(b)
    }

    /// Bin whose half-open interval contains `delta_ns`.
    pub fn bin_of_ns(&self, delta_ns: f64) -> Option<usize> {
        let t = (delta_ns * TICKS_PER_NS).floor();
        if !t.is_finite() {
            return None;
        }
        self.bin_of(t as i64)
    }
}

/// Binned coincidence counts versus time difference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationHistogram {
    pub geometry: BinGeometry,
    pub counts: Vec<u64>,
    /// Number of herald events the histogram was built from.
    pub n_triggers: Option<u64>,
}

impl CorrelationHistogram {
    pub fn zeros(geometry: BinGeometry) -> Self {
        Self {
            geometry,
            counts: vec![0; geometry.n_bins()],
            n_triggers: None,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers_ns(&self) -> Vec<f64> {
        self.geometry.centers_ns()
    }

    /// Poisson standard errors, `√count`.
    pub fn errors(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| (c as f64).sqrt()).collect()
    }
}

/// Sums per-chunk partial histograms in chunk order.
fn chunked<F>(n: usize, geometry: BinGeometry, f: F) -> Vec<u64>
where
    F: Fn(std::ops::Range<usize>, &mut [u64]) + Sync,
{
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let partials: Vec<Vec<u64>> = starts
        .par_iter()
        .map(|&s| {
            let mut h = vec![0u64; geometry.n_bins()];
            f(s..(s + CHUNK).min(n), &mut h);
            h
        })
        .collect();
    let mut total = vec![0u64; geometry.n_bins()];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

/// Histogram of `t_b − t_a` over all pairs falling inside `geometry`.
///
/// Sliding two-pointer scan: `O(N + M + coincidences)` per chunk.
pub fn cross_histogram(
    a: &TagStream,
    b: &TagStream,
    geometry: BinGeometry,
) -> Result<CorrelationHistogram, CorrelationError> {
    let (at, bt) = (a.ticks(), b.ticks());
    let (lo, hi) = (geometry.lo_ticks(), geometry.hi_ticks());
    let counts = chunked(at.len(), geometry, |range, h| {
        let first = at[range.start] as i64;
        let mut j = bt.partition_point(|&x| (x as i64) < first + lo);
        for &ta in &at[range] {
            let ta = ta as i64;
            while j < bt.len() && (bt[j] as i64) < ta + lo {
                j += 1;
            }
            let mut k = j;
            while k < bt.len() && (bt[k] as i64) < ta + hi {
                if let Some(bin) = geometry.bin_of(bt[k] as i64 - ta) {
                    h[bin] += 1;
                }
                k += 1;
            }
        }
    });
    Ok(CorrelationHistogram {
        geometry,
        counts,
        n_triggers: Some(at.len() as u64),
    })
}

/// Heralded HBT histogram of `Δt12 = t2 − t1` between arms `i1` and `i2`.
///
/// A pair counts for a herald at `ts` when its earlier tag lies in
/// `[ts, ts + Tc)`; the later tag may fall anywhere inside the bin range.
pub fn conditional_histogram(
    s: &TagStream,
    i1: &TagStream,
    i2: &TagStream,
    tc_ns: f64,
    geometry: BinGeometry,
) -> Result<CorrelationHistogram, CorrelationError> {
    let tc = match ns_to_ticks_exact(tc_ns) {
        Some(t) if t > 0 => t,
        _ => return Err(CorrelationError::Window(tc_ns)),
    };
    let (st, t1s, t2s) = (s.ticks(), i1.ticks(), i2.ticks());
    let (lo, hi) = (geometry.lo_ticks(), geometry.hi_ticks());
    // Δ ≥ 0 part: t1 is the earlier tag, t2 ∈ [t1 + pos_lo, t1 + hi).
    let pos_lo = lo.max(0);
    // Δ < 0 part: t2 is the earlier tag, t1 ∈ [t2 − neg_hi + 1, t2 − lo].
    let neg_hi = hi.min(0);

    let counts = chunked(st.len(), geometry, |range, h| {
        for &ts in &st[range] {
            let (w0, w1) = (ts, ts + tc as u64);
            if hi > pos_lo {
                let start = t1s.partition_point(|&x| x < w0);
                for &t1 in t1s[start..].iter().take_while(|&&x| x < w1) {
                    let from = (t1 as i64 + pos_lo) as u64;
                    let j = t2s.partition_point(|&x| x < from);
                    for &t2 in t2s[j..].iter().take_while(|&&x| (x as i64) < t1 as i64 + hi) {
                        if let Some(bin) = geometry.bin_of(t2 as i64 - t1 as i64) {
                            h[bin] += 1;
                        }
                    }
                }
            }
            if neg_hi > lo {
                let start = t2s.partition_point(|&x| x < w0);
                for &t2 in t2s[start..].iter().take_while(|&&x| x < w1) {
                    let from = (t2 as i64 - neg_hi + 1) as u64;
                    let j = t1s.partition_point(|&x| x < from);
                    for &t1 in t1s[j..].iter().take_while(|&&x| x as i64 <= t2 as i64 - lo) {
                        if let Some(bin) = geometry.bin_of(t2 as i64 - t1 as i64) {
                            h[bin] += 1;
                        }
                    }
                }
            }
        }
    });
    Ok(CorrelationHistogram {
        geometry,
        counts,
        n_triggers: Some(st.len() as u64),
    })
}

/// Expected accidental coincidences per output bin, with the variance
/// propagated from Poisson errors on the `G_si` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct AccidentalEstimate {
    pub geometry: BinGeometry,
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Validated pair of `G_si` histograms ready for lag sums.
struct LagSums<'a> {
    g1: &'a [u64],
    g2: &'a [u64],
    window_bins: usize,
    weight: f64,
}

impl LagSums<'_> {
    /// Sum and variance at an integer lag (in G bins).
    fn at(&self, lag: i64) -> (f64, f64) {
        let m = lag.unsigned_abs() as usize;
        let mut sum = 0.0;
        let mut var = 0.0;
        for j in 0..self.window_bins {
            let (a, b) = if lag >= 0 {
                (self.g1[j] as f64, self.g2[j + m] as f64)
            } else {
                (self.g1[j + m] as f64, self.g2[j] as f64)
            };
            sum += a * b;
            var += a * b * b + a * a * b;
        }
        (sum * self.weight, var * self.weight * self.weight)
    }
}

fn lag_sums<'a>(
    g1: &'a CorrelationHistogram,
    g2: &'a CorrelationHistogram,
    tc_ns: f64,
) -> Result<LagSums<'a>, CorrelationError> {
    let (a, b) = (g1.geometry, g2.geometry);
    if a != b {
        return Err(CorrelationError::Mismatch(format!(
            "G_si geometries differ ({a:?} vs {b:?})"
        )));
    }
    if a.lo_ticks() != 0 {
        return Err(CorrelationError::Support(format!(
            "G_si must start at 0 ns, starts at {} ns",
            a.lo_ns()
        )));
    }
    let tc = ns_to_ticks_exact(tc_ns).ok_or(CorrelationError::Window(tc_ns))?;
    if tc <= 0 || tc % a.width_ticks() != 0 {
        return Err(CorrelationError::Window(tc_ns));
    }
    let window_bins = (tc / a.width_ticks()) as usize;
    if window_bins > a.n_bins() {
        return Err(CorrelationError::Support(format!(
            "G_si covers {} ns, shorter than Tc = {tc_ns} ns",
            a.hi_ns()
        )));
    }
    let n = match (g1.n_triggers, g2.n_triggers) {
        (Some(x), Some(y)) if x == y && x > 0 => x,
        (Some(x), Some(y)) if x != y => {
            return Err(CorrelationError::Mismatch(format!("herald counts differ ({x} vs {y})")))
        }
        _ => return Err(CorrelationError::NoHeralds),
    };
    Ok(LagSums {
        g1: &g1.counts,
        g2: &g2.counts,
        window_bins,
        weight: 1.0 / n as f64,
    })
}

fn check_lag(sums: &LagSums<'_>, lag: i64, g: &CorrelationHistogram) -> Result<(), CorrelationError> {
    let need = sums.window_bins + lag.unsigned_abs() as usize;
    if need > sums.g1.len() {
        return Err(CorrelationError::Support(format!(
            "lag {} ns needs G_si up to {} ns, histogram ends at {} ns",
            lag as f64 * g.geometry.width_ns(),
            need as f64 * g.geometry.width_ns(),
            g.geometry.hi_ns()
        )));
    }
    Ok(())
}

/// `N⁺` at a non-negative integer lag of `lag` G bins.
pub fn n_plus(
    g_si1: &CorrelationHistogram,
    g_si2: &CorrelationHistogram,
    tc_ns: f64,
    lag: usize,
) -> Result<f64, CorrelationError> {
    let s = lag_sums(g_si1, g_si2, tc_ns)?;
    check_lag(&s, lag as i64, g_si1)?;
    Ok(s.at(lag as i64).0)
}

/// `N⁻` at lag `−lag` G bins.
pub fn n_minus(
    g_si1: &CorrelationHistogram,
    g_si2: &CorrelationHistogram,
    tc_ns: f64,
    lag: usize,
) -> Result<f64, CorrelationError> {
    let s = lag_sums(g_si1, g_si2, tc_ns)?;
    check_lag(&s, -(lag as i64), g_si1)?;
    if lag == 0 {
        // Same finite sum as N⁺(0), written out from the N⁻ side.
        let mut sum = 0.0;
        for j in 0..s.window_bins {
            sum += s.g1[j] as f64 * s.g2[j] as f64;
        }
        return Ok(sum * s.weight);
    }
    Ok(s.at(-(lag as i64)).0)
}

/// Accidental coincidences for every bin of `target`, computed from the
/// herald–arm histograms `g_si1`, `g_si2`.
pub fn accidental_estimate(
    g_si1: &CorrelationHistogram,
    g_si2: &CorrelationHistogram,
    tc_ns: f64,
    target: &BinGeometry,
) -> Result<AccidentalEstimate, CorrelationError> {
    let sums = lag_sums(g_si1, g_si2, tc_ns)?;
    let w = g_si1.geometry.width_ticks() as f64;
    let mut values = Vec::with_capacity(target.n_bins());
    let mut variances = Vec::with_capacity(target.n_bins());
    for b in 0..target.n_bins() {
        let center = target.lo_ticks() as f64 + (b as f64 + 0.5) * target.width_ticks() as f64;
        let lag = center / w;
        let m0 = lag.floor();
        let frac = lag - m0;
        let m0 = m0 as i64;
        check_lag(&sums, m0, g_si1)?;
        let (v0, var0) = sums.at(m0);
        if frac == 0.0 {
            values.push(v0);
            variances.push(var0);
        } else {
            check_lag(&sums, m0 + 1, g_si1)?;
            let (v1, var1) = sums.at(m0 + 1);
            values.push((1.0 - frac) * v0 + frac * v1);
            variances.push((1.0 - frac).powi(2) * var0 + frac * frac * var1);
        }
    }
    Ok(AccidentalEstimate {
        geometry: *target,
        values,
        variances,
    })
}

/// Normalized heralded correlation `g² = G / N` with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedG2 {
    pub centers_ns: Vec<f64>,
    pub values: Vec<f64>,
    /// `None` where both the raw and accidental counts are zero.
    pub errors: Vec<Option<f64>>,
}

impl NormalizedG2 {
    /// Value and error of the bin containing `delta_ns`.
    pub fn at_ns(&self, geometry: &BinGeometry, delta_ns: f64) -> Option<(f64, Option<f64>)> {
        geometry.bin_of_ns(delta_ns).map(|b| (self.values[b], self.errors[b]))
    }

    /// Index of the smallest value.
    pub fn argmin(&self) -> Option<usize> {
        (0..self.values.len()).min_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
    }
}

/// Relative-variance share above which the accidental estimate's own
/// uncertainty is folded into the error bar.
const N_VARIANCE_THRESHOLD: f64 = 0.1;

/// Bin-by-bin `raw / acc`. The error is `g/√G`, widened by the accidental
/// term when its relative variance exceeds 10 % of the raw one. Empty raw
/// bins get `g = 0` with error `1/N`.
pub fn normalize_g2(raw: &CorrelationHistogram, acc: &AccidentalEstimate) -> Result<NormalizedG2, CorrelationError> {
    if raw.geometry != acc.geometry || raw.counts.len() != acc.values.len() {
        return Err(CorrelationError::Mismatch(
            "raw histogram and accidental estimate use different bins".into(),
        ));
    }
    let mut values = Vec::with_capacity(raw.counts.len());
    let mut errors = Vec::with_capacity(raw.counts.len());
    for (b, (&g, (&n, &var_n))) in raw.counts.iter().zip(acc.values.iter().zip(&acc.variances)).enumerate() {
        if n <= 0.0 {
            if g > 0 {
                return Err(CorrelationError::UndefinedRatio { bin: b, raw: g });
            }
            values.push(0.0);
            errors.push(None);
            continue;
        }
        if g == 0 {
            values.push(0.0);
            errors.push(Some(1.0 / n));
            continue;
        }
        let gf = g as f64;
        let value = gf / n;
        let rel_g = 1.0 / gf;
        let rel_n = var_n / (n * n);
        let rel = if rel_n > N_VARIANCE_THRESHOLD * rel_g {
            rel_g + rel_n
        } else {
            rel_g
        };
        values.push(value);
        errors.push(Some(value * rel.sqrt()));
    }
    Ok(NormalizedG2 {
        centers_ns: raw.centers_ns(),
        values,
        errors,
    })
}

/// Fraction of heralds followed by a partner tag within `Tc`, corrected
/// for accidentals at the partner's mean rate and clamped to `[0, 1]`.
pub fn heralding_efficiency(s: &TagStream, i: &TagStream, tc_ns: f64) -> Result<f64, CorrelationError> {
    if s.is_empty() {
        return Err(CorrelationError::NoHeralds);
    }
    if !(tc_ns.is_finite() && tc_ns > 0.0) {
        return Err(CorrelationError::Window(tc_ns));
    }
    let tc = (tc_ns * TICKS_PER_NS).round() as u64;
    let (st, it) = (s.ticks(), i.ticks());
    let mut j = 0;
    let mut hits = 0u64;
    for &ts in st {
        while j < it.len() && it[j] < ts {
            j += 1;
        }
        if j < it.len() && it[j] < ts + tc {
            hits += 1;
        }
    }
    let n = st.len() as f64;
    let accidentals = if it.is_empty() {
        0.0
    } else {
        let first = st[0].min(it[0]);
        let last = st[st.len() - 1].max(it[it.len() - 1]);
        let span_ns = (last - first) as f64 / TICKS_PER_NS;
        if span_ns > 0.0 {
            it.len() as f64 / span_ns * tc as f64 / TICKS_PER_NS * n
        } else {
            0.0
        }
    };
    Ok(((hits as f64 - accidentals) / n).clamp(0.0, 1.0))
}
