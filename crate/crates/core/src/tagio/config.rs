//! Flat `key = value` run configuration.
//!
//! `#` starts a comment. `tau_ns` is required; every other key has a
//! default, and a file that sets only `tau_ns = 7.2` describes the heralded
//! HBT and homodyne experiments with the signal photon as herald.
//!
//! Detector keys (`efficiency`, `dark_rate`, `jitter_ps`, `dead_time_ns`)
//! given bare apply to all three detectors; prefixed with `herald.`,
//! `arm1.` or `arm2.` they set one detector and take precedence.

use std::collections::HashMap;
use std::fmt;

use crate::experiment::{EnvelopeFit, HbtAnalysis};
use crate::expfit::{BaselineMode, T0Mode};
use crate::homodyne::HomodyneConfig;
use crate::pair_source::{DetectorConfig, HbtSetup, HeraldRole, SourceConfig, DEFAULT_JITTER_PS};
use crate::temporal_mode::{Envelope, EnvelopeKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub source: SourceConfig,
    pub hbt: HbtSetup,
    pub analysis: HbtAnalysis,
    pub homodyne: HomodyneConfig,
    pub fit: EnvelopeFit,
}

impl RunConfig {
    /// Values of the heralded experiment; only the lifetime is free.
    pub fn defaults(tau_ns: f64) -> Self {
        let det = |efficiency, dark_rate| DetectorConfig {
            efficiency,
            dark_rate,
            jitter_sigma_ps: DEFAULT_JITTER_PS,
            dead_time_ns: 0.0,
        };
        let envelope = Envelope::decay(0.0, tau_ns).unwrap_or_else(|_| Envelope::decay(0.0, 1.0).unwrap());
        Self {
            source: SourceConfig {
                pair_rate: 5e5,
                tau_ns,
                duration_s: 300.0,
                background_rate_signal: 0.0,
                background_rate_idler: 4e5,
            },
            hbt: HbtSetup {
                herald: HeraldRole::Signal,
                herald_detector: det(0.0997, 150.0),
                arm1_detector: det(0.13, 40.0),
                arm2_detector: det(0.13, 90.0),
                split_ratio: 0.5,
            },
            analysis: HbtAnalysis::default(),
            homodyne: HomodyneConfig {
                sample_rate: 1e9,
                bandwidth: Some(210e6),
                trace_length: 129,
                trigger_index: 64,
                eta: 0.13,
                mode_match: 0.95,
                n_traces: 270_000,
                envelope,
                electronic_noise: 0.0,
            },
            fit: EnvelopeFit::new(EnvelopeKind::Decay),
        }
    }
}

const DETECTOR_KEYS: [&str; 4] = ["efficiency", "dark_rate", "jitter_ps", "dead_time_ns"];
const DETECTORS: [&str; 3] = ["herald", "arm1", "arm2"];
const KEYS: [&str; 24] = [
    "pair_rate",
    "tau_ns",
    "duration_s",
    "background_rate_signal",
    "background_rate_idler",
    "herald",
    "split_ratio",
    "tc_ns",
    "bin_ns",
    "range_ns",
    "herald_shift_ns",
    "sample_rate",
    "bandwidth",
    "trace_length",
    "trigger_index",
    "eta",
    "mode_match",
    "n_traces",
    "envelope",
    "t0_ns",
    "electronic_noise",
    "fit_t0",
    "fit_baseline",
    "fit_edge_skip_ns",
];

fn known(key: &str) -> bool {
    if KEYS.contains(&key) || DETECTOR_KEYS.contains(&key) {
        return true;
    }
    match key.split_once('.') {
        Some((d, k)) => DETECTORS.contains(&d) && DETECTOR_KEYS.contains(&k),
        None => false,
    }
}

struct Entries<'a> {
    map: HashMap<&'a str, (&'a str, usize)>,
}

impl<'a> Entries<'a> {
    fn err(line: usize, message: String) -> ConfigError {
        ConfigError {
            line: Some(line),
            message,
        }
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|e| e.1)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<(T, usize)>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(&(v, line)) => v
                .parse::<T>()
                .map(|x| Some((x, line)))
                .map_err(|_| Self::err(line, format!("{key} = {v} is not {what}"))),
        }
    }

    /// A finite number satisfying `ok`, described by `range` in errors.
    fn num(&self, key: &str, default: f64, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64, ConfigError> {
        match self.parse::<f64>(key, "a number")? {
            None => Ok(default),
            Some((v, _)) if v.is_finite() && ok(v) => Ok(v),
            Some((v, line)) => Err(Self::err(line, format!("{key} = {v} is out of range {range}"))),
        }
    }

    fn count(&self, key: &str, default: usize, min: usize) -> Result<usize, ConfigError> {
        match self.parse::<usize>(key, "a non-negative integer")? {
            None => Ok(default),
            Some((v, _)) if v >= min && u32::try_from(v).is_ok() => Ok(v),
            Some((v, line)) => Err(Self::err(line, format!("{key} = {v} is out of range [{min}, 2^32)"))),
        }
    }

    fn detector(&self, name: &str, base: DetectorConfig) -> Result<DetectorConfig, ConfigError> {
        let pick = |k: &str| {
            let full = format!("{name}.{k}");
            if self.map.contains_key(full.as_str()) {
                full
            } else {
                k.to_string()
            }
        };
        let nonneg = |v: f64| v >= 0.0;
        Ok(DetectorConfig {
            efficiency: self.num(
                &pick("efficiency"),
                base.efficiency,
                |v| (0.0..=1.0).contains(&v),
                "[0, 1]",
            )?,
            dark_rate: self.num(&pick("dark_rate"), base.dark_rate, nonneg, "[0, inf)")?,
            jitter_sigma_ps: self.num(&pick("jitter_ps"), base.jitter_sigma_ps, nonneg, "[0, inf)")?,
            dead_time_ns: self.num(&pick("dead_time_ns"), base.dead_time_ns, nonneg, "[0, inf)")?,
        })
    }
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Entries::err(line, format!("expected `key = value`, got `{body}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Entries::err(line, format!("expected `key = value`, got `{body}`")));
        }
        if !known(k) {
            return Err(Entries::err(line, format!("unknown key `{k}`")));
        }
        if let Some((_, first)) = map.insert(k, (v, line)) {
            return Err(Entries::err(
                line,
                format!("duplicate key `{k}` (first set on line {first})"),
            ));
        }
    }
    let e = Entries { map };

    let positive = |v: f64| v > 0.0;
    let nonneg = |v: f64| v >= 0.0;
    let unit = |v: f64| (0.0..=1.0).contains(&v);

    let tau_ns = match e.parse::<f64>("tau_ns", "a number")? {
        None => {
            return Err(ConfigError {
                line: None,
                message: "missing required key `tau_ns`".into(),
            })
        }
        Some((v, line)) if !(v.is_finite() && v > 0.0) => {
            return Err(Entries::err(line, format!("tau_ns = {v} is out of range (0, inf)")))
        }
        Some((v, _)) => v,
    };
    let d = RunConfig::defaults(tau_ns);

    let source = SourceConfig {
        pair_rate: e.num("pair_rate", d.source.pair_rate, nonneg, "[0, inf)")?,
        tau_ns,
        duration_s: e.num("duration_s", d.source.duration_s, positive, "(0, inf)")?,
        background_rate_signal: e.num(
            "background_rate_signal",
            d.source.background_rate_signal,
            nonneg,
            "[0, inf)",
        )?,
        background_rate_idler: e.num(
            "background_rate_idler",
            d.source.background_rate_idler,
            nonneg,
            "[0, inf)",
        )?,
    };

    let herald = match e.map.get("herald") {
        None => d.hbt.herald,
        Some(&(v, line)) => v.parse::<HeraldRole>().map_err(|m| Entries::err(line, m))?,
    };
    let hbt = HbtSetup {
        herald,
        herald_detector: e.detector("herald", d.hbt.herald_detector)?,
        arm1_detector: e.detector("arm1", d.hbt.arm1_detector)?,
        arm2_detector: e.detector("arm2", d.hbt.arm2_detector)?,
        split_ratio: e.num("split_ratio", d.hbt.split_ratio, unit, "[0, 1]")?,
    };

    let analysis = HbtAnalysis {
        tc_ns: e.num("tc_ns", d.analysis.tc_ns, positive, "(0, inf)")?,
        bin_ns: e.num("bin_ns", d.analysis.bin_ns, positive, "(0, inf)")?,
        range_ns: match e.parse::<f64>("range_ns", "a number")? {
            None => None,
            Some((v, _)) if v.is_finite() && v > 0.0 => Some(v),
            Some((v, line)) => return Err(Entries::err(line, format!("range_ns = {v} is out of range (0, inf)"))),
        },
        herald_shift_ns: e.num("herald_shift_ns", 0.0, |_| true, "(-inf, inf)")?,
    };
    let geometry_line = e.line("bin_ns").or(e.line("tc_ns")).or(e.line("range_ns"));
    for g in [analysis.target_geometry(), analysis.support_geometry()] {
        g.map_err(|err| ConfigError {
            line: geometry_line,
            message: err.to_string(),
        })?;
    }
    if (analysis.tc_ns / analysis.bin_ns).fract() != 0.0 {
        return Err(ConfigError {
            line: geometry_line,
            message: format!(
                "tc_ns = {} is not a multiple of bin_ns = {}",
                analysis.tc_ns, analysis.bin_ns
            ),
        });
    }

    let bandwidth = match e.map.get("bandwidth") {
        None => d.homodyne.bandwidth,
        Some(&("none", _)) => None,
        Some(_) => Some(e.num("bandwidth", 0.0, positive, "(0, inf) or `none`")?),
    };
    let kind = match e.map.get("envelope") {
        None => EnvelopeKind::Decay,
        Some(&(v, line)) => v.parse::<EnvelopeKind>().map_err(|m| Entries::err(line, m))?,
    };
    let t0 = e.num("t0_ns", 0.0, |_| true, "(-inf, inf)")?;
    let homodyne = HomodyneConfig {
        sample_rate: e.num("sample_rate", d.homodyne.sample_rate, positive, "(0, inf)")?,
        bandwidth,
        trace_length: e.count("trace_length", d.homodyne.trace_length, 1)?,
        trigger_index: e.count("trigger_index", d.homodyne.trigger_index, 0)?,
        eta: e.num("eta", d.homodyne.eta, unit, "[0, 1]")?,
        mode_match: e.num("mode_match", d.homodyne.mode_match, unit, "[0, 1]")?,
        n_traces: e.count("n_traces", d.homodyne.n_traces, 0)?,
        envelope: Envelope::new(kind, t0, tau_ns).expect("tau checked"),
        electronic_noise: e.num("electronic_noise", 0.0, nonneg, "[0, inf)")?,
    };
    homodyne.validate().map_err(|err| ConfigError {
        line: e
            .line("trigger_index")
            .or(e.line("bandwidth"))
            .or(e.line("sample_rate")),
        message: err.to_string(),
    })?;

    let fit_t0 = match e.map.get("fit_t0") {
        None | Some(&("fixed", _)) => T0Mode::Fixed(t0),
        Some(&("free", _)) => T0Mode::Free,
        Some(&(v, line)) => return Err(Entries::err(line, format!("fit_t0 = {v} must be `fixed` or `free`"))),
    };
    let fit_baseline = match e.map.get("fit_baseline") {
        None | Some(&("free", _)) => BaselineMode::Free,
        Some(_) => BaselineMode::Fixed(e.num("fit_baseline", 1.0, |_| true, "`free` or a number")?),
    };
    let fit = EnvelopeFit {
        model: kind,
        t0: fit_t0,
        baseline: fit_baseline,
        edge_skip_ns: e.num("fit_edge_skip_ns", d.fit.edge_skip_ns, nonneg, "[0, inf)")?,
    };

    Ok(RunConfig {
        source,
        hbt,
        analysis,
        homodyne,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_line(text: &str) -> Option<usize> {
        parse_config(text).unwrap_err().line
    }

    #[test]
    fn minimal_file_gives_defaults() {
        let c = parse_config("tau_ns = 7.2\n").unwrap();
        assert_eq!(c, RunConfig::defaults(7.2));
        assert_eq!(c.analysis.tc_ns, 30.0);
        assert_eq!(c.analysis.bin_ns, 2.0);
    }

    #[test]
    fn values_parse() {
        let c = parse_config("tau_ns = 7.2\npair_rate = 1e5 # comment\n# whole line\n\nherald = idler\n").unwrap();
        assert_eq!(c.source.pair_rate, 100000.0);
        assert_eq!(c.hbt.herald, HeraldRole::Idler);
    }

    #[test]
    fn detector_defaults_and_overrides() {
        let c = parse_config("tau_ns = 7.2\nefficiency = 0.4\narm2.efficiency = 0.2\ndark_rate = 5\n").unwrap();
        assert_eq!(c.hbt.herald_detector.efficiency, 0.4);
        assert_eq!(c.hbt.arm1_detector.efficiency, 0.4);
        assert_eq!(c.hbt.arm2_detector.efficiency, 0.2);
        assert_eq!(c.hbt.arm2_detector.dark_rate, 5.0);
    }

    #[test]
    fn range_errors_name_the_line() {
        let e = parse_config("tau_ns = 7.2\n\nefficiency = 1.3\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().starts_with("line 3: efficiency = 1.3"));
        assert_eq!(err_line("tau_ns = 7.2\narm1.dark_rate = -1\n"), Some(2));
        assert_eq!(err_line("tau_ns = -7.2\n"), Some(1));
        assert_eq!(err_line("tau_ns = 7.2\neta = 2\n"), Some(2));
        assert_eq!(err_line("tau_ns = 7.2\nbin_ns = 0.1\n"), Some(2));
        assert_eq!(err_line("tau_ns = 7.2\ntrigger_index = 500\n"), Some(2));
        assert_eq!(err_line("tau_ns = 7.2\nbandwidth = 6e8\n"), Some(2));
        assert_eq!(err_line("tau_ns = 7.2\nn_traces = many\n"), Some(2));
    }

    #[test]
    fn structural_errors() {
        assert_eq!(err_line("tau_ns = 7.2\nfoo = 1\n"), Some(2));
        assert_eq!(err_line("tau_ns = 7.2\narm3.efficiency = 0.1\n"), Some(2));
        assert_eq!(err_line("tau_ns = 7.2\ntau_ns = 7.4\n"), Some(2));
        assert_eq!(err_line("tau_ns 7.2\n"), Some(1));
        assert_eq!(err_line("tau_ns = 7.2\nherald = both\n"), Some(2));
        let e = parse_config("pair_rate = 1\n").unwrap_err();
        assert_eq!(e.line, None);
        assert!(e.message.contains("tau_ns"));
    }

    #[test]
    fn homodyne_keys() {
        let c = parse_config(
            "tau_ns = 7.4\nenvelope = rise\nbandwidth = none\nfit_t0 = free\nfit_baseline = 1\neta = 0.19\n",
        )
        .unwrap();
        assert_eq!(c.homodyne.envelope.kind(), EnvelopeKind::Rise);
        assert_eq!(c.homodyne.envelope.tau(), 7.4);
        assert_eq!(c.homodyne.bandwidth, None);
        assert_eq!(c.fit.model, EnvelopeKind::Rise);
        assert_eq!(c.fit.t0, T0Mode::Free);
        assert_eq!(c.fit.baseline, BaselineMode::Fixed(1.0));
    }
}
