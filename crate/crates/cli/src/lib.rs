//! Subcommands of the `herald` tool.
//!
//! Every command writes its outputs plus a `manifest.txt` into the output
//! directory. Work runs on the current rayon pool, so the binary decides
//! the thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use herald_core::expfit::{BaselineMode, ExpFitResult, T0Mode};
use herald_core::homodyne::{synth_reference, synth_traces, variance_envelope};
use herald_core::tagio::{
    fit_csv, fit_report, format_series, g2_series, histogram_series, parse_series, read_tags, variance_series,
    write_tags, write_traces, CsvError, Series, TagIoError, TraceIoError,
};
use herald_core::{
    run_hbt, run_homodyne, simulate_hbt, CorrelationError, EnvelopeFit, EnvelopeKind, HbtResult, HomodyneRun,
    RunConfig, RunError, SimError,
};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TagIoError> for CliError {
    fn from(e: TagIoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TraceIoError> for CliError {
    fn from(e: TraceIoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::Io(e) => CliError::Io(e.to_string()),
            CsvError::Malformed { .. } => CliError::Config(e.to_string()),
            CsvError::NonFinite { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Capacity { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<CorrelationError> for CliError {
    fn from(e: CorrelationError) -> Self {
        match e {
            CorrelationError::Geometry(_) | CorrelationError::Window(_) | CorrelationError::Support(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// Everything needed to repeat a run, written as flat `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<PathBuf>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub input_hash: Option<String>,
    /// Command-line settings that override the configuration.
    pub options: Vec<(String, String)>,
    pub out: PathBuf,
    pub tool_version: String,
}

impl RunManifest {
    fn new(subcommand: &str, out: &Path) -> Self {
        Self {
            subcommand: subcommand.into(),
            config: None,
            config_hash: None,
            seed: None,
            input: None,
            input_hash: None,
            options: Vec::new(),
            out: out.to_path_buf(),
            tool_version: TOOL_VERSION.into(),
        }
    }

    pub fn render(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let text = |s: &Option<String>| s.clone().unwrap_or_default();
        let mut s = String::new();
        let _ = writeln!(s, "subcommand = {}", self.subcommand);
        let _ = writeln!(s, "config = {}", path(&self.config));
        let _ = writeln!(s, "config_hash = {}", text(&self.config_hash));
        let _ = writeln!(s, "seed = {}", self.seed.map_or(String::new(), |v| v.to_string()));
        let _ = writeln!(s, "input = {}", path(&self.input));
        let _ = writeln!(s, "input_hash = {}", text(&self.input_hash));
        for (k, v) in &self.options {
            let _ = writeln!(s, "option.{k} = {v}");
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "tool_version = {}", self.tool_version);
        s
    }

    fn write(&self) -> Result<(), CliError> {
        fs::write(self.out.join("manifest.txt"), self.render())?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> Result<String, CliError> {
    use std::io::Read;
    let mut f = fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Reads and parses a configuration file; returns it with its hash.
pub fn load_config(path: &Path) -> Result<(RunConfig, String), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text =
        std::str::from_utf8(&bytes).map_err(|_| CliError::Config(format!("{}: not valid UTF-8", path.display())))?;
    let cfg = herald_core::parse_config(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, sha256_hex(&bytes)))
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

fn write_series(path: PathBuf, s: &Series) -> Result<(), CliError> {
    fs::write(path, format_series(s)?)?;
    Ok(())
}

/// Simulates the HBT experiment and writes `tags.bin` (channel 0 herald,
/// 1 and 2 the arms) with a rate summary.
pub fn cmd_simulate(config: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let (cfg, hash) = load_config(config)?;
    prepare_out(out)?;
    let streams = simulate_hbt(&cfg.source, &cfg.hbt, seed)?;
    let dur = cfg.source.duration_s;
    let mut summary = String::new();
    let _ = writeln!(summary, "duration_s = {dur}");
    for (name, s) in [
        ("herald", &streams.herald),
        ("arm1", &streams.arm1),
        ("arm2", &streams.arm2),
    ] {
        let _ = writeln!(summary, "{name}_tags = {}", s.len());
        let _ = writeln!(summary, "{name}_rate = {}", s.len() as f64 / dur);
    }
    write_tags(&out.join("tags.bin"), &streams.into_vec())?;
    fs::write(out.join("rates.txt"), summary)?;
    RunManifest {
        config: Some(config.to_path_buf()),
        config_hash: Some(hash),
        seed: Some(seed),
        ..RunManifest::new("simulate", out)
    }
    .write()
}

/// Command-line settings of `hbt`; unset fields come from the config file
/// (or the defaults when there is none).
#[derive(Debug, Clone, Default)]
pub struct HbtArgs {
    pub tags: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub bins: Option<f64>,
    pub window_ns: Option<f64>,
    pub range_ns: Option<f64>,
    pub herald_shift_ns: Option<f64>,
}

/// Correlates a three-channel tag file and writes `g2.csv`, the raw and
/// herald–arm histograms and `summary.txt`.
pub fn cmd_hbt(args: &HbtArgs) -> Result<HbtResult, CliError> {
    let mut manifest = RunManifest::new("hbt", &args.out);
    let mut analysis = match &args.config {
        Some(p) => {
            let (cfg, hash) = load_config(p)?;
            manifest.config = Some(p.clone());
            manifest.config_hash = Some(hash);
            cfg.analysis
        }
        None => herald_core::HbtAnalysis::default(),
    };
    for (key, val, slot) in [
        ("bins", args.bins, &mut analysis.bin_ns),
        ("window_ns", args.window_ns, &mut analysis.tc_ns),
        ("herald_shift_ns", args.herald_shift_ns, &mut analysis.herald_shift_ns),
    ] {
        if let Some(v) = val {
            *slot = v;
            manifest.options.push((key.into(), v.to_string()));
        }
    }
    if let Some(r) = args.range_ns {
        analysis.range_ns = Some(r);
        manifest.options.push(("range_ns".into(), r.to_string()));
    }

    let streams = read_tags(&args.tags)?;
    if streams.len() < 3 {
        return Err(CliError::Io(format!(
            "{}: need channels 0 (herald), 1 and 2, file declares {}",
            args.tags.display(),
            streams.len()
        )));
    }
    manifest.input = Some(args.tags.clone());
    manifest.input_hash = Some(hash_file(&args.tags)?);
    let result = run_hbt(&streams[0], &streams[1], &streams[2], &analysis)?;

    prepare_out(&args.out)?;
    write_series(args.out.join("g2.csv"), &g2_series(&result.g2))?;
    write_series(args.out.join("raw.csv"), &histogram_series(&result.raw))?;
    write_series(args.out.join("g_si1.csv"), &histogram_series(&result.g_si1))?;
    write_series(args.out.join("g_si2.csv"), &histogram_series(&result.g_si2))?;
    fs::write(args.out.join("summary.txt"), result.summary())?;
    manifest.write()?;
    Ok(result)
}

/// Synthesizes signal and shot-noise traces, writes `variance.csv`,
/// `fit.csv` and `fit.txt`. With `store_traces` the traces are also saved
/// as `traces.bin` and `reference.bin`.
pub fn cmd_homodyne(config: &Path, seed: u64, out: &Path, store_traces: bool) -> Result<HomodyneRun, CliError> {
    let (cfg, hash) = load_config(config)?;
    prepare_out(out)?;
    let run = if store_traces {
        let t = synth_traces(&cfg.homodyne, seed).map_err(RunError::from)?;
        let r = synth_reference(&cfg.homodyne, seed).map_err(RunError::from)?;
        write_traces(&out.join("traces.bin"), &t)?;
        write_traces(&out.join("reference.bin"), &r)?;
        let envelope = variance_envelope(&t, &r).map_err(RunError::from)?;
        let fit = cfg.fit.fit_envelope(&envelope).map_err(RunError::from)?;
        HomodyneRun { envelope, fit }
    } else {
        run_homodyne(&cfg.homodyne, seed, &cfg.fit)?
    };
    write_series(out.join("variance.csv"), &variance_series(&run.envelope))?;
    write_fit(out, &run.fit)?;
    let mut manifest = RunManifest {
        config: Some(config.to_path_buf()),
        config_hash: Some(hash),
        seed: Some(seed),
        ..RunManifest::new("homodyne", out)
    };
    if store_traces {
        manifest.options.push(("store_traces".into(), "true".into()));
    }
    manifest.write()?;
    Ok(run)
}

fn write_fit(out: &Path, fit: &ExpFitResult) -> Result<(), CliError> {
    fs::write(out.join("fit.csv"), fit_csv(fit)?)?;
    fs::write(out.join("fit.txt"), fit_report(fit))?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct FitArgs {
    pub input: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub model: Option<EnvelopeKind>,
    /// `Some(None)` frees the edge; `Some(Some(t))` fixes it at `t`.
    pub t0: Option<Option<f64>>,
    /// `Some(None)` frees the baseline; `Some(Some(b))` fixes it.
    pub baseline: Option<Option<f64>>,
    pub edge_skip_ns: Option<f64>,
}

/// Fits an exported three-column series (every row needs an error).
pub fn cmd_fit(args: &FitArgs) -> Result<ExpFitResult, CliError> {
    let mut manifest = RunManifest::new("fit", &args.out);
    let mut fit = match &args.config {
        Some(p) => {
            let (cfg, hash) = load_config(p)?;
            manifest.config = Some(p.clone());
            manifest.config_hash = Some(hash);
            cfg.fit
        }
        None => EnvelopeFit::new(EnvelopeKind::Decay),
    };
    if let Some(m) = args.model {
        fit.model = m;
        manifest.options.push(("model".into(), m.to_string()));
    }
    if let Some(t) = args.t0 {
        fit.t0 = t.map_or(T0Mode::Free, T0Mode::Fixed);
        manifest
            .options
            .push(("t0".into(), t.map_or("free".into(), |v| v.to_string())));
    }
    if let Some(b) = args.baseline {
        fit.baseline = b.map_or(BaselineMode::Free, BaselineMode::Fixed);
        manifest
            .options
            .push(("baseline".into(), b.map_or("free".into(), |v| v.to_string())));
    }
    if let Some(s) = args.edge_skip_ns {
        fit.edge_skip_ns = s;
        manifest.options.push(("edge_skip_ns".into(), s.to_string()));
    }

    let text = fs::read_to_string(&args.input).map_err(|e| CliError::Io(format!("{}: {e}", args.input.display())))?;
    let series = parse_series(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.input.display())))?;
    let sigma: Vec<f64> = series
        .err
        .iter()
        .enumerate()
        .map(|(i, e)| {
            e.ok_or_else(|| CliError::Config(format!("{}: line {}: missing error", args.input.display(), i + 2)))
        })
        .collect::<Result<_, _>>()?;
    let result = fit
        .fit(&series.x, &series.y, &sigma)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    manifest.input = Some(args.input.clone());
    manifest.input_hash = Some(sha256_hex(text.as_bytes()));
    prepare_out(&args.out)?;
    write_fit(&args.out, &result)?;
    manifest.write()?;
    Ok(result)
}
