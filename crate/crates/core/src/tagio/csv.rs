//! Three-column CSV series and fit reports.
//!
//! Numbers use Rust's shortest round-trip formatting, so reading a file
//! back yields the exact values written. An undefined error is an empty
//! field.

use std::path::Path;

use crate::correlation::{CorrelationHistogram, NormalizedG2};
use crate::expfit::ExpFitResult;
use crate::homodyne::VarianceEnvelope;

pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_center_ns", "value", "error"];
pub const VARIANCE_HEADER: [&str; 3] = ["time_ns", "variance", "error"];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: non-finite value")]
    NonFinite { row: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub header: [String; 3],
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub err: Vec<Option<f64>>,
}

impl Series {
    pub fn new(header: [&str; 3]) -> Self {
        Self {
            header: header.map(String::from),
            x: Vec::new(),
            y: Vec::new(),
            err: Vec::new(),
        }
    }

    pub fn push(&mut self, x: f64, y: f64, err: Option<f64>) {
        self.x.push(x);
        self.y.push(y);
        self.err.push(err);
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn histogram_series(h: &CorrelationHistogram) -> Series {
    let mut s = Series::new(HISTOGRAM_HEADER);
    for ((x, &c), e) in h.centers_ns().into_iter().zip(&h.counts).zip(h.errors()) {
        s.push(x, c as f64, Some(e));
    }
    s
}

pub fn g2_series(g: &NormalizedG2) -> Series {
    let mut s = Series::new(HISTOGRAM_HEADER);
    for i in 0..g.values.len() {
        s.push(g.centers_ns[i], g.values[i], g.errors[i]);
    }
    s
}

pub fn variance_series(v: &VarianceEnvelope) -> Series {
    let mut s = Series::new(VARIANCE_HEADER);
    for i in 0..v.len() {
        s.push(v.time_ns[i], v.values[i], Some(v.errors[i]));
    }
    s
}

pub fn format_series(s: &Series) -> Result<String, CsvError> {
    let mut out = s.header.join(",");
    out.push('\n');
    for i in 0..s.len() {
        let finite = s.x[i].is_finite() && s.y[i].is_finite() && s.err[i].is_none_or(f64::is_finite);
        if !finite {
            return Err(CsvError::NonFinite { row: i });
        }
        let e = s.err[i].map_or(String::new(), |e| e.to_string());
        out.push_str(&format!("{},{},{}\n", s.x[i], s.y[i], e));
    }
    Ok(out)
}

/// Parses a three-column series; the header must be three non-numeric
/// names.
pub fn parse_series(text: &str) -> Result<Series, CsvError> {
    let bad = |line: usize, message: String| CsvError::Malformed { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, head) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let names: Vec<&str> = head.split(',').map(str::trim).collect();
    if names.len() != 3 || names.iter().any(|n| n.is_empty() || n.parse::<f64>().is_ok()) {
        return Err(bad(1, format!("expected a three-column header, got `{head}`")));
    }
    let mut s = Series::new([names[0], names[1], names[2]]);
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(bad(n, format!("expected 3 fields, got {}", f.len())));
        }
        let num = |v: &str| -> Result<f64, CsvError> {
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(bad(n, format!("`{v}` is not a finite number"))),
            }
        };
        let e = if f[2].is_empty() { None } else { Some(num(f[2])?) };
        s.push(num(f[0])?, num(f[1])?, e);
    }
    Ok(s)
}

/// Fit parameters as `parameter,value,error` rows.
pub fn fit_csv(r: &ExpFitResult) -> Result<String, CsvError> {
    let e = r.errors();
    let names = ["amplitude", "tau_ns", "baseline", "t0_ns"];
    let mut out = String::from("parameter,value,error\n");
    for (i, n) in names.iter().enumerate() {
        if !(r.params[i].is_finite() && e[i].is_finite()) {
            return Err(CsvError::NonFinite { row: i });
        }
        let err = if r.free[i] { e[i].to_string() } else { String::new() };
        out.push_str(&format!("{n},{},{err}\n", r.params[i]));
    }
    out.push_str(&format!("chi2,{},\n", r.chi2));
    out.push_str(&format!("dof,{},\n", r.dof));
    out.push_str(&format!("reduced_chi2,{},\n", r.reduced_chi2()));
    out.push_str(&format!("converged,{},\n", u8::from(r.converged)));
    out.push_str(&format!("iterations,{},\n", r.iterations));
    out.push_str(&format!("tau_identifiable,{},\n", u8::from(r.tau_identifiable)));
    Ok(out)
}

/// Human-readable summary of a fit.
pub fn fit_report(r: &ExpFitResult) -> String {
    let e = r.errors();
    let row = |name: &str, i: usize, unit: &str| {
        if r.free[i] {
            format!("{name:<10} = {:.6} ± {:.6}{unit}\n", r.params[i], e[i])
        } else {
            format!("{name:<10} = {:.6} (fixed){unit}\n", r.params[i])
        }
    };
    let mut s = format!("model      = {}\n", r.model);
    s.push_str(&row("amplitude", 0, ""));
    s.push_str(&row("tau", 1, " ns"));
    s.push_str(&row("baseline", 2, ""));
    s.push_str(&row("t0", 3, " ns"));
    s.push_str(&format!(
        "chi2/dof   = {:.4} / {} = {:.4}\n",
        r.chi2,
        r.dof,
        r.reduced_chi2()
    ));
    s.push_str(&format!(
        "converged  = {} after {} iterations\n",
        r.converged, r.iterations
    ));
    if !r.tau_identifiable {
        s.push_str("tau is not identifiable from these data\n");
    }
    if r.amplitude().abs() < 3.0 * e[0] || r.amplitude() == 0.0 {
        s.push_str("amplitude is consistent with zero (< 3 sigma)\n");
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CsvError> {
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::BinGeometry;
    use crate::expfit::{fit_exp, model_value, FitOptions, T0Mode};
    use crate::temporal_mode::EnvelopeKind;

    #[test]
    fn golden_outputs() {
        let g = BinGeometry::from_ns(-3.0, 3.0, 2.0).unwrap();
        let h = CorrelationHistogram {
            geometry: g,
            counts: vec![4, 0, 9],
            n_triggers: Some(10),
        };
        assert_eq!(
            format_series(&histogram_series(&h)).unwrap(),
            "bin_center_ns,value,error\n-2,4,2\n0,0,0\n2,9,3\n"
        );
        let g2 = NormalizedG2 {
            centers_ns: vec![-2.0, 0.0, 2.0],
            values: vec![1.0, 0.0, 0.1],
            errors: vec![Some(0.5), None, Some(0.03125)],
        };
        assert_eq!(
            format_series(&g2_series(&g2)).unwrap(),
            "bin_center_ns,value,error\n-2,1,0.5\n0,0,\n2,0.1,0.03125\n"
        );
        let v = VarianceEnvelope {
            time_ns: vec![-1.0, 0.0],
            values: vec![1.0, 1.04],
            errors: vec![0.002, 0.00208],
            trigger_index: 1,
        };
        assert_eq!(
            format_series(&variance_series(&v)).unwrap(),
            "time_ns,variance,error\n-1,1,0.002\n0,1.04,0.00208\n"
        );
    }

    #[test]
    fn empty_series_is_header_only() {
        assert_eq!(
            format_series(&Series::new(VARIANCE_HEADER)).unwrap(),
            "time_ns,variance,error\n"
        );
    }

    #[test]
    fn nan_rejected() {
        let mut s = Series::new(VARIANCE_HEADER);
        s.push(0.0, 1.0, Some(0.1));
        s.push(1.0, f64::NAN, Some(0.1));
        assert!(matches!(format_series(&s), Err(CsvError::NonFinite { row: 1 })));
        let mut s = Series::new(VARIANCE_HEADER);
        s.push(0.0, 1.0, Some(f64::INFINITY));
        assert!(format_series(&s).is_err());
    }

    #[test]
    fn parse_round_trip_exact() {
        let mut s = Series::new(VARIANCE_HEADER);
        s.push(-64.0, 1.0000000000000002, Some(1e-300));
        s.push(0.1 + 0.2, 1.046_123_456_789_012_3, None);
        let back = parse_series(&format_series(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn malformed_csv() {
        let err = |t: &str| match parse_series(t) {
            Err(CsvError::Malformed { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(err(""), 1);
        assert_eq!(err("1,2,3\n"), 1);
        assert_eq!(err("a,b,c\n1,2,3\n1,2\n"), 3);
        assert_eq!(err("a,b,c\n1,x,3\n"), 2);
        assert_eq!(err("a,b,c\n1,NaN,3\n"), 2);
    }

    #[test]
    fn fit_outputs() {
        let x: Vec<f64> = (0..40).map(f64::from).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&t| model_value(EnvelopeKind::Decay, &[0.04, 7.2, 1.0, 0.0], t) + 1e-4 * (t * 1.7).sin())
            .collect();
        let r = fit_exp(
            &x,
            &y,
            &vec![1e-4; 40],
            &FitOptions::new(EnvelopeKind::Decay, T0Mode::Fixed(0.0)),
        )
        .unwrap();
        let csv = fit_csv(&r).unwrap();
        assert!(csv.starts_with("parameter,value,error\namplitude,"));
        assert!(csv.contains("\nt0_ns,0,\n"));
        let text = fit_report(&r);
        assert!(text.contains("tau") && text.contains("(fixed)"));
    }
}
