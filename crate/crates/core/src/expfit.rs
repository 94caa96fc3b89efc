//! Weighted Levenberg–Marquardt fits of one-sided exponentials.
//!
//! Models, with `Θ` the unit step (`Θ(0) = 1`):
//!
//! ```text
//! decay:  b + A · exp(−(t − t0)/τ) · Θ(t − t0)
//! rise:   b + A · exp( (t − t0)/τ) · Θ(t0 − t)
//! ```
//!
//! Parameters are ordered `[A, τ, b, t0]` throughout. `A` and `τ` are always
//! fitted; `b` and `t0` may be held fixed.

use crate::temporal_mode::EnvelopeKind;

pub const AMPLITUDE: usize = 0;
pub const TAU: usize = 1;
pub const BASELINE: usize = 2;
pub const T0: usize = 3;

pub const MAX_ITERATIONS: usize = 200;
const PARAM_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-12;
const CHI2_SLACK: f64 = 1e-12;

pub type Params = [f64; 4];
pub type Matrix = [[f64; 4]; 4];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FitError {
    #[error("x, y and sigma lengths differ ({0}, {1}, {2})")]
    LengthMismatch(usize, usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point {0}: sigma must be positive and finite")]
    BadSigma(usize),
    #[error("point {0}: non-finite value")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum T0Mode {
    Fixed(f64),
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineMode {
    Free,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub model: EnvelopeKind,
    pub t0: T0Mode,
    pub baseline: BaselineMode,
    pub max_iterations: usize,
}

impl FitOptions {
    pub fn new(model: EnvelopeKind, t0: T0Mode) -> Self {
        Self {
            model,
            t0,
            baseline: BaselineMode::Free,
            max_iterations: MAX_ITERATIONS,
        }
    }

    pub fn with_baseline(mut self, baseline: BaselineMode) -> Self {
        self.baseline = baseline;
        self
    }

    fn free_mask(&self) -> [bool; 4] {
        [
            true,
            true,
            matches!(self.baseline, BaselineMode::Free),
            matches!(self.t0, T0Mode::Free),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpFitResult {
    pub model: EnvelopeKind,
    pub params: Params,
    /// Which of `[A, τ, b, t0]` were fitted.
    pub free: [bool; 4],
    /// `(JᵀWJ)⁻¹` at the optimum, not scaled by the reduced chi-square.
    /// Rows and columns of fixed parameters are zero.
    pub covariance: Matrix,
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    /// False when the data carry no information on τ (no amplitude).
    pub tau_identifiable: bool,
}

impl ExpFitResult {
    pub fn amplitude(&self) -> f64 {
        self.params[AMPLITUDE]
    }

    pub fn tau(&self) -> f64 {
        self.params[TAU]
    }

    pub fn baseline(&self) -> f64 {
        self.params[BASELINE]
    }

    pub fn t0(&self) -> f64 {
        self.params[T0]
    }

    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof as f64
    }

    /// One-sigma errors from the covariance scaled by the reduced
    /// chi-square.
    pub fn errors(&self) -> Params {
        let s = self.reduced_chi2();
        let mut e = [0.0; 4];
        for (i, v) in e.iter_mut().enumerate() {
            *v = (self.covariance[i][i] * s).max(0.0).sqrt();
        }
        e
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        model_value(self.model, &self.params, t)
    }
}

pub fn model_value(model: EnvelopeKind, p: &Params, t: f64) -> f64 {
    let u = match model {
        EnvelopeKind::Decay => t - p[T0],
        EnvelopeKind::Rise => p[T0] - t,
    };
    if u < 0.0 {
        p[BASELINE]
    } else {
        p[BASELINE] + p[AMPLITUDE] * (-u / p[TAU]).exp()
    }
}

/// Analytic partial derivatives with respect to `[A, τ, b, t0]`.
pub fn model_jacobian(model: EnvelopeKind, p: &Params, t: f64) -> Params {
    let (u, dir) = match model {
        EnvelopeKind::Decay => (t - p[T0], 1.0),
        EnvelopeKind::Rise => (p[T0] - t, -1.0),
    };
    if u < 0.0 {
        return [0.0, 0.0, 1.0, 0.0];
    }
    let (a, tau) = (p[AMPLITUDE], p[TAU]);
    let e = (-u / tau).exp();
    [e, a * e * u / (tau * tau), 1.0, dir * a * e / tau]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialGuess {
    pub params: Params,
    /// Set when τ could not be regressed and `span / 5` was used.
    pub tau_fallback: bool,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn on_signal_side(model: EnvelopeKind, t: f64, t0: f64) -> bool {
    match model {
        EnvelopeKind::Decay => t >= t0,
        EnvelopeKind::Rise => t <= t0,
    }
}

/// Starting point: baseline from the median of the flat side, `A` from
/// the largest excursion, `τ` from a log-linear regression of `y − b`.
/// With `t0 = None` the edge is placed at the largest excursion.
pub fn initial_guess(x: &[f64], y: &[f64], model: EnvelopeKind, t0: Option<f64>) -> InitialGuess {
    let span = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);

    let peak_of = |b: f64, t0: Option<f64>| {
        (0..x.len())
            .filter(|&i| t0.is_none_or(|t0| on_signal_side(model, x[i], t0)))
            .max_by(|&i, &j| (y[i] - b).abs().total_cmp(&(y[j] - b).abs()))
    };

    let t0 = t0.unwrap_or_else(|| {
        let b = median(y.to_vec());
        peak_of(b, None).map_or(0.0, |i| x[i])
    });

    let flat: Vec<f64> = (0..x.len())
        .filter(|&i| !on_signal_side(model, x[i], t0))
        .map(|i| y[i])
        .collect();
    let baseline = if flat.is_empty() {
        // Use the quarter of the signal side farthest from the edge.
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| (x[j] - t0).abs().total_cmp(&(x[i] - t0).abs()));
        let q = (idx.len() / 4).max(1);
        median(idx[..q].iter().map(|&i| y[i]).collect())
    } else {
        median(flat)
    };

    let amplitude = peak_of(baseline, Some(t0)).map_or(0.0, |i| y[i] - baseline);

    // ln|y − b| against distance from the edge; slope is −1/τ.
    let sign = if amplitude < 0.0 { -1.0 } else { 1.0 };
    let pts: Vec<(f64, f64)> = (0..x.len())
        .filter(|&i| on_signal_side(model, x[i], t0))
        .filter_map(|i| {
            let r = sign * (y[i] - baseline);
            (r > 0.0).then(|| ((x[i] - t0).abs(), r.ln()))
        })
        .collect();
    let mut tau = f64::NAN;
    if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 {
            tau = -sxx / sxy;
        }
    }
    let tau_fallback = !(tau.is_finite() && tau > 0.0);
    if tau_fallback {
        tau = if span > 0.0 { span / 5.0 } else { 1.0 };
    }
    InitialGuess {
        params: [amplitude, tau, baseline, t0],
        tau_fallback,
    }
}

/// Solves `m · x = v` for the sub-block selected by `idx` (Gaussian
/// elimination with partial pivoting). Returns `None` if singular.
fn solve(m: &Matrix, v: &Params, idx: &[usize]) -> Option<Params> {
    let n = idx.len();
    let mut a = [[0.0; 5]; 4];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            a[r][c] = m[i][j];
        }
        a[r][n] = v[i];
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-300 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            let (top, rest) = a.split_at_mut(r);
            for (v, p) in rest[0][col..=n].iter_mut().zip(&top[col][col..=n]) {
                *v -= f * p;
            }
        }
    }
    let mut out = [0.0; 4];
    for r in (0..n).rev() {
        let mut s = a[r][n];
        for c in r + 1..n {
            s -= a[r][c] * out[idx[c]];
        }
        out[idx[r]] = s / a[r][r];
    }
    Some(out)
}

fn invert(m: &Matrix, idx: &[usize]) -> Option<Matrix> {
    let mut inv = [[0.0; 4]; 4];
    for &k in idx {
        let mut e = [0.0; 4];
        e[k] = 1.0;
        let col = solve(m, &e, idx)?;
        for &i in idx {
            inv[i][k] = col[i];
        }
    }
    Some(inv)
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
    model: EnvelopeKind,
    idx: Vec<usize>,
}

impl Problem<'_> {
    fn chi2(&self, p: &Params) -> f64 {
        self.x
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((&t, &y), &w)| {
                let r = y - model_value(self.model, p, t);
                r * r * w
            })
            .sum()
    }

    /// `JᵀWJ` and `JᵀW r`.
    fn normal_equations(&self, p: &Params) -> (Matrix, Params) {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for ((&t, &y), &w) in self.x.iter().zip(self.y).zip(&self.w) {
            let j = model_jacobian(self.model, p, t);
            let r = y - model_value(self.model, p, t);
            for &a in &self.idx {
                jtr[a] += w * j[a] * r;
                for &b in &self.idx {
                    jtj[a][b] += w * j[a] * j[b];
                }
            }
        }
        (jtj, jtr)
    }
}

/// Minimizes `Σ ((y − model)/σ)²`. Non-convergence is reported through
/// `converged = false` together with the best point found.
pub fn fit_exp(x: &[f64], y: &[f64], sigma: &[f64], opts: &FitOptions) -> Result<ExpFitResult, FitError> {
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(FitError::LengthMismatch(x.len(), y.len(), sigma.len()));
    }
    let free = opts.free_mask();
    let n_free = free.iter().filter(|&&f| f).count();
    let needed = 4.max(n_free + 1);
    if x.len() < needed {
        return Err(FitError::TooFewPoints { needed, got: x.len() });
    }
    for i in 0..x.len() {
        if !(x[i].is_finite() && y[i].is_finite()) {
            return Err(FitError::NonFinite(i));
        }
        if !(sigma[i].is_finite() && sigma[i] > 0.0) {
            return Err(FitError::BadSigma(i));
        }
    }
    let idx: Vec<usize> = (0..4).filter(|&i| free[i]).collect();
    let dof = x.len() - n_free;

    let fixed_t0 = match opts.t0 {
        T0Mode::Fixed(t) => Some(t),
        T0Mode::Free => None,
    };
    let guess = initial_guess(x, y, opts.model, fixed_t0);
    let mut p = guess.params;
    if let BaselineMode::Fixed(b) = opts.baseline {
        p[BASELINE] = b;
        // Re-anchor the amplitude on the fixed baseline.
        if let Some(i) = (0..x.len())
            .filter(|&i| on_signal_side(opts.model, x[i], p[T0]))
            .max_by(|&i, &j| (y[i] - b).abs().total_cmp(&(y[j] - b).abs()))
        {
            p[AMPLITUDE] = y[i] - b;
        }
    }

    let problem = Problem {
        x,
        y,
        w: sigma.iter().map(|s| 1.0 / (s * s)).collect(),
        model: opts.model,
        idx,
    };

    let y0 = y[0];
    let flat_data = y.iter().all(|&v| v == y0);
    if flat_data {
        if let BaselineMode::Free = opts.baseline {
            p[BASELINE] = y0;
        }
        p[AMPLITUDE] = 0.0;
        return Ok(ExpFitResult {
            model: opts.model,
            params: p,
            free,
            covariance: [[0.0; 4]; 4],
            chi2: problem.chi2(&p),
            dof,
            converged: true,
            iterations: 0,
            tau_identifiable: false,
        });
    }

    let mut chi2 = problem.chi2(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let (jtj, jtr) = problem.normal_equations(&p);
        let grad = problem.idx.iter().map(|&i| jtr[i].abs()).fold(0.0, f64::max);
        if grad < GRAD_TOL {
            converged = true;
            break;
        }
        // Converged when the undamped step is negligible against both the
        // parameter and its curvature scale.
        if let Some(gn) = solve(&jtj, &jtr, &problem.idx) {
            let small = problem.idx.iter().all(|&i| {
                let scale = p[i].abs().max(1.0 / jtj[i][i].sqrt());
                gn[i].abs() <= PARAM_TOL * scale
            });
            if small {
                converged = true;
                break;
            }
        }
        let mut accepted = false;
        while lambda < 1e20 {
            let mut damped = jtj;
            for &i in &problem.idx {
                damped[i][i] += lambda * jtj[i][i].max(1e-300);
            }
            let Some(step) = solve(&damped, &jtr, &problem.idx) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for &i in &problem.idx {
                trial[i] += step[i];
            }
            if trial.iter().any(|v| !v.is_finite()) || trial[TAU] <= 0.0 {
                lambda *= 10.0;
                continue;
            }
            let trial_chi2 = problem.chi2(&trial);
            // Near the optimum chi-square differences drown in rounding;
            // tolerate changes at that level and let the step test decide.
            if trial_chi2 <= chi2 + CHI2_SLACK * chi2 {
                p = trial;
                chi2 = trial_chi2;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: we are at a minimum to
            // machine precision.
            converged = true;
            break;
        }
    }

    let (jtj, _) = problem.normal_equations(&p);
    let covariance = invert(&jtj, &problem.idx).unwrap_or([[0.0; 4]; 4]);
    let tau_identifiable = p[AMPLITUDE] != 0.0 && covariance[TAU][TAU] > 0.0;
    Ok(ExpFitResult {
        model: opts.model,
        params: p,
        free,
        covariance,
        chi2,
        dof,
        converged,
        iterations,
        tau_identifiable,
    })
}
