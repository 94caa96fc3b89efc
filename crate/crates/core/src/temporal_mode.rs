//! Normalized single-photon temporal modes.
//!
//! A heralded photon from a cascade decay has a one-sided exponential
//! envelope. When the herald is the first photon of the cascade the partner
//! decays after the trigger; when the roles are swapped it rises up to it.
//! Amplitudes decay with constant `2τ`, so the intensity `|ψ|²` has time
//! constant `τ` and integrates to one.

use std::fmt;

/// Which side of the trigger the envelope occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvelopeKind {
    /// Zero before `t0`, exponential decay afterwards.
    Decay,
    /// Exponential rise up to `t0`, zero afterwards.
    Rise,
}

impl EnvelopeKind {
    pub fn reversed(self) -> Self {
        match self {
            EnvelopeKind::Decay => EnvelopeKind::Rise,
            EnvelopeKind::Rise => EnvelopeKind::Decay,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvelopeKind::Decay => "decay",
            EnvelopeKind::Rise => "rise",
        }
    }
}

impl fmt::Display for EnvelopeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EnvelopeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decay" => Ok(EnvelopeKind::Decay),
            "rise" => Ok(EnvelopeKind::Rise),
            other => Err(format!("unknown envelope kind `{other}` (expected decay or rise)")),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("envelope time constant must be positive and finite, got {0}")]
pub struct InvalidTau(pub f64);

/// A one-sided exponential single-photon mode. Times are in ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    kind: EnvelopeKind,
    t0: f64,
    tau: f64,
}

impl Envelope {
    pub fn new(kind: EnvelopeKind, t0: f64, tau: f64) -> Result<Self, InvalidTau> {
        if !(tau.is_finite() && tau > 0.0) || !t0.is_finite() {
            return Err(InvalidTau(tau));
        }
        Ok(Self { kind, t0, tau })
    }

    pub fn decay(t0: f64, tau: f64) -> Result<Self, InvalidTau> {
        Self::new(EnvelopeKind::Decay, t0, tau)
    }

    pub fn rise(t0: f64, tau: f64) -> Result<Self, InvalidTau> {
        Self::new(EnvelopeKind::Rise, t0, tau)
    }

    pub fn kind(&self) -> EnvelopeKind {
        self.kind
    }

    /// Trigger reference time in ns.
    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Intensity time constant in ns.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Amplitude density in ns^-1/2.
    pub fn psi(&self, t: f64) -> f64 {
        // Distance into the support; negative means outside.
        let d = match self.kind {
            EnvelopeKind::Decay => t - self.t0,
            EnvelopeKind::Rise => self.t0 - t,
        };
        if d < 0.0 {
            0.0
        } else {
            (1.0 / self.tau).sqrt() * (-d / (2.0 * self.tau)).exp()
        }
    }

    /// `|ψ(t)|²`, the detection probability density in ns^-1.
    pub fn intensity(&self, t: f64) -> f64 {
        let p = self.psi(t);
        p * p
    }

    /// Mirror image about `t0`: decay becomes rise and vice versa.
    pub fn time_reverse(&self) -> Self {
        Self {
            kind: self.kind.reversed(),
            ..*self
        }
    }

    /// Same shape moved to a new trigger time.
    pub fn with_t0(&self, t0: f64) -> Self {
        Self { t0, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature, independent of anything in the crate.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn peak_amplitude_and_causality() {
        let e = Envelope::decay(3.0, 7.2).unwrap();
        assert!((e.psi(3.0) - (1.0f64 / 7.2).sqrt()).abs() < 1e-15);
        assert!((e.psi(3.0) - 0.372_68).abs() < 1e-5);
        assert_eq!(e.psi(2.999), 0.0);
        let r = e.time_reverse();
        assert_eq!(r.psi(3.001), 0.0);
        assert!(r.psi(2.0) > 0.0);
    }

    #[test]
    fn five_tau_integral() {
        let e = Envelope::decay(0.0, 7.2).unwrap();
        let v = simpson(&|t| e.intensity(t), 0.0, 5.0 * 7.2, 1e-13);
        assert!((v - (1.0 - (-5.0f64).exp())).abs() < 1e-10);
        assert!((v - 0.993_262).abs() < 1e-6);
    }

    #[test]
    fn normalized_over_full_support() {
        for &tau in &[0.1, 1.0, 7.2, 7.4, 33.0, 100.0] {
            for kind in [EnvelopeKind::Decay, EnvelopeKind::Rise] {
                let e = Envelope::new(kind, 1.5, tau).unwrap();
                // Split at t0 so the Heaviside edge sits on a panel boundary.
                let lo = e.t0() - 60.0 * tau;
                let hi = e.t0() + 60.0 * tau;
                let total =
                    simpson(&|t| e.intensity(t), lo, e.t0(), 1e-13) + simpson(&|t| e.intensity(t), e.t0(), hi, 1e-13);
                assert!((total - 1.0).abs() < 1e-9, "tau={tau} {kind}: {total}");
                // On a ±20τ window the missing tail is e^-20.
                let window = simpson(&|t| e.intensity(t), e.t0() - 20.0 * tau, e.t0(), 1e-13)
                    + simpson(&|t| e.intensity(t), e.t0(), e.t0() + 20.0 * tau, 1e-13);
                assert!((window - (1.0 - (-20.0f64).exp())).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn time_reverse_is_involution() {
        let e = Envelope::decay(-4.0, 7.2).unwrap();
        assert_eq!(e.time_reverse().kind(), EnvelopeKind::Rise);
        assert_eq!(e.time_reverse().tau(), 7.2);
        assert_eq!(e.time_reverse().time_reverse(), e);
    }

    #[test]
    fn mirror_grid() {
        let e = Envelope::decay(0.0, 7.2).unwrap();
        let r = e.time_reverse();
        let mut worst = 0.0f64;
        for i in 0..1000 {
            let d = -50.0 + 0.1 * i as f64;
            worst = worst.max((r.psi(e.t0() + d) - e.psi(e.t0() - d)).abs());
        }
        assert_eq!(worst, 0.0);
    }

    #[test]
    fn rejects_bad_tau() {
        assert!(Envelope::decay(0.0, 0.0).is_err());
        assert!(Envelope::decay(0.0, -1.0).is_err());
        assert!(Envelope::rise(0.0, f64::NAN).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mirror_symmetry_exact(tau in 0.1f64..100.0, t in -500.0f64..500.0) {
                let d = Envelope::decay(0.0, tau).unwrap();
                let r = d.time_reverse();
                prop_assert_eq!(r.psi(-t), d.psi(t));
            }

            #[test]
            fn mirror_symmetry_shifted(tau in 0.1f64..100.0, t0 in -50.0f64..50.0, dt in -300.0f64..300.0) {
                let d = Envelope::decay(t0, tau).unwrap();
                let r = d.time_reverse();
                let a = r.psi(t0 - dt);
                let b = d.psi(t0 + dt);
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) || (a == 0.0 && b == 0.0) || dt.abs() < 1e-9);
            }

            #[test]
            fn double_reverse_identity(tau in 0.1f64..100.0, t0 in -1e3f64..1e3) {
                let e = Envelope::rise(t0, tau).unwrap();
                prop_assert_eq!(e.time_reverse().time_reverse(), e);
            }
        }
    }
}
