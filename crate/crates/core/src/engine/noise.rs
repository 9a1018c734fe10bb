//! On-site disorder: static detunings, an Ornstein-Uhlenbeck dynamical
//! detuning, and longitudinal relaxation.
//!
//! Detunings are cyclic frequencies in MHz; a detuning `delta` enters as the
//! field `pi * delta * sigma_z` (rad/us).

use crate::error::{invalid, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCoupling {
    /// Independent detunings along x, y, z weighted by the frame fractions.
    #[default]
    Effective,
    /// One detuning per spin along the instantaneous toggling-frame image of z.
    Toggled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub static_disorder: bool,
    /// MHz FWHM of the static detuning distribution.
    pub static_disorder_fwhm: f64,
    pub dynamical_disorder: bool,
    /// MHz/sqrt(MHz) at `f_peak`.
    pub asd: f64,
    /// MHz.
    pub f_peak: f64,
    /// us.
    pub correlation_time: f64,
    pub coupling: NoiseCoupling,
    /// Used only with toggled coupling.
    pub sequence_json: Option<String>,
    pub t1_relaxation: bool,
    /// ms.
    pub t1: f64,
    pub heisenberg_unreversed: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            static_disorder: false,
            static_disorder_fwhm: 1.0,
            dynamical_disorder: false,
            asd: 0.019,
            f_peak: 37.0,
            correlation_time: 0.0043,
            coupling: NoiseCoupling::Effective,
            sequence_json: None,
            t1_relaxation: false,
            t1: 0.94,
            heisenberg_unreversed: true,
        }
    }
}

impl NoiseModel {
    pub fn ideal() -> Self {
        Self { heisenberg_unreversed: false, ..Self::default() }
    }

    pub fn experimental() -> Self {
        Self { dynamical_disorder: true, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("static_disorder_fwhm", self.static_disorder_fwhm),
            ("asd", self.asd),
            ("f_peak", self.f_peak),
            ("t1", self.t1),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, "must be finite and non-negative"));
            }
        }
        if !(self.correlation_time.is_finite() && self.correlation_time > 0.0) {
            return Err(invalid("correlation_time", "must be positive"));
        }
        if self.t1_relaxation && self.t1 <= 0.0 {
            return Err(invalid("t1", "must be positive when relaxation is enabled"));
        }
        Ok(())
    }

    pub fn dynamical_active(&self) -> bool {
        self.dynamical_disorder && self.asd > 0.0
    }

    pub fn process(&self) -> Result<OuProcess> {
        OuProcess::from_asd(self.asd, self.f_peak, self.correlation_time)
    }
}

/// Stationary OU process with variance `sigma^2` (MHz^2) and correlation
/// time `tau` (us).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuProcess {
    pub sigma: f64,
    pub tau: f64,
}

/// Coefficients of the exact one-step update of `(x, integral of x)`.
#[derive(Clone, Copy, Debug)]
pub struct OuStep {
    decay: f64,
    gain: f64,
    a11: f64,
    a21: f64,
    a22: f64,
}

impl OuProcess {
    /// Chooses `sigma` so the one-sided PSD at `f_peak` equals `asd^2`.
    pub fn from_asd(asd: f64, f_peak: f64, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(invalid("correlation_time", "must be positive"));
        }
        let w = 2.0 * PI * f_peak * tau;
        let var = asd * asd * (1.0 + w * w) / (4.0 * tau);
        Ok(Self { sigma: var.sqrt(), tau })
    }

    /// One-sided PSD, MHz^2 / MHz.
    pub fn psd(&self, f: f64) -> f64 {
        let w = 2.0 * PI * f * self.tau;
        4.0 * self.sigma * self.sigma * self.tau / (1.0 + w * w)
    }

    pub fn stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sigma * rng.sample::<f64, _>(StandardNormal)
    }

    pub fn step_coefficients(&self, h: f64) -> OuStep {
        let (s2, tau) = (self.sigma * self.sigma, self.tau);
        let e1 = (-h / tau).exp();
        let e2 = e1 * e1;
        let var_x = s2 * (1.0 - e2);
        let var_i = s2 * tau * tau * (2.0 * h / tau - 3.0 + 4.0 * e1 - e2);
        let cov = s2 * tau * (1.0 - e1) * (1.0 - e1);
        let a11 = var_x.max(0.0).sqrt();
        let a21 = if a11 > 0.0 { cov / a11 } else { 0.0 };
        let a22 = (var_i - a21 * a21).max(0.0).sqrt();
        OuStep { decay: e1, gain: tau * (1.0 - e1), a11, a21, a22 }
    }

    /// Ensemble coherence `<cos phi>` of a spin under `pi delta sigma_z`.
    pub fn dephasing(&self, t: f64) -> f64 {
        let (s2, tau) = (self.sigma * self.sigma, self.tau);
        let var_phase = (2.0 * PI).powi(2) * 2.0 * s2 * tau * tau * (t / tau - 1.0 + (-t / tau).exp());
        (-0.5 * var_phase).exp()
    }
}

impl OuStep {
    /// Advances `x` over the step and returns the integral of x over it.
    #[inline]
    pub fn advance<R: Rng + ?Sized>(&self, x: &mut f64, rng: &mut R) -> f64 {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let integral = self.gain * *x + self.a21 * z1 + self.a22 * z2;
        *x = self.decay * *x + self.a11 * z1;
        integral
    }
}
