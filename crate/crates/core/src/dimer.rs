//! Closed-form two-spin (dimer) spectrum and echo susceptibility.

use crate::floquet::EngineeredHamiltonian;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ratio<T> {
    Defined(T),
    Undefined,
}

impl<T: Real> Ratio<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Ratio::Defined(v) => Some(v),
            Ratio::Undefined => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimerSpectrum<T> {
    /// Energies of psi-, psi+, phi+, phi-.
    pub epsilon: [T; 4],
    /// eps(psi+) - eps(phi+)
    pub omega_x: T,
    /// eps(phi+) - eps(phi-)
    pub omega_z: T,
    /// 1 + omega_z / omega_x
    pub ratio_xz: Ratio<T>,
    /// 1 + omega_x / omega_z
    pub ratio_zx: Ratio<T>,
}

/// Spectrum of `sum_a G_a s1a s2a`.
pub fn dimer_spectrum_bond<T: Real>(gb: [T; 3]) -> DimerSpectrum<T> {
    let [gx, gy, gz] = gb;
    let epsilon = [-gx - gy - gz, gx + gy - gz, gx - gy + gz, -gx + gy + gz];
    let omega_x = epsilon[1] - epsilon[2];
    let omega_z = epsilon[2] - epsilon[3];
    let tiny = T::epsilon() * (gx.abs() + gy.abs() + gz.abs());
    let ratio = |num: T, den: T| if den.abs() > tiny { Ratio::Defined(T::one() + num / den) } else { Ratio::Undefined };
    DimerSpectrum { epsilon, omega_x, omega_z, ratio_xz: ratio(omega_z, omega_x), ratio_zx: ratio(omega_x, omega_z) }
}

/// Dimer with twist coupling `j_d` and no Heisenberg part; the isotropic
/// term only shifts all triplet levels equally.
pub fn dimer_spectrum<T: Real>(h: &EngineeredHamiltonian<T>, j_d: T) -> DimerSpectrum<T> {
    dimer_spectrum_bond(h.bond(T::zero(), j_d))
}

/// Rows M in (X, Z), columns S in (X, Z), for the echo started on -Y with
/// backward evolution `-H`.
pub fn chi_dimer<T: Real>(omega_x: T, omega_z: T, t_plus: T, t_minus: T) -> [[T; 2]; 2] {
    let w = omega_x + omega_z;
    [
        [-(omega_x * t_minus).sin(), (omega_x * t_minus - w * t_plus).cos()],
        [-(omega_z * t_minus - w * t_plus).cos(), (omega_z * t_minus).sin()],
    ]
}

/// Response of M = (X + Z)/sqrt 2 to S = (Z - X)/sqrt 2.
pub fn amp_from_chi<T: Real>(chi: &[[T; 2]; 2]) -> T {
    let h = T::one() / T::lit(2.0);
    h * (-chi[0][0] + chi[0][1] - chi[1][0] + chi[1][1])
}

pub fn amp_dimer_tat<T: Real>(j_d: T, t_plus: T, t_minus: T) -> T {
    let two = T::lit(2.0);
    (two * j_d * t_minus).sin() + (two * j_d * (t_minus - two * t_plus)).cos()
}

/// Golden-section maximum of `f` on `[a, b]`; `f` must be unimodal there.
pub fn golden_max<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T, tol: T) -> (T, T) {
    let r = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / T::lit(2.0);
    (x, f(x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimerGrid {
    pub t_plus: Vec<f64>,
    pub t_minus: Vec<f64>,
    /// Indexed `[t_plus][t_minus]`.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

impl DimerGrid {
    pub fn peak(&self) -> (f64, usize, usize) {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (i, row) in self.mean.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                if v > best.0 {
                    best = (v, i, k);
                }
            }
        }
        best
    }
}

/// Average of the TAT dimer amplification over a list of dimer couplings.
pub fn disorder_average(j_d: &[f64], t_plus: &[f64], t_minus: &[f64]) -> DimerGrid {
    let n = j_d.len().max(1) as f64;
    let mut mean = vec![vec![0.0; t_minus.len()]; t_plus.len()];
    let mut stderr = mean.clone();
    for (i, &tp) in t_plus.iter().enumerate() {
        for (k, &tm) in t_minus.iter().enumerate() {
            let (mut s, mut s2) = (0.0, 0.0);
            for &j in j_d {
                let a = amp_dimer_tat(j, tp, tm);
                s += a;
                s2 += a * a;
            }
            let m = s / n;
            mean[i][k] = m;
            stderr[i][k] = if n > 1.0 { ((s2 / n - m * m).max(0.0) / (n - 1.0)).sqrt() } else { 0.0 };
        }
    }
    DimerGrid { t_plus: t_plus.to_vec(), t_minus: t_minus.to_vec(), mean, stderr }
}
