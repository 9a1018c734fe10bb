//! Single-NV dressing and the dipolar pair Hamiltonian projected onto the
//! dressed {0, -1} qubit.
//!
//! Units: angular frequency in rad/us, field in gauss, length in nm.

use crate::error::{invalid, Error, Result};
use crate::scalar::{cross, dot, norm, normalize, scale, sub, Vec3};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Angle between the NV axis and the (100) surface normal, `acos(1/sqrt 3)`.
pub fn magic_angle() -> f64 {
    (1.0f64 / 3.0f64.sqrt()).acos()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrystalOrientation {
    /// (100) surface, field along the NV axis.
    #[serde(rename = "native")]
    Native,
    /// (100) surface, field tilted off the NV axis.
    #[serde(rename = "engineered")]
    Engineered,
    /// (111) surface, NV axis along the surface normal.
    #[serde(rename = "111")]
    Oriented111,
}

impl std::str::FromStr for CrystalOrientation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" | "100" => Ok(Self::Native),
            "engineered" => Ok(Self::Engineered),
            "111" => Ok(Self::Oriented111),
            other => Err(invalid("orientation", format!("unknown orientation `{other}`"))),
        }
    }
}

impl std::fmt::Display for CrystalOrientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Native => "native",
            Self::Engineered => "engineered",
            Self::Oriented111 => "111",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NVSpinParams {
    /// D, rad/us.
    pub zero_field_splitting: f64,
    /// gamma_e, rad/us per gauss.
    pub gyromagnetic_ratio: f64,
    /// J0 = mu0 gamma^2 hbar / 4 pi, rad/us nm^3.
    pub dipolar_coefficient: f64,
    /// Unit NV axis in the lab frame.
    pub native_axis: Vec3,
    pub orientation: CrystalOrientation,
}

impl Default for NVSpinParams {
    fn default() -> Self {
        Self {
            zero_field_splitting: TWO_PI * 2870.0,
            gyromagnetic_ratio: TWO_PI * 2.8,
            dipolar_coefficient: TWO_PI * 52.0,
            native_axis: [0.0, 0.0, 1.0],
            orientation: CrystalOrientation::Engineered,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneFrame {
    pub e1: Vec3,
    pub e2: Vec3,
    pub normal: Vec3,
}

impl PlaneFrame {
    pub fn to_lab(&self, p: &Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = p[0] * self.e1[k] + p[1] * self.e2[k] + p[2] * self.normal[k];
        }
        out
    }

    pub fn in_plane(&self, phi: f64) -> Vec3 {
        let (s, c) = phi.sin_cos();
        [
            c * self.e1[0] + s * self.e2[0],
            c * self.e1[1] + s * self.e2[1],
            c * self.e1[2] + s * self.e2[2],
        ]
    }
}

impl NVSpinParams {
    pub fn with_orientation(orientation: CrystalOrientation) -> Self {
        Self { orientation, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = norm(&self.native_axis);
        if !n.is_finite() || (n - 1.0).abs() > 1e-12 {
            return Err(invalid("native_axis", format!("must be a unit vector, |n| = {n}")));
        }
        for (name, v) in [
            ("zero_field_splitting", self.zero_field_splitting),
            ("gyromagnetic_ratio", self.gyromagnetic_ratio),
            ("dipolar_coefficient", self.dipolar_coefficient),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be finite and positive"));
            }
        }
        Ok(())
    }

    /// Transverse reference direction used as the native-frame x axis.
    pub fn reference_transverse(&self) -> Vec3 {
        transverse_reference(&self.native_axis)
    }

    /// Native frame (x, y, z) with z along the NV axis.
    pub fn native_frame(&self) -> [Vec3; 3] {
        let z = self.native_axis;
        let x = self.reference_transverse();
        [x, cross(&z, &x), z]
    }

    pub fn plane_frame(&self) -> PlaneFrame {
        let [x, y, z] = self.native_frame();
        let normal = match self.orientation {
            CrystalOrientation::Oriented111 => z,
            CrystalOrientation::Native | CrystalOrientation::Engineered => {
                let (s, c) = magic_angle().sin_cos();
                [c * z[0] - s * x[0], c * z[1] - s * x[1], c * z[2] - s * x[2]]
            }
        };
        let e1 = normalize(&cross(&normal, &y), 1e-9)
            .unwrap_or_else(|| normalize(&cross(&normal, &x), 1e-9).expect("frame is orthonormal"));
        let e2 = cross(&normal, &e1);
        PlaneFrame { e1, e2, normal }
    }

    /// Default bias field for the configured orientation.
    pub fn preset_field(&self) -> FieldConfig {
        let [x, _, z] = self.native_frame();
        let (bx, bz) = match self.orientation {
            CrystalOrientation::Engineered => (143.0, 877.0),
            _ => (0.0, 877.0),
        };
        FieldConfig { b: [bx * x[0] + bz * z[0], bx * x[1] + bz * z[1], bx * x[2] + bz * z[2]] }
    }
}

fn transverse_reference(n: &Vec3) -> Vec3 {
    let fallback = |t: Vec3| normalize(&sub(&t, &scale(n, dot(n, &t))), 1e-6);
    fallback([1.0, 0.0, 0.0]).or_else(|| fallback([0.0, 1.0, 0.0])).expect("unit axis")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// Lab-frame field, gauss.
    pub b: Vec3,
}

impl FieldConfig {
    pub fn new(b: Vec3) -> Self {
        Self { b }
    }

    /// (parallel magnitude, perpendicular vector) relative to `axis`.
    pub fn decompose(&self, axis: &Vec3) -> (f64, Vec3) {
        let par = dot(&self.b, axis);
        (par, sub(&self.b, &scale(axis, par)))
    }
}

/// Level labels of the dressed states, by adiabatic continuity from |m>.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Zero,
    Minus,
    Plus,
}

impl Level {
    fn index(self) -> usize {
        match self {
            Level::Zero => 0,
            Level::Minus => 1,
            Level::Plus => 2,
        }
    }
}

/// Spin-1 matrices in the lab |m_z = +1, 0, -1> basis.
pub fn spin1_matrices() -> [Matrix3<Complex64>; 3] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let c = |x: f64| Complex64::new(x, 0.0);
    let i = |x: f64| Complex64::new(0.0, x);
    let z = c(0.0);
    let jx = Matrix3::new(z, c(r), z, c(r), z, c(r), z, c(r), z);
    let jy = Matrix3::new(z, i(-r), z, i(r), z, i(-r), z, i(r), z);
    let jz = Matrix3::new(c(1.0), z, z, z, z, z, z, z, c(-1.0));
    [jx, jy, jz]
}

fn dot_j(v: &Vec3, j: &[Matrix3<Complex64>; 3]) -> Matrix3<Complex64> {
    j[0] * Complex64::new(v[0], 0.0) + j[1] * Complex64::new(v[1], 0.0) + j[2] * Complex64::new(v[2], 0.0)
}

/// `D (n.J)^2 + gamma B.J` in the lab |+1, 0, -1> basis.
pub fn single_nv_hamiltonian(p: &NVSpinParams, b: &Vec3) -> Matrix3<Complex64> {
    hamiltonian(p, b, &spin1_matrices())
}

fn hamiltonian(p: &NVSpinParams, b: &Vec3, j: &[Matrix3<Complex64>; 3]) -> Matrix3<Complex64> {
    let nj = dot_j(&p.native_axis, j);
    nj * nj * Complex64::new(p.zero_field_splitting, 0.0) + dot_j(b, j) * Complex64::new(p.gyromagnetic_ratio, 0.0)
}

fn inner(a: &Vector3<Complex64>, b: &Vector3<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DressedNV {
    pub params: NVSpinParams,
    pub field: FieldConfig,
    /// Energies of the 0~, -1~, +1~ levels, rad/us.
    pub energies: [f64; 3],
    /// States in the lab |+1, 0, -1> basis, same ordering as `energies`.
    pub states: [Vector3<Complex64>; 3],
}

const RAMP_STEPS: usize = 100;

/// Diagonalizes the single-NV Hamiltonian, tracking labels by ramping the
/// perpendicular field from zero.
pub fn dress(params: &NVSpinParams, field: &FieldConfig) -> Result<DressedNV> {
    params.validate()?;
    if field.b.iter().any(|x| !x.is_finite()) {
        return Err(invalid("field", "components must be finite"));
    }
    let j = spin1_matrices();
    let (b_par, b_perp) = field.decompose(&params.native_axis);
    if params.gyromagnetic_ratio * norm(&b_perp) >= params.zero_field_splitting {
        return Err(invalid("field", "perpendicular Zeeman energy must stay below D"));
    }

    // |m> along the NV axis: eigenvectors of n.J ordered 0, -1, +1.
    let nj = dot_j(&params.native_axis, &j);
    let eig = SymmetricEigen::new(nj);
    let mut states = [Vector3::zeros(); 3];
    for (k, &m) in eig.eigenvalues.iter().enumerate() {
        let slot = if m.abs() < 0.5 { 0 } else if m < 0.0 { 1 } else { 2 };
        states[slot] = eig.eigenvectors.column(k).into_owned();
    }

    let steps = if norm(&b_perp) == 0.0 { 0 } else { RAMP_STEPS };
    for k in 1..=steps {
        let f = k as f64 / steps as f64;
        let b: Vec3 = std::array::from_fn(|a| b_par * params.native_axis[a] + f * b_perp[a]);
        let eig = SymmetricEigen::new(hamiltonian(params, &b, &j));
        let cols: Vec<Vector3<Complex64>> = (0..3).map(|c| eig.eigenvectors.column(c).into_owned()).collect();
        let mut next = states;
        let mut taken = [false; 3];
        for (label, prev) in states.iter().enumerate() {
            let overlaps: Vec<f64> = cols.iter().map(|c| inner(prev, c).norm_sqr()).collect();
            let best = (0..3).max_by(|&a, &b| overlaps[a].total_cmp(&overlaps[b])).unwrap();
            if overlaps[best] <= 0.5 || taken[best] {
                return Err(Error::Degeneracy(format!(
                    "label {label} has overlap {:.3} at ramp step {k}",
                    overlaps[best]
                )));
            }
            taken[best] = true;
            let ov = inner(prev, &cols[best]);
            next[label] = cols[best] * (ov.conj() / ov.norm());
        }
        states = next;
    }

    let h = hamiltonian(params, &field.b, &j);
    let energies = std::array::from_fn(|k| inner(&states[k], &(h * states[k])).re);
    Ok(DressedNV { params: *params, field: *field, energies, states })
}

impl DressedNV {
    pub fn energy(&self, level: Level) -> f64 {
        self.energies[level.index()]
    }

    /// omega_q = E(0~) - E(-1~) in absolute value, rad/us.
    pub fn qubit_frequency(&self) -> f64 {
        (self.energy(Level::Zero) - self.energy(Level::Minus)).abs()
    }

    pub fn state(&self, level: Level) -> &Vector3<Complex64> {
        &self.states[level.index()]
    }

    /// <a|J|b> in the lab frame.
    pub fn matrix_element(&self, a: Level, b: Level) -> [Complex64; 3] {
        let j = spin1_matrices();
        let (va, vb) = (self.state(a), self.state(b));
        std::array::from_fn(|k| inner(va, &(j[k] * vb)))
    }

    /// <a|J|a>, real, lab frame.
    pub fn spin_expectation(&self, a: Level) -> Vec3 {
        let m = self.matrix_element(a, a);
        [m[0].re, m[1].re, m[2].re]
    }
}

/// Coefficients of the two-qubit Hamiltonian
/// `E0 + JZ1 s1z + JZ2 s2z + JZZ s1z s2z + JXY (s1x s2x + s1y s2y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCoupling {
    pub offset: f64,
    pub onsite: [f64; 2],
    pub zz: f64,
    pub xy: f64,
    pub flip_flop: [f64; 2],
    pub heis: f64,
    pub twist: f64,
}

/// Projects the dipolar interaction of two dressed NVs separated by `r` (nm,
/// lab frame) onto the {0~, -1~} qubits.
pub fn pair_coupling(d1: &DressedNV, d2: &DressedNV, r: &Vec3) -> Result<PairCoupling> {
    let rn = norm(r);
    if !(rn.is_finite() && rn > 0.0) {
        return Err(invalid("r", "separation must be finite and non-zero"));
    }
    let rhat = scale(r, 1.0 / rn);
    let pref = -d1.params.dipolar_coefficient / (rn * rn * rn);
    let rc = |v: &[Complex64; 3]| v[0] * rhat[0] + v[1] * rhat[1] + v[2] * rhat[2];
    let dotc = |a: &[Complex64; 3], b: &[Complex64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];

    // <a b| H |c d> = pref [3 (r.<a|J|c>)(r.<b|J|d>) - <a|J|c>.<b|J|d>]
    let elem = |a: Level, c: Level, b: Level, d: Level| {
        let m1 = d1.matrix_element(a, c);
        let m2 = d2.matrix_element(b, d);
        (rc(&m1) * rc(&m2) * 3.0 - dotc(&m1, &m2)) * pref
    };
    use Level::{Minus as M, Zero as Z};
    let d00 = elem(Z, Z, Z, Z).re;
    let d0m = elem(Z, Z, M, M).re;
    let dm0 = elem(M, M, Z, Z).re;
    let dmm = elem(M, M, M, M).re;
    let f = elem(Z, M, M, Z);

    let zz = (d00 - d0m - dm0 + dmm) / 4.0;
    let xy = f.re / 2.0;
    Ok(PairCoupling {
        offset: (d00 + d0m + dm0 + dmm) / 4.0,
        onsite: [(d00 + d0m - dm0 - dmm) / 4.0, (d00 - d0m + dm0 - dmm) / 4.0],
        zz,
        xy,
        flip_flop: [f.re, f.im],
        heis: xy,
        twist: zz - xy,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularSample {
    pub phi: f64,
    pub a_zz: f64,
    pub a_xy: f64,
    pub a_heis: f64,
}

impl AngularSample {
    pub fn a_twist(&self) -> f64 {
        self.a_zz - self.a_xy
    }
}

/// r^3-normalized couplings (rad/us nm^3) for in-plane directions
/// `phi = 2 pi k / n_angles` measured from the plane frame's `e1`.
pub fn angular_map(params: &NVSpinParams, field: &FieldConfig, n_angles: usize) -> Result<Vec<AngularSample>> {
    if n_angles == 0 {
        return Err(invalid("n_angles", "must be positive"));
    }
    let d = dress(params, field)?;
    let frame = params.plane_frame();
    (0..n_angles)
        .map(|k| {
            let phi = TWO_PI * k as f64 / n_angles as f64;
            let c = pair_coupling(&d, &d, &frame.in_plane(phi))?;
            Ok(AngularSample { phi, a_zz: c.zz, a_xy: c.xy, a_heis: c.heis })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuclearCouplingParams {
    /// rad/us per gauss.
    pub gamma_n: f64,
    /// rad/us.
    pub a_perp: f64,
    pub a_par: f64,
}

impl Default for NuclearCouplingParams {
    fn default() -> Self {
        Self { gamma_n: TWO_PI * 0.4316e-3, a_perp: TWO_PI * 3.65, a_par: TWO_PI * 3.03 }
    }
}

/// Effective host-nucleus Hamiltonian `a Sz Iz + b Sz Ix + c Iz + d Ix`
/// (qubit Pauli-z with eigenvalue +1 on 0~) and its precession.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuclearPrecession {
    pub params: NuclearCouplingParams,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// rad/us.
    pub omega: f64,
    /// us.
    pub period: f64,
}

pub fn nuclear_precession(
    params: &NVSpinParams,
    field: &FieldConfig,
    nuc: &NuclearCouplingParams,
) -> Result<NuclearPrecession> {
    let d = dress(params, field)?;
    let z = params.native_axis;
    let (_, b_perp) = field.decompose(&z);
    let x = normalize(&b_perp, 1e-12).unwrap_or_else(|| params.reference_transverse());
    let s0 = d.spin_expectation(Level::Zero);
    let s1 = d.spin_expectation(Level::Minus);
    let (z0, z1, x0, x1) = (dot(&s0, &z), dot(&s1, &z), dot(&s0, &x), dot(&s1, &x));
    let (bz, bx) = (dot(&field.b, &z), dot(&field.b, &x));
    let c = nuc.gamma_n * bz + nuc.a_par * (z0 + z1) / 2.0;
    let dd = nuc.gamma_n * bx + nuc.a_perp * (x0 + x1) / 2.0;
    let omega = c.hypot(dd);
    if omega == 0.0 {
        return Err(invalid("field", "nuclear precession frequency vanishes"));
    }
    Ok(NuclearPrecession {
        params: *nuc,
        a: nuc.a_par * (z0 - z1),
        b: nuc.a_perp * (x0 - x1),
        c,
        d: dd,
        omega,
        period: TWO_PI / omega,
    })
}
