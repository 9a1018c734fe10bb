//! Pulse sequences, toggling-frame fractions and the engineered XYZ
//! Hamiltonian.

use crate::error::{invalid, Error, Result};
use crate::nvham::NuclearPrecession;
use crate::scalar::{mat_mul, mat_vec, rotation_matrix, Real, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PulseAxis {
    #[serde(rename = "+X")]
    PlusX,
    #[serde(rename = "-X")]
    MinusX,
    #[serde(rename = "+Y")]
    PlusY,
    #[serde(rename = "-Y")]
    MinusY,
}

impl PulseAxis {
    pub fn vector<T: Real>(self) -> Vec3<T> {
        let (o, z) = (T::one(), T::zero());
        match self {
            Self::PlusX => [o, z, z],
            Self::MinusX => [-o, z, z],
            Self::PlusY => [z, o, z],
            Self::MinusY => [z, -o, z],
        }
    }
}

/// Durations are in ns; rotations in radians. A zero-duration pulse is an
/// instantaneous rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SeqElement<T> {
    Pulse { axis: PulseAxis, rotation: T, duration: T },
    Wait { duration: T },
}

impl<T: Real> SeqElement<T> {
    pub fn duration(&self) -> T {
        match *self {
            Self::Pulse { duration, .. } | Self::Wait { duration } => duration,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PulseSequence<T> {
    pub elements: Vec<SeqElement<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum RawElement {
    Pulse { axis: PulseAxis, rotation_pi_units: f64, duration_ns: f64 },
    Wait { duration_ns: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    elements: Vec<RawElement>,
}

const PULSE_SUBSTEPS: usize = 256;

impl<T: Real> PulseSequence<T> {
    pub fn new(elements: Vec<SeqElement<T>>) -> Self {
        Self { elements }
    }

    pub fn period(&self) -> T {
        self.elements.iter().fold(T::zero(), |acc, e| acc + e.duration())
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::InvalidSequence("no elements".into()));
        }
        for (k, e) in self.elements.iter().enumerate() {
            let d = e.duration();
            if !(d.is_finite() && d >= T::zero()) {
                return Err(Error::InvalidSequence(format!("element {k} has duration {d}")));
            }
            if let SeqElement::Pulse { rotation, .. } = e {
                if !rotation.is_finite() {
                    return Err(Error::InvalidSequence(format!("element {k} has a non-finite rotation")));
                }
            }
        }
        if self.period() <= T::zero() {
            return Err(Error::InvalidSequence("zero total duration".into()));
        }
        Ok(())
    }

    fn push_wait(v: &mut Vec<SeqElement<T>>, d: T) {
        if d > T::zero() {
            v.push(SeqElement::Wait { duration: d });
        }
    }

    /// Pulses on the given axes, separated by `tau`, with `tau/2` at both
    /// ends of the period. Each pulse is `(axis, rotation, duration)`.
    pub fn uniform(pulses: &[(PulseAxis, T, T)], tau: T) -> Self {
        let half = tau / T::lit(2.0);
        let mut v = Vec::new();
        for (k, &(axis, rotation, duration)) in pulses.iter().enumerate() {
            Self::push_wait(&mut v, if k == 0 { half } else { tau });
            v.push(SeqElement::Pulse { axis, rotation, duration });
        }
        Self::push_wait(&mut v, half);
        Self { elements: v }
    }

    pub fn xy8(t_pi: T, tau: T) -> Self {
        use PulseAxis::*;
        let pi = T::PI();
        let axes = [PlusX, PlusY, PlusX, PlusY, PlusY, PlusX, PlusY, PlusX];
        Self::uniform(&axes.map(|a| (a, pi, t_pi)), tau)
    }

    /// XY16 with X pulses of `x_rotation` (in units of pi) lasting
    /// `x_rotation * t_pi_x`, and Y pi pulses lasting `t_pi_y`.
    pub fn xy16_with(x_rotation: T, t_pi_x: T, t_pi_y: T, tau: T) -> Self {
        use PulseAxis::*;
        let pi = T::PI();
        let axes = [
            PlusX, PlusY, PlusX, PlusY, PlusY, PlusX, PlusY, PlusX, MinusX, MinusY, MinusX, MinusY, MinusY, MinusX,
            MinusY, MinusX,
        ];
        let pulses = axes.map(|a| match a {
            PlusX | MinusX => (a, x_rotation * pi, x_rotation * t_pi_x),
            PlusY | MinusY => (a, pi, t_pi_y),
        });
        Self::uniform(&pulses, tau)
    }

    pub fn xy16(t_pi: T, tau: T) -> Self {
        Self::xy16_with(T::one(), t_pi, t_pi, tau)
    }

    /// XY16 whose X pulses are 3 pi rotations.
    pub fn xy16_3pi(t_pi: T, tau: T) -> Self {
        Self::xy16_with(T::lit(3.0), t_pi, t_pi, tau)
    }

    /// Four instantaneous pi/2 pulses cycling z -> y -> x with equal dwell.
    pub fn wahuha(tau: T) -> Self {
        use PulseAxis::*;
        let h = T::FRAC_PI_2();
        let z = T::zero();
        let two = T::lit(2.0);
        Self {
            elements: vec![
                SeqElement::Wait { duration: tau },
                SeqElement::Pulse { axis: PlusX, rotation: h, duration: z },
                SeqElement::Wait { duration: tau },
                SeqElement::Pulse { axis: MinusY, rotation: h, duration: z },
                SeqElement::Wait { duration: two * tau },
                SeqElement::Pulse { axis: PlusY, rotation: h, duration: z },
                SeqElement::Wait { duration: tau },
                SeqElement::Pulse { axis: MinusX, rotation: h, duration: z },
                SeqElement::Wait { duration: tau },
            ],
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let raw = RawSequence {
            elements: self
                .elements
                .iter()
                .map(|e| match *e {
                    SeqElement::Pulse { axis, rotation, duration } => RawElement::Pulse {
                        axis,
                        rotation_pi_units: rotation.as_f64() / std::f64::consts::PI,
                        duration_ns: duration.as_f64(),
                    },
                    SeqElement::Wait { duration } => RawElement::Wait { duration_ns: duration.as_f64() },
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: RawSequence = serde_json::from_str(s)?;
        let seq = Self {
            elements: raw
                .elements
                .into_iter()
                .map(|e| match e {
                    RawElement::Pulse { axis, rotation_pi_units, duration_ns } => SeqElement::Pulse {
                        axis,
                        rotation: T::lit(rotation_pi_units) * T::PI(),
                        duration: T::lit(duration_ns),
                    },
                    RawElement::Wait { duration_ns } => SeqElement::Wait { duration: T::lit(duration_ns) },
                })
                .collect(),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn toggling_frame(&self) -> Result<TogglingFrame<T>> {
        self.validate()?;
        let mut segments = Vec::with_capacity(self.elements.len());
        let mut m = crate::scalar::identity::<T>();
        let mut t = T::zero();
        for e in &self.elements {
            let rot = match *e {
                SeqElement::Pulse { axis, rotation, .. } => Some((axis.vector::<T>(), rotation)),
                SeqElement::Wait { .. } => None,
            };
            segments.push(FrameSegment { start: t, duration: e.duration(), before: m, rotation: rot });
            if let Some((a, theta)) = rot {
                m = mat_mul(&m, &rotation_matrix(&a, -theta));
            }
            t = t + e.duration();
        }
        Ok(TogglingFrame { segments, period: t, net: m })
    }
}

#[derive(Clone, Debug)]
struct FrameSegment<T> {
    start: T,
    duration: T,
    before: [[T; 3]; 3],
    rotation: Option<(Vec3<T>, T)>,
}

/// Toggling-frame image of the lab quantization axis over one period.
#[derive(Clone, Debug)]
pub struct TogglingFrame<T> {
    segments: Vec<FrameSegment<T>>,
    pub period: T,
    /// Net frame rotation after one period.
    pub net: [[T; 3]; 3],
}

impl<T: Real> TogglingFrame<T> {
    fn image(seg: &FrameSegment<T>, frac: T) -> Vec3<T> {
        let (o, z) = (T::one(), T::zero());
        let m = match seg.rotation {
            Some((a, theta)) => mat_mul(&seg.before, &rotation_matrix(&a, -theta * frac)),
            None => seg.before,
        };
        mat_vec(&m, &[z, z, o])
    }

    /// Image of z at time `t` (ns), periodic in the sequence period.
    pub fn axis_at(&self, t: T) -> Vec3<T> {
        let mut t = t % self.period;
        if t < T::zero() {
            t = t + self.period;
        }
        let k = self.segments.partition_point(|s| s.start + s.duration <= t).min(self.segments.len() - 1);
        let seg = &self.segments[k];
        let frac = if seg.duration > T::zero() { (t - seg.start) / seg.duration } else { T::one() };
        Self::image(seg, frac.min(T::one()))
    }

    pub fn is_cycle(&self, tol: T) -> bool {
        let id = crate::scalar::identity::<T>();
        (0..3).all(|i| (0..3).all(|j| (self.net[i][j] - id[i][j]).abs() <= tol))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameFractions<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    /// ns.
    pub period: T,
}

impl<T: Real> FrameFractions<T> {
    pub fn as_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }
}

/// Time-weighted squared projections of the toggling-frame z image.
pub fn frame_fractions<T: Real>(seq: &PulseSequence<T>) -> Result<FrameFractions<T>> {
    let frame = seq.toggling_frame()?;
    if !frame.is_cycle(T::lit(1e-6)) {
        log::warn!("pulse sequence does not close to the identity frame");
    }
    let mut acc = [T::zero(); 3];
    let nsub = T::lit(PULSE_SUBSTEPS as f64);
    for seg in &frame.segments {
        if seg.duration == T::zero() {
            continue;
        }
        let (count, w) = match seg.rotation {
            Some(_) => (PULSE_SUBSTEPS, seg.duration / nsub),
            None => (1, seg.duration),
        };
        for m in 0..count {
            let frac = (T::lit(m as f64) + T::lit(0.5)) / T::lit(count as f64);
            let v = TogglingFrame::image(seg, frac);
            for a in 0..3 {
                acc[a] = acc[a] + w * v[a] * v[a];
            }
        }
    }
    let p = frame.period;
    Ok(FrameFractions { x: acc[0] / p, y: acc[1] / p, z: acc[2] / p, period: p })
}

/// `scale * (heis_scale J_Heis s.s + J_Twist sum_a g_a s_a s_a)` per pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineeredHamiltonian<T> {
    pub scale: T,
    pub heis_scale: T,
    pub g: [T; 3],
    pub reversed: bool,
}

impl<T: Real> EngineeredHamiltonian<T> {
    pub fn from_g(g: [T; 3]) -> Self {
        Self { scale: T::one(), heis_scale: T::one(), g, reversed: false }
    }

    pub fn tat() -> Self {
        Self::from_g(tat_g())
    }

    /// `g_y = 1/3`: the anisotropy is `lambda (zz - xx)`.
    pub fn lambda(&self) -> Option<T> {
        let third = T::one() / T::lit(3.0);
        let tol = T::lit(1e-9);
        ((self.g[1] - third).abs() <= tol).then(|| self.g[2] - third)
    }

    /// Per-pair Pauli coefficients (G_x, G_y, G_z).
    pub fn bond(&self, j_heis: T, j_twist: T) -> [T; 3] {
        self.g.map(|g| self.scale * (self.heis_scale * j_heis + g * j_twist))
    }

    /// Reversal that negates the twist anisotropy: `g -> 2/3 - g`.
    pub fn reversed_anisotropy(&self) -> Self {
        let two_thirds = T::lit(2.0) / T::lit(3.0);
        Self { g: self.g.map(|g| two_thirds - g), reversed: !self.reversed, ..*self }
    }

    /// `H -> -H`.
    pub fn negated(&self) -> Self {
        Self { scale: -self.scale, reversed: !self.reversed, ..*self }
    }

    pub fn cast<U: Real>(&self) -> EngineeredHamiltonian<U> {
        EngineeredHamiltonian {
            scale: U::lit(self.scale.as_f64()),
            heis_scale: U::lit(self.heis_scale.as_f64()),
            g: self.g.map(|g| U::lit(g.as_f64())),
            reversed: self.reversed,
        }
    }
}

pub fn engineer<T: Real>(f: &FrameFractions<T>, reversed: bool) -> EngineeredHamiltonian<T> {
    let h = EngineeredHamiltonian::from_g(f.as_array());
    if reversed {
        h.reversed_anisotropy()
    } else {
        h
    }
}

pub fn tat_g<T: Real>() -> [T; 3] {
    let nine = T::lit(9.0);
    [T::one() / nine, T::lit(3.0) / nine, T::lit(5.0) / nine]
}

/// `(1/3 - 118 c, 1/3 - 20 c, 1/3 + 138 c)`; `c = 0` is the Heisenberg point.
pub fn xyz_g<T: Real>(c: T) -> [T; 3] {
    let third = T::one() / T::lit(3.0);
    [third - T::lit(118.0) * c, third - T::lit(20.0) * c, third + T::lit(138.0) * c]
}

pub fn xyz_paper_g<T: Real>() -> [T; 3] {
    xyz_g(T::one() / T::lit(576.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum XyzTarget {
    Tat,
    XyzPaper,
}

pub fn xyz_target<T: Real>(which: XyzTarget) -> EngineeredHamiltonian<T> {
    match which {
        XyzTarget::Tat => EngineeredHamiltonian::from_g(tat_g()),
        XyzTarget::XyzPaper => EngineeredHamiltonian::from_g(xyz_paper_g()),
    }
}

/// `(1/3 - eps, 1/3 - eps, 1/3 + 2 eps)`, `-1/6 <= eps <= 1/3`.
pub fn epsilon_family<T: Real>(eps: T) -> Result<FrameFractions<T>> {
    let third = T::one() / T::lit(3.0);
    if !(eps >= -T::one() / T::lit(6.0) && eps <= third) {
        return Err(invalid("epsilon", format!("{eps} outside [-1/6, 1/3]")));
    }
    Ok(FrameFractions { x: third - eps, y: third - eps, z: third + T::lit(2.0) * eps, period: T::one() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    /// Sequence period over the nuclear period.
    pub ratio: f64,
    /// Within 0.05 of a non-zero integer.
    pub flagged: bool,
    /// Closest `p/q` with `q <= 6`.
    pub nearest: (u32, u32),
}

pub fn nuclear_sync_check<T: Real>(seq: &PulseSequence<T>, nuc: &NuclearPrecession) -> Result<SyncReport> {
    seq.validate()?;
    let ratio = seq.period().as_f64() * 1e-3 / nuc.period;
    let r = ratio.round();
    let flagged = r >= 1.0 && (ratio - r).abs() <= 0.05;
    let mut nearest = (0u32, 1u32);
    let mut best = f64::INFINITY;
    for q in 1..=6u32 {
        let p = (ratio * q as f64).round().max(0.0);
        let e = (ratio - p / q as f64).abs();
        if e < best - 1e-12 {
            best = e;
            nearest = (p as u32, q);
        }
    }
    Ok(SyncReport { ratio, flagged, nearest })
}
