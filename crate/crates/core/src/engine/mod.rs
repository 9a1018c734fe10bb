//! Time evolution: dense exact propagation for small systems and
//! cluster-DTWA trajectories for large ones.

pub mod dtwa;
pub mod exact;
pub mod noise;

use crate::ensemble::CouplingMatrix;
use crate::error::{invalid, Result};
use crate::floquet::EngineeredHamiltonian;
use crate::scalar::{cross, norm, normalize, Vec3};
use serde::{Deserialize, Serialize};

pub use noise::{NoiseCoupling, NoiseModel, OuProcess};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub axis: Vec3,
    pub polarization: f64,
}

impl InitialState {
    pub fn new(axis: Vec3, polarization: f64) -> Result<Self> {
        let s = Self { axis, polarization };
        s.validate()?;
        Ok(s)
    }

    pub fn plus_y(p: f64) -> Self {
        Self { axis: [0.0, 1.0, 0.0], polarization: p }
    }

    pub fn minus_y(p: f64) -> Self {
        Self { axis: [0.0, -1.0, 0.0], polarization: p }
    }

    pub fn validate(&self) -> Result<()> {
        if (norm(&self.axis) - 1.0).abs() > 1e-9 {
            return Err(invalid("polarization_axis", "must be a unit vector"));
        }
        if !(0.0..=1.0).contains(&self.polarization) {
            return Err(invalid("polarization", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Two unit vectors completing `axis` to a right-handed frame.
    pub fn transverse(&self) -> [Vec3; 2] {
        transverse_pair(&self.axis)
    }
}

pub(crate) fn transverse_pair(u: &Vec3) -> [Vec3; 2] {
    let trial = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let v = normalize(&cross(u, &trial), 1e-12).expect("non-degenerate");
    [v, cross(u, &v)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Segment {
    Evolve { h: EngineeredHamiltonian<f64>, duration: f64 },
    /// Global rotation of every spin about `axis` by `angle` (right-handed).
    Rotate { axis: Vec3, angle: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub segments: Vec<Segment>,
    /// Extra absolute sampling times, us.
    pub sample_times: Vec<f64>,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments, sample_times: Vec::new() }
    }

    pub fn sampled_every(mut self, dt: f64) -> Self {
        let total = self.duration();
        let n = (total / dt + 1e-9).floor() as usize;
        self.sample_times = (1..=n).map(|k| k as f64 * dt).collect();
        self
    }

    pub fn duration(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Evolve { duration, .. } => *duration,
                Segment::Rotate { .. } => 0.0,
            })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(crate::error::Error::EmptySchedule);
        }
        for s in &self.segments {
            match s {
                Segment::Evolve { h, duration } => {
                    if !(duration.is_finite() && *duration >= 0.0) {
                        return Err(invalid("duration", "must be finite and non-negative"));
                    }
                    if !(h.g.iter().all(|g| g.is_finite()) && h.scale.is_finite() && h.heis_scale.is_finite()) {
                        return Err(invalid("hamiltonian", "coefficients must be finite"));
                    }
                }
                Segment::Rotate { axis, angle } => {
                    if (norm(axis) - 1.0).abs() > 1e-9 || !angle.is_finite() {
                        return Err(invalid("rotation", "axis must be unit and angle finite"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Walks the schedule, calling `evolve(h, dt)`, `rotate(axis, angle)` and
    /// `sample(t)`; samples at t = 0, every segment end and `sample_times`.
    pub(crate) fn walk(
        &self,
        mut evolve: impl FnMut(&EngineeredHamiltonian<f64>, f64, usize),
        mut rotate: impl FnMut(&Vec3, f64),
        mut sample: impl FnMut(f64),
    ) {
        let mut extra = self.sample_times.clone();
        extra.sort_by(f64::total_cmp);
        let mut next = 0usize;
        let mut t = 0.0;
        sample(t);
        for (k, seg) in self.segments.iter().enumerate() {
            match seg {
                Segment::Rotate { axis, angle } => {
                    rotate(axis, *angle);
                    sample(t);
                }
                Segment::Evolve { h, duration } => {
                    let end = t + duration;
                    while next < extra.len() && extra[next] <= t + 1e-12 {
                        next += 1;
                    }
                    while next < extra.len() && extra[next] < end - 1e-12 {
                        evolve(h, extra[next] - t, k);
                        t = extra[next];
                        sample(t);
                        next += 1;
                    }
                    evolve(h, end - t, k);
                    t = end;
                    sample(t);
                }
            }
        }
    }
}

/// Per-bond Pauli coefficients `(G_x, G_y, G_z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bonds {
    pub n: usize,
    pub list: Vec<(usize, usize, [f64; 3])>,
}

impl Bonds {
    pub fn engineered(j: &CouplingMatrix, h: &EngineeredHamiltonian<f64>) -> Self {
        Self { n: j.n, list: j.iter_pairs().map(|(a, b, c)| (a, b, h.bond(c.heis, c.twist))).collect() }
    }

    pub fn new(n: usize, list: Vec<(usize, usize, [f64; 3])>) -> Self {
        Self { n, list }
    }

    pub fn max_abs(&self) -> f64 {
        self.list.iter().flat_map(|b| b.2).fold(0.0, |m, g| m.max(g.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReversalMode {
    /// Twist anisotropy negated, Heisenberg part kept.
    #[default]
    Anisotropy,
    /// `H -> -H`.
    Ideal,
}

pub fn reverse_segment(h: &EngineeredHamiltonian<f64>, mode: ReversalMode) -> EngineeredHamiltonian<f64> {
    match mode {
        ReversalMode::Anisotropy => h.reversed_anisotropy(),
        ReversalMode::Ideal => h.negated(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSeries {
    pub label: String,
    pub mean: Vec<Vec3>,
    pub stderr: Vec<Vec3>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub mean: Vec<Vec3>,
    pub stderr: Vec<Vec3>,
    pub groups: Vec<GroupSeries>,
    pub n_traj: usize,
    pub seed: u64,
}

/// Spin subsets whose average Bloch vectors are reported separately.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Groups {
    pub labels: Vec<String>,
    pub members: Vec<Vec<usize>>,
}

impl Groups {
    pub fn from_tertiles(report: &crate::ensemble::CoordinationReport) -> Self {
        Self {
            labels: vec!["low".into(), "mid".into(), "high".into()],
            members: (0..3).map(|g| report.members(g)).collect(),
        }
    }
}

/// Average Bloch vector over `spins` (all spins when `None`).
pub(crate) fn mean_of(s: &[Vec3], spins: Option<&[usize]>) -> Vec3 {
    let mut acc = [0.0; 3];
    let count = match spins {
        Some(idx) => {
            for &i in idx {
                for a in 0..3 {
                    acc[a] += s[i][a];
                }
            }
            idx.len()
        }
        None => {
            for v in s {
                for a in 0..3 {
                    acc[a] += v[a];
                }
            }
            s.len()
        }
    };
    let c = count.max(1) as f64;
    acc.map(|x| x / c)
}

/// Streaming mean/variance over trajectories, reduced in index order.
#[derive(Clone, Debug, Default)]
pub(crate) struct Accum {
    pub sum: Vec<Vec3>,
    pub sum2: Vec<Vec3>,
    pub weight: f64,
}

impl Accum {
    pub fn new(len: usize) -> Self {
        Self { sum: vec![[0.0; 3]; len], sum2: vec![[0.0; 3]; len], weight: 0.0 }
    }

    pub fn add(&mut self, xs: &[Vec3], w: f64) {
        for (k, x) in xs.iter().enumerate() {
            for a in 0..3 {
                self.sum[k][a] += w * x[a];
                self.sum2[k][a] += w * x[a] * x[a];
            }
        }
        self.weight += w;
    }

    /// `(mean, stderr)`; `n_eff` is the number of independent samples.
    pub fn finish(&self, n_eff: usize) -> (Vec<Vec3>, Vec<Vec3>) {
        let w = self.weight;
        let mut mean = Vec::with_capacity(self.sum.len());
        let mut err = Vec::with_capacity(self.sum.len());
        for (s, s2) in self.sum.iter().zip(&self.sum2) {
            let m = s.map(|x| x / w);
            let e: Vec3 = std::array::from_fn(|a| {
                if n_eff > 1 {
                    let var = (s2[a] / w - m[a] * m[a]).max(0.0) * n_eff as f64 / (n_eff as f64 - 1.0);
                    (var / n_eff as f64).sqrt()
                } else {
                    0.0
                }
            });
            mean.push(m);
            err.push(e);
        }
        (mean, err)
    }
}
