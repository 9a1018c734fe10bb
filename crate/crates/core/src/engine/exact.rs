//! Dense state-vector propagation for up to 12 spins.
//!
//! Basis index bit `i` set means spin `i` is in the sigma_z = -1 state.

use super::{mean_of, Accum, Bonds, GroupSeries, Groups, InitialState, ObservableSeries, Schedule};
use crate::ensemble::CouplingMatrix;
use crate::error::{Error, Result};
use crate::scalar::{dot, Vec3};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const MAX_PURE_SPINS: usize = 12;
pub const MAX_MIXED_SPINS: usize = 8;
pub const MAX_SPECTRAL_SPINS: usize = 9;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub n: usize,
    pub amp: Vec<Complex64>,
}

/// Single-spin state with Bloch vector `u` (unit).
fn spinor(u: &Vec3) -> [Complex64; 2] {
    let theta = u[2].clamp(-1.0, 1.0).acos();
    let phi = u[1].atan2(u[0]);
    [Complex64::new((theta / 2.0).cos(), 0.0), Complex64::from_polar((theta / 2.0).sin(), phi)]
}

impl StateVector {
    pub fn product(dirs: &[Vec3]) -> Self {
        let n = dirs.len();
        let mut amp = vec![Complex64::new(1.0, 0.0)];
        for (i, u) in dirs.iter().enumerate() {
            let s = spinor(u);
            let mut next = vec![Complex64::new(0.0, 0.0); amp.len() * 2];
            for (k, a) in amp.iter().enumerate() {
                next[k] = a * s[0];
                next[k | (1 << i)] = a * s[1];
            }
            amp = next;
        }
        Self { n, amp }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amp.iter().zip(&other.amp).map(|(a, b)| a.conj() * b).sum()
    }

    /// Per-spin `<sigma>` (unnormalized states give unnormalized values).
    pub fn bloch(&self) -> Vec<Vec3> {
        (0..self.n)
            .map(|i| {
                let m = 1usize << i;
                let mut v = [0.0; 3];
                for k in 0..self.amp.len() {
                    if k & m != 0 {
                        continue;
                    }
                    let (a0, a1) = (self.amp[k], self.amp[k | m]);
                    let c = a0.conj() * a1;
                    v[0] += 2.0 * c.re;
                    v[1] += 2.0 * c.im;
                    v[2] += a0.norm_sqr() - a1.norm_sqr();
                }
                v
            })
            .collect()
    }

    /// `exp(-i phi n.sigma)` on spin `i`.
    pub fn apply_single(&mut self, i: usize, n: &Vec3, phi: f64) {
        let (s, c) = phi.sin_cos();
        let u00 = Complex64::new(c, -s * n[2]);
        let u11 = Complex64::new(c, s * n[2]);
        let u01 = -I * s * Complex64::new(n[0], -n[1]);
        let u10 = -I * s * Complex64::new(n[0], n[1]);
        let m = 1usize << i;
        for k in 0..self.amp.len() {
            if k & m != 0 {
                continue;
            }
            let (a0, a1) = (self.amp[k], self.amp[k | m]);
            self.amp[k] = u00 * a0 + u01 * a1;
            self.amp[k | m] = u10 * a0 + u11 * a1;
        }
    }

    /// Rotates every Bloch vector about `axis` by `angle`.
    pub fn rotate_all(&mut self, axis: &Vec3, angle: f64) {
        for i in 0..self.n {
            self.apply_single(i, axis, angle / 2.0);
        }
    }

    /// `exp(-i t (Gx XX + Gy YY + Gz ZZ))` on spins `i`, `j`.
    pub fn apply_bond(&mut self, i: usize, j: usize, g: &[f64; 3], t: f64) {
        let (mi, mj) = (1usize << i, 1usize << j);
        let both = mi | mj;
        let ph = Complex64::from_polar(1.0, -g[2] * t);
        let (sa, ca) = ((g[0] - g[1]) * t).sin_cos();
        let (sb, cb) = ((g[0] + g[1]) * t).sin_cos();
        let (p00, q00) = (ph * ca, ph * Complex64::new(0.0, -sa));
        let phc = ph.conj();
        let (p01, q01) = (phc * cb, phc * Complex64::new(0.0, -sb));
        for k in 0..self.amp.len() {
            if k & both != 0 {
                continue;
            }
            let (a, d) = (self.amp[k], self.amp[k | both]);
            self.amp[k] = p00 * a + q00 * d;
            self.amp[k | both] = q00 * a + p00 * d;
            let (b, c) = (self.amp[k | mj], self.amp[k | mi]);
            self.amp[k | mj] = p01 * b + q01 * c;
            self.amp[k | mi] = q01 * b + p01 * c;
        }
    }

    /// `sum_i coeff (n . sigma_i) |psi>`; not unitary.
    pub fn collective(&self, n: &Vec3, coeff: f64) -> Self {
        let mut out = vec![Complex64::new(0.0, 0.0); self.amp.len()];
        for i in 0..self.n {
            let m = 1usize << i;
            for k in 0..self.amp.len() {
                if k & m != 0 {
                    continue;
                }
                let (a0, a1) = (self.amp[k], self.amp[k | m]);
                let off_up = Complex64::new(n[0], -n[1]); // <0|n.s|1>
                let off_dn = Complex64::new(n[0], n[1]); // <1|n.s|0>
                out[k] += coeff * (n[2] * a0 + off_up * a1);
                out[k | m] += coeff * (off_dn * a0 - n[2] * a1);
            }
        }
        Self { n: self.n, amp: out }
    }

    /// `<self| sum_i coeff (n . sigma_i) |other>`.
    pub fn collective_element(&self, n: &Vec3, coeff: f64, other: &Self) -> Complex64 {
        self.inner(&other.collective(n, coeff))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Strang,
    #[default]
    Yoshida4,
    /// Full diagonalization; exact up to round-off.
    Spectral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactOptions {
    pub integrator: Integrator,
    /// Step = `step_factor / Lambda`, Lambda the largest per-spin coupling sum.
    pub step_factor: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { integrator: Integrator::Yoshida4, step_factor: 0.02 }
    }
}

enum Kind {
    Trotter { dt_max: f64, yoshida: bool },
    Spectral { v: DMatrix<Complex64>, e: DVector<f64> },
}

pub struct ExactPropagator {
    n: usize,
    bonds: Vec<(usize, usize, [f64; 3])>,
    fields: Vec<Vec3>,
    kind: Kind,
}

fn check_finite(bonds: &Bonds, fields: &[Vec3]) -> Result<()> {
    let ok = bonds.list.iter().all(|b| b.2.iter().all(|g| g.is_finite()))
        && fields.iter().all(|f| f.iter().all(|x| x.is_finite()));
    if ok {
        Ok(())
    } else {
        Err(crate::error::invalid("hamiltonian", "non-finite coefficient"))
    }
}

impl ExactPropagator {
    /// `fields[i]` adds `fields[i] . sigma_i` (may be empty).
    pub fn new(bonds: &Bonds, fields: &[Vec3], opts: &ExactOptions) -> Result<Self> {
        let n = bonds.n;
        if n > MAX_PURE_SPINS {
            return Err(Error::TooLarge { n, limit: MAX_PURE_SPINS, what: "exact engine" });
        }
        check_finite(bonds, fields)?;
        let fields: Vec<Vec3> = if fields.is_empty() { vec![[0.0; 3]; n] } else { fields.to_vec() };
        let kind = match opts.integrator {
            Integrator::Spectral => {
                if n > MAX_SPECTRAL_SPINS {
                    return Err(Error::TooLarge { n, limit: MAX_SPECTRAL_SPINS, what: "spectral integrator" });
                }
                let h = dense_hamiltonian(n, &bonds.list, &fields);
                let eig = SymmetricEigen::new(h);
                Kind::Spectral { v: eig.eigenvectors, e: eig.eigenvalues }
            }
            other => {
                let mut load = vec![0.0; n];
                for (i, j, g) in &bonds.list {
                    let s: f64 = g.iter().map(|x| x.abs()).sum();
                    load[*i] += s;
                    load[*j] += s;
                }
                for (i, f) in fields.iter().enumerate() {
                    load[i] += f.iter().map(|x| x.abs()).sum::<f64>();
                }
                let lambda = load.iter().cloned().fold(0.0, f64::max);
                let dt_max = if lambda > 0.0 { opts.step_factor / lambda } else { f64::INFINITY };
                Kind::Trotter { dt_max, yoshida: other == Integrator::Yoshida4 }
            }
        };
        Ok(Self { n, bonds: bonds.list.clone(), fields, kind })
    }

    pub fn step_size(&self) -> Option<f64> {
        match self.kind {
            Kind::Trotter { dt_max, .. } => Some(dt_max),
            Kind::Spectral { .. } => None,
        }
    }

    fn strang(&self, psi: &mut StateVector, dt: f64) {
        let h = dt / 2.0;
        for (i, f) in self.fields.iter().enumerate() {
            apply_field(psi, i, f, h);
        }
        for (i, j, g) in &self.bonds {
            psi.apply_bond(*i, *j, g, h);
        }
        for (i, j, g) in self.bonds.iter().rev() {
            psi.apply_bond(*i, *j, g, h);
        }
        for (i, f) in self.fields.iter().enumerate().rev() {
            apply_field(psi, i, f, h);
        }
    }

    /// Propagates by `t` (any sign).
    pub fn evolve(&self, psi: &mut StateVector, t: f64) {
        debug_assert_eq!(psi.n, self.n);
        if t == 0.0 {
            return;
        }
        match &self.kind {
            Kind::Spectral { v, e } => {
                let x = DVector::from_column_slice(&psi.amp);
                let mut c = v.ad_mul(&x);
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck *= Complex64::from_polar(1.0, -e[k] * t);
                }
                let y = v * c;
                psi.amp.copy_from_slice(y.as_slice());
            }
            Kind::Trotter { dt_max, yoshida } => {
                let steps = if dt_max.is_finite() { (t.abs() / dt_max).ceil().max(1.0) as usize } else { 1 };
                let dt = t / steps as f64;
                let n0 = psi.norm_sqr().sqrt();
                let w1 = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
                let w0 = 1.0 - 2.0 * w1;
                for _ in 0..steps {
                    if *yoshida {
                        self.strang(psi, w1 * dt);
                        self.strang(psi, w0 * dt);
                        self.strang(psi, w1 * dt);
                    } else {
                        self.strang(psi, dt);
                    }
                }
                // Repeating identical gates accumulates a systematic rounding bias in the norm.
                let n1 = psi.norm_sqr().sqrt();
                let inv = if n1 > 0.0 { n0 / n1 } else { 1.0 };
                psi.amp.iter_mut().for_each(|a| *a *= inv);
            }
        }
    }
}

fn apply_field(psi: &mut StateVector, i: usize, f: &Vec3, t: f64) {
    let mag = dot(f, f).sqrt();
    if mag > 0.0 {
        psi.apply_single(i, &f.map(|x| x / mag), mag * t);
    }
}

/// Dense Hamiltonian matrix in the computational basis.
pub fn dense_hamiltonian(n: usize, bonds: &[(usize, usize, [f64; 3])], fields: &[Vec3]) -> DMatrix<Complex64> {
    let dim = 1usize << n;
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    let z = |k: usize, i: usize| if k & (1 << i) == 0 { 1.0 } else { -1.0 };
    for k in 0..dim {
        for &(i, j, g) in bonds {
            let (zi, zj) = (z(k, i), z(k, j));
            h[(k, k)] += g[2] * zi * zj;
            let l = k ^ (1 << i) ^ (1 << j);
            // XX gives 1, YY gives -zi zj on the flipped pair.
            h[(l, k)] += Complex64::new(g[0] - g[1] * zi * zj, 0.0);
        }
        for (i, f) in fields.iter().enumerate() {
            let zi = z(k, i);
            h[(k, k)] += f[2] * zi;
            let l = k ^ (1 << i);
            // sigma_x + sigma_y: <l|.|k> = fx + i fy zi
            h[(l, k)] += Complex64::new(f[0], f[1] * zi);
        }
    }
    h
}

/// Weighted pure states representing a product of partially polarized spins.
pub fn initial_ensemble(n: usize, init: &InitialState) -> Result<Vec<(f64, StateVector)>> {
    init.validate()?;
    let p = init.polarization;
    if p == 1.0 {
        return Ok(vec![(1.0, StateVector::product(&vec![init.axis; n]))]);
    }
    if n > MAX_MIXED_SPINS {
        return Err(Error::TooLarge { n, limit: MAX_MIXED_SPINS, what: "mixed-state exact engine" });
    }
    let (up, dn) = ((1.0 + p) / 2.0, (1.0 - p) / 2.0);
    let neg = init.axis.map(|x| -x);
    let mut out = Vec::new();
    for pattern in 0..(1usize << n) {
        let flips = pattern.count_ones() as i32;
        let w = up.powi(n as i32 - flips) * dn.powi(flips);
        if w == 0.0 {
            continue;
        }
        let dirs: Vec<Vec3> = (0..n).map(|i| if pattern & (1 << i) != 0 { neg } else { init.axis }).collect();
        out.push((w, StateVector::product(&dirs)));
    }
    Ok(out)
}

/// Exact propagation of the engineered many-body Hamiltonian along `schedule`.
pub fn exact_evolve(
    j: &CouplingMatrix,
    init: &InitialState,
    schedule: &Schedule,
    opts: &ExactOptions,
    groups: &Groups,
) -> Result<ObservableSeries> {
    schedule.validate()?;
    let n = j.n;
    if n > MAX_PURE_SPINS {
        return Err(Error::TooLarge { n, limit: MAX_PURE_SPINS, what: "exact engine" });
    }
    let mut props: Vec<Option<ExactPropagator>> = Vec::new();
    for seg in &schedule.segments {
        props.push(match seg {
            super::Segment::Evolve { h, .. } => Some(ExactPropagator::new(&Bonds::engineered(j, h), &[], opts)?),
            super::Segment::Rotate { .. } => None,
        });
    }
    let mut states = initial_ensemble(n, init)?;
    let mut samples: Vec<Vec<Vec3>> = Vec::new(); // [time][spin]
    {
        let record = |states: &Vec<(f64, StateVector)>| {
            let mut acc = vec![[0.0; 3]; n];
            for (w, s) in states {
                for (i, b) in s.bloch().iter().enumerate() {
                    for a in 0..3 {
                        acc[i][a] += w * b[a];
                    }
                }
            }
            acc
        };
        let cell = std::cell::RefCell::new(&mut states);
        schedule.walk(
            |_, dt, k| {
                let p = props[k].as_ref().expect("evolve segment");
                for (_, s) in cell.borrow_mut().iter_mut() {
                    p.evolve(s, dt);
                }
            },
            |axis, angle| {
                for (_, s) in cell.borrow_mut().iter_mut() {
                    s.rotate_all(axis, angle);
                }
            },
            |_| samples.push(record(&cell.borrow())),
        );
    }
    let mut times = Vec::new();
    schedule.walk(|_, _, _| {}, |_, _| {}, |t| times.push(t));
    let series = |idx: Option<&[usize]>| -> Vec<Vec3> { samples.iter().map(|s| mean_of(s, idx)).collect() };
    let zeros = vec![[0.0; 3]; times.len()];
    let mut acc = Accum::new(times.len());
    acc.add(&series(None), 1.0);
    let (mean, _) = acc.finish(1);
    Ok(ObservableSeries {
        times,
        mean,
        stderr: zeros.clone(),
        groups: groups
            .labels
            .iter()
            .zip(&groups.members)
            .map(|(l, m)| GroupSeries { label: l.clone(), mean: series(Some(m)), stderr: zeros.clone() })
            .collect(),
        n_traj: 1,
        seed: 0,
    })
}
