//! Cluster discrete truncated Wigner approximation.
//!
//! Each trajectory carries a classical Bloch vector per spin. Paired spins
//! also carry their 3x3 correlation block, so a pair is a full two-qubit
//! (pseudo) density matrix evolved exactly under its own bond and rotated by
//! the mean field of everything else.

use super::noise::{NoiseCoupling, NoiseModel, OuProcess, OuStep};
use super::{mean_of, transverse_pair, Accum, Bonds, GroupSeries, Groups, InitialState, ObservableSeries, Schedule, Segment};
use crate::ensemble::{Cluster, CouplingMatrix, DimerPairing};
use crate::error::{invalid, Error, Result};
use crate::floquet::{EngineeredHamiltonian, PulseSequence, TogglingFrame};
use crate::scalar::{mat_vec, rotation_matrix, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

type Mat3 = [[f64; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Random,
    /// Every discrete Wigner configuration once, with its exact weight.
    Enumerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtwaConfig {
    pub n_traj: usize,
    pub seed: u64,
    pub sampling: Sampling,
    /// Step <= 1 / (step_factor * L), L the largest per-spin sum of
    /// inter-cluster max_a |G_a|.
    pub step_factor: f64,
    /// us.
    pub max_dt: f64,
    /// Pair spins into exactly evolved clusters; otherwise plain DTWA.
    pub clustered: bool,
}

impl Default for DtwaConfig {
    fn default() -> Self {
        Self { n_traj: 256, seed: 1, sampling: Sampling::Random, step_factor: 50.0, max_dt: 0.02, clustered: true }
    }
}

impl DtwaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(invalid("n_traj", "must be at least 1"));
        }
        if self.n_traj as u64 > (1u64 << 53) {
            return Err(invalid("n_traj", "exceeds the accumulator's exact integer range"));
        }
        if !(self.step_factor > 0.0 && self.max_dt > 0.0) {
            return Err(invalid("step_factor", "step controls must be positive"));
        }
        Ok(())
    }
}

/// Which spins evolve together.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
    /// Index into `pairs` and position (0 or 1) within it.
    pub slot: Vec<Option<(usize, u8)>>,
}

impl Layout {
    pub fn new(n: usize, pairing: &DimerPairing) -> Self {
        let mut pairs = Vec::new();
        let mut slot = vec![None; n];
        for c in &pairing.clusters {
            if let Cluster::Pair(i, j) = *c {
                slot[i] = Some((pairs.len(), 0));
                slot[j] = Some((pairs.len(), 1));
                pairs.push((i, j));
            }
        }
        Self { n, pairs, slot }
    }

    pub fn singletons(n: usize) -> Self {
        Self { n, pairs: Vec::new(), slot: vec![None; n] }
    }

    fn same_cluster(&self, i: usize, j: usize) -> bool {
        matches!((self.slot[i], self.slot[j]), (Some((a, _)), Some((b, _))) if a == b)
    }
}

/// Pauli-string rotation table: for generator `s_a s_a`, entries
/// `(q, q', kappa)` over flattened 4x4 indices.
fn pauli_table() -> &'static [Vec<(usize, usize, f64)>; 3] {
    static TABLE: OnceLock<[Vec<(usize, usize, f64)>; 3]> = OnceLock::new();
    TABLE.get_or_init(|| {
        // sigma_a sigma_b = i^power sigma_c
        let mul = |a: usize, b: usize| -> (u32, usize) {
            if a == 0 {
                (0, b)
            } else if b == 0 {
                (0, a)
            } else if a == b {
                (0, 0)
            } else {
                let cyclic = matches!((a, b), (1, 2) | (2, 3) | (3, 1));
                (if cyclic { 1 } else { 3 }, 6 - a - b)
            }
        };
        std::array::from_fn(|k| {
            let a = k + 1;
            let mut out = Vec::new();
            for p in 0..4 {
                for q in 0..4 {
                    let (ph1, p2) = mul(a, p);
                    let (ph2, q2) = mul(a, q);
                    let power = (ph1 + ph2) % 4;
                    let (from, to) = (p * 4 + q, p2 * 4 + q2);
                    if power % 2 == 1 && from < to {
                        out.push((from, to, if power == 1 { 1.0 } else { -1.0 }));
                    }
                }
            }
            out
        })
    })
}

/// Exact two-qubit evolution `exp(-i t sum_a G_a s_a s_a)` on the Pauli
/// coefficients.
fn intra_evolve(si: &mut Vec3, sj: &mut Vec3, corr: &mut Mat3, g: &[f64; 3], t: f64) {
    let mut c = [0.0f64; 16];
    c[0] = 1.0;
    for a in 0..3 {
        c[(a + 1) * 4] = si[a];
        c[a + 1] = sj[a];
        for b in 0..3 {
            c[(a + 1) * 4 + b + 1] = corr[a][b];
        }
    }
    let table = pauli_table();
    for (k, entries) in table.iter().enumerate() {
        let theta = 2.0 * g[k] * t;
        if theta == 0.0 {
            continue;
        }
        let (s, co) = theta.sin_cos();
        for &(q, q2, kappa) in entries {
            let (x, y) = (c[q], c[q2]);
            c[q] = co * x - kappa * s * y;
            c[q2] = co * y + kappa * s * x;
        }
    }
    for a in 0..3 {
        si[a] = c[(a + 1) * 4];
        sj[a] = c[a + 1];
        for b in 0..3 {
            corr[a][b] = c[(a + 1) * 4 + b + 1];
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub s: Vec<Vec3>,
    pub corr: Vec<Mat3>,
    noise: Option<NoiseState>,
    /// Elapsed time, us, for the toggling-frame clock.
    pub t: f64,
    scratch_s: Vec<Vec3>,
    scratch_c: Vec<Mat3>,
    fields: Vec<Vec3>,
    extra: Vec<Vec3>,
}

#[derive(Clone, Debug)]
struct NoiseState {
    rng: ChaCha8Rng,
    /// Per spin, per axis (effective) or axis 0 only (toggled).
    x: Vec<Vec3>,
    static_z: Vec<f64>,
}

/// Noise inputs shared by all trajectories.
#[derive(Clone, Debug)]
pub struct NoiseEnv {
    pub model: NoiseModel,
    process: Option<OuProcess>,
    frame: Option<TogglingFrame<f64>>,
}

impl NoiseEnv {
    pub fn new(model: &NoiseModel) -> Result<Self> {
        model.validate()?;
        let process = if model.dynamical_active() { Some(model.process()?) } else { None };
        let frame = match (&model.coupling, &model.sequence_json, process.is_some()) {
            (NoiseCoupling::Toggled, Some(json), true) => Some(PulseSequence::<f64>::from_json(json)?.toggling_frame()?),
            (NoiseCoupling::Toggled, None, true) => {
                return Err(invalid("sequence_json", "toggled noise coupling needs a pulse sequence"))
            }
            _ => None,
        };
        Ok(Self { model: model.clone(), process, frame })
    }

    pub fn none() -> Self {
        Self { model: NoiseModel::ideal(), process: None, frame: None }
    }

    fn active(&self) -> bool {
        self.process.is_some() || self.model.static_disorder || self.model.t1_relaxation
    }

    /// Upper bound on the step imposed by the noise model.
    fn max_dt(&self) -> f64 {
        if self.frame.is_some() {
            0.0005
        } else {
            f64::INFINITY
        }
    }
}

const NOISE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub struct DtwaPropagator {
    n: usize,
    layout: Layout,
    mf: [Vec<f64>; 3],
    intra: Vec<[f64; 3]>,
    /// Frame weights for effective-coupled noise.
    weights: Vec3,
    pub dt_max: f64,
}

impl DtwaPropagator {
    pub fn new(bonds: &Bonds, layout: &Layout, h: &EngineeredHamiltonian<f64>, cfg: &DtwaConfig, env: &NoiseEnv) -> Self {
        let n = bonds.n;
        let mut mf = [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]];
        let mut intra = vec![[0.0; 3]; layout.pairs.len()];
        let mut load = vec![0.0f64; n];
        for &(i, j, g) in &bonds.list {
            if layout.same_cluster(i, j) {
                let (k, _) = layout.slot[i].expect("paired");
                intra[k] = g;
                continue;
            }
            let m = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            load[i] += m;
            load[j] += m;
            for a in 0..3 {
                mf[a][i * n + j] = g[a];
                mf[a][j * n + i] = g[a];
            }
        }
        let g_max = load.iter().cloned().fold(0.0, f64::max);
        let mut dt_max = if g_max > 0.0 { 1.0 / (cfg.step_factor * g_max) } else { f64::INFINITY };
        if env.active() {
            dt_max = dt_max.min(cfg.max_dt).min(env.max_dt());
        }
        let total: f64 = h.g.iter().map(|g| g.max(0.0)).sum();
        let weights = if total > 0.0 { h.g.map(|g| g.max(0.0) / total) } else { [0.0, 0.0, 1.0] };
        Self { n, layout: layout.clone(), mf, intra, weights, dt_max }
    }

    fn mean_field(&self, s: &[Vec3], extra: &[Vec3], out: &mut [Vec3]) {
        let n = self.n;
        for i in 0..n {
            let mut h = extra[i];
            for a in 0..3 {
                let row = &self.mf[a][i * n..(i + 1) * n];
                let mut acc = 0.0;
                for (m, sj) in row.iter().zip(s) {
                    acc += m * sj[a];
                }
                h[a] += acc;
            }
            out[i] = h;
        }
    }

    /// Half rotation, exact intra-cluster step, half rotation.
    fn substep(&self, s: &mut [Vec3], corr: &mut [Mat3], fields: &[Vec3], dt: f64) {
        let rots: Vec<Option<Mat3>> = fields
            .iter()
            .map(|h| {
                let m = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
                (m > 0.0).then(|| rotation_matrix(&h.map(|x| x / m), m * dt))
            })
            .collect();
        rotate_spins(s, corr, &self.layout, &rots);
        for (k, &(i, j)) in self.layout.pairs.iter().enumerate() {
            let (mut si, mut sj) = (s[i], s[j]);
            intra_evolve(&mut si, &mut sj, &mut corr[k], &self.intra[k], dt);
            s[i] = si;
            s[j] = sj;
        }
        rotate_spins(s, corr, &self.layout, &rots);
    }

    /// Advances `traj` by `duration` us.
    pub fn advance(&self, traj: &mut Trajectory, duration: f64, env: &NoiseEnv) {
        if duration <= 0.0 {
            return;
        }
        let steps = if self.dt_max.is_finite() { (duration / self.dt_max).ceil().max(1.0) as usize } else { 1 };
        let dt = duration / steps as f64;
        let ou: Option<OuStep> = env.process.map(|p| p.step_coefficients(dt));
        let relax = env.model.t1_relaxation.then(|| (-dt / (env.model.t1 * 1e3)).exp());
        for _ in 0..steps {
            self.noise_fields(traj, dt, ou.as_ref(), env);
            let Trajectory { s, corr, scratch_s, scratch_c, fields, extra, .. } = traj;
            self.mean_field(s, extra, fields);
            scratch_s.copy_from_slice(s);
            scratch_c.copy_from_slice(corr);
            self.substep(scratch_s, scratch_c, fields, dt / 2.0);
            self.mean_field(scratch_s, extra, fields);
            self.substep(s, corr, fields, dt);
            if let Some(r) = relax {
                for v in s.iter_mut() {
                    v[2] *= r;
                }
                for (k, &(i, j)) in self.layout.pairs.iter().enumerate() {
                    let _ = (i, j);
                    for b in 0..3 {
                        corr[k][2][b] *= r;
                        corr[k][b][2] *= r;
                    }
                }
            }
            traj.t += dt;
        }
    }

    fn noise_fields(&self, traj: &mut Trajectory, dt: f64, ou: Option<&OuStep>, env: &NoiseEnv) {
        let Some(ns) = traj.noise.as_mut() else { return };
        for (i, e) in traj.extra.iter_mut().enumerate() {
            *e = [0.0, 0.0, PI * ns.static_z.get(i).copied().unwrap_or(0.0)];
        }
        let Some(step) = ou else { return };
        match &env.frame {
            None => {
                for (i, x) in ns.x.iter_mut().enumerate() {
                    for a in 0..3 {
                        let w = self.weights[a].sqrt();
                        if w == 0.0 {
                            continue;
                        }
                        let integral = step.advance(&mut x[a], &mut ns.rng);
                        traj.extra[i][a] += PI * w * integral / dt;
                    }
                }
            }
            Some(frame) => {
                let v = frame.axis_at((traj.t + dt / 2.0) * 1e3);
                for (i, x) in ns.x.iter_mut().enumerate() {
                    let integral = step.advance(&mut x[0], &mut ns.rng);
                    for a in 0..3 {
                        traj.extra[i][a] += PI * v[a] * integral / dt;
                    }
                }
            }
        }
    }
}

fn rotate_spins(s: &mut [Vec3], corr: &mut [Mat3], layout: &Layout, rots: &[Option<Mat3>]) {
    for (i, r) in rots.iter().enumerate() {
        let Some(r) = r else { continue };
        s[i] = mat_vec(r, &s[i]);
        if let Some((k, pos)) = layout.slot[i] {
            let c = &mut corr[k];
            if pos == 0 {
                let old = *c;
                for a in 0..3 {
                    for b in 0..3 {
                        c[a][b] = r[a][0] * old[0][b] + r[a][1] * old[1][b] + r[a][2] * old[2][b];
                    }
                }
            } else {
                let old = *c;
                for a in 0..3 {
                    for b in 0..3 {
                        c[a][b] = old[a][0] * r[b][0] + old[a][1] * r[b][1] + old[a][2] * r[b][2];
                    }
                }
            }
        }
    }
}

impl Trajectory {
    /// Discrete-Wigner sample `index` of the product state. With `Random`
    /// sampling `index` selects the RNG substream.
    pub fn sample(
        layout: &Layout,
        init: &InitialState,
        sampling: Sampling,
        index: u64,
        seed: u64,
        env: &NoiseEnv,
    ) -> (Self, f64) {
        let n = layout.n;
        let [v, w] = transverse_pair(&init.axis);
        let u = init.axis;
        let p = init.polarization;
        let mut s = Vec::with_capacity(n);
        let mut weight = 1.0;
        match sampling {
            Sampling::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index);
                for _ in 0..n {
                    let l = if rng.random::<f64>() < (1.0 - p) / 2.0 { -1.0 } else { 1.0 };
                    let a = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let b = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    s.push(std::array::from_fn(|k| l * u[k] + a * v[k] + b * w[k]));
                }
            }
            Sampling::Enumerate => {
                let mut code = index;
                for _ in 0..n {
                    let digit = code % 8;
                    code /= 8;
                    let l = if digit & 4 != 0 { -1.0 } else { 1.0 };
                    let a = if digit & 1 != 0 { -1.0 } else { 1.0 };
                    let b = if digit & 2 != 0 { -1.0 } else { 1.0 };
                    weight *= 0.25 * if l > 0.0 { (1.0 + p) / 2.0 } else { (1.0 - p) / 2.0 };
                    s.push(std::array::from_fn(|k| l * u[k] + a * v[k] + b * w[k]));
                }
            }
        }
        let corr = layout
            .pairs
            .iter()
            .map(|&(i, j)| std::array::from_fn(|a| std::array::from_fn(|b| s[i][a] * s[j][b])))
            .collect();
        let noise = env.active().then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SALT);
            rng.set_stream(index);
            let x = (0..n)
                .map(|_| match env.process {
                    Some(p) => [p.stationary(&mut rng), p.stationary(&mut rng), p.stationary(&mut rng)],
                    None => [0.0; 3],
                })
                .collect();
            let static_z = if env.model.static_disorder && env.model.static_disorder_fwhm > 0.0 {
                let d = Normal::new(0.0, env.model.static_disorder_fwhm / crate::ensemble::FWHM_PER_SIGMA).expect("finite");
                (0..n).map(|_| d.sample(&mut rng)).collect()
            } else {
                Vec::new()
            };
            NoiseState { rng, x, static_z }
        });
        let traj = Self {
            scratch_s: s.clone(),
            scratch_c: vec![[[0.0; 3]; 3]; layout.pairs.len()],
            fields: vec![[0.0; 3]; n],
            extra: vec![[0.0; 3]; n],
            s,
            corr,
            noise,
            t: 0.0,
        };
        (traj, weight)
    }

    /// Rotates every spin about `axis` by `angle`.
    pub fn rotate_all(&mut self, layout: &Layout, axis: &Vec3, angle: f64) {
        let r = rotation_matrix(axis, angle);
        let rots = vec![Some(r); self.s.len()];
        rotate_spins(&mut self.s, &mut self.corr, layout, &rots);
    }

    pub fn mean(&self, spins: Option<&[usize]>) -> Vec3 {
        mean_of(&self.s, spins)
    }
}

/// Number of trajectories actually run, and whether sampling is weighted.
pub fn trajectory_count(n: usize, cfg: &DtwaConfig) -> Result<usize> {
    match cfg.sampling {
        Sampling::Random => Ok(cfg.n_traj),
        Sampling::Enumerate => {
            if n > 6 {
                return Err(Error::TooLarge { n, limit: 6, what: "enumerated Wigner sampling" });
            }
            Ok(8usize.pow(n as u32))
        }
    }
}

pub fn layout_for(j: &CouplingMatrix, pairing: Option<&DimerPairing>, cfg: &DtwaConfig) -> Layout {
    match (cfg.clustered, pairing) {
        (true, Some(p)) => Layout::new(j.n, p),
        _ => Layout::singletons(j.n),
    }
}

/// Cluster-DTWA along `schedule`.
pub fn dtwa_run(
    j: &CouplingMatrix,
    pairing: Option<&DimerPairing>,
    init: &InitialState,
    schedule: &Schedule,
    cfg: &DtwaConfig,
    noise: &NoiseModel,
    groups: &Groups,
) -> Result<ObservableSeries> {
    cfg.validate()?;
    init.validate()?;
    schedule.validate()?;
    let env = NoiseEnv::new(noise)?;
    let layout = layout_for(j, pairing, cfg);
    let props: Vec<Option<DtwaPropagator>> = schedule
        .segments
        .iter()
        .map(|seg| match seg {
            Segment::Evolve { h, .. } => Some(DtwaPropagator::new(&Bonds::engineered(j, h), &layout, h, cfg, &env)),
            Segment::Rotate { .. } => None,
        })
        .collect();
    let n_traj = trajectory_count(j.n, cfg)?;
    let n_groups = groups.members.len();

    let per_traj: Vec<(f64, Vec<Vec<Vec3>>)> = (0..n_traj as u64)
        .into_par_iter()
        .map(|k| {
            let (mut traj, w) = Trajectory::sample(&layout, init, cfg.sampling, k, cfg.seed, &env);
            let mut rec: Vec<Vec<Vec3>> = Vec::new();
            let cell = std::cell::RefCell::new(&mut traj);
            schedule.walk(
                |_, dt, seg| props[seg].as_ref().expect("evolve").advance(&mut cell.borrow_mut(), dt, &env),
                |axis, angle| cell.borrow_mut().rotate_all(&layout, axis, angle),
                |_| {
                    let t = cell.borrow();
                    let mut row = vec![t.mean(None)];
                    row.extend(groups.members.iter().map(|m| t.mean(Some(m))));
                    rec.push(row);
                },
            );
            (w, rec)
        })
        .collect();

    let mut times = Vec::new();
    schedule.walk(|_, _, _| {}, |_, _| {}, |t| times.push(t));
    let mut accs = vec![Accum::new(times.len()); n_groups + 1];
    for (w, rec) in &per_traj {
        for (g, acc) in accs.iter_mut().enumerate() {
            let xs: Vec<Vec3> = rec.iter().map(|row| row[g]).collect();
            acc.add(&xs, *w);
        }
    }
    let (mean, stderr) = accs[0].finish(n_traj);
    let groups_out = (0..n_groups)
        .map(|g| {
            let (m, e) = accs[g + 1].finish(n_traj);
            GroupSeries { label: groups.labels[g].clone(), mean: m, stderr: e }
        })
        .collect();
    Ok(ObservableSeries { times, mean, stderr, groups: groups_out, n_traj, seed: cfg.seed })
}
