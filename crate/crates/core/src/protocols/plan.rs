//! Branched forward/backward runs shared by every echo-type protocol.
//!
//! Each sample (trajectory, or pure state of an exact ensemble) evolves
//! forward through the sorted `t_plus` list. At each stop it is copied once per
//! branch, the branch rotation is applied, and the copy evolves under the
//! backward Hamiltonian through that stop's `t_minus` list, recording the
//! global and per-group mean Bloch vectors.

use super::{Backend, System};
use crate::engine::dtwa::{layout_for, trajectory_count, DtwaPropagator, NoiseEnv, Sampling, Trajectory};
use crate::engine::exact::{initial_ensemble, ExactPropagator, StateVector};
use crate::engine::{mean_of, Bonds, InitialState};
use crate::error::{invalid, Result};
use crate::floquet::EngineeredHamiltonian;
use crate::scalar::{mat_vec, Vec3};
use rayon::prelude::*;

pub(crate) type Mat3 = [[f64; 3]; 3];

#[derive(Clone, Copy, Debug)]
pub(crate) struct Branch {
    pub axis: Vec3,
    pub angle: f64,
}

impl Branch {
    pub fn identity() -> Self {
        Self { axis: [0.0, 0.0, 1.0], angle: 0.0 }
    }
}

pub(crate) struct Plan {
    pub inits: Vec<InitialState>,
    /// Same count for every init.
    pub branches: Vec<Vec<Branch>>,
    pub forward: EngineeredHamiltonian<f64>,
    pub backward: EngineeredHamiltonian<f64>,
    pub t_plus: Vec<f64>,
    pub t_minus: Vec<Vec<f64>>,
    pub tertiles: bool,
    /// Rotation applied to every recorded mean.
    pub readout: Option<Mat3>,
}

/// Flat index of recorded cells.
#[derive(Clone, Debug)]
pub(crate) struct CellIndex {
    offsets: Vec<usize>,
    pub lens: Vec<usize>,
    pub n_groups: usize,
    pub len: usize,
}

impl CellIndex {
    pub fn at(&self, i: usize, b: usize, k: usize, g: usize) -> usize {
        self.offsets[i] + (b * self.lens[i] + k) * self.n_groups + g
    }
}

/// Weighted sample mean of reduced vectors with the covariance of that mean.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub mean: Vec<Vec3>,
    pub cov: Vec<Mat3>,
    pub n_eff: usize,
}

impl Estimate {
    pub fn stderr(&self, k: usize) -> Vec3 {
        std::array::from_fn(|a| self.cov[k][a][a].max(0.0).sqrt())
    }

    /// `|mean_k|` and its delta-method standard error.
    pub fn norm(&self, k: usize) -> (f64, f64) {
        let m = self.mean[k];
        let d = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
        if d == 0.0 {
            let tr: f64 = (0..3).map(|a| self.cov[k][a][a]).sum();
            return (0.0, tr.max(0.0).sqrt());
        }
        let u = m.map(|x| x / d);
        let mut var = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                var += u[a] * self.cov[k][a][b] * u[b];
            }
        }
        (d, var.max(0.0).sqrt())
    }

    /// Projection onto `n` with its standard error.
    pub fn project(&self, k: usize, n: &Vec3) -> (f64, f64) {
        let m = self.mean[k];
        let mut var = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                var += n[a] * self.cov[k][a][b] * n[b];
            }
        }
        (m[0] * n[0] + m[1] * n[1] + m[2] * n[2], var.max(0.0).sqrt())
    }
}

struct Reducer {
    sum: Vec<Vec3>,
    sum2: Vec<Mat3>,
    weight: f64,
    count: usize,
}

impl Reducer {
    fn new(len: usize) -> Self {
        Self { sum: vec![[0.0; 3]; len], sum2: vec![[[0.0; 3]; 3]; len], weight: 0.0, count: 0 }
    }

    fn add(&mut self, w: f64, xs: &[Vec3]) {
        for (k, x) in xs.iter().enumerate() {
            for a in 0..3 {
                self.sum[k][a] += w * x[a];
                for b in 0..3 {
                    self.sum2[k][a][b] += w * x[a] * x[b];
                }
            }
        }
        self.weight += w;
        self.count += 1;
    }

    /// `exact_weights`: the samples are a complete weighted quadrature, so the
    /// mean carries no sampling error.
    fn finish(self, exact_weights: bool) -> Estimate {
        let (w, n) = (self.weight, self.count);
        let mean: Vec<Vec3> = self.sum.iter().map(|s| s.map(|x| x / w)).collect();
        let cov = mean
            .iter()
            .zip(&self.sum2)
            .map(|(m, s2)| {
                std::array::from_fn(|a| {
                    std::array::from_fn(|b| {
                        if exact_weights || n < 2 {
                            0.0
                        } else {
                            (s2[a][b] / w - m[a] * m[b]) / (n as f64 - 1.0)
                        }
                    })
                })
            })
            .collect();
        Estimate { mean, cov, n_eff: n }
    }
}

pub(crate) type Reduce<'a> = dyn Fn(usize, &[Vec3]) -> Vec<Vec3> + Sync + 'a;

pub(crate) struct PlanOutput {
    pub estimates: Vec<Estimate>,
    pub index: CellIndex,
    pub group_labels: Vec<String>,
    /// Spins per group, from the first configuration.
    pub group_sizes: Vec<usize>,
    pub backend: Backend,
    pub n_samples: usize,
}

impl Plan {
    fn validate(&self) -> Result<()> {
        super::check_grid("t_plus", &self.t_plus)?;
        if self.t_minus.len() != self.t_plus.len() {
            return Err(invalid("t_minus", "one list per t_plus value"));
        }
        for tm in &self.t_minus {
            super::check_grid("t_minus", tm)?;
        }
        if self.inits.is_empty() || self.branches.len() != self.inits.len() {
            return Err(invalid("branches", "one branch list per initial state"));
        }
        let nb = self.branches[0].len();
        if nb == 0 || self.branches.iter().any(|b| b.len() != nb) {
            return Err(invalid("branches", "every initial state needs the same nonzero branch count"));
        }
        for init in &self.inits {
            init.validate()?;
        }
        Ok(())
    }

    pub fn index(&self, n_groups: usize) -> CellIndex {
        let nb = self.branches[0].len();
        let mut offsets = Vec::with_capacity(self.t_plus.len());
        let mut len = 0;
        for tm in &self.t_minus {
            offsets.push(len);
            len += nb * tm.len() * n_groups;
        }
        CellIndex { offsets, lens: self.t_minus.iter().map(Vec::len).collect(), n_groups, len }
    }

    pub fn run(&self, system: &System, reduce: &Reduce) -> Result<PlanOutput> {
        self.validate()?;
        let groups: Vec<Vec<Vec<usize>>> = if self.tertiles {
            system
                .realizations
                .iter()
                .map(|r| {
                    let c = r.coordination.as_ref().ok_or_else(|| invalid("coordination", "undefined for this ensemble"))?;
                    Ok((0..3).map(|g| c.members(g)).collect())
                })
                .collect::<Result<_>>()?
        } else {
            vec![Vec::new(); system.realizations.len()]
        };
        let n_groups = 1 + groups[0].len();
        let index = self.index(n_groups);
        let group_labels =
            if self.tertiles { vec!["low".into(), "mid".into(), "high".into()] } else { Vec::new() };
        let group_sizes = groups[0].iter().map(Vec::len).collect();
        let backend = system.resolved_backend()?;
        let (estimates, n_samples) = match backend {
            Backend::Exact => self.run_exact(system, &groups, &index, reduce)?,
            _ => self.run_dtwa(system, &groups, &index, reduce)?,
        };
        Ok(PlanOutput { estimates, index, group_labels, group_sizes, backend, n_samples })
    }

    fn record(&self, cells: &mut [Vec3], at: usize, s: &[Vec3], groups: &[Vec<usize>], w: f64) {
        let mut put = |slot: usize, m: Vec3| {
            let m = match &self.readout {
                Some(r) => mat_vec(r, &m),
                None => m,
            };
            for a in 0..3 {
                cells[slot][a] += w * m[a];
            }
        };
        put(at, mean_of(s, None));
        for (g, members) in groups.iter().enumerate() {
            put(at + 1 + g, mean_of(s, Some(members)));
        }
    }

    fn run_dtwa(
        &self,
        system: &System,
        groups: &[Vec<Vec<usize>>],
        index: &CellIndex,
        reduce: &Reduce,
    ) -> Result<(Vec<Estimate>, usize)> {
        let cfg = &system.spec.dtwa;
        let env = NoiseEnv::new(&system.spec.noise)?;
        let n = system.n();
        let nc = system.realizations.len();
        let per_config = trajectory_count(n, cfg)?;
        let total = match cfg.sampling {
            Sampling::Random => per_config,
            Sampling::Enumerate => per_config * nc,
        };
        let fwd = &self.forward;
        let bwd = &self.backward;
        let engines: Vec<_> = system
            .realizations
            .iter()
            .map(|r| {
                let layout = layout_for(&r.couplings, Some(&r.pairing), cfg);
                let pf = DtwaPropagator::new(&Bonds::engineered(&r.couplings, fwd), &layout, fwd, cfg, &env);
                let pb = DtwaPropagator::new(&Bonds::engineered(&r.couplings, bwd), &layout, bwd, cfg, &env);
                (layout, pf, pb)
            })
            .collect();
        let n_inits = self.inits.len() as u64;
        let mut out = Vec::with_capacity(self.inits.len());
        for (ii, init) in self.inits.iter().enumerate() {
            let samples: Vec<(f64, Vec<Vec3>)> = (0..total as u64)
                .into_par_iter()
                .map(|k| {
                    let r = (k % nc as u64) as usize;
                    let idx = match cfg.sampling {
                        Sampling::Random => k * n_inits + ii as u64,
                        Sampling::Enumerate => k / nc as u64,
                    };
                    let (layout, pf, pb) = &engines[r];
                    let (mut traj, mut w) = Trajectory::sample(layout, init, cfg.sampling, idx, cfg.seed, &env);
                    if cfg.sampling == Sampling::Enumerate {
                        w /= nc as f64;
                    }
                    let mut cells = vec![[0.0; 3]; index.len];
                    let mut now = 0.0;
                    for (i, &tp) in self.t_plus.iter().enumerate() {
                        pf.advance(&mut traj, tp - now, &env);
                        now = tp;
                        for (b, br) in self.branches[ii].iter().enumerate() {
                            let mut c: Trajectory = traj.clone();
                            if br.angle != 0.0 {
                                c.rotate_all(layout, &br.axis, br.angle);
                            }
                            let mut back = 0.0;
                            for (kk, &tm) in self.t_minus[i].iter().enumerate() {
                                pb.advance(&mut c, tm - back, &env);
                                back = tm;
                                self.record(&mut cells, index.at(i, b, kk, 0), &c.s, &groups[r], 1.0);
                            }
                        }
                    }
                    (w, reduce(ii, &cells))
                })
                .collect();
            let mut acc = Reducer::new(samples.first().map_or(0, |s| s.1.len()));
            for (w, xs) in &samples {
                acc.add(*w, xs);
            }
            out.push(acc.finish(cfg.sampling == Sampling::Enumerate));
        }
        Ok((out, total))
    }

    fn run_exact(
        &self,
        system: &System,
        groups: &[Vec<Vec<usize>>],
        index: &CellIndex,
        reduce: &Reduce,
    ) -> Result<(Vec<Estimate>, usize)> {
        let opts = &system.spec.exact;
        let n = system.n();
        let props: Vec<(ExactPropagator, ExactPropagator)> = system
            .realizations
            .iter()
            .map(|r| {
                Ok((
                    ExactPropagator::new(&Bonds::engineered(&r.couplings, &self.forward), &[], opts)?,
                    ExactPropagator::new(&Bonds::engineered(&r.couplings, &self.backward), &[], opts)?,
                ))
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(self.inits.len());
        for (ii, init) in self.inits.iter().enumerate() {
            let ensemble = initial_ensemble(n, init)?;
            let jobs: Vec<(usize, usize)> =
                (0..props.len()).flat_map(|r| (0..ensemble.len()).map(move |m| (r, m))).collect();
            let parts: Vec<Vec<Vec3>> = jobs
                .par_iter()
                .map(|&(r, m)| {
                    let (pf, pb) = &props[r];
                    let (w, psi0) = &ensemble[m];
                    let mut psi: StateVector = psi0.clone();
                    let mut cells = vec![[0.0; 3]; index.len];
                    let mut now = 0.0;
                    for (i, &tp) in self.t_plus.iter().enumerate() {
                        pf.evolve(&mut psi, tp - now);
                        now = tp;
                        for (b, br) in self.branches[ii].iter().enumerate() {
                            let mut c = psi.clone();
                            if br.angle != 0.0 {
                                c.rotate_all(&br.axis, br.angle);
                            }
                            let mut back = 0.0;
                            for (kk, &tm) in self.t_minus[i].iter().enumerate() {
                                pb.evolve(&mut c, tm - back);
                                back = tm;
                                self.record(&mut cells, index.at(i, b, kk, 0), &c.bloch(), &groups[r], *w);
                            }
                        }
                    }
                    cells
                })
                .collect();
            let mut acc = Reducer::new(0);
            for r in 0..props.len() {
                let mut cells = vec![[0.0; 3]; index.len];
                for part in &parts[r * ensemble.len()..(r + 1) * ensemble.len()] {
                    for (c, p) in cells.iter_mut().zip(part) {
                        for a in 0..3 {
                            c[a] += p[a];
                        }
                    }
                }
                let xs = reduce(ii, &cells);
                if acc.sum.is_empty() {
                    acc = Reducer::new(xs.len());
                }
                acc.add(1.0, &xs);
            }
            out.push(acc.finish(false));
        }
        Ok((out, props.len()))
    }
}
