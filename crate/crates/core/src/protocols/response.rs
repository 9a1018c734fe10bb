//! Linear response of the echo: commutator (Kubo) and finite-difference
//! susceptibilities, the mirror-symmetry certificate and XYZ rephasing peaks.

use super::plan::{Branch, Plan};
use super::{Backend, System};
use crate::dimer::dimer_spectrum;
use crate::engine::exact::{initial_ensemble, ExactOptions, ExactPropagator, Integrator, StateVector};
use crate::engine::{Bonds, InitialState};
use crate::ensemble::{Cluster, CouplingMatrix};
use crate::error::{invalid, Result};
use crate::floquet::EngineeredHamiltonian;
use crate::scalar::{norm, Vec3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    Commutator,
    FiniteDifference { delta_theta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SusceptibilityQuery {
    pub pole: Vec3,
    pub sensing: Vec3,
    pub measurement: Vec3,
    pub t_plus: f64,
    pub t_minus: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Susceptibility {
    pub value: f64,
    pub stderr: f64,
    /// Finite difference only: halving the angle moved the estimate by more than 1%.
    pub nonlinear: bool,
}

fn unit(name: &str, v: &Vec3) -> Result<()> {
    if (norm(v) - 1.0).abs() > 1e-9 {
        return Err(invalid(name, "must be a unit vector"));
    }
    Ok(())
}

/// `chi = d<M>/d(theta)` for a sensing rotation `exp(-i theta S)` applied after
/// the forward evolution, with `S = (1/2) sum s.sigma` and `M = (1/N) sum m.sigma`.
pub fn susceptibility(system: &System, q: &SusceptibilityQuery, mode: ResponseMode) -> Result<Susceptibility> {
    unit("pole", &q.pole)?;
    unit("sensing", &q.sensing)?;
    unit("measurement", &q.measurement)?;
    match mode {
        ResponseMode::Commutator => {
            let grid = susceptibility_grid(system, q, &[q.t_plus], &[q.t_minus])?;
            Ok(Susceptibility { value: grid.0[0][0], stderr: grid.1[0][0], nonlinear: false })
        }
        ResponseMode::FiniteDifference { delta_theta } => {
            if !(delta_theta > 0.0 && delta_theta.is_finite()) {
                return Err(invalid("delta_theta", "must be positive"));
            }
            let init = InitialState::new(q.pole, system.spec.polarization)?;
            let plan = Plan {
                inits: vec![init],
                branches: vec![[1.0, -1.0, 0.5, -0.5]
                    .iter()
                    .map(|&f| Branch { axis: q.sensing, angle: f * delta_theta })
                    .collect()],
                forward: system.forward(),
                backward: system.backward(),
                t_plus: vec![q.t_plus],
                t_minus: vec![vec![q.t_minus]],
                tertiles: false,
                readout: None,
            };
            let m = q.measurement;
            let reduce = move |_: usize, c: &[Vec3]| -> Vec<Vec3> {
                let proj = |v: &Vec3| v[0] * m[0] + v[1] * m[1] + v[2] * m[2];
                let full = (proj(&c[0]) - proj(&c[1])) / (2.0 * delta_theta);
                let half = (proj(&c[2]) - proj(&c[3])) / delta_theta;
                vec![[full, half, 0.0]]
            };
            let out = plan.run(system, &reduce)?;
            let e = &out.estimates[0];
            let (full, half) = (e.mean[0][0], e.mean[0][1]);
            let nonlinear = (full - half).abs() > 0.01 * half.abs().max(f64::MIN_POSITIVE);
            if nonlinear {
                log::warn!("susceptibility: delta_theta = {delta_theta} is outside the linear regime");
            }
            Ok(Susceptibility { value: full, stderr: e.stderr(0)[0], nonlinear })
        }
    }
}

/// Commutator-mode chi over `t_plus x t_minus`, averaged over configurations;
/// returns `(mean, stderr)` indexed `[t_plus][t_minus]`.
pub fn susceptibility_grid(
    system: &System,
    q: &SusceptibilityQuery,
    t_plus: &[f64],
    t_minus: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    unit("pole", &q.pole)?;
    unit("sensing", &q.sensing)?;
    unit("measurement", &q.measurement)?;
    if system.resolved_backend()? != Backend::Exact {
        return Err(invalid("backend", "commutator mode needs the exact engine"));
    }
    let init = InitialState::new(q.pole, system.spec.polarization)?;
    let fwd = system.forward();
    let bwd = system.backward();
    let per: Vec<Vec<Vec<f64>>> = system
        .realizations
        .par_iter()
        .map(|r| chi_exact(&r.couplings, &fwd, &bwd, &init, &q.sensing, &q.measurement, t_plus, t_minus, &system.spec.exact))
        .collect::<Result<_>>()?;
    let nc = per.len() as f64;
    let mut mean = vec![vec![0.0; t_minus.len()]; t_plus.len()];
    let mut err = mean.clone();
    for i in 0..t_plus.len() {
        for k in 0..t_minus.len() {
            let m = per.iter().map(|c| c[i][k]).sum::<f64>() / nc;
            mean[i][k] = m;
            if per.len() > 1 {
                let var = per.iter().map(|c| (c[i][k] - m).powi(2)).sum::<f64>() / (nc - 1.0);
                err[i][k] = (var / nc).sqrt();
            }
        }
    }
    Ok((mean, err))
}

/// `chi = 2 Im <U_b phi| M |U_b S phi>` with `phi = U_f psi`, summed over the
/// pure states of the initial ensemble.
#[allow(clippy::too_many_arguments)]
fn chi_exact(
    j: &CouplingMatrix,
    fwd: &EngineeredHamiltonian<f64>,
    bwd: &EngineeredHamiltonian<f64>,
    init: &InitialState,
    s: &Vec3,
    m: &Vec3,
    t_plus: &[f64],
    t_minus: &[f64],
    opts: &ExactOptions,
) -> Result<Vec<Vec<f64>>> {
    let n = j.n;
    let pf = ExactPropagator::new(&Bonds::engineered(j, fwd), &[], opts)?;
    let pb = ExactPropagator::new(&Bonds::engineered(j, bwd), &[], opts)?;
    let mut out = vec![vec![0.0; t_minus.len()]; t_plus.len()];
    for (w, psi0) in initial_ensemble(n, init)? {
        for (i, &tp) in t_plus.iter().enumerate() {
            let mut phi: StateVector = psi0.clone();
            pf.evolve(&mut phi, tp);
            let sphi = phi.collective(s, 0.5);
            for (k, &tm) in t_minus.iter().enumerate() {
                let (mut a, mut b) = (phi.clone(), sphi.clone());
                pb.evolve(&mut a, tm);
                pb.evolve(&mut b, tm);
                let z: Complex64 = a.collective_element(m, 1.0 / n as f64, &b);
                out[i][k] += w * 2.0 * z.im;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirrorCertificate {
    pub times: Vec<f64>,
    pub max_violation: f64,
    pub max_chi: f64,
    /// `max_violation / max_chi`.
    pub relative: f64,
}

/// Checks `chi(t+, t-) = chi(t- - t+, t-)` for S = (Z - X)/sqrt 2 and
/// M = (Z + X)/sqrt 2 on -Y under ideal reversal.
pub fn mirror_certificate(j: &CouplingMatrix, h: &EngineeredHamiltonian<f64>, times: &[f64]) -> Result<MirrorCertificate> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let s = [-r, 0.0, r];
    let m = [r, 0.0, r];
    let init = InitialState::minus_y(1.0);
    let opts = ExactOptions { integrator: Integrator::Spectral, ..ExactOptions::default() };
    let back = h.negated();
    let lhs = chi_exact(j, h, &back, &init, &s, &m, times, times, &opts)?;
    let mut max_violation: f64 = 0.0;
    let mut max_chi: f64 = 0.0;
    for (k, &tm) in times.iter().enumerate() {
        let mirrored: Vec<f64> = times.iter().map(|&tp| tm - tp).collect();
        let rhs = chi_exact(j, h, &back, &init, &s, &m, &mirrored, &[tm], &opts)?;
        for i in 0..times.len() {
            max_violation = max_violation.max((lhs[i][k] - rhs[i][0]).abs());
            max_chi = max_chi.max(lhs[i][k].abs());
        }
    }
    Ok(MirrorCertificate {
        times: times.to_vec(),
        max_violation,
        max_chi,
        relative: if max_chi > 0.0 { max_violation / max_chi } else { 0.0 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RephasingPeak {
    /// Closed-form t-/t+ ratio from the dimer spectrum.
    pub predicted: f64,
    /// Location of the disorder-averaged response maximum.
    pub measured: f64,
    pub t_minus: Vec<f64>,
    pub response: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XyzRephasing {
    pub t_plus: f64,
    pub n_dimers: usize,
    /// dX from a Z tilt.
    pub x: RephasingPeak,
    /// dZ from an X tilt.
    pub z: RephasingPeak,
}

/// Exact two-spin echoes on every paired dimer of the system under its
/// forward Hamiltonian with full reversal. The disorder-averaged dX/dZ
/// responses rephase where t-/t+ equals the spectral ratios.
pub fn xyz_rephasing(system: &System, t_plus: f64, t_minus: &[f64]) -> Result<XyzRephasing> {
    super::check_grid("t_minus", t_minus)?;
    let h = system.forward();
    let spectrum = dimer_spectrum(&h, 1.0);
    let (rx, rz) = match (spectrum.ratio_xz.value(), spectrum.ratio_zx.value()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(invalid("hamiltonian", "dimer ratios undefined for this Hamiltonian")),
    };
    let mut dimers = Vec::new();
    for r in &system.realizations {
        for c in &r.pairing.clusters {
            if let Cluster::Pair(a, b) = *c {
                dimers.push(*r.couplings.get(a, b));
            }
        }
    }
    if dimers.is_empty() {
        return Err(invalid("pairing", "no dimers to average"));
    }
    let opts = ExactOptions { integrator: Integrator::Spectral, ..ExactOptions::default() };
    let init = InitialState::minus_y(1.0);
    let back = h.negated();
    let (x_axis, z_axis) = ([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
    let per: Vec<(Vec<f64>, Vec<f64>)> = dimers
        .par_iter()
        .map(|c| {
            let j = CouplingMatrix::from_pairs(2, vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![*c])?;
            let dx = chi_exact(&j, &h, &back, &init, &z_axis, &x_axis, &[t_plus], t_minus, &opts)?;
            let dz = chi_exact(&j, &h, &back, &init, &x_axis, &z_axis, &[t_plus], t_minus, &opts)?;
            Ok((dx.into_iter().next().expect("one row"), dz.into_iter().next().expect("one row")))
        })
        .collect::<Result<_>>()?;
    let nd = per.len() as f64;
    let avg = |f: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>, sign: f64| -> Vec<f64> {
        (0..t_minus.len()).map(|k| sign * per.iter().map(|p| f(p)[k]).sum::<f64>() / nd).collect()
    };
    let resp_x = avg(&|p| &p.0, 1.0);
    // The Z response enters with a minus sign (-cos of the rephasing phase).
    let resp_z = avg(&|p| &p.1, -1.0);
    let peak = |resp: Vec<f64>, predicted: f64| {
        let k = (0..resp.len()).max_by(|&a, &b| resp[a].total_cmp(&resp[b])).expect("non-empty");
        RephasingPeak { predicted, measured: t_minus[k] / t_plus, t_minus: t_minus.to_vec(), response: resp }
    };
    Ok(XyzRephasing { t_plus, n_dimers: per.len(), x: peak(resp_x, rx), z: peak(resp_z, rz) })
}
