//! Self-check suite: analytic identities (fast) and engine cross-checks (full).

use crate::dimer::{amp_dimer_tat, chi_dimer, dimer_spectrum, golden_max};
use crate::engine::dtwa::{dtwa_run, DtwaConfig};
use crate::engine::exact::{exact_evolve, initial_ensemble, ExactOptions, ExactPropagator};
use crate::engine::{reverse_segment, Bonds, Groups, InitialState, NoiseModel, ReversalMode, Schedule, Segment};
use crate::ensemble::{build_couplings, dimer_pairing, sample_configuration, CouplingMatrix, GeometrySpec};
use crate::error::Result;
use crate::floquet::{engineer, frame_fractions, xyz_target, EngineeredHamiltonian, PulseSequence, XyzTarget};
use crate::nvham::{angular_map, nuclear_precession, CrystalOrientation, FieldConfig, NVSpinParams, NuclearCouplingParams, PairCoupling};
use crate::protocols::{
    mirror_certificate, susceptibility, xyz_rephasing, Backend, HamiltonianChoice, ResponseMode, SusceptibilityQuery, System,
    SystemSpec,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2, TAU};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    #[default]
    Fast,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub level: Level,
    pub measured: f64,
    pub expected: f64,
    /// Absolute unless `relative`.
    pub tolerance: f64,
    pub relative: bool,
    pub pass: bool,
}

impl Check {
    fn abs(name: &str, level: Level, measured: f64, expected: f64, tolerance: f64) -> Self {
        let pass = (measured - expected).abs() <= tolerance;
        Self { name: name.into(), level, measured, expected, tolerance, relative: false, pass }
    }

    fn rel(name: &str, level: Level, measured: f64, expected: f64, tolerance: f64) -> Self {
        let pass = (measured - expected).abs() <= tolerance * expected.abs();
        Self { name: name.into(), level, measured, expected, tolerance, relative: true, pass }
    }

    /// `measured <= bound`.
    fn below(name: &str, level: Level, measured: f64, bound: f64) -> Self {
        let pass = measured <= bound;
        Self { name: name.into(), level, measured, expected: 0.0, tolerance: bound, relative: false, pass }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub level: Level,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn run(level: Level) -> Result<Report> {
    let mut checks = fast()?;
    if level == Level::Full {
        checks.extend(full()?);
    }
    Ok(Report { level, checks })
}

fn pc(heis: f64, twist: f64) -> PairCoupling {
    PairCoupling { offset: 0.0, onsite: [0.0; 2], zz: 0.0, xy: 0.0, flip_flop: [0.0; 2], heis, twist }
}

fn disordered(n: usize, seed: u64) -> Result<CouplingMatrix> {
    let p = NVSpinParams::default();
    let spec = GeometrySpec { n_spins: n, mean_spacing: 12.0, seed, ..Default::default() };
    build_couplings(&sample_configuration(&spec)?, &p, &p.preset_field())
}

fn max_twist(j: &CouplingMatrix) -> f64 {
    j.iter_pairs().map(|(_, _, c)| c.twist.abs()).fold(0.0, f64::max)
}

fn fast() -> Result<Vec<Check>> {
    let l = Level::Fast;
    let mut out = Vec::new();

    let j = 1.3;
    let (_, sym) = golden_max(|t| amp_dimer_tat(j, t, t), 0.0, PI / (4.0 * j), 1e-12);
    let (_, asym) = golden_max(|t| amp_dimer_tat(j, t / 2.0, t), 0.0, PI / (2.0 * j), 1e-12);
    out.push(Check::abs("dimer symmetric maximum", l, sym, SQRT_2, 1e-9));
    out.push(Check::abs("dimer asymmetric maximum", l, asym, 2.0, 1e-9));

    // Closed-form dimer response against the exact two-spin engine.
    let (heis, twist) = (-0.4, 0.9);
    let pair = CouplingMatrix::from_pairs(2, vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![pc(heis, twist)])?;
    let spec = SystemSpec { backend: Backend::Exact, noise: NoiseModel::ideal(), ..SystemSpec::default() };
    let dimer = System::from_couplings(&spec, vec![pair])?;
    let sp = dimer_spectrum(&EngineeredHamiltonian::<f64>::tat(), twist);
    let (tp, tm) = (0.7, 1.9);
    let chi = chi_dimer(sp.omega_x, sp.omega_z, tp, tm);
    let q = SusceptibilityQuery { pole: [0.0, -1.0, 0.0], sensing: [0.0, 0.0, 1.0], measurement: [1.0, 0.0, 0.0], t_plus: tp, t_minus: tm };
    let fd = susceptibility(&dimer, &q, ResponseMode::FiniteDifference { delta_theta: 1e-4 })?;
    out.push(Check::abs("dimer chi vs two-spin finite difference", l, fd.value, chi[0][1], 1e-6));

    let p = NVSpinParams::with_orientation(CrystalOrientation::Engineered);
    let n = nuclear_precession(&p, &FieldConfig::new([143.0, 0.0, 877.0]), &NuclearCouplingParams::default())?;
    let mhz = |x: f64| x / TAU;
    out.push(Check::rel("nuclear a (MHz)", l, mhz(n.a), 1.837, 5e-3));
    out.push(Check::rel("nuclear b (MHz)", l, mhz(n.b), -4.258, 5e-3));
    out.push(Check::rel("nuclear c (MHz)", l, mhz(n.c), -1.132, 5e-3));
    // Quoted to two significant figures.
    out.push(Check::abs("nuclear d (MHz)", l, mhz(n.d), -0.076, 5e-4));
    out.push(Check::abs("nuclear period (ns)", l, n.period * 1e3, 881.0, 2.0));

    let f = frame_fractions(&PulseSequence::<f64>::xy16_3pi(12.0, 3.0))?;
    out.push(Check::abs("3pi XY16 f_x", l, f.x, 1.0 / 9.0, 1e-3));
    out.push(Check::abs("3pi XY16 f_y", l, f.y, 1.0 / 3.0, 1e-3));
    out.push(Check::abs("3pi XY16 f_z", l, f.z, 5.0 / 9.0, 1e-3));
    out.push(Check::abs("3pi XY16 lambda", l, engineer(&f, false).lambda().unwrap_or(f64::NAN), 2.0 / 9.0, 3e-3));

    let xyz = dimer_spectrum(&xyz_target::<f64>(XyzTarget::XyzPaper), 1.0);
    out.push(Check::abs("XYZ dimer ratio X", l, xyz.ratio_xz.value().unwrap_or(f64::NAN), 1.620, 5e-3));
    out.push(Check::abs("XYZ dimer ratio Z", l, xyz.ratio_zx.value().unwrap_or(f64::NAN), 2.612, 5e-3));

    let native = NVSpinParams::with_orientation(CrystalOrientation::Native);
    let tw: Vec<f64> = angular_map(&native, &native.preset_field(), 360)?.iter().map(|s| s.a_twist()).collect();
    let max = tw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mean = tw.iter().sum::<f64>() / tw.len() as f64;
    out.push(Check::below("native twist mean / max", l, mean.abs() / max, 1e-3));
    let tw: Vec<f64> = angular_map(&p, &p.preset_field(), 360)?.iter().map(|s| s.a_twist()).collect();
    let min = tw.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    out.push(Check::below("engineered twist is positive (-min)", l, -min, 0.0));
    let o111 = NVSpinParams::with_orientation(CrystalOrientation::Oriented111);
    let heis_max = angular_map(&o111, &o111.preset_field(), 72)?.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.a_heis));
    out.push(Check::below("(111) Heisenberg is negative (max)", l, heis_max, 0.0));

    // Conservation laws of the exact engine.
    let j = disordered(8, 3)?;
    let scale = max_twist(&j);
    let tat = EngineeredHamiltonian::<f64>::tat();
    let prop = ExactPropagator::new(&Bonds::engineered(&j, &tat), &[], &ExactOptions::default())?;
    let (_, mut psi) = initial_ensemble(8, &InitialState::new([0.6, 0.0, 0.8], 1.0)?)?.remove(0);
    let t = 5.0 / scale;
    prop.evolve(&mut psi, t);
    out.push(Check::below("norm drift per us", l, (psi.norm_sqr() - 1.0).abs() / t, 1e-12));

    let xxz = EngineeredHamiltonian::from_g([0.1, 0.1, 0.8]);
    let init = InitialState::new([0.6, 0.0, 0.8], 1.0)?;
    let sched = Schedule::new(vec![Segment::Evolve { h: xxz, duration: 4.0 / scale }]).sampled_every(0.5 / scale);
    let series = exact_evolve(&j, &init, &sched, &ExactOptions::default(), &Groups::default())?;
    let drift = series.mean.iter().map(|m| (m[2] - 0.8).abs()).fold(0.0, f64::max);
    out.push(Check::below("XXZ <Z> drift", l, drift, 1e-10));

    let sched = Schedule::new(vec![
        Segment::Evolve { h: tat, duration: 3.0 / scale },
        Segment::Evolve { h: reverse_segment(&tat, ReversalMode::Ideal), duration: 3.0 / scale },
    ]);
    let series = exact_evolve(&j, &InitialState::plus_y(1.0), &sched, &ExactOptions::default(), &Groups::default())?;
    let end = series.mean.last().copied().unwrap_or([f64::NAN; 3]);
    let err = end[0].abs().max((end[1] - 1.0).abs()).max(end[2].abs());
    out.push(Check::below("full-reversal revival error", l, err, 1e-9));
    Ok(out)
}

fn full() -> Result<Vec<Check>> {
    let l = Level::Full;
    let mut out = Vec::new();
    let times: Vec<f64> = (0..10).map(|k| k as f64 * 0.6).collect();
    for (name, h) in [
        ("mirror certificate TAT", EngineeredHamiltonian::<f64>::tat()),
        ("mirror certificate OAT", EngineeredHamiltonian::from_g([0.0, 0.0, 1.0])),
        ("mirror certificate XYZ", xyz_target(XyzTarget::XyzPaper)),
    ] {
        let c = mirror_certificate(&disordered(6, 11)?, &h, &times)?;
        out.push(Check::below(name, l, c.relative, 1e-6));
    }

    let j = disordered(6, 8)?;
    let h = EngineeredHamiltonian::<f64>::tat();
    let t = 1.0 / max_twist(&j);
    let sched = Schedule::new(vec![Segment::Evolve { h, duration: t }]).sampled_every(t / 5.0);
    let init = InitialState::plus_y(1.0);
    let ex = exact_evolve(&j, &init, &sched, &ExactOptions::default(), &Groups::default())?;
    let cfg = DtwaConfig { n_traj: 10_000, seed: 5, ..Default::default() };
    let dt = dtwa_run(&j, Some(&dimer_pairing(&j)), &init, &sched, &cfg, &NoiseModel::ideal(), &Groups::default())?;
    let dev = ex.mean.iter().zip(&dt.mean).flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs())).fold(0.0, f64::max);
    out.push(Check::below("cluster DTWA vs exact (N = 6)", l, dev, 0.02));

    let spec = SystemSpec {
        hamiltonian: HamiltonianChoice::XyzPaper,
        geometry: GeometrySpec { n_spins: 60, mean_spacing: 12.0, seed: 2, ..Default::default() },
        n_configs: 2,
        backend: Backend::Exact,
        noise: NoiseModel::ideal(),
        ..SystemSpec::default()
    };
    let tm: Vec<f64> = (0..=400).map(|k| k as f64 * 0.5).collect();
    let r = xyz_rephasing(&System::build(&spec)?, 60.0, &tm)?;
    out.push(Check::abs("XYZ rephasing peak X", l, r.x.measured, r.x.predicted, 0.05));
    out.push(Check::abs("XYZ rephasing peak Z", l, r.z.measured, r.z.predicted, 0.05));
    Ok(out)
}
