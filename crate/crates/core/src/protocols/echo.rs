//! Echo sweeps, pair-distance dynamics and revivals.

use super::plan::{Branch, Plan, PlanOutput};
use super::{amplifying_direction, check_grid, Backend, System};
use crate::engine::{reverse_segment, InitialState, ReversalMode};
use crate::error::{invalid, Result};
use crate::scalar::{cross, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairChoice {
    #[default]
    Amplifying,
    Deamplifying,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EchoConfig {
    /// us
    pub t_plus: Vec<f64>,
    /// us
    pub t_minus: Vec<f64>,
    pub delta_theta_deg: f64,
    pub pairs: PairChoice,
    /// Also resolve the three coordination tertiles.
    pub tertiles: bool,
    /// Global rotation of every state just before readout.
    pub readout: Option<ReadoutRotation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutRotation {
    pub axis: Vec3,
    pub angle_deg: f64,
}

pub const DEFAULT_T_PLUS: [f64; 6] = [0.0, 0.216, 0.432, 0.864, 1.296, 1.728];

impl Default for EchoConfig {
    fn default() -> Self {
        Self {
            t_plus: DEFAULT_T_PLUS.to_vec(),
            t_minus: (0..=20).map(|k| k as f64 * 0.216).collect(),
            delta_theta_deg: 15.0,
            pairs: PairChoice::Amplifying,
            tertiles: false,
            readout: None,
        }
    }
}

impl EchoConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid("t_plus", &self.t_plus)?;
        check_grid("t_minus", &self.t_minus)?;
        if !(self.delta_theta_deg > 0.0 && self.delta_theta_deg <= 90.0) {
            return Err(invalid("delta_theta_deg", "must lie in (0, 90]"));
        }
        if let Some(r) = &self.readout {
            if (crate::scalar::norm(&r.axis) - 1.0).abs() > 1e-9 || !r.angle_deg.is_finite() {
                return Err(invalid("readout", "axis must be unit and angle finite"));
            }
        }
        Ok(())
    }

    pub fn delta_theta(&self) -> f64 {
        self.delta_theta_deg.to_radians()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCell {
    pub d: f64,
    pub d_err: f64,
    pub a: f64,
    pub a_err: f64,
    /// Branch difference per pole (+Y, -Y).
    pub delta: [Vec3; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoCell {
    pub t_plus: f64,
    pub t_minus: f64,
    pub d: f64,
    pub d_err: f64,
    pub a: f64,
    pub a_err: f64,
    pub delta: [Vec3; 2],
    pub delta_err: [Vec3; 2],
    pub groups: Vec<GroupCell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationGrid {
    pub t_plus: Vec<f64>,
    pub t_minus: Vec<f64>,
    /// Row-major over (t_plus, t_minus).
    pub cells: Vec<EchoCell>,
    pub delta_theta: f64,
    pub polarization: f64,
    /// Non-interacting distance 2 p sin(delta_theta).
    pub d0: f64,
    pub group_labels: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub backend: Backend,
    pub n_samples: usize,
    pub seed: u64,
}

impl AmplificationGrid {
    pub fn at(&self, i: usize, k: usize) -> &EchoCell {
        &self.cells[i * self.t_minus.len() + k]
    }

    pub fn peak(&self) -> &EchoCell {
        self.cells.iter().max_by(|a, b| a.a.total_cmp(&b.a)).expect("non-empty grid")
    }

    /// Index of the best t_plus at fixed t_minus index `k`.
    pub fn argmax_t_plus(&self, k: usize) -> usize {
        (0..self.t_plus.len()).max_by(|&a, &b| self.at(a, k).a.total_cmp(&self.at(b, k).a)).expect("non-empty")
    }

    /// Peak amplification of group `g`, with its cell.
    pub fn group_peak(&self, g: usize) -> (&EchoCell, f64) {
        let c = self.cells.iter().max_by(|a, b| a.groups[g].a.total_cmp(&b.groups[g].a)).expect("non-empty");
        (c, c.groups[g].a)
    }

    /// Mean A on the cells nearest t_minus = 2 t_plus minus the mean over the
    /// remaining t_plus > 0 cells, for group `g` (`None` for all spins).
    pub fn ridge_contrast(&self, g: Option<usize>) -> (f64, f64) {
        let val = |c: &EchoCell| match g {
            Some(g) => (c.groups[g].a, c.groups[g].a_err),
            None => (c.a, c.a_err),
        };
        let (mut on, mut off) = (Vec::new(), Vec::new());
        for (i, &tp) in self.t_plus.iter().enumerate() {
            if tp <= 0.0 {
                continue;
            }
            let ridge = (0..self.t_minus.len())
                .min_by(|&a, &b| (self.t_minus[a] - 2.0 * tp).abs().total_cmp(&(self.t_minus[b] - 2.0 * tp).abs()))
                .expect("non-empty");
            for k in 0..self.t_minus.len() {
                if k == ridge {
                    on.push(val(self.at(i, k)));
                } else {
                    off.push(val(self.at(i, k)));
                }
            }
        }
        let stat = |v: &[(f64, f64)]| {
            let n = v.len().max(1) as f64;
            (v.iter().map(|x| x.0).sum::<f64>() / n, (v.iter().map(|x| x.1 * x.1).sum::<f64>()).sqrt() / n)
        };
        let (a, ea) = stat(&on);
        let (b, eb) = stat(&off);
        (a - b, ea.hypot(eb))
    }
}

/// Sensing axis that tilts the pole toward `u`.
fn sensing_axis(pole: f64, u: &Vec3) -> Vec3 {
    cross(&[0.0, pole, 0.0], u)
}

fn pair_direction(system: &System, h: &crate::floquet::EngineeredHamiltonian<f64>, pole: f64, pairs: PairChoice) -> Vec3 {
    let u = amplifying_direction(h, pole, system.orientation_sign);
    match pairs {
        PairChoice::Amplifying => u,
        PairChoice::Deamplifying => [u[0], 0.0, -u[2]],
    }
}

/// Cells of a general (t_plus, t_minus list) echo on both poles.
pub(crate) fn echo_cells(
    system: &System,
    backward: &crate::floquet::EngineeredHamiltonian<f64>,
    sensing: [Vec3; 2],
    delta_theta: f64,
    t_plus: &[f64],
    t_minus: &[Vec<f64>],
    tertiles: bool,
    readout: Option<[[f64; 3]; 3]>,
) -> Result<(Vec<EchoCell>, PlanOutput)> {
    let p = system.spec.polarization;
    let poles = [1.0, -1.0];
    let plan = Plan {
        inits: poles.iter().map(|&s| InitialState { axis: [0.0, s, 0.0], polarization: p }).collect(),
        branches: (0..2)
            .map(|k| {
                let axis = sensing_axis(poles[k], &sensing[k]);
                vec![Branch { axis, angle: delta_theta }, Branch { axis, angle: -delta_theta }]
            })
            .collect(),
        forward: system.forward(),
        backward: *backward,
        t_plus: t_plus.to_vec(),
        t_minus: t_minus.to_vec(),
        tertiles,
        readout,
    };
    let probe = plan.index(if tertiles { 4 } else { 1 });
    let reduce = move |_: usize, cells: &[[f64; 3]]| -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(cells.len() / 2);
        for (i, &len) in probe.lens.iter().enumerate() {
            for k in 0..len {
                for g in 0..probe.n_groups {
                    let a = cells[probe.at(i, 0, k, g)];
                    let b = cells[probe.at(i, 1, k, g)];
                    out.push([a[0] - b[0], a[1] - b[1], a[2] - b[2]]);
                }
            }
        }
        out
    };
    let output = plan.run(system, &reduce)?;
    let d0 = 2.0 * p * delta_theta.sin();
    let ng = output.index.n_groups;
    let mut cells = Vec::new();
    let mut flat = 0;
    for (i, &tp) in t_plus.iter().enumerate() {
        for &tm in &t_minus[i] {
            let cell_of = |g: usize| {
                let k = flat * ng + g;
                let (dp, ep) = output.estimates[0].norm(k);
                let (dm, em) = output.estimates[1].norm(k);
                let d = 0.5 * (dp + dm);
                let err = 0.5 * ep.hypot(em);
                let delta = [output.estimates[0].mean[k], output.estimates[1].mean[k]];
                let delta_err = [output.estimates[0].stderr(k), output.estimates[1].stderr(k)];
                (d, err, delta, delta_err)
            };
            let (d, d_err, delta, delta_err) = cell_of(0);
            let groups = (1..ng)
                .map(|g| {
                    let (d, e, delta, _) = cell_of(g);
                    GroupCell { d, d_err: e, a: d / d0 - 1.0, a_err: e / d0, delta }
                })
                .collect();
            cells.push(EchoCell {
                t_plus: tp,
                t_minus: tm,
                d,
                d_err,
                a: d / d0 - 1.0,
                a_err: d_err / d0,
                delta,
                delta_err,
                groups,
            });
            flat += 1;
        }
    }
    Ok((cells, output))
}

/// Asymmetric-echo amplification over the rectangular (t_plus, t_minus) grid.
pub fn echo_sweep(system: &System, cfg: &EchoConfig) -> Result<AmplificationGrid> {
    cfg.validate()?;
    let bwd = system.backward();
    let sensing = [pair_direction(system, &bwd, 1.0, cfg.pairs), pair_direction(system, &bwd, -1.0, cfg.pairs)];
    let t_minus = vec![cfg.t_minus.clone(); cfg.t_plus.len()];
    let readout = cfg.readout.map(|r| crate::scalar::rotation_matrix(&r.axis, r.angle_deg.to_radians()));
    let (cells, out) = echo_cells(system, &bwd, sensing, cfg.delta_theta(), &cfg.t_plus, &t_minus, cfg.tertiles, readout)?;
    Ok(grid_from(system, cfg, cells, &out))
}

pub(crate) fn grid_from(system: &System, cfg: &EchoConfig, cells: Vec<EchoCell>, out: &PlanOutput) -> AmplificationGrid {
    let p = system.spec.polarization;
    AmplificationGrid {
        t_plus: cfg.t_plus.clone(),
        t_minus: cfg.t_minus.clone(),
        cells,
        delta_theta: cfg.delta_theta(),
        polarization: p,
        d0: 2.0 * p * cfg.delta_theta().sin(),
        group_labels: out.group_labels.clone(),
        group_sizes: out.group_sizes.clone(),
        backend: out.backend,
        n_samples: out.n_samples,
        seed: system.spec.dtwa.seed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinationDecomposition {
    pub grid: AmplificationGrid,
    /// Largest |sum_g (n_g / N) delta_g - delta| over cells, poles and components.
    pub recombination_error: f64,
    /// Per tertile (low, mid, high): ridge contrast and its error.
    pub ridge_contrast: Vec<(f64, f64)>,
    pub peak: Vec<f64>,
}

pub fn coordination_decomposition(system: &System, cfg: &EchoConfig) -> Result<CoordinationDecomposition> {
    let cfg = EchoConfig { tertiles: true, ..cfg.clone() };
    let grid = echo_sweep(system, &cfg)?;
    let n: usize = grid.group_sizes.iter().sum();
    let mut err: f64 = 0.0;
    for c in &grid.cells {
        for pole in 0..2 {
            for a in 0..3 {
                let re: f64 = c
                    .groups
                    .iter()
                    .zip(&grid.group_sizes)
                    .map(|(g, &s)| g.delta[pole][a] * s as f64 / n as f64)
                    .sum();
                err = err.max((re - c.delta[pole][a]).abs());
            }
        }
    }
    let ridge_contrast = (0..3).map(|g| grid.ridge_contrast(Some(g))).collect();
    let peak = (0..3).map(|g| grid.group_peak(g).1).collect();
    Ok(CoordinationDecomposition { grid, recombination_error: err, ridge_contrast, peak })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TatDistanceConfig {
    /// us
    pub times: Vec<f64>,
    pub tilt_deg: f64,
}

impl Default for TatDistanceConfig {
    fn default() -> Self {
        Self { times: (0..=20).map(|k| k as f64 * 0.1).collect(), tilt_deg: 15.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TatPairSeries {
    pub label: String,
    pub pole: f64,
    pub amplifying: bool,
    pub d: Vec<f64>,
    pub d_err: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TatDistance {
    pub times: Vec<f64>,
    pub series: Vec<TatPairSeries>,
}

/// Distance between states tilted by +-tilt around each pole, evolving under
/// the forward Hamiltonian.
pub fn tat_distance(system: &System, cfg: &TatDistanceConfig) -> Result<TatDistance> {
    check_grid("times", &cfg.times)?;
    if !(cfg.tilt_deg > 0.0 && cfg.tilt_deg <= 90.0) {
        return Err(invalid("tilt_deg", "must lie in (0, 90]"));
    }
    let h = system.forward();
    let p = system.spec.polarization;
    let theta = cfg.tilt_deg.to_radians();
    let poles = [1.0, -1.0];
    let branches = poles
        .iter()
        .map(|&pole| {
            let amp = sensing_axis(pole, &pair_direction(system, &h, pole, PairChoice::Amplifying));
            let de = sensing_axis(pole, &pair_direction(system, &h, pole, PairChoice::Deamplifying));
            vec![
                Branch { axis: amp, angle: theta },
                Branch { axis: amp, angle: -theta },
                Branch { axis: de, angle: theta },
                Branch { axis: de, angle: -theta },
            ]
        })
        .collect();
    let plan = Plan {
        inits: poles.iter().map(|&s| InitialState { axis: [0.0, s, 0.0], polarization: p }).collect(),
        branches,
        forward: h,
        backward: h,
        t_plus: vec![0.0],
        t_minus: vec![cfg.times.clone()],
        tertiles: false,
        readout: None,
    };
    let nt = cfg.times.len();
    let reduce = move |_: usize, cells: &[[f64; 3]]| -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(2 * nt);
        for pair in 0..2 {
            for k in 0..nt {
                let a = cells[(2 * pair) * nt + k];
                let b = cells[(2 * pair + 1) * nt + k];
                out.push([a[0] - b[0], a[1] - b[1], a[2] - b[2]]);
            }
        }
        out
    };
    let out = plan.run(system, &reduce)?;
    let mut series = Vec::new();
    for (pi, &pole) in poles.iter().enumerate() {
        for (pair, amplifying) in [(0, true), (1, false)] {
            let (d, d_err): (Vec<f64>, Vec<f64>) = (0..nt).map(|k| out.estimates[pi].norm(pair * nt + k)).unzip();
            let label = format!("{}{}", if amplifying { "amp" } else { "deamp" }, if pole > 0.0 { "+Y" } else { "-Y" });
            series.push(TatPairSeries { label, pole, amplifying, d, d_err });
        }
    }
    Ok(TatDistance { times: cfg.times.clone(), series })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RevivalConfig {
    pub t_plus: Vec<f64>,
    pub t_minus: Vec<f64>,
    /// Overrides the reversal implied by the noise model.
    pub reversal: Option<ReversalMode>,
    /// +1 or -1: initial state along +-Y.
    pub pole: f64,
}

impl Default for RevivalConfig {
    fn default() -> Self {
        Self {
            t_plus: vec![0.0, 0.432, 0.864, 1.296],
            t_minus: (0..=15).map(|k| k as f64 * 0.108).collect(),
            reversal: None,
            pole: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub y_err: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevivalCurve {
    pub t_plus: f64,
    pub t_minus: Vec<f64>,
    pub y: Vec<f64>,
    pub y_err: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevivalResult {
    pub curves: Vec<RevivalCurve>,
    /// Forward evolution only, vs total time.
    pub forward_reference: Series,
    /// Backward Hamiltonian only, from t = 0.
    pub backward_reference: Series,
}

fn y_series(system: &System, plan: Plan) -> Result<Vec<(f64, f64)>> {
    let out = plan.run(system, &|_, c: &[[f64; 3]]| c.to_vec())?;
    let e = &out.estimates[0];
    Ok((0..e.mean.len()).map(|k| (e.mean[k][1], e.stderr(k)[1])).collect())
}

/// Forward evolution for t_plus, reversal, backward evolution for t_minus.
pub fn revival(system: &System, cfg: &RevivalConfig) -> Result<RevivalResult> {
    check_grid("t_plus", &cfg.t_plus)?;
    check_grid("t_minus", &cfg.t_minus)?;
    if cfg.pole.abs() != 1.0 {
        return Err(invalid("pole", "must be +1 or -1"));
    }
    let fwd = system.forward();
    let bwd = match cfg.reversal {
        Some(mode) => reverse_segment(&fwd, mode),
        None => system.backward(),
    };
    let init = InitialState { axis: [0.0, cfg.pole, 0.0], polarization: system.spec.polarization };
    let base = |backward, t_plus: Vec<f64>, t_minus: Vec<Vec<f64>>| Plan {
        inits: vec![init],
        branches: vec![vec![Branch::identity()]],
        forward: fwd,
        backward,
        t_plus,
        t_minus,
        tertiles: false,
        readout: None,
    };
    let ys = y_series(system, base(bwd, cfg.t_plus.clone(), vec![cfg.t_minus.clone(); cfg.t_plus.len()]))?;
    let nm = cfg.t_minus.len();
    let curves = cfg
        .t_plus
        .iter()
        .enumerate()
        .map(|(i, &tp)| RevivalCurve {
            t_plus: tp,
            t_minus: cfg.t_minus.clone(),
            y: ys[i * nm..(i + 1) * nm].iter().map(|v| v.0).collect(),
            y_err: ys[i * nm..(i + 1) * nm].iter().map(|v| v.1).collect(),
        })
        .collect();
    let mut totals: Vec<f64> = cfg.t_plus.iter().flat_map(|tp| cfg.t_minus.iter().map(move |tm| tp + tm)).collect();
    totals.sort_by(f64::total_cmp);
    totals.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let series = |ys: Vec<(f64, f64)>, t: Vec<f64>| Series { t, y: ys.iter().map(|v| v.0).collect(), y_err: ys.iter().map(|v| v.1).collect() };
    let f = y_series(system, base(fwd, vec![0.0], vec![totals.clone()]))?;
    let b = y_series(system, base(bwd, vec![0.0], vec![cfg.t_minus.clone()]))?;
    Ok(RevivalResult {
        curves,
        forward_reference: series(f, totals),
        backward_reference: series(b, cfg.t_minus.clone()),
    })
}
