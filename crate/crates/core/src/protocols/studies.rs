//! Multi-run studies: OAT twisting, the imperfection ledger, the epsilon
//! sweep and the geometry-sampled dimer model.

use super::echo::{echo_cells, grid_from, EchoCell, EchoConfig};
use super::plan::{Branch, Plan};
use super::{check_grid, HamiltonianChoice, System, SystemSpec};
use crate::dimer::{disorder_average, DimerGrid};
use crate::engine::InitialState;
use crate::ensemble::GeometryMode;
use crate::error::{invalid, Result};
use crate::nvham::CrystalOrientation;
use crate::scalar::{norm, rotation_matrix, sub};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OatSignalConfig {
    /// Tilt from the equator (+Y) toward +Z.
    pub tilts_deg: Vec<f64>,
    /// us
    pub t: f64,
    /// Artificial rotation about Z applied before readout.
    pub global_rotation_deg: f64,
}

impl Default for OatSignalConfig {
    fn default() -> Self {
        Self { tilts_deg: (-6..=6).map(|k| k as f64 * 15.0).collect(), t: 1.0, global_rotation_deg: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OatSignal {
    pub tilts_deg: Vec<f64>,
    /// Antipodal average of <X>.
    pub signal: Vec<f64>,
    pub signal_err: Vec<f64>,
    /// <X> of the tilted state alone.
    pub single: Vec<f64>,
    pub single_err: Vec<f64>,
}

/// Twisting signal of each tilted state averaged with its antipode, after
/// evolving for `t` under the system's forward Hamiltonian.
pub fn oat_twisting_signal(system: &System, cfg: &OatSignalConfig) -> Result<OatSignal> {
    if cfg.tilts_deg.is_empty() || cfg.tilts_deg.iter().any(|a| !(a.abs() <= 90.0)) {
        return Err(invalid("tilts_deg", "tilts must lie in [-90, 90]"));
    }
    if !(cfg.t.is_finite() && cfg.t >= 0.0) {
        return Err(invalid("t", "must be non-negative"));
    }
    let p = system.spec.polarization;
    let mut inits = Vec::new();
    for &a in &cfg.tilts_deg {
        let (s, c) = a.to_radians().sin_cos();
        inits.push(InitialState { axis: [0.0, c, s], polarization: p });
        inits.push(InitialState { axis: [0.0, -c, -s], polarization: p });
    }
    let h = system.forward();
    let plan = Plan {
        branches: vec![vec![Branch::identity()]; inits.len()],
        inits,
        forward: h,
        backward: h,
        t_plus: vec![0.0],
        t_minus: vec![vec![cfg.t]],
        tertiles: false,
        readout: (cfg.global_rotation_deg != 0.0)
            .then(|| rotation_matrix(&[0.0, 0.0, 1.0], cfg.global_rotation_deg.to_radians())),
    };
    let out = plan.run(system, &|_, c| c.to_vec())?;
    let mut res = OatSignal {
        tilts_deg: cfg.tilts_deg.clone(),
        signal: Vec::new(),
        signal_err: Vec::new(),
        single: Vec::new(),
        single_err: Vec::new(),
    };
    for k in 0..cfg.tilts_deg.len() {
        let (a, b) = (&out.estimates[2 * k], &out.estimates[2 * k + 1]);
        let (ea, eb) = (a.stderr(0)[0], b.stderr(0)[0]);
        res.signal.push(0.5 * (a.mean[0][0] + b.mean[0][0]));
        res.signal_err.push(0.5 * ea.hypot(eb));
        res.single.push(a.mean[0][0]);
        res.single_err.push(ea);
    }
    Ok(res)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerScenario {
    pub label: String,
    pub dynamical_disorder: bool,
    pub polarization_deficit: bool,
    pub imperfect_reversal: bool,
    pub positional_disorder: bool,
    pub delta_theta_deg: Option<f64>,
    pub n_spins: Option<usize>,
    pub n_traj: Option<usize>,
    pub n_configs: Option<usize>,
    pub t_plus: Option<Vec<f64>>,
    pub t_minus: Option<Vec<f64>>,
}

impl Default for LedgerScenario {
    fn default() -> Self {
        Self {
            label: "full".into(),
            dynamical_disorder: true,
            polarization_deficit: true,
            imperfect_reversal: true,
            positional_disorder: true,
            delta_theta_deg: None,
            n_spins: None,
            n_traj: None,
            n_configs: None,
            t_plus: None,
            t_minus: None,
        }
    }
}

impl LedgerScenario {
    /// Imperfections removed one by one, then smaller sensing angles.
    pub fn paper_rows() -> Vec<Self> {
        let full = Self::default();
        let no_noise = Self { label: "no dynamical disorder".into(), dynamical_disorder: false, ..full.clone() };
        let pure = Self { label: "full polarization".into(), polarization_deficit: false, ..no_noise.clone() };
        let ideal = Self { label: "ideal reversal".into(), imperfect_reversal: false, ..pure.clone() };
        let small = Self { label: "ideal, 5 deg".into(), delta_theta_deg: Some(5.0), ..ideal.clone() };
        let lattice = Self {
            label: "lattice, 1 deg".into(),
            positional_disorder: false,
            delta_theta_deg: Some(1.0),
            ..ideal.clone()
        };
        vec![full, no_noise, pure, ideal, small, lattice]
    }

    fn apply(&self, base: &SystemSpec, echo: &EchoConfig) -> (SystemSpec, EchoConfig) {
        let mut spec = base.clone();
        if !self.polarization_deficit {
            spec.polarization = 1.0;
        }
        spec.noise.dynamical_disorder = self.dynamical_disorder;
        spec.noise.heisenberg_unreversed = self.imperfect_reversal;
        spec.geometry.mode = if self.positional_disorder { GeometryMode::Disordered2d } else { GeometryMode::Lattice2d };
        if let Some(n) = self.n_spins {
            spec.geometry.n_spins = n;
        }
        if let Some(n) = self.n_traj {
            spec.dtwa.n_traj = n;
        }
        if let Some(n) = self.n_configs {
            spec.n_configs = n;
        }
        let mut cfg = echo.clone();
        if let Some(d) = self.delta_theta_deg {
            cfg.delta_theta_deg = d;
        }
        if let Some(t) = &self.t_plus {
            cfg.t_plus = t.clone();
        }
        if let Some(t) = &self.t_minus {
            cfg.t_minus = t.clone();
        }
        (spec, cfg)
    }
}

/// Non-echo (t+ = 0), symmetric (t+ = t-) and asymmetric (t+ = t-/2) cuts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCurves {
    pub t_minus: Vec<f64>,
    pub non_echo: Vec<f64>,
    pub non_echo_err: Vec<f64>,
    pub symmetric: Vec<f64>,
    pub symmetric_err: Vec<f64>,
    pub asymmetric: Vec<f64>,
    pub asymmetric_err: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub scenario: LedgerScenario,
    pub peak_a: f64,
    pub peak_err: f64,
    pub peak_t_plus: f64,
    pub peak_t_minus: f64,
    pub grid: super::AmplificationGrid,
    pub curves: ComparisonCurves,
}

const TIME_TOL: f64 = 1e-9;

fn insert_time(v: &mut Vec<f64>, t: f64) {
    if !v.iter().any(|x| (x - t).abs() < TIME_TOL) {
        v.push(t);
    }
}

/// Peak amplification and comparison curves for each scenario, in order.
pub fn imperfection_ledger(base: &SystemSpec, echo: &EchoConfig, scenarios: &[LedgerScenario]) -> Result<Vec<LedgerRow>> {
    for (i, s) in scenarios.iter().enumerate() {
        if scenarios[..i].iter().any(|o| o.label == s.label) {
            return Err(invalid("label", format!("duplicate ledger label `{}`", s.label)));
        }
    }
    let mut rows = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        let (spec, cfg) = sc.apply(base, echo);
        cfg.validate()?;
        let system = System::build(&spec)?;
        log::info!("ledger: running `{}` ({} spins)", sc.label, system.n());
        let curve_t: Vec<f64> = cfg.t_minus.iter().cloned().filter(|&t| t > 0.0).collect();
        // Union of grid and curve cells in one branched run.
        let mut stops: Vec<(f64, Vec<f64>)> = cfg.t_plus.iter().map(|&tp| (tp, cfg.t_minus.clone())).collect();
        let mut need = |tp: f64, tm: f64| match stops.iter_mut().find(|s| (s.0 - tp).abs() < TIME_TOL) {
            Some(s) => insert_time(&mut s.1, tm),
            None => stops.push((tp, vec![tm])),
        };
        for &t in &curve_t {
            need(0.0, t);
            need(t, t);
            need(0.5 * t, t);
        }
        stops.sort_by(|a, b| a.0.total_cmp(&b.0));
        for s in &mut stops {
            s.1.sort_by(f64::total_cmp);
        }
        let t_plus: Vec<f64> = stops.iter().map(|s| s.0).collect();
        let t_minus: Vec<Vec<f64>> = stops.iter().map(|s| s.1.clone()).collect();
        let bwd = system.backward();
        let sensing = [
            super::amplifying_direction(&bwd, 1.0, system.orientation_sign),
            super::amplifying_direction(&bwd, -1.0, system.orientation_sign),
        ];
        let (cells, out) = echo_cells(&system, &bwd, sensing, cfg.delta_theta(), &t_plus, &t_minus, false, None)?;
        let find = |tp: f64, tm: f64| -> &EchoCell {
            cells
                .iter()
                .find(|c| (c.t_plus - tp).abs() < TIME_TOL && (c.t_minus - tm).abs() < TIME_TOL)
                .expect("cell was scheduled")
        };
        let grid_cells: Vec<EchoCell> =
            cfg.t_plus.iter().flat_map(|&tp| cfg.t_minus.iter().map(move |&tm| (tp, tm))).map(|(tp, tm)| find(tp, tm).clone()).collect();
        let mut curves = ComparisonCurves {
            t_minus: curve_t.clone(),
            non_echo: Vec::new(),
            non_echo_err: Vec::new(),
            symmetric: Vec::new(),
            symmetric_err: Vec::new(),
            asymmetric: Vec::new(),
            asymmetric_err: Vec::new(),
        };
        for &t in &curve_t {
            let (n, s, a) = (find(0.0, t), find(t, t), find(0.5 * t, t));
            curves.non_echo.push(n.a);
            curves.non_echo_err.push(n.a_err);
            curves.symmetric.push(s.a);
            curves.symmetric_err.push(s.a_err);
            curves.asymmetric.push(a.a);
            curves.asymmetric_err.push(a.a_err);
        }
        let grid = grid_from(&system, &cfg, grid_cells, &out);
        let peak = grid.peak().clone();
        rows.push(LedgerRow {
            scenario: sc.clone(),
            peak_a: peak.a,
            peak_err: peak.a_err,
            peak_t_plus: peak.t_plus,
            peak_t_minus: peak.t_minus,
            grid,
            curves,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSweepConfig {
    pub epsilons: Vec<f64>,
    /// Times in units where the twist anisotropy 3 eps is one; t = tau / (3 eps).
    pub rescaled_times: Vec<f64>,
    pub delta_theta_deg: f64,
}

impl Default for EpsilonSweepConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![1.0 / 3.0, 0.25, 0.15, 0.1],
            rescaled_times: (0..=16).map(|k| k as f64 * 0.25).collect(),
            delta_theta_deg: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCurve {
    pub epsilon: f64,
    pub rescaled_t: Vec<f64>,
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub a_err: Vec<f64>,
    pub peak_a: f64,
    pub peak_err: f64,
}

/// OAT-type amplification of a tilt toward Z under the epsilon-family
/// Hamiltonian, for each epsilon, on the couplings of `orientation`.
pub fn epsilon_sweep(base: &SystemSpec, orientation: CrystalOrientation, cfg: &EpsilonSweepConfig) -> Result<Vec<EpsilonCurve>> {
    check_grid("rescaled_times", &cfg.rescaled_times)?;
    if cfg.epsilons.is_empty() {
        return Err(invalid("epsilons", "must not be empty"));
    }
    if !(cfg.delta_theta_deg > 0.0 && cfg.delta_theta_deg <= 90.0) {
        return Err(invalid("delta_theta_deg", "must lie in (0, 90]"));
    }
    let mut spec = base.clone();
    spec.params.orientation = orientation;
    spec.field = None;
    let couplings = System::build(&spec)?.realizations.into_iter().map(|r| r.couplings).collect::<Vec<_>>();
    let mut out = Vec::new();
    for &eps in &cfg.epsilons {
        if !(eps > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        let spec = SystemSpec { hamiltonian: HamiltonianChoice::Epsilon(eps), ..spec.clone() };
        let system = System::from_couplings(&spec, couplings.clone())?;
        let h = system.forward();
        let t: Vec<f64> = cfg.rescaled_times.iter().map(|x| x / (3.0 * eps)).collect();
        let z = [0.0, 0.0, 1.0];
        let (cells, _) =
            echo_cells(&system, &h, [z, z], cfg.delta_theta_deg.to_radians(), &[0.0], std::slice::from_ref(&t), false, None)?;
        let a: Vec<f64> = cells.iter().map(|c| c.a).collect();
        let a_err: Vec<f64> = cells.iter().map(|c| c.a_err).collect();
        let best = (0..a.len()).max_by(|&x, &y| a[x].total_cmp(&a[y])).expect("non-empty");
        out.push(EpsilonCurve {
            epsilon: eps,
            rescaled_t: cfg.rescaled_times.clone(),
            t,
            peak_a: a[best],
            peak_err: a_err[best],
            a,
            a_err,
        });
    }
    Ok(out)
}

/// Dimer amplification averaged over every spin's nearest neighbour in the
/// system's configurations. Each dimer's coupling is `lambda J_Twist` with the
/// sign taken relative to the ensemble's, since the sensing direction follows
/// the ensemble.
pub fn dimer_amplification(system: &System, t_plus: &[f64], t_minus: &[f64]) -> Result<DimerGrid> {
    check_grid("t_plus", t_plus)?;
    check_grid("t_minus", t_minus)?;
    let lambda = system.forward().lambda().ok_or_else(|| invalid("hamiltonian", "needs a TAT-form Hamiltonian"))?;
    let mut j_d = Vec::new();
    for r in &system.realizations {
        let j = &r.couplings;
        for i in 0..j.n {
            let nearest = (0..j.n)
                .filter(|&k| k != i)
                .min_by(|&a, &b| {
                    norm(&sub(&j.positions[i], &j.positions[a])).total_cmp(&norm(&sub(&j.positions[i], &j.positions[b])))
                })
                .expect("at least two spins");
            j_d.push(lambda * j.get(i, nearest).twist * system.orientation_sign);
        }
    }
    Ok(disorder_average(&j_d, t_plus, t_minus))
}
