//! Echo, twisting and response protocols on a sampled spin ensemble.

mod echo;
mod plan;
mod response;
mod studies;

pub use echo::{
    coordination_decomposition, echo_sweep, revival, tat_distance, AmplificationGrid, CoordinationDecomposition,
    EchoCell, EchoConfig, GroupCell, PairChoice, ReadoutRotation, RevivalConfig, RevivalCurve, RevivalResult, Series, TatDistance,
    TatDistanceConfig, TatPairSeries,
};
pub use plan::Estimate;
pub use response::{
    mirror_certificate, susceptibility, susceptibility_grid, xyz_rephasing, MirrorCertificate, RephasingPeak,
    ResponseMode, Susceptibility, SusceptibilityQuery, XyzRephasing,
};
pub use studies::{
    dimer_amplification, epsilon_sweep, imperfection_ledger, oat_twisting_signal, ComparisonCurves, EpsilonCurve,
    EpsilonSweepConfig, LedgerRow, LedgerScenario, OatSignal, OatSignalConfig,
};

use crate::engine::dtwa::DtwaConfig;
use crate::engine::exact::{ExactOptions, MAX_MIXED_SPINS, MAX_PURE_SPINS};
use crate::engine::{NoiseModel, ReversalMode};
use crate::ensemble::{
    build_couplings, coordination, dimer_pairing, sample_configuration, CoordinationReport, CouplingMatrix,
    CouplingWeight, DimerPairing, GeometrySpec,
};
use crate::error::{invalid, Error, Result};
use crate::floquet::{epsilon_family, xyz_paper_g, EngineeredHamiltonian};
use crate::nvham::{FieldConfig, NVSpinParams};
use crate::scalar::Vec3;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Exact when the ensemble fits and no noise is requested.
    #[default]
    Auto,
    Exact,
    Dtwa,
}

/// Forward Hamiltonian of a protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianChoice {
    #[default]
    Tat,
    XyzPaper,
    Oat,
    Epsilon(f64),
    G([f64; 3]),
}

impl HamiltonianChoice {
    pub fn build(&self) -> Result<EngineeredHamiltonian<f64>> {
        Ok(match *self {
            Self::Tat => EngineeredHamiltonian::tat(),
            Self::XyzPaper => EngineeredHamiltonian::from_g(xyz_paper_g()),
            Self::Oat => EngineeredHamiltonian::from_g([0.0, 0.0, 1.0]),
            Self::Epsilon(e) => EngineeredHamiltonian::from_g(epsilon_family(e)?.as_array()),
            Self::G(g) => {
                if !g.iter().all(|x| x.is_finite()) {
                    return Err(invalid("hamiltonian", "g must be finite"));
                }
                EngineeredHamiltonian::from_g(g)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSpec {
    pub params: NVSpinParams,
    /// Defaults to the orientation's preset field.
    pub field: Option<FieldConfig>,
    pub geometry: GeometrySpec,
    /// Independent positional samples; configuration `c` uses seed `geometry.seed + c`.
    pub n_configs: usize,
    pub polarization: f64,
    pub hamiltonian: HamiltonianChoice,
    pub noise: NoiseModel,
    pub backend: Backend,
    pub dtwa: DtwaConfig,
    pub exact: ExactOptions,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self {
            params: NVSpinParams::default(),
            field: None,
            geometry: GeometrySpec::default(),
            n_configs: 1,
            polarization: 1.0,
            hamiltonian: HamiltonianChoice::Tat,
            noise: NoiseModel::ideal(),
            backend: Backend::Auto,
            dtwa: DtwaConfig::default(),
            exact: ExactOptions::default(),
        }
    }
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.geometry.validate()?;
        self.noise.validate()?;
        self.dtwa.validate()?;
        if self.n_configs == 0 {
            return Err(invalid("n_configs", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.polarization) {
            return Err(invalid("polarization", "must lie in [0, 1]"));
        }
        self.hamiltonian.build()?;
        Ok(())
    }

    pub fn reversal_mode(&self) -> ReversalMode {
        if self.noise.heisenberg_unreversed {
            ReversalMode::Anisotropy
        } else {
            ReversalMode::Ideal
        }
    }

    fn noise_active(&self) -> bool {
        self.noise.static_disorder || self.noise.dynamical_active() || self.noise.t1_relaxation
    }
}

/// One positional sample with everything derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub couplings: CouplingMatrix,
    pub pairing: DimerPairing,
    pub coordination: Option<CoordinationReport>,
}

impl Realization {
    pub fn new(couplings: CouplingMatrix) -> Self {
        let pairing = dimer_pairing(&couplings);
        let coordination = coordination(&couplings, CouplingWeight::Twist).ok();
        Self { couplings, pairing, coordination }
    }
}

#[derive(Clone, Debug)]
pub struct System {
    pub spec: SystemSpec,
    pub realizations: Vec<Realization>,
    /// Sign of the summed twist coupling; fixes which in-plane direction amplifies.
    pub orientation_sign: f64,
}

impl System {
    pub fn build(spec: &SystemSpec) -> Result<Self> {
        spec.validate()?;
        let field = spec.field.unwrap_or_else(|| spec.params.preset_field());
        let mut couplings = Vec::with_capacity(spec.n_configs);
        for c in 0..spec.n_configs {
            let geometry = GeometrySpec { seed: spec.geometry.seed.wrapping_add(c as u64), ..spec.geometry };
            let config = sample_configuration(&geometry)?;
            couplings.push(build_couplings(&config, &spec.params, &field)?);
        }
        Self::from_couplings(spec, couplings)
    }

    /// System over given coupling matrices (one per configuration), ignoring
    /// the spec's geometry.
    pub fn from_couplings(spec: &SystemSpec, couplings: Vec<CouplingMatrix>) -> Result<Self> {
        spec.noise.validate()?;
        spec.dtwa.validate()?;
        spec.hamiltonian.build()?;
        let n = couplings.first().map(|j| j.n).ok_or_else(|| invalid("couplings", "need at least one configuration"))?;
        if couplings.iter().any(|j| j.n != n) {
            return Err(invalid("couplings", "all configurations must have the same size"));
        }
        let total: f64 = couplings.iter().flat_map(|j| j.iter_pairs().map(|(_, _, c)| c.twist)).sum();
        let orientation_sign = if total < 0.0 { -1.0 } else { 1.0 };
        let mut spec = spec.clone();
        spec.n_configs = couplings.len();
        spec.geometry.n_spins = n;
        let realizations = couplings.into_iter().map(Realization::new).collect();
        Ok(Self { spec, realizations, orientation_sign })
    }

    pub fn n(&self) -> usize {
        self.realizations[0].couplings.n
    }

    pub fn forward(&self) -> EngineeredHamiltonian<f64> {
        self.spec.hamiltonian.build().expect("validated")
    }

    pub fn backward(&self) -> EngineeredHamiltonian<f64> {
        crate::engine::reverse_segment(&self.forward(), self.spec.reversal_mode())
    }

    pub fn resolved_backend(&self) -> Result<Backend> {
        let n = self.n();
        let p = self.spec.polarization;
        let fits = n <= MAX_MIXED_SPINS || (p == 1.0 && n <= MAX_PURE_SPINS);
        match self.spec.backend {
            Backend::Auto => Ok(if fits && !self.spec.noise_active() { Backend::Exact } else { Backend::Dtwa }),
            Backend::Dtwa => Ok(Backend::Dtwa),
            Backend::Exact => {
                if self.spec.noise_active() {
                    return Err(invalid("backend", "noise models need the dtwa backend"));
                }
                if !fits {
                    let limit = if p == 1.0 { MAX_PURE_SPINS } else { MAX_MIXED_SPINS };
                    return Err(Error::TooLarge { n, limit, what: "exact engine" });
                }
                Ok(Backend::Exact)
            }
        }
    }
}

/// Unit in-plane direction (X +- Z)/sqrt 2 along which a small tilt away from
/// the pole `(0, pole, 0)` grows under `h`.
pub fn amplifying_direction(h: &EngineeredHamiltonian<f64>, pole: f64, orientation_sign: f64) -> Vec3 {
    let k = h.bond(0.0, orientation_sign);
    // Linearized flow at the pole is pole * 2 [[0, Ky - Kz], [Kx - Ky, 0]] on (X, Z);
    // its symmetric part has eigenvectors X +- Z with eigenvalues +-pole (Kx - Kz).
    let m = pole * (k[0] - k[2]);
    let s = if m >= 0.0 { 1.0 } else { -1.0 };
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [r, 0.0, s * r]
}

pub(crate) fn check_grid(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(invalid(name, "must not be empty"));
    }
    if v.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(invalid(name, "times must be finite and non-negative"));
    }
    if v.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid(name, "must be sorted"));
    }
    Ok(())
}
