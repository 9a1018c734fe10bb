use dipecho::nvham::CrystalOrientation;
use dipecho::protocols::{
    EchoConfig, EpsilonSweepConfig, LedgerScenario, OatSignalConfig, RevivalConfig, SystemSpec, TatDistanceConfig,
};
use dipecho::verify::Level;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use toml::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    AngularMap,
    Couplings,
    OatSignal,
    TatDistance,
    Revival,
    EchoSweep,
    DimerGrid,
    Ledger,
    EpsilonSweep,
    Verify,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = Value::try_from(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AngularMapConfig {
    pub n_angles: usize,
}

impl Default for AngularMapConfig {
    fn default() -> Self {
        Self { n_angles: 360 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingsConfig {
    pub bin_width: f64,
    /// Also write every coupling matrix as JSON.
    pub export_matrices: bool,
}

impl Default for CouplingsConfig {
    fn default() -> Self {
        Self { bin_width: 0.25, export_matrices: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimerGridConfig {
    pub t_plus: Vec<f64>,
    pub t_minus: Vec<f64>,
}

impl Default for DimerGridConfig {
    fn default() -> Self {
        Self {
            t_plus: (0..=20).map(|k| k as f64 * 0.2).collect(),
            t_minus: (0..=40).map(|k| k as f64 * 0.2).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerConfig {
    pub rows: Vec<LedgerScenario>,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self { rows: LedgerScenario::paper_rows() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub level: Level,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Set by presets; must agree with the requested scenario.
    pub scenario: Option<Scenario>,
    /// Master seed; when present it determines every stage seed.
    pub seed: Option<u64>,
    pub system: SystemSpec,
    pub angular_map: AngularMapConfig,
    pub couplings: CouplingsConfig,
    pub oat_signal: OatSignalConfig,
    pub tat_distance: TatDistanceConfig,
    pub revival: RevivalConfig,
    pub echo: EchoConfig,
    pub dimer_grid: DimerGridConfig,
    pub ledger: LedgerConfig,
    pub epsilon_sweep: EpsilonSweepConfig,
    pub verify: VerifyConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StageSeeds {
    pub geometry: u64,
    pub dtwa: u64,
}

/// TOML integers are signed 64-bit, so derived seeds keep 63 bits.
pub fn stage_seeds(master: u64) -> StageSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    StageSeeds { geometry: rng.next_u64() >> 1, dtwa: rng.next_u64() >> 1 }
}

impl RunConfig {
    pub fn apply_seed(&mut self) {
        if let Some(m) = self.seed {
            let s = stage_seeds(m);
            self.system.geometry.seed = s.geometry;
            self.system.dtwa.seed = s.dtwa;
        }
    }

    pub fn stage_seeds(&self) -> StageSeeds {
        StageSeeds { geometry: self.system.geometry.seed, dtwa: self.system.dtwa.seed }
    }

    pub fn to_toml(&self) -> Result<String, String> {
        toml::to_string(self).map_err(|e| format!("cannot serialize the effective config: {e}"))
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("paper-fig1c", include_str!("../presets/paper-fig1c.toml")),
    ("paper-fig1d", include_str!("../presets/paper-fig1d.toml")),
    ("paper-fig2b", include_str!("../presets/paper-fig2b.toml")),
    ("paper-fig3b", include_str!("../presets/paper-fig3b.toml")),
    ("paper-fig4b", include_str!("../presets/paper-fig4b.toml")),
    ("paper-fig4c", include_str!("../presets/paper-fig4c.toml")),
    ("paper-ext3", include_str!("../presets/paper-ext3.toml")),
    ("paper-ext5", include_str!("../presets/paper-ext5.toml")),
    ("paper-ext5a", include_str!("../presets/paper-ext5a.toml")),
    ("paper-ext6", include_str!("../presets/paper-ext6.toml")),
    ("paper-ext11a", include_str!("../presets/paper-ext11a.toml")),
    ("paper-ext11b", include_str!("../presets/paper-ext11b.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.1)
}

/// Inputs in increasing priority; later layers override earlier ones key by key.
pub struct Layers<'a> {
    pub preset: Option<&'a str>,
    pub config: Option<&'a Path>,
    pub overrides: &'a [String],
    pub seed: Option<u64>,
    pub orientation: Option<CrystalOrientation>,
}

pub fn load(layers: &Layers<'_>) -> Result<RunConfig, String> {
    let mut root = Value::Table(Default::default());
    if let Some(name) = layers.preset {
        let text = preset(name).ok_or_else(|| {
            format!("unknown preset `{name}` (available: {})", preset_names().collect::<Vec<_>>().join(", "))
        })?;
        merge(&mut root, parse(text, &format!("preset {name}"))?);
    }
    if let Some(path) = layers.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        merge(&mut root, parse(&text, &path.display().to_string())?);
    }
    for o in layers.overrides {
        apply_override(&mut root, o)?;
    }
    let mut cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
        let path = e.path().to_string();
        format!("config error at `{path}`: {}", e.into_inner())
    })?;
    if let Some(s) = layers.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = layers.orientation {
        cfg.system.params.orientation = o;
    }
    cfg.apply_seed();
    Ok(cfg)
}

fn parse(text: &str, origin: &str) -> Result<Value, String> {
    let table: toml::Table = text.parse().map_err(|e| format!("{origin}: {e}"))?;
    Ok(Value::Table(table))
}

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Table(b), Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot @ Value::Table(_)) if v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// `a.b.c=value`; the value is read as TOML and falls back to a bare string.
fn apply_override(root: &mut Value, spec: &str) -> Result<(), String> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| format!("override `{spec}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(format!("override `{spec}` has an empty key segment"));
    }
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let mut nested = value;
    for seg in key.rsplit('.') {
        let mut t = toml::Table::new();
        t.insert(seg.to_string(), nested);
        nested = Value::Table(t);
    }
    merge(root, nested);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layers<'a>(preset: Option<&'a str>, overrides: &'a [String]) -> Layers<'a> {
        Layers { preset, config: None, overrides, seed: None, orientation: None }
    }

    #[test]
    fn every_preset_loads() {
        for name in preset_names() {
            let cfg = load(&layers(Some(name), &[])).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(cfg.scenario.is_some(), "{name}");
        }
    }

    #[test]
    fn overrides_beat_presets_and_keep_siblings() {
        let o = vec!["system.geometry.n_spins=7".to_string(), "echo.delta_theta_deg=3".to_string()];
        let cfg = load(&layers(Some("paper-fig4c"), &o)).unwrap();
        assert_eq!(cfg.system.geometry.n_spins, 7);
        assert_eq!(cfg.echo.delta_theta_deg, 3.0);
        assert_eq!(cfg.system.dtwa.n_traj, 200);
        assert!(cfg.system.noise.dynamical_disorder);
    }

    #[test]
    fn bare_words_are_strings() {
        let o = vec!["system.backend=exact".to_string()];
        assert!(load(&layers(None, &o)).is_ok());
        assert!(load(&layers(None, &["noequals".to_string()])).is_err());
        assert!(load(&layers(None, &["a..b=1".to_string()])).is_err());
    }

    #[test]
    fn master_seed_fixes_stage_seeds() {
        let mut l = layers(None, &[]);
        l.seed = Some(42);
        let a = load(&l).unwrap();
        let b = load(&l).unwrap();
        assert_eq!(a.stage_seeds(), b.stage_seeds());
        assert_eq!(a.stage_seeds(), stage_seeds(42));
        assert_ne!(stage_seeds(42), stage_seeds(43));
        assert!(stage_seeds(u64::MAX).geometry <= i64::MAX as u64);
    }

    #[test]
    fn effective_config_round_trips() {
        let mut cfg = load(&layers(Some("paper-ext6"), &[])).unwrap();
        cfg.system.polarization = 0.1 + 0.2;
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
