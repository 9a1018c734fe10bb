//! Spin geometry, pairwise coupling matrices, coordination and dimer pairing.

use crate::error::{invalid, Error, Result};
use crate::nvham::{dress, pair_coupling, FieldConfig, NVSpinParams, PairCoupling};
use crate::scalar::{norm, sub, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// FWHM / sigma of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryMode {
    Disordered2d,
    Lattice2d,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    pub mode: GeometryMode,
    pub n_spins: usize,
    /// nm; square-lattice constant, or sqrt(area per spin) when disordered.
    pub mean_spacing: f64,
    /// nm FWHM of the out-of-plane Gaussian; 0 for a flat layer.
    pub thickness_fwhm: f64,
    /// nm; disordered draws closer than this are resampled.
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self {
            mode: GeometryMode::Disordered2d,
            n_spins: 100,
            mean_spacing: 17.0,
            thickness_fwhm: 9.0,
            min_separation: 1.0,
            seed: 1,
        }
    }
}

impl GeometrySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_spins < 2 {
            return Err(invalid("n_spins", "need at least two spins"));
        }
        if !(self.mean_spacing.is_finite() && self.mean_spacing > 0.0) {
            return Err(invalid("mean_spacing", "must be positive"));
        }
        if !(self.thickness_fwhm.is_finite() && self.thickness_fwhm >= 0.0) {
            return Err(invalid("thickness_fwhm", "must be non-negative"));
        }
        if !(self.min_separation.is_finite() && self.min_separation >= 0.0) {
            return Err(invalid("min_separation", "must be non-negative"));
        }
        if self.mode == GeometryMode::Disordered2d && self.min_separation >= 0.5 * self.mean_spacing {
            return Err(invalid("min_separation", "too large for the requested density"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    pub spec: GeometrySpec,
    /// Plane-frame coordinates (e1, e2, normal), nm.
    pub positions: Vec<Vec3>,
    /// Number of draws rejected by the minimum-separation floor.
    pub resampled: usize,
}

const MAX_RESAMPLES: usize = 1_000_000;

pub fn sample_configuration(spec: &GeometrySpec) -> Result<SpinConfiguration> {
    spec.validate()?;
    let n = spec.n_spins;
    let mut positions = Vec::with_capacity(n);
    let mut resampled = 0;
    match spec.mode {
        GeometryMode::Lattice2d => {
            let width = (n as f64).sqrt().ceil() as usize;
            for i in 0..n {
                positions.push([(i % width) as f64 * spec.mean_spacing, (i / width) as f64 * spec.mean_spacing, 0.0]);
            }
        }
        GeometryMode::Disordered2d => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let side = spec.mean_spacing * (n as f64).sqrt();
            let normal = Normal::new(0.0, spec.thickness_fwhm / FWHM_PER_SIGMA).map_err(|e| invalid("thickness_fwhm", e.to_string()))?;
            while positions.len() < n {
                let p = [rng.random::<f64>() * side, rng.random::<f64>() * side, normal.sample(&mut rng)];
                if positions.iter().any(|q: &Vec3| norm(&sub(&p, q)) < spec.min_separation) {
                    resampled += 1;
                    if resampled > MAX_RESAMPLES {
                        return Err(invalid("min_separation", "resampling did not terminate"));
                    }
                    continue;
                }
                positions.push(p);
            }
        }
    }
    if resampled > 0 {
        log::info!("geometry: {resampled} draws rejected by the {} nm floor", spec.min_separation);
    }
    Ok(SpinConfiguration { spec: *spec, positions, resampled })
}

/// Symmetric pairwise couplings stored as a packed upper triangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    pub n: usize,
    pub positions: Vec<Vec3>,
    pairs: Vec<PairCoupling>,
}

#[inline]
fn packed(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl CouplingMatrix {
    pub fn from_pairs(n: usize, positions: Vec<Vec3>, pairs: Vec<PairCoupling>) -> Result<Self> {
        if pairs.len() != n * n.saturating_sub(1) / 2 {
            return Err(invalid("pairs", "length must be n(n-1)/2"));
        }
        Ok(Self { n, positions, pairs })
    }

    /// Coupling between distinct spins `i` and `j`.
    pub fn get(&self, i: usize, j: usize) -> &PairCoupling {
        assert!(i != j && i < self.n && j < self.n, "pair ({i}, {j}) out of range");
        &self.pairs[packed(self.n, i, j)]
    }

    pub fn iter_pairs(&self) -> impl Iterator<Item = (usize, usize, &PairCoupling)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, self.get(i, j))))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        Self::from_pairs(m.n, m.positions, m.pairs)
    }
}

pub fn build_couplings(config: &SpinConfiguration, params: &NVSpinParams, field: &FieldConfig) -> Result<CouplingMatrix> {
    let d = dress(params, field)?;
    let frame = params.plane_frame();
    let lab: Vec<Vec3> = config.positions.iter().map(|p| frame.to_lab(p)).collect();
    let n = lab.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let r = sub(&lab[j], &lab[i]);
            if norm(&r) == 0.0 {
                return Err(Error::SingularSeparation { i, j });
            }
            pairs.push(pair_coupling(&d, &d, &r)?);
        }
    }
    CouplingMatrix::from_pairs(n, config.positions.clone(), pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingWeight {
    #[default]
    Twist,
    Heis,
    /// sqrt(J_Heis^2 + J_Twist^2)
    Total,
}

impl CouplingWeight {
    pub fn of(self, c: &PairCoupling) -> f64 {
        match self {
            Self::Twist => c.twist.abs(),
            Self::Heis => c.heis.abs(),
            Self::Total => c.heis.hypot(c.twist),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinationReport {
    pub weight: CouplingWeight,
    /// z_i = (sum_j |J_ij|)^2 / sum_j J_ij^2
    pub z: Vec<f64>,
    /// 0, 1, 2 for the lowest, middle and highest third by z.
    pub tertile: Vec<u8>,
}

impl CoordinationReport {
    pub fn members(&self, group: u8) -> Vec<usize> {
        (0..self.z.len()).filter(|&i| self.tertile[i] == group).collect()
    }
}

pub fn coordination(j: &CouplingMatrix, weight: CouplingWeight) -> Result<CoordinationReport> {
    let n = j.n;
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    for (a, b, c) in j.iter_pairs() {
        let w = weight.of(c);
        s1[a] += w;
        s1[b] += w;
        s2[a] += w * w;
        s2[b] += w * w;
    }
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        if s2[i] == 0.0 {
            return Err(Error::ZeroCoupling { spin: i });
        }
        z.push(s1[i] * s1[i] / s2[i]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    let (base, rem) = (n / 3, n % 3);
    let sizes = [base + usize::from(rem > 0), base + usize::from(rem > 1), base];
    let mut tertile = vec![0u8; n];
    let mut k = 0;
    for (g, &size) in sizes.iter().enumerate() {
        for &i in &order[k..k + size] {
            tertile[i] = g as u8;
        }
        k += size;
    }
    Ok(CoordinationReport { weight, z, tertile })
}

/// Counts of `values` in bins `[k w, (k+1) w)`, reported by bin centre.
pub fn histogram(values: &[f64], bin_width: f64) -> Vec<(f64, usize)> {
    let mut counts = std::collections::BTreeMap::<i64, usize>::new();
    for &v in values {
        *counts.entry((v / bin_width).floor() as i64).or_default() += 1;
    }
    counts.into_iter().map(|(k, c)| ((k as f64 + 0.5) * bin_width, c)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cluster {
    Pair(usize, usize),
    Single(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingStep {
    pub i: usize,
    pub j: usize,
    pub strength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimerPairing {
    pub clusters: Vec<Cluster>,
    /// Pairs in the order they were formed.
    pub certificate: Vec<PairingStep>,
}

impl DimerPairing {
    /// Partner of each spin, if paired.
    pub fn partners(&self, n: usize) -> Vec<Option<usize>> {
        let mut p = vec![None; n];
        for c in &self.clusters {
            if let Cluster::Pair(i, j) = *c {
                p[i] = Some(j);
                p[j] = Some(i);
            }
        }
        p
    }

    pub fn singletons(n: usize) -> Self {
        Self { clusters: (0..n).map(Cluster::Single).collect(), certificate: Vec::new() }
    }

    /// Replays the certificate: each step must be the strongest |J_Twist|
    /// among spins still unpaired at that point.
    pub fn verify(&self, j: &CouplingMatrix) -> bool {
        let n = j.n;
        let mut free = vec![true; n];
        for step in &self.certificate {
            if !free[step.i] || !free[step.j] {
                return false;
            }
            for (a, b, c) in j.iter_pairs() {
                if free[a] && free[b] && c.twist.abs() > step.strength {
                    return false;
                }
            }
            free[step.i] = false;
            free[step.j] = false;
        }
        // At most one spin can remain unpaired.
        free.iter().filter(|&&f| f).count() <= 1
    }
}

/// Greedy pairing by descending |J_Twist|, ties broken by index order.
pub fn dimer_pairing(j: &CouplingMatrix) -> DimerPairing {
    let mut all: Vec<(usize, usize, f64)> = j.iter_pairs().map(|(a, b, c)| (a, b, c.twist.abs())).collect();
    all.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut free = vec![true; j.n];
    let mut clusters = Vec::new();
    let mut certificate = Vec::new();
    for (a, b, s) in all {
        if free[a] && free[b] {
            free[a] = false;
            free[b] = false;
            clusters.push(Cluster::Pair(a, b));
            certificate.push(PairingStep { i: a, j: b, strength: s });
        }
    }
    clusters.extend((0..j.n).filter(|&i| free[i]).map(Cluster::Single));
    DimerPairing { clusters, certificate }
}
