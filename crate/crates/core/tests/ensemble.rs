use dipecho::ensemble::*;
use dipecho::nvham::{angular_map, dress, pair_coupling, FieldConfig, NVSpinParams};
use dipecho::Error;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn setup() -> (NVSpinParams, FieldConfig) {
    let p = NVSpinParams::default();
    let f = p.preset_field();
    (p, f)
}

fn config(positions: Vec<[f64; 3]>) -> SpinConfiguration {
    let spec = GeometrySpec { n_spins: positions.len(), ..Default::default() };
    SpinConfiguration { spec, positions, resampled: 0 }
}

fn disordered(n: usize, seed: u64) -> SpinConfiguration {
    sample_configuration(&GeometrySpec { n_spins: n, seed, ..Default::default() }).unwrap()
}

#[test]
fn lattice_positions() {
    let spec = GeometrySpec { mode: GeometryMode::Lattice2d, n_spins: 4, ..Default::default() };
    let c = sample_configuration(&spec).unwrap();
    assert_eq!(c.positions, vec![[0.0, 0.0, 0.0], [17.0, 0.0, 0.0], [0.0, 17.0, 0.0], [17.0, 17.0, 0.0]]);
}

#[test]
fn flat_layer_has_zero_height() {
    let spec = GeometrySpec { n_spins: 50, thickness_fwhm: 0.0, ..Default::default() };
    assert!(sample_configuration(&spec).unwrap().positions.iter().all(|p| p[2] == 0.0));
}

#[test]
fn rejects_bad_specs() {
    for spec in [
        GeometrySpec { n_spins: 1, ..Default::default() },
        GeometrySpec { mean_spacing: 0.0, ..Default::default() },
        GeometrySpec { thickness_fwhm: -1.0, ..Default::default() },
    ] {
        assert!(matches!(sample_configuration(&spec), Err(Error::InvalidParameter { .. })));
    }
}

#[test]
fn seeded_sampling_is_reproducible() {
    let a = serde_json::to_string(&disordered(200, 7)).unwrap();
    let b = serde_json::to_string(&disordered(200, 7)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, serde_json::to_string(&disordered(200, 8)).unwrap());
}

#[test]
fn sampled_box_and_floor() {
    let c = disordered(200, 3);
    let side = 17.0 * 200f64.sqrt();
    for (i, p) in c.positions.iter().enumerate() {
        assert!(p[0] >= 0.0 && p[0] < side && p[1] >= 0.0 && p[1] < side);
        for q in &c.positions[i + 1..] {
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            assert!(d >= 1.0);
        }
    }
}

fn ks_statistic(mut xs: Vec<f64>, sigma: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let g = Normal::new(0.0, sigma).unwrap();
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let c = g.cdf(x);
            (c - k as f64 / n).abs().max(((k + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn layer_thickness_is_gaussian() {
    let sigma = 9.0 / FWHM_PER_SIGMA;
    let z: Vec<f64> = disordered(2000, 11).positions.iter().map(|p| p[2]).collect();
    assert!(ks_statistic(z, sigma) < 0.05);
    // Pooled over many n = 200 draws.
    let pooled: Vec<f64> = (0..10).flat_map(|s| disordered(200, s).positions.into_iter().map(|p| p[2])).collect();
    assert!(ks_statistic(pooled, sigma) < 0.05);
}

#[test]
fn couplings_match_the_angular_map() {
    let (p, f) = setup();
    let map = angular_map(&p, &f, 12).unwrap();
    let r = 13.0;
    for s in &map {
        let c = config(vec![[0.0; 3], [r * s.phi.cos(), r * s.phi.sin(), 0.0]]);
        let j = build_couplings(&c, &p, &f).unwrap();
        let want = s.a_twist() / r.powi(3);
        let got = j.get(0, 1).twist;
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-9), "phi {}: {got} vs {want}", s.phi);
    }
}

#[test]
fn couplings_scale_with_inverse_cube() {
    let (p, f) = setup();
    let c = disordered(12, 2);
    let j1 = build_couplings(&c, &p, &f).unwrap();
    let doubled = config(c.positions.iter().map(|q| [2.0 * q[0], 2.0 * q[1], 2.0 * q[2]]).collect());
    let j2 = build_couplings(&doubled, &p, &f).unwrap();
    for ((_, _, a), (_, _, b)) in j1.iter_pairs().zip(j2.iter_pairs()) {
        assert!((a.twist / 8.0 - b.twist).abs() <= 1e-12 * a.twist.abs());
        assert!((a.heis / 8.0 - b.heis).abs() <= 1e-12 * a.heis.abs().max(1e-12));
    }
    let line = config(vec![[0.0; 3], [10.0, 0.0, 0.0], [20.0, 0.0, 0.0]]);
    let j = build_couplings(&line, &p, &f).unwrap();
    assert!((j.get(0, 2).twist - j.get(0, 1).twist / 8.0).abs() < 1e-12 * j.get(0, 1).twist.abs());
}

#[test]
fn coupling_matrix_is_symmetric_and_serializable() {
    let (p, f) = setup();
    let j = build_couplings(&disordered(20, 5), &p, &f).unwrap();
    for a in 0..20 {
        for b in 0..20 {
            if a != b {
                assert_eq!(j.get(a, b), j.get(b, a));
                assert!(j.get(a, b).twist.is_finite() && j.get(a, b).heis.is_finite());
            }
        }
    }
    let back = CouplingMatrix::from_json(&j.to_json().unwrap()).unwrap();
    assert_eq!(back, j);
}

#[test]
fn coincident_spins_are_reported() {
    let (p, f) = setup();
    let c = config(vec![[0.0; 3], [5.0, 0.0, 0.0], [5.0, 0.0, 0.0]]);
    assert!(matches!(build_couplings(&c, &p, &f), Err(Error::SingularSeparation { i: 1, j: 2 })));
}

#[test]
fn coordination_small_cases() {
    let (p, f) = setup();
    let j = build_couplings(&config(vec![[0.0; 3], [10.0, 3.0, 0.0]]), &p, &f).unwrap();
    let r = coordination(&j, CouplingWeight::Twist).unwrap();
    assert!(r.z.iter().all(|&z| (z - 1.0).abs() < 1e-14));

    // A centre spin with four equidistant neighbours in the (111) plane,
    // where the Heisenberg coupling is isotropic in-plane.
    let p = NVSpinParams::with_orientation(dipecho::nvham::CrystalOrientation::Oriented111);
    let f = p.preset_field();
    let mut pos = vec![[0.0; 3]];
    for k in 0..4 {
        let a = std::f64::consts::FRAC_PI_2 * k as f64 + 0.3;
        pos.push([8.0 * a.cos(), 8.0 * a.sin(), 0.0]);
    }
    let j = build_couplings(&config(pos), &p, &f).unwrap();
    let c = j.get(0, 1).heis;
    for k in 2..5 {
        assert!((j.get(0, k).heis - c).abs() < 1e-12 * c.abs());
    }
    let r = coordination(&j, CouplingWeight::Heis).unwrap();
    assert!((r.z[0] - 4.0).abs() < 1e-12);
}

#[test]
fn zero_coupling_is_an_error() {
    let pc = dipecho::nvham::PairCoupling { offset: 0.0, onsite: [0.0; 2], zz: 0.0, xy: 0.0, flip_flop: [0.0; 2], heis: 0.0, twist: 0.0 };
    let j = CouplingMatrix::from_pairs(2, vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![pc]).unwrap();
    assert!(matches!(coordination(&j, CouplingWeight::Twist), Err(Error::ZeroCoupling { spin: 0 })));
}

#[test]
fn lattice_coordination_matches_direct_sum() {
    let (p, f) = setup();
    let spec = GeometrySpec { mode: GeometryMode::Lattice2d, n_spins: 200, ..Default::default() };
    let c = sample_configuration(&spec).unwrap();
    let j = build_couplings(&c, &p, &f).unwrap();
    let r = coordination(&j, CouplingWeight::Twist).unwrap();
    let d = dress(&p, &f).unwrap();
    let frame = p.plane_frame();
    let lab: Vec<[f64; 3]> = c.positions.iter().map(|q| frame.to_lab(q)).collect();
    for i in (0..200).step_by(17) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for k in 0..200 {
            if k != i {
                let rv = [lab[k][0] - lab[i][0], lab[k][1] - lab[i][1], lab[k][2] - lab[i][2]];
                let t = pair_coupling(&d, &d, &rv).unwrap().twist.abs();
                s1 += t;
                s2 += t * t;
            }
        }
        assert!((r.z[i] - s1 * s1 / s2).abs() < 1e-10 * r.z[i]);
    }
    // The bulk lattice value sits inside the disordered distribution.
    let bulk = r.z[7 * 15 + 7];
    let mut zs = Vec::new();
    for s in 0..4 {
        zs.extend(coordination(&build_couplings(&disordered(200, s), &p, &f).unwrap(), CouplingWeight::Twist).unwrap().z);
    }
    assert!(zs.iter().any(|&z| z < bulk) && zs.iter().any(|&z| z > bulk));
    let h = histogram(&zs, 1.0);
    assert_eq!(h.iter().map(|b| b.1).sum::<usize>(), zs.len());
}

#[test]
fn tertile_sizes() {
    let (p, f) = setup();
    for n in [2, 3, 4, 5, 30, 31, 32] {
        let j = build_couplings(&disordered(n, n as u64), &p, &f).unwrap();
        let r = coordination(&j, CouplingWeight::Twist).unwrap();
        let sizes: Vec<usize> = (0..3).map(|g| r.members(g).len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), n);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let zmax = |g: u8| r.members(g).iter().map(|&i| r.z[i]).fold(f64::NEG_INFINITY, f64::max);
        let zmin = |g: u8| r.members(g).iter().map(|&i| r.z[i]).fold(f64::INFINITY, f64::min);
        if sizes[2] > 0 {
            assert!(zmax(0) <= zmin(1) && zmax(1) <= zmin(2));
        }
    }
}

#[test]
fn histogram_bins() {
    let h = histogram(&[0.1, 0.9, 1.2, 3.5], 1.0);
    assert_eq!(h, vec![(0.5, 2), (1.5, 1), (3.5, 1)]);
}

#[test]
fn pairing_small_cases() {
    let (p, f) = setup();
    let j = build_couplings(&config(vec![[0.0; 3], [10.0, 3.0, 0.0]]), &p, &f).unwrap();
    assert_eq!(dimer_pairing(&j).clusters, vec![Cluster::Pair(0, 1)]);
    let j = build_couplings(&config(vec![[0.0; 3], [60.0, 0.0, 0.0], [2.0, 1.0, 0.0], [0.0, 60.0, 0.0]]), &p, &f).unwrap();
    let pairing = dimer_pairing(&j);
    assert_eq!(pairing.clusters[0], Cluster::Pair(0, 2));
    assert!(pairing.verify(&j));
    let j = build_couplings(&disordered(7, 1), &p, &f).unwrap();
    let pairing = dimer_pairing(&j);
    assert_eq!(pairing.clusters.iter().filter(|c| matches!(c, Cluster::Single(_))).count(), 1);
}

#[test]
fn pairing_is_deterministic_and_valid() {
    let (p, f) = setup();
    let j = build_couplings(&disordered(200, 4), &p, &f).unwrap();
    let a = dimer_pairing(&j);
    assert_eq!(a, dimer_pairing(&j));
    assert!(a.verify(&j));
    let mut seen = [false; 200];
    for c in &a.clusters {
        let ids = match *c {
            Cluster::Pair(x, y) => vec![x, y],
            Cluster::Single(x) => vec![x],
        };
        for i in ids {
            assert!(!seen[i]);
            seen[i] = true;
        }
    }
    assert!(seen.iter().all(|&s| s));
    // A tampered certificate is rejected.
    let mut bad = a.clone();
    bad.certificate.swap(0, 5);
    assert!(!bad.verify(&j));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn coordination_bounds(n in 2usize..40, seed in 0u64..10_000, w in 0usize..3) {
        let (p, f) = setup();
        let weight = [CouplingWeight::Twist, CouplingWeight::Heis, CouplingWeight::Total][w];
        let j = build_couplings(&disordered(n, seed), &p, &f).unwrap();
        if let Ok(r) = coordination(&j, weight) {
            for z in r.z {
                prop_assert!(z >= 1.0 - 1e-12 && z <= (n - 1) as f64 + 1e-9);
            }
        }
        prop_assert!(dimer_pairing(&j).verify(&j));
    }
}
