use dipecho::engine::dtwa::{dtwa_run, DtwaConfig, Sampling};
use dipecho::engine::exact::*;
use dipecho::engine::*;
use dipecho::ensemble::{build_couplings, dimer_pairing, sample_configuration, CouplingMatrix, DimerPairing, GeometrySpec};
use dipecho::floquet::{xyz_target, EngineeredHamiltonian, XyzTarget};
use dipecho::nvham::{NVSpinParams, PairCoupling};
use dipecho::Error;
use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pc(heis: f64, twist: f64) -> PairCoupling {
    PairCoupling { offset: 0.0, onsite: [0.0; 2], zz: twist + heis, xy: heis, flip_flop: [2.0 * heis, 0.0], heis, twist }
}

/// Coupling matrix from explicit `(i, j, heis, twist)` entries; others zero.
fn matrix(n: usize, entries: &[(usize, usize, f64, f64)]) -> CouplingMatrix {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let e = entries.iter().find(|e| (e.0, e.1) == (i, j));
            pairs.push(e.map_or(pc(0.0, 0.0), |e| pc(e.2, e.3)));
        }
    }
    CouplingMatrix::from_pairs(n, vec![[0.0; 3]; n], pairs).unwrap()
}

fn disordered(n: usize, seed: u64) -> CouplingMatrix {
    let p = NVSpinParams::default();
    let spec = GeometrySpec { n_spins: n, mean_spacing: 12.0, seed, ..Default::default() };
    build_couplings(&sample_configuration(&spec).unwrap(), &p, &p.preset_field()).unwrap()
}

fn max_twist(j: &CouplingMatrix) -> f64 {
    j.iter_pairs().map(|(_, _, c)| c.twist.abs()).fold(0.0, f64::max)
}

fn pauli() -> [DMatrix<C>; 3] {
    let (z, o, i) = (C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 1.0));
    [
        DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    ]
}

/// sigma_a on spin `i`; spin 0 is the least significant bit.
fn site(n: usize, i: usize, a: usize) -> DMatrix<C> {
    let p = pauli();
    let mut out = DMatrix::<C>::identity(1, 1);
    for k in (0..n).rev() {
        let f = if k == i { p[a].clone() } else { DMatrix::identity(2, 2) };
        out = out.kronecker(&f);
    }
    out
}

fn kron_hamiltonian(n: usize, bonds: &[(usize, usize, [f64; 3])], fields: &[[f64; 3]]) -> DMatrix<C> {
    let dim = 1 << n;
    let mut h = DMatrix::<C>::zeros(dim, dim);
    for &(i, j, g) in bonds {
        for a in 0..3 {
            h += site(n, i, a) * site(n, j, a) * C::from(g[a]);
        }
    }
    for (i, f) in fields.iter().enumerate() {
        for a in 0..3 {
            h += site(n, i, a) * C::from(f[a]);
        }
    }
    h
}

fn random_bonds(n: usize, seed: u64) -> (Bonds, Vec<[f64; 3]>) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            list.push((i, j, [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]));
        }
    }
    let fields = (0..n).map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]).collect();
    (Bonds::new(n, list), fields)
}

fn random_state(n: usize, seed: u64) -> StateVector {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amp: Vec<C> = (0..1 << n).map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let norm = amp.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    amp.iter_mut().for_each(|a| *a /= norm);
    StateVector { n, amp }
}

fn distance(a: &StateVector, b: &StateVector) -> f64 {
    a.amp.iter().zip(&b.amp).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn dense_hamiltonian_matches_kronecker_construction() {
    let (b, f) = random_bonds(4, 3);
    let h1 = dense_hamiltonian(4, &b.list, &f);
    let h2 = kron_hamiltonian(4, &b.list, &f);
    assert!((h1.clone() - h2).norm() < 1e-12);
    assert!((h1.adjoint() - h1).norm() < 1e-12);
}

#[test]
fn gates_match_matrix_exponentials() {
    let (b, f) = random_bonds(3, 5);
    let psi = random_state(3, 1);
    let t = 0.37;
    for &(i, j, g) in &b.list {
        let mut s = psi.clone();
        s.apply_bond(i, j, &g, t);
        let u = (kron_hamiltonian(3, &[(i, j, g)], &[]) * C::new(0.0, -t)).exp();
        let want = u * nalgebra::DVector::from_column_slice(&psi.amp);
        assert!(distance(&s, &StateVector { n: 3, amp: want.as_slice().to_vec() }) < 1e-12);
    }
    let mut fields = vec![[0.0; 3]; 3];
    fields[1] = f[1];
    let mag = (f[1][0].powi(2) + f[1][1].powi(2) + f[1][2].powi(2)).sqrt();
    let mut s = psi.clone();
    s.apply_single(1, &f[1].map(|x| x / mag), mag * t);
    let u = (kron_hamiltonian(3, &[], &fields) * C::new(0.0, -t)).exp();
    let want = u * nalgebra::DVector::from_column_slice(&psi.amp);
    assert!(distance(&s, &StateVector { n: 3, amp: want.as_slice().to_vec() }) < 1e-12);
}

#[test]
fn product_states_and_bloch_vectors() {
    let dirs = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.6, 0.0, 0.8]];
    let s = StateVector::product(&dirs);
    assert!((s.norm_sqr() - 1.0).abs() < 1e-14);
    for (b, d) in s.bloch().iter().zip(&dirs) {
        for a in 0..3 {
            assert!((b[a] - d[a]).abs() < 1e-14);
        }
    }
    // Right-handed rotation: +Y about +Z by pi/2 goes to -X.
    let mut s = StateVector::product(&[[0.0, 1.0, 0.0]]);
    s.rotate_all(&[0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
    let b = s.bloch()[0];
    assert!((b[0] + 1.0).abs() < 1e-14 && b[1].abs() < 1e-14);
}

#[test]
fn spectral_matches_fine_trotter() {
    let (b, f) = random_bonds(5, 7);
    let psi = random_state(5, 2);
    let spec = ExactPropagator::new(&b, &f, &ExactOptions { integrator: Integrator::Spectral, ..Default::default() }).unwrap();
    let yo = ExactPropagator::new(&b, &f, &ExactOptions::default()).unwrap();
    let (mut a, mut c) = (psi.clone(), psi.clone());
    spec.evolve(&mut a, 1.3);
    yo.evolve(&mut c, 1.3);
    assert!(distance(&a, &c) < 1e-9);
    let u = (kron_hamiltonian(5, &b.list, &f) * C::new(0.0, -1.3)).exp();
    let want = u * nalgebra::DVector::from_column_slice(&psi.amp);
    assert!(distance(&a, &StateVector { n: 5, amp: want.as_slice().to_vec() }) < 1e-10);
}

fn trotter_error(integrator: Integrator, factor: f64) -> f64 {
    let (b, f) = random_bonds(6, 11);
    let psi = StateVector::product(&[[0.0, 1.0, 0.0]; 6]);
    let exact = ExactPropagator::new(&b, &f, &ExactOptions { integrator: Integrator::Spectral, ..Default::default() }).unwrap();
    let p = ExactPropagator::new(&b, &f, &ExactOptions { integrator, step_factor: factor }).unwrap();
    let (mut a, mut c) = (psi.clone(), psi);
    exact.evolve(&mut a, 2.0);
    p.evolve(&mut c, 2.0);
    a.bloch().iter().zip(c.bloch()).flat_map(|(x, y)| (0..3).map(move |k| (x[k] - y[k]).abs())).fold(0.0, f64::max)
}

#[test]
fn halving_the_step_reduces_error_fourfold() {
    let (e1, e2) = (trotter_error(Integrator::Yoshida4, 0.4), trotter_error(Integrator::Yoshida4, 0.2));
    assert!(e1 / e2 >= 4.0, "{e1} {e2}");
    // Strang alone is second order.
    let (s1, s2) = (trotter_error(Integrator::Strang, 0.1), trotter_error(Integrator::Strang, 0.05));
    let order = (s1 / s2).log2();
    assert!((order - 2.0).abs() < 0.1, "{s1} {s2}");
}

#[test]
fn default_step_is_converged() {
    let j = disordered(8, 4);
    let h = xyz_target::<f64>(XyzTarget::Tat);
    let t = 3.0 / max_twist(&j);
    let schedule = Schedule::new(vec![Segment::Evolve { h, duration: t }]);
    let init = InitialState::plus_y(1.0);
    let a = exact_evolve(&j, &init, &schedule, &ExactOptions::default(), &Groups::default()).unwrap();
    let b = exact_evolve(&j, &init, &schedule, &ExactOptions { step_factor: 0.01, ..Default::default() }, &Groups::default()).unwrap();
    let (x, y) = (a.mean.last().unwrap(), b.mean.last().unwrap());
    for k in 0..3 {
        assert!((x[k] - y[k]).abs() < 1e-9);
    }
}

#[test]
fn norm_is_conserved() {
    let (b, f) = random_bonds(8, 2);
    let p = ExactPropagator::new(&b, &f, &ExactOptions::default()).unwrap();
    let mut s = random_state(8, 9);
    p.evolve(&mut s, 10.0);
    assert!((s.norm_sqr() - 1.0).abs() < 1e-12 * 10.0, "{}", s.norm_sqr() - 1.0);
}

#[test]
fn polarized_state_is_a_heisenberg_eigenstate() {
    let j = disordered(6, 1);
    let heis = EngineeredHamiltonian::from_g([1.0 / 3.0; 3]);
    for axis in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.0, -1.0, 0.0]] {
        let sched = Schedule::new(vec![Segment::Evolve { h: heis, duration: 5.0 / max_twist(&j) }]).sampled_every(1.0 / max_twist(&j));
        let out = exact_evolve(&j, &InitialState::new(axis, 1.0).unwrap(), &sched, &ExactOptions::default(), &Groups::default()).unwrap();
        for m in &out.mean {
            for k in 0..3 {
                assert!((m[k] - axis[k]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn oat_conserves_total_z() {
    let j = disordered(7, 2);
    let oat = EngineeredHamiltonian::from_g([0.0, 0.0, 1.0]);
    let init = InitialState::new([0.6, 0.0, 0.8], 1.0).unwrap();
    let sched = Schedule::new(vec![Segment::Evolve { h: oat, duration: 4.0 / max_twist(&j) }]).sampled_every(0.5 / max_twist(&j));
    let out = exact_evolve(&j, &init, &sched, &ExactOptions::default(), &Groups::default()).unwrap();
    for m in &out.mean {
        assert!((m[2] - 0.8).abs() < 1e-10);
    }
    // The transverse part does evolve.
    assert!((out.mean.last().unwrap()[0] - 0.6).abs() > 1e-3);
}

#[test]
fn full_reversal_returns_two_spins() {
    let j = matrix(2, &[(0, 1, 0.4, 1.1)]);
    let h = xyz_target::<f64>(XyzTarget::Tat);
    let sched = Schedule::new(vec![
        Segment::Evolve { h, duration: 1.7 },
        Segment::Evolve { h: reverse_segment(&h, ReversalMode::Ideal), duration: 1.7 },
    ]);
    let out = exact_evolve(&j, &InitialState::plus_y(1.0), &sched, &ExactOptions::default(), &Groups::default()).unwrap();
    let mid = out.mean[1];
    assert!((mid[1] - 1.0).abs() > 1e-3);
    let end = out.mean.last().unwrap();
    assert!(end[0].abs() < 1e-9 && (end[1] - 1.0).abs() < 1e-9 && end[2].abs() < 1e-9);
}

#[test]
fn reversal_modes() {
    let tat = xyz_target::<f64>(XyzTarget::Tat);
    let back = reverse_segment(&tat, ReversalMode::Anisotropy);
    let (jh, jt) = (0.3, 0.9);
    let (f, b) = (tat.bond(jh, jt), back.bond(jh, jt));
    // Twist parts are opposite, Heisenberg parts equal.
    let iso = |g: [f64; 3]| (g[0] + g[1] + g[2]) / 3.0;
    assert!((iso(f) - iso(b)).abs() < 1e-14);
    for a in 0..3 {
        assert!(((f[a] - iso(f)) + (b[a] - iso(b))).abs() < 1e-14);
    }
    assert!(((f[2] - f[0]) - 4.0 / 9.0 * jt).abs() < 1e-14);
    let ideal = reverse_segment(&tat, ReversalMode::Ideal);
    let g = ideal.bond(jh, jt);
    for a in 0..3 {
        assert_eq!(g[a], -f[a]);
    }
    let heis = EngineeredHamiltonian::from_g([1.0 / 3.0; 3]);
    assert_eq!(reverse_segment(&heis, ReversalMode::Anisotropy).bond(jh, jt), heis.bond(jh, jt));
}

#[test]
fn capacity_and_input_errors() {
    let j = disordered(13, 1);
    let s = Schedule::new(vec![Segment::Evolve { h: xyz_target(XyzTarget::Tat), duration: 0.1 }]);
    let res = exact_evolve(&j, &InitialState::plus_y(1.0), &s, &ExactOptions::default(), &Groups::default());
    assert!(matches!(res, Err(Error::TooLarge { n: 13, .. })));
    let j = disordered(9, 1);
    let res = exact_evolve(&j, &InitialState::plus_y(0.75), &s, &ExactOptions::default(), &Groups::default());
    assert!(matches!(res, Err(Error::TooLarge { n: 9, .. })));
    let j = disordered(3, 1);
    let empty = Schedule::default();
    assert!(matches!(exact_evolve(&j, &InitialState::plus_y(1.0), &empty, &ExactOptions::default(), &Groups::default()), Err(Error::EmptySchedule)));
    let bad = Bonds::new(2, vec![(0, 1, [f64::NAN, 0.0, 0.0])]);
    assert!(ExactPropagator::new(&bad, &[], &ExactOptions::default()).is_err());
    assert!(InitialState::new([1.0, 1.0, 0.0], 1.0).is_err());
    assert!(InitialState::new([1.0, 0.0, 0.0], 1.5).is_err());
    let cfg = DtwaConfig { n_traj: 0, ..Default::default() };
    assert!(dtwa_run(&j, None, &InitialState::plus_y(1.0), &s, &cfg, &NoiseModel::ideal(), &Groups::default()).is_err());
    assert!(matches!(
        dtwa_run(&j, None, &InitialState::plus_y(1.0), &empty, &DtwaConfig::default(), &NoiseModel::ideal(), &Groups::default()),
        Err(Error::EmptySchedule)
    ));
}

#[test]
fn mixed_state_ensemble() {
    let init = InitialState::new([0.0, 0.0, 1.0], 0.5).unwrap();
    let states = initial_ensemble(4, &init).unwrap();
    assert_eq!(states.len(), 16);
    assert!((states.iter().map(|s| s.0).sum::<f64>() - 1.0).abs() < 1e-14);
    let mut z = 0.0;
    for (w, s) in &states {
        z += w * s.bloch().iter().map(|b| b[2]).sum::<f64>() / 4.0;
    }
    assert!((z - 0.5).abs() < 1e-14);
}

fn echo_schedule(h: EngineeredHamiltonian<f64>, t: f64) -> Schedule {
    Schedule::new(vec![
        Segment::Evolve { h, duration: t },
        Segment::Rotate { axis: [1.0 / 2f64.sqrt(), 0.0, 1.0 / 2f64.sqrt()], angle: 0.3 },
        Segment::Evolve { h: h.reversed_anisotropy(), duration: 1.5 * t },
    ])
    .sampled_every(t / 4.0)
}

fn assert_series_close(a: &ObservableSeries, b: &ObservableSeries, tol: f64) {
    assert_eq!(a.times.len(), b.times.len());
    for (x, y) in a.mean.iter().zip(&b.mean) {
        for k in 0..3 {
            assert!((x[k] - y[k]).abs() < tol, "{x:?} vs {y:?}");
        }
    }
}

#[test]
fn single_cluster_is_exact() {
    let j = matrix(2, &[(0, 1, 0.3, 1.2)]);
    let pairing = dimer_pairing(&j);
    let h = xyz_target::<f64>(XyzTarget::XyzPaper);
    let cfg = DtwaConfig { sampling: Sampling::Enumerate, ..Default::default() };
    for p in [1.0, 0.75] {
        let init = InitialState::plus_y(p);
        let sched = echo_schedule(h, 0.8);
        let ex = exact_evolve(&j, &init, &sched, &ExactOptions::default(), &Groups::default()).unwrap();
        let dt = dtwa_run(&j, Some(&pairing), &init, &sched, &cfg, &NoiseModel::ideal(), &Groups::default()).unwrap();
        assert_series_close(&ex, &dt, 1e-9);
    }
}

#[test]
fn decoupled_clusters_are_exact() {
    let j = matrix(4, &[(0, 2, 0.1, 0.9), (1, 3, -0.2, 1.4)]);
    let pairing = dimer_pairing(&j);
    assert_eq!(pairing.certificate.len(), 2);
    let h = xyz_target::<f64>(XyzTarget::Tat);
    let cfg = DtwaConfig { sampling: Sampling::Enumerate, ..Default::default() };
    let init = InitialState::new([0.0, 0.6, -0.8], 1.0).unwrap();
    let sched = echo_schedule(h, 0.6);
    let ex = exact_evolve(&j, &init, &sched, &ExactOptions::default(), &Groups::default()).unwrap();
    let dt = dtwa_run(&j, Some(&pairing), &init, &sched, &cfg, &NoiseModel::ideal(), &Groups::default()).unwrap();
    assert_series_close(&ex, &dt, 1e-9);
}

#[test]
fn free_spins_follow_rotations() {
    let j = matrix(3, &[]);
    let init = InitialState::plus_y(0.75);
    let sched = Schedule::new(vec![
        Segment::Rotate { axis: [1.0, 0.0, 0.0], angle: 0.4 },
        Segment::Evolve { h: xyz_target(XyzTarget::Tat), duration: 1.0 },
        Segment::Rotate { axis: [0.0, 0.0, 1.0], angle: -1.1 },
    ]);
    let cfg = DtwaConfig { n_traj: 2000, ..Default::default() };
    let out = dtwa_run(&j, None, &init, &sched, &cfg, &NoiseModel::ideal(), &Groups::default()).unwrap();
    let (s, c) = 0.4f64.sin_cos();
    let v = [0.0, 0.75 * c, 0.75 * s];
    let (s2, c2) = (-1.1f64).sin_cos();
    let want = [c2 * v[0] - s2 * v[1], s2 * v[0] + c2 * v[1], v[2]];
    let (m, e) = (out.mean.last().unwrap(), out.stderr.last().unwrap());
    for k in 0..3 {
        assert!((m[k] - want[k]).abs() <= 3.0 * e[k] + 1e-12, "{m:?} {want:?} {e:?}");
    }
    // Each Wigner sample rotates rigidly, so the enumerated average is exact.
    let cfg = DtwaConfig { sampling: Sampling::Enumerate, ..Default::default() };
    let out = dtwa_run(&j, None, &init, &sched, &cfg, &NoiseModel::ideal(), &Groups::default()).unwrap();
    for k in 0..3 {
        assert!((out.mean.last().unwrap()[k] - want[k]).abs() < 1e-12);
    }
}

#[test]
fn partial_polarization_at_t0() {
    let j = disordered(20, 3);
    let sched = Schedule::new(vec![Segment::Evolve { h: xyz_target(XyzTarget::Tat), duration: 0.0 }]);
    let cfg = DtwaConfig { n_traj: 400, ..Default::default() };
    let out = dtwa_run(&j, None, &InitialState::plus_y(0.75), &sched, &cfg, &NoiseModel::ideal(), &Groups::default()).unwrap();
    let (m, e) = (out.mean[0], out.stderr[0]);
    assert!((m[1] - 0.75).abs() <= 3.0 * e[1]);
    assert!(e[1] > 0.0);
}

#[test]
fn dtwa_tracks_exact_for_six_spins() {
    let j = disordered(6, 8);
    let pairing = dimer_pairing(&j);
    let h = xyz_target::<f64>(XyzTarget::Tat);
    let t = 1.0 / max_twist(&j);
    let sched = Schedule::new(vec![Segment::Evolve { h, duration: t }]).sampled_every(t / 5.0);
    let init = InitialState::plus_y(1.0);
    let ex = exact_evolve(&j, &init, &sched, &ExactOptions::default(), &Groups::default()).unwrap();
    let cfg = DtwaConfig { n_traj: 10_000, seed: 5, ..Default::default() };
    let dt = dtwa_run(&j, Some(&pairing), &init, &sched, &cfg, &NoiseModel::ideal(), &Groups::default()).unwrap();
    assert_series_close(&ex, &dt, 0.02);
}

#[test]
fn heisenberg_mean_field_is_stationary() {
    let j = disordered(30, 2);
    let heis = EngineeredHamiltonian::from_g([1.0 / 3.0; 3]);
    let scale = j.iter_pairs().map(|(_, _, c)| c.heis.abs()).fold(0.0, f64::max);
    let sched = Schedule::new(vec![Segment::Evolve { h: heis, duration: 3.0 / scale }]);
    let cfg = DtwaConfig { n_traj: 300, ..Default::default() };
    let out = dtwa_run(&j, Some(&dimer_pairing(&j)), &InitialState::minus_y(1.0), &sched, &cfg, &NoiseModel::ideal(), &Groups::default()).unwrap();
    let (m, e) = (out.mean.last().unwrap(), out.stderr.last().unwrap());
    for (k, want) in [0.0, -1.0, 0.0].iter().enumerate() {
        assert!((m[k] - want).abs() <= 3.0 * e[k] + 1e-9, "{m:?} {e:?}");
    }
}

fn run_with_threads(threads: usize) -> ObservableSeries {
    let j = disordered(16, 6);
    let pairing = dimer_pairing(&j);
    let sched = echo_schedule(xyz_target(XyzTarget::Tat), 1.0 / max_twist(&j));
    let cfg = DtwaConfig { n_traj: 64, seed: 77, ..Default::default() };
    let noise = NoiseModel { asd: 0.5, ..NoiseModel::experimental() };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| dtwa_run(&j, Some(&pairing), &InitialState::plus_y(0.75), &sched, &cfg, &noise, &Groups::default()).unwrap())
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let a = run_with_threads(1);
    let b = run_with_threads(3);
    assert_eq!(a, b);
    assert_eq!(a.seed, 77);
    assert_eq!(a.n_traj, 64);
}

#[test]
fn zero_noise_amplitude_is_bit_exact() {
    let j = disordered(10, 6);
    let pairing = dimer_pairing(&j);
    let sched = echo_schedule(xyz_target(XyzTarget::Tat), 1.0 / max_twist(&j));
    let cfg = DtwaConfig { n_traj: 32, ..Default::default() };
    let run = |noise: &NoiseModel| dtwa_run(&j, Some(&pairing), &InitialState::plus_y(1.0), &sched, &cfg, noise, &Groups::default()).unwrap();
    let quiet = run(&NoiseModel::ideal());
    let zero = run(&NoiseModel { asd: 0.0, ..NoiseModel::experimental() });
    assert_eq!(quiet, zero);
    let noisy = run(&NoiseModel { asd: 0.5, ..NoiseModel::experimental() });
    assert_ne!(quiet, noisy);
}

#[test]
fn ou_dephasing_matches_analytic_decay() {
    let j = matrix(2, &[]);
    let z_only = EngineeredHamiltonian::from_g([0.0, 0.0, 1.0]);
    let noise = NoiseModel { asd: 0.2, ..NoiseModel::experimental() };
    let process = noise.process().unwrap();
    let t_end = 1.5;
    let sched = Schedule::new(vec![Segment::Evolve { h: z_only, duration: t_end }]).sampled_every(0.5);
    let cfg = DtwaConfig { n_traj: 10_000, ..Default::default() };
    let out = dtwa_run(&j, None, &InitialState::new([1.0, 0.0, 0.0], 1.0).unwrap(), &sched, &cfg, &noise, &Groups::default()).unwrap();
    for (t, m) in out.times.iter().zip(&out.mean) {
        let want = process.dephasing(*t);
        assert!((m[0] - want).abs() <= 0.05 * want, "t {t}: {} vs {want}", m[0]);
    }
    assert!(process.dephasing(t_end) < 0.5);
}

#[test]
fn ou_spectrum_is_calibrated() {
    let p = OuProcess::from_asd(0.019, 37.0, 0.0043).unwrap();
    assert!((p.psd(37.0).sqrt() - 0.019).abs() < 1e-12);
    let dt = 0.001;
    let seg = 1000;
    let step = p.step_coefficients(dt);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x = p.stationary(&mut rng);
    let n_seg = 2000;
    let mut acc = 0.0;
    let w = 2.0 * std::f64::consts::PI * 37.0;
    for _ in 0..n_seg {
        let (mut re, mut im) = (0.0, 0.0);
        for k in 0..seg {
            let (s, c) = (w * k as f64 * dt).sin_cos();
            re += x * c;
            im -= x * s;
            step.advance(&mut x, &mut rng);
        }
        acc += 2.0 * dt * dt / (seg as f64 * dt) * (re * re + im * im);
    }
    let est = acc / n_seg as f64;
    assert!((est / p.psd(37.0) - 1.0).abs() < 0.1, "{est} vs {}", p.psd(37.0));
    // T2 under the default noise sits near 140 us.
    let t2 = (1..400).map(|k| k as f64).find(|&t| p.dephasing(t) < (-1f64).exp()).unwrap();
    assert!((130.0..150.0).contains(&t2), "{t2}");
    assert!(OuProcess::from_asd(0.019, 37.0, 0.0).is_err());
}

#[test]
fn group_series_partition_the_mean() {
    let j = disordered(12, 3);
    let report = dipecho::ensemble::coordination(&j, Default::default()).unwrap();
    let groups = Groups::from_tertiles(&report);
    let sched = echo_schedule(xyz_target(XyzTarget::Tat), 1.0 / max_twist(&j));
    let cfg = DtwaConfig { n_traj: 16, ..Default::default() };
    let out = dtwa_run(&j, Some(&dimer_pairing(&j)), &InitialState::plus_y(1.0), &sched, &cfg, &NoiseModel::ideal(), &groups).unwrap();
    assert_eq!(out.groups.len(), 3);
    for (t, m) in out.mean.iter().enumerate() {
        let avg: f64 = out.groups.iter().map(|g| g.mean[t][1]).sum::<f64>() / 3.0;
        assert!((avg - m[1]).abs() < 1e-12);
    }
    let _ = DimerPairing::singletons(3);
}
