use dipecho::dimer::*;
use dipecho::floquet::{xyz_target, EngineeredHamiltonian, XyzTarget};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn pauli() -> [DMatrix<C>; 3] {
    let z = C::new(0.0, 0.0);
    let o = C::new(1.0, 0.0);
    let i = C::new(0.0, 1.0);
    [
        DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    ]
}

fn kron(a: &DMatrix<C>, b: &DMatrix<C>) -> DMatrix<C> {
    a.kronecker(b)
}

/// Two-spin echo: |-Y -Y>, forward H for t+, rotate by delta about the
/// collective axis s, evolve with -H for t-, read the mean of m.
fn echo(g: [f64; 3], s: [f64; 3], m: [f64; 3], tp: f64, tm: f64, delta: f64) -> f64 {
    let p = pauli();
    let id = DMatrix::<C>::identity(2, 2);
    let mut h = DMatrix::<C>::zeros(4, 4);
    for a in 0..3 {
        h += kron(&p[a], &p[a]) * C::from(g[a]);
    }
    let coll = |v: [f64; 3]| {
        let mut o = DMatrix::<C>::zeros(4, 4);
        for a in 0..3 {
            o += (kron(&p[a], &id) + kron(&id, &p[a])) * C::from(v[a]);
        }
        o
    };
    let minus_y = DVector::from_vec(vec![C::new(1.0 / 2f64.sqrt(), 0.0), C::new(0.0, -1.0 / 2f64.sqrt())]);
    let psi = minus_y.kronecker(&minus_y);
    let u = |op: &DMatrix<C>, t: f64| (op * C::new(0.0, -t)).exp();
    let phi = u(&(-&h), tm) * u(&coll(s), delta / 2.0) * u(&h, tp) * psi;
    let obs = coll(m) * C::from(0.5);
    (phi.adjoint() * obs * phi)[(0, 0)].re
}

fn fd_chi(g: [f64; 3], s: [f64; 3], m: [f64; 3], tp: f64, tm: f64) -> f64 {
    let d = 1e-4;
    (echo(g, s, m, tp, tm, d) - echo(g, s, m, tp, tm, -d)) / (2.0 * d)
}

const X: [f64; 3] = [1.0, 0.0, 0.0];
const Z: [f64; 3] = [0.0, 0.0, 1.0];

#[test]
fn chi_matches_exact_two_spin_echo() {
    for h in [xyz_target::<f64>(XyzTarget::Tat), xyz_target(XyzTarget::XyzPaper), EngineeredHamiltonian::from_g([0.1, 0.5, -0.2])] {
        let g = h.bond(0.0, 1.7);
        let sp = dimer_spectrum_bond(g);
        for &(tp, tm) in &[(0.0, 0.0), (0.3, 0.5), (0.7, 1.9), (1.1, 0.2)] {
            let chi = chi_dimer(sp.omega_x, sp.omega_z, tp, tm);
            let basis = [X, Z];
            for (r, mv) in basis.iter().enumerate() {
                for (c, sv) in basis.iter().enumerate() {
                    let e = fd_chi(g, *sv, *mv, tp, tm);
                    assert!((chi[r][c] - e).abs() < 1e-6, "{g:?} ({tp},{tm}) [{r}][{c}]: {} vs {e}", chi[r][c]);
                }
            }
        }
    }
}

#[test]
fn tat_amplitude_matches_exact_echo() {
    let j = 0.9;
    let k = 1.0 / 2f64.sqrt();
    let s = [-k, 0.0, k];
    let m = [k, 0.0, k];
    for &(tp, tm) in &[(0.2, 0.4), (0.5, 1.5), (1.0, 0.3)] {
        let exact = fd_chi([j, 0.0, -j], s, m, tp, tm);
        assert!((amp_dimer_tat(j, tp, tm) - exact).abs() < 1e-6);
        let sp = dimer_spectrum_bond([j, 0.0, -j]);
        assert!((amp_from_chi(&chi_dimer(sp.omega_x, sp.omega_z, tp, tm)) - exact).abs() < 1e-6);
    }
}

#[test]
fn unperturbed_and_symmetric_points() {
    assert_eq!(amp_dimer_tat(1.3, 0.0, 0.0), 1.0);
    // Symmetric echo t- = t+: only the Heisenberg-like part survives.
    let (j, t) = (0.8f64, 0.6);
    let a = amp_dimer_tat(j, t, t);
    assert!((a - ((2.0 * j * t).sin() + (2.0 * j * t).cos())).abs() < 1e-14);
}

#[test]
fn xyz_peak_ratios_from_golden_search() {
    let h = xyz_target::<f64>(XyzTarget::XyzPaper);
    let sp = dimer_spectrum(&h, 2.0);
    let tp = 0.4;
    let w = sp.omega_x + sp.omega_z;
    // chi[0][1] peaks at omega_x t- = w t+.
    let guess = w * tp / sp.omega_x;
    let (x, f) = golden_max(|tm| chi_dimer(sp.omega_x, sp.omega_z, tp, tm)[0][1], 0.5 * guess, 1.5 * guess, 1e-10);
    assert!((f - 1.0).abs() < 1e-12);
    assert!((x / tp - sp.ratio_xz.value().unwrap()).abs() < 1e-6);
    let guess = w * tp / sp.omega_z;
    let (x, _) = golden_max(|tm| -chi_dimer(sp.omega_x, sp.omega_z, tp, tm)[1][0], 0.7 * guess, 1.3 * guess, 1e-10);
    assert!((x / tp - sp.ratio_zx.value().unwrap()).abs() < 1e-6);
}

#[test]
fn golden_max_on_parabola() {
    let (x, f) = golden_max(|x: f64| 3.0 - (x - 1.25).powi(2), -4.0, 9.0, 1e-12);
    assert!((x - 1.25).abs() < 1e-6 && (f - 3.0).abs() < 1e-12);
}

#[test]
fn disorder_average_statistics() {
    let tp = [0.0, 0.5];
    let tm = [0.0, 0.25, 1.0];
    let js = [0.3, -0.7, 1.1, 0.05];
    let g = disorder_average(&js, &tp, &tm);
    for (i, &a) in tp.iter().enumerate() {
        for (k, &b) in tm.iter().enumerate() {
            let v: Vec<f64> = js.iter().map(|&j| amp_dimer_tat(j, a, b)).collect();
            let m = v.iter().sum::<f64>() / 4.0;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 3.0;
            assert!((g.mean[i][k] - m).abs() < 1e-14);
            assert!((g.stderr[i][k] - (var / 4.0).sqrt()).abs() < 1e-14);
        }
    }
    assert_eq!(g.mean[0][0], 1.0);
    let (v, i, k) = g.peak();
    assert_eq!(v, g.mean[i][k]);
    assert!(g.mean.iter().flatten().all(|&x| x <= v));
}

proptest! {
    #[test]
    fn amplitude_is_bounded(j in -3.0f64..3.0, tp in 0.0f64..5.0, tm in 0.0f64..10.0) {
        prop_assert!(amp_dimer_tat(j, tp, tm).abs() <= 2.0 + 1e-12);
    }

    #[test]
    fn closed_form_reduces_to_tat(j in -3.0f64..3.0, tp in 0.0f64..5.0, tm in 0.0f64..10.0) {
        let sp = dimer_spectrum_bond([j, 0.0, -j]);
        let a = amp_from_chi(&chi_dimer(sp.omega_x, sp.omega_z, tp, tm));
        prop_assert!((a - amp_dimer_tat(j, tp, tm)).abs() < 1e-12);
    }

    #[test]
    fn spectrum_is_traceless(gx in -2.0f64..2.0, gy in -2.0f64..2.0, gz in -2.0f64..2.0) {
        let s = dimer_spectrum_bond([gx, gy, gz]);
        prop_assert!(s.epsilon.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!((s.omega_x - 2.0 * (gy - gz)).abs() < 1e-12);
        prop_assert!((s.omega_z - 2.0 * (gx - gy)).abs() < 1e-12);
    }
}
