use std::f64::consts::PI;

use approx::assert_relative_eq;
use multiwell::fluctuation::k0_analytic;
use multiwell::instanton::solve_trajectory;
use multiwell::oracle::propagator_2x2;
use multiwell::potential::{adjacent_pairs, find_wells, WellSearch};
use multiwell::twolevel::{
    asymmetry_prefactor, kay_factor, overlap_even, overlap_odd, resolvent_even, resolvent_odd, simplex_term_even,
    simplex_term_odd, two_level_energies, wavefunction_amplitudes, TwoLevelSystem,
};
use multiwell::{Error, PotentialModel, Preset};
use proptest::prelude::*;

/// Triple well with ω_m = 1: e_i = ħ/2 in the middle, e_f = ħ at the sides.
fn triple(hbar: f64, big_k: f64) -> TwoLevelSystem {
    two_level_energies(0.5 * hbar, hbar, hbar, big_k, 2).unwrap()
}

#[test]
fn equal_levels_split_symmetrically() {
    for g in [1, 2, 3] {
        let s = two_level_energies(0.5, 0.5, 0.8, 0.02, g).unwrap();
        let v = (g as f64).sqrt() * 0.8 * 0.02;
        assert_relative_eq!(s.e_plus, 0.5 + v, max_relative = 1e-15);
        assert_relative_eq!(s.e_minus, 0.5 - v, max_relative = 1e-15);
    }
}

#[test]
fn triple_well_level_shift() {
    let (hbar, big_k) = (0.05, 0.07);
    let s = triple(hbar, big_k);
    // k = 2K/ω_m; the shift of each level is (e_fi/2)(√(1+8k²) − 1).
    let k = 2.0 * big_k;
    let shift = 0.25 * hbar * ((1.0 + 8.0 * k * k).sqrt() - 1.0);
    assert_relative_eq!(s.delta_e, shift, max_relative = 1e-14);
    assert_relative_eq!(s.e_plus - s.e_minus, 0.5 * hbar + 2.0 * shift, max_relative = 1e-14);
    assert_relative_eq!(s.small_k.unwrap(), 2f64.sqrt() * k, max_relative = 1e-14);
}

#[test]
fn weak_coupling_decouples_the_wells() {
    let s = two_level_energies(0.3, 0.7, 1.0, 1e-12, 1).unwrap();
    assert_relative_eq!(s.e_plus, 0.7, max_relative = 1e-15);
    assert_relative_eq!(s.e_minus, 0.3, max_relative = 1e-15);
}

#[test]
fn invalid_inputs() {
    assert!(two_level_energies(0.5, 0.5, 1.0, 0.0, 1).is_err());
    assert!(two_level_energies(0.5, 0.5, 0.0, 0.1, 1).is_err());
    assert!(two_level_energies(0.5, 0.5, 1.0, 0.1, 0).is_err());
}

#[test]
fn symmetric_double_well_overlaps() {
    let s = two_level_energies(0.5, 0.5, 1.0, 0.01, 1).unwrap();
    for tau in [0.0, 1.0, 10.0, 200.0] {
        let (e0, e1) = ((-s.e_minus * tau).exp(), (-s.e_plus * tau).exp());
        assert_relative_eq!(overlap_odd(&s, tau), 0.5 * (e0 - e1), epsilon = 1e-16, max_relative = 1e-13);
        assert_relative_eq!(overlap_even(&s, tau), 0.5 * (e0 + e1), max_relative = 1e-14);
    }
}

#[test]
fn triple_well_overlaps() {
    let (hbar, big_k) = (0.1, 0.2);
    let s = triple(hbar, big_k);
    let k = 2.0 * big_k;
    let r = (1.0 + 8.0 * k * k).sqrt();
    for tau in [0.5, 3.0, 20.0] {
        let (e0, e2) = ((-s.e_minus * tau / hbar).exp(), (-s.e_plus * tau / hbar).exp());
        // One side well sees the odd overlap divided by √g.
        let side = overlap_odd(&s, tau) / 2f64.sqrt();
        assert_relative_eq!(side, k / r * (e0 - e2), max_relative = 1e-13);
        let middle = 0.5 * (1.0 + 1.0 / r) * e0 + 0.5 * (1.0 - 1.0 / r) * e2;
        assert_relative_eq!(overlap_even(&s, tau), middle, max_relative = 1e-13);
    }
}

#[test]
fn overlap_slopes_at_zero() {
    let s = two_level_energies(0.4, 0.9, 0.7, 0.05, 2).unwrap();
    let h = 1e-6;
    let d_even = (overlap_even(&s, h) - overlap_even(&s, 0.0)) / h;
    let d_odd = (overlap_odd(&s, h) - overlap_odd(&s, 0.0)) / h;
    assert_relative_eq!(d_even, -s.e_i / s.hbar, max_relative = 1e-5);
    assert_relative_eq!(d_odd, 2f64.sqrt() * s.big_k, max_relative = 1e-5);
}

#[test]
fn resolvent_poles_and_decoupled_limit() {
    let s = two_level_energies(0.5, 1.0, 1.0, 0.1, 2).unwrap();
    assert!(matches!(resolvent_odd(&s, s.e_plus), Err(Error::ResolventPole { .. })));
    assert!(matches!(resolvent_even(&s, s.e_minus), Err(Error::ResolventPole { .. })));
    let free = two_level_energies(0.5, 1.0, 1.0, 1e-300, 1).unwrap();
    for e in [-1.0, 0.2, 0.45] {
        assert_relative_eq!(resolvent_even(&free, e).unwrap(), 1.0 / (0.5 - e), max_relative = 1e-14);
    }
}

#[test]
fn first_odd_term_and_its_degenerate_limit() {
    let s = two_level_energies(0.5, 0.8, 1.3, 0.05, 1).unwrap();
    let tau = 4.0;
    let h = s.hbar;
    let exact = 0.05 * ((-0.5 * tau / h).exp() - (-0.8 * tau / h).exp()) * h / 0.3;
    assert_relative_eq!(simplex_term_odd(0, &s, tau).unwrap(), exact, max_relative = 1e-12);
    let d = two_level_energies(0.5, 0.5, 1.3, 0.05, 1).unwrap();
    assert_relative_eq!(
        simplex_term_odd(0, &d, tau).unwrap(),
        0.05 * tau * (-0.5 * tau / h).exp(),
        max_relative = 1e-12
    );
}

#[test]
fn simplex_series_sums_to_the_resummed_overlaps() {
    let s = two_level_energies(0.5, 0.9, 1.0, 0.08, 2).unwrap();
    let tau = 6.0;
    let odd: f64 = (0..=8).map(|n| simplex_term_odd(n, &s, tau).unwrap()).sum();
    let even: f64 = (0..=8).map(|n| simplex_term_even(n, &s, tau).unwrap()).sum();
    assert_relative_eq!(odd, overlap_odd(&s, tau), max_relative = 1e-12);
    assert_relative_eq!(even, overlap_even(&s, tau), max_relative = 1e-12);
    // Truncating earlier leaves a larger remainder.
    let short: f64 = (0..=2).map(|n| simplex_term_odd(n, &s, tau).unwrap()).sum();
    assert!((short - overlap_odd(&s, tau)).abs() > (odd - overlap_odd(&s, tau)).abs());
}

#[test]
fn wavefunction_tables() {
    let wells = |ws: &[(f64, f64)]| -> Vec<multiwell::Well> {
        ws.iter()
            .map(|&(position, omega)| multiwell::Well {
                position,
                omega,
                level: 0.0,
            })
            .collect()
    };
    let hbar = 0.3;
    // Symmetric double well: |ψ₀(±a)| = (1/√2)(ω/πħ)^{1/4}.
    let dw = wells(&[(-1.0, 1.0), (1.0, 1.0)]);
    let s = two_level_energies(0.5 * hbar, 0.5 * hbar, hbar, 0.01, 1).unwrap();
    let rows = wavefunction_amplitudes(&s, &dw[0], &dw[1..]).unwrap();
    let expect = (1.0 / (PI * hbar)).powf(0.25) / 2f64.sqrt();
    for r in rows.iter().filter(|r| r.level == 0) {
        assert_relative_eq!(r.value.abs(), expect, max_relative = 1e-14);
    }

    // Triple well, middle: √((1 + (1+8k²)^{−1/2})/2)(ω_m/πħ)^{1/4}.
    let tw = wells(&[(-1.0, 2.0), (0.0, 1.0), (1.0, 2.0)]);
    let big_k = 0.3;
    let s = triple(hbar, big_k);
    let rows = wavefunction_amplitudes(&s, &tw[1], &[tw[0], tw[2]]).unwrap();
    let k = 2.0 * big_k;
    let middle = ((1.0 + (1.0 + 8.0 * k * k).powf(-0.5)) / 2.0).sqrt() * (1.0 / (PI * hbar)).powf(0.25);
    let psi0_mid = rows.iter().find(|r| r.level == 0 && r.well_position == 0.0).unwrap();
    assert_relative_eq!(psi0_mid.value, middle, max_relative = 1e-14);
    // The antisymmetric level has a node in the middle.
    let psi1_mid = rows.iter().find(|r| r.level == 1 && r.well_position == 0.0).unwrap();
    assert_eq!(psi1_mid.value, 0.0);
    // Large k: the middle weight tends to 1/√2.
    let strong = triple(hbar, 1e6);
    let rows = wavefunction_amplitudes(&strong, &tw[1], &[tw[0], tw[2]]).unwrap();
    let v = rows.iter().find(|r| r.level == 0 && r.well_position == 0.0).unwrap().value;
    // The approach is O(1/k).
    assert_relative_eq!(v, (1.0 / (PI * hbar)).powf(0.25) / 2f64.sqrt(), max_relative = 1e-6);

    assert!(wavefunction_amplitudes(&s, &tw[1], &tw[..1]).is_err());
}

#[test]
fn kay_factor_of_the_double_well() {
    let m = PotentialModel::from_preset(&Preset::SymmetricDoubleWell {
        lambda: 0.2,
        a: None,
        omega: Some(1.0),
    })
    .unwrap();
    let wells = find_wells(&m, &WellSearch::default()).unwrap();
    let pair = adjacent_pairs(&m, &wells)[0];
    let sol = solve_trajectory(&m, &pair, 40.0, 1e-26).unwrap();
    let k0 = k0_analytic(sol.amp_i, sol.amp_f, 1.0, 1.0).unwrap();
    let kf = kay_factor(&sol, k0, 1.0).unwrap();
    let exact = (10.0 / (2.0 * PI)).sqrt() * (-10.0f64).exp() * 2.0 * 3f64.sqrt();
    assert_relative_eq!(kf.value, exact, max_relative = 1e-8);
    assert_eq!(kf.prefactor, 1.0);
    assert!(kf.max_relative_spread <= 1e-8);
    assert!(kf.warning.is_none());
    // S̄/ħ = 3 is accepted with a warning; below 1 is refused.
    assert!(kay_factor(&sol, k0, 10.0 / 3.0).unwrap().warning.is_some());
    assert!(kay_factor(&sol, k0, 20.0).is_err());
}

#[test]
fn triple_well_prefactor() {
    assert_relative_eq!(asymmetry_prefactor(1.0, 2.0), (2.0 * 2f64.sqrt() / 3.0).sqrt(), max_relative = 1e-15);
    assert_eq!(asymmetry_prefactor(1.7, 1.7), 1.0);
}

fn system() -> impl Strategy<Value = TwoLevelSystem> {
    (0.05..1.0f64, 0.2..3.0f64, 0.2..3.0f64, -4.0..0.0f64, 1u32..4).prop_map(|(hbar, wi, wf, lk, g)| {
        two_level_energies(0.5 * hbar * wi, 0.5 * hbar * wf, hbar, 10f64.powf(lk), g).unwrap()
    })
}

proptest! {
    #[test]
    fn trace_determinant_and_ordering(s in system()) {
        let scale = s.e_i + s.e_f;
        prop_assert!((s.e_plus + s.e_minus - scale).abs() <= 4.0 * f64::EPSILON * scale);
        let v2 = s.coupling().powi(2);
        prop_assert!((s.e_plus * s.e_minus - (s.e_i * s.e_f - v2)).abs() <= 8.0 * f64::EPSILON * scale * scale);
        prop_assert!(s.e_plus >= s.e_f && s.e_f >= s.e_i && s.e_i >= s.e_minus);
    }

    #[test]
    fn overlaps_match_the_propagator(s in system(), x in 0.0..8.0f64) {
        let tau = x * s.hbar / s.e_i;
        let p = propagator_2x2(&s, tau);
        let odd = overlap_odd(&s, tau);
        prop_assert!((odd - p[1][0]).abs() <= 1e-12 * p[1][0].abs().max(f64::MIN_POSITIVE) || odd == p[1][0]);
        prop_assert!((overlap_even(&s, tau) / p[0][0] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn input_order_does_not_matter(s in system()) {
        let t = two_level_energies(s.e_f, s.e_i, s.hbar, s.big_k, s.degeneracy).unwrap();
        prop_assert_eq!(t.e_plus, s.e_plus);
        prop_assert_eq!(t.e_minus, s.e_minus);
        prop_assert_eq!(t.swapped, s.e_f > s.e_i);
    }
}
