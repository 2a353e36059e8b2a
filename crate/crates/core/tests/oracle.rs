use approx::assert_relative_eq;
use multiwell::fluctuation::FluctuationOperator;
use multiwell::oracle::{
    default_grid, diagonalize_fluctuation, diagonalize_schrodinger, endpoint_wavefunction_values, laplace_transform,
    nested_simplex_integral, propagator_2x2, GridSpec,
};
use multiwell::potential::{find_wells, WellSearch};
use multiwell::tridiag::SymTridiag;
use multiwell::twolevel::{overlap_odd, resolvent_odd, two_level_energies};
use multiwell::{PotentialModel, Preset};
use proptest::prelude::*;

fn oscillator() -> PotentialModel {
    PotentialModel::new(vec![0.0, 0.0, 0.5]).unwrap()
}

fn sho_grid(n_points: usize) -> GridSpec {
    GridSpec {
        x_min: -12.0,
        x_max: 12.0,
        n_points,
        hbar: 1.0,
    }
}

fn double_well_spectrum(hbar: f64, n_levels: usize) -> (PotentialModel, multiwell::oracle::SpectralResult) {
    let m = PotentialModel::from_preset(&Preset::SymmetricDoubleWell {
        lambda: 3.0,
        a: None,
        omega: Some(1.0),
    })
    .unwrap();
    let wells = find_wells(&m, &WellSearch::default()).unwrap();
    let grid = default_grid(&m, &wells, hbar, n_levels);
    let spec = diagonalize_schrodinger(&m, &grid, n_levels).unwrap();
    (m, spec)
}

#[test]
fn harmonic_oscillator_levels() {
    let spec = diagonalize_schrodinger(&oscillator(), &sho_grid(4096), 4).unwrap();
    for (k, e) in spec.energies.iter().enumerate() {
        assert!((e - (k as f64 + 0.5)).abs() < 1e-8, "level {k}: {e}");
    }
}

#[test]
fn harmonic_ground_state_peak() {
    let spec = diagonalize_schrodinger(&oscillator(), &sho_grid(4096), 1).unwrap();
    let peak = endpoint_wavefunction_values(&spec, &[0.0])[0][0];
    let exact = std::f64::consts::PI.powf(-0.25);
    assert!((peak - exact).abs() < 1e-6, "{peak} vs {exact}");
}

#[test]
fn refinement_stays_within_the_error_estimate() {
    let coarse = diagonalize_schrodinger(&oscillator(), &sho_grid(2048), 4).unwrap();
    let fine = diagonalize_schrodinger(&oscillator(), &sho_grid(4097), 4).unwrap();
    for k in 0..4 {
        let change = (fine.energies[k] - coarse.energies[k]).abs();
        assert!(change <= coarse.error_estimates[k], "level {k}: {change:e} > {:e}", coarse.error_estimates[k]);
    }
}

#[test]
fn double_well_parity_and_ordering() {
    let (_, spec) = double_well_spectrum(0.1, 4);
    assert!(spec.energies.windows(2).all(|p| p[0] < p[1]), "{:?}", spec.energies);
    let n = spec.x.len();
    for (k, psi) in spec.wavefunctions.iter().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let peak = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            assert!((psi[j] - sign * psi[n - 1 - j]).abs() <= 1e-9 * peak, "level {k}, node {j}");
        }
    }
}

#[test]
fn wavefunctions_are_normalized() {
    let (_, spec) = double_well_spectrum(0.1, 3);
    let h = spec.x[1] - spec.x[0];
    for psi in &spec.wavefunctions {
        let norm: f64 = psi.iter().map(|v| v * v).sum::<f64>() * h;
        assert_relative_eq!(norm, 1.0, max_relative = 1e-12);
    }
}

#[test]
fn triple_well_first_excited_state_vanishes_in_the_middle() {
    let m = PotentialModel::from_preset(&Preset::TripleWell { lambda: 1.0, a: 1.0 }).unwrap();
    let wells = find_wells(&m, &WellSearch::default()).unwrap();
    let grid = default_grid(&m, &wells, 0.05, 3);
    let spec = diagonalize_schrodinger(&m, &grid, 3).unwrap();
    let at = endpoint_wavefunction_values(&spec, &[-1.0, 0.0, 1.0]);
    assert!(at[1][1] < 1e-8 * at[1][0], "{:?}", at[1]);
    assert_relative_eq!(at[1][0], at[1][2], max_relative = 1e-9);
}

#[test]
fn fluctuation_box_eigenvalue() {
    for (omega, len) in [(1.0, 8.0), (0.5, 5.0), (2.0, 3.0)] {
        let op = FluctuationOperator::constant(omega, 0.0, len, 1.0 / 32.0).unwrap();
        let spec = diagonalize_fluctuation(&op, 2000, 1e-26).unwrap();
        let exact = omega * omega + (std::f64::consts::PI / len).powi(2);
        assert!((spec.lambda0 - exact).abs() < 1e-6, "ω = {omega}: {} vs {exact}", spec.lambda0);
        assert_eq!(spec.nodes, 0);
        assert!(spec.lambda1_grid > spec.lambda0_grid);
    }
}

#[test]
fn propagator_identity_and_semigroup() {
    let sys = two_level_energies(0.7, 0.4, 0.3, 0.05, 2).unwrap();
    let p0 = propagator_2x2(&sys, 0.0);
    assert_eq!(p0, [[1.0, 0.0], [0.0, 1.0]]);
    let (a, b) = (1.3, 2.1);
    let pa = propagator_2x2(&sys, a);
    let pb = propagator_2x2(&sys, b);
    let pab = propagator_2x2(&sys, a + b);
    for r in 0..2 {
        for c in 0..2 {
            let prod = pa[r][0] * pb[0][c] + pa[r][1] * pb[1][c];
            assert!((prod - pab[r][c]).abs() <= 1e-13 * pab[0][0].abs().max(pab[1][1].abs()));
        }
    }
}

#[test]
fn first_nested_integral_closed_form() {
    let (ei, ef, hbar, k) = (0.9, 0.4, 0.5, 0.02);
    let sys = two_level_energies(ei, ef, hbar, k, 1).unwrap();
    // Only the ordering of the inputs matters; read back which energy starts.
    let (e1, e2) = (sys.e_i, sys.e_f);
    for tau in [0.5, 2.0, 6.0] {
        let exact = k * ((-e2 * tau / hbar).exp() - (-e1 * tau / hbar).exp()) / ((e1 - e2) / hbar);
        let got = nested_simplex_integral(1, &sys, tau).unwrap();
        assert_relative_eq!(got, exact, max_relative = 1e-11);
    }
    assert!(nested_simplex_integral(0, &sys, 1.0).is_err());
    assert!(nested_simplex_integral(4, &sys, 1.0).is_err());
}

#[test]
fn laplace_of_an_exponential() {
    let sys = two_level_energies(1.0, 1.0, 0.5, 0.01, 1).unwrap();
    let a = sys.e_minus;
    for e in [0.2, 0.5, 0.8] {
        let got = laplace_transform(&sys, e * a, |t| (-a * t / sys.hbar).exp()).unwrap();
        assert_relative_eq!(got, 1.0 / (a - e * a), max_relative = 1e-10);
    }
    assert!(laplace_transform(&sys, a, |_| 1.0).is_err());
}

#[test]
fn laplace_of_the_odd_overlap_is_the_resolvent() {
    let sys = two_level_energies(0.5, 0.5, 0.1, 0.02, 1).unwrap();
    let e = sys.e_minus - sys.hbar * 0.5;
    let got = laplace_transform(&sys, e, |t| overlap_odd(&sys, t)).unwrap();
    assert_relative_eq!(got, resolvent_odd(&sys, e).unwrap(), max_relative = 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sturm_counts_bracket_each_eigenvalue(
        diag in prop::collection::vec(-5.0..5.0f64, 4..40),
        seed in prop::collection::vec(0.05..2.0f64, 39),
    ) {
        let off = seed[..diag.len() - 1].to_vec();
        let t = SymTridiag::new(diag.clone(), off);
        let (lo, hi) = t.gershgorin();
        prop_assert_eq!(t.sturm_count(lo - 1.0), 0);
        prop_assert_eq!(t.sturm_count(hi + 1.0), diag.len());
        let mut prev = f64::NEG_INFINITY;
        for k in 0..diag.len() {
            let l = t.eigenvalue(k);
            prop_assert!(l >= prev);
            prev = l;
            let d = 1e-9 * (1.0 + l.abs());
            prop_assert_eq!(t.sturm_count(l - d), k);
            prop_assert_eq!(t.sturm_count(l + d), k + 1);
        }
        // Trace is preserved.
        let sum: f64 = (0..diag.len()).map(|k| t.eigenvalue(k)).sum();
        let trace: f64 = diag.iter().sum();
        prop_assert!((sum - trace).abs() < 1e-9 * (1.0 + trace.abs()) * diag.len() as f64);
    }
}
