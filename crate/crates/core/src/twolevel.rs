//! K-factor assembly and the all-orders resummation of the dilute
//! instanton gas into an effective two-level system.
//!
//! A well coupled to `g` equivalent neighbours enters through the bright
//! combination of those neighbours, so the coupling is `√g·ħK` throughout.

use crate::error::{Error, Result};
use crate::instanton::InstantonSolution;
use crate::potential::Well;
use crate::quad;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KayFactor {
    pub value: f64,
    /// `((√(ω_f/ω_i) + √(ω_i/ω_f))/2)^{−1/2}`.
    pub prefactor: f64,
    /// `(ω_iω_f/π²ħ²)^{1/4} sqrt(A_iA_fS̄) e^{−S̄/ħ}`.
    pub via_amplitudes: f64,
    /// `(ω_i³ω_f³/π²ħ²)^{1/4} sqrt(C_iC_f) e^{−S̄/ħ}`.
    pub via_positions: f64,
    pub action_over_hbar: f64,
    pub max_relative_spread: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub const KAY_FORM_TOL: f64 = 1e-8;

pub fn asymmetry_prefactor(omega_i: f64, omega_f: f64) -> f64 {
    (0.5 * ((omega_f / omega_i).sqrt() + (omega_i / omega_f).sqrt())).powf(-0.5)
}

/// `K = prefactor · sqrt(S̄/2πħ) e^{−S̄/ħ} K₀`, cross-checked against the
/// amplitude and position forms.
pub fn kay_factor(sol: &InstantonSolution, k0: f64, hbar: f64) -> Result<KayFactor> {
    kay_factor_with_tol(sol, k0, hbar, KAY_FORM_TOL)
}

pub fn kay_factor_with_tol(sol: &InstantonSolution, k0: f64, hbar: f64, tol: f64) -> Result<KayFactor> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidInput("ħ must be positive".into()));
    }
    let s = sol.action / hbar;
    if !(s >= 1.0) {
        return Err(Error::InvalidInput(format!("S̄/ħ = {s} below 1: no dilute gas")));
    }
    let wi = sol.pair.initial.omega;
    let wf = sol.pair.final_.omega;
    let pre = asymmetry_prefactor(wi, wf);
    let log_main = pre.ln() + 0.5 * (sol.action / (2.0 * PI * hbar)).ln() - s + k0.ln();
    let log_amp = 0.25 * (wi * wf / (PI * PI * hbar * hbar)).ln()
        + 0.5 * (sol.amp_i * sol.amp_f * sol.action).ln()
        - s;
    let log_pos = 0.25 * ((wi * wf).powi(3) / (PI * PI * hbar * hbar)).ln() + 0.5 * (sol.c_i * sol.c_f).ln() - s;
    let spread = [(log_amp - log_main).abs(), (log_pos - log_main).abs(), (log_pos - log_amp).abs()]
        .into_iter()
        .fold(0.0f64, f64::max)
        .exp_m1();
    if !(spread <= tol) {
        return Err(Error::KayFormsDisagree { relative: spread });
    }
    Ok(KayFactor {
        value: log_main.exp(),
        prefactor: pre,
        via_amplitudes: log_amp.exp(),
        via_positions: log_pos.exp(),
        action_over_hbar: s,
        max_relative_spread: spread,
        warning: (s < 5.0).then(|| format!("S̄/ħ = {s:.3} < 5: dilute-gas treatment is marginal")),
    })
}

/// Effective two-level system with `e_f ≥ e_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelSystem {
    pub e_i: f64,
    pub e_f: f64,
    pub hbar: f64,
    pub big_k: f64,
    pub degeneracy: u32,
    /// `e_f − e_i ≥ 0`.
    pub e_split: f64,
    /// `√g·ħK/|e_fi|`, absent when the levels coincide.
    pub small_k: Option<f64>,
    pub e_plus: f64,
    pub e_minus: f64,
    /// Level shift `E_+ − e_f = e_i − E_−`.
    pub delta_e: f64,
    /// True when the inputs arrived with `e_f < e_i` and were exchanged.
    pub swapped: bool,
}

impl TwoLevelSystem {
    /// `√g·ħK`.
    pub fn coupling(&self) -> f64 {
        (self.degeneracy as f64).sqrt() * self.hbar * self.big_k
    }

    /// `sqrt((e_fi/2)² + g(ħK)²)`.
    pub fn half_gap(&self) -> f64 {
        0.5 * (self.e_plus - self.e_minus)
    }
}

pub fn two_level_energies(e_i: f64, e_f: f64, hbar: f64, big_k: f64, degeneracy: u32) -> Result<TwoLevelSystem> {
    if !(big_k > 0.0) {
        return Err(Error::InvalidInput("K must be positive".into()));
    }
    if !(hbar > 0.0) || degeneracy == 0 {
        return Err(Error::InvalidInput("ħ and g must be positive".into()));
    }
    let swapped = e_f < e_i;
    let (e_i, e_f) = if swapped { (e_f, e_i) } else { (e_i, e_f) };
    let e_fi = e_f - e_i;
    let v = (degeneracy as f64).sqrt() * hbar * big_k;
    let half = 0.5 * e_fi;
    let r = half.hypot(v);
    // R − e_fi/2 without cancellation.
    let delta_e = v * v / (r + half);
    Ok(TwoLevelSystem {
        e_i,
        e_f,
        hbar,
        big_k,
        degeneracy,
        e_split: e_fi,
        small_k: (e_fi > 0.0).then(|| v / e_fi),
        e_plus: e_f + delta_e,
        e_minus: e_i - delta_e,
        delta_e,
        swapped,
    })
}

/// `⟨f|e^{−τH/ħ}|i⟩` summed over all odd instanton numbers.
pub fn overlap_odd(sys: &TwoLevelSystem, tau: f64) -> f64 {
    let r = sys.half_gap();
    let v = sys.coupling();
    // (v/2R)(e^{−E₋τ/ħ} − e^{−E₊τ/ħ})
    -(v / (2.0 * r)) * (-sys.e_minus * tau / sys.hbar).exp() * (-2.0 * r * tau / sys.hbar).exp_m1()
}

/// `⟨i|e^{−τH/ħ}|i⟩` summed over all even instanton numbers.
pub fn overlap_even(sys: &TwoLevelSystem, tau: f64) -> f64 {
    let r = sys.half_gap();
    let c = 0.5 * sys.e_split / r;
    0.5 * (1.0 + c) * (-sys.e_minus * tau / sys.hbar).exp() + 0.5 * (1.0 - c) * (-sys.e_plus * tau / sys.hbar).exp()
}

fn resolvent_denominator(sys: &TwoLevelSystem, e: f64) -> Result<f64> {
    let v = sys.coupling();
    let den = (sys.e_f - e) * (sys.e_i - e) - v * v;
    let scale = (sys.e_f - e).abs() * (sys.e_i - e).abs() + v * v;
    if den.abs() <= 1e-14 * scale {
        return Err(Error::ResolventPole { energy: e });
    }
    Ok(den)
}

/// `√għK / ((e_f − E)(e_i − E) − g(ħK)²)`.
pub fn resolvent_odd(sys: &TwoLevelSystem, e: f64) -> Result<f64> {
    Ok(sys.coupling() / resolvent_denominator(sys, e)?)
}

/// `(e_f − E) / ((e_i − E)(e_f − E) − g(ħK)²)`.
pub fn resolvent_even(sys: &TwoLevelSystem, e: f64) -> Result<f64> {
    Ok((sys.e_f - e) / resolvent_denominator(sys, e)?)
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// The `(2n+1)`-instanton term `(√gK)^{2n+1} ∫₀^τ dT (Tⁿ/n!)((τ−T)ⁿ/n!) e^{−e_iT/ħ − e_f(τ−T)/ħ}`.
pub fn simplex_term_odd(n: usize, sys: &TwoLevelSystem, tau: f64) -> Result<f64> {
    if tau == 0.0 {
        return Ok(0.0);
    }
    let kk = (sys.degeneracy as f64).sqrt() * sys.big_k;
    let log_pre = (2 * n + 1) as f64 * kk.ln() - 2.0 * ln_factorial(n);
    let h = sys.hbar;
    let r = quad::integrate(
        |t| {
            let l = if n > 0 { n as f64 * (t.ln() + (tau - t).ln()) } else { 0.0 };
            (log_pre + l - sys.e_i * t / h - sys.e_f * (tau - t) / h).exp()
        },
        0.0,
        tau,
        1e-13,
        0.0,
    )?;
    Ok(r.value)
}

/// The `2n`-instanton term; `n = 0` is the bare `e^{−e_iτ/ħ}`, and for
/// `n ≥ 1` `(√gK)^{2n} ∫₀^τ dT (Tⁿ/n!)((τ−T)^{n−1}/(n−1)!) e^{−e_iT/ħ − e_f(τ−T)/ħ}`.
pub fn simplex_term_even(n: usize, sys: &TwoLevelSystem, tau: f64) -> Result<f64> {
    let h = sys.hbar;
    if n == 0 {
        return Ok((-sys.e_i * tau / h).exp());
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    let kk = (sys.degeneracy as f64).sqrt() * sys.big_k;
    let log_pre = (2 * n) as f64 * kk.ln() - ln_factorial(n) - ln_factorial(n - 1);
    let r = quad::integrate(
        |t| {
            let l = n as f64 * t.ln() + if n > 1 { (n - 1) as f64 * (tau - t).ln() } else { 0.0 };
            (log_pre + l - sys.e_i * t / h - sys.e_f * (tau - t) / h).exp()
        },
        0.0,
        tau,
        1e-13,
        0.0,
    )?;
    Ok(r.value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeRow {
    /// Position in the ascending list `E₋, (e_f)×(g−1), E₊`.
    pub level: usize,
    pub energy: f64,
    pub well_position: f64,
    /// Signed value of `ψ_level(well_position)`; the overall phase of each
    /// level is conventional.
    pub value: f64,
}

/// Endpoint wavefunction values of the two-level eigenstates, built from the
/// harmonic ground-state peaks `(ω/πħ)^{1/4}`. `i_well` is the single well,
/// `f_wells` its `g` equivalent neighbours.
pub fn wavefunction_amplitudes(sys: &TwoLevelSystem, i_well: &Well, f_wells: &[Well]) -> Result<Vec<AmplitudeRow>> {
    let g = sys.degeneracy as usize;
    if f_wells.len() != g {
        return Err(Error::InvalidInput(format!(
            "expected {g} partner wells, got {}",
            f_wells.len()
        )));
    }
    let hb = sys.hbar;
    let peak = |w: &Well| (w.omega / (PI * hb)).powf(0.25);
    let r = sys.half_gap();
    let c = 0.5 * (1.0 + 0.5 * sys.e_split / r);
    let gf = g as f64;
    let mut rows = Vec::new();
    let mut push = |level: usize, energy: f64, wi: f64, wf: &dyn Fn(usize) -> f64| {
        rows.push(AmplitudeRow {
            level,
            energy,
            well_position: i_well.position,
            value: wi * peak(i_well),
        });
        for (k, w) in f_wells.iter().enumerate() {
            rows.push(AmplitudeRow {
                level,
                energy,
                well_position: w.position,
                value: wf(k) * peak(w),
            });
        }
    };
    let lower_f = ((1.0 - c) / gf).sqrt();
    push(0, sys.e_minus, c.sqrt(), &|_| lower_f);
    // Dark combinations of the neighbours (Helmert basis) keep energy e_f.
    for m in 1..g {
        let norm = ((m * (m + 1)) as f64).sqrt();
        push(m, sys.e_f, 0.0, &move |k| {
            if k < m {
                1.0 / norm
            } else if k == m {
                -(m as f64) / norm
            } else {
                0.0
            }
        });
    }
    let upper_f = (c / gf).sqrt();
    push(g, sys.e_plus, -(1.0 - c).sqrt(), &|_| upper_f);
    Ok(rows)
}
