//! Gelfand–Yaglom evaluation of the 1-instanton fluctuation determinant.
//!
//! The operator is `Â = −∂²_τ + w(τ)` on `[τ_i, τ_f]` with Dirichlet ends.
//! Its initial-value solutions grow like `e^{ω·window}` while its lowest
//! eigenvalue is of order `e^{−ω·window}`, so the IVPs run in double-double
//! with Gragg–Bulirsch–Stoer steps over a fixed interval partition. The
//! coefficient `w` is tabulated once at every substep abscissa, which lets
//! forward sweeps, the step reference and the eigenvalue shooting in
//! [`crate::oracle`] share exactly the same discrete operator.

use std::fmt;
use std::sync::Arc;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::instanton::InstantonSolution;
use serde::{Deserialize, Serialize};

/// Modified-midpoint substep counts of the extrapolation tableau.
const SEQ: [usize; 8] = [2, 4, 6, 8, 10, 12, 14, 16];
const PER_INTERVAL: usize = 80; // Σ (n + 1)
const LOG2_RESCALE: i32 = 500;

/// A real number stored as `sign · e^{log_abs}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub log_abs: f64,
    pub sign: f64,
}

impl LogValue {
    pub fn value(&self) -> f64 {
        self.sign * self.log_abs.exp()
    }
}

type Source = Arc<dyn Fn(usize, Dd) -> Dd + Send + Sync>;

/// `−∂²_τ + w(τ)` on a partition of `[tau_i, tau_f]`.
#[derive(Clone)]
pub struct FluctuationOperator {
    pub tau_i: f64,
    pub tau_f: f64,
    pub tau1: f64,
    pub omega_i: f64,
    pub omega_f: f64,
    nodes: Vec<f64>,
    widths: Vec<f64>,
    source: Source,
    table: Arc<Vec<Dd>>,
}

impl fmt::Debug for FluctuationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluctuationOperator")
            .field("tau_i", &self.tau_i)
            .field("tau_f", &self.tau_f)
            .field("tau1", &self.tau1)
            .field("omega_i", &self.omega_i)
            .field("omega_f", &self.omega_f)
            .field("intervals", &self.widths.len())
            .finish()
    }
}

fn level_offset(level: usize) -> usize {
    SEQ[..level].iter().map(|n| n + 1).sum()
}

impl FluctuationOperator {
    /// General constructor. `source(j, s)` returns `w` at offset `s` from the
    /// left end of interval `j`.
    pub fn from_intervals(
        nodes: Vec<f64>,
        widths: Vec<f64>,
        omega_i: f64,
        omega_f: f64,
        tau1: f64,
        source: Source,
    ) -> Result<Self> {
        if nodes.len() < 2 || widths.len() + 1 != nodes.len() {
            return Err(Error::InvalidInput("operator needs at least one interval".into()));
        }
        if widths.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidInput("interval widths must be positive".into()));
        }
        let mut table = Vec::with_capacity(widths.len() * PER_INTERVAL);
        for (j, &h) in widths.iter().enumerate() {
            let hd = Dd::new(h);
            for &n in SEQ.iter() {
                for m in 0..=n {
                    let s = if m == n { hd } else { hd * m as f64 / n as f64 };
                    table.push(source(j, s));
                }
            }
        }
        Ok(Self {
            tau_i: nodes[0],
            tau_f: *nodes.last().unwrap(),
            tau1,
            omega_i,
            omega_f,
            nodes,
            widths,
            source,
            table: Arc::new(table),
        })
    }

    /// `V″(X̄(τ))` of an instanton on `[tau_i, tau_f]`, both snapped to the
    /// trajectory grid; continued by `ω±²` beyond the solved window.
    pub fn from_instanton(sol: &InstantonSolution, tau_i: f64, tau_f: f64) -> Result<Self> {
        let traj = sol.trajectory.clone();
        let ji = traj.knot_index(tau_i);
        let jf = traj.knot_index(tau_f);
        if jf <= ji {
            return Err(Error::InvalidInput("empty fluctuation window".into()));
        }
        let nodes: Vec<f64> = (ji..=jf).map(|j| traj.knot_time(j)).collect();
        let widths = vec![traj.h; (jf - ji) as usize];
        let source: Source = Arc::new(move |j, s| traj.curvature(ji + j as i64, s));
        Self::from_intervals(
            nodes,
            widths,
            sol.pair.initial.omega,
            sol.pair.final_.omega,
            sol.tau1,
            source,
        )
    }

    /// Window of total length `window` centred on τ₁.
    pub fn centered(sol: &InstantonSolution, window: f64) -> Result<Self> {
        Self::from_instanton(sol, sol.tau1 - 0.5 * window, sol.tau1 + 0.5 * window)
    }

    /// Constant `w ≡ ω²`.
    pub fn constant(omega: f64, tau_i: f64, tau_f: f64, max_step: f64) -> Result<Self> {
        let n = ((tau_f - tau_i) / max_step).ceil().max(1.0) as usize;
        let h = (tau_f - tau_i) / n as f64;
        let nodes = (0..=n).map(|k| tau_i + k as f64 * h).collect();
        let w = Dd::new(omega * omega);
        Self::from_intervals(nodes, vec![h; n], omega, omega, 0.5 * (tau_i + tau_f), Arc::new(move |_, _| w))
    }

    /// The step reference `ω_i²` before τ₁, `ω_f²` after, with τ₁ on a node so
    /// that no step straddles the jump.
    pub fn step_reference(r: &ReferenceOperator, max_step: f64) -> Result<Self> {
        let li = r.tau1 - r.tau_i;
        let lf = r.tau_f - r.tau1;
        if !(li > 0.0 && lf > 0.0) {
            return Err(Error::InvalidInput("τ₁ must lie strictly inside the window".into()));
        }
        let ni = (li / max_step).ceil() as usize;
        let nf = (lf / max_step).ceil() as usize;
        let hi = li / ni as f64;
        let hf = lf / nf as f64;
        let mut nodes: Vec<f64> = (0..ni).map(|k| r.tau_i + k as f64 * hi).collect();
        nodes.extend((0..=nf).map(|k| r.tau1 + k as f64 * hf));
        let mut widths = vec![hi; ni];
        widths.extend(std::iter::repeat(hf).take(nf));
        let (wi, wf) = (Dd::new(r.omega_i * r.omega_i), Dd::new(r.omega_f * r.omega_f));
        Self::from_intervals(
            nodes,
            widths,
            r.omega_i,
            r.omega_f,
            r.tau1,
            Arc::new(move |j, _| if j < ni { wi } else { wf }),
        )
    }

    pub fn reference(&self) -> ReferenceOperator {
        ReferenceOperator {
            omega_i: self.omega_i,
            omega_f: self.omega_f,
            tau1: self.tau1,
            tau_i: self.tau_i,
            tau_f: self.tau_f,
        }
    }

    pub fn intervals(&self) -> usize {
        self.widths.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Total length as the exact sum of interval widths.
    pub fn length(&self) -> f64 {
        self.widths.iter().sum()
    }

    /// `w(τ)` in f64; clamps to the window.
    pub fn w_of_tau(&self, tau: f64) -> f64 {
        let n = self.widths.len();
        let j = match self.nodes.binary_search_by(|x| x.total_cmp(&tau)) {
            Ok(k) => k.min(n - 1),
            Err(k) => k.saturating_sub(1).min(n - 1),
        };
        let s = (tau - self.nodes[j]).clamp(0.0, self.widths[j]);
        (self.source)(j, Dd::new(s)).to_f64()
    }

    fn interval_table(&self, j: usize) -> &[Dd] {
        &self.table[j * PER_INTERVAL..(j + 1) * PER_INTERVAL]
    }
}

/// One extrapolated step over interval `j` for `y′ = f(w − λ, y)`.
fn gbs_step<const N: usize>(
    op: &FluctuationOperator,
    j: usize,
    reverse: bool,
    lambda: Dd,
    y0: &[Dd; N],
    f: &impl Fn(Dd, &[Dd; N]) -> [Dd; N],
    tol: f64,
) -> [Dd; N] {
    let ws = op.interval_table(j);
    let span = if reverse { -op.widths[j] } else { op.widths[j] };
    let mut prev: Vec<[Dd; N]> = Vec::with_capacity(SEQ.len());
    for (level, &n) in SEQ.iter().enumerate() {
        let base = level_offset(level);
        let wl = |m: usize| {
            let idx = if reverse { n - m } else { m };
            ws[base + idx] - lambda
        };
        let h = Dd::new(span) / n as f64;
        let h2 = h * 2.0;
        let mut z0 = *y0;
        let d = f(wl(0), &z0);
        let mut z1 = [Dd::ZERO; N];
        for i in 0..N {
            z1[i] = z0[i] + h * d[i];
        }
        for m in 1..n {
            let d = f(wl(m), &z1);
            let mut z2 = [Dd::ZERO; N];
            for i in 0..N {
                z2[i] = z0[i] + h2 * d[i];
            }
            z0 = z1;
            z1 = z2;
        }
        let d = f(wl(n), &z1);
        let mut est = [Dd::ZERO; N];
        for i in 0..N {
            est[i] = (z1[i] + z0[i] + h * d[i]) * 0.5;
        }
        let mut row: Vec<[Dd; N]> = Vec::with_capacity(level + 1);
        row.push(est);
        for k in 1..=level {
            let ratio = (n as f64 / SEQ[level - k] as f64).powi(2) - 1.0;
            let mut next = [Dd::ZERO; N];
            for i in 0..N {
                next[i] = row[k - 1][i] + (row[k - 1][i] - prev[k - 1][i]) / ratio;
            }
            row.push(next);
        }
        if level >= 3 {
            let a = &row[level];
            let b = &row[level - 1];
            let scale = a.iter().fold(0.0f64, |m, x| m.max(x.hi.abs()));
            let err = a
                .iter()
                .zip(b)
                .fold(0.0f64, |m, (x, y)| m.max((*x - *y).hi.abs()));
            if err <= tol * scale {
                return row[level];
            }
        }
        prev = row;
    }
    *prev.last().unwrap()
}

fn rescale<const N: usize>(y: &mut [Dd; N], log2: &mut i64, lead: usize) {
    let m = y[..lead].iter().fold(0.0f64, |m, x| m.max(x.hi.abs()));
    if m > 2f64.powi(LOG2_RESCALE) {
        for x in y.iter_mut() {
            *x = x.ldexp(-LOG2_RESCALE);
        }
        *log2 += LOG2_RESCALE as i64;
    }
}

fn to_log(x: Dd, log2: i64) -> LogValue {
    let a = x.abs();
    LogValue {
        log_abs: a.hi.ln() + a.lo / a.hi + log2 as f64 * std::f64::consts::LN_2,
        sign: x.signum(),
    }
}

/// Endpoint data of the forward sweep.
#[derive(Clone, Copy, Debug)]
pub struct ForwardSweep {
    pub psi: LogValue,
    pub dpsi: LogValue,
    /// `∂_λ ψ_λ(τ_f)` at `λ`, in the same scale as `psi`.
    pub dlambda: LogValue,
    /// `−ψ/∂_λψ`: first-order distance to the nearest Dirichlet eigenvalue.
    pub lambda_gap: f64,
    pub wronskian_drift: f64,
}

/// Integrates `ψ̈ = (w − λ)ψ` with `ψ(τ_i) = 0, ψ̇(τ_i) = 1`, its λ-derivative
/// `φ̈ = (w − λ)φ − ψ` and a second solution `χ(τ_i) = 1, χ̇(τ_i) = 0` for the
/// Wronskian. Fails if ψ changes sign inside the window.
pub fn forward_sweep(op: &FluctuationOperator, lambda: f64, ode_tol: f64) -> Result<ForwardSweep> {
    let f = |wl: Dd, y: &[Dd; 6]| [y[1], wl * y[0], y[3], wl * y[2] - y[0], y[5], wl * y[4]];
    let mut y = [Dd::ZERO, Dd::ONE, Dd::ZERO, Dd::ZERO, Dd::ONE, Dd::ZERO];
    let mut log2: i64 = 0;
    let mut drift: f64 = 0.0;
    let mut peak: f64 = 1.0;
    let lam = Dd::new(lambda);
    let n = op.intervals();
    for j in 0..n {
        y = gbs_step(op, j, false, lam, &y, &f, ode_tol);
        if !y.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("non-finite fluctuation solution".into()));
        }
        if y[0].hi <= 0.0 && j + 1 < n {
            return Err(Error::NegativeMode { tau: op.nodes[j + 1] });
        }
        // Wronskian χψ̇ − ψχ̇ starts at 1. Step errors scale with the largest
        // cross product met so far, so the drift is measured against that.
        let p1 = y[4] * y[1];
        let p2 = y[0] * y[5];
        let target = Dd::ONE.ldexp(-2 * log2.min(1 << 20) as i32);
        let here = p1.abs().hi.max(p2.abs().hi) / target.hi;
        peak = peak.max(here);
        drift = drift.max(((p1 - p2 - target).abs().hi / target.hi) / peak);
        rescale(&mut y, &mut log2, 6);
    }
    let psi = to_log(y[0], log2);
    if psi.sign <= 0.0 {
        return Err(Error::NegativeMode { tau: op.tau_f });
    }
    Ok(ForwardSweep {
        psi,
        dpsi: to_log(y[1], log2),
        dlambda: to_log(y[2], log2),
        lambda_gap: (-(y[0] / y[2])).to_f64(),
        wronskian_drift: drift,
    })
}

/// `ψ₀(τ_f)` of `Âψ = 0, ψ(τ_i) = 0, ψ̇(τ_i) = 1`, in log form.
pub fn gy_forward_solve(op: &FluctuationOperator, ode_tol: f64) -> Result<LogValue> {
    Ok(forward_sweep(op, 0.0, ode_tol)?.psi)
}

/// Two-sided shooting at `λ`: log-derivative mismatch `ψ̇_L/ψ_L − ψ̇_R/ψ_R`
/// at node `mid`, and whether either side crossed zero before reaching it.
pub(crate) fn shooting_mismatch(op: &FluctuationOperator, lambda: f64, mid: usize, ode_tol: f64) -> (f64, bool) {
    let f = |wl: Dd, y: &[Dd; 2]| [y[1], wl * y[0]];
    let lam = Dd::new(lambda);
    let mut left = [Dd::ZERO, Dd::ONE];
    let mut log2 = 0i64;
    let mut crossed = false;
    for j in 0..mid {
        left = gbs_step(op, j, false, lam, &left, &f, ode_tol);
        if left[0].hi <= 0.0 {
            crossed = true;
        }
        rescale(&mut left, &mut log2, 2);
    }
    // Integrating from τ_f backwards: ψ(τ_f) = 0, dψ/dτ = −1.
    let mut right = [Dd::ZERO, -Dd::ONE];
    for j in (mid..op.intervals()).rev() {
        right = gbs_step(op, j, true, lam, &right, &f, ode_tol);
        if right[0].hi <= 0.0 {
            crossed = true;
        }
        rescale(&mut right, &mut log2, 2);
    }
    ((left[1] / left[0] - right[1] / right[0]).to_f64(), crossed)
}

/// The piecewise-constant reference: frequency `ω_i` before τ₁, `ω_f` after.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOperator {
    pub omega_i: f64,
    pub omega_f: f64,
    pub tau1: f64,
    pub tau_i: f64,
    pub tau_f: f64,
}

/// Closed-form `ψ₀⁽⁰⁾(τ_f) = ω_i⁻¹ sinh(ω_iτ_1i) cosh(ω_fτ_f1) + ω_f⁻¹ sinh(ω_fτ_f1) cosh(ω_iτ_1i)`.
pub fn reference_psi0(r: &ReferenceOperator) -> Result<LogValue> {
    let a = r.omega_i * (r.tau1 - r.tau_i);
    let b = r.omega_f * (r.tau_f - r.tau1);
    if a < 0.0 || b < 0.0 {
        return Err(Error::InvalidInput("τ₁ must lie inside [τ_i, τ_f]".into()));
    }
    // Factor e^{a+b}/4 out of the sinh/cosh products.
    let sa = -(-2.0 * a).exp_m1();
    let ca = 1.0 + (-2.0 * a).exp();
    let sb = -(-2.0 * b).exp_m1();
    let cb = 1.0 + (-2.0 * b).exp();
    let bracket = sa * cb / r.omega_i + sb * ca / r.omega_f;
    Ok(LogValue {
        log_abs: a + b - 4f64.ln() + bracket.ln(),
        sign: 1.0,
    })
}

/// `λ₀ ≈ 4 A_i A_f ω_i ω_f ψ₀(τ_f) e^{−ω_iτ_1i − ω_fτ_f1}`.
pub fn lambda0_estimate(sol: &InstantonSolution, op: &FluctuationOperator, psi0_f: LogValue) -> Result<f64> {
    if psi0_f.sign <= 0.0 {
        return Err(Error::ZeroModeSign("ψ₀(τ_f) is not positive".into()));
    }
    if !(sol.amp_i > 0.0 && sol.amp_f > 0.0) {
        return Err(Error::ZeroModeSign("asymptotic amplitudes are not positive".into()));
    }
    let a = op.omega_i * (op.tau1 - op.tau_i);
    let b = op.omega_f * (op.tau_f - op.tau1);
    let log = (4.0 * sol.amp_i * sol.amp_f * op.omega_i * op.omega_f).ln() + psi0_f.log_abs - a - b;
    let l = log.exp();
    if !(l > 0.0) {
        return Err(Error::ZeroModeSign(format!("λ₀ estimate {l} not positive")));
    }
    Ok(l)
}

/// `K₀ = sqrt(A_i A_f (ω_i + ω_f))`.
pub fn k0_analytic(amp_i: f64, amp_f: f64, omega_i: f64, omega_f: f64) -> Result<f64> {
    if amp_i * amp_f <= 0.0 {
        return Err(Error::MixedAmplitudeSigns);
    }
    Ok((amp_i * amp_f * (omega_i + omega_f)).sqrt())
}

/// `K₀ = sqrt(λ₀ ψ₀⁽⁰⁾(τ_f) / ψ₀(τ_f))`, in log space.
pub fn k0_numeric(lambda0: f64, psi0_ref_f: LogValue, psi0_f: LogValue) -> Result<f64> {
    let sign = lambda0.signum() * psi0_ref_f.sign * psi0_f.sign;
    if !(sign > 0.0) {
        return Err(Error::Inconsistent("λ₀ψ₀⁽⁰⁾/ψ₀ is not positive".into()));
    }
    Ok((0.5 * (lambda0.abs().ln() + psi0_ref_f.log_abs - psi0_f.log_abs)).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GyResult {
    pub tau_i: f64,
    pub tau_f: f64,
    pub tau1: f64,
    pub log_psi0_f: f64,
    pub psi0_f: f64,
    pub log_psi0_ref_f: f64,
    pub psi0_ref_f: f64,
    /// Amplitude-based estimate of the lowest eigenvalue.
    pub lambda0: f64,
    /// `−ψ₀(τ_f)/∂_λψ_λ(τ_f)`, the lowest eigenvalue to first order in λ.
    pub lambda0_gy: f64,
    /// `sqrt(λ₀ψ₀⁽⁰⁾/ψ₀)` with `λ₀/ψ₀ = −1/∂_λψ_λ(τ_f)`.
    pub k0_numeric: f64,
    pub k0_analytic: f64,
    pub wronskian_drift: f64,
}

/// Full GY evaluation on a window of total length `window` centred on τ₁.
pub fn gy_analysis(sol: &InstantonSolution, window: f64, ode_tol: f64) -> Result<GyResult> {
    let op = FluctuationOperator::centered(sol, window)?;
    gy_on(sol, &op, ode_tol)
}

pub fn gy_on(sol: &InstantonSolution, op: &FluctuationOperator, ode_tol: f64) -> Result<GyResult> {
    let sweep = forward_sweep(op, 0.0, ode_tol)?;
    let reference = reference_psi0(&op.reference())?;
    let lambda0 = lambda0_estimate(sol, op, sweep.psi)?;
    let lambda0_gy = sweep.lambda_gap;
    if !(lambda0_gy > 0.0) {
        return Err(Error::Inconsistent(format!("ψ₀/∂_λψ gives λ₀ = {lambda0_gy}")));
    }
    Ok(GyResult {
        tau_i: op.tau_i,
        tau_f: op.tau_f,
        tau1: op.tau1,
        log_psi0_f: sweep.psi.log_abs,
        psi0_f: sweep.psi.value(),
        log_psi0_ref_f: reference.log_abs,
        psi0_ref_f: reference.value(),
        lambda0,
        lambda0_gy,
        k0_numeric: k0_numeric(lambda0_gy, reference, sweep.psi)?,
        k0_analytic: k0_analytic(sol.amp_i, sol.amp_f, sol.pair.initial.omega, sol.pair.final_.omega)?,
        wronskian_drift: sweep.wronskian_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_frequencies_give_sinh() {
        let r = ReferenceOperator {
            omega_i: 1.3,
            omega_f: 1.3,
            tau1: 0.4,
            tau_i: -3.0,
            tau_f: 5.0,
        };
        let v = reference_psi0(&r).unwrap().value();
        let exact = (1.3f64 * 8.0).sinh() / 1.3;
        assert!((v - exact).abs() < 1e-13 * exact);
    }

    #[test]
    fn step_integration_matches_closed_form() {
        let r = ReferenceOperator {
            omega_i: 1.0,
            omega_f: 2.0,
            tau1: 0.0,
            tau_i: -10.0,
            tau_f: 10.0,
        };
        let op = FluctuationOperator::step_reference(&r, 1.0 / 32.0).unwrap();
        let num = gy_forward_solve(&op, 1e-28).unwrap();
        let exact = reference_psi0(&r).unwrap();
        assert!((num.log_abs - exact.log_abs).abs() < 1e-14);
    }

    #[test]
    fn free_particle_box() {
        // w = 0 on [0, L]: ψ = τ, ∂_λψ(L) = −L³/6.
        let op = FluctuationOperator::constant(0.0, 0.0, 2.0, 0.25).unwrap();
        let s = forward_sweep(&op, 0.0, 1e-28).unwrap();
        assert!((s.psi.value() - 2.0).abs() < 1e-14);
        assert!((s.dlambda.value() + 8.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn k0_numeric_rejects_negative_quotient() {
        let one = LogValue { log_abs: 0.0, sign: 1.0 };
        let neg = LogValue { log_abs: 0.0, sign: -1.0 };
        assert!(k0_numeric(1.0, one, neg).is_err());
        assert!((k0_numeric(4.0, one, one).unwrap() - 2.0).abs() < 1e-15);
    }
}
