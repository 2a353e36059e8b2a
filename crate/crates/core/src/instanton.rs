//! The classical 1-instanton between two adjacent wells.
//!
//! The trajectory is carried per side in the displacement `y = X̄ − X_w`
//! from the well the side relaxes into. Between grid knots it is the local
//! Taylor series of the equation of motion `ÿ = V′(X_w + y)`; at each knot
//! the velocity is projected back onto the zero-energy orbit
//! `ẏ = |y|·sqrt(2V/y²)`, which keeps the integration on the decaying branch.
//! Everything is carried in double-double so that `V″(X̄(τ))` is accurate
//! far beyond f64 resolution; the fluctuation operator relies on that.

use std::sync::Arc;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::potential::{LocalExpansion, PotentialModel, WellPair};
use crate::quad;
use serde::{Deserialize, Serialize};

pub const DEFAULT_FIT_WINDOW: (f64, f64) = (8.0, 16.0);

#[derive(Clone, Debug)]
pub struct TrajectoryOptions {
    /// Half-width of the solved window around the barrier crossing.
    pub half_window: f64,
    /// Truncation tolerance of the local Taylor series, relative to |y|.
    pub ode_tol: f64,
    pub quad_tol: f64,
    /// Value assigned to the collective coordinate τ₁.
    pub tau1: f64,
    /// Grid spacing; defaults to the largest power of two with `ω_max·h ≤ 0.04`.
    pub step: Option<f64>,
    /// Range of `ω|τ − τ₁|` used by the amplitude fit.
    pub fit_window: (f64, f64),
}

impl TrajectoryOptions {
    pub fn new(half_window: f64) -> Self {
        Self {
            half_window,
            ode_tol: 1e-26,
            quad_tol: 1e-10,
            tau1: 0.0,
            step: None,
            fit_window: DEFAULT_FIT_WINDOW,
        }
    }
}

/// One side of the trajectory: Taylor series at knots `s = dir·k·h`
/// (time measured from the barrier crossing).
#[derive(Clone, Debug)]
struct SideSeries {
    expansion: LocalExpansion,
    knots: Vec<Vec<Dd>>,
}

impl SideSeries {
    fn eval(&self, k: usize, offset: Dd) -> Dd {
        let a = &self.knots[k];
        let mut acc = Dd::ZERO;
        for c in a.iter().rev() {
            acc = acc * offset + *c;
        }
        acc
    }
}

/// The double-double trajectory on the uniform grid
/// `g_j = τ_b + (j − J)·h`, `j = 0..=2J`, with the barrier crossing at `j = J`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub(crate) tau_b: f64,
    pub(crate) h: f64,
    pub(crate) steps: usize,
    left: SideSeries,
    right: SideSeries,
    pub(crate) omega_i: f64,
    pub(crate) omega_f: f64,
}

impl Trajectory {
    /// Displacement from the governing well inside grid interval `j`
    /// (`[g_j, g_{j+1}]`) at `offset` from its left end; `None` outside.
    fn displacement(&self, j: i64, offset: Dd) -> Option<(&SideSeries, Dd)> {
        let big_j = self.steps as i64;
        if j < 0 || j >= 2 * big_j {
            return None;
        }
        if j >= big_j {
            let k = (j - big_j) as usize;
            Some((&self.right, self.right.eval(k, offset)))
        } else {
            let k = (big_j - j - 1) as usize;
            Some((&self.left, self.left.eval(k, offset - self.h)))
        }
    }

    /// `V″(X̄)` in grid interval `j` at `offset`, continued by `ω²` outside.
    pub(crate) fn curvature(&self, j: i64, offset: Dd) -> Dd {
        match self.displacement(j, offset) {
            Some((side, y)) => side.expansion.d2(y),
            None if j < 0 => Dd::new(self.omega_i * self.omega_i),
            None => Dd::new(self.omega_f * self.omega_f),
        }
    }

    /// `X̄` in grid interval `j` at `offset`.
    pub(crate) fn position(&self, j: i64, offset: Dd) -> Option<Dd> {
        self.displacement(j, offset)
            .map(|(side, y)| side.expansion.center + y)
    }

    /// Grid index of the knot nearest to `tau` (may lie outside the grid).
    pub(crate) fn knot_index(&self, tau: f64) -> i64 {
        ((tau - self.tau_b) / self.h).round() as i64 + self.steps as i64
    }

    pub(crate) fn knot_time(&self, j: i64) -> f64 {
        self.tau_b + (j - self.steps as i64) as f64 * self.h
    }

    fn shifted(&self, dt: f64) -> Trajectory {
        let mut t = self.clone();
        t.tau_b += dt;
        t
    }
}

/// The solved 1-instanton with its asymptotic amplitudes.
#[derive(Clone, Debug)]
pub struct InstantonSolution {
    pub pair: WellPair,
    pub tau1: f64,
    pub tau_grid: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub x_bar_dot: Vec<f64>,
    /// `ln|X̄ − X_w|` relative to the well each side relaxes into.
    pub log_distance: Vec<f64>,
    pub action: f64,
    pub amp_i: f64,
    pub amp_f: f64,
    pub c_i: f64,
    pub c_f: f64,
    pub fit_residual_i: f64,
    pub fit_residual_f: f64,
    /// τ₁ minus the barrier-crossing time.
    pub anchor_shift: f64,
    /// Largest `|½Ẋ̄² − V|/V_barrier` of the propagated state at the knots,
    /// before the velocity is projected back onto zero energy.
    pub energy_drift: f64,
    pub(crate) trajectory: Arc<Trajectory>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InstantonSummary {
    pub action: f64,
    pub action_from_trajectory: f64,
    pub tau1: f64,
    pub anchor_shift: f64,
    pub amp_i: f64,
    pub amp_f: f64,
    pub c_i: f64,
    pub c_f: f64,
    pub fit_residual_i: f64,
    pub fit_residual_f: f64,
    pub energy_drift: f64,
    pub grid_step: f64,
    pub grid_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Amplitudes {
    pub amp_i: f64,
    pub amp_f: f64,
    pub c_i: f64,
    pub c_f: f64,
    pub residual_i: f64,
    pub residual_f: f64,
}

/// `S̄ = ∫ sqrt(2V) dX` between the wells, split at the barrier top.
///
/// Each half is written as `d·sqrt(2V/d²)` in the distance `d` from its
/// well, which is smooth up to the endpoint.
pub fn action_quadrature(model: &PotentialModel, pair: &WellPair, quad_tol: f64) -> Result<f64> {
    let xi = pair.initial.position;
    let xf = pair.final_.position;
    if xi == xf {
        return Ok(0.0);
    }
    let xb = pair.barrier_position;
    let ei = model.local_expansion(xi);
    let ef = model.local_expansion(xf);
    let mut dip: Option<f64> = None;
    let mut half = |e: &LocalExpansion, sign: f64, len: f64| -> Result<f64> {
        let center = e.center.to_f64();
        let r = quad::integrate(
            |d| {
                let q = e.quotient_f64(sign * d);
                if q <= 0.0 {
                    dip.get_or_insert(center + sign * d);
                    return 0.0;
                }
                d * (2.0 * q).sqrt()
            },
            0.0,
            len,
            quad_tol,
            0.0,
        )?;
        Ok(r.value)
    };
    let left = half(&ei, 1.0, xb - xi)?;
    let right = half(&ef, -1.0, xf - xb)?;
    if let Some(x) = dip {
        return Err(Error::PotentialDipsBelowZero { x });
    }
    Ok(left + right)
}

/// Taylor coefficients of `y(s₀ + t)` for `ÿ = V′(X_w + y)` from `(y₀, ẏ₀)`.
fn taylor_coefficients(e: &LocalExpansion, y0: Dd, v0: Dd, h: f64, tol: f64) -> Vec<Dd> {
    const MIN_ORDER: usize = 8;
    const MAX_ORDER: usize = 64;
    let deg = e.t.len() - 1;
    // V′(X_w + y) = Σ_{m=1}^{deg-1} b_m y^m
    let b: Vec<Dd> = (0..deg).map(|m| if m == 0 { Dd::ZERO } else { e.t[m + 1] * (m + 1) as f64 }).collect();
    let mut a = vec![y0, v0];
    let mut pows: Vec<Vec<Dd>> = vec![Vec::new(); deg.max(2)];
    let scale = y0.abs().hi;
    let habs = h.abs();
    for r in 0..MAX_ORDER - 1 {
        let mut p = b.get(1).copied().unwrap_or(Dd::ZERO) * a[r];
        for m in 2..deg {
            let mut s = Dd::ZERO;
            for l in 0..=r {
                let lower = if m == 2 { a[r - l] } else { pows[m - 1][r - l] };
                s += a[l] * lower;
            }
            pows[m].push(s);
            p += b[m] * s;
        }
        a.push(p / ((r + 1) * (r + 2)) as f64);
        let n = a.len() - 1;
        if n >= MIN_ORDER {
            let t1 = a[n].abs().hi * habs.powi(n as i32);
            let t2 = a[n - 1].abs().hi * habs.powi(n as i32 - 1);
            if t1.max(t2) <= tol * scale {
                break;
            }
        }
    }
    a
}

fn zero_energy_velocity(e: &LocalExpansion, y: Dd) -> Result<Dd> {
    let q = e.quotient(y);
    if q.hi <= 0.0 {
        return Err(Error::PotentialDipsBelowZero {
            x: (e.center + y).to_f64(),
        });
    }
    Ok(y.abs() * (q * 2.0).sqrt())
}

fn integrate_side(
    e: LocalExpansion,
    y0: Dd,
    dir: f64,
    h: f64,
    steps: usize,
    tol: f64,
) -> Result<(SideSeries, f64)> {
    let mut knots = Vec::with_capacity(steps);
    let mut y = y0;
    let mut drift: f64 = 0.0;
    let barrier = e.value(y0);
    for _ in 0..steps {
        let v = zero_energy_velocity(&e, y)?;
        // Per-step truncation is relative to |y|; the margin covers its
        // conversion to an energy error relative to the barrier height.
        let a = taylor_coefficients(&e, y, v, h, tol * 1e-3);
        let t = Dd::new(dir * h);
        let mut ny = Dd::ZERO;
        let mut nv = Dd::ZERO;
        for (j, c) in a.iter().enumerate().rev() {
            ny = ny * t + *c;
            if j > 0 {
                nv = nv * t + *c * j as f64;
            }
        }
        if ny.hi.abs() < 1e-280 {
            return Err(Error::WindowTooLarge(format!(
                "displacement underflows (|y| = {:.3e})",
                ny.hi.abs()
            )));
        }
        if ny.abs() >= y.abs() || ny.signum() != y.signum() {
            return Err(Error::Numerical("instanton trajectory is not monotone".into()));
        }
        let energy = nv.sqr() * 0.5 - e.value(ny);
        drift = drift.max((energy / barrier).abs().hi);
        knots.push(a);
        y = ny;
    }
    Ok((
        SideSeries {
            expansion: e,
            knots,
        },
        drift,
    ))
}

fn default_step(omega_max: f64) -> f64 {
    let mut h = 1.0;
    while omega_max * h > 0.04 {
        h *= 0.5;
    }
    h
}

/// Convenience form: τ₁ = 0, default grid and tolerances.
pub fn solve_trajectory(
    model: &PotentialModel,
    pair: &WellPair,
    window: f64,
    ode_tol: f64,
) -> Result<InstantonSolution> {
    let mut opts = TrajectoryOptions::new(window);
    opts.ode_tol = ode_tol;
    solve_trajectory_with(model, pair, &opts)
}

/// Solves the instanton on `τ₁ ± half_window` and fits its asymptotic
/// amplitudes. τ₁ is placed where the two zero-mode amplitudes are equal,
/// `A_i = A_f`; for mirror-symmetric pairs that is the barrier crossing.
pub fn solve_trajectory_with(
    model: &PotentialModel,
    pair: &WellPair,
    opts: &TrajectoryOptions,
) -> Result<InstantonSolution> {
    let wi = pair.initial.omega;
    let wf = pair.final_.omega;
    let wmin = wi.min(wf);
    if !(opts.half_window * wmin >= 20.0) {
        return Err(Error::InvalidInput(format!(
            "trajectory window {} too short: need window·min(ω) ≥ 20",
            opts.half_window
        )));
    }
    if !(opts.ode_tol > 0.0 && opts.quad_tol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    let action = action_quadrature(model, pair, opts.quad_tol)?;
    let h = opts.step.unwrap_or_else(|| default_step(wi.max(wf)));
    // Extra room so that shifting the anchor keeps ±half_window covered.
    let steps = ((opts.half_window + 4.0 / wmin) / h).ceil() as usize;

    let ei = model.local_expansion(pair.initial.position);
    let ef = model.local_expansion(pair.final_.position);
    let xb = model.local_expansion(pair.barrier_position).center;
    let (left, drift_l) = integrate_side(ei.clone(), xb - ei.center, -1.0, h, steps, opts.ode_tol)?;
    let (right, drift_r) = integrate_side(ef.clone(), xb - ef.center, 1.0, h, steps, opts.ode_tol)?;
    let trajectory = Trajectory {
        tau_b: 0.0,
        h,
        steps,
        left,
        right,
        omega_i: wi,
        omega_f: wf,
    };

    // Samples on the grid, barrier crossing at τ = 0 for now.
    let n = 2 * steps + 1;
    let mut tau_grid = Vec::with_capacity(n);
    let mut x_bar = Vec::with_capacity(n);
    let mut x_bar_dot = Vec::with_capacity(n);
    let mut log_distance = Vec::with_capacity(n);
    for j in 0..n as i64 {
        let (side, y) = if j < 2 * steps as i64 {
            trajectory.displacement(j, Dd::ZERO).unwrap()
        } else {
            trajectory.displacement(j - 1, Dd::new(h)).unwrap()
        };
        let v = zero_energy_velocity(&side.expansion, y)?;
        tau_grid.push(trajectory.knot_time(j));
        x_bar.push((side.expansion.center + y).to_f64());
        x_bar_dot.push(v.to_f64());
        let ya = y.abs();
        log_distance.push(ya.hi.ln() + ya.lo / ya.hi);
    }

    let mut sol = InstantonSolution {
        pair: *pair,
        tau1: 0.0,
        tau_grid,
        x_bar,
        x_bar_dot,
        log_distance,
        action,
        amp_i: 0.0,
        amp_f: 0.0,
        c_i: 0.0,
        c_f: 0.0,
        fit_residual_i: 0.0,
        fit_residual_f: 0.0,
        anchor_shift: 0.0,
        energy_drift: drift_l.max(drift_r),
        trajectory: Arc::new(trajectory),
    };

    let at_barrier = extract_amplitudes(&sol, opts.fit_window)?;
    let shift = (at_barrier.amp_f / at_barrier.amp_i).ln() / (wi + wf);
    sol.anchor_shift = shift;
    // Relabel time so that τ₁ = opts.tau1 sits `shift` after the barrier.
    let sol = sol.shifted(opts.tau1 - shift);
    let mut sol = InstantonSolution { tau1: opts.tau1, ..sol };
    let amps = extract_amplitudes(&sol, opts.fit_window)?;
    sol.amp_i = amps.amp_i;
    sol.amp_f = amps.amp_f;
    sol.c_i = amps.c_i;
    sol.c_f = amps.c_f;
    sol.fit_residual_i = amps.residual_i;
    sol.fit_residual_f = amps.residual_f;
    Ok(sol)
}

impl InstantonSolution {
    /// Same physical solution with every time label moved by `dt`.
    pub fn shifted(&self, dt: f64) -> InstantonSolution {
        InstantonSolution {
            tau1: self.tau1 + dt,
            tau_grid: self.tau_grid.iter().map(|t| t + dt).collect(),
            trajectory: Arc::new(self.trajectory.shifted(dt)),
            ..self.clone()
        }
    }

    pub fn grid_step(&self) -> f64 {
        self.trajectory.h
    }

    /// Barrier-crossing time.
    pub fn barrier_time(&self) -> f64 {
        self.trajectory.tau_b
    }

    /// `∫ Ẋ̄² dτ` by composite Simpson over the grid.
    pub fn action_from_trajectory(&self) -> f64 {
        let h = self.trajectory.h;
        let f: Vec<f64> = self.x_bar_dot.iter().map(|v| v * v).collect();
        let n = f.len() - 1;
        let mut s = f[0] + f[n];
        for (k, v) in f.iter().enumerate().take(n).skip(1) {
            s += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        s * h / 3.0
    }

    /// `X̄(τ)` in double-double between grid points; `None` outside the grid.
    pub fn position_at(&self, tau: f64) -> Option<f64> {
        let t = &self.trajectory;
        let u = (tau - t.tau_b) / t.h + t.steps as f64;
        let j = u.floor() as i64;
        let j = j.min(2 * t.steps as i64 - 1);
        let offset = tau - t.knot_time(j);
        t.position(j, Dd::new(offset)).map(|x| x.to_f64())
    }

    pub fn summary(&self) -> InstantonSummary {
        InstantonSummary {
            action: self.action,
            action_from_trajectory: self.action_from_trajectory(),
            tau1: self.tau1,
            anchor_shift: self.anchor_shift,
            amp_i: self.amp_i,
            amp_f: self.amp_f,
            c_i: self.c_i,
            c_f: self.c_f,
            fit_residual_i: self.fit_residual_i,
            fit_residual_f: self.fit_residual_f,
            energy_drift: self.energy_drift,
            grid_step: self.grid_step(),
            grid_points: self.tau_grid.len(),
        }
    }
}

/// Normalized zero mode `x₀ = Ẋ̄/sqrt(S̄)` on the grid.
pub fn zero_mode(sol: &InstantonSolution) -> Vec<f64> {
    let s = sol.action.sqrt();
    sol.x_bar_dot.iter().map(|v| v / s).collect()
}

/// Least-squares fit of `ln x₀ + ω|Δτ|` and `ln|X̄ − X±| + ω|Δτ|` over
/// `ω|Δτ| ∈ fit_window` on each side. The slope is fixed at `ω`; two
/// subleading `e^{−ω|Δτ|}`, `e^{−2ω|Δτ|}` terms absorb the anharmonic
/// corrections so that the intercepts are not biased by them.
pub fn extract_amplitudes(sol: &InstantonSolution, fit_window: (f64, f64)) -> Result<Amplitudes> {
    let (lo, hi) = fit_window;
    if !(0.0 < lo && lo < hi) {
        return Err(Error::InvalidInput("fit window must satisfy 0 < lo < hi".into()));
    }
    let half_ln_s = 0.5 * sol.action.ln();
    let fit_side = |omega: f64, right: bool| -> Result<(f64, f64, f64)> {
        let mut rows_a = Vec::new();
        let mut rows_c = Vec::new();
        for (k, &tau) in sol.tau_grid.iter().enumerate() {
            let dt = tau - sol.tau1;
            if (dt > 0.0) != right {
                continue;
            }
            let z = omega * dt.abs();
            if z < lo || z > hi {
                continue;
            }
            let ln_x0 = sol.x_bar_dot[k].ln() - half_ln_s;
            rows_a.push((z, ln_x0 + z));
            rows_c.push((z, sol.log_distance[k] + z));
        }
        if rows_a.len() < 6 {
            return Err(Error::WindowTooLarge(
                "trajectory does not cover the amplitude fit window".into(),
            ));
        }
        let (ia, ra) = fit_intercept(&rows_a, lo);
        let (ic, rc) = fit_intercept(&rows_c, lo);
        Ok((ia.exp(), ic.exp(), ra.max(rc)))
    };
    let (amp_i, c_i, residual_i) = fit_side(sol.pair.initial.omega, false)?;
    let (amp_f, c_f, residual_f) = fit_side(sol.pair.final_.omega, true)?;
    let worst = residual_i.max(residual_f);
    if !(worst <= 1e-4) {
        return Err(Error::WindowNotAsymptotic { residual: worst });
    }
    Ok(Amplitudes {
        amp_i,
        amp_f,
        c_i,
        c_f,
        residual_i,
        residual_f,
    })
}

/// Fits `v ≈ c₀ + c₁ e^{−z} + c₂ e^{−2z}`; returns `(c₀, rms residual)`.
fn fit_intercept(rows: &[(f64, f64)], z0: f64) -> (f64, f64) {
    // Basis in the scaled variable u = e^{−(z−z0)} ∈ (0, 1].
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for &(z, v) in rows {
        let u = (-(z - z0)).exp();
        let phi = [1.0, u, u * u];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += phi[i] * phi[j];
            }
            r[i] += phi[i] * v;
        }
    }
    let c = solve3(m, r);
    let mut ss = 0.0;
    for &(z, v) in rows {
        let u = (-(z - z0)).exp();
        let e = v - (c[0] + c[1] * u + c[2] * u * u);
        ss += e * e;
    }
    (c[0], (ss / rows.len() as f64).sqrt())
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let mut s = r[i];
        for k in i + 1..3 {
            s -= m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    x
}
