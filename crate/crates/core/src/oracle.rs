//! Independent numerical references: finite-difference diagonalization of
//! the Schrödinger operator, the lowest Dirichlet eigenvalue of the
//! fluctuation operator, the closed 2×2 matrix exponential, and iterated
//! quadrature of the ordered-time instanton integrals.

use crate::error::{Error, Result};
use crate::fluctuation::{shooting_mismatch, FluctuationOperator};
use crate::potential::{PotentialModel, Well};
use crate::quad;
use crate::tridiag::SymTridiag;
use crate::twolevel::TwoLevelSystem;
use serde::{Deserialize, Serialize};

pub const DEFAULT_GRID_POINTS: usize = 8192;
/// Richardson error allowed per level, relative to `max(|E|, ħω_min)`.
pub const DEFAULT_RICHARDSON_TOL: f64 = 1e-5;
pub const EDGE_DECAY: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// Interior points of the coarse grid; the fine grid has `2n + 1`.
    pub n_points: usize,
    pub hbar: f64,
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if self.n_points < 3 || !(self.x_max > self.x_min) || !(self.hbar > 0.0) {
            return Err(Error::InvalidInput(
                "grid needs n_points ≥ 3, x_max > x_min, ħ > 0".into(),
            ));
        }
        Ok(())
    }

    fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points + 1) as f64
    }

    fn refined(&self) -> GridSpec {
        GridSpec {
            n_points: 2 * self.n_points + 1,
            ..*self
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (1..=self.n_points).map(|j| self.x_min + j as f64 * h).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    /// Richardson-extrapolated, ascending.
    pub energies: Vec<f64>,
    pub error_estimates: Vec<f64>,
    /// Unextrapolated fine-grid eigenvalues.
    pub fine_energies: Vec<f64>,
    /// Interior nodes of the fine grid.
    pub x: Vec<f64>,
    /// Fine-grid eigenfunctions with `Σ ψ² h = 1`.
    pub wavefunctions: Vec<Vec<f64>>,
    /// Requested (coarse) grid.
    pub grid: GridSpec,
}

/// Grid spanning the wells plus a margin wide enough that the WKB decay
/// exponent beyond the outermost turning point reaches 30 for the highest
/// requested level, and never less than `6/ω_min`.
pub fn default_grid(model: &PotentialModel, wells: &[Well], hbar: f64, n_levels: usize) -> GridSpec {
    let wmin = wells.iter().map(|w| w.omega).fold(f64::INFINITY, f64::min);
    let wmax = wells.iter().map(|w| w.omega).fold(0.0f64, f64::max);
    let e_top = hbar * wmax * (n_levels as f64 + 1.0);
    let first = wells.first().map(|w| w.position).unwrap_or(0.0);
    let last = wells.last().map(|w| w.position).unwrap_or(0.0);
    let sigma = (hbar / wmax).sqrt();
    let reach = |start: f64, dir: f64| -> f64 {
        let dx = sigma / 64.0;
        let mut x = start;
        let mut exponent = 0.0;
        let mut steps = 0usize;
        while exponent < 30.0 && steps < 10_000_000 {
            x += dir * dx;
            let v = model.value(x) - e_top;
            if v > 0.0 {
                exponent += (2.0 * v).sqrt() / hbar * dx;
            }
            steps += 1;
        }
        (x - start).abs()
    };
    let margin_l = reach(first, -1.0).max(6.0 / wmin);
    let margin_r = reach(last, 1.0).max(6.0 / wmin);
    let (mut lo, mut hi) = (first - margin_l, last + margin_r);
    if model.is_even() {
        let m = lo.abs().max(hi.abs());
        lo = -m;
        hi = m;
    }
    GridSpec {
        x_min: lo,
        x_max: hi,
        n_points: DEFAULT_GRID_POINTS,
        hbar,
    }
}

struct Eigen {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

/// Lowest `n_levels` eigenpairs of the finite-difference Hamiltonian.
fn fd_levels(model: &PotentialModel, grid: &GridSpec, n_levels: usize, vectors: bool) -> Result<Eigen> {
    let n = grid.n_points;
    let h = grid.spacing();
    let kin = grid.hbar * grid.hbar / (h * h);
    let b = -0.5 * kin;
    let xs = grid.nodes();
    let diag: Vec<f64> = xs.iter().map(|&x| kin + model.value(x)).collect();
    let symmetric = model.is_even() && (grid.x_min + grid.x_max).abs() <= 1e-12 * (grid.x_max - grid.x_min);
    let mut found: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut solve = |t: SymTridiag, lift: &dyn Fn(&[f64]) -> Vec<f64>| {
        let k = n_levels.min(t.len());
        for level in 0..k {
            let e = t.eigenvalue(level);
            let v = if vectors { lift(&t.eigenvector(e, 2)) } else { Vec::new() };
            found.push((e, v));
        }
    };
    if symmetric && n >= 3 {
        if n % 2 == 1 {
            let c = n / 2;
            let m = n - c - 1;
            let mut de = vec![diag[c]];
            de.extend_from_slice(&diag[c + 1..]);
            let mut oe = vec![2f64.sqrt() * b];
            oe.extend(std::iter::repeat(b).take(m - 1));
            solve(SymTridiag::new(de, oe), &|u: &[f64]| {
                let mut v = vec![0.0; n];
                v[c] = 2f64.sqrt() * u[0];
                for j in 1..=m {
                    v[c + j] = u[j];
                    v[c - j] = u[j];
                }
                v
            });
            solve(SymTridiag::new(diag[c + 1..].to_vec(), vec![b; m - 1]), &|u: &[f64]| {
                let mut v = vec![0.0; n];
                for j in 1..=m {
                    v[c + j] = u[j - 1];
                    v[c - j] = -u[j - 1];
                }
                v
            });
        } else {
            let c = n / 2;
            let m = n - c;
            for parity in [1.0, -1.0] {
                let mut d = diag[c..].to_vec();
                d[0] += parity * b;
                solve(SymTridiag::new(d, vec![b; m - 1]), &|u: &[f64]| {
                    let mut v = vec![0.0; n];
                    for j in 0..m {
                        v[c + j] = u[j];
                        v[c - 1 - j] = parity * u[j];
                    }
                    v
                });
            }
        }
    } else {
        solve(SymTridiag::new(diag, vec![b; n - 1]), &|u: &[f64]| u.to_vec());
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    found.truncate(n_levels);
    if found.len() < n_levels {
        return Err(Error::InvalidInput("grid has fewer points than requested levels".into()));
    }
    let mut values = Vec::new();
    let mut vecs = Vec::new();
    for (e, mut v) in found {
        if vectors {
            let norm = (v.iter().map(|x| x * x).sum::<f64>() * h).sqrt();
            let lead = v.iter().find(|x| x.abs() > 1e-3 * norm / h.sqrt()).copied().unwrap_or(1.0);
            let s = lead.signum() / norm;
            for x in &mut v {
                *x *= s;
            }
            vecs.push(v);
        }
        values.push(e);
    }
    Ok(Eigen {
        values,
        vectors: vecs,
    })
}

/// Lowest `n_levels` eigenpairs of `−(ħ²/2)∂²_x + V` with Dirichlet edges.
///
/// Eigenvalues come from Sturm bisection on the coarse grid and on the
/// grid with halved spacing; the reported energies are their Richardson
/// extrapolation. Even potentials on symmetric grids are split into parity
/// sectors, which keeps near-degenerate tunnelling doublets apart.
pub fn diagonalize_schrodinger(model: &PotentialModel, grid: &GridSpec, n_levels: usize) -> Result<SpectralResult> {
    diagonalize_schrodinger_with_tol(model, grid, n_levels, DEFAULT_RICHARDSON_TOL)
}

pub fn diagonalize_schrodinger_with_tol(
    model: &PotentialModel,
    grid: &GridSpec,
    n_levels: usize,
    richardson_tol: f64,
) -> Result<SpectralResult> {
    grid.validate()?;
    if n_levels == 0 {
        return Err(Error::InvalidInput("n_levels must be positive".into()));
    }
    let fine_grid = grid.refined();
    let coarse = fd_levels(model, grid, n_levels, false)?;
    let fine = fd_levels(model, &fine_grid, n_levels, true)?;
    let scale_floor = grid.hbar * (model.d2(0.0).abs().sqrt()).max(1e-300);
    let mut energies = Vec::new();
    let mut errors = Vec::new();
    for (k, (&ec, &ef)) in coarse.values.iter().zip(&fine.values).enumerate() {
        let est = (ef - ec).abs() / 3.0;
        let e = (4.0 * ef - ec) / 3.0;
        if est > richardson_tol * e.abs().max(scale_floor) {
            return Err(Error::GridTooCoarse { level: k, estimate: est });
        }
        energies.push(e);
        errors.push(est);
    }
    for (k, v) in fine.vectors.iter().enumerate() {
        let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let edge = v[0].abs().max(v[v.len() - 1].abs()) / peak;
        if edge > EDGE_DECAY {
            return Err(Error::GridTooNarrow { level: k, edge });
        }
    }
    Ok(SpectralResult {
        energies,
        error_estimates: errors,
        fine_energies: fine.values,
        x: fine_grid.nodes(),
        wavefunctions: fine.vectors,
        grid: *grid,
    })
}

/// `|ψ_n(x)|` at each position, linearly interpolated; rows are levels.
pub fn endpoint_wavefunction_values(spec: &SpectralResult, positions: &[f64]) -> Vec<Vec<f64>> {
    let x = &spec.x;
    let h = x[1] - x[0];
    spec.wavefunctions
        .iter()
        .map(|psi| {
            positions
                .iter()
                .map(|&p| {
                    let u = (p - x[0]) / h;
                    if u < 0.0 || u > (x.len() - 1) as f64 {
                        return 0.0;
                    }
                    let j = (u.floor() as usize).min(x.len() - 2);
                    let t = u - j as f64;
                    ((1.0 - t) * psi[j] + t * psi[j + 1]).abs()
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSpectrum {
    /// Lowest Dirichlet eigenvalue from two-sided double-double shooting.
    pub lambda0: f64,
    /// Same eigenvalue on the finite-difference grid (O(h²) biased).
    pub lambda0_grid: f64,
    pub lambda1_grid: f64,
    /// Sign changes of the grid eigenfunction.
    pub nodes: usize,
}

/// Lowest Dirichlet eigenvalue of `−∂²_τ + w(τ)` and the node count of its
/// eigenfunction. A finite-difference solve on `grid_points` points supplies
/// the bracket and the nodes; shooting to a matching node on the operator's
/// own partition resolves eigenvalues far below the grid's discretization
/// error.
pub fn diagonalize_fluctuation(op: &FluctuationOperator, grid_points: usize, ode_tol: f64) -> Result<FluctuationSpectrum> {
    if grid_points < 3 {
        return Err(Error::InvalidInput("grid_points must be at least 3".into()));
    }
    let (ti, tf) = (op.tau_i, op.tau_f);
    let h = (tf - ti) / (grid_points + 1) as f64;
    let diag: Vec<f64> = (1..=grid_points)
        .map(|j| 2.0 / (h * h) + op.w_of_tau(ti + j as f64 * h))
        .collect();
    let t = SymTridiag::new(diag, vec![-1.0 / (h * h); grid_points - 1]);
    let l0 = t.eigenvalue(0);
    let l1 = t.eigenvalue(1);
    let v = t.eigenvector(l0, 2);
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let significant: Vec<f64> = v.into_iter().filter(|x| x.abs() > 1e-8 * peak).collect();
    let nodes = significant.windows(2).filter(|w| w[0] * w[1] < 0.0).count();

    // Matching node nearest the anchor.
    let mid = op
        .nodes()
        .iter()
        .enumerate()
        .skip(1)
        .take(op.intervals() - 1)
        .min_by(|a, b| (a.1 - op.tau1).abs().total_cmp(&(b.1 - op.tau1).abs()))
        .map(|(k, _)| k)
        .unwrap_or(op.intervals() / 2)
        .max(1);
    let eval = |lam: f64| shooting_mismatch(op, lam, mid, ode_tol);
    let (d0, crossed0) = eval(0.0);
    if crossed0 || d0 <= 0.0 {
        // A non-positive lowest eigenvalue; report the grid value with the error.
        return Err(Error::NegativeMode { tau: op.tau1 });
    }
    let width = 0.25 * (l1 - l0).abs().max(1e-12);
    let mut lo = (l0 - width).min(0.0);
    let mut hi = l0 + width;
    let mut d_lo = eval(lo).0;
    // Pull `hi` below the first pole of the mismatch.
    let mut d_hi;
    let mut tries = 0;
    loop {
        let (d, crossed) = eval(hi);
        if d < 0.0 && !crossed {
            d_hi = d;
            break;
        }
        if d > 0.0 && !crossed {
            // Still below the eigenvalue.
            lo = hi;
            d_lo = d;
            hi += width;
        } else {
            hi = 0.5 * (lo + hi);
        }
        tries += 1;
        if tries > 200 {
            return Err(Error::NoConvergence("could not bracket the lowest eigenvalue".into()));
        }
    }
    // Illinois false position.
    let mut side = 0i32;
    let mut x = lo;
    for _ in 0..200 {
        let nx = (lo * d_hi - hi * d_lo) / (d_hi - d_lo);
        if (nx - x).abs() <= 1e-14 * nx.abs() || hi - lo <= 1e-15 * hi.abs() {
            x = nx;
            break;
        }
        x = nx;
        let (d, _) = eval(x);
        if d == 0.0 {
            break;
        }
        if d > 0.0 {
            lo = x;
            d_lo = d;
            if side == 1 {
                d_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = x;
            d_hi = d;
            if side == -1 {
                d_lo *= 0.5;
            }
            side = -1;
        }
    }
    Ok(FluctuationSpectrum {
        lambda0: x,
        lambda0_grid: l0,
        lambda1_grid: l1,
        nodes,
    })
}

/// `exp(−τH/ħ)` for `H = [[e_i, −√għK], [−√għK, e_f]]` in the basis `(i, f)`,
/// via `e^{−cτ/ħ}(cosh(Rτ/ħ)·1 − sinh(Rτ/ħ)/R·(H − c))`.
pub fn propagator_2x2(sys: &TwoLevelSystem, tau: f64) -> [[f64; 2]; 2] {
    let v = sys.coupling();
    let c = 0.5 * (sys.e_i + sys.e_f);
    let d = 0.5 * (sys.e_i - sys.e_f);
    let r = (d * d + v * v).sqrt();
    let x = r * tau / sys.hbar;
    let damp = (-c * tau / sys.hbar).exp();
    let ch = x.cosh();
    let sr = if r > 0.0 { x.sinh() / r } else { tau / sys.hbar };
    [
        [damp * (ch - sr * d), damp * sr * v],
        [damp * sr * v, damp * (ch + sr * d)],
    ]
}

/// Ordered-time integral over `0 ≤ τ₁ ≤ … ≤ τ_N ≤ τ` of `(√gK)^N` times
/// `e^{−e·t/ħ}` for every segment, starting and alternating from well i.
pub fn nested_simplex_integral(n: usize, sys: &TwoLevelSystem, tau: f64) -> Result<f64> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidInput("nested quadrature supports N = 1, 2, 3".into()));
    }
    let e = |segment: usize| if segment % 2 == 0 { sys.e_i } else { sys.e_f };
    let h = sys.hbar;
    fn level(k: usize, n: usize, start: f64, tau: f64, e: &dyn Fn(usize) -> f64, h: f64) -> Result<f64> {
        if k > n {
            return Ok((-e(n) * (tau - start) / h).exp());
        }
        let mut failure = None;
        let r = quad::integrate(
            |t| match level(k + 1, n, t, tau, e, h) {
                Ok(inner) => (-e(k - 1) * (t - start) / h).exp() * inner,
                Err(err) => {
                    failure.get_or_insert(err);
                    0.0
                }
            },
            start,
            tau,
            1e-13,
            1e-300,
        )?;
        match failure {
            Some(err) => Err(err),
            None => Ok(r.value),
        }
    }
    let kk = (sys.degeneracy as f64).sqrt() * sys.big_k;
    Ok(kk.powi(n as i32) * level(1, n, 0.0, tau, &e, h)?)
}

/// `∫₀^∞ (dτ/ħ) e^{Eτ/ħ} overlap(τ)`, truncated where the integrand has
/// decayed by `e^{−45}`. Energies with `45E/(E₋ − E) > 700` are rejected.
pub fn laplace_transform(sys: &TwoLevelSystem, energy: f64, overlap: impl Fn(f64) -> f64) -> Result<f64> {
    let rate = (sys.e_minus - energy) / sys.hbar;
    if !(rate > 0.0) {
        return Err(Error::InvalidInput("energy must lie below E₋".into()));
    }
    let t_max = 45.0 / rate;
    // The two factors are evaluated separately, so e^{Eτ/ħ} must stay finite.
    if energy * t_max / sys.hbar > 700.0 {
        return Err(Error::InvalidInput(format!(
            "energy {energy} is too close to E₋ = {} for a direct quadrature",
            sys.e_minus
        )));
    }
    let r = quad::integrate(
        |t| (energy * t / sys.hbar).exp() * overlap(t) / sys.hbar,
        0.0,
        t_max,
        1e-13,
        0.0,
    )?;
    Ok(r.value)
}
