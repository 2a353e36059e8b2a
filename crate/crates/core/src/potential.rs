//! Polynomial potentials, well detection and the same-level check.

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::poly::Polynomial;
use serde::{Deserialize, Serialize};

pub const DEFAULT_LEVEL_TOL: f64 = 1e-9;
pub const DEFAULT_SCAN_POINTS: usize = 4096;

/// `V(X) = Σ c_n X^n + zero_shift`, with unit mass.
///
/// `zero_shift` is chosen so that the lowest local minimum sits at `V = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawPotential")]
pub struct PotentialModel {
    pub coefficients: Vec<f64>,
    pub zero_shift: f64,
    #[serde(skip)]
    poly: Polynomial,
    #[serde(skip)]
    d1: Polynomial,
    #[serde(skip)]
    d2: Polynomial,
}

impl PartialEq for PotentialModel {
    fn eq(&self, other: &Self) -> bool {
        self.coefficients == other.coefficients && self.zero_shift == other.zero_shift
    }
}

#[derive(Deserialize)]
struct RawPotential {
    coefficients: Vec<f64>,
}

impl TryFrom<RawPotential> for PotentialModel {
    type Error = Error;
    fn try_from(raw: RawPotential) -> Result<Self> {
        Self::new(raw.coefficients)
    }
}

impl PotentialModel {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        let poly = Polynomial::new(coefficients);
        let deg = poly.degree();
        if deg < 2 || deg % 2 == 1 || poly.leading() <= 0.0 {
            return Err(Error::InvalidInput(
                "potential must be a confining polynomial (even degree, positive leading coefficient)"
                    .into(),
            ));
        }
        let d1 = poly.derivative();
        let d2 = d1.derivative();
        let mut model = Self {
            coefficients: poly.coeffs.clone(),
            zero_shift: 0.0,
            poly,
            d1,
            d2,
        };
        let r = model.d1.root_bound();
        let minima = model.stationary_points(-r, r, DEFAULT_SCAN_POINTS, 1e-14 * r, true);
        let lowest = minima
            .iter()
            .map(|&x| model.poly.eval(x))
            .fold(f64::INFINITY, f64::min);
        model.zero_shift = -lowest;
        Ok(model)
    }

    pub fn from_preset(preset: &Preset) -> Result<Self> {
        Self::new(preset.coefficients()?)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.poly.eval(x) + self.zero_shift
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.d1.eval(x)
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.d2.eval(x)
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    /// True when every odd coefficient vanishes.
    pub fn is_even(&self) -> bool {
        self.coefficients
            .iter()
            .enumerate()
            .all(|(k, &c)| k % 2 == 0 || c == 0.0)
    }

    /// Bound on |X| for all real roots of `V′`.
    pub fn critical_point_bound(&self) -> f64 {
        self.d1.root_bound()
    }

    /// Taylor expansion of `V` about `center` with the constant and linear
    /// terms dropped (they vanish at a stationary point).
    pub fn local_expansion(&self, center: f64) -> LocalExpansion {
        let mut c = Dd::new(center);
        // Polish the stationary point in double-double.
        for _ in 0..3 {
            let g = self.d1.eval_dd(c);
            let h = self.d2.eval_dd(c);
            if h.hi == 0.0 {
                break;
            }
            c -= g / h;
        }
        let mut t = self.poly.taylor_shift_dd(c);
        t[0] = Dd::ZERO;
        t[1] = Dd::ZERO;
        LocalExpansion { center: c, t }
    }

    /// Roots of `V′` in `[lo, hi]` where `V′` changes sign from − to + (minima)
    /// or + to − (maxima).
    fn stationary_points(&self, lo: f64, hi: f64, n: usize, tol: f64, minima: bool) -> Vec<f64> {
        let n = n.max(8);
        let xs: Vec<f64> = (0..=n)
            .map(|j| lo + (hi - lo) * j as f64 / n as f64)
            .collect();
        let s: Vec<f64> = xs.iter().map(|&x| self.d1.eval(x)).collect();
        let want = |a: f64, b: f64| if minima { a < 0.0 && b > 0.0 } else { a > 0.0 && b < 0.0 };
        let mut out = Vec::new();
        for j in 0..n {
            if want(s[j], s[j + 1]) {
                out.push(self.bisect_d1(xs[j], xs[j + 1], tol));
            } else if s[j + 1] == 0.0 && j + 2 <= n && want(s[j], s[j + 2]) {
                out.push(xs[j + 1]);
            }
        }
        out
    }

    fn bisect_d1(&self, mut a: f64, mut b: f64, tol: f64) -> f64 {
        let fa = self.d1.eval(a);
        while b - a > tol {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = self.d1.eval(m);
            if fm == 0.0 {
                return m;
            }
            if (fm < 0.0) == (fa < 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        // Newton polish, kept inside the bracket.
        let mut x = 0.5 * (a + b);
        for _ in 0..3 {
            let h = self.d2.eval(x);
            if h == 0.0 {
                break;
            }
            let nx = x - self.d1.eval(x) / h;
            if nx < a - tol || nx > b + tol || !nx.is_finite() {
                break;
            }
            x = nx;
        }
        x
    }
}

/// `V(center + y) = Σ_{k≥2} t_k y^k` in double-double.
#[derive(Clone, Debug)]
pub struct LocalExpansion {
    pub center: Dd,
    pub t: Vec<Dd>,
}

impl LocalExpansion {
    pub fn value(&self, y: Dd) -> Dd {
        let mut acc = Dd::ZERO;
        for k in (2..self.t.len()).rev() {
            acc = acc * y + self.t[k];
        }
        acc * y * y
    }

    /// `V(center + y) / y²`.
    pub fn quotient(&self, y: Dd) -> Dd {
        let mut acc = Dd::ZERO;
        for k in (2..self.t.len()).rev() {
            acc = acc * y + self.t[k];
        }
        acc
    }

    pub fn quotient_f64(&self, y: f64) -> f64 {
        let mut acc = 0.0;
        for k in (2..self.t.len()).rev() {
            acc = acc * y + self.t[k].to_f64();
        }
        acc
    }

    /// `V′(center + y)`.
    pub fn d1(&self, y: Dd) -> Dd {
        let mut acc = Dd::ZERO;
        for k in (2..self.t.len()).rev() {
            acc = acc * y + self.t[k] * k as f64;
        }
        acc * y
    }

    /// `V″(center + y)`.
    pub fn d2(&self, y: Dd) -> Dd {
        let mut acc = Dd::ZERO;
        for k in (2..self.t.len()).rev() {
            acc = acc * y + self.t[k] * (k * (k - 1)) as f64;
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub position: f64,
    /// `ω = sqrt(V″(position))`.
    pub omega: f64,
    /// `V(position)` after the zero shift; zero up to rounding for same-level wells.
    pub level: f64,
}

impl Well {
    /// Harmonic ground energy `ħω/2`.
    pub fn ground_energy(&self, hbar: f64) -> f64 {
        0.5 * hbar * self.omega
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellPair {
    pub initial: Well,
    #[serde(rename = "final")]
    pub final_: Well,
    /// Maximum of `V` between the two wells.
    pub barrier_top: f64,
    pub barrier_position: f64,
}

#[derive(Clone, Debug)]
pub struct WellSearch {
    /// Defaults to the coefficient-derived root bound of `V′`.
    pub scan_interval: Option<(f64, f64)>,
    pub scan_points: usize,
    /// Relative to the scan half-width.
    pub root_tol: f64,
    pub level_tol: f64,
}

impl Default for WellSearch {
    fn default() -> Self {
        Self {
            scan_interval: None,
            scan_points: DEFAULT_SCAN_POINTS,
            root_tol: 1e-12,
            level_tol: DEFAULT_LEVEL_TOL,
        }
    }
}

/// All minima with `V″ > 0`, sorted by position. Errors unless there are at
/// least two and their levels agree within `level_tol` (relative to the
/// highest barrier between them).
pub fn find_wells(model: &PotentialModel, search: &WellSearch) -> Result<Vec<Well>> {
    let wells = scan_wells(model, search)?;
    if wells.len() < 2 {
        return Err(Error::NotMultiWell { found: wells.len() });
    }
    let scale = barrier_scale(model, &wells);
    let spread = level_spread(&wells);
    if spread > search.level_tol * scale {
        return Err(Error::NotSameLevel {
            spread,
            allowed: search.level_tol * scale,
        });
    }
    Ok(wells)
}

/// Minima with positive curvature in the scan interval, without the
/// multi-well and level checks.
pub fn scan_wells(model: &PotentialModel, search: &WellSearch) -> Result<Vec<Well>> {
    let r = model.critical_point_bound();
    let (lo, hi) = search.scan_interval.unwrap_or((-r, r));
    if !(lo < hi) {
        return Err(Error::InvalidInput("empty scan interval".into()));
    }
    if lo > -r || hi < r {
        return Err(Error::InvalidInput(format!(
            "scan interval [{lo}, {hi}] does not bracket the critical-point bound ±{r}"
        )));
    }
    let tol = search.root_tol * 0.5 * (hi - lo);
    let xs = model.stationary_points(lo, hi, search.scan_points, tol, true);
    Ok(xs
        .into_iter()
        .filter_map(|x| {
            let h = model.d2(x);
            (h > 0.0).then(|| Well {
                position: x,
                omega: h.sqrt(),
                level: model.value(x),
            })
        })
        .collect())
}

fn level_spread(wells: &[Well]) -> f64 {
    let lo = wells.iter().map(|w| w.level).fold(f64::INFINITY, f64::min);
    let hi = wells.iter().map(|w| w.level).fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn barrier_between(model: &PotentialModel, a: f64, b: f64) -> (f64, f64) {
    let maxima = model.stationary_points(a, b, 512, 1e-15 * (b - a).abs().max(1.0), false);
    maxima
        .into_iter()
        .map(|x| (x, model.value(x)))
        .fold((0.5 * (a + b), f64::NEG_INFINITY), |best, c| {
            if c.1 > best.1 {
                c
            } else {
                best
            }
        })
}

fn barrier_scale(model: &PotentialModel, wells: &[Well]) -> f64 {
    wells
        .windows(2)
        .map(|w| barrier_between(model, w[0].position, w[1].position).1)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE)
}

/// True iff the well levels agree within `level_tol` times the highest
/// barrier separating them.
pub fn same_level_check(model: &PotentialModel, wells: &[Well], level_tol: f64) -> bool {
    if wells.len() < 2 {
        return true;
    }
    level_spread(wells) <= level_tol * barrier_scale(model, wells)
}

/// Adjacent pairs, oriented left to right.
pub fn adjacent_pairs(model: &PotentialModel, wells: &[Well]) -> Vec<WellPair> {
    wells
        .windows(2)
        .map(|w| {
            let (x, v) = barrier_between(model, w[0].position, w[1].position);
            WellPair {
                initial: w[0],
                final_: w[1],
                barrier_top: v,
                barrier_position: x,
            }
        })
        .collect()
}

/// Named potentials from the worked examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum Preset {
    /// `(λ/24)(X² − a²)²`; `ω² = λa²/3`. Give either `a` or `omega`.
    SymmetricDoubleWell {
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
    },
    /// `(λ/2)X²(X² − a²)²`; `ω_m² = λa⁴`, `ω_r = 2ω_m`.
    TripleWell { lambda: f64, a: f64 },
}

impl Preset {
    pub fn coefficients(&self) -> Result<Vec<f64>> {
        match *self {
            Preset::SymmetricDoubleWell { lambda, a, omega } => {
                if !(lambda > 0.0) {
                    return Err(Error::InvalidInput("lambda must be positive".into()));
                }
                let a = match (a, omega) {
                    (Some(a), None) => a,
                    (None, Some(w)) => w * (3.0 / lambda).sqrt(),
                    (None, None) => 1.0,
                    (Some(_), Some(_)) => {
                        return Err(Error::InvalidInput("give either a or omega, not both".into()))
                    }
                };
                if !(a > 0.0) {
                    return Err(Error::InvalidInput("a must be positive".into()));
                }
                let a2 = a * a;
                Ok(vec![lambda * a2 * a2 / 24.0, 0.0, -lambda * a2 / 12.0, 0.0, lambda / 24.0])
            }
            Preset::TripleWell { lambda, a } => {
                if !(lambda > 0.0 && a > 0.0) {
                    return Err(Error::InvalidInput("lambda and a must be positive".into()));
                }
                let a2 = a * a;
                Ok(vec![
                    0.0,
                    0.0,
                    0.5 * lambda * a2 * a2,
                    0.0,
                    -lambda * a2,
                    0.0,
                    0.5 * lambda,
                ])
            }
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Preset::SymmetricDoubleWell { lambda, .. } | Preset::TripleWell { lambda, .. } => lambda,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Preset {
        let mut p = self.clone();
        match &mut p {
            Preset::SymmetricDoubleWell { lambda: l, .. } | Preset::TripleWell { lambda: l, .. } => {
                *l = lambda
            }
        }
        p
    }
}
