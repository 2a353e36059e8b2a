//! End-to-end pipeline: wells, instantons, determinants, two-level
//! resummation and the grid oracle, assembled into one report.

use crate::error::{Error, Result};
use crate::fluctuation::{gy_analysis, GyResult};
use crate::instanton::{solve_trajectory_with, InstantonSolution, InstantonSummary, TrajectoryOptions, DEFAULT_FIT_WINDOW};
use crate::oracle::{self, GridSpec, SpectralResult};
use crate::potential::{self, PotentialModel, Preset, Well, WellPair, WellSearch};
use crate::tridiag::SymTridiag;
use crate::twolevel::{self, AmplitudeRow, KayFactor, TwoLevelSystem};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialSpec {
    Poly { poly: Vec<f64> },
    Preset(Preset),
}

impl PotentialSpec {
    pub fn build(&self) -> Result<PotentialModel> {
        match self {
            PotentialSpec::Poly { poly } => PotentialModel::new(poly.clone()),
            PotentialSpec::Preset(p) => PotentialModel::from_preset(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub ode_tol: f64,
    pub quad_tol: f64,
    pub level_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ode_tol: 1e-26,
            quad_tol: 1e-10,
            level_tol: potential::DEFAULT_LEVEL_TOL,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOverrides {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub n_points: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub report: Option<String>,
    pub overlaps: Option<String>,
    pub sweep: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapSettings {
    /// Defaults to `8ħ/(E₊ − E₋)`.
    pub tau_max: Option<f64>,
    pub n_samples: usize,
    /// Index into the adjacent pairs.
    pub pair: usize,
}

impl Default for OverlapSettings {
    fn default() -> Self {
        Self {
            tau_max: None,
            n_samples: 101,
            pair: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Lambda,
    Hbar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub potential: PotentialSpec,
    #[serde(default = "one")]
    pub hbar: f64,
    /// Determinant window as the dimensionless product `min(ω)·τ_fi`.
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default)]
    pub grid: GridOverrides,
    /// Oracle levels; defaults to the number of wells.
    #[serde(default)]
    pub n_levels: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub degeneracy: Option<u32>,
    #[serde(default = "yes")]
    pub oracle: bool,
    #[serde(default)]
    pub overlaps: OverlapSettings,
    #[serde(default)]
    pub sweep: Option<SweepSettings>,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn one() -> f64 {
    1.0
}

fn default_window() -> f64 {
    40.0
}

fn yes() -> bool {
    true
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec::Preset(Preset::SymmetricDoubleWell {
                lambda: 0.2,
                a: None,
                omega: Some(1.0),
            }),
            hbar: 1.0,
            window: 40.0,
            grid: GridOverrides::default(),
            n_levels: None,
            tolerances: Tolerances::default(),
            degeneracy: None,
            oracle: true,
            overlaps: OverlapSettings::default(),
            sweep: Some(SweepSettings {
                parameter: SweepParameter::Lambda,
                values: vec![1.0 / 3.0, 0.25, 0.2, 1.0 / 6.0, 1.0 / 7.0],
            }),
            outputs: OutputPaths::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::InvalidInput("hbar must be positive".into()));
        }
        if !(t.ode_tol > 0.0 && t.quad_tol > 0.0 && t.level_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.window >= 20.0) {
            return Err(Error::InvalidInput("window must be at least 20".into()));
        }
        if self.degeneracy == Some(0) {
            return Err(Error::InvalidInput("degeneracy must be positive".into()));
        }
        if self.n_levels == Some(0) {
            return Err(Error::InvalidInput("n_levels must be positive".into()));
        }
        Ok(())
    }

    /// Same configuration with the sweep parameter set to `value`.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<AnalysisConfig> {
        let mut c = self.clone();
        match parameter {
            SweepParameter::Hbar => c.hbar = value,
            SweepParameter::Lambda => match &self.potential {
                PotentialSpec::Preset(p) => c.potential = PotentialSpec::Preset(p.with_lambda(value)),
                PotentialSpec::Poly { .. } => {
                    return Err(Error::InvalidInput("lambda sweeps need a preset potential".into()))
                }
            },
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pair: WellPair,
    pub instanton: InstantonSummary,
    pub gy: GyResult,
    pub kay: KayFactor,
    pub two_level: TwoLevelSystem,
    /// Wells entering the two-level system: the return well first.
    pub return_well: Well,
    pub partner_wells: Vec<Well>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub amplitudes: Vec<AmplitudeRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub grid: GridSpec,
    pub energies: Vec<f64>,
    pub error_estimates: Vec<f64>,
    /// `|ψ_n|` at each well, rows by level.
    pub well_values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub instanton: f64,
    pub oracle: f64,
    pub difference: f64,
    pub relative: f64,
    /// Oracle discretization estimate attached to the compared value.
    pub oracle_error: f64,
}

impl Comparison {
    fn new(quantity: impl Into<String>, instanton: f64, oracle: f64, oracle_error: f64) -> Self {
        let difference = instanton - oracle;
        Self {
            quantity: quantity.into(),
            instanton,
            oracle,
            difference,
            relative: difference.abs() / oracle.abs(),
            oracle_error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub potential: PotentialModel,
    pub hbar: f64,
    pub wells: Vec<Well>,
    pub pairs: Vec<PairReport>,
    /// Eigenvalues of the nearest-neighbour chain with well energies on the
    /// diagonal and `−ħK` between adjacent wells.
    pub tight_binding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Clone, Debug)]
pub struct PairAnalysis {
    pub solution: InstantonSolution,
    pub report: PairReport,
}

fn neighbours(wells: &[Well], k: usize) -> Vec<Well> {
    let mut n = Vec::new();
    if k > 0 {
        n.push(wells[k - 1]);
    }
    if k + 1 < wells.len() {
        n.push(wells[k + 1]);
    }
    n
}

/// Shortest GY window tried before giving up, in units of `1/ω_min`.
const MIN_GY_WINDOW: f64 = 20.0;

/// GY evaluation, shrinking the window when the lowest eigenvalue sinks
/// below what the trajectory resolves. The two sides of the trajectory come
/// from expansions about different wells; unless the coefficients are exact
/// in binary these disagree at the 1e-16 level, and once λ₀/ω² drops under
/// that the forward solution acquires a node.
fn gy_with_fallback(
    sol: &InstantonSolution,
    window: f64,
    wmin: f64,
    ode_tol: f64,
    notes: &mut Vec<String>,
) -> Result<GyResult> {
    let mut w = window;
    loop {
        match gy_analysis(sol, w, ode_tol) {
            Err(Error::NegativeMode { tau }) if (w - 5.0 / wmin) * wmin >= MIN_GY_WINDOW - 1e-9 => {
                notes.push(format!(
                    "determinant window ω·τ = {:.1} gave a node at τ = {tau:.4}; retrying at {:.1}",
                    w * wmin,
                    w * wmin - 5.0
                ));
                w -= 5.0 / wmin;
            }
            other => return other,
        }
    }
}

/// Instanton, determinant, K-factor and two-level system for one pair.
pub fn analyze_pair(model: &PotentialModel, wells: &[Well], pair: &WellPair, config: &AnalysisConfig) -> Result<PairAnalysis> {
    let wmin = pair.initial.omega.min(pair.final_.omega);
    let window = config.window / wmin;
    let mut opts = TrajectoryOptions::new(0.5 * window.max(40.0 / wmin));
    opts.ode_tol = config.tolerances.ode_tol;
    opts.quad_tol = config.tolerances.quad_tol;
    opts.fit_window = DEFAULT_FIT_WINDOW;
    let sol = solve_trajectory_with(model, pair, &opts)?;
    let mut notes = Vec::new();
    let gy = gy_with_fallback(&sol, window, wmin, config.tolerances.ode_tol, &mut notes)?;
    let kay = twolevel::kay_factor(&sol, gy.k0_analytic, config.hbar)?;

    // The lower well returns; ties go to the left well.
    let hb = config.hbar;
    let (ret, other) = if pair.final_.ground_energy(hb) < pair.initial.ground_energy(hb) {
        (pair.final_, pair.initial)
    } else {
        (pair.initial, pair.final_)
    };
    let k = wells
        .iter()
        .position(|w| w.position == ret.position)
        .ok_or_else(|| Error::Inconsistent("pair well missing from the well list".into()))?;
    let around = neighbours(wells, k);
    let g = config.degeneracy.unwrap_or(around.len() as u32);
    let partners = if around.len() == g as usize { around } else { vec![other; g as usize] };
    let sys = twolevel::two_level_energies(ret.ground_energy(hb), other.ground_energy(hb), hb, kay.value, g)?;
    let amplitudes = twolevel::wavefunction_amplitudes(&sys, &ret, &partners)?;
    Ok(PairAnalysis {
        report: PairReport {
            pair: *pair,
            instanton: sol.summary(),
            gy,
            kay,
            two_level: sys,
            return_well: ret,
            partner_wells: partners,
            amplitudes,
            notes,
        },
        solution: sol,
    })
}

/// Eigenvalues of the well chain, ascending.
pub fn tight_binding_levels(wells: &[Well], couplings: &[f64], hbar: f64) -> Vec<f64> {
    let diag: Vec<f64> = wells.iter().map(|w| w.ground_energy(hbar)).collect();
    let off: Vec<f64> = couplings.iter().map(|k| -hbar * k).collect();
    let t = SymTridiag::new(diag, off);
    (0..wells.len()).map(|k| t.eigenvalue(k)).collect()
}

pub fn oracle_grid(model: &PotentialModel, wells: &[Well], config: &AnalysisConfig, n_levels: usize) -> GridSpec {
    let mut g = oracle::default_grid(model, wells, config.hbar, n_levels);
    if let Some(x) = config.grid.x_min {
        g.x_min = x;
    }
    if let Some(x) = config.grid.x_max {
        g.x_max = x;
    }
    if let Some(n) = config.grid.n_points {
        g.n_points = n;
    }
    g
}

pub fn locate_wells(model: &PotentialModel, config: &AnalysisConfig) -> Result<Vec<Well>> {
    let search = WellSearch {
        level_tol: config.tolerances.level_tol,
        ..WellSearch::default()
    };
    potential::find_wells(model, &search)
}

pub fn run_oracle(model: &PotentialModel, wells: &[Well], config: &AnalysisConfig) -> Result<SpectralResult> {
    let n = config.n_levels.unwrap_or(wells.len());
    let grid = oracle_grid(model, wells, config, n);
    oracle::diagonalize_schrodinger(model, &grid, n)
}

pub fn analyze(config: &AnalysisConfig) -> Result<AnalysisReport> {
    config.validate()?;
    let model = config.potential.build()?;
    let wells = locate_wells(&model, config)?;
    let pairs = potential::adjacent_pairs(&model, &wells);
    let mut reports = Vec::with_capacity(pairs.len());
    for p in &pairs {
        reports.push(analyze_pair(&model, &wells, p, config)?.report);
    }
    let couplings: Vec<f64> = reports.iter().map(|r| r.kay.value).collect();
    let tight = tight_binding_levels(&wells, &couplings, config.hbar);

    let mut comparisons = Vec::new();
    let oracle = if config.oracle {
        let spec = run_oracle(&model, &wells, config)?;
        let positions: Vec<f64> = wells.iter().map(|w| w.position).collect();
        let values = oracle::endpoint_wavefunction_values(&spec, &positions);
        let n = spec.energies.len().min(tight.len());
        for k in 0..n {
            comparisons.push(Comparison::new(
                format!("E{k}"),
                tight[k],
                spec.energies[k],
                spec.error_estimates[k],
            ));
            if k > 0 {
                comparisons.push(Comparison::new(
                    format!("E{k}-E0"),
                    tight[k] - tight[0],
                    spec.energies[k] - spec.energies[0],
                    spec.error_estimates[k] + spec.error_estimates[0],
                ));
            }
        }
        // Endpoint values when one two-level system spans every well.
        if let [only] = reports.as_slice() {
            push_amplitude_comparisons(&mut comparisons, only, &wells, &values);
        } else if let Some(r) = reports.iter().find(|r| r.partner_wells.len() + 1 == wells.len()) {
            push_amplitude_comparisons(&mut comparisons, r, &wells, &values);
        }
        Some(OracleReport {
            grid: spec.grid,
            energies: spec.energies,
            error_estimates: spec.error_estimates,
            well_values: values,
        })
    } else {
        None
    };
    Ok(AnalysisReport {
        potential: model,
        hbar: config.hbar,
        wells,
        pairs: reports,
        tight_binding: tight,
        oracle,
        comparisons,
    })
}

fn push_amplitude_comparisons(out: &mut Vec<Comparison>, r: &PairReport, wells: &[Well], values: &[Vec<f64>]) {
    for row in &r.amplitudes {
        let Some(w) = wells.iter().position(|w| w.position == row.well_position) else {
            continue;
        };
        let Some(level) = values.get(row.level) else {
            continue;
        };
        out.push(Comparison::new(
            format!("psi{}(x={:.6})", row.level, row.well_position),
            row.value.abs(),
            level[w],
            0.0,
        ));
    }
}

/// Tabulated overlaps with the closed 2×2 propagator alongside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub tau: f64,
    pub odd: f64,
    pub even: f64,
    pub oracle_odd: f64,
    pub oracle_even: f64,
}

pub fn overlap_series(sys: &TwoLevelSystem, tau_max: Option<f64>, n_samples: usize) -> Result<Vec<OverlapRow>> {
    if n_samples < 2 {
        return Err(Error::InvalidInput("n_samples must be at least 2".into()));
    }
    let t_max = tau_max.unwrap_or(8.0 * sys.hbar / (sys.e_plus - sys.e_minus));
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidInput("tau_max must be positive".into()));
    }
    Ok((0..n_samples)
        .map(|k| {
            let tau = t_max * k as f64 / (n_samples - 1) as f64;
            let p = oracle::propagator_2x2(sys, tau);
            OverlapRow {
                tau,
                odd: twolevel::overlap_odd(sys, tau),
                even: twolevel::overlap_even(sys, tau),
                oracle_odd: p[1][0],
                oracle_even: p[0][0],
            }
        })
        .collect())
}

/// One row of a convergence sweep: `2√g·ħK` against the lowest oracle gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub action_over_hbar: Option<f64>,
    pub instanton_splitting: Option<f64>,
    pub oracle_splitting: Option<f64>,
    pub relative_error: Option<f64>,
    #[serde(default)]
    pub error: Option<String>,
}

pub fn sweep_point(config: &AnalysisConfig, parameter: SweepParameter, value: f64) -> SweepRow {
    let row = || -> Result<(f64, f64, f64)> {
        let c = config.with_parameter(parameter, value)?;
        c.validate()?;
        let model = c.potential.build()?;
        let wells = locate_wells(&model, &c)?;
        let pairs = potential::adjacent_pairs(&model, &wells);
        let first = pairs.first().ok_or(Error::NotMultiWell { found: wells.len() })?;
        let a = analyze_pair(&model, &wells, first, &c)?.report;
        let spec = run_oracle(&model, &wells, &AnalysisConfig { n_levels: Some(2), ..c.clone() })?;
        Ok((
            a.kay.action_over_hbar,
            2.0 * a.two_level.coupling(),
            spec.energies[1] - spec.energies[0],
        ))
    };
    match row() {
        Ok((s, inst, orc)) => SweepRow {
            value,
            action_over_hbar: Some(s),
            instanton_splitting: Some(inst),
            oracle_splitting: Some(orc),
            relative_error: Some((inst - orc).abs() / orc),
            error: None,
        },
        Err(e) => SweepRow {
            value,
            action_over_hbar: None,
            instanton_splitting: None,
            oracle_splitting: None,
            relative_error: None,
            error: Some(e.to_string()),
        },
    }
}

pub fn sweep(config: &AnalysisConfig, settings: &SweepSettings) -> Result<Vec<SweepRow>> {
    if settings.values.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one value".into()));
    }
    Ok(settings
        .values
        .iter()
        .map(|&v| sweep_point(config, settings.parameter, v))
        .collect())
}
