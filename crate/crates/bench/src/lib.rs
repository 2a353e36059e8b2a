//! Shared fixtures for the benchmarks.

use multiwell::instanton::{solve_trajectory, InstantonSolution};
use multiwell::potential::{adjacent_pairs, find_wells, WellSearch};
use multiwell::{PotentialModel, Preset, WellPair};

pub fn double_well() -> PotentialModel {
    PotentialModel::from_preset(&Preset::SymmetricDoubleWell {
        lambda: 0.2,
        a: None,
        omega: Some(1.0),
    })
    .expect("preset is valid")
}

pub fn triple_well() -> PotentialModel {
    PotentialModel::from_preset(&Preset::TripleWell { lambda: 1.0, a: 1.0 }).expect("preset is valid")
}

pub fn last_pair(model: &PotentialModel) -> WellPair {
    let wells = find_wells(model, &WellSearch::default()).expect("multi-well");
    *adjacent_pairs(model, &wells).last().expect("at least one pair")
}

pub fn instanton(model: &PotentialModel, half_window: f64) -> InstantonSolution {
    solve_trajectory(model, &last_pair(model), half_window, 1e-30).expect("trajectory solves")
}
