//! The 15-district Stockholm study: two viruses on the same district contact graph,
//! every district linked both ways to the metro (the shared resource).
//!
//! The district adjacency is only available as a map. [`ADJACENCY`] is a
//! reconstruction: starting from a reading of the map ([`MAP_READING`]), edges were
//! edited by the search in `examples/calibrate_stockholm.rs` to bring the eight
//! reference spectral values as close as possible. See the README for how close it gets.
//!
//! Districts `0..8` lie north of lake Malaren, `8..15` south of it.

use nalgebra::{DMatrix, DVector};

use crate::equilibria;
use crate::error::Result;
use crate::mitigation::{self, DEFAULT_MARGIN};
use crate::netmodel::{MultiVirusSystem, VirusLayer};
use crate::scenario::{Event, InitialState, NamedEquilibrium, Scenario};
use crate::spectral;

pub const DISTRICTS: usize = 15;
/// Number of districts north of the lake.
pub const NORTH: usize = 8;

/// Undirected district edges, zero-based, as reconstructed by calibration.
pub const ADJACENCY: [(usize, usize); 20] = [
    (0, 1),
    (0, 3),
    (0, 7),
    (1, 14),
    (2, 3),
    (2, 7),
    (3, 7),
    (4, 7),
    (5, 7),
    (5, 8),
    (5, 14),
    (6, 7),
    (8, 9),
    (8, 10),
    (8, 11),
    (9, 10),
    (9, 12),
    (9, 13),
    (10, 12),
    (12, 13),
];

/// Edges read off the district map; the calibration starts here.
pub const MAP_READING: [(usize, usize); 27] = [
    (0, 1),
    (0, 3),
    (1, 2),
    (1, 3),
    (2, 3),
    (2, 7),
    (3, 4),
    (3, 7),
    (4, 5),
    (4, 7),
    (5, 6),
    (5, 7),
    (6, 7),
    (5, 8),
    (4, 8),
    (8, 9),
    (8, 10),
    (8, 11),
    (9, 10),
    (9, 12),
    (9, 13),
    (10, 11),
    (10, 12),
    (10, 14),
    (11, 14),
    (12, 13),
    (12, 14),
];

/// The eight reference values, in the order of [`spectral_values`].
pub const REPORTED: [(&str, f64); 8] = [
    ("fig3 s(B_w^1 - D_w^1)", 0.3),
    ("fig3 s(B_w^2 - D_w^2)", -4.2),
    ("fig4 s(B_w^1 - D_w^1)", 2.8),
    ("fig4 s(B_w^2 - D_w^2)", 2.8),
    ("fig4 invasion abscissa of virus 1", 0.2),
    ("fig4 invasion abscissa of virus 2", 0.2),
    ("fig5 s(B_w^1 - D_w^1)", 1.7),
    ("fig5 s(B_w^2 - D_w^2)", 0.9),
];

/// Reference heal-boost cost for virus 2 in the fig4 setting.
pub const REPORTED_HEAL_BOOST_COST: f64 = 61.0;
/// Reference virus-as-vaccine cost.
pub const REPORTED_VACCINE_COST: f64 = 33.0;

/// `beta_ij = 1` for adjacent districts and on the diagonal, 0 elsewhere.
pub fn contact_matrix(edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut beta = DMatrix::identity(DISTRICTS, DISTRICTS);
    for &(i, j) in edges {
        beta[(i, j)] = 1.0;
        beta[(j, i)] = 1.0;
    }
    beta
}

/// One virus on the given graph with `beta_iw = 1` and `c_i = 1/15`.
pub fn layer(edges: &[(usize, usize)], delta: DVector<f64>, delta_w: f64) -> Result<VirusLayer> {
    VirusLayer::new(
        contact_matrix(edges),
        delta,
        DVector::from_element(DISTRICTS, 1.0),
        DVector::from_element(DISTRICTS, 1.0 / DISTRICTS as f64),
        delta_w,
    )
}

/// `north` on districts `0..8`, `south` on the rest.
pub fn split_rates(north: f64, south: f64) -> DVector<f64> {
    DVector::from_fn(DISTRICTS, |i, _| if i < NORTH { north } else { south })
}

fn uniform_pair(edges: &[(usize, usize)], d1: f64, dw1: f64, d2: f64, dw2: f64) -> Result<MultiVirusSystem> {
    MultiVirusSystem::new(vec![
        layer(edges, DVector::from_element(DISTRICTS, d1), dw1)?,
        layer(edges, DVector::from_element(DISTRICTS, d2), dw2)?,
    ])
}

/// One virus just above threshold, the other far below.
pub fn fig3_system(edges: &[(usize, usize)]) -> Result<MultiVirusSystem> {
    uniform_pair(edges, 4.6, 4.0, 10.0, 10.0)
}

/// Mirrored north/south healing rates; the viruses coexist.
pub fn fig4_system(edges: &[(usize, usize)]) -> Result<MultiVirusSystem> {
    MultiVirusSystem::new(vec![layer(edges, split_rates(1.5, 2.0), 1.0)?, layer(edges, split_rates(2.0, 1.5), 1.0)?])
}

/// Both viruses above threshold, virus 1 dominating.
pub fn fig5_system(edges: &[(usize, usize)]) -> Result<MultiVirusSystem> {
    uniform_pair(edges, 3.0, 3.0, 4.0, 4.0)
}

/// The eight quantities listed in [`REPORTED`] for a candidate graph.
pub fn spectral_values(edges: &[(usize, usize)]) -> Result<[f64; 8]> {
    let s = |sys: &MultiVirusSystem, k: usize| spectral::growth_abscissa(sys.layer(k)).map(|r| r.value);
    let f3 = fig3_system(edges)?;
    let f4 = fig4_system(edges)?;
    let f5 = fig5_system(edges)?;
    let e1 = equilibria::endemic_state(f4.layer(0))?.y;
    let e2 = equilibria::endemic_state(f4.layer(1))?.y;
    Ok([
        s(&f3, 0)?,
        s(&f3, 1)?,
        s(&f4, 0)?,
        s(&f4, 1)?,
        spectral::invasion_abscissa(f4.layer(0), &e2)?.value,
        spectral::invasion_abscissa(f4.layer(1), &e1)?.value,
        s(&f5, 0)?,
        s(&f5, 1)?,
    ])
}

/// Largest absolute deviation from the reference values.
pub fn calibration_error(edges: &[(usize, usize)]) -> Result<f64> {
    let v = spectral_values(edges)?;
    Ok(v.iter().zip(REPORTED.iter()).map(|(a, (_, b))| (a - b).abs()).fold(0.0, f64::max))
}

/// Simulation horizon of the bundled scenarios.
pub const HORIZON: f64 = 500.0;

/// Time of the healing-rate switch in the mitigation figures.
pub const SWITCH_TIME: f64 = 0.5;

fn half_infected(sys: &MultiVirusSystem) -> InitialState {
    InitialState { p: Some(vec![vec![0.5; DISTRICTS]; sys.m()]), z: Some(vec![0.5; sys.m()]), equilibrium: None }
}

fn figure_scenario(name: &str, description: &str, sys: &MultiVirusSystem, initial: InitialState) -> Scenario {
    let mut s = Scenario::from_system(name, sys, initial, HORIZON);
    s.description = Some(description.to_string());
    s.integrator.stop_on_convergence = true;
    s
}

/// Bundled scenarios `stockholm_fig3` .. `stockholm_fig7`, in order.
pub fn scenarios() -> Result<Vec<Scenario>> {
    let edges = &ADJACENCY;
    let f3 = fig3_system(edges)?;
    let f4 = fig4_system(edges)?;
    let f5 = fig5_system(edges)?;

    let coexisting = InitialState { equilibrium: Some(NamedEquilibrium::Coexisting), ..InitialState::default() };
    let boost = mitigation::heal_boost(f4.layer(1), 1, &DVector::zeros(DISTRICTS))?;
    let vaccine = mitigation::vaccine_rates(&f4, DEFAULT_MARGIN, true)?;
    let mut f6 = figure_scenario(
        "stockholm_fig6",
        "fig4 system started at its coexisting equilibrium; virus 2 healing rates boosted at t = 0.5",
        &f4,
        coexisting.clone(),
    );
    f6.events.push(Event { time: SWITCH_TIME, virus: 2, delta: boost.new_delta });
    let mut f7 = figure_scenario(
        "stockholm_fig7",
        "fig4 system started at its coexisting equilibrium; virus 2 healing rates set for exclusion at t = 0.5",
        &f4,
        coexisting,
    );
    f7.events.push(Event { time: SWITCH_TIME, virus: 2, delta: vaccine.new_delta });

    Ok(vec![
        figure_scenario("stockholm_fig3", "virus 1 endemic, virus 2 eradicated", &f3, half_infected(&f3)),
        figure_scenario("stockholm_fig4", "mirrored healing rates, coexistence", &f4, half_infected(&f4)),
        figure_scenario("stockholm_fig5", "virus 1 dominates and excludes virus 2", &f5, half_infected(&f5)),
        f6,
        f7,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::is_irreducible;

    #[test]
    fn graphs_are_connected_and_symmetric() {
        for edges in [&ADJACENCY[..], &MAP_READING[..]] {
            let beta = contact_matrix(edges);
            assert_eq!(beta, beta.transpose());
            assert!(crate::scc::is_strongly_connected(&beta));
        }
        let sys = fig4_system(&ADJACENCY).unwrap();
        assert!(sys.layers().iter().all(is_irreducible));
    }

    #[test]
    fn calibrated_graph_beats_map_reading() {
        assert!(calibration_error(&ADJACENCY).unwrap() < calibration_error(&MAP_READING).unwrap());
    }
}
