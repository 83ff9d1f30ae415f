//! Random model generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use siws::dynamics::SystemState;
use siws::netmodel::{MultiVirusSystem, VirusLayer};
use siws::spectral;

/// Every node contaminates and is infected by the resource, so `B_w` is irreducible.
pub fn random_layer<R: Rng>(rng: &mut R, n: usize, heal: (f64, f64)) -> VirusLayer {
    let beta = DMatrix::from_fn(n, n, |_, _| if rng.gen_bool(0.6) { rng.gen_range(0.0..1.5) } else { 0.0 });
    let delta = DVector::from_fn(n, |_, _| rng.gen_range(heal.0..heal.1));
    let beta_w = DVector::from_fn(n, |_, _| rng.gen_range(0.1..1.0));
    let c = random_weights(rng, n);
    VirusLayer::new(beta, delta, beta_w, c, rng.gen_range(0.5..3.0)).unwrap()
}

pub fn random_weights<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    let raw = DVector::from_fn(n, |_, _| rng.gen_range(0.1..1.0));
    &raw / raw.sum()
}

/// Draw layers until one has `s(B_w - D_w) > min_growth`.
pub fn endemic_layer<R: Rng>(rng: &mut R, max_n: usize, min_growth: f64) -> VirusLayer {
    loop {
        let n = rng.gen_range(1..=max_n);
        let layer = random_layer(rng, n, (0.2, 2.0));
        if spectral::growth_abscissa(&layer).unwrap().value > min_growth {
            return layer;
        }
    }
}

/// Random point of the domain: per-node fractions summing to at most one, contamination in `[0, 2)`.
pub fn random_state<R: Rng>(rng: &mut R, sys: &MultiVirusSystem, interior: bool) -> SystemState {
    let (m, n, d) = (sys.m(), sys.n(), sys.block_dim());
    let floor = if interior { 0.05 } else { 0.0 };
    let mut v = DVector::zeros(sys.dim());
    for i in 0..n {
        let weights: Vec<f64> = (0..=m).map(|_| rng.gen_range(floor..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for k in 0..m {
            v[k * d + i] = weights[k] / total;
        }
    }
    if sys.resource_enabled() {
        for k in 0..m {
            v[k * d + n] = rng.gen_range(floor..2.0);
        }
    }
    SystemState::from_vector(sys, v).unwrap()
}

/// A pair where virus 1 strictly dominates: same graph and contamination, virus 2 heals faster
/// on at least one node. Both viruses grow from the healthy state by more than `min_growth`.
pub fn dominance_pair<R: Rng>(rng: &mut R, max_n: usize, min_growth: f64) -> MultiVirusSystem {
    loop {
        let l1 = endemic_layer(rng, max_n, min_growth);
        let n = l1.n();
        let boost = DVector::from_fn(n, |_, _| if rng.gen_bool(0.7) { rng.gen_range(0.05..0.5) } else { 0.0 });
        let boost = if boost.iter().all(|&b| b == 0.0) { DVector::from_element(n, 0.1) } else { boost };
        let delta2 = l1.delta().component_mul(&boost.add_scalar(1.0));
        let l2 = l1.with_delta(delta2).unwrap();
        if spectral::growth_abscissa(&l2).unwrap().value > min_growth {
            return MultiVirusSystem::new(vec![l1, l2]).unwrap();
        }
    }
}
