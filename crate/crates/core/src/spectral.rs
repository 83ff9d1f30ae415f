//! Perron roots of nonnegative matrices and spectral abscissae of Metzler matrices,
//! plus the reproduction numbers built on them.
//!
//! Everything is computed by power iteration on a positively shifted matrix. For an
//! irreducible nonnegative `N`, `N + sigma I` (sigma > 0) is primitive, so the iteration
//! converges to the positive Perron vector. Convergence is certified with the
//! Collatz-Wielandt bracket `min_i (Av)_i / v_i <= rho(A) <= max_i (Av)_i / v_i`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netmodel::VirusLayer;
use crate::scc;

/// Values with magnitude at or below this are reported as marginal (neither sign certified).
pub const MARGINAL_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    /// Relative width of the Collatz-Wielandt bracket at which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration { tol: 1e-12, max_iter: 100_000 }
    }
}

/// A Perron root (or spectral abscissa) with its eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub value: f64,
    /// Unit 1-norm, entrywise nonnegative; positive when the input is irreducible.
    pub vector: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Sign of a threshold quantity such as `s(B_w - D_w)` or `rho - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSign {
    Negative,
    Marginal,
    Positive,
}

impl ThresholdSign {
    pub fn of(value: f64) -> Self {
        if value > MARGINAL_BAND {
            ThresholdSign::Positive
        } else if value < -MARGINAL_BAND {
            ThresholdSign::Negative
        } else {
            ThresholdSign::Marginal
        }
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Structural(format!("expected a non-empty square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Structural("matrix contains a non-finite entry".into()));
    }
    Ok(())
}

/// Power iteration on `a`, assumed irreducible, nonnegative and with positive diagonal.
/// Returns the Perron root of `a` itself.
fn perron_primitive(a: &DMatrix<f64>, opts: PowerIteration) -> SpectralResult {
    let n = a.nrows();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    for it in 1..=opts.max_iter {
        let w = a * &v;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..n {
            let r = w[i] / v[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let norm = w.sum();
        estimate = 0.5 * (lo + hi);
        if !(norm > 0.0) || !norm.is_finite() {
            return SpectralResult { value: estimate, vector: v, iterations: it, converged: false };
        }
        v = w / norm;
        if hi - lo <= opts.tol * estimate.max(1.0) {
            return SpectralResult { value: estimate, vector: v, iterations: it, converged: true };
        }
    }
    SpectralResult { value: estimate, vector: v, iterations: opts.max_iter, converged: false }
}

fn shift_for(n: &DMatrix<f64>) -> f64 {
    // half the max row sum bounds rho/2 from above; keeps the shifted iteration well separated
    let row_max = n.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    if row_max > 0.0 {
        0.5 * row_max
    } else {
        1.0
    }
}

fn radius_irreducible(n: &DMatrix<f64>, opts: PowerIteration) -> SpectralResult {
    if n.nrows() == 1 {
        return SpectralResult {
            value: n[(0, 0)],
            vector: DVector::from_element(1, 1.0),
            iterations: 0,
            converged: true,
        };
    }
    let sigma = shift_for(n);
    let mut a = n.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += sigma;
    }
    let mut r = perron_primitive(&a, opts);
    r.value -= sigma;
    r
}

/// Eigenvector for a reducible input: plain shifted power iteration on the whole matrix.
fn reducible_vector(n: &DMatrix<f64>, opts: PowerIteration) -> (DVector<f64>, usize) {
    let dim = n.nrows();
    let sigma = shift_for(n);
    let mut a = n.clone();
    for i in 0..dim {
        a[(i, i)] += sigma;
    }
    let mut v = DVector::from_element(dim, 1.0 / dim as f64);
    for it in 1..=opts.max_iter {
        let w = &a * &v;
        let norm = w.sum();
        if !(norm > 0.0) {
            return (v, it);
        }
        let next = w / norm;
        let change = (&next - &v).amax();
        v = next;
        if change <= opts.tol {
            return (v, it);
        }
    }
    (v, opts.max_iter)
}

pub fn spectral_radius_with(n: &DMatrix<f64>, opts: PowerIteration) -> Result<SpectralResult> {
    check_square(n)?;
    if let Some(bad) = n.iter().find(|&&v| v < 0.0) {
        return Err(Error::Precondition(format!("spectral radius requires a nonnegative matrix, found entry {bad}")));
    }
    let components = scc::strongly_connected_components(n);
    if components.len() == 1 {
        return Ok(radius_irreducible(n, opts));
    }

    let mut value = 0.0f64;
    let mut converged = true;
    let mut iterations = 0;
    for comp in &components {
        let sub = DMatrix::from_fn(comp.len(), comp.len(), |i, j| n[(comp[i], comp[j])]);
        let r = radius_irreducible(&sub, opts);
        value = value.max(r.value);
        converged &= r.converged;
        iterations += r.iterations;
    }
    let (vector, it) = reducible_vector(n, opts);
    Ok(SpectralResult { value, vector, iterations: iterations + it, converged })
}

/// Spectral radius and Perron vector of a nonnegative square matrix.
pub fn spectral_radius(n: &DMatrix<f64>) -> Result<SpectralResult> {
    spectral_radius_with(n, PowerIteration::default())
}

/// Shift making a Metzler matrix nonnegative with strictly positive diagonal.
pub fn metzler_shift(m: &DMatrix<f64>) -> f64 {
    1.0 + m.diagonal().iter().fold(0.0f64, |acc, d| acc.max(d.abs()))
}

pub fn spectral_abscissa_with(m: &DMatrix<f64>, opts: PowerIteration) -> Result<SpectralResult> {
    check_square(m)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] < 0.0 {
                return Err(Error::Precondition(format!(
                    "spectral abscissa requires a Metzler matrix, entry ({}, {}) = {}",
                    i + 1,
                    j + 1,
                    m[(i, j)]
                )));
            }
        }
    }
    let c = metzler_shift(m);
    let mut shifted = m.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += c;
    }
    let mut r = spectral_radius_with(&shifted, opts)?;
    r.value -= c;
    Ok(r)
}

/// `s(M)`, the largest real part of the spectrum of a Metzler matrix, with the
/// associated nonnegative eigenvector.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<SpectralResult> {
    spectral_abscissa_with(m, PowerIteration::default())
}

/// Basic reproduction number `rho(D_w^{-1} B_w)`.
pub fn reproduction_number(layer: &VirusLayer) -> Result<SpectralResult> {
    spectral_radius(&layer.next_generation()?)
}

/// `s(B_w - D_w)`; its sign matches the sign of `R0 - 1`.
pub fn growth_abscissa(layer: &VirusLayer) -> Result<SpectralResult> {
    spectral_abscissa(&layer.linearization())
}

fn check_resident(invader: &VirusLayer, resident: &DVector<f64>) -> Result<()> {
    if resident.len() != invader.dim() {
        return Err(Error::Structural(format!(
            "resident state has {} coordinates, layer has {}",
            resident.len(),
            invader.dim()
        )));
    }
    for i in 0..invader.n() {
        let p = resident[i];
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Precondition(format!(
                "resident infection level at node {} is {p}, must lie in [0, 1)",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Scale the node rows of `m` by `1 - p_i`; the resource row (if any) is untouched.
fn susceptible_scaled(m: &DMatrix<f64>, resident: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..n {
        let s = 1.0 - resident[i];
        out.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    out
}

/// `rho((I - X(y)) D_w^{-1} B_w)` for an invader facing the resident equilibrium `y`.
pub fn invasion_reproduction_number(invader: &VirusLayer, resident: &DVector<f64>) -> Result<SpectralResult> {
    check_resident(invader, resident)?;
    let g = invader.next_generation()?;
    spectral_radius(&susceptible_scaled(&g, resident, invader.n()))
}

/// `s(-D_w + (I - X(y)) B_w)`; positive iff the invasion reproduction number exceeds one.
pub fn invasion_abscissa(invader: &VirusLayer, resident: &DVector<f64>) -> Result<SpectralResult> {
    check_resident(invader, resident)?;
    let mut m = susceptible_scaled(invader.bw(), resident, invader.n());
    for i in 0..invader.dim() {
        m[(i, i)] -= invader.dw()[i];
    }
    spectral_abscissa(&m)
}
