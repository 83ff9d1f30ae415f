//! Equilibrium solvers and certificates.
//!
//! Single-virus endemic equilibria are found by monotone iteration of the map
//! `T_i(y) = g_i / (1 + g_i)`, `g = D_w^{-1} B_w y`, from a small multiple of the
//! Perron vector. Coexisting equilibria of two viruses use the coupled maps
//! `T^k_i = (1 - y^l_i) g^k_i / (1 + g^k_i)`, iterated with damping and finished
//! with Newton's method when the damped iteration stalls.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{jacobian, vector_field, SystemState, ERADICATION_THRESHOLD};
use crate::error::{Error, Result};
use crate::netmodel::{is_irreducible, MultiVirusSystem, VirusLayer};
use crate::spectral::{self, ThresholdSign};

/// Largest vector-field norm accepted at a reported equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Damping factor of the coexistence iteration.
pub const DAMPING: f64 = 0.5;

const MAX_MONOTONE_ITER: usize = 2_000_000;
const MAX_DAMPED_ITER: usize = 200_000;
const MAX_NEWTON_ITER: usize = 100;
/// Iteration stops once the residual is this small; well inside [`RESIDUAL_TOL`].
const TARGET_RESIDUAL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquilibriumKind {
    Healthy,
    /// Zero-based index of the surviving virus (one-based when serialized).
    SingleVirus {
        #[serde(serialize_with = "crate::one_based::index")]
        virus: usize,
    },
    Coexisting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    ExpStable,
    /// The Jacobian abscissa lies in the marginal band; linearization decides nothing.
    AsympStableMarginal,
    Unstable,
    Unknown,
}

/// A named scalar backing a verdict, e.g. an abscissa or reproduction number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub name: String,
    pub value: f64,
}

impl Certificate {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Certificate { name: name.into(), value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub kind: EquilibriumKind,
    pub state: SystemState,
    /// Infinity norm of the vector field at `state`.
    pub residual: f64,
    pub stability: Stability,
    pub certificates: Vec<Certificate>,
}

impl Equilibrium {
    /// Wrap a state, computing its residual; stability is left `Unknown`.
    pub fn new(sys: &MultiVirusSystem, kind: EquilibriumKind, state: SystemState) -> Result<Self> {
        let residual = vector_field(sys, &state)?.amax();
        Ok(Equilibrium { kind, state, residual, stability: Stability::Unknown, certificates: Vec::new() })
    }

    /// Fill in `stability` and append the Jacobian abscissa certificate.
    pub fn classify(mut self, sys: &MultiVirusSystem) -> Result<Self> {
        let verdict = stability_at(sys, &self)?;
        self.stability = verdict.stability;
        if let Some(a) = verdict.abscissa {
            self.certificates.push(Certificate::new("jacobian_abscissa", a));
        }
        Ok(self)
    }
}

fn single_layer_system(layer: &VirusLayer) -> Result<MultiVirusSystem> {
    MultiVirusSystem::new(vec![layer.clone()])
}

/// Node rows: `s_i g_i / (1 + g_i)`; resource row: `(g + g y) / (1 + g)`, whose fixed
/// point is `y = g`.
fn t_map(g: &DMatrix<f64>, y: &DVector<f64>, susceptible: Option<&DVector<f64>>, n: usize) -> DVector<f64> {
    let gy = g * y;
    DVector::from_fn(y.len(), |i, _| {
        let gi = gy[i];
        if i < n {
            let s = susceptible.map_or(1.0, |s| s[i]);
            s * gi / (1.0 + gi)
        } else {
            (gi + gi * y[i]) / (1.0 + gi)
        }
    })
}

/// Residual of the single-layer fixed-point equation `(-D_w + (I - X(y)) B_w) y = 0`.
fn layer_residual(layer: &VirusLayer, y: &DVector<f64>) -> f64 {
    let by = layer.bw() * y;
    (0..y.len())
        .map(|i| {
            let s = if i < layer.n() { 1.0 - y[i] } else { 1.0 };
            (s * by[i] - layer.dw()[i] * y[i]).abs()
        })
        .fold(0.0, f64::max)
}

fn check_endemic_hypotheses(layer: &VirusLayer) -> Result<f64> {
    if !is_irreducible(layer) {
        return Err(Error::Precondition("endemic equilibrium needs an irreducible B_w".into()));
    }
    let s = spectral::growth_abscissa(layer)?.value;
    if ThresholdSign::of(s) != ThresholdSign::Positive {
        return Err(Error::Precondition(format!(
            "endemic equilibrium needs s(B_w - D_w) > 0, got {s:.3e}; the healthy state is the only equilibrium"
        )));
    }
    Ok(s)
}

/// Result of the monotone iteration for a single layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EndemicSolution {
    pub y: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Single-virus endemic equilibrium of `layer` as a raw block `(p, z)`.
///
/// Every iterate is checked to be entrywise no smaller than its predecessor and below
/// one; a violation is reported as a numerical error.
pub fn endemic_state(layer: &VirusLayer) -> Result<EndemicSolution> {
    check_endemic_hypotheses(layer)?;
    let g = layer.next_generation()?;
    let perron = spectral::spectral_radius(&g)?;
    let lambda = perron.value;
    let zeta = &perron.vector / perron.vector.amax();
    let eps = 0.5 * (lambda - 1.0) / lambda;
    let n = layer.n();

    let mut y = zeta * eps;
    for it in 1..=MAX_MONOTONE_ITER {
        let next = t_map(&g, &y, None, n);
        for i in 0..y.len() {
            let slack = 4.0 * f64::EPSILON * y[i].abs();
            if next[i] < y[i] - slack {
                return Err(Error::Numerical(format!(
                    "monotone iteration decreased at coordinate {} (iteration {it}: {} -> {})",
                    i + 1,
                    y[i],
                    next[i]
                )));
            }
            if i < n && next[i] >= 1.0 {
                return Err(Error::Numerical(format!("monotone iterate reached 1 at node {}", i + 1)));
            }
        }
        let stalled = next == y;
        y = next;
        let residual = layer_residual(layer, &y);
        if residual <= TARGET_RESIDUAL || stalled {
            if residual > RESIDUAL_TOL {
                return Err(Error::Numerical(format!("monotone iteration stalled with residual {residual:.3e}")));
            }
            return Ok(EndemicSolution { y, iterations: it, residual });
        }
    }
    Err(Error::Numerical(format!("monotone iteration did not converge in {MAX_MONOTONE_ITER} steps")))
}

/// The endemic equilibrium of `layer` viewed as a one-virus system.
pub fn endemic_fixed_point(layer: &VirusLayer) -> Result<Equilibrium> {
    let s = check_endemic_hypotheses(layer)?;
    let sol = endemic_state(layer)?;
    let sys = single_layer_system(layer)?;
    let state = SystemState::from_blocks(&sys, &[sol.y])?;
    let mut eq = Equilibrium::new(&sys, EquilibriumKind::SingleVirus { virus: 0 }, state)?;
    eq.certificates.push(Certificate::new("growth_abscissa", s));
    eq.classify(&sys)
}

/// Outcome of repeated damped iterations of `T` from random interior starts.
#[derive(Debug, Clone, PartialEq)]
pub struct MultistartReport {
    /// Converged points, sorted lexicographically.
    pub points: Vec<DVector<f64>>,
    /// Starts that failed to reach the residual target.
    pub failures: usize,
    /// Largest infinity-norm distance between any point and the first.
    pub spread: f64,
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

fn random_block(rng: &mut ChaCha8Rng, n: usize, dim: usize, cap: f64) -> DVector<f64> {
    DVector::from_fn(dim, |i, _| if i < n { rng.gen_range(0.01..cap) } else { rng.gen_range(0.01..1.0) })
}

/// Damped iteration `y <- (1 - w) y + w T(y)` from `starts` random interior points.
/// Starts run in parallel; each has its own generator derived from `seed`.
pub fn endemic_multistart(layer: &VirusLayer, starts: usize, seed: u64) -> Result<MultistartReport> {
    check_endemic_hypotheses(layer)?;
    let g = layer.next_generation()?;
    let n = layer.n();
    let results: Vec<Option<DVector<f64>>> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
            let mut y = random_block(&mut rng, n, layer.dim(), 0.99);
            for _ in 0..MAX_MONOTONE_ITER {
                let t = t_map(&g, &y, None, n);
                let next = &y * (1.0 - DAMPING) + t * DAMPING;
                let stalled = next == y;
                y = next;
                if layer_residual(layer, &y) <= TARGET_RESIDUAL || stalled {
                    break;
                }
            }
            (layer_residual(layer, &y) <= RESIDUAL_TOL).then_some(y)
        })
        .collect();
    Ok(summarize(results))
}

fn summarize(results: Vec<Option<DVector<f64>>>) -> MultistartReport {
    let failures = results.iter().filter(|r| r.is_none()).count();
    let mut points: Vec<DVector<f64>> = results.into_iter().flatten().collect();
    points.sort_by(lex_cmp);
    let spread = points.first().map_or(0.0, |p0| points.iter().map(|p| (p - p0).amax()).fold(0.0, f64::max));
    MultistartReport { points, failures, spread }
}

fn check_pair(sys: &MultiVirusSystem) -> Result<()> {
    if sys.m() != 2 {
        return Err(Error::Precondition(format!("needs exactly two viruses, system has {}", sys.m())));
    }
    Ok(())
}

/// True when every block is strictly positive and per-node totals stay below one.
fn is_interior(state: &SystemState) -> bool {
    (0..state.m()).all(|k| state.block(k).min() >= ERADICATION_THRESHOLD)
        && state.susceptible().iter().all(|&s| s > 0.0)
}

struct CoupledMaps {
    g: [DMatrix<f64>; 2],
    n: usize,
    d: usize,
}

impl CoupledMaps {
    fn new(sys: &MultiVirusSystem) -> Result<Self> {
        Ok(CoupledMaps {
            g: [sys.layer(0).next_generation()?, sys.layer(1).next_generation()?],
            n: sys.n(),
            d: sys.block_dim(),
        })
    }

    fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let (n, d) = (self.n, self.d);
        let mut out = DVector::zeros(2 * d);
        for k in 0..2 {
            let other = 1 - k;
            let s = DVector::from_fn(n, |i, _| 1.0 - y[other * d + i]);
            let yk = y.rows(k * d, d).into_owned();
            out.rows_mut(k * d, d).copy_from(&t_map(&self.g[k], &yk, Some(&s), n));
        }
        out
    }
}

fn residual_of(sys: &MultiVirusSystem, y: &DVector<f64>) -> Result<f64> {
    Ok(vector_field(sys, &SystemState::from_vector(sys, y.clone())?)?.amax())
}

/// Damped fixed-point iteration followed, if needed, by Newton's method on the vector
/// field. Returns the final point whatever happened; callers check residual and interior.
fn solve_coupled(sys: &MultiVirusSystem, maps: &CoupledMaps, start: DVector<f64>) -> Result<DVector<f64>> {
    let mut y = start;
    for _ in 0..MAX_DAMPED_ITER {
        let next = &y * (1.0 - DAMPING) + maps.apply(&y) * DAMPING;
        let stalled = next == y;
        y = next;
        if stalled || residual_of(sys, &y)? <= TARGET_RESIDUAL {
            break;
        }
    }
    if residual_of(sys, &y)? <= TARGET_RESIDUAL {
        return Ok(y);
    }
    newton(sys, y)
}

fn newton(sys: &MultiVirusSystem, mut y: DVector<f64>) -> Result<DVector<f64>> {
    for _ in 0..MAX_NEWTON_ITER {
        let state = SystemState::from_vector(sys, y.clone())?;
        let f = vector_field(sys, &state)?;
        if f.amax() <= TARGET_RESIDUAL {
            break;
        }
        let Some(step) = jacobian(sys, &state)?.lu().solve(&(-f)) else {
            break;
        };
        // shorten the step so the iterate stays nonnegative
        let mut t = 1.0f64;
        for i in 0..y.len() {
            if step[i] < 0.0 && y[i] + step[i] < 0.0 {
                t = t.min(0.5 * y[i] / -step[i]);
            }
        }
        if t < 1e-12 {
            break;
        }
        y += step * t;
    }
    Ok(y)
}

/// Perron data of the invasion matrix `(I - X(resident)) D_w^{-1} B_w`.
fn invasion_perron(layer: &VirusLayer, resident: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let mut m = layer.next_generation()?;
    for i in 0..layer.n() {
        let s = 1.0 - resident[i];
        m.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    let r = spectral::spectral_radius(&m)?;
    Ok((r.value, r.vector))
}

/// The starting corner `eps^k ybar^k` of the coexistence box, where `ybar^k` is the
/// invasion Perron vector and `eps^k` is half the admissible upper bound. Falls back to
/// half the endemic state when the invasion number does not exceed one.
fn coexistence_start(layer: &VirusLayer, own: &DVector<f64>, other: &DVector<f64>) -> Result<DVector<f64>> {
    let (lambda, v) = invasion_perron(layer, other)?;
    if lambda <= 1.0 || v.min() <= 0.0 {
        return Ok(own * 0.5);
    }
    let gv = layer.next_generation()? * &v;
    let growth_bound = (lambda - 1.0) / gv.amax();
    let box_bound = own.iter().zip(v.iter()).map(|(a, b)| a / b).fold(f64::INFINITY, f64::min);
    Ok(v * (0.5 * growth_bound.min(box_bound)))
}

fn coexisting_equilibrium(sys: &MultiVirusSystem, y: DVector<f64>) -> Result<Option<Equilibrium>> {
    let state = SystemState::from_vector(sys, y)?;
    let eq = Equilibrium::new(sys, EquilibriumKind::Coexisting, state)?;
    if eq.residual <= RESIDUAL_TOL && is_interior(&eq.state) {
        Ok(Some(eq.classify(sys)?))
    } else {
        Ok(None)
    }
}

/// Search for a coexisting equilibrium of a two-virus system given both endemic states.
/// `None` means the search did not find one, not that none exists.
pub fn coexistence_fixed_point(
    sys: &MultiVirusSystem,
    endemic1: &DVector<f64>,
    endemic2: &DVector<f64>,
) -> Result<Option<Equilibrium>> {
    check_pair(sys)?;
    for k in 0..2 {
        check_endemic_hypotheses(sys.layer(k)).map_err(|e| Error::Precondition(format!("virus {}: {e}", k + 1)))?;
    }
    let maps = CoupledMaps::new(sys)?;
    let d = sys.block_dim();
    let mut start = DVector::zeros(2 * d);
    start.rows_mut(0, d).copy_from(&coexistence_start(sys.layer(0), endemic1, endemic2)?);
    start.rows_mut(d, d).copy_from(&coexistence_start(sys.layer(1), endemic2, endemic1)?);
    let y = solve_coupled(sys, &maps, start)?;
    coexisting_equilibrium(sys, y)
}

/// Coexistence search from `starts` random interior points; distinct interior
/// equilibria (further apart than `1e-8`) are returned sorted lexicographically.
pub fn coexistence_multistart(sys: &MultiVirusSystem, starts: usize, seed: u64) -> Result<Vec<Equilibrium>> {
    check_pair(sys)?;
    let maps = CoupledMaps::new(sys)?;
    let (n, d) = (sys.n(), sys.block_dim());
    let found: Vec<Option<DVector<f64>>> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
            let mut y = DVector::zeros(2 * d);
            for k in 0..2 {
                y.rows_mut(k * d, d).copy_from(&random_block(&mut rng, n, d, 0.49));
            }
            let y = solve_coupled(sys, &maps, y).ok()?;
            let state = SystemState::from_vector(sys, y.clone()).ok()?;
            let residual = vector_field(sys, &state).ok()?.amax();
            (residual <= RESIDUAL_TOL && is_interior(&state)).then_some(y)
        })
        .collect();
    let mut points: Vec<DVector<f64>> = found.into_iter().flatten().collect();
    points.sort_by(lex_cmp);
    points.dedup_by(|a, b| (&*a - &*b).amax() <= 1e-8);
    points.into_iter().filter_map(|y| coexisting_equilibrium(sys, y).transpose()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoexistenceVerdict {
    SufficientCoexist,
    CertifiedExcluded,
    Inconclusive,
}

/// Spectral facts behind a [`CoexistenceVerdict`]; index 0 is virus 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoexistenceEvidence {
    pub growth_abscissa: [f64; 2],
    /// `s(-D_w^k + (I - X(y~^l)) B_w^k)`.
    pub invasion_abscissa: [f64; 2],
    /// `rho((I - X(y~^l)) (D_w^k)^{-1} B_w^k)`.
    pub invasion_number: [f64; 2],
    /// Zero-based index of the virus whose next-generation matrix dominates, if any.
    #[serde(serialize_with = "crate::one_based::option")]
    pub dominant: Option<usize>,
    #[serde(skip)]
    pub endemic: [DVector<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoexistenceCertificate {
    pub verdict: CoexistenceVerdict,
    pub evidence: CoexistenceEvidence,
}

/// `a >= b` entrywise with at least one strict entry.
pub fn dominates(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| x >= y) && a != b
}

/// Coexistence / exclusion certificate for a two-virus system.
pub fn coexistence_certificate(sys: &MultiVirusSystem) -> Result<CoexistenceCertificate> {
    check_pair(sys)?;
    let mut growth = [0.0; 2];
    let mut endemic = [DVector::zeros(0), DVector::zeros(0)];
    for k in 0..2 {
        growth[k] =
            check_endemic_hypotheses(sys.layer(k)).map_err(|e| Error::Precondition(format!("virus {}: {e}", k + 1)))?;
        endemic[k] = endemic_state(sys.layer(k))?.y;
    }
    let mut invasion_abscissa = [0.0; 2];
    let mut invasion_number = [0.0; 2];
    for k in 0..2 {
        invasion_abscissa[k] = spectral::invasion_abscissa(sys.layer(k), &endemic[1 - k])?.value;
        invasion_number[k] = spectral::invasion_reproduction_number(sys.layer(k), &endemic[1 - k])?.value;
    }
    let g1 = sys.layer(0).next_generation()?;
    let g2 = sys.layer(1).next_generation()?;
    let dominant = if dominates(&g1, &g2) {
        Some(0)
    } else if dominates(&g2, &g1) {
        Some(1)
    } else {
        None
    };
    let verdict = if dominant.is_some() {
        CoexistenceVerdict::CertifiedExcluded
    } else if invasion_abscissa.iter().all(|&a| ThresholdSign::of(a) == ThresholdSign::Positive) {
        CoexistenceVerdict::SufficientCoexist
    } else {
        CoexistenceVerdict::Inconclusive
    };
    Ok(CoexistenceCertificate {
        verdict,
        evidence: CoexistenceEvidence {
            growth_abscissa: growth,
            invasion_abscissa,
            invasion_number,
            dominant,
            endemic,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HealthyUniqueness {
    pub unique: bool,
    /// Some abscissa lies inside the marginal band, so uniqueness holds only in the weak sense.
    pub marginal: bool,
    /// `s(B_w^k - D_w^k)` per virus.
    pub abscissas: Vec<f64>,
}

/// The healthy state is the only equilibrium iff every `s(B_w^k - D_w^k) <= 0`.
pub fn healthy_state_unique(sys: &MultiVirusSystem) -> Result<HealthyUniqueness> {
    let mut abscissas = Vec::with_capacity(sys.m());
    for (k, layer) in sys.layers().iter().enumerate() {
        if !is_irreducible(layer) {
            return Err(Error::Precondition(format!("virus {}: B_w is reducible", k + 1)));
        }
        abscissas.push(spectral::growth_abscissa(layer)?.value);
    }
    let signs: Vec<ThresholdSign> = abscissas.iter().map(|&a| ThresholdSign::of(a)).collect();
    Ok(HealthyUniqueness {
        unique: signs.iter().all(|&s| s != ThresholdSign::Positive),
        marginal: signs.contains(&ThresholdSign::Marginal),
        abscissas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub stability: Stability,
    /// Largest real part of the Jacobian spectrum, when the equilibrium was accurate enough.
    pub abscissa: Option<f64>,
}

/// Largest real part of the Jacobian spectrum.
///
/// For up to two viruses, flipping the sign of the second block makes the Jacobian
/// Metzler (off-diagonal coupling blocks are nonpositive), so the Perron machinery
/// applies. With more viruses a Schur decomposition is used instead.
pub fn jacobian_abscissa(sys: &MultiVirusSystem, state: &SystemState) -> Result<f64> {
    let mut j = jacobian(sys, state)?;
    if sys.m() <= 2 {
        let d = sys.block_dim();
        if sys.m() == 2 {
            for r in 0..2 * d {
                for c in 0..2 * d {
                    if (r < d) != (c < d) {
                        j[(r, c)] = -j[(r, c)];
                    }
                }
            }
        }
        Ok(spectral::spectral_abscissa(&j)?.value)
    } else {
        Ok(j.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Linear stability of an equilibrium. Inaccurate equilibria get `Unknown`.
pub fn stability_at(sys: &MultiVirusSystem, eq: &Equilibrium) -> Result<StabilityVerdict> {
    if eq.residual > RESIDUAL_TOL {
        return Ok(StabilityVerdict { stability: Stability::Unknown, abscissa: None });
    }
    let a = jacobian_abscissa(sys, &eq.state)?;
    let stability = match ThresholdSign::of(a) {
        ThresholdSign::Negative => Stability::ExpStable,
        ThresholdSign::Positive => Stability::Unstable,
        ThresholdSign::Marginal => Stability::AsympStableMarginal,
    };
    Ok(StabilityVerdict { stability, abscissa: Some(a) })
}

/// Embed a single-virus block into the full system, all other viruses at zero.
pub fn embed_single(sys: &MultiVirusSystem, virus: usize, block: &DVector<f64>) -> Result<SystemState> {
    let blocks: Vec<DVector<f64>> =
        (0..sys.m()).map(|k| if k == virus { block.clone() } else { DVector::zeros(sys.block_dim()) }).collect();
    SystemState::from_blocks(sys, &blocks)
}

/// Healthy state, every single-virus endemic equilibrium that exists, and for two
/// viruses the coexisting equilibrium found by [`coexistence_fixed_point`]; all with
/// stability verdicts. Reducible layers contribute no endemic equilibrium.
pub fn known_equilibria(sys: &MultiVirusSystem) -> Result<Vec<Equilibrium>> {
    let mut out = vec![Equilibrium::new(sys, EquilibriumKind::Healthy, SystemState::zeros(sys))?.classify(sys)?];
    let mut endemic: Vec<Option<DVector<f64>>> = Vec::with_capacity(sys.m());
    for (k, layer) in sys.layers().iter().enumerate() {
        let s = spectral::growth_abscissa(layer)?.value;
        if !is_irreducible(layer) || ThresholdSign::of(s) != ThresholdSign::Positive {
            endemic.push(None);
            continue;
        }
        let y = endemic_state(layer)?.y;
        let state = embed_single(sys, k, &y)?;
        let mut eq = Equilibrium::new(sys, EquilibriumKind::SingleVirus { virus: k }, state)?;
        eq.certificates.push(Certificate::new(format!("growth_abscissa_{}", k + 1), s));
        for (l, other) in sys.layers().iter().enumerate() {
            if l != k {
                let a = spectral::invasion_abscissa(other, &y)?.value;
                eq.certificates.push(Certificate::new(format!("invasion_abscissa_{}", l + 1), a));
            }
        }
        out.push(eq.classify(sys)?);
        endemic.push(Some(y));
    }
    if let [Some(y1), Some(y2)] = endemic.as_slice() {
        if let Some(eq) = coexistence_fixed_point(sys, y1, y2)? {
            out.push(eq);
        }
    }
    Ok(out)
}
