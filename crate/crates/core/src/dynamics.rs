//! The coupled multi-virus vector field, its Jacobian, and a domain-guarded
//! Dormand-Prince 5(4) integrator.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::MultiVirusSystem;

/// Tolerance for membership in the sensible domain; anything beyond it is a hard error.
pub const DOMAIN_GUARD: f64 = 1e-9;
/// A virus whose block has infinity norm below this is considered eradicated.
pub const ERADICATION_THRESHOLD: f64 = 1e-6;
/// Derivative norm below which a trajectory is considered at rest.
pub const CONVERGENCE_RATE: f64 = 1e-9;
/// Number of trailing accepted steps that must all be at rest.
pub const CONVERGENCE_WINDOW: usize = 20;

/// Stacked state `y = (y^1, ..., y^m)`, each block `y^k = (p^k, z^k)`
/// (just `p^k` when the shared resource is not modelled).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    values: DVector<f64>,
    m: usize,
    n: usize,
    resource: bool,
    pub time: f64,
}

impl SystemState {
    pub fn zeros(sys: &MultiVirusSystem) -> Self {
        SystemState {
            values: DVector::zeros(sys.dim()),
            m: sys.m(),
            n: sys.n(),
            resource: sys.resource_enabled(),
            time: 0.0,
        }
    }

    /// Wrap a flat coordinate vector laid out block by block.
    pub fn from_vector(sys: &MultiVirusSystem, values: DVector<f64>) -> Result<Self> {
        if values.len() != sys.dim() {
            return Err(Error::Structural(format!(
                "state has {} coordinates, system needs {}",
                values.len(),
                sys.dim()
            )));
        }
        Ok(SystemState { values, m: sys.m(), n: sys.n(), resource: sys.resource_enabled(), time: 0.0 })
    }

    /// Build from per-virus blocks, each of the layer dimension.
    pub fn from_blocks(sys: &MultiVirusSystem, blocks: &[DVector<f64>]) -> Result<Self> {
        if blocks.len() != sys.m() {
            return Err(Error::Structural(format!("got {} blocks for {} viruses", blocks.len(), sys.m())));
        }
        let d = sys.block_dim();
        let mut values = DVector::zeros(sys.dim());
        for (k, b) in blocks.iter().enumerate() {
            if b.len() != d {
                return Err(Error::Structural(format!("block {} has {} coordinates, expected {d}", k + 1, b.len())));
            }
            values.rows_mut(k * d, d).copy_from(b);
        }
        SystemState::from_vector(sys, values)
    }

    /// Every node infected at level `p` by every virus, every resource at level `z`.
    pub fn uniform(sys: &MultiVirusSystem, p: f64, z: f64) -> Self {
        let mut s = SystemState::zeros(sys);
        let d = s.block_dim();
        for k in 0..s.m {
            for i in 0..s.n {
                s.values[k * d + i] = p;
            }
            if s.resource {
                s.values[k * d + s.n] = z;
            }
        }
        s
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block_dim(&self) -> usize {
        self.n + usize::from(self.resource)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.values
    }

    pub fn block(&self, k: usize) -> DVectorView<'_, f64> {
        self.values.rows(k * self.block_dim(), self.block_dim())
    }

    /// Infected fractions `p^k`.
    pub fn p(&self, k: usize) -> DVectorView<'_, f64> {
        self.values.rows(k * self.block_dim(), self.n)
    }

    /// Scaled contamination `z^k`, if the resource is modelled.
    pub fn z(&self, k: usize) -> Option<f64> {
        self.resource.then(|| self.values[k * self.block_dim() + self.n])
    }

    /// Average infection ratio `(1/n) sum_i p_i^k`.
    pub fn mean_infection(&self, k: usize) -> f64 {
        self.p(k).sum() / self.n as f64
    }

    /// Per-node susceptible fraction `1 - sum_k p_i^k`.
    pub fn susceptible(&self) -> DVector<f64> {
        let mut s = DVector::from_element(self.n, 1.0);
        for k in 0..self.m {
            s -= self.p(k);
        }
        s
    }

    /// Largest amount by which the state lies outside the sensible domain (0 if inside).
    pub fn domain_excess(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.m {
            for &p in self.p(k).iter() {
                worst = worst.max(-p).max(p - 1.0);
            }
            if let Some(z) = self.z(k) {
                worst = worst.max(-z);
            }
        }
        for &s in self.susceptible().iter() {
            worst = worst.max(-s);
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        worst
    }

    pub fn in_domain(&self, tol: f64) -> bool {
        self.domain_excess() <= tol
    }

    /// Project numerical dust back onto the domain: `p` into `[0, 1]`, `z` to `[0, inf)`,
    /// and per-node totals above one scaled down to one.
    pub fn clamp_to_domain(&mut self) {
        let d = self.block_dim();
        for k in 0..self.m {
            for i in 0..self.n {
                let v = &mut self.values[k * d + i];
                *v = v.clamp(0.0, 1.0);
            }
            if self.resource {
                let v = &mut self.values[k * d + self.n];
                *v = v.max(0.0);
            }
        }
        for i in 0..self.n {
            let total: f64 = (0..self.m).map(|k| self.values[k * d + i]).sum();
            if total > 1.0 {
                for k in 0..self.m {
                    self.values[k * d + i] /= total;
                }
            }
        }
    }
}

impl Serialize for SystemState {
    /// `{"time": t, "p": [[..]; m], "z": [..; m]}`; `z` is omitted without a resource.
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let p: Vec<Vec<f64>> = (0..self.m).map(|k| self.p(k).iter().copied().collect()).collect();
        let mut map = ser.serialize_map(None)?;
        map.serialize_entry("time", &self.time)?;
        map.serialize_entry("p", &p)?;
        if self.resource {
            let z: Vec<f64> = (0..self.m).filter_map(|k| self.z(k)).collect();
            map.serialize_entry("z", &z)?;
        }
        map.end()
    }
}

fn check_state(sys: &MultiVirusSystem, y: &SystemState) -> Result<()> {
    if y.m != sys.m() || y.n != sys.n() || y.resource != sys.resource_enabled() {
        return Err(Error::Structural(format!(
            "state shape (m={}, n={}, resource={}) does not match system (m={}, n={}, resource={})",
            y.m,
            y.n,
            y.resource,
            sys.m(),
            sys.n(),
            sys.resource_enabled()
        )));
    }
    Ok(())
}

fn field_into(sys: &MultiVirusSystem, y: &DVector<f64>, out: &mut DVector<f64>) {
    let n = sys.n();
    let d = sys.block_dim();
    let mut s = vec![1.0; n];
    for k in 0..sys.m() {
        for (i, si) in s.iter_mut().enumerate() {
            *si -= y[k * d + i];
        }
    }
    for (k, layer) in sys.layers().iter().enumerate() {
        let yk = y.rows(k * d, d);
        let by = layer.bw() * yk;
        for i in 0..d {
            let infection = if i < n { s[i] * by[i] } else { by[i] };
            out[k * d + i] = infection - layer.dw()[i] * yk[i];
        }
    }
}

/// `dy/dt`: block `k` is `(-D_w^k + (I - sum_l X(y^l)) B_w^k) y^k`.
pub fn vector_field(sys: &MultiVirusSystem, y: &SystemState) -> Result<DVector<f64>> {
    check_state(sys, y)?;
    let mut out = DVector::zeros(sys.dim());
    field_into(sys, &y.values, &mut out);
    Ok(out)
}

/// Jacobian of [`vector_field`] over all `m * dim` coordinates.
///
/// Diagonal block `k`: `-D_w^k + (I - sum_l X(y^l)) B_w^k - X(B_w^k y^k)`.
/// Off-diagonal block `(k, l)`: `-X(B_w^k y^k)` on the node coordinates of `y^l`.
pub fn jacobian(sys: &MultiVirusSystem, y: &SystemState) -> Result<DMatrix<f64>> {
    check_state(sys, y)?;
    let n = sys.n();
    let d = sys.block_dim();
    let s = y.susceptible();
    let mut jac = DMatrix::zeros(sys.dim(), sys.dim());
    for (k, layer) in sys.layers().iter().enumerate() {
        let by = layer.bw() * y.block(k);
        let bw = layer.bw();
        for i in 0..d {
            let scale = if i < n { s[i] } else { 1.0 };
            for j in 0..d {
                jac[(k * d + i, k * d + j)] = scale * bw[(i, j)];
            }
            jac[(k * d + i, k * d + i)] -= layer.dw()[i];
        }
        for i in 0..n {
            for l in 0..sys.m() {
                jac[(k * d + i, l * d + i)] -= by[i];
            }
        }
    }
    Ok(jac)
}

fn last_good(y: &DVector<f64>) -> String {
    format!("last accepted state {:?}", y.as_slice())
}

/// Step-size and stopping controls for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorControls {
    pub atol: f64,
    pub rtol: f64,
    pub initial_step: f64,
    /// Defaults to `t_end / 100` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    pub min_step: f64,
    pub max_steps: usize,
    /// Stop as soon as the trailing window of accepted steps is at rest.
    pub stop_on_convergence: bool,
}

impl Default for IntegratorControls {
    fn default() -> Self {
        IntegratorControls {
            atol: 1e-9,
            rtol: 1e-7,
            initial_step: 1e-3,
            max_step: None,
            min_step: 1e-14,
            max_steps: 5_000_000,
            stop_on_convergence: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EndTimeReached,
    Converged,
}

/// Accepted integration steps. `rates[i]` is `||dy/dt||_inf` at `states[i]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub rates: Vec<f64>,
    pub termination: Termination,
    /// Largest pre-clamp domain excess over all accepted steps.
    pub max_domain_excess: f64,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &SystemState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    /// True if the last [`CONVERGENCE_WINDOW`] accepted steps all had `||dy/dt|| < CONVERGENCE_RATE`.
    pub fn at_rest(&self) -> bool {
        self.rates.len() > CONVERGENCE_WINDOW
            && self.rates[self.rates.len() - CONVERGENCE_WINDOW..].iter().all(|&r| r < CONVERGENCE_RATE)
    }
}

// Dormand-Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
// PI step-size control (Gustafsson); damps step-size oscillation at the stability boundary
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;
// The embedded error estimate misses instability when h * |lambda| is far outside the
// stability region, so steps are also capped by STABILITY_RADIUS / ||J||_inf.
const STABILITY_RADIUS: f64 = 2.5;

fn jacobian_norm(sys: &MultiVirusSystem, y: &DVector<f64>) -> f64 {
    let state = SystemState { values: y.clone(), m: sys.m(), n: sys.n(), resource: sys.resource_enabled(), time: 0.0 };
    jacobian(sys, &state).map(|j| j.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max)).unwrap_or(0.0)
}

/// Integrate from `y0` to `t_end` (times measured from `y0.time`).
///
/// Every candidate step is checked against the sensible domain before it is accepted:
/// a candidate outside by more than [`DOMAIN_GUARD`] is rejected and retried with a smaller
/// step; accepted states are clamped onto the domain. If the step size underflows while
/// the domain check still fails, a [`Error::Domain`] is returned.
pub fn integrate(
    sys: &MultiVirusSystem,
    y0: &SystemState,
    t_end: f64,
    controls: &IntegratorControls,
) -> Result<Trajectory> {
    check_state(sys, y0)?;
    let excess = y0.domain_excess();
    if excess > DOMAIN_GUARD {
        return Err(Error::Domain { time: y0.time, detail: format!("initial state outside the domain by {excess:e}") });
    }
    if !(t_end.is_finite() && t_end >= y0.time) {
        return Err(Error::Validation(format!("end time {t_end} precedes start time {}", y0.time)));
    }
    let span = t_end - y0.time;
    let max_step = controls.max_step.unwrap_or(span / 100.0).max(f64::MIN_POSITIVE);

    let dim = sys.dim();
    let mut y0c = y0.clone();
    y0c.clamp_to_domain();
    let mut t = y0.time;
    let mut y = y0c.values.clone();
    let mut k1 = DVector::zeros(dim);
    field_into(sys, &y, &mut k1);

    let mut traj = Trajectory {
        times: vec![t],
        states: vec![y0c],
        rates: vec![k1.amax()],
        termination: Termination::EndTimeReached,
        max_domain_excess: excess,
        rejected_steps: 0,
    };
    if span == 0.0 {
        return Ok(traj);
    }

    let mut h = controls.initial_step.min(max_step).min(span);
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        DVector::zeros(dim),
        DVector::zeros(dim),
        DVector::zeros(dim),
        DVector::zeros(dim),
        DVector::zeros(dim),
        DVector::zeros(dim),
    );
    let mut stage = DVector::zeros(dim);
    let mut accepted = 0usize;
    let mut prev_err = 1e-4f64;

    while t < t_end {
        if accepted + traj.rejected_steps >= controls.max_steps {
            return Err(Error::Numerical(format!(
                "step budget of {} exhausted at t = {t}; {}",
                controls.max_steps,
                last_good(&y)
            )));
        }
        let last_step = t + h >= t_end;
        if last_step {
            h = t_end - t;
        }

        stage.copy_from(&y);
        stage.axpy(h * A21, &k1, 1.0);
        field_into(sys, &stage, &mut k2);

        stage.copy_from(&y);
        stage.axpy(h * A31, &k1, 1.0);
        stage.axpy(h * A32, &k2, 1.0);
        field_into(sys, &stage, &mut k3);

        stage.copy_from(&y);
        stage.axpy(h * A41, &k1, 1.0);
        stage.axpy(h * A42, &k2, 1.0);
        stage.axpy(h * A43, &k3, 1.0);
        field_into(sys, &stage, &mut k4);

        stage.copy_from(&y);
        stage.axpy(h * A51, &k1, 1.0);
        stage.axpy(h * A52, &k2, 1.0);
        stage.axpy(h * A53, &k3, 1.0);
        stage.axpy(h * A54, &k4, 1.0);
        field_into(sys, &stage, &mut k5);

        stage.copy_from(&y);
        stage.axpy(h * A61, &k1, 1.0);
        stage.axpy(h * A62, &k2, 1.0);
        stage.axpy(h * A63, &k3, 1.0);
        stage.axpy(h * A64, &k4, 1.0);
        stage.axpy(h * A65, &k5, 1.0);
        field_into(sys, &stage, &mut k6);

        let mut y_new = y.clone();
        y_new.axpy(h * B1, &k1, 1.0);
        y_new.axpy(h * B3, &k3, 1.0);
        y_new.axpy(h * B4, &k4, 1.0);
        y_new.axpy(h * B5, &k5, 1.0);
        y_new.axpy(h * B6, &k6, 1.0);
        field_into(sys, &y_new, &mut k7);

        let mut err_sq = 0.0;
        for i in 0..dim {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = controls.atol + controls.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale).powi(2);
        }
        let err = (err_sq / dim as f64).sqrt();

        if !err.is_finite() || err > 1.0 {
            traj.rejected_steps += 1;
            let factor = if err.is_finite() { (SAFETY * err.powf(-0.2)).max(MIN_FACTOR) } else { MIN_FACTOR };
            h *= factor;
            if h < controls.min_step {
                return Err(Error::Numerical(format!("step size underflow at t = {t}; {}", last_good(&y))));
            }
            continue;
        }

        let mut candidate =
            SystemState { values: y_new, m: sys.m(), n: sys.n(), resource: sys.resource_enabled(), time: 0.0 };
        let excess = candidate.domain_excess();
        if excess > DOMAIN_GUARD {
            traj.rejected_steps += 1;
            h *= 0.5;
            if h < controls.min_step {
                return Err(Error::Domain {
                    time: t,
                    detail: format!(
                        "every step leaves the domain (excess {excess:e}) down to step size {h:e}; {}",
                        last_good(&y)
                    ),
                });
            }
            continue;
        }
        traj.max_domain_excess = traj.max_domain_excess.max(excess);

        t = if last_step { t_end } else { t + h };
        let clamped = excess > 0.0;
        candidate.clamp_to_domain();
        candidate.time = t;
        y.copy_from(&candidate.values);
        if clamped {
            field_into(sys, &y, &mut k1);
        } else {
            std::mem::swap(&mut k1, &mut k7);
        }
        accepted += 1;
        traj.times.push(t);
        traj.rates.push(k1.amax());
        traj.states.push(candidate);

        if controls.stop_on_convergence && traj.at_rest() {
            traj.termination = Termination::Converged;
            return Ok(traj);
        }

        let factor = if err == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * err.powf(-PI_ALPHA) * prev_err.powf(PI_BETA)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        prev_err = err.max(1e-4);
        let stiff_cap = STABILITY_RADIUS / jacobian_norm(sys, &y).max(f64::MIN_POSITIVE);
        h = (h * factor).min(max_step).min(stiff_cap);
    }
    if traj.at_rest() {
        traj.termination = Termination::Converged;
    }
    Ok(traj)
}

/// Long-run behaviour read off a trajectory's final state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    Healthy,
    /// Zero-based virus index (one-based when serialized).
    SingleVirusEndemic {
        #[serde(serialize_with = "crate::one_based::index")]
        virus: usize,
    },
    Coexisting {
        #[serde(serialize_with = "crate::one_based::list")]
        viruses: Vec<usize>,
    },
    Undecided,
}

/// Classify a trajectory that has come to rest; anything still moving is `Undecided`.
pub fn classify_long_run(sys: &MultiVirusSystem, traj: &Trajectory) -> Regime {
    if !(traj.termination == Termination::Converged || traj.at_rest()) {
        return Regime::Undecided;
    }
    classify_state(sys, traj.last())
}

/// Per-virus eradicated/endemic verdict of a single state.
pub fn classify_state(sys: &MultiVirusSystem, y: &SystemState) -> Regime {
    let endemic: Vec<usize> = (0..sys.m()).filter(|&k| y.block(k).amax() >= ERADICATION_THRESHOLD).collect();
    match endemic.len() {
        0 => Regime::Healthy,
        1 => Regime::SingleVirusEndemic { virus: endemic[0] },
        _ => Regime::Coexisting { viruses: endemic },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::VirusLayer;
    use crate::spectral;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_system() -> MultiVirusSystem {
        let layer = VirusLayer::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 1.0),
            1.0,
        )
        .unwrap();
        MultiVirusSystem::new(vec![layer]).unwrap()
    }

    fn random_layer(rng: &mut ChaCha8Rng, n: usize, heal: (f64, f64)) -> VirusLayer {
        let beta = DMatrix::from_fn(n, n, |_, _| if rng.gen_bool(0.6) { rng.gen_range(0.0..1.5) } else { 0.0 });
        let delta = DVector::from_fn(n, |_, _| rng.gen_range(heal.0..heal.1));
        let beta_w = DVector::from_fn(n, |_, _| rng.gen_range(0.1..1.0));
        let raw_c = DVector::from_fn(n, |_, _| rng.gen_range(0.1..1.0));
        let c = &raw_c / raw_c.sum();
        VirusLayer::new(beta, delta, beta_w, c, rng.gen_range(0.5..3.0)).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, sys: &MultiVirusSystem) -> SystemState {
        let (m, n, d) = (sys.m(), sys.n(), sys.block_dim());
        let mut v = DVector::zeros(sys.dim());
        for i in 0..n {
            let mut weights: Vec<f64> = (0..=m).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            for k in 0..m {
                v[k * d + i] = weights[k];
            }
        }
        if sys.resource_enabled() {
            for k in 0..m {
                v[k * d + n] = rng.gen_range(0.0..1.0);
            }
        }
        SystemState::from_vector(sys, v).unwrap()
    }

    #[test]
    fn healthy_state_is_equilibrium() {
        let sys = unit_system();
        let f = vector_field(&sys, &SystemState::zeros(&sys)).unwrap();
        assert_eq!(f.amax(), 0.0);
    }

    #[test]
    fn scalar_endemic_point_is_equilibrium() {
        let sys = unit_system();
        let y = SystemState::uniform(&sys, 0.5, 0.5);
        let f = vector_field(&sys, &y).unwrap();
        assert_abs_diff_eq!(f[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn field_rejects_wrong_shape() {
        let sys = unit_system();
        let other = MultiVirusSystem::new(vec![sys.layer(0).clone(), sys.layer(0).clone()]).unwrap();
        assert!(matches!(vector_field(&sys, &SystemState::zeros(&other)), Err(Error::Structural(_))));
    }

    #[test]
    fn jacobian_at_healthy_state_is_block_linearization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys =
            MultiVirusSystem::new(vec![random_layer(&mut rng, 3, (0.5, 2.0)), random_layer(&mut rng, 3, (0.5, 2.0))])
                .unwrap();
        let j = jacobian(&sys, &SystemState::zeros(&sys)).unwrap();
        let d = sys.block_dim();
        for k in 0..2 {
            assert_eq!(j.view((k * d, k * d), (d, d)), sys.layer(k).linearization());
        }
        assert_eq!(j.view((0, d), (d, d)).amax(), 0.0);
        assert_eq!(j.view((d, 0), (d, d)).amax(), 0.0);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let sys = MultiVirusSystem::new(vec![
                random_layer(&mut rng, 3, (0.5, 2.0)),
                random_layer(&mut rng, 3, (0.5, 2.0)),
            ])
            .unwrap();
            let y = random_state(&mut rng, &sys);
            let j = jacobian(&sys, &y).unwrap();
            let h = 1e-6;
            for col in 0..sys.dim() {
                let mut plus = y.as_vector().clone();
                let mut minus = y.as_vector().clone();
                plus[col] += h;
                minus[col] -= h;
                let fp = vector_field(&sys, &SystemState::from_vector(&sys, plus).unwrap()).unwrap();
                let fm = vector_field(&sys, &SystemState::from_vector(&sys, minus).unwrap()).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let scale = j.column(col).amax().max(1.0);
                assert!((fd - j.column(col)).amax() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn zero_start_stays_zero() {
        let sys = unit_system();
        let traj = integrate(&sys, &SystemState::zeros(&sys), 10.0, &IntegratorControls::default()).unwrap();
        assert!(traj.states.iter().all(|s| s.as_vector().amax() == 0.0));
        assert_eq!(classify_long_run(&sys, &traj), Regime::Healthy);
    }

    #[test]
    fn scalar_model_converges_to_closed_form() {
        let sys = unit_system();
        let y0 = SystemState::uniform(&sys, 0.9, 0.9);
        let traj = integrate(&sys, &y0, 50.0, &IntegratorControls::default()).unwrap();
        let last = traj.last();
        assert!((last.as_vector() - DVector::from_element(2, 0.5)).amax() < 1e-6);
        assert_eq!(classify_long_run(&sys, &traj), Regime::SingleVirusEndemic { virus: 0 });
    }

    #[test]
    fn stop_on_convergence_terminates_early() {
        let sys = unit_system();
        let controls = IntegratorControls { stop_on_convergence: true, ..Default::default() };
        let traj = integrate(&sys, &SystemState::uniform(&sys, 0.9, 0.9), 1e4, &controls).unwrap();
        assert_eq!(traj.termination, Termination::Converged);
        assert!(*traj.times.last().unwrap() < 1e4);
    }

    #[test]
    fn rejects_initial_state_outside_domain() {
        let sys = MultiVirusSystem::new(vec![unit_system().layer(0).clone(); 2]).unwrap();
        let y0 = SystemState::uniform(&sys, 0.6, 0.1);
        assert!(matches!(integrate(&sys, &y0, 1.0, &IntegratorControls::default()), Err(Error::Domain { .. })));
    }

    #[test]
    fn interior_start_never_dies_out_above_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 10 {
            let layer = random_layer(&mut rng, 4, (0.2, 1.0));
            if spectral::growth_abscissa(&layer).unwrap().value <= 0.0 {
                continue;
            }
            let sys = MultiVirusSystem::new(vec![layer]).unwrap();
            let y0 = SystemState::uniform(&sys, 1e-3, 1e-3);
            let traj = integrate(&sys, &y0, 30.0, &IntegratorControls::default()).unwrap();
            assert!(traj.states.iter().all(|s| s.as_vector().amax() > 0.0));
            checked += 1;
        }
    }

    #[test]
    fn sub_threshold_decay_respects_linear_envelope() {
        // y(t) <= exp((B_w - D_w) t) y0 componentwise; compare infinity norms with 5% slack
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 10 {
            let layer = random_layer(&mut rng, 4, (2.0, 5.0));
            if spectral::growth_abscissa(&layer).unwrap().value >= 0.0 {
                continue;
            }
            let lin = layer.linearization();
            let sys = MultiVirusSystem::new(vec![layer]).unwrap();
            let y0 = random_state(&mut rng, &sys);
            let traj = integrate(&sys, &y0, 10.0, &IntegratorControls::default()).unwrap();
            for (t, s) in traj.times.iter().zip(&traj.states).step_by(5) {
                let envelope = (&lin * *t).exp() * y0.as_vector();
                assert!(s.as_vector().amax() <= 1.05 * envelope.amax() + 1e-12, "t={t}");
            }
            checked += 1;
        }
    }

    #[test]
    fn sis_mode_integrates_without_resource() {
        let layer = VirusLayer::sis(DMatrix::from_element(1, 1, 2.0), DVector::from_element(1, 1.0)).unwrap();
        let sys = MultiVirusSystem::new(vec![layer]).unwrap();
        let traj =
            integrate(&sys, &SystemState::uniform(&sys, 0.1, 0.0), 60.0, &IntegratorControls::default()).unwrap();
        assert_eq!(traj.last().as_vector().len(), 1);
        assert_abs_diff_eq!(traj.last().as_vector()[0], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn clamp_renormalizes_node_totals() {
        let sys = MultiVirusSystem::new(vec![unit_system().layer(0).clone(); 2]).unwrap();
        let mut y = SystemState::from_vector(&sys, DVector::from_vec(vec![0.5 + 1e-10, -1e-12, 0.5, 0.2])).unwrap();
        assert!(y.domain_excess() > 0.0);
        y.clamp_to_domain();
        assert!(y.domain_excess() == 0.0);
        assert!(y.susceptible()[0] >= 0.0);
    }
}
