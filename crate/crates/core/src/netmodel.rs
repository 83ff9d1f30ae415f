//! Normalized multilayer model: raw epidemiological parameters, per-virus layers
//! and the assembled system matrices `B_w` / `D_w`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scc;

/// Per-virus raw rates, indexed by node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawVirus {
    /// Recovery rate `gamma[i]`.
    pub gamma: Vec<f64>,
    /// Node-to-node infection rate `alpha[i][j]` (from node `j` to node `i`).
    pub alpha: Vec<Vec<f64>>,
    /// Resource-to-node infection rate.
    pub alpha_w: Vec<f64>,
    /// Node-to-resource contamination rate.
    pub zeta: Vec<f64>,
    /// Resource decay rate.
    pub delta_w: f64,
}

/// Un-normalized model in terms of populations and per-capita rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawModel {
    /// Population size of every node.
    pub population: Vec<f64>,
    /// Birth rate per node. Also used as the death rate.
    pub mu: Vec<f64>,
    /// Optional explicit death rate; must equal `mu` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_death: Option<Vec<f64>>,
    pub viruses: Vec<RawVirus>,
}

impl RawModel {
    pub fn n(&self) -> usize {
        self.population.len()
    }

    pub fn m(&self) -> usize {
        self.viruses.len()
    }
}

/// One virus' normalized spread data and its assembled system matrices.
///
/// With a shared resource the layer acts on `n + 1` coordinates `(p, z)`:
///
/// ```text
/// B_w = [ B        b ]      D_w = diag(D, delta_w)
///       [ delta_w c  0 ]
/// ```
///
/// Without it (the plain networked SIS reduction) `B_w = B`, `D_w = D`, and `b` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VirusLayer {
    beta: DMatrix<f64>,
    delta: DVector<f64>,
    beta_w: DVector<f64>,
    c: DVector<f64>,
    delta_w: f64,
    resource: bool,
    bw: DMatrix<f64>,
    dw: DVector<f64>,
}

impl VirusLayer {
    /// Layer with a shared resource. Only shapes and finiteness are checked here;
    /// value constraints are reported by [`validate_assumption1`].
    pub fn new(
        beta: DMatrix<f64>,
        delta: DVector<f64>,
        beta_w: DVector<f64>,
        c: DVector<f64>,
        delta_w: f64,
    ) -> Result<Self> {
        Self::assemble(beta, delta, beta_w, c, delta_w, true)
    }

    /// Layer of the plain networked SIS model (no shared resource).
    pub fn sis(beta: DMatrix<f64>, delta: DVector<f64>) -> Result<Self> {
        let n = delta.len();
        Self::assemble(beta, delta, DVector::zeros(n), DVector::from_element(n, 1.0 / n.max(1) as f64), 1.0, false)
    }

    fn assemble(
        beta: DMatrix<f64>,
        delta: DVector<f64>,
        beta_w: DVector<f64>,
        c: DVector<f64>,
        delta_w: f64,
        resource: bool,
    ) -> Result<Self> {
        let n = delta.len();
        if n == 0 {
            return Err(Error::Structural("a layer needs at least one node".into()));
        }
        if beta.nrows() != n || beta.ncols() != n {
            return Err(Error::Structural(format!("beta is {}x{}, expected {n}x{n}", beta.nrows(), beta.ncols())));
        }
        if beta_w.len() != n || c.len() != n {
            return Err(Error::Structural(format!(
                "beta_w and c must have {n} entries (got {} and {})",
                beta_w.len(),
                c.len()
            )));
        }
        let finite = beta.iter().chain(delta.iter()).chain(beta_w.iter()).chain(c.iter()).all(|v| v.is_finite())
            && delta_w.is_finite();
        if !finite {
            return Err(Error::Structural("layer contains a non-finite value".into()));
        }
        let beta_w = if resource { beta_w } else { DVector::zeros(n) };

        let (bw, dw) = if resource {
            let mut bw = DMatrix::zeros(n + 1, n + 1);
            bw.view_mut((0, 0), (n, n)).copy_from(&beta);
            for i in 0..n {
                bw[(i, n)] = beta_w[i];
                bw[(n, i)] = delta_w * c[i];
            }
            let mut dw = DVector::zeros(n + 1);
            dw.rows_mut(0, n).copy_from(&delta);
            dw[n] = delta_w;
            (bw, dw)
        } else {
            (beta.clone(), delta.clone())
        };

        Ok(VirusLayer { beta, delta, beta_w, c, delta_w, resource, bw, dw })
    }

    /// Number of population nodes.
    pub fn n(&self) -> usize {
        self.delta.len()
    }

    /// Number of state coordinates of this layer (`n + 1` with a resource, `n` without).
    pub fn dim(&self) -> usize {
        self.n() + usize::from(self.resource)
    }

    pub fn has_resource(&self) -> bool {
        self.resource
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn delta(&self) -> &DVector<f64> {
        &self.delta
    }

    pub fn beta_w(&self) -> &DVector<f64> {
        &self.beta_w
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn delta_w(&self) -> f64 {
        self.delta_w
    }

    /// Assembled infection matrix `B_w`.
    pub fn bw(&self) -> &DMatrix<f64> {
        &self.bw
    }

    /// Diagonal of `D_w`.
    pub fn dw(&self) -> &DVector<f64> {
        &self.dw
    }

    /// `B_w - D_w`, the linearization of this virus at its eradicated state.
    pub fn linearization(&self) -> DMatrix<f64> {
        let mut m = self.bw.clone();
        for i in 0..self.dim() {
            m[(i, i)] -= self.dw[i];
        }
        m
    }

    /// `D_w^{-1} B_w`. Fails if a healing or decay rate is not positive.
    pub fn next_generation(&self) -> Result<DMatrix<f64>> {
        if let Some(i) = self.dw.iter().position(|&d| d <= 0.0) {
            return Err(Error::Precondition(format!(
                "D_w has a nonpositive diagonal entry at coordinate {} ({})",
                i + 1,
                self.dw[i]
            )));
        }
        let mut g = self.bw.clone();
        for i in 0..self.dim() {
            let d = self.dw[i];
            g.row_mut(i).iter_mut().for_each(|v| *v /= d);
        }
        if self.resource {
            // (delta_w c_j) / delta_w, without the rounding.
            let n = self.n();
            for j in 0..n {
                g[(n, j)] = self.c[j];
            }
        }
        Ok(g)
    }

    /// Same layer with the node healing rates replaced.
    pub fn with_delta(&self, delta: DVector<f64>) -> Result<Self> {
        if delta.len() != self.n() {
            return Err(Error::Structural(format!(
                "replacement healing rates have {} entries, expected {}",
                delta.len(),
                self.n()
            )));
        }
        Self::assemble(self.beta.clone(), delta, self.beta_w.clone(), self.c.clone(), self.delta_w, self.resource)
    }
}

/// All virus layers over a common node set.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVirusSystem {
    layers: Vec<VirusLayer>,
    resource: bool,
}

impl MultiVirusSystem {
    pub fn new(layers: Vec<VirusLayer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::Structural("a system needs at least one virus".into()))?;
        let (n, resource) = (first.n(), first.has_resource());
        for (k, layer) in layers.iter().enumerate() {
            if layer.n() != n {
                return Err(Error::Structural(format!("virus {} has {} nodes, virus 1 has {n}", k + 1, layer.n())));
            }
            if layer.has_resource() != resource {
                return Err(Error::Structural(
                    "all layers must agree on whether the shared resource is modelled".into(),
                ));
            }
        }
        Ok(MultiVirusSystem { layers, resource })
    }

    pub fn n(&self) -> usize {
        self.layers[0].n()
    }

    pub fn m(&self) -> usize {
        self.layers.len()
    }

    /// Coordinates per virus block.
    pub fn block_dim(&self) -> usize {
        self.layers[0].dim()
    }

    /// Total number of state coordinates.
    pub fn dim(&self) -> usize {
        self.m() * self.block_dim()
    }

    pub fn resource_enabled(&self) -> bool {
        self.resource
    }

    pub fn layers(&self) -> &[VirusLayer] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> &VirusLayer {
        &self.layers[k]
    }

    /// Copy of the system with virus `k`'s healing rates replaced.
    pub fn with_delta(&self, k: usize, delta: DVector<f64>) -> Result<Self> {
        if k >= self.m() {
            return Err(Error::Structural(format!("no virus {} in a {}-virus system", k + 1, self.m())));
        }
        let mut layers = self.layers.clone();
        layers[k] = layers[k].with_delta(delta)?;
        Ok(MultiVirusSystem { layers, resource: self.resource })
    }
}

/// Build the normalized system from raw rates.
pub fn normalize(raw: &RawModel) -> Result<MultiVirusSystem> {
    let n = raw.n();
    if n == 0 || raw.m() == 0 {
        return Err(Error::Structural("raw model needs at least one node and one virus".into()));
    }
    if raw.mu.len() != n {
        return Err(Error::Structural(format!("mu has {} entries, expected {n}", raw.mu.len())));
    }
    for (i, &size) in raw.population.iter().enumerate() {
        if !(size > 0.0 && size.is_finite()) {
            return Err(Error::Validation(format!("population of node {} must be positive, got {size}", i + 1)));
        }
    }
    for (i, &mu) in raw.mu.iter().enumerate() {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Validation(format!("mu of node {} must be nonnegative, got {mu}", i + 1)));
        }
    }
    if let Some(death) = &raw.mu_death {
        if death.len() != n {
            return Err(Error::Structural(format!("mu_death has {} entries, expected {n}", death.len())));
        }
        if let Some(i) = (0..n).find(|&i| death[i] != raw.mu[i]) {
            return Err(Error::Validation(format!(
                "node {}: death rate {} differs from birth rate {}; only equal rates are supported",
                i + 1,
                death[i],
                raw.mu[i]
            )));
        }
    }

    let pop = &raw.population;
    let mut layers = Vec::with_capacity(raw.m());
    for (k, v) in raw.viruses.iter().enumerate() {
        let vk = k + 1;
        if v.gamma.len() != n || v.alpha_w.len() != n || v.zeta.len() != n || v.alpha.len() != n {
            return Err(Error::Structural(format!("virus {vk}: per-node vectors must have {n} entries")));
        }
        if let Some(row) = v.alpha.iter().position(|r| r.len() != n) {
            return Err(Error::Structural(format!("virus {vk}: alpha row {} must have {n} entries", row + 1)));
        }
        let rates = v.gamma.iter().chain(v.alpha.iter().flatten()).chain(&v.alpha_w).chain(&v.zeta);
        if rates.clone().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Validation(format!("virus {vk}: all rates must be finite and nonnegative")));
        }
        if !(v.delta_w > 0.0 && v.delta_w.is_finite()) {
            return Err(Error::Validation(format!("virus {vk}: delta_w must be positive, got {}", v.delta_w)));
        }
        let mass: f64 = v.zeta.iter().zip(pop).map(|(z, p)| z * p).sum();
        if mass <= 0.0 {
            return Err(Error::Structural(format!(
                "virus {vk}: total contamination mass sum_j zeta_j N_j is zero, no node contaminates the resource"
            )));
        }

        let delta = DVector::from_fn(n, |i, _| v.gamma[i] + raw.mu[i]);
        if let Some(i) = delta.iter().position(|&d| d <= 0.0) {
            return Err(Error::Validation(format!(
                "virus {vk}: healing rate gamma + mu at node {} is not positive",
                i + 1
            )));
        }
        let beta = DMatrix::from_fn(n, n, |i, j| v.alpha[i][j] * pop[j] / pop[i]);
        let beta_w = DVector::from_fn(n, |i, _| v.alpha_w[i] / v.delta_w * mass);
        let c = DVector::from_fn(n, |i, _| v.zeta[i] * pop[i] / mass);
        layers.push(VirusLayer::new(beta, delta, beta_w, c, v.delta_w)?);
    }
    MultiVirusSystem::new(layers)
}

/// True iff `B_w` is irreducible, i.e. its digraph (edge `j -> i` when `(B_w)_{ij} > 0`)
/// is strongly connected.
pub fn is_irreducible(layer: &VirusLayer) -> bool {
    scc::is_strongly_connected(layer.bw())
}

/// One violated inequality. Virus and node indices are zero-based; `Display` and serialization print them one-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonPositiveHealing {
        #[serde(serialize_with = "crate::one_based::index")]
        virus: usize,
        #[serde(serialize_with = "crate::one_based::index")]
        node: usize,
        value: f64,
    },
    NonPositiveResourceDecay {
        #[serde(serialize_with = "crate::one_based::index")]
        virus: usize,
        value: f64,
    },
    NegativeInfection {
        #[serde(serialize_with = "crate::one_based::index")]
        virus: usize,
        #[serde(serialize_with = "crate::one_based::index")]
        row: usize,
        #[serde(serialize_with = "crate::one_based::index")]
        col: usize,
        value: f64,
    },
    NegativeResourceInfection {
        #[serde(serialize_with = "crate::one_based::index")]
        virus: usize,
        #[serde(serialize_with = "crate::one_based::index")]
        node: usize,
        value: f64,
    },
    NegativeContamination {
        #[serde(serialize_with = "crate::one_based::index")]
        virus: usize,
        #[serde(serialize_with = "crate::one_based::index")]
        node: usize,
        value: f64,
    },
    NoContaminatingNode {
        #[serde(serialize_with = "crate::one_based::index")]
        virus: usize,
    },
    ContaminationNotNormalized {
        #[serde(serialize_with = "crate::one_based::index")]
        virus: usize,
        sum: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NonPositiveHealing { virus, node, value } => {
                write!(f, "virus {}, node {}: healing rate delta = {value} is not positive", virus + 1, node + 1)
            }
            Violation::NonPositiveResourceDecay { virus, value } => {
                write!(f, "virus {}: resource decay rate delta_w = {value} is not positive", virus + 1)
            }
            Violation::NegativeInfection { virus, row, col, value } => {
                write!(f, "virus {}: infection rate beta[{}][{}] = {value} is negative", virus + 1, row + 1, col + 1)
            }
            Violation::NegativeResourceInfection { virus, node, value } => {
                write!(f, "virus {}, node {}: beta_w = {value} is negative", virus + 1, node + 1)
            }
            Violation::NegativeContamination { virus, node, value } => {
                write!(f, "virus {}, node {}: c = {value} is negative", virus + 1, node + 1)
            }
            Violation::NoContaminatingNode { virus } => {
                write!(f, "virus {}: no positive c_l, nothing contaminates the resource", virus + 1)
            }
            Violation::ContaminationNotNormalized { virus, sum } => {
                write!(f, "virus {}: contamination weights c sum to {sum}, expected 1", virus + 1)
            }
        }
    }
}

/// Every violated positivity/sign condition of the model. Empty iff the system is admissible.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Turn a non-empty report into a validation error listing every violation.
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            return Ok(());
        }
        let lines: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        Err(Error::Validation(lines.join("; ")))
    }
}

const C_SUM_TOL: f64 = 1e-12;

pub fn validate_assumption1(sys: &MultiVirusSystem) -> ValidationReport {
    let mut violations = Vec::new();
    for (k, layer) in sys.layers().iter().enumerate() {
        let n = layer.n();
        for i in 0..n {
            let d = layer.delta()[i];
            if d.is_nan() || d <= 0.0 {
                violations.push(Violation::NonPositiveHealing { virus: k, node: i, value: d });
            }
        }
        for i in 0..n {
            for j in 0..n {
                let b = layer.beta()[(i, j)];
                if b < 0.0 {
                    violations.push(Violation::NegativeInfection { virus: k, row: i, col: j, value: b });
                }
            }
        }
        if !layer.has_resource() {
            continue;
        }
        if layer.delta_w() <= 0.0 {
            violations.push(Violation::NonPositiveResourceDecay { virus: k, value: layer.delta_w() });
        }
        for i in 0..n {
            let b = layer.beta_w()[i];
            if b < 0.0 {
                violations.push(Violation::NegativeResourceInfection { virus: k, node: i, value: b });
            }
        }
        for i in 0..n {
            let c = layer.c()[i];
            if c < 0.0 {
                violations.push(Violation::NegativeContamination { virus: k, node: i, value: c });
            }
        }
        if !layer.c().iter().any(|&c| c > 0.0) {
            violations.push(Violation::NoContaminatingNode { virus: k });
        } else {
            let sum: f64 = layer.c().iter().sum();
            if (sum - 1.0).abs() > C_SUM_TOL {
                violations.push(Violation::ContaminationNotNormalized { virus: k, sum });
            }
        }
    }
    ValidationReport { violations }
}
