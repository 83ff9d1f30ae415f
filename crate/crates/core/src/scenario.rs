//! Scenario files: a model (raw or already normalized), an initial state, a horizon,
//! integrator controls and optional scripted healing-rate changes.
//!
//! The on-disk form is TOML. [`Scenario::to_toml`] writes the canonical form, and
//! loading then saving a canonical file reproduces it byte for byte.
//!
//! ```toml
//! schema_version = 1
//! name = "two_node"
//! t_end = 50.0
//!
//! [[normalized.virus]]
//! beta = [[1.0, 0.5], [0.5, 1.0]]
//! delta = [0.8, 0.8]
//! beta_w = [1.0, 1.0]     # omit beta_w, c and delta_w for a model without the resource
//! c = [0.5, 0.5]
//! delta_w = 1.0
//!
//! [initial]
//! p = [[0.1, 0.1]]        # one row per virus
//! z = [0.0]               # one entry per virus
//!
//! [[event]]
//! time = 10.0
//! virus = 1               # one-based
//! delta = [2.5, 2.5]
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegratorControls, SystemState, DOMAIN_GUARD};
use crate::equilibria;
use crate::error::{Error, Result};
use crate::netmodel::{normalize, validate_assumption1, MultiVirusSystem, RawModel, VirusLayer};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub t_end: f64,
    /// Seed for multi-start searches.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub integrator: IntegratorControls,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<NormalizedModel>,
    pub initial: InitialState,
    #[serde(default, rename = "event", skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizedModel {
    #[serde(rename = "virus")]
    pub viruses: Vec<NormalizedVirus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizedVirus {
    pub beta: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_w: Option<f64>,
}

impl NormalizedVirus {
    pub fn from_layer(layer: &VirusLayer) -> Self {
        let beta = layer.beta().row_iter().map(|r| r.iter().copied().collect()).collect();
        let to_vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
        let resource = layer.has_resource();
        NormalizedVirus {
            beta,
            delta: to_vec(layer.delta()),
            beta_w: resource.then(|| to_vec(layer.beta_w())),
            c: resource.then(|| to_vec(layer.c())),
            delta_w: resource.then(|| layer.delta_w()),
        }
    }

    fn to_layer(&self, k: usize) -> Result<VirusLayer> {
        let n = self.delta.len();
        if self.beta.len() != n || self.beta.iter().any(|r| r.len() != n) {
            return Err(Error::Structural(format!("virus {}: beta must be {n} x {n} to match delta", k + 1)));
        }
        let beta = DMatrix::from_fn(n, n, |i, j| self.beta[i][j]);
        let delta = DVector::from_column_slice(&self.delta);
        match (&self.beta_w, &self.c, self.delta_w) {
            (Some(bw), Some(c), Some(dw)) => {
                VirusLayer::new(beta, delta, DVector::from_column_slice(bw), DVector::from_column_slice(c), dw)
            }
            (None, None, None) => VirusLayer::sis(beta, delta),
            _ => Err(Error::Validation(format!(
                "virus {}: beta_w, c and delta_w must be given together (or all omitted for a model without the resource)",
                k + 1
            ))),
        }
    }
}

/// Either explicit levels or a named equilibrium resolved when the scenario is run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    /// `p[k][i]`: infected fraction of node `i` by virus `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    /// `z[k]`: contamination of the resource by virus `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<NamedEquilibrium>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedEquilibrium {
    Healthy,
    /// The coexisting equilibrium of a two-virus system.
    Coexisting,
}

/// Replace the healing rates of one virus at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub time: f64,
    /// One-based virus index.
    pub virus: usize,
    pub delta: Vec<f64>,
}

impl Scenario {
    /// A scenario around an already normalized system, starting from `initial`.
    pub fn from_system(name: &str, sys: &MultiVirusSystem, initial: InitialState, t_end: f64) -> Self {
        Scenario {
            schema_version: SCHEMA_VERSION,
            name: name.to_string(),
            description: None,
            t_end,
            seed: 0,
            integrator: IntegratorControls::default(),
            raw: None,
            normalized: Some(NormalizedModel {
                viruses: sys.layers().iter().map(NormalizedVirus::from_layer).collect(),
            }),
            initial,
            events: Vec::new(),
        }
    }

    /// Parse and validate TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("cannot serialize scenario: {e}")))
    }

    /// The model, normalized if given in raw form.
    pub fn system(&self) -> Result<MultiVirusSystem> {
        match (&self.raw, &self.normalized) {
            (Some(raw), None) => normalize(raw),
            (None, Some(norm)) => {
                if norm.viruses.is_empty() {
                    return Err(Error::Structural("normalized model lists no virus".into()));
                }
                let layers = norm.viruses.iter().enumerate().map(|(k, v)| v.to_layer(k)).collect::<Result<Vec<_>>>()?;
                MultiVirusSystem::new(layers)
            }
            (Some(_), Some(_)) => Err(Error::Validation("scenario has both [raw] and [normalized] models".into())),
            (None, None) => Err(Error::Validation("scenario needs a [raw] or a [normalized] model".into())),
        }
    }

    /// Check schema, model assumptions, initial state and events.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Validation(format!("t_end must be positive, got {}", self.t_end)));
        }
        let sys = self.system()?;
        let report = validate_assumption1(&sys);
        if !report.is_valid() {
            let clauses: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::Validation(format!("model violates the rate assumptions: {}", clauses.join("; "))));
        }
        self.check_initial(&sys)?;
        let mut last = f64::NEG_INFINITY;
        for (e, ev) in self.events.iter().enumerate() {
            if !(ev.time >= 0.0 && ev.time <= self.t_end && ev.time > last) {
                return Err(Error::Validation(format!(
                    "event {}: time {} must be strictly increasing within [0, t_end]",
                    e + 1,
                    ev.time
                )));
            }
            last = ev.time;
            if ev.virus == 0 || ev.virus > sys.m() {
                return Err(Error::Validation(format!("event {}: virus {} does not exist", e + 1, ev.virus)));
            }
            if ev.delta.len() != sys.n() {
                return Err(Error::Validation(format!(
                    "event {}: {} healing rates for {} nodes",
                    e + 1,
                    ev.delta.len(),
                    sys.n()
                )));
            }
            if let Some(i) = ev.delta.iter().position(|d| !(*d > 0.0 && d.is_finite())) {
                return Err(Error::Validation(format!(
                    "event {}: healing rate at node {} must be positive",
                    e + 1,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    fn check_initial(&self, sys: &MultiVirusSystem) -> Result<()> {
        let init = &self.initial;
        match (&init.p, &init.equilibrium) {
            (Some(_), Some(_)) => {
                return Err(Error::Validation("initial state gives both explicit levels and an equilibrium".into()))
            }
            (None, None) => return Err(Error::Validation("initial state needs p (and z) or an equilibrium".into())),
            (None, Some(NamedEquilibrium::Coexisting)) if sys.m() != 2 => {
                return Err(Error::Validation("a coexisting initial state needs exactly two viruses".into()))
            }
            (None, Some(_)) => {
                if init.z.is_some() {
                    return Err(Error::Validation("z cannot accompany a named equilibrium".into()));
                }
                return Ok(());
            }
            (Some(_), None) => {}
        }
        let state = self.explicit_initial(sys)?;
        let excess = state.domain_excess();
        if excess > DOMAIN_GUARD {
            return Err(Error::Validation(format!(
                "initial state lies outside the sensible domain by {excess:e} (levels in [0, 1], per-node totals at most 1, z >= 0)"
            )));
        }
        Ok(())
    }

    fn explicit_initial(&self, sys: &MultiVirusSystem) -> Result<SystemState> {
        let p = self.initial.p.as_ref().expect("checked by caller");
        if p.len() != sys.m() || p.iter().any(|r| r.len() != sys.n()) {
            return Err(Error::Validation(format!("initial p must have {} rows of {} entries", sys.m(), sys.n())));
        }
        let z = match (&self.initial.z, sys.resource_enabled()) {
            (Some(z), true) if z.len() == sys.m() => Some(z),
            (None, false) => None,
            (Some(_), true) => return Err(Error::Validation(format!("initial z must have {} entries", sys.m()))),
            (None, true) => {
                return Err(Error::Validation("initial z is required when the resource is modelled".into()))
            }
            (Some(_), false) => {
                return Err(Error::Validation("initial z given but the resource is not modelled".into()))
            }
        };
        let blocks: Vec<DVector<f64>> = (0..sys.m())
            .map(|k| {
                let mut b = p[k].clone();
                if let Some(z) = z {
                    b.push(z[k]);
                }
                DVector::from_vec(b)
            })
            .collect();
        SystemState::from_blocks(sys, &blocks)
    }

    /// The starting state, solving for a named equilibrium if requested.
    pub fn initial_state(&self, sys: &MultiVirusSystem) -> Result<SystemState> {
        match self.initial.equilibrium {
            None => self.explicit_initial(sys),
            Some(NamedEquilibrium::Healthy) => Ok(SystemState::zeros(sys)),
            Some(NamedEquilibrium::Coexisting) => {
                let e1 = equilibria::endemic_state(sys.layer(0))?.y;
                let e2 = equilibria::endemic_state(sys.layer(1))?.y;
                equilibria::coexistence_fixed_point(sys, &e1, &e2)?
                    .map(|eq| eq.state)
                    .ok_or_else(|| Error::Numerical("no coexisting equilibrium found for the initial state".into()))
            }
        }
    }
}

/// Read, parse and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Write the canonical TOML form.
pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<()> {
    std::fs::write(path, scenario.to_toml()?)?;
    Ok(())
}
