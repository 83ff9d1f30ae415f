//! Command-level operations on scenarios and their serialized outputs: analysis and
//! equilibrium reports (JSON), simulation runs (CSV, summary JSON, SVG), mitigation
//! plans and parameter sweeps.
//!
//! JSON is emitted through `serde_json::Value`, whose maps are ordered, so keys come
//! out sorted and repeated runs are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    classify_long_run, integrate, Regime, SystemState, Termination, CONVERGENCE_RATE, CONVERGENCE_WINDOW, DOMAIN_GUARD,
    ERADICATION_THRESHOLD,
};
use crate::equilibria::{self, CoexistenceVerdict, Equilibrium, HealthyUniqueness, RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::mitigation::{self, MitigationPlan, Strategy};
use crate::netmodel::{is_irreducible, validate_assumption1, Violation};
use crate::scenario::{Event, Scenario};
use crate::spectral::{self, PowerIteration, ThresholdSign, MARGINAL_BAND};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Parse(format!("cannot serialize report: {e}")))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Tolerances every reported number was computed under.
#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub marginal_band: f64,
    pub power_iteration: f64,
    pub equilibrium_residual: f64,
    pub eradication_threshold: f64,
    pub convergence_rate: f64,
    pub convergence_window: usize,
    pub domain_guard: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            marginal_band: MARGINAL_BAND,
            power_iteration: PowerIteration::default().tol,
            equilibrium_residual: RESIDUAL_TOL,
            eradication_threshold: ERADICATION_THRESHOLD,
            convergence_rate: CONVERGENCE_RATE,
            convergence_window: CONVERGENCE_WINDOW,
            domain_guard: DOMAIN_GUARD,
        }
    }
}

/// A threshold quantity with the sign it certifies under the marginal band.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Quantity {
    pub value: f64,
    /// Sign of `value - threshold`.
    pub sign: ThresholdSign,
    pub threshold: f64,
    pub band: f64,
}

impl Quantity {
    pub fn new(value: f64, threshold: f64) -> Self {
        Quantity { value, sign: ThresholdSign::of(value - threshold), threshold, band: MARGINAL_BAND }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VirusSummary {
    #[serde(serialize_with = "crate::one_based::index")]
    pub virus: usize,
    pub irreducible: bool,
    pub growth_abscissa: Quantity,
    pub reproduction_number: Quantity,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairAnalysis {
    pub verdict: CoexistenceVerdict,
    pub invasion_abscissa: [Quantity; 2],
    pub invasion_number: [Quantity; 2],
    #[serde(serialize_with = "crate::one_based::option")]
    pub dominant: Option<usize>,
    pub endemic_states: [Vec<f64>; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub scenario: String,
    pub n: usize,
    pub m: usize,
    pub resource: bool,
    pub tolerances: Tolerances,
    pub viruses: Vec<VirusSummary>,
    /// Absent when some layer is reducible.
    pub healthy_state: Option<HealthyUniqueness>,
    /// Two-virus certificate; absent unless both viruses are irreducible and above threshold.
    pub pair: Option<PairAnalysis>,
    pub equilibria: Vec<Equilibrium>,
    pub notes: Vec<String>,
}

/// Thresholds, certificates and equilibria of the scenario's model.
pub fn analyze(scenario: &Scenario) -> Result<AnalysisReport> {
    let sys = scenario.system()?;
    let validation = validate_assumption1(&sys);
    let mut notes = Vec::new();
    let mut viruses = Vec::with_capacity(sys.m());
    for (k, layer) in sys.layers().iter().enumerate() {
        viruses.push(VirusSummary {
            virus: k,
            irreducible: is_irreducible(layer),
            growth_abscissa: Quantity::new(spectral::growth_abscissa(layer)?.value, 0.0),
            reproduction_number: Quantity::new(spectral::reproduction_number(layer)?.value, 1.0),
            violations: validation.violations.iter().filter(|v| violation_virus(v) == k).cloned().collect(),
        });
    }
    let all_irreducible = viruses.iter().all(|v| v.irreducible);
    let healthy_state = if all_irreducible {
        Some(equilibria::healthy_state_unique(&sys)?)
    } else {
        notes.push("some B_w is reducible; threshold results do not apply".into());
        None
    };

    let both_endemic =
        sys.m() == 2 && all_irreducible && viruses.iter().all(|v| v.growth_abscissa.sign == ThresholdSign::Positive);
    let pair = if both_endemic {
        let cert = equilibria::coexistence_certificate(&sys)?;
        let ev = &cert.evidence;
        Some(PairAnalysis {
            verdict: cert.verdict,
            invasion_abscissa: ev.invasion_abscissa.map(|a| Quantity::new(a, 0.0)),
            invasion_number: ev.invasion_number.map(|r| Quantity::new(r, 1.0)),
            dominant: ev.dominant,
            endemic_states: [ev.endemic[0].iter().copied().collect(), ev.endemic[1].iter().copied().collect()],
        })
    } else {
        if sys.m() == 2 {
            notes.push("coexistence certificate needs both viruses irreducible and above threshold".into());
        }
        None
    };
    if sys.m() > 2 {
        notes.push("coexisting equilibria are only searched for two viruses".into());
    }
    let equilibria = if all_irreducible { equilibria::known_equilibria(&sys)? } else { Vec::new() };

    Ok(AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        n: sys.n(),
        m: sys.m(),
        resource: sys.resource_enabled(),
        tolerances: Tolerances::default(),
        viruses,
        healthy_state,
        pair,
        equilibria,
        notes,
    })
}

fn violation_virus(v: &Violation) -> usize {
    match *v {
        Violation::NonPositiveHealing { virus, .. }
        | Violation::NonPositiveResourceDecay { virus, .. }
        | Violation::NegativeInfection { virus, .. }
        | Violation::NegativeResourceInfection { virus, .. }
        | Violation::NegativeContamination { virus, .. }
        | Violation::NoContaminatingNode { virus }
        | Violation::ContaminationNotNormalized { virus, .. } => virus,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessEvidence {
    #[serde(serialize_with = "crate::one_based::index")]
    pub virus: usize,
    pub starts: usize,
    pub failures: usize,
    /// Largest distance between converged multi-start points.
    pub spread: f64,
    /// Largest distance from a multi-start point to the monotone-iteration solution.
    pub distance_to_monotone: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub equilibria: Vec<Equilibrium>,
    pub endemic_uniqueness: Vec<UniquenessEvidence>,
    /// Distinct interior equilibria found by the two-virus multi-start search.
    pub coexistence_multistart: Option<Vec<Equilibrium>>,
}

/// Number of random starts used by [`equilibrium_report`].
pub const MULTISTARTS: usize = 20;

/// Equilibria with multi-start evidence; `seed` fixes every random start.
pub fn equilibrium_report(scenario: &Scenario, seed: u64) -> Result<EquilibriumReport> {
    let sys = scenario.system()?;
    if let Some(k) = sys.layers().iter().position(|l| !is_irreducible(l)) {
        return Err(Error::Precondition(format!("virus {}: B_w is reducible", k + 1)));
    }
    let equilibria = equilibria::known_equilibria(&sys)?;
    let mut endemic_uniqueness = Vec::new();
    for (k, layer) in sys.layers().iter().enumerate() {
        if ThresholdSign::of(spectral::growth_abscissa(layer)?.value) != ThresholdSign::Positive {
            continue;
        }
        let y = equilibria::endemic_state(layer)?.y;
        let ms = equilibria::endemic_multistart(layer, MULTISTARTS, seed.wrapping_add(k as u64 * 1000))?;
        let distance_to_monotone = ms.points.iter().map(|p| (p - &y).amax()).fold(0.0, f64::max);
        endemic_uniqueness.push(UniquenessEvidence {
            virus: k,
            starts: MULTISTARTS,
            failures: ms.failures,
            spread: ms.spread,
            distance_to_monotone,
        });
    }
    let coexistence_multistart =
        if sys.m() == 2 { Some(equilibria::coexistence_multistart(&sys, MULTISTARTS, seed)?) } else { None };
    Ok(EquilibriumReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        seed,
        tolerances: Tolerances::default(),
        equilibria,
        endemic_uniqueness,
        coexistence_multistart,
    })
}

/// A full scripted run: all accepted states across events.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub n: usize,
    pub m: usize,
    pub resource: bool,
    pub states: Vec<SystemState>,
    pub rates: Vec<f64>,
    pub termination: Termination,
    pub regime: Regime,
    pub max_domain_excess: f64,
    pub rejected_steps: usize,
    pub events_applied: Vec<Event>,
}

/// Integrate the scenario, applying each event by restarting from the state at the
/// event time with the new healing rates.
pub fn simulate(scenario: &Scenario) -> Result<SimulationRun> {
    let mut sys = scenario.system()?;
    let mut y = scenario.initial_state(&sys)?;
    y.time = 0.0;
    let mut run = SimulationRun {
        n: sys.n(),
        m: sys.m(),
        resource: sys.resource_enabled(),
        states: Vec::new(),
        rates: Vec::new(),
        termination: Termination::EndTimeReached,
        regime: Regime::Undecided,
        max_domain_excess: 0.0,
        rejected_steps: 0,
        events_applied: Vec::new(),
    };
    let mut events = scenario.events.iter().peekable();
    loop {
        let next_event = events.peek().map(|e| e.time);
        let (t_stop, mut controls) = (next_event.unwrap_or(scenario.t_end), scenario.integrator);
        if next_event.is_some() {
            controls.stop_on_convergence = false;
        }
        let traj = integrate(&sys, &y, t_stop, &controls)?;
        run.max_domain_excess = run.max_domain_excess.max(traj.max_domain_excess);
        run.rejected_steps += traj.rejected_steps;
        // each segment repeats the previous segment's final state
        let skip = usize::from(!run.states.is_empty());
        run.states.extend(traj.states.iter().skip(skip).cloned());
        run.rates.extend(traj.rates.iter().skip(skip).copied());
        y = traj.last().clone();
        match events.next() {
            Some(ev) => {
                sys = sys.with_delta(ev.virus - 1, DVector::from_column_slice(&ev.delta))?;
                run.events_applied.push(ev.clone());
                // the derivative jumps at the event; the rate recorded there belongs to the new system
                if let Some(r) = run.rates.last_mut() {
                    *r = crate::dynamics::vector_field(&sys, &y)?.amax();
                }
            }
            None => {
                run.termination = traj.termination;
                run.regime = classify_long_run(&sys, &traj);
                break;
            }
        }
    }
    Ok(run)
}

impl SimulationRun {
    pub fn last(&self) -> &SystemState {
        self.states.last().expect("a run holds at least the initial state")
    }

    /// CSV with columns `t, p{k}_{i}, z{k}, pbar{k}` (one-based), 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for k in 1..=self.m {
            for i in 1..=self.n {
                let _ = write!(out, ",p{k}_{i}");
            }
        }
        if self.resource {
            for k in 1..=self.m {
                let _ = write!(out, ",z{k}");
            }
        }
        for k in 1..=self.m {
            let _ = write!(out, ",pbar{k}");
        }
        out.push('\n');
        for s in &self.states {
            let _ = write!(out, "{:.16e}", s.time);
            for k in 0..self.m {
                for v in s.p(k).iter() {
                    let _ = write!(out, ",{v:.16e}");
                }
            }
            for k in 0..self.m {
                if let Some(z) = s.z(k) {
                    let _ = write!(out, ",{z:.16e}");
                }
            }
            for k in 0..self.m {
                let _ = write!(out, ",{:.16e}", s.mean_infection(k));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self, scenario: &str) -> SimulationSummary {
        let last = self.last();
        SimulationSummary {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: scenario.to_string(),
            termination: self.termination,
            regime: self.regime.clone(),
            final_time: last.time,
            final_state: last.clone(),
            final_mean_infection: (0..self.m).map(|k| last.mean_infection(k)).collect(),
            final_rate: self.rates.last().copied().unwrap_or(0.0),
            accepted_steps: self.states.len() - 1,
            rejected_steps: self.rejected_steps,
            max_domain_excess: self.max_domain_excess,
            events_applied: self.events_applied.iter().map(|e| AppliedEvent { time: e.time, virus: e.virus }).collect(),
            tolerances: Tolerances::default(),
        }
    }

    /// Line chart of the mean infection `pbar^k(t)` (solid) and `z^k(t)` (dashed).
    pub fn to_svg(&self, title: &str) -> String {
        const W: f64 = 720.0;
        const H: f64 = 400.0;
        const L: f64 = 60.0;
        const R: f64 = 20.0;
        const T: f64 = 40.0;
        const B: f64 = 50.0;
        const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let t_max = self.last().time.max(f64::MIN_POSITIVE);
        let y_max = self.states.iter().flat_map(|s| (0..self.m).filter_map(|k| s.z(k))).fold(1.0f64, f64::max);
        let x = |t: f64| L + (W - L - R) * t / t_max;
        let y = |v: f64| H - B - (H - T - B) * v / y_max;

        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            W / 2.0,
            escape(title)
        );
        let _ = writeln!(svg, "<path d=\"M{L} {T} V{} H{}\" fill=\"none\" stroke=\"black\"/>", H - B, W - R);
        for i in 0..=4 {
            let v = y_max * i as f64 / 4.0;
            let _ = writeln!(svg, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>", L - 6.0, y(v) + 4.0);
            let t = t_max * i as f64 / 4.0;
            let _ =
                writeln!(svg, "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{t:.3}</text>", x(t), H - B + 18.0);
        }
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">t</text>", (L + W - R) / 2.0, H - 12.0);

        let mut polyline = |values: Vec<(f64, f64)>, color: &str, dashed: bool, label: String, row: usize| {
            let pts: Vec<String> = values.iter().map(|&(t, v)| format!("{:.2},{:.2}", x(t), y(v))).collect();
            let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>",
                pts.join(" ")
            );
            let ly = T + 16.0 * row as f64;
            let _ = writeln!(
                svg,
                "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>",
                W - R - 110.0,
                W - R - 90.0
            );
            let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\">{label}</text>", W - R - 84.0, ly + 4.0);
        };
        let mut row = 0;
        for k in 0..self.m {
            let color = COLORS[k % COLORS.len()];
            polyline(
                self.states.iter().map(|s| (s.time, s.mean_infection(k))).collect(),
                color,
                false,
                format!("pbar{}", k + 1),
                row,
            );
            row += 1;
            if self.resource {
                let z = self.states.iter().map(|s| (s.time, s.z(k).unwrap_or(0.0))).collect();
                polyline(z, color, true, format!("z{}", k + 1), row);
                row += 1;
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone, Serialize)]
pub struct AppliedEvent {
    pub time: f64,
    pub virus: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub termination: Termination,
    pub regime: Regime,
    pub final_time: f64,
    pub final_state: SystemState,
    pub final_mean_infection: Vec<f64>,
    pub final_rate: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub max_domain_excess: f64,
    pub events_applied: Vec<AppliedEvent>,
    pub tolerances: Tolerances,
}

/// What to plan in [`mitigate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MitigationRequest {
    pub strategy: Strategy,
    /// Zero-based virus to eradicate (heal boost only; the vaccine always targets virus 2).
    pub virus: usize,
    /// Uniform epsilon for heal boost.
    pub epsilon: f64,
    pub margin: f64,
    pub keep_satisfied: bool,
    /// Time at which the derived scenario switches to the planned rates.
    pub event_time: f64,
}

impl Default for MitigationRequest {
    fn default() -> Self {
        MitigationRequest {
            strategy: Strategy::HealBoost,
            virus: 1,
            epsilon: 0.0,
            margin: mitigation::DEFAULT_MARGIN,
            keep_satisfied: false,
            event_time: crate::stockholm::SWITCH_TIME,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MitigationOutput {
    pub schema_version: u32,
    pub scenario: String,
    pub plan: MitigationPlan,
    /// Reference cost for the bundled scenarios, when one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_cost: Option<f64>,
}

/// Plan against the scenario's model and derive a scenario that switches to the plan
/// at `event_time`.
pub fn mitigate(scenario: &Scenario, req: &MitigationRequest) -> Result<(MitigationOutput, Scenario)> {
    let sys = scenario.system()?;
    let plan = match req.strategy {
        Strategy::HealBoost => {
            if req.virus >= sys.m() {
                return Err(Error::Validation(format!("virus {} does not exist", req.virus + 1)));
            }
            mitigation::heal_boost(sys.layer(req.virus), req.virus, &DVector::from_element(sys.n(), req.epsilon))?
        }
        Strategy::VirusAsVaccine => mitigation::vaccine_rates(&sys, req.margin, req.keep_satisfied)?,
    };
    let mut derived = scenario.clone();
    derived.name = format!(
        "{}_{}",
        scenario.name,
        match req.strategy {
            Strategy::HealBoost => "heal_boost",
            Strategy::VirusAsVaccine => "vaccine",
        }
    );
    derived.events.retain(|e| e.time < req.event_time);
    derived.events.push(Event { time: req.event_time, virus: plan.target_virus + 1, delta: plan.new_delta.clone() });
    derived.validate()?;
    let reference_cost = scenario.name.starts_with("stockholm_fig4").then_some(match req.strategy {
        Strategy::HealBoost => crate::stockholm::REPORTED_HEAL_BOOST_COST,
        Strategy::VirusAsVaccine => crate::stockholm::REPORTED_VACCINE_COST,
    });
    Ok((
        MitigationOutput {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: scenario.name.clone(),
            plan,
            reference_cost,
        },
        derived,
    ))
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum SweepEntry {
    Done { analysis: Box<AnalysisReport>, simulation: Box<SimulationSummary> },
    Failed { error: String, exit_code: i32 },
}

/// Analyze and simulate every scenario concurrently; results keyed by scenario name.
pub fn sweep(scenarios: &[Scenario]) -> Result<BTreeMap<String, SweepEntry>> {
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = scenarios.iter().find(|s| !seen.insert(s.name.as_str())) {
        return Err(Error::Validation(format!("scenario name {:?} appears more than once", dup.name)));
    }
    Ok(scenarios
        .par_iter()
        .map(|s| {
            let entry = analyze(s).and_then(|a| simulate(s).map(|r| (a, r.summary(&s.name))));
            let entry = match entry {
                Ok((a, sim)) => SweepEntry::Done { analysis: Box::new(a), simulation: Box::new(sim) },
                Err(e) => SweepEntry::Failed { exit_code: e.exit_code(), error: e.to_string() },
            };
            (s.name.clone(), entry)
        })
        .collect())
}
