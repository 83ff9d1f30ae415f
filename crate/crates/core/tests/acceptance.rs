//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Known failures (the Stockholm fit to 0.05 and the heal-boost cost of 61, which no graph with a
//! unit diagonal can give) are reported as FAIL but do not fail the process; every other failure
//! exits non-zero.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siws::dynamics::{self, integrate, jacobian, vector_field, IntegratorControls, Regime, SystemState};
use siws::equilibria::{self, EquilibriumKind, Stability};
use siws::mitigation;
use siws::netmodel::{MultiVirusSystem, VirusLayer};
use siws::report::{self, MitigationRequest};
use siws::scenario::load_scenario;
use siws::spectral::{self, ThresholdSign};
use siws::stockholm;

struct Outcome {
    failures: Vec<String>,
    /// Reported, not fatal.
    known: Vec<String>,
    note: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: Vec::new(), known: Vec::new(), note: String::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }
}

fn tight() -> IntegratorControls {
    IntegratorControls { atol: 1e-9, rtol: 1e-9, ..IntegratorControls::default() }
}

fn inf_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

fn scalar_layer(beta: f64, b: f64, delta: f64, delta_w: f64) -> VirusLayer {
    VirusLayer::new(
        DMatrix::from_element(1, 1, beta),
        DVector::from_element(1, delta),
        DVector::from_element(1, b),
        DVector::from_element(1, 1.0),
        delta_w,
    )
    .unwrap()
}

fn scalar_closed_forms() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut slow = 0;
    for _ in 0..40 {
        let (beta, b, delta_w) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0), rng.gen_range(0.2..3.0));
        let delta = rng.gen_range(0.05..0.95) * (beta + b);
        let layer = scalar_layer(beta, b, delta, delta_w);
        let expected = 1.0 - delta / (beta + b);
        let eq = equilibria::endemic_fixed_point(&layer).unwrap();
        let y = eq.state.as_vector();
        out.check((y[0] - expected).abs() <= 1e-10 && (y[1] - expected).abs() <= 1e-10, || {
            format!("fixed point {y:?} vs {expected}")
        });
        // Slowest linear decay rate at the endemic point, from the 2x2 Jacobian by hand.
        let (j11, j12, j21, j22) =
            (-delta - (beta + b) * expected + (1.0 - expected) * beta, (1.0 - expected) * b, delta_w, -delta_w);
        let (tr, det) = (j11 + j22, j11 * j22 - j12 * j21);
        let decay = -(tr + (tr * tr - 4.0 * det).max(0.0).sqrt()) / 2.0;
        if decay < 0.2 {
            // Too close to threshold for any exact solution to settle within 1e-6 by t = 100.
            slow += 1;
            continue;
        }
        let sys = MultiVirusSystem::new(vec![layer]).unwrap();
        let start = SystemState::uniform(&sys, rng.gen_range(0.01..0.99), rng.gen_range(0.01..3.0));
        let traj = integrate(&sys, &start, 100.0, &tight()).unwrap();
        let end = traj.last().as_vector();
        out.check((end[0] - expected).abs() <= 1e-6 && (end[1] - expected).abs() <= 1e-6, || {
            format!("ODE at t=100 {end:?} vs {expected}")
        });
    }
    out.note = format!("{slow} of 40 near-threshold draws checked at the fixed point only");
    out
}

fn trichotomy() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0usize; 3];
    for trial in 0..1000 {
        let n = rng.gen_range(1..=8);
        let mut nn = DMatrix::from_fn(n, n, |_, _| if rng.gen_bool(0.4) { rng.gen_range(0.0..2.0) } else { 0.0 });
        for i in 0..n {
            nn[(i, (i + 1) % n)] += rng.gen_range(0.1..1.0);
        }
        // A third of the cases sit exactly on the threshold: row-stochastic Λ⁻¹N.
        let lambda = if trial % 3 == 0 {
            DVector::from_fn(n, |i, _| nn.row(i).sum())
        } else {
            DVector::from_fn(n, |_, _| rng.gen_range(0.2..2.0 * n as f64))
        };
        let m = &nn - DMatrix::from_diagonal(&lambda);
        let ng = DMatrix::from_diagonal(&lambda.map(|l| 1.0 / l)) * &nn;
        let s = spectral::spectral_abscissa(&m).unwrap().value;
        let rho = spectral::spectral_radius(&ng).unwrap().value;
        let (a, b) = (ThresholdSign::of(s), ThresholdSign::of(rho - 1.0));
        counts[a as usize] += 1;
        out.check(a == b, || format!("trial {trial}: s = {s:e}, rho - 1 = {:e}", rho - 1.0));
    }
    out.note = format!("negative/marginal/positive = {counts:?}");
    out
}

fn fixed_point_and_uniqueness() -> (Outcome, Outcome) {
    let (mut ode, mut unique) = (Outcome::new(), Outcome::new());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = (0.0f64, 0.0f64);
    for sys_id in 0..50 {
        let layer = common::endemic_layer(&mut rng, 6, 0.05);
        let eq = match equilibria::endemic_fixed_point(&layer) {
            Ok(eq) => eq,
            Err(e) => {
                ode.failures.push(format!("system {sys_id}: {e}"));
                continue;
            }
        };
        let sys = MultiVirusSystem::new(vec![layer.clone()]).unwrap();
        let start = common::random_state(&mut rng, &sys, true);
        let traj = integrate(&sys, &start, 500.0, &tight()).unwrap();
        let d = inf_dist(eq.state.as_vector(), traj.last().as_vector());
        worst.0 = worst.0.max(d);
        ode.check(d <= 1e-6, || format!("system {sys_id}: fixed point vs ODE distance {d:e}"));

        let ms = equilibria::endemic_multistart(&layer, 20, sys_id).unwrap();
        let agree = ms.points.iter().map(|p| inf_dist(p, eq.state.as_vector())).fold(0.0, f64::max);
        worst.1 = worst.1.max(agree);
        unique.check(ms.failures == 0 && ms.points.len() == 20 && agree <= 1e-8, || {
            format!("system {sys_id}: {} failures, spread {:e}", ms.failures, agree)
        });
    }
    ode.note = format!("worst distance {:.1e}", worst.0);
    unique.note = format!("worst multistart disagreement {:.1e}", worst.1);
    (ode, unique)
}

fn domain_invariance() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for sys_id in 0..200 {
        let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=3));
        let layers = (0..m).map(|_| common::random_layer(&mut rng, n, (0.2, 2.0))).collect();
        let sys = MultiVirusSystem::new(layers).unwrap();
        let start = common::random_state(&mut rng, &sys, false);
        match integrate(&sys, &start, 50.0, &IntegratorControls::default()) {
            Ok(traj) => {
                let excess = traj.states.iter().map(SystemState::domain_excess).fold(traj.max_domain_excess, f64::max);
                worst = worst.max(excess);
                out.check(excess <= dynamics::DOMAIN_GUARD, || format!("system {sys_id}: excess {excess:e}"));
            }
            Err(e) => out.failures.push(format!("system {sys_id}: {e}")),
        }
    }
    out.note = format!("largest excess {worst:.1e}");
    out
}

fn exclusion() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for sys_id in 0..50 {
        let sys = common::dominance_pair(&mut rng, 6, 0.05);
        let cert = equilibria::coexistence_certificate(&sys).unwrap();
        out.check(cert.verdict == equilibria::CoexistenceVerdict::CertifiedExcluded, || {
            format!("system {sys_id}: verdict {:?}", cert.verdict)
        });
        let found = equilibria::coexistence_multistart(&sys, 20, sys_id).unwrap();
        out.check(found.is_empty(), || format!("system {sys_id}: {} coexisting points found", found.len()));

        let y1 = equilibria::endemic_state(sys.layer(0)).unwrap().y;
        let target = equilibria::embed_single(&sys, 0, &y1).unwrap();
        for _ in 0..2 {
            let start = common::random_state(&mut rng, &sys, true);
            let controls = IntegratorControls { stop_on_convergence: true, ..tight() };
            let traj = integrate(&sys, &start, 5000.0, &controls).unwrap();
            let d = inf_dist(traj.last().as_vector(), target.as_vector());
            out.check(d <= 1e-6, || format!("system {sys_id}: distance to (y1, 0) is {d:e}"));
        }

        let eqs = equilibria::known_equilibria(&sys).unwrap();
        out.check(eqs.len() == 3, || format!("system {sys_id}: {} equilibria", eqs.len()));
        for eq in &eqs {
            let verdict = equilibria::stability_at(&sys, eq).unwrap().stability;
            let expected_stable = matches!(eq.kind, EquilibriumKind::SingleVirus { virus: 0 });
            let ok = if expected_stable { verdict == Stability::ExpStable } else { verdict == Stability::Unstable };
            out.check(ok, || format!("system {sys_id}: {:?} classified {verdict:?}", eq.kind));
        }
    }
    out
}

fn mitigation_certificates() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for id in 0..100 {
        let n = rng.gen_range(1..=6);
        let layer = common::random_layer(&mut rng, n, (0.2, 2.0));
        let plan = mitigation::heal_boost(&layer, 0, &DVector::zeros(n)).unwrap();
        let after = layer.with_delta(DVector::from_vec(plan.new_delta.clone())).unwrap();
        let r0 = spectral::reproduction_number(&after).unwrap().value;
        worst = worst.max((r0 - 1.0).abs());
        out.check((r0 - 1.0).abs() <= 1e-12, || format!("layer {id}: R0 = {r0} after boost"));

        let mut eps = DVector::zeros(n);
        eps[rng.gen_range(0..n)] = 0.1;
        let plan = mitigation::heal_boost(&layer, 0, &eps).unwrap();
        let after = layer.with_delta(DVector::from_vec(plan.new_delta)).unwrap();
        let s = spectral::growth_abscissa(&after).unwrap().value;
        out.check(s < 0.0, || format!("layer {id}: s = {s:e} after boost with slack"));

        let sys = loop {
            let l1 = common::endemic_layer(&mut rng, 6, 0.0);
            let beta2 = l1.beta().map(|b| b * rng.gen_range(0.3..1.2));
            let l2 = VirusLayer::new(
                beta2,
                DVector::from_fn(l1.n(), |_, _| rng.gen_range(0.2..2.0)),
                l1.beta_w().map(|b| b * rng.gen_range(0.3..1.2)),
                l1.c().clone(),
                rng.gen_range(0.5..3.0),
            )
            .unwrap();
            if ThresholdSign::of(spectral::growth_abscissa(&l2).unwrap().value) == ThresholdSign::Positive {
                break MultiVirusSystem::new(vec![l1, l2]).unwrap();
            }
        };
        for keep in [false, true] {
            match mitigation::vaccine_rates(&sys, mitigation::DEFAULT_MARGIN, keep) {
                Ok(plan) => {
                    let g1 = sys.layer(0).next_generation().unwrap();
                    let g2 = plan.apply(&sys).unwrap().layer(1).next_generation().unwrap();
                    out.check(equilibria::dominates(&g1, &g2), || format!("pair {id}: vaccine rates do not dominate"));
                }
                Err(e) => out.failures.push(format!("pair {id}: {e}")),
            }
        }
    }
    out.note = format!("worst |R0 - 1| {worst:.1e}");
    out
}

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn stockholm_suite() -> Outcome {
    let mut out = Outcome::new();
    let load = |name: &str| load_scenario(&scenario_dir().join(format!("{name}.toml"))).unwrap();
    let (f3, f4, f5) = (load("stockholm_fig3"), load("stockholm_fig4"), load("stockholm_fig5"));

    let mut values = Vec::new();
    for s in [&f3, &f4, &f5] {
        let a = report::analyze(s).unwrap();
        values.extend(a.viruses.iter().map(|v| v.growth_abscissa.value));
        if std::ptr::eq(s, &f4) {
            let pair = a.pair.unwrap();
            values.extend(pair.invasion_abscissa.iter().map(|q| q.value));
        }
    }
    let worst = values.iter().zip(stockholm::REPORTED.iter()).map(|(v, (_, r))| (v - r).abs()).fold(0.0, f64::max);
    if worst > 0.05 {
        out.known.push(format!("spectral values off by up to {worst:.3} (tolerance 0.05)"));
    }

    let expected = [
        (&f3, Regime::SingleVirusEndemic { virus: 0 }),
        (&f4, Regime::Coexisting { viruses: vec![0, 1] }),
        (&f5, Regime::SingleVirusEndemic { virus: 0 }),
    ];
    for (s, regime) in expected {
        let run = report::simulate(s).unwrap();
        out.check(run.regime == regime, || format!("{}: regime {:?}", s.name, run.regime));
    }
    let f5_growth = report::analyze(&f5).unwrap().viruses[1].growth_abscissa.value;
    out.check(f5_growth > 0.0, || format!("fig5 virus 2 not above threshold: {f5_growth}"));

    let heal = MitigationRequest { virus: 1, ..MitigationRequest::default() };
    let (boost, _) = report::mitigate(&f4, &heal).unwrap();
    if boost.plan.cost != stockholm::REPORTED_HEAL_BOOST_COST {
        out.known.push(format!(
            "heal-boost cost {} (reference {}); with self-contacts the cost is 2n + 2|E|, always even",
            boost.plan.cost,
            stockholm::REPORTED_HEAL_BOOST_COST
        ));
    }
    let vaccine = MitigationRequest {
        strategy: mitigation::Strategy::VirusAsVaccine,
        keep_satisfied: true,
        ..MitigationRequest::default()
    };
    let (vac, _) = report::mitigate(&f4, &vaccine).unwrap();
    out.check((vac.plan.cost - 30.7).abs() < 1e-9, || format!("vaccine cost {}", vac.plan.cost));
    out.check(vac.reference_cost == Some(stockholm::REPORTED_VACCINE_COST), || {
        "reference vaccine cost not flagged".into()
    });
    out.note = format!(
        "max deviation {worst:.3}, heal-boost cost {}, vaccine cost {:.1} (reference {})",
        boost.plan.cost,
        vac.plan.cost,
        stockholm::REPORTED_VACCINE_COST
    );
    out
}

fn jacobian_fd() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for point in 0..100 {
        let (n, m) = (rng.gen_range(1..=5), rng.gen_range(1..=3));
        let layers = (0..m).map(|_| common::random_layer(&mut rng, n, (0.2, 2.0))).collect();
        let sys = MultiVirusSystem::new(layers).unwrap();
        let y = common::random_state(&mut rng, &sys, true);
        let jac = jacobian(&sys, &y).unwrap();
        let h = 1e-6;
        for j in 0..sys.dim() {
            let shifted = |sign: f64| {
                let mut v = y.as_vector().clone();
                v[j] += sign * h;
                vector_field(&sys, &SystemState::from_vector(&sys, v).unwrap()).unwrap()
            };
            let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
            for i in 0..sys.dim() {
                let rel = (jac[(i, j)] - fd[i]).abs() / jac[(i, j)].abs().max(1.0);
                worst = worst.max(rel);
                out.check(rel <= 1e-5, || format!("point {point}: entry ({i}, {j}) relative error {rel:e}"));
            }
        }
    }
    out.note = format!("worst relative error {worst:.1e}");
    out
}

fn main() {
    let mut fatal = false;
    let mut report_line = |id: usize, title: &str, out: Outcome, took: Duration, budget: Duration| {
        let slow = took > budget;
        let pass = out.failures.is_empty() && out.known.is_empty() && !slow;
        println!(
            "criterion {id}: {} {title} [{:.2}s] {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            out.note
        );
        for f in out.failures.iter().take(5) {
            println!("    failure: {f}");
        }
        for f in &out.known {
            println!("    known failure: {f}");
        }
        if slow {
            println!("    over the {:.0}s budget", budget.as_secs_f64());
        }
        fatal |= !out.failures.is_empty() || slow;
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let out = f();
        (out, t.elapsed())
    };
    let secs = Duration::from_secs;

    let (o, t) = timed(&scalar_closed_forms);
    report_line(1, "scalar closed forms", o, t, secs(1));
    let (o, t) = timed(&trichotomy);
    report_line(2, "threshold trichotomy on 1000 Metzler splits", o, t, secs(10));
    let start = Instant::now();
    let (ode, unique) = fixed_point_and_uniqueness();
    let t = start.elapsed();
    report_line(3, "endemic fixed point matches long integration", ode, t, secs(60));
    report_line(4, "20 multi-starts agree", unique, t, secs(60));
    let (o, t) = timed(&domain_invariance);
    report_line(5, "domain invariance", o, t, secs(120));
    let (o, t) = timed(&exclusion);
    report_line(6, "competitive exclusion", o, t, secs(300));
    let (o, t) = timed(&mitigation_certificates);
    report_line(7, "mitigation certificates", o, t, secs(60));
    let (o, t) = timed(&stockholm_suite);
    report_line(8, "Stockholm reproduction", o, t, secs(120));
    let (o, t) = timed(&jacobian_fd);
    report_line(9, "Jacobian against finite differences", o, t, secs(60));

    if fatal {
        std::process::exit(1);
    }
}
