//! Healing-rate plans that eradicate a virus: direct boosting, and using a competing
//! virus as a vaccine.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::equilibria::{dominates, Certificate};
use crate::error::{Error, Result};
use crate::netmodel::{is_irreducible, MultiVirusSystem, VirusLayer};
use crate::spectral::{self, ThresholdSign};

/// Default relative slack added to the vaccine bound.
pub const DEFAULT_MARGIN: f64 = 0.05;
/// Tolerance for the equal-contamination-weights hypothesis.
pub const CONTAMINATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    HealBoost,
    VirusAsVaccine,
}

/// What the plan guarantees once applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Guarantee {
    /// `s(B_w - D_w) < 0`: the target virus dies out exponentially fast.
    ExponentialEradication,
    /// `s(B_w - D_w) = 0`: eradication holds, but not at an exponential rate.
    AsymptoticEradication,
    /// The other virus's next-generation matrix dominates the target's entrywise.
    CompetitiveExclusion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MitigationPlan {
    pub strategy: Strategy,
    /// Zero-based (one-based when serialized).
    #[serde(serialize_with = "crate::one_based::index")]
    pub target_virus: usize,
    pub new_delta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Whether rates already above the vaccine bound were left unchanged.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kept_satisfied_rates: Option<bool>,
    pub cost: f64,
    pub guarantee: Guarantee,
    pub certificate: Vec<Certificate>,
    pub warnings: Vec<String>,
}

impl MitigationPlan {
    /// The system with this plan's healing rates substituted.
    pub fn apply(&self, sys: &MultiVirusSystem) -> Result<MultiVirusSystem> {
        sys.with_delta(self.target_virus, DVector::from_column_slice(&self.new_delta))
    }
}

/// Sum of the replacement healing rates.
pub fn plan_cost(plan: &MitigationPlan) -> f64 {
    plan.new_delta.iter().sum()
}

/// `delta_i = beta_iw + sum_j beta_ij + epsilon_i`, which makes every row sum of
/// `D_w^{-1} B_w` at most one (exactly one when `epsilon = 0`).
pub fn heal_boost(layer: &VirusLayer, target_virus: usize, epsilon: &DVector<f64>) -> Result<MitigationPlan> {
    if epsilon.len() != layer.n() {
        return Err(Error::Structural(format!("epsilon has {} entries, layer has {} nodes", epsilon.len(), layer.n())));
    }
    if let Some((i, e)) = epsilon.iter().enumerate().find(|(_, e)| !(**e >= 0.0 && e.is_finite())) {
        return Err(Error::Precondition(format!("epsilon at node {} is {e}, must be finite and nonnegative", i + 1)));
    }
    if !is_irreducible(layer) {
        return Err(Error::Precondition(format!("virus {}: B_w is reducible", target_virus + 1)));
    }
    let new_delta = DVector::from_fn(layer.n(), |i, _| layer.beta_w()[i] + layer.beta().row(i).sum() + epsilon[i]);
    let boosted = layer.with_delta(new_delta.clone())?;
    let radius = spectral::reproduction_number(&boosted)?.value;
    let abscissa = spectral::growth_abscissa(&boosted)?.value;
    let guarantee = if epsilon.iter().any(|&e| e > 0.0) {
        Guarantee::ExponentialEradication
    } else {
        Guarantee::AsymptoticEradication
    };
    let mut warnings = Vec::new();
    if guarantee == Guarantee::ExponentialEradication && ThresholdSign::of(abscissa) != ThresholdSign::Negative {
        warnings.push(format!("growth abscissa {abscissa:.3e} after boosting is inside the marginal band"));
    }
    let new_delta: Vec<f64> = new_delta.iter().copied().collect();
    Ok(MitigationPlan {
        strategy: Strategy::HealBoost,
        target_virus,
        cost: new_delta.iter().sum(),
        new_delta,
        epsilon: Some(epsilon.iter().copied().collect()),
        margin: None,
        kept_satisfied_rates: None,
        guarantee,
        certificate: vec![
            Certificate::new("reproduction_number_after", radius),
            Certificate::new("growth_abscissa_after", abscissa),
        ],
        warnings,
    })
}

/// Heal-boost every virus; the healthy state is exponentially stable exactly when each
/// plan has some positive epsilon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HealBoostSet {
    pub plans: Vec<MitigationPlan>,
    pub healthy_exponentially_stable: bool,
}

pub fn all_viruses_heal_boost(sys: &MultiVirusSystem, epsilon: &[DVector<f64>]) -> Result<HealBoostSet> {
    if epsilon.len() != sys.m() {
        return Err(Error::Structural(format!("got {} epsilon vectors for {} viruses", epsilon.len(), sys.m())));
    }
    let plans = sys
        .layers()
        .iter()
        .zip(epsilon)
        .enumerate()
        .map(|(k, (layer, eps))| heal_boost(layer, k, eps))
        .collect::<Result<Vec<_>>>()?;
    let healthy_exponentially_stable = plans.iter().all(|p| p.guarantee == Guarantee::ExponentialEradication);
    Ok(HealBoostSet { plans, healthy_exponentially_stable })
}

/// Per-node lower bound on virus 2's healing rate:
/// `max_j (B_w^2)_ij / ((D_w^1)^{-1} B_w^1)_ij` over `j` with `(B_w^1)_ij > 0`.
pub fn vaccine_bounds(sys: &MultiVirusSystem) -> Result<DVector<f64>> {
    let (l1, l2) = (sys.layer(0), sys.layer(1));
    let g1 = l1.next_generation()?;
    let b2 = l2.bw();
    Ok(DVector::from_fn(sys.n(), |i, _| {
        (0..sys.block_dim()).filter(|&j| l1.bw()[(i, j)] > 0.0).map(|j| b2[(i, j)] / g1[(i, j)]).fold(0.0, f64::max)
    }))
}

fn check_vaccine_hypotheses(sys: &MultiVirusSystem) -> Result<()> {
    if sys.m() != 2 {
        return Err(Error::Precondition(format!("virus-as-vaccine needs exactly two viruses, system has {}", sys.m())));
    }
    for (k, layer) in sys.layers().iter().enumerate() {
        if !is_irreducible(layer) {
            return Err(Error::Precondition(format!("virus {}: B_w is reducible", k + 1)));
        }
        let s = spectral::growth_abscissa(layer)?.value;
        if ThresholdSign::of(s) != ThresholdSign::Positive {
            return Err(Error::Precondition(format!("virus {}: s(B_w - D_w) = {s:.3e} is not positive", k + 1)));
        }
    }
    let (l1, l2) = (sys.layer(0), sys.layer(1));
    if let Some(i) = (0..sys.n()).find(|&i| (l1.c()[i] - l2.c()[i]).abs() > CONTAMINATION_TOL) {
        return Err(Error::Precondition(format!(
            "contamination weights differ at node {}: {} vs {}",
            i + 1,
            l1.c()[i],
            l2.c()[i]
        )));
    }
    let d = sys.block_dim();
    for i in 0..d {
        for j in 0..d {
            if l2.bw()[(i, j)] > 0.0 && l1.bw()[(i, j)] <= 0.0 {
                return Err(Error::Precondition(format!(
                    "edge ({}, {}) of virus 2 is absent for virus 1",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// Healing rates for virus 2 that let virus 1 exclude it.
///
/// Each rate becomes `bound_i * (1 + margin)`. With `keep_satisfied`, rates already above
/// that value stay as they are, provided dominance still holds; otherwise every rate is
/// replaced.
pub fn vaccine_rates(sys: &MultiVirusSystem, margin: f64, keep_satisfied: bool) -> Result<MitigationPlan> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::Precondition(format!("margin must be positive for a strict inequality, got {margin}")));
    }
    check_vaccine_hypotheses(sys)?;
    let bounds = vaccine_bounds(sys)?;
    let current = sys.layer(1).delta();
    let g1 = sys.layer(0).next_generation()?;

    let replaced =
        DVector::from_fn(sys.n(), |i, _| if bounds[i] > 0.0 { bounds[i] * (1.0 + margin) } else { current[i] });
    let mut new_delta = replaced.clone();
    let mut kept = false;
    if keep_satisfied {
        let partial = replaced.zip_map(current, |r, c| r.max(c));
        if partial != replaced && dominates(&g1, &sys.layer(1).with_delta(partial.clone())?.next_generation()?) {
            new_delta = partial;
            kept = true;
        }
    }

    let after = sys.layer(1).with_delta(new_delta.clone())?;
    let g2 = after.next_generation()?;
    if !dominates(&g1, &g2) {
        return Err(Error::Numerical("planned rates fail the entrywise dominance check".into()));
    }
    let gap = min_dominance_gap(&g1, &g2);
    let s_after = spectral::growth_abscissa(&after)?.value;
    let mut warnings = Vec::new();
    if ThresholdSign::of(s_after) != ThresholdSign::Positive {
        warnings.push(format!(
            "virus 2 now below threshold (s = {s_after:.3e}); the exclusion hypothesis on virus 2 no longer applies, \
             eradication is still certified by its own threshold"
        ));
    }
    let new_delta: Vec<f64> = new_delta.iter().copied().collect();
    Ok(MitigationPlan {
        strategy: Strategy::VirusAsVaccine,
        target_virus: 1,
        cost: new_delta.iter().sum(),
        new_delta,
        epsilon: None,
        margin: Some(margin),
        kept_satisfied_rates: Some(kept),
        guarantee: Guarantee::CompetitiveExclusion,
        certificate: vec![
            Certificate::new("growth_abscissa_1", spectral::growth_abscissa(sys.layer(0))?.value),
            Certificate::new("growth_abscissa_2_after", s_after),
            Certificate::new("min_strict_dominance_gap", gap),
        ],
        warnings,
    })
}

/// Smallest positive entry of `a - b`.
fn min_dominance_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x - y).filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(beta: f64, delta: f64, b: f64, delta_w: f64) -> VirusLayer {
        VirusLayer::new(
            DMatrix::from_element(1, 1, beta),
            DVector::from_element(1, delta),
            DVector::from_element(1, b),
            DVector::from_element(1, 1.0),
            delta_w,
        )
        .unwrap()
    }

    #[test]
    fn scalar_heal_boost_is_marginal() {
        let plan = heal_boost(&scalar(1.0, 0.3, 1.0, 1.0), 0, &DVector::from_element(1, 0.0)).unwrap();
        assert_eq!(plan.new_delta, vec![2.0]);
        assert_eq!(plan.guarantee, Guarantee::AsymptoticEradication);
        assert_abs_diff_eq!(plan.certificate[0].value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(plan.certificate[1].value, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn positive_epsilon_gives_negative_abscissa() {
        let plan = heal_boost(&scalar(1.0, 0.3, 1.0, 1.0), 0, &DVector::from_element(1, 0.5)).unwrap();
        assert_eq!(plan.new_delta, vec![2.5]);
        // oracle: eigenvalues of [[1 - 2.5, 1], [1, -1]]
        let m = DMatrix::from_row_slice(2, 2, &[-1.5, 1.0, 1.0, -1.0]);
        let s = m.symmetric_eigenvalues().max();
        assert!(s < 0.0);
        assert_abs_diff_eq!(plan.certificate[1].value, s, epsilon = 1e-10);
        assert_eq!(plan.guarantee, Guarantee::ExponentialEradication);
    }

    #[test]
    fn negative_epsilon_is_rejected() {
        let err = heal_boost(&scalar(1.0, 0.3, 1.0, 1.0), 0, &DVector::from_element(1, -0.1)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn slack_decides_exponential_versus_asymptotic() {
        let sys = MultiVirusSystem::new(vec![scalar(1.0, 0.3, 1.0, 1.0), scalar(2.0, 0.3, 1.0, 1.0)]).unwrap();
        let pos = DVector::from_element(1, 0.1);
        let zero = DVector::from_element(1, 0.0);
        assert!(all_viruses_heal_boost(&sys, &[pos.clone(), pos.clone()]).unwrap().healthy_exponentially_stable);
        assert!(!all_viruses_heal_boost(&sys, &[pos, zero]).unwrap().healthy_exponentially_stable);
    }

    #[test]
    fn scalar_vaccine_bound() {
        let sys = MultiVirusSystem::new(vec![scalar(1.0, 0.5, 1.0, 1.0), scalar(1.0, 0.6, 1.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(vaccine_bounds(&sys).unwrap()[0], 0.5, epsilon = 1e-15);
        let plan = vaccine_rates(&sys, 0.1, false).unwrap();
        assert_abs_diff_eq!(plan.new_delta[0], 0.55, epsilon = 1e-15);
        assert_eq!(plan.cost, plan_cost(&plan));
    }

    #[test]
    fn zero_margin_is_rejected() {
        let sys = MultiVirusSystem::new(vec![scalar(1.0, 0.5, 1.0, 1.0), scalar(1.0, 0.5, 1.0, 1.0)]).unwrap();
        assert!(matches!(vaccine_rates(&sys, 0.0, false), Err(Error::Precondition(_))));
    }

    #[test]
    fn keep_satisfied_leaves_high_rates() {
        let beta = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let layer = |d: [f64; 2]| {
            VirusLayer::new(
                beta.clone(),
                DVector::from_row_slice(&d),
                DVector::from_element(2, 1.0),
                DVector::from_element(2, 0.5),
                1.0,
            )
            .unwrap()
        };
        let sys = MultiVirusSystem::new(vec![layer([0.5, 1.0]), layer([1.0, 0.5])]).unwrap();
        let full = vaccine_rates(&sys, 0.05, false).unwrap();
        assert_abs_diff_eq!(full.new_delta[0], 0.525, epsilon = 1e-12);
        assert_abs_diff_eq!(full.new_delta[1], 1.05, epsilon = 1e-12);
        let partial = vaccine_rates(&sys, 0.05, true).unwrap();
        assert_eq!(partial.new_delta[0], 1.0);
        assert_abs_diff_eq!(partial.new_delta[1], 1.05, epsilon = 1e-12);
        assert_eq!(partial.kept_satisfied_rates, Some(true));
    }

    #[test]
    fn mismatched_contamination_is_rejected() {
        let beta = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let layer = |c: [f64; 2]| {
            VirusLayer::new(
                beta.clone(),
                DVector::from_element(2, 0.5),
                DVector::from_element(2, 1.0),
                DVector::from_row_slice(&c),
                1.0,
            )
            .unwrap()
        };
        let sys = MultiVirusSystem::new(vec![layer([0.5, 0.5]), layer([0.4, 0.6])]).unwrap();
        let err = vaccine_rates(&sys, 0.05, false).unwrap_err();
        assert!(err.to_string().contains("contamination"), "{err}");
    }
}
