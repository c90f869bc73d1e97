//! Brute-force optima over deterministic class members, ε-optimal
//! selection and side-by-side class comparison.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::criteria::{evaluate, MonteCarloConfig};
use crate::error::{Error, Result};
use crate::model::{dirac, CriterionKind, CriterionSpec, FiniteMdp};
use crate::policy::{enumerate_deterministic_from, Kernel, Policy, PolicyClass};
use crate::prob::CMP_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimumLabel {
    /// Expected-cost criterion: mixtures average component values, so the
    /// deterministic minimum is also the minimum over randomized members.
    GlobalOverRandomized,
    /// Risk criterion: randomization may do strictly better.
    DeterministicClassOptimum,
}

impl OptimumLabel {
    pub fn name(self) -> &'static str {
        match self {
            Self::GlobalOverRandomized => "global-over-randomized",
            Self::DeterministicClassOptimum => "deterministic-class-optimum",
        }
    }
}

impl fmt::Display for OptimumLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Optimization result for one initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateOptimum {
    pub value: f64,
    /// Index of the first minimizer in `candidates`.
    pub argmin: usize,
    /// Every enumerated policy with its value, in enumeration order.
    pub candidates: Vec<(Policy, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassOptimum {
    pub class: PolicyClass,
    pub criterion: CriterionSpec,
    pub per_state: Vec<StateOptimum>,
    pub label: OptimumLabel,
}

impl ClassOptimum {
    pub fn g_star(&self) -> Vec<f64> {
        self.per_state.iter().map(|s| s.value).collect()
    }

    pub fn argmin_policy(&self, x: usize) -> &Policy {
        let s = &self.per_state[x];
        &s.candidates[s.argmin].0
    }

    pub fn method(&self) -> &'static str {
        "enumeration"
    }
}

/// Horizon used to enumerate members of `class` for `spec`.
fn enumeration_horizon(class: PolicyClass, spec: &CriterionSpec) -> usize {
    if class.is_stationary() {
        1
    } else if spec.kind == CriterionKind::HatPsi {
        2 * spec.horizon
    } else {
        spec.horizon
    }
}

fn check_class(class: PolicyClass, spec: &CriterionSpec) -> Result<()> {
    let needs_stationary =
        spec.kind.is_pathwise() || matches!(spec.kind, CriterionKind::Cvar | CriterionKind::Var);
    if needs_stationary && !class.is_stationary() {
        return Err(Error::InvalidArgument(format!(
            "{} is optimized over stationary or semi-stationary classes only",
            spec.kind
        )));
    }
    Ok(())
}

/// `g*(x) = min` of the criterion over nonrandomized members of `class`
/// started at `δ_x`, for every state `x`. Ties go to the first member in
/// enumeration order.
pub fn optimal_value(
    model: &FiniteMdp,
    class: PolicyClass,
    spec: &CriterionSpec,
    mc: &MonteCarloConfig,
    cap: u128,
) -> Result<ClassOptimum> {
    spec.validate()?;
    check_class(class, spec)?;
    let horizon = enumeration_horizon(class, spec);
    let mut per_state = Vec::with_capacity(model.num_states);
    for x in 0..model.num_states {
        let p0 = dirac(model.num_states, x);
        let policies = enumerate_deterministic_from(model, class, horizon, &[x], cap)?;
        let values: Vec<f64> =
            policies.par_iter().map(|pi| evaluate(model, pi, &p0, spec, mc).map(|r| r.value)).collect::<Result<_>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("criterion value is not finite".into()));
        }
        let mut argmin = 0;
        for (i, v) in values.iter().enumerate() {
            if *v < values[argmin] {
                argmin = i;
            }
        }
        per_state.push(StateOptimum { value: values[argmin], argmin, candidates: policies.into_iter().zip(values).collect() });
    }
    let label = if spec.kind.is_expected_cost() {
        OptimumLabel::GlobalOverRandomized
    } else {
        OptimumLabel::DeterministicClassOptimum
    };
    Ok(ClassOptimum { class, criterion: *spec, per_state, label })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsOptimal {
    /// First policy in enumeration order with `J(π, x) ≤ g*(x) + ε`.
    pub per_state: Vec<Policy>,
    pub values: Vec<f64>,
    /// The per-state choices stitched into one policy whose kernels are
    /// indexed by the initial state.
    pub combined: Policy,
}

/// Class whose kernels can carry one behavior per initial state.
pub fn stitched_class(class: PolicyClass) -> PolicyClass {
    match class {
        PolicyClass::Stationary | PolicyClass::SemiStationary => PolicyClass::SemiStationary,
        PolicyClass::Markov | PolicyClass::SemiMarkov => PolicyClass::SemiMarkov,
        PolicyClass::History => PolicyClass::History,
    }
}

/// Kernels of `pi` as seen from initial state `x0`, rekeyed for
/// [`stitched_class`].
fn rekey_from(pi: &Policy, x0: usize) -> Vec<Kernel<f64>> {
    pi.kernels
        .iter()
        .map(|k| {
            k.iter()
                .filter_map(|(key, row)| {
                    let new_key = match pi.class {
                        PolicyClass::Stationary | PolicyClass::Markov => Some(vec![x0, key[0]]),
                        PolicyClass::SemiStationary | PolicyClass::SemiMarkov | PolicyClass::History => {
                            (key[0] == x0).then(|| key.clone())
                        }
                    }?;
                    Some((new_key, row.clone()))
                })
                .collect()
        })
        .collect()
}

pub fn eps_optimal_policy(opt: &ClassOptimum, epsilon: f64) -> Result<EpsOptimal> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let mut per_state = Vec::with_capacity(opt.per_state.len());
    let mut values = Vec::with_capacity(opt.per_state.len());
    let stages = opt.per_state.iter().flat_map(|s| s.candidates.first()).map(|(p, _)| p.kernels.len()).max().unwrap_or(1);
    let mut kernels: Vec<Kernel<f64>> = vec![BTreeMap::new(); stages];
    for (x0, s) in opt.per_state.iter().enumerate() {
        let (pi, v) = s
            .candidates
            .iter()
            .find(|(_, v)| *v <= s.value + epsilon)
            .expect("the minimizer itself qualifies");
        for (stage, k) in rekey_from(pi, x0).into_iter().enumerate() {
            kernels[stage].extend(k);
        }
        per_state.push(pi.clone());
        values.push(*v);
    }
    let combined = Policy { class: stitched_class(opt.class), randomized: false, kernels };
    Ok(EpsOptimal { per_state, values, combined })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassComparison {
    pub classes: Vec<PolicyClass>,
    /// `g_star[c][x]`
    pub g_star: Vec<Vec<f64>>,
    /// `equal[c][d]`: optima agree at every state within 1e-9.
    pub equal: Vec<Vec<bool>>,
}

pub fn class_comparison(
    model: &FiniteMdp,
    spec: &CriterionSpec,
    classes: &[PolicyClass],
    mc: &MonteCarloConfig,
    cap: u128,
) -> Result<ClassComparison> {
    let g_star: Vec<Vec<f64>> =
        classes.iter().map(|&c| optimal_value(model, c, spec, mc, cap).map(|o| o.g_star())).collect::<Result<_>>()?;
    let equal = g_star
        .iter()
        .map(|a| g_star.iter().map(|b| a.iter().zip(b).all(|(u, v)| (u - v).abs() <= CMP_TOL)).collect())
        .collect();
    Ok(ClassComparison { classes: classes.to_vec(), g_star, equal })
}
