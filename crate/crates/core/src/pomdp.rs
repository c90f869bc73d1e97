//! Partially observed models with a deterministic observation function.
//!
//! Histories are stored as flat triples `(x_0, z_0, a_0, x_1, z_1, a_1, ...)`
//! and information vectors as `(z_0, a_0, ..., z_n)`. Policies are ordinary
//! [`Policy`] values whose keys are formed from information vectors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{check_initial, StrategicMeasure};
use crate::model::{dirac, CriterionKind, CriterionSpec, FinitePomdp, PsiFn};
use crate::policy::{policy_from_selection, selection_count, Odometer, Policy, PolicyClass, PomdpPolicy, Site};
use crate::prob::{is_point_mass, CMP_TOL, ROW_TOL};

/// Law over `(x, z, a)` histories of length `horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct PomdpMeasure {
    pub horizon: usize,
    pub support: BTreeMap<Vec<usize>, f64>,
}

/// `i_n` of a triple history prefix ending in `(x_n, z_n)` or `(x_n, z_n, a_n)`.
pub fn info_vector(history: &[usize]) -> Vec<usize> {
    history.iter().enumerate().filter(|(i, _)| i % 3 != 0).map(|(_, &v)| v).collect()
}

impl PomdpMeasure {
    pub fn total(&self) -> f64 {
        self.support.values().sum()
    }

    pub fn expect(&self, f: impl Fn(&[usize]) -> f64) -> f64 {
        self.support.iter().map(|(h, p)| p * f(h)).sum()
    }

    /// Marginal on prefixes of `len` entries.
    pub fn prefix_marginal(&self, len: usize) -> BTreeMap<Vec<usize>, f64> {
        let mut out = BTreeMap::new();
        for (h, p) in &self.support {
            *out.entry(h[..len].to_vec()).or_insert(0.0) += p;
        }
        out
    }

    /// Drops the observations, giving the underlying MDP measure.
    pub fn state_action_measure(&self, model: &FinitePomdp) -> StrategicMeasure {
        let mut support = BTreeMap::new();
        for (h, p) in &self.support {
            let g: Vec<usize> = h.iter().enumerate().filter(|(i, _)| i % 3 != 1).map(|(_, &v)| v).collect();
            *support.entry(g).or_insert(0.0) += p;
        }
        StrategicMeasure {
            horizon: self.horizon,
            num_states: model.base.num_states,
            num_actions: model.base.num_actions,
            support,
        }
    }
}

/// Inserts `z_n = f(x_n)` into every history of an MDP measure.
pub fn lift_measure(model: &FinitePomdp, p: &StrategicMeasure) -> PomdpMeasure {
    let support = p
        .support
        .iter()
        .map(|(h, &w)| {
            let mut g = Vec::with_capacity(h.len() / 2 * 3);
            for pair in h.chunks(2) {
                g.extend([pair[0], model.obs_fn[pair[0]], pair[1]]);
            }
            (g, w)
        })
        .collect();
    PomdpMeasure { horizon: p.horizon, support }
}

fn pomdp_dist<'a>(model: &FinitePomdp, policy: &'a PomdpPolicy, n: usize, info: &[usize]) -> std::borrow::Cow<'a, [f64]> {
    let fallback = model.admissible_info(n, info)[0];
    policy.action_dist(n, info, fallback, model.base.num_actions)
}

/// `z_n = f(x_n)` and `a_n ~ μ_n(·|i_n)`.
pub fn pomdp_strategic_measure(model: &FinitePomdp, policy: &PomdpPolicy, p0: &[f64], horizon: usize) -> Result<PomdpMeasure> {
    policy.check_horizon(horizon)?;
    check_initial(&model.base, p0)?;
    let mut frontier: Vec<(Vec<usize>, f64)> =
        p0.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(x, &p)| (vec![x, model.obs_fn[x]], p)).collect();
    for n in 0..horizon {
        let mut next = Vec::new();
        for (h, w) in frontier {
            let x = h[h.len() - 2];
            let info = info_vector(&h);
            let allowed = model.admissible_info(n, &info);
            let dist = pomdp_dist(model, policy, n, &info);
            for (a, &pa) in dist.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                if !allowed.contains(&a) {
                    return Err(Error::InvalidPolicy(format!("stage {n} info {info:?} puts mass on inadmissible action {a}")));
                }
                let mut g = h.clone();
                g.push(a);
                if n + 1 == horizon {
                    next.push((g, w * pa));
                } else {
                    for (y, &py) in model.base.q(x, a).iter().enumerate().filter(|(_, p)| **p > 0.0) {
                        let mut g2 = g.clone();
                        g2.extend([y, model.obs_fn[y]]);
                        next.push((g2, w * pa * py));
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(PomdpMeasure { horizon, support: frontier.into_iter().collect() })
}

#[derive(Clone, Debug, PartialEq)]
pub enum PomdpFailure {
    NotNormalized { total: f64 },
    Inadmissible { stage: usize, info: Vec<usize>, action: usize },
    TransitionMismatch { stage: usize, history: Vec<usize>, max_diff: f64 },
    ObservationMismatch { stage: usize, history: Vec<usize> },
    /// Two histories with the same information vector carry different
    /// action conditionals.
    InfoMeasurability { stage: usize, first: Vec<usize>, second: Vec<usize>, max_diff: f64 },
    NotDirac { stage: usize, info: Vec<usize> },
}

impl fmt::Display for PomdpFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotNormalized { total } => write!(f, "total mass {total}"),
            Self::Inadmissible { stage, info, action } => {
                write!(f, "stage {stage}: action {action} inadmissible at info {info:?}")
            }
            Self::TransitionMismatch { stage, history, max_diff } => {
                write!(f, "stage {stage}: transition law after {history:?} off by {max_diff:e}")
            }
            Self::ObservationMismatch { stage, history } => {
                write!(f, "stage {stage}: observation inconsistent with state in {history:?}")
            }
            Self::InfoMeasurability { stage, first, second, max_diff } => write!(
                f,
                "stage {stage}: histories {first:?} and {second:?} share an information vector but their action laws differ by {max_diff:e}"
            ),
            Self::NotDirac { stage, info } => write!(f, "stage {stage}: action law at {info:?} is randomized"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PomdpMembershipReport {
    pub member: bool,
    pub failures: Vec<PomdpFailure>,
}

/// Stage-`n` conditionals of `a_n` given `h_n` and given `i_n`.
struct StageConditionals {
    by_history: BTreeMap<Vec<usize>, (f64, Vec<f64>)>,
    by_info: BTreeMap<Vec<usize>, (f64, Vec<f64>)>,
}

fn stage_conditionals(model: &FinitePomdp, p: &PomdpMeasure, n: usize) -> StageConditionals {
    let na = model.base.num_actions;
    let mut by_history: BTreeMap<Vec<usize>, (f64, Vec<f64>)> = BTreeMap::new();
    let mut by_info: BTreeMap<Vec<usize>, (f64, Vec<f64>)> = BTreeMap::new();
    for (h, &w) in &p.support {
        let prefix = &h[..3 * n + 2];
        let a = h[3 * n + 2];
        let e = by_history.entry(prefix.to_vec()).or_insert_with(|| (0.0, vec![0.0; na]));
        e.0 += w;
        e.1[a] += w;
        let e = by_info.entry(info_vector(prefix)).or_insert_with(|| (0.0, vec![0.0; na]));
        e.0 += w;
        e.1[a] += w;
    }
    for (total, row) in by_history.values_mut().chain(by_info.values_mut()) {
        for v in row.iter_mut() {
            *v /= *total;
        }
    }
    StageConditionals { by_history, by_info }
}

/// Checks that `p` is the measure of some information-vector policy:
/// admissibility under `U_n`, transitions `q`, observations `f`, action
/// laws measurable with respect to `i_n`, and optionally Dirac kernels.
pub fn verify_pomdp_membership(model: &FinitePomdp, p: &PomdpMeasure, nonrandomized: bool) -> PomdpMembershipReport {
    let mut failures = Vec::new();
    let total = p.total();
    if (total - 1.0).abs() > ROW_TOL.max(1e-12 * p.support.len() as f64) {
        failures.push(PomdpFailure::NotNormalized { total });
    }
    for h in p.support.keys() {
        for (k, t) in h.chunks(3).enumerate() {
            if t.len() >= 2 && model.obs_fn.get(t[0]) != Some(&t[1]) {
                failures.push(PomdpFailure::ObservationMismatch { stage: k, history: h.clone() });
                break;
            }
        }
    }
    for n in 0..p.horizon {
        let cond = stage_conditionals(model, p, n);
        for (info, (_, row)) in &cond.by_info {
            let allowed = model.admissible_info(n, info);
            for (a, &pa) in row.iter().enumerate() {
                if pa > 0.0 && !allowed.contains(&a) {
                    failures.push(PomdpFailure::Inadmissible { stage: n, info: info.clone(), action: a });
                }
            }
            if nonrandomized && !row.iter().any(|&v| (v - 1.0).abs() <= CMP_TOL) {
                failures.push(PomdpFailure::NotDirac { stage: n, info: info.clone() });
            }
        }
        let mut first_of_info: BTreeMap<Vec<usize>, &Vec<usize>> = BTreeMap::new();
        for (h, (_, row)) in &cond.by_history {
            let info = info_vector(h);
            let reference = &cond.by_info[&info].1;
            let max_diff = row.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let first = *first_of_info.entry(info).or_insert(h);
            if max_diff > CMP_TOL {
                let first_row = &cond.by_history[first].1;
                let pair_diff = row.iter().zip(first_row).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                failures.push(PomdpFailure::InfoMeasurability {
                    stage: n,
                    first: first.clone(),
                    second: h.clone(),
                    max_diff: pair_diff.max(max_diff),
                });
            }
        }
        if n + 1 < p.horizon {
            let ns = model.base.num_states;
            let mut next: BTreeMap<Vec<usize>, (f64, Vec<f64>)> = BTreeMap::new();
            for (h, &w) in &p.support {
                let e = next.entry(h[..3 * n + 3].to_vec()).or_insert_with(|| (0.0, vec![0.0; ns]));
                e.0 += w;
                e.1[h[3 * n + 3]] += w;
            }
            for (h, (t, row)) in next {
                let (x, a) = (h[3 * n], h[3 * n + 2]);
                if !model.base.is_admissible(x, a) {
                    continue;
                }
                let q = model.base.q(x, a);
                let max_diff = row.iter().zip(q).map(|(r, q)| (r / t - q).abs()).fold(0.0, f64::max);
                if max_diff > CMP_TOL {
                    failures.push(PomdpFailure::TransitionMismatch { stage: n, history: h, max_diff });
                }
            }
        }
    }
    PomdpMembershipReport { member: failures.is_empty(), failures }
}

/// Information-vector history policy reproducing `p`: its conditionals
/// given `i_n`, with the lowest admissible action elsewhere.
pub fn recover_pomdp_policy(model: &FinitePomdp, p: &PomdpMeasure) -> Result<PomdpPolicy> {
    let report = verify_pomdp_membership(model, p, false);
    if let Some(f) = report.failures.first() {
        return Err(Error::NotInClass { class: "S_I".into(), reason: f.to_string() });
    }
    let kernels: Vec<_> = (0..p.horizon)
        .map(|n| stage_conditionals(model, p, n).by_info.into_iter().map(|(k, (_, row))| (k, row)).collect::<BTreeMap<_, _>>())
        .collect();
    let randomized = kernels.iter().flat_map(|k| k.values()).any(|row| !is_point_mass(row, CMP_TOL));
    Policy::new(PolicyClass::History, randomized, kernels)
}

/// Criterion value of a POMDP measure (NSTAGE, truncated DISCOUNTED or PSI
/// at the measure's horizon).
pub fn pomdp_criterion(model: &FinitePomdp, p: &PomdpMeasure, spec: &CriterionSpec) -> Result<f64> {
    let h = p.horizon;
    let path_cost = |g: &[usize], discount: f64| -> f64 {
        (0..h).map(|n| discount.powi(n as i32) * model.base.c(g[3 * n], g[3 * n + 2])).sum()
    };
    match spec.kind {
        CriterionKind::NStage => Ok(p.expect(|g| path_cost(g, 1.0))),
        CriterionKind::Discounted => Ok(p.expect(|g| path_cost(g, spec.beta))),
        CriterionKind::Psi => match spec.psi {
            PsiFn::Identity => Ok(p.expect(|g| path_cost(g, 1.0)) / h as f64),
            PsiFn::Exp => {
                let m = p.expect(|g| (spec.beta * path_cost(g, 1.0)).exp());
                if !m.is_finite() {
                    return Err(Error::Overflow);
                }
                Ok(m.ln() / (spec.beta * h as f64))
            }
        },
        k => Err(Error::InvalidArgument(format!("POMDP optimization supports NSTAGE, DISCOUNTED and PSI, got {k}"))),
    }
}

/// Decision sites of deterministic information-vector policies: every
/// information vector reachable from the support of `p0`.
pub fn info_sites(model: &FinitePomdp, p0: &[f64], horizon: usize) -> Vec<Site> {
    // (info, possible current states)
    let mut layer: BTreeMap<Vec<usize>, BTreeSet<usize>> = BTreeMap::new();
    for (x, _) in p0.iter().enumerate().filter(|(_, &p)| p > 0.0) {
        layer.entry(vec![model.obs_fn[x]]).or_default().insert(x);
    }
    let mut sites = Vec::new();
    for n in 0..horizon {
        let mut next: BTreeMap<Vec<usize>, BTreeSet<usize>> = BTreeMap::new();
        for (info, states) in &layer {
            let choices = model.admissible_info(n, info).into_owned();
            if n + 1 < horizon {
                for &a in &choices {
                    for &x in states {
                        for (y, _) in model.base.successors(x, a) {
                            let mut i = info.clone();
                            i.extend([a, model.obs_fn[y]]);
                            next.entry(i).or_default().insert(y);
                        }
                    }
                }
            }
            sites.push(Site { stage: n, key: info.clone(), choices });
        }
        layer = next;
    }
    sites
}

#[derive(Clone, Debug, PartialEq)]
pub struct PomdpOptimum {
    pub value: f64,
    pub policy: PomdpPolicy,
    pub evaluated: usize,
}

/// Minimum of the criterion over deterministic information-vector policies
/// at horizon `spec.horizon`, separately for each initial law.
pub fn pomdp_optimal_value(model: &FinitePomdp, spec: &CriterionSpec, p0_list: &[Vec<f64>], cap: u128) -> Result<Vec<PomdpOptimum>> {
    spec.validate()?;
    let horizon = spec.horizon;
    p0_list
        .iter()
        .map(|p0| {
            check_initial(&model.base, p0)?;
            let sites = info_sites(model, p0, horizon);
            let needed = selection_count(&sites);
            if needed > cap {
                return Err(Error::CapExceeded { needed, cap });
            }
            let radix: Vec<usize> = sites.iter().map(|s| s.choices.len()).collect();
            let picks: Vec<Vec<usize>> = Odometer::new(radix).collect();
            let values: Vec<(f64, PomdpPolicy)> = picks
                .par_iter()
                .map(|pick| {
                    let pi = policy_from_selection(PolicyClass::History, horizon, model.base.num_actions, &sites, pick);
                    let m = pomdp_strategic_measure(model, &pi, p0, horizon)?;
                    Ok((pomdp_criterion(model, &m, spec)?, pi))
                })
                .collect::<Result<_>>()?;
            let evaluated = values.len();
            let (value, policy) = values
                .into_iter()
                .reduce(|best, cur| if cur.0 < best.0 { cur } else { best })
                .expect("at least one policy");
            Ok(PomdpOptimum { value, policy, evaluated })
        })
        .collect()
}

/// Open-loop check helper: the point mass on `x` as an initial law.
pub fn point_law(model: &FinitePomdp, x: usize) -> Vec<f64> {
    dirac(model.base.num_states, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::strategic_measure;
    use crate::model::FiniteMdp;

    fn m1() -> FiniteMdp {
        let mut m = FiniteMdp::empty(2, 2);
        m.set(0, 0, vec![1.0, 0.0], 1.0)
            .set(0, 1, vec![0.0, 1.0], 0.0)
            .set(1, 0, vec![1.0, 0.0], 3.0)
            .set(1, 1, vec![0.5, 0.5], 2.0);
        m
    }

    #[test]
    fn fully_observed_measure_matches_mdp() {
        let pomdp = FinitePomdp::fully_observed(m1());
        let pi = Policy::stationary(vec![vec![0.3, 0.7], vec![0.5, 0.5]]);
        let mp = pomdp_strategic_measure(&pomdp, &pi, &[0.5, 0.5], 3).unwrap();
        let m = strategic_measure(&pomdp.base, &pi, &[0.5, 0.5], 3).unwrap();
        assert!(mp.state_action_measure(&pomdp).approx_eq(&m, 1e-15));
        assert!(verify_pomdp_membership(&pomdp, &mp, false).member);
    }

    #[test]
    fn state_feedback_under_constant_observation_fails() {
        let pomdp = FinitePomdp::new(m1(), 1, vec![0, 0]).unwrap();
        let state_feedback = Policy::deterministic_stationary(&[0, 1], 2);
        let m = strategic_measure(&pomdp.base, &state_feedback, &[0.5, 0.5], 1).unwrap();
        let lifted = lift_measure(&pomdp, &m);
        let rep = verify_pomdp_membership(&pomdp, &lifted, false);
        assert!(!rep.member);
        match &rep.failures[0] {
            PomdpFailure::InfoMeasurability { stage: 0, first, second, .. } => {
                assert_eq!(info_vector(first), info_vector(second));
            }
            other => panic!("{other:?}"),
        }
        assert!(recover_pomdp_policy(&pomdp, &lifted).is_err());
    }

    #[test]
    fn constant_observation_one_stage_optimum() {
        let pomdp = FinitePomdp::new(m1(), 1, vec![0, 0]).unwrap();
        let opt = pomdp_optimal_value(&pomdp, &CriterionSpec::n_stage(1), &[vec![0.5, 0.5]], 1000).unwrap();
        // Open loop: a costs (1 + 3)/2 = 2, b costs (0 + 2)/2 = 1.
        assert_eq!(opt[0].value, 1.0);
        assert_eq!(opt[0].evaluated, 2);
    }

    #[test]
    fn recovered_policy_reproduces_measure() {
        let pomdp = FinitePomdp::new(m1(), 1, vec![0, 0]).unwrap();
        let pi = Policy::markov(vec![vec![vec![0.25, 0.75]]; 3]);
        let m = pomdp_strategic_measure(&pomdp, &pi, &[0.5, 0.5], 3).unwrap();
        let rec = recover_pomdp_policy(&pomdp, &m).unwrap();
        let again = pomdp_strategic_measure(&pomdp, &rec, &[0.5, 0.5], 3).unwrap();
        for (h, p) in &m.support {
            assert!((again.support[h] - p).abs() < 1e-15);
        }
    }
}
