//! Games against nature: player 1 minimizes without seeing player 2's
//! actions, player 2 maximizes with full information.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{solve_matrix_game, MatrixGame};
use crate::measure::{check_initial, StrategicMeasure};
use crate::model::{dirac, mdp_of_minimax, CriterionKind, CriterionSpec, FiniteMdp, MinimaxModel};
use crate::policy::{
    policy_from_selection, reachable_histories, selection_count, MinimaxPolicyPair, Odometer, Policy, PolicyClass,
    Site,
};
use crate::prob::CMP_TOL;

/// Tolerance for the factored-kernel identity.
pub const FACTOR_TOL: f64 = 1e-10;

fn p1_dist<'a>(model: &MinimaxModel, pi1: &'a Policy, n: usize, info: &[usize]) -> Cow<'a, [f64]> {
    let x = *info.last().unwrap();
    pi1.action_dist(n, info, model.admissible1[x][0], model.num_actions1)
}

fn p2_dist<'a>(model: &MinimaxModel, pi2: &'a Policy, n: usize, history: &[usize]) -> Cow<'a, [f64]> {
    let x = *history.last().unwrap();
    pi2.action_dist(n, history, model.admissible2[x][0], model.num_actions2)
}

fn check_pair_mass(model: &MinimaxModel, x: usize, a1: usize, a2: usize, n: usize) -> Result<()> {
    if !model.admissible1[x].contains(&a1) {
        return Err(Error::InvalidPolicy(format!("player 1 puts mass on inadmissible action {a1} at stage {n}")));
    }
    if !model.admissible2[x].contains(&a2) {
        return Err(Error::InvalidPolicy(format!("player 2 puts mass on inadmissible action {a2} at stage {n}")));
    }
    Ok(())
}

/// Joint-history measure with stage kernels `μ¹_n(a¹|i_n) μ²_n(a²|h_n)`.
/// Actions are stored as joint ids of [`mdp_of_minimax`].
pub fn pair_strategic_measure(
    model: &MinimaxModel,
    pair: &MinimaxPolicyPair,
    p0: &[f64],
    horizon: usize,
) -> Result<StrategicMeasure> {
    pair.pi1.check_horizon(horizon)?;
    pair.pi2.check_horizon(horizon)?;
    let mdp = mdp_of_minimax(model);
    check_initial(&mdp, p0)?;
    let mut frontier: Vec<(Vec<usize>, f64)> =
        p0.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(x, &p)| (vec![x], p)).collect();
    for n in 0..horizon {
        let mut next = Vec::new();
        for (h, w) in frontier {
            let x = *h.last().unwrap();
            let info = model.info_of_history(&h);
            let d1 = p1_dist(model, &pair.pi1, n, &info);
            let d2 = p2_dist(model, &pair.pi2, n, &h);
            for (a1, &p1) in d1.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                for (a2, &p2) in d2.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                    check_pair_mass(model, x, a1, a2, n)?;
                    let a = model.joint(a1, a2);
                    let wa = w * p1 * p2;
                    if n + 1 == horizon {
                        let mut g = h.clone();
                        g.push(a);
                        next.push((g, wa));
                    } else {
                        for (y, &py) in model.q(x, a1, a2).iter().enumerate().filter(|(_, p)| **p > 0.0) {
                            let mut g = h.clone();
                            g.extend([a, y]);
                            next.push((g, wa * py));
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(StrategicMeasure {
        horizon,
        num_states: model.num_states,
        num_actions: model.num_joint_actions(),
        support: frontier.into_iter().collect(),
    })
}

/// Player 1's view of the game: from `x` under `a1`, `y` is a possible
/// successor iff some admissible `a2` reaches it. Its histories are exactly
/// the player-1 information vectors.
pub fn player1_support_mdp(model: &MinimaxModel) -> FiniteMdp {
    let mut m = FiniteMdp::empty(model.num_states, model.num_actions1);
    for x in 0..model.num_states {
        for &a1 in &model.admissible1[x] {
            let k = model.admissible2[x].len() as f64;
            let mut row = vec![0.0; model.num_states];
            for &a2 in &model.admissible2[x] {
                for (y, p) in model.q(x, a1, a2).iter().enumerate() {
                    row[y] += p / k;
                }
            }
            m.set(x, a1, row, 0.0);
        }
    }
    m
}

/// All nonrandomized player-1 history policies over information vectors
/// reachable from `x0` within `horizon` stages, in lexicographic order.
pub fn enumerate_player1(model: &MinimaxModel, x0: usize, horizon: usize, cap: u128) -> Result<Vec<Policy>> {
    crate::policy::enumerate_deterministic_from(&player1_support_mdp(model), PolicyClass::History, horizon, &[x0], cap)
}

/// All nonrandomized player-2 history policies over joint histories
/// reachable from `x0` within `horizon` stages, in lexicographic order.
pub fn enumerate_player2(model: &MinimaxModel, x0: usize, horizon: usize, cap: u128) -> Result<Vec<Policy>> {
    let mdp = mdp_of_minimax(model);
    let mut sites = Vec::new();
    for (n, hs) in reachable_histories(&mdp, &[x0], horizon).into_iter().enumerate() {
        for h in hs {
            let x = *h.last().unwrap();
            sites.push(Site { stage: n, key: h, choices: model.admissible2[x].clone() });
        }
    }
    let needed = selection_count(&sites);
    if needed > cap {
        return Err(Error::CapExceeded { needed, cap });
    }
    let radix = sites.iter().map(|s| s.choices.len()).collect();
    Ok(Odometer::new(radix)
        .map(|pick| policy_from_selection(PolicyClass::History, horizon, model.num_actions2, &sites, &pick))
        .collect())
}

/// Supports of the information-vector marginals `I_n`, `n = 0..=horizon`,
/// from `x0` under a policy pair.
pub fn info_supports(
    model: &MinimaxModel,
    pi1: &Policy,
    pi2: &Policy,
    x0: usize,
    horizon: usize,
) -> Result<Vec<BTreeSet<Vec<usize>>>> {
    let mut frontier = vec![vec![x0]];
    let mut out = vec![BTreeSet::from([vec![x0]])];
    for n in 0..horizon {
        let mut next = Vec::new();
        let mut infos = BTreeSet::new();
        for h in frontier {
            let x = *h.last().unwrap();
            let info = model.info_of_history(&h);
            let d1 = p1_dist(model, pi1, n, &info);
            let d2 = p2_dist(model, pi2, n, &h);
            for a1 in (0..model.num_actions1).filter(|&a| d1[a] > 0.0) {
                for a2 in (0..model.num_actions2).filter(|&a| d2[a] > 0.0) {
                    check_pair_mass(model, x, a1, a2, n)?;
                    for (y, _) in model.q(x, a1, a2).iter().enumerate().filter(|(_, p)| **p > 0.0) {
                        let mut g = h.clone();
                        g.extend([model.joint(a1, a2), y]);
                        let mut i = info.clone();
                        i.extend([a1, y]);
                        infos.insert(i);
                        next.push(g);
                    }
                }
            }
        }
        next.sort();
        next.dedup();
        frontier = next;
        out.push(infos);
    }
    Ok(out)
}

/// An information vector charged by one player-2 policy and not another.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbsContinuityWitness {
    pub stage: usize,
    pub initial_state: usize,
    pub info: Vec<usize>,
    /// Index (into the tested family) of a policy charging `info`.
    pub charged_by: usize,
    /// Index of a policy that gives `info` zero mass.
    pub missed_by: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbsContinuityReport {
    pub holds: bool,
    pub family_size: usize,
    pub witness: Option<AbsContinuityWitness>,
}

/// Mutual absolute continuity of the `I_n` marginals across a family of
/// player-2 policies, for every `n ≤ horizon` and every initial state. On
/// finite spaces this is equality of supports. Without `pi2_list` the
/// family is every deterministic player-2 history policy (per initial
/// state), whose supports generate those of all randomized policies.
pub fn check_abs_continuity(
    model: &MinimaxModel,
    pi1: &Policy,
    horizon: usize,
    pi2_list: Option<&[Policy]>,
    cap: u128,
) -> Result<AbsContinuityReport> {
    pi1.check_horizon(horizon)?;
    let mut family_size = 0;
    for x0 in 0..model.num_states {
        let owned;
        let family = match pi2_list {
            Some(l) => l,
            None => {
                owned = enumerate_player2(model, x0, horizon, cap)?;
                &owned[..]
            }
        };
        family_size = family_size.max(family.len());
        let supports: Vec<_> = family
            .par_iter()
            .map(|pi2| info_supports(model, pi1, pi2, x0, horizon))
            .collect::<Result<Vec<_>>>()?;
        let Some(base) = supports.first() else { continue };
        for (idx, s) in supports.iter().enumerate().skip(1) {
            for n in 0..=horizon {
                if s[n] == base[n] {
                    continue;
                }
                let witness = if let Some(i) = base[n].difference(&s[n]).next() {
                    AbsContinuityWitness { stage: n, initial_state: x0, info: i.clone(), charged_by: 0, missed_by: idx }
                } else {
                    let i = s[n].difference(&base[n]).next().unwrap();
                    AbsContinuityWitness { stage: n, initial_state: x0, info: i.clone(), charged_by: idx, missed_by: 0 }
                };
                return Ok(AbsContinuityReport { holds: false, family_size, witness: Some(witness) });
            }
        }
    }
    Ok(AbsContinuityReport { holds: true, family_size, witness: None })
}

/// Whether `q(y|x,a1,a2) = f(y,x,a1,a2) η(y|x,a1)` on the admissible graph
/// with `f > 0`. Such a factorization certifies absolute continuity: the
/// support of `q` does not depend on `a2`.
pub fn verify_factored_kernel<F, E>(model: &MinimaxModel, f: F, eta: E) -> bool
where
    F: Fn(usize, usize, usize, usize) -> f64,
    E: Fn(usize, usize) -> Vec<f64>,
{
    for x in 0..model.num_states {
        for &a1 in &model.admissible1[x] {
            let e = eta(x, a1);
            if e.len() != model.num_states || e.iter().any(|v| !(*v >= 0.0)) {
                return false;
            }
            for &a2 in &model.admissible2[x] {
                let q = model.q(x, a1, a2);
                for y in 0..model.num_states {
                    let fv = f(y, x, a1, a2);
                    if !(fv > 0.0) || !fv.is_finite() || (q[y] - fv * e[y]).abs() > FACTOR_TOL {
                        return false;
                    }
                }
            }
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq)]
pub enum HatSmFailure {
    /// `P'(a¹_n | i_n) ≠ P(a¹_n | i_n)` on the common support.
    Conditional { stage: usize, info: Vec<usize>, max_diff: f64 },
    /// `i_n` charged by `p'` but not by `p`.
    Support { stage: usize, info: Vec<usize> },
}

impl fmt::Display for HatSmFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Conditional { stage, info, max_diff } => {
                write!(f, "stage {stage}: player-1 conditional at {info:?} differs by {max_diff:e}")
            }
            Self::Support { stage, info } => write!(f, "stage {stage}: {info:?} charged by p' only"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HatSmReport {
    pub member: bool,
    pub failures: Vec<HatSmFailure>,
}

/// Per stage: `I_n`-marginal and joint law of `(i_n, a¹_n)`.
fn info_laws(model: &MinimaxModel, p: &StrategicMeasure) -> Vec<(BTreeMap<Vec<usize>, f64>, BTreeMap<Vec<usize>, Vec<f64>>)> {
    (0..p.horizon)
        .map(|n| {
            let mut marg: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
            let mut joint: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
            for (h, w) in &p.support {
                let info = model.info_of_history(&h[..2 * n + 1]);
                let a1 = model.split(h[2 * n + 1]).0;
                *marg.entry(info.clone()).or_default() += w;
                joint.entry(info).or_insert_with(|| vec![0.0; model.num_actions1])[a1] += w;
            }
            (marg, joint)
        })
        .collect()
}

/// `p' ∈ Ŝ_M(p)`: on every stage `n < H`, the `I_n`-marginal of `p'` is
/// supported inside that of `p`, and the conditional law of `a¹_n` given
/// `i_n` agrees wherever both measures charge `i_n`.
pub fn hat_sm_membership(model: &MinimaxModel, p: &StrategicMeasure, p_prime: &StrategicMeasure) -> Result<HatSmReport> {
    let dims = |m: &StrategicMeasure| (m.horizon, m.num_states, m.num_actions);
    if dims(p) != dims(p_prime) {
        return Err(Error::ModelMismatch(format!("shapes {:?} and {:?} differ", dims(p), dims(p_prime))));
    }
    if p.num_states != model.num_states || p.num_actions != model.num_joint_actions() {
        return Err(Error::ModelMismatch("measures are not over this game's histories".into()));
    }
    let (i0, i1) = (p.initial(), p_prime.initial());
    let dirac_at = |v: &[f64]| v.iter().position(|&w| (w - 1.0).abs() <= 1e-12);
    match (dirac_at(&i0), dirac_at(&i1)) {
        (Some(a), Some(b)) if a == b => {}
        _ => return Err(Error::ModelMismatch("measures must start from the same Dirac state".into())),
    }
    let laws = info_laws(model, p);
    let laws_prime = info_laws(model, p_prime);
    let mut failures = Vec::new();
    for n in 0..p.horizon {
        let (marg, joint) = &laws[n];
        let (marg_p, joint_p) = &laws_prime[n];
        for (info, &w_p) in marg_p {
            if w_p <= 0.0 {
                continue;
            }
            let Some(&w) = marg.get(info).filter(|w| **w > 0.0) else {
                failures.push(HatSmFailure::Support { stage: n, info: info.clone() });
                continue;
            };
            let max_diff = joint[info]
                .iter()
                .zip(&joint_p[info])
                .map(|(a, b)| (a / w - b / w_p).abs())
                .fold(0.0, f64::max);
            if max_diff > CMP_TOL {
                failures.push(HatSmFailure::Conditional { stage: n, info: info.clone(), max_diff });
            }
        }
    }
    Ok(HatSmReport { member: failures.is_empty(), failures })
}

/// Value of the stage game at `x` with payoff `cost_weight·c + β Σ_y q v`.
fn stage_game(model: &MinimaxModel, x: usize, v: &[f64], beta: f64, cost_weight: f64) -> MatrixGame {
    let payoff = model.admissible1[x]
        .iter()
        .map(|&a1| {
            model.admissible2[x]
                .iter()
                .map(|&a2| {
                    let future: f64 = model.q(x, a1, a2).iter().zip(v).map(|(p, w)| p * w).sum();
                    cost_weight * model.c(x, a1, a2) + beta * future
                })
                .collect()
        })
        .collect();
    MatrixGame { payoff }
}

/// `(Tv)(x) = min_{ν ∈ P(A1(x))} max_{a2 ∈ A2(x)} Σ_{a1} ν(a1) [c + β Σ_y q v]`.
pub fn minimax_operator(model: &MinimaxModel, v: &[f64], beta: f64) -> Vec<f64> {
    (0..model.num_states)
        .into_par_iter()
        .map(|x| solve_matrix_game(&stage_game(model, x, v, beta, 1.0)).value)
        .collect()
}

/// Player 1's optimal stage strategies against `v`.
pub fn greedy_strategies(model: &MinimaxModel, v: &[f64], beta: f64) -> Vec<Vec<f64>> {
    (0..model.num_states)
        .into_par_iter()
        .map(|x| {
            let sol = solve_matrix_game(&stage_game(model, x, v, beta, 1.0));
            let mut row = vec![0.0; model.num_actions1];
            for (&a1, p) in model.admissible1[x].iter().zip(sol.row_strategy) {
                row[a1] = p;
            }
            row
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// `‖T V − V‖∞` at the returned `V`.
    pub residual: f64,
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterates `T` from `v ≡ 0` until the sup-norm step is at most
/// `tol (1 − β) / (2β)`, which bounds the distance to the fixed point by
/// `tol`.
pub fn value_iteration(model: &MinimaxModel, beta: f64, tol: f64, max_iter: usize) -> Result<ValueIterationResult> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("discount {beta} outside [0, 1)")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let threshold = if beta == 0.0 { f64::INFINITY } else { tol * (1.0 - beta) / (2.0 * beta) };
    let mut v = vec![0.0; model.num_states];
    let mut last_step = f64::INFINITY;
    for it in 1..=max_iter.max(1) {
        let next = minimax_operator(model, &v, beta);
        last_step = sup_dist(&next, &v);
        v = next;
        if last_step <= threshold {
            let residual = sup_dist(&minimax_operator(model, &v, beta), &v);
            return Ok(ValueIterationResult { values: v, iterations: it, residual });
        }
    }
    Err(Error::NotConverged { iterations: max_iter.max(1), last_step, best: v })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OeKind {
    Equation,
    Inequality,
}

/// Residual of the cost-free average-cost relation
/// `g(x) = min_ν max_{a2} Σ ν(a1) Σ_y q(y|x,a1,a2) g(y)`; the inequality
/// form reports only violations of `g ≤ T₀ g`.
pub fn oe_residual(model: &MinimaxModel, g: &[f64], kind: OeKind) -> Result<Vec<f64>> {
    if g.len() != model.num_states || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("g must be a finite vector over states".into()));
    }
    let tg: Vec<f64> = (0..model.num_states)
        .into_par_iter()
        .map(|x| solve_matrix_game(&stage_game(model, x, g, 1.0, 0.0)).value)
        .collect();
    Ok(g.iter()
        .zip(&tg)
        .map(|(a, b)| match kind {
            OeKind::Equation => a - b,
            OeKind::Inequality => (a - b).max(0.0),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    /// Deterministic player-2 history policy over joint histories.
    pub policy: Policy,
    /// Achieved (maximal) criterion value from each initial state.
    pub values: Vec<f64>,
}

/// Player 2's best response to `pi1` for `NSTAGE` or truncated `DISCOUNTED`
/// at `horizon`, by backward induction over the joint-history tree. Ties go
/// to the lowest action id. The response attains the supremum exactly, so
/// it is `ε`-optimal for every `ε ≥ 0`.
pub fn best_response_p2(model: &MinimaxModel, pi1: &Policy, spec: &CriterionSpec, cap: u128) -> Result<BestResponse> {
    spec.validate()?;
    let discount = match spec.kind {
        CriterionKind::NStage => 1.0,
        CriterionKind::Discounted => spec.beta,
        k => return Err(Error::InvalidArgument(format!("best response needs NSTAGE or DISCOUNTED, got {k}"))),
    };
    let horizon = spec.horizon;
    pi1.check_horizon(horizon)?;
    let mdp = mdp_of_minimax(model);
    let all: Vec<usize> = (0..model.num_states).collect();
    let tree = reachable_histories(&mdp, &all, horizon);
    let size: u128 = tree.iter().map(|l| l.len() as u128).sum();
    if size > cap {
        return Err(Error::CapExceeded { needed: size, cap });
    }
    // Values of decision nodes at stage n + 1, keyed by history.
    let mut later: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut kernels = vec![BTreeMap::new(); horizon];
    for n in (0..horizon).rev() {
        let weight = discount.powi(n as i32);
        let mut here = BTreeMap::new();
        for h in &tree[n] {
            let x = *h.last().unwrap();
            let info = model.info_of_history(h);
            let d1 = p1_dist(model, pi1, n, &info);
            let mut best: Option<(usize, f64)> = None;
            for &a2 in &model.admissible2[x] {
                let mut val = 0.0;
                for (a1, &p1) in d1.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                    check_pair_mass(model, x, a1, a2, n)?;
                    let mut v = weight * model.c(x, a1, a2);
                    if n + 1 < horizon {
                        let a = model.joint(a1, a2);
                        for (y, &py) in model.q(x, a1, a2).iter().enumerate().filter(|(_, p)| **p > 0.0) {
                            let mut g = h.clone();
                            g.extend([a, y]);
                            v += py * later[&g];
                        }
                    }
                    val += p1 * v;
                }
                if best.map_or(true, |(_, b)| val > b + 1e-12) {
                    best = Some((a2, val));
                }
            }
            let (a2, val) = best.expect("nonempty admissible set");
            kernels[n].insert(h.clone(), dirac(model.num_actions2, a2));
            here.insert(h.clone(), val);
        }
        later = here;
    }
    let values = (0..model.num_states).map(|x| later[&vec![x]]).collect();
    let policy = Policy { class: PolicyClass::History, randomized: false, kernels };
    Ok(BestResponse { policy, values })
}

/// Expected criterion value of a pair from `p0` (NSTAGE or truncated
/// DISCOUNTED at `spec.horizon`).
pub fn pair_value(model: &MinimaxModel, pair: &MinimaxPolicyPair, p0: &[f64], spec: &CriterionSpec) -> Result<f64> {
    let discount = match spec.kind {
        CriterionKind::NStage => 1.0,
        CriterionKind::Discounted => spec.beta,
        k => return Err(Error::InvalidArgument(format!("pair evaluation needs NSTAGE or DISCOUNTED, got {k}"))),
    };
    let m = pair_strategic_measure(model, pair, p0, spec.horizon)?;
    Ok(m.expect(|h| {
        (0..spec.horizon)
            .map(|n| {
                let (a1, a2) = model.split(h[2 * n + 1]);
                discount.powi(n as i32) * model.c(h[2 * n], a1, a2)
            })
            .sum()
    }))
}
