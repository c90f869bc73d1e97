//! Cost and risk criteria on finite instances.
//!
//! Stationary and semi-stationary policies induce a finite chain whose
//! closed classes give infinite-horizon averages exactly. Every other policy
//! is evaluated over a finite horizon (`Truncated`) or by seeded simulation
//! (`MonteCarlo`), and results say which.

use std::borrow::Cow;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::Chain;
use crate::error::{Error, Result};
use crate::measure::{check_initial, strategic_measure};
use crate::model::{dirac, CriterionKind, CriterionSpec, FiniteMdp, PsiFn};
use crate::policy::{inverse_cdf_select, Policy, PolicyClass};

/// Values closer than this are merged into one atom.
pub const MERGE_TOL: f64 = 1e-12;
/// State-distribution recurrence tolerance for period detection.
pub const PERIOD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    ExactChain,
    Truncated,
    MonteCarlo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ExactChain => "exact-chain",
            Method::Truncated => "truncated",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationResult {
    pub value: f64,
    pub method: Method,
    pub horizon: Option<usize>,
    pub samples: Option<usize>,
    /// Zero for exact results; standard error for Monte Carlo; a tail bound
    /// for truncated discounted sums; `None` when no bound is known.
    pub error_bound: Option<f64>,
    /// Running values for `n = 1..=horizon` (truncated modes only).
    pub iterates: Vec<f64>,
}

impl EvaluationResult {
    fn exact(value: f64) -> Self {
        Self { value, method: Method::ExactChain, horizon: None, samples: None, error_bound: Some(0.0), iterates: vec![] }
    }

    fn truncated(value: f64, horizon: usize, iterates: Vec<f64>) -> Self {
        Self { value, method: Method::Truncated, horizon: Some(horizon), samples: None, error_bound: None, iterates }
    }
}

/// Finite-support law, atoms sorted by strictly increasing value.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDistribution {
    atoms: Vec<(f64, f64)>,
}

impl FiniteDistribution {
    /// Sorts, merges values within [`MERGE_TOL`] and drops zero weights.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|(v, p)| !v.is_finite() || !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument("atoms must be finite with nonnegative weight".into()));
        }
        atoms.retain(|(_, p)| *p > 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if (v - last.0).abs() <= MERGE_TOL => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if merged.is_empty() || (total - 1.0).abs() > MERGE_TOL.max(1e-12 * merged.len() as f64) {
            return Err(Error::InvalidArgument(format!("atom weights sum to {total}, not 1")));
        }
        Ok(Self { atoms: merged })
    }

    pub fn point(v: f64) -> Self {
        Self { atoms: vec![(v, 1.0)] }
    }

    /// Empirical law of equally weighted samples.
    pub fn empirical(samples: &[f64]) -> Result<Self> {
        let w = 1.0 / samples.len() as f64;
        let mut d = Self::new(samples.iter().map(|&v| (v, w)).collect::<Vec<_>>())
            .or_else(|_| Self::new_unchecked_total(samples.iter().map(|&v| (v, w)).collect()))?;
        let total: f64 = d.atoms.iter().map(|a| a.1).sum();
        for a in &mut d.atoms {
            a.1 /= total;
        }
        Ok(d)
    }

    fn new_unchecked_total(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        Self::new(atoms.into_iter().map(|(v, p)| (v, p / total)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.atoms.iter().take_while(|(v, _)| *v <= z).map(|a| a.1).sum()
    }

    pub fn min(&self) -> f64 {
        self.atoms[0].0
    }

    pub fn max(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].0
    }

    /// Law of `λ Z + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        Self::new(self.atoms.iter().map(|(v, p)| (scale * v + shift, *p)).collect())
    }
}

/// `z + α^{-1} E[(Z - z)_+]`.
pub fn cvar_objective(dist: &FiniteDistribution, alpha: f64, z: f64) -> f64 {
    z + dist.atoms.iter().map(|(v, p)| p * (v - z).max(0.0)).sum::<f64>() / alpha
}

/// `CVaR_α(Z) = min_z { z + α^{-1} E[(Z - z)_+] }`. The objective is convex
/// and piecewise linear with kinks at atoms, so the minimum is attained at
/// one of them.
pub fn cvar(dist: &FiniteDistribution, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(dist.atoms.iter().map(|(z, _)| cvar_objective(dist, alpha, *z)).fold(f64::INFINITY, f64::min))
}

/// `VaR_α(Z) = inf { z : P(Z ≤ z) ≥ 1 - α }`: the smallest atom whose CDF
/// reaches `1 - α`.
pub fn var(dist: &FiniteDistribution, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let level = 1.0 - alpha;
    let mut cum = 0.0;
    for (v, p) in &dist.atoms {
        cum += p;
        if cum >= level - MERGE_TOL {
            return Ok(*v);
        }
    }
    Ok(dist.max())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1]")))
    }
}

/// Kernel row for the compact `(x_0, x)` state of a non-history policy.
fn compact_row<'a>(model: &FiniteMdp, policy: &'a Policy, n: usize, x0: usize, x: usize) -> Cow<'a, [f64]> {
    let key: &[usize] = &match policy.class {
        PolicyClass::Markov | PolicyClass::Stationary => vec![x],
        PolicyClass::SemiMarkov | PolicyClass::SemiStationary => vec![x0, x],
        PolicyClass::History => unreachable!("history policies are evaluated through their measure"),
    };
    match policy.key_row(n, key) {
        Some(r) => Cow::Borrowed(r),
        None => Cow::Owned(dirac(model.num_actions, model.default_action(x))),
    }
}

/// `γ_k(x, a)` for `k < len`.
pub fn stage_marginals(model: &FiniteMdp, policy: &Policy, p0: &[f64], len: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    policy.check_horizon(len)?;
    check_initial(model, p0)?;
    if policy.class == PolicyClass::History {
        let m = strategic_measure(model, policy, p0, len)?;
        return Ok((0..len).map(|n| m.gamma(n)).collect());
    }
    let ns = model.num_states;
    let mut dist = vec![vec![0.0; ns]; ns];
    for (x, &p) in p0.iter().enumerate() {
        dist[x][x] = p;
    }
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let mut gamma = vec![vec![0.0; model.num_actions]; ns];
        let mut next = vec![vec![0.0; ns]; ns];
        for x0 in 0..ns {
            for x in 0..ns {
                let w = dist[x0][x];
                if w == 0.0 {
                    continue;
                }
                let row = compact_row(model, policy, n, x0, x);
                for (a, &pa) in row.iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    if !model.is_admissible(x, a) {
                        return Err(Error::InvalidPolicy(format!("inadmissible action {a} at state {x}")));
                    }
                    gamma[x][a] += w * pa;
                    for (y, &py) in model.q(x, a).iter().enumerate() {
                        next[x0][y] += w * pa * py;
                    }
                }
            }
        }
        out.push(gamma);
        dist = next;
    }
    Ok(out)
}

/// `E[c(x_k, a_k)]` for `k < len`.
pub fn expected_stage_costs(model: &FiniteMdp, policy: &Policy, p0: &[f64], len: usize) -> Result<Vec<f64>> {
    Ok(stage_marginals(model, policy, p0, len)?
        .iter()
        .map(|g| {
            let mut s = 0.0;
            for x in 0..model.num_states {
                for &a in &model.admissible[x] {
                    s += g[x][a] * model.c(x, a);
                }
            }
            s
        })
        .collect())
}

/// `J_{n,j} = E[Σ_{k<n} c(x_{k+j}, a_{k+j})]`; `J_n = J_{n,0}`.
pub fn n_stage_cost(model: &FiniteMdp, policy: &Policy, p0: &[f64], n: usize, j: usize) -> Result<f64> {
    let e = expected_stage_costs(model, policy, p0, j + n)?;
    Ok(e[j..].iter().sum())
}

/// Chain induced by a stationary-class policy. Semi-stationary policies run
/// on `(x_0, x)` pairs, one block per initial state.
#[derive(Clone, Debug)]
pub struct PolicyChain {
    pub chain: Chain,
    pub init: Vec<f64>,
}

pub fn policy_chain(model: &FiniteMdp, policy: &Policy, p0: &[f64]) -> Result<PolicyChain> {
    if !policy.class.is_stationary() {
        return Err(Error::NonStationaryExact);
    }
    check_initial(model, p0)?;
    let ns = model.num_states;
    let blocks = if policy.class == PolicyClass::SemiStationary { ns } else { 1 };
    let size = blocks * ns;
    let mut p = vec![vec![0.0; size]; size];
    let mut r = vec![0.0; size];
    for b in 0..blocks {
        for x in 0..ns {
            let i = b * ns + x;
            let row = compact_row(model, policy, 0, b, x);
            for (a, &pa) in row.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                if !model.is_admissible(x, a) {
                    return Err(Error::InvalidPolicy(format!("inadmissible action {a} at state {x}")));
                }
                r[i] += pa * model.c(x, a);
                for (y, &py) in model.q(x, a).iter().enumerate() {
                    p[i][b * ns + y] += pa * py;
                }
            }
        }
    }
    let mut init = vec![0.0; size];
    for (x, &w) in p0.iter().enumerate() {
        let b = if blocks == 1 { 0 } else { x };
        init[b * ns + x] = w;
    }
    Ok(PolicyChain { chain: Chain { p, r }, init })
}

impl PolicyChain {
    /// Closed classes reached from the initial law, with their averages and
    /// absorption probabilities.
    fn class_law(&self) -> Result<Vec<(f64, f64)>> {
        let classes = self.chain.closed_classes();
        let absorb = self.chain.absorption(&classes)?;
        let mut out = Vec::with_capacity(classes.len());
        for (c, class) in classes.iter().enumerate() {
            let mass: f64 = self.init.iter().enumerate().map(|(x, w)| w * absorb[x][c]).sum();
            if mass > 0.0 {
                out.push((self.chain.class_average(class)?, mass));
            }
        }
        Ok(out)
    }

    /// First `k` and period `p ≤ |chain|` with `‖π_{k+p} - π_k‖∞ ≤ tol`,
    /// searched up to `cap` steps.
    pub fn eventual_period(&self, cap: usize, tol: f64) -> Option<(usize, usize)> {
        let mut seq = vec![self.init.clone()];
        for k in 1..=cap {
            let next = self.chain.step(&seq[k - 1]);
            seq.push(next);
            for p in 1..=k.min(self.chain.len()) {
                let diff = seq[k].iter().zip(&seq[k - p]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if diff <= tol {
                    return Some((k - p, p));
                }
            }
        }
        None
    }
}

/// `J^(1)..J^(4)` for stationary-class policies from the chain structure.
pub fn average_cost(model: &FiniteMdp, policy: &Policy, p0: &[f64], kind: CriterionKind) -> Result<EvaluationResult> {
    if !kind.is_average() {
        return Err(Error::InvalidArgument(format!("{kind} is not an expected average-cost criterion")));
    }
    let pc = policy_chain(model, policy, p0)?;
    let value: f64 = pc.class_law()?.iter().map(|(v, w)| v * w).sum();
    match kind {
        CriterionKind::J1 | CriterionKind::J2 => Ok(EvaluationResult::exact(value)),
        _ => {
            // Windowed averages share the Cesàro limit once the marginals are
            // eventually periodic.
            let cap = 10 * pc.chain.len() * model.num_actions;
            if pc.eventual_period(cap, PERIOD_TOL).is_some() {
                Ok(EvaluationResult::exact(value))
            } else {
                average_cost_truncated(model, policy, p0, kind, cap)
            }
        }
    }
}

/// Finite-horizon stand-ins for `J^(i)`: `lim sup`/`lim inf` become the
/// max/min over the tail `n ∈ [⌈H/2⌉, H]`, and the windowed variants range
/// over windows `[j, j+n)` inside `[0, H)`.
pub fn average_cost_truncated(
    model: &FiniteMdp,
    policy: &Policy,
    p0: &[f64],
    kind: CriterionKind,
    horizon: usize,
) -> Result<EvaluationResult> {
    if !kind.is_average() {
        return Err(Error::InvalidArgument(format!("{kind} is not an expected average-cost criterion")));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let e = expected_stage_costs(model, policy, p0, horizon)?;
    let mut prefix = vec![0.0; horizon + 1];
    for k in 0..horizon {
        prefix[k + 1] = prefix[k] + e[k];
    }
    let iterates: Vec<f64> = (1..=horizon).map(|n| prefix[n] / n as f64).collect();
    let tail = horizon.div_ceil(2).max(1)..=horizon;
    let window = |n: usize, j: usize| (prefix[j + n] - prefix[j]) / n as f64;
    let value = match kind {
        CriterionKind::J1 => tail.map(|n| iterates[n - 1]).fold(f64::NEG_INFINITY, f64::max),
        CriterionKind::J2 => tail.map(|n| iterates[n - 1]).fold(f64::INFINITY, f64::min),
        CriterionKind::J3 => tail
            .flat_map(|n| (0..=horizon - n).map(move |j| (n, j)))
            .map(|(n, j)| window(n, j))
            .fold(f64::NEG_INFINITY, f64::max),
        _ => tail
            .flat_map(|n| (0..=horizon - n).map(move |j| (n, j)))
            .map(|(n, j)| window(n, j))
            .fold(f64::INFINITY, f64::min),
    };
    Ok(EvaluationResult::truncated(value, horizon, iterates))
}

/// Law of the pathwise average cost `c̄`: each path is absorbed into a
/// closed class and its average converges to that class's stationary
/// average.
pub fn pathwise_average_distribution(model: &FiniteMdp, policy: &Policy, p0: &[f64]) -> Result<FiniteDistribution> {
    let pc = policy_chain(model, policy, p0)?;
    FiniteDistribution::new(pc.class_law()?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { samples: 2000, horizon: 200, seed: 0 }
    }
}

const SHARDS: usize = 8;

fn sample_path_costs(model: &FiniteMdp, policy: &Policy, p0: &[f64], horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = inverse_cdf_select(p0, &rng.gen::<f64>());
    let mut h = vec![x];
    let mut costs = Vec::with_capacity(horizon);
    for n in 0..horizon {
        let row = policy.dist_in(model, n, &h);
        let a = inverse_cdf_select(&row, &rng.gen::<f64>());
        costs.push(model.c(x, a));
        x = inverse_cdf_select(model.q(x, a), &rng.gen::<f64>());
        if policy.class == PolicyClass::History {
            h.push(a);
            h.push(x);
        } else {
            // Only the first and last entries matter for non-history keys.
            h.truncate(1);
            h.push(a);
            h.push(x);
        }
    }
    costs
}

/// Pathwise statistic of one cost sequence: tail max/min of running
/// averages (`TJ1`/`TJ2`) or of windowed averages (`TJ3`/`TJ4`).
fn path_statistic(costs: &[f64], kind: CriterionKind) -> f64 {
    let h = costs.len();
    let mut prefix = vec![0.0; h + 1];
    for k in 0..h {
        prefix[k + 1] = prefix[k] + costs[k];
    }
    let tail = h.div_ceil(2).max(1)..=h;
    let win = |n: usize, j: usize| (prefix[j + n] - prefix[j]) / n as f64;
    match kind {
        CriterionKind::TJ2 => tail.map(|n| win(n, 0)).fold(f64::INFINITY, f64::min),
        CriterionKind::TJ3 => tail
            .flat_map(|n| (0..=h - n).map(move |j| (n, j)))
            .map(|(n, j)| win(n, j))
            .fold(f64::NEG_INFINITY, f64::max),
        CriterionKind::TJ4 => tail
            .flat_map(|n| (0..=h - n).map(move |j| (n, j)))
            .map(|(n, j)| win(n, j))
            .fold(f64::INFINITY, f64::min),
        _ => tail.map(|n| win(n, 0)).fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Per-path statistics from seeded simulation. Shard `s` uses stream `s` of
/// a ChaCha8 generator seeded with `cfg.seed`; results are concatenated in
/// shard order.
pub fn monte_carlo_statistics(
    model: &FiniteMdp,
    policy: &Policy,
    p0: &[f64],
    kind: CriterionKind,
    cfg: &MonteCarloConfig,
) -> Result<Vec<f64>> {
    check_initial(model, p0)?;
    policy.check_horizon(cfg.horizon)?;
    if cfg.samples == 0 || cfg.horizon == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs samples > 0 and horizon > 0".into()));
    }
    let per_shard = cfg.samples.div_ceil(SHARDS);
    let shards: Vec<Vec<f64>> = (0..SHARDS)
        .into_par_iter()
        .map(|s| {
            let count = per_shard.min(cfg.samples.saturating_sub(s * per_shard));
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s as u64);
            (0..count)
                .map(|_| path_statistic(&sample_path_costs(model, policy, p0, cfg.horizon, &mut rng), kind))
                .collect()
        })
        .collect();
    Ok(shards.concat())
}

pub fn monte_carlo_pathwise(
    model: &FiniteMdp,
    policy: &Policy,
    p0: &[f64],
    kind: CriterionKind,
    cfg: &MonteCarloConfig,
) -> Result<EvaluationResult> {
    let stats = monte_carlo_statistics(model, policy, p0, kind, cfg)?;
    let n = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / n;
    let var = if stats.len() > 1 { stats.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(EvaluationResult {
        value: mean,
        method: Method::MonteCarlo,
        horizon: Some(cfg.horizon),
        samples: Some(stats.len()),
        error_bound: Some((var / n).sqrt()),
        iterates: vec![],
    })
}

/// `T̃J^(1)..T̃J^(4)`: exact for stationary classes (the mean of the law of
/// `c̄`), Monte Carlo otherwise.
pub fn pathwise_criteria(
    model: &FiniteMdp,
    policy: &Policy,
    p0: &[f64],
    kind: CriterionKind,
    mc: &MonteCarloConfig,
) -> Result<EvaluationResult> {
    if !kind.is_pathwise() {
        return Err(Error::InvalidArgument(format!("{kind} is not a pathwise criterion")));
    }
    if policy.class.is_stationary() {
        Ok(EvaluationResult::exact(pathwise_average_distribution(model, policy, p0)?.mean()))
    } else {
        monte_carlo_pathwise(model, policy, p0, kind, mc)
    }
}

/// `E[ψ(Σ_{k<n} c(x_{j+k}, a_{j+k}))]` for `n = 1..=len`, by propagating the
/// joint law of (policy state, accumulated cost).
fn window_exp_moments(model: &FiniteMdp, policy: &Policy, p0: &[f64], beta: f64, j: usize, len: usize) -> Result<Vec<f64>> {
    policy.check_horizon(j + len)?;
    if policy.class == PolicyClass::History {
        let m = strategic_measure(model, policy, p0, j + len)?;
        let mut out = vec![0.0; len];
        for (h, p) in &m.support {
            let mut s = 0.0;
            for (k, slot) in out.iter_mut().enumerate() {
                let n = j + k;
                s += model.c(h[2 * n], h[2 * n + 1]);
                *slot += p * (beta * s).exp();
            }
        }
        return Ok(out);
    }
    let ns = model.num_states;
    let start = if j == 0 {
        let mut d = vec![vec![0.0; ns]; ns];
        for (x, &p) in p0.iter().enumerate() {
            d[x][x] = p;
        }
        d
    } else {
        compact_state_law(model, policy, p0, j)?
    };
    // law[x0][x]: atoms (accumulated cost, probability)
    let mut law: Vec<Vec<Vec<(f64, f64)>>> =
        start.iter().map(|row| row.iter().map(|&w| if w > 0.0 { vec![(0.0, w)] } else { vec![] }).collect()).collect();
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        let n = j + k;
        let mut next: Vec<Vec<Vec<(f64, f64)>>> = vec![vec![Vec::new(); ns]; ns];
        let mut moment = 0.0;
        for x0 in 0..ns {
            for x in 0..ns {
                if law[x0][x].is_empty() {
                    continue;
                }
                let row = compact_row(model, policy, n, x0, x);
                for (a, &pa) in row.iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    let c = model.c(x, a);
                    for &(s, w) in &law[x0][x] {
                        moment += w * pa * (beta * (s + c)).exp();
                    }
                    if k + 1 < len {
                        for (y, &py) in model.q(x, a).iter().enumerate() {
                            if py == 0.0 {
                                continue;
                            }
                            for &(s, w) in &law[x0][x] {
                                next[x0][y].push((s + c, w * pa * py));
                            }
                        }
                    }
                }
            }
        }
        for row in &mut next {
            for atoms in row.iter_mut() {
                merge_atoms(atoms);
            }
        }
        out.push(moment);
        law = next;
    }
    Ok(out)
}

fn merge_atoms(atoms: &mut Vec<(f64, f64)>) {
    if atoms.len() < 2 {
        return;
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for &(v, p) in atoms.iter() {
        match merged.last_mut() {
            Some(last) if (v - last.0).abs() <= MERGE_TOL => last.1 += p,
            _ => merged.push((v, p)),
        }
    }
    *atoms = merged;
}

/// Law of the compact state `(x_0, x_j)` at stage `j`.
fn compact_state_law(model: &FiniteMdp, policy: &Policy, p0: &[f64], j: usize) -> Result<Vec<Vec<f64>>> {
    let ns = model.num_states;
    let mut dist = vec![vec![0.0; ns]; ns];
    for (x, &p) in p0.iter().enumerate() {
        dist[x][x] = p;
    }
    for n in 0..j {
        let mut next = vec![vec![0.0; ns]; ns];
        for x0 in 0..ns {
            for x in 0..ns {
                let w = dist[x0][x];
                if w == 0.0 {
                    continue;
                }
                let row = compact_row(model, policy, n, x0, x);
                for (a, &pa) in row.iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    for (y, &py) in model.q(x, a).iter().enumerate() {
                        next[x0][y] += w * pa * py;
                    }
                }
            }
        }
        dist = next;
    }
    Ok(dist)
}

/// Certainty-equivalent average `n^{-1} ψ^{-1}(E ψ(Σ_{k<n} c))` at
/// `n = horizon`; `HatPsi` takes the sup over window starts `j ≤ horizon`.
/// Iterates hold the running values for `n = 1..=horizon`.
pub fn psi_criterion(
    model: &FiniteMdp,
    policy: &Policy,
    p0: &[f64],
    psi: PsiFn,
    beta: f64,
    kind: CriterionKind,
    horizon: usize,
) -> Result<EvaluationResult> {
    if !matches!(kind, CriterionKind::Psi | CriterionKind::HatPsi) {
        return Err(Error::InvalidArgument(format!("{kind} is not a ψ-criterion")));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    check_initial(model, p0)?;
    let starts = if kind == CriterionKind::HatPsi { horizon + 1 } else { 1 };
    let mut iterates = vec![f64::NEG_INFINITY; horizon];
    match psi {
        PsiFn::Identity => {
            // ψ^{-1} E ψ = E, so the iterates are windowed Cesàro averages.
            let e = expected_stage_costs(model, policy, p0, starts - 1 + horizon)?;
            let mut prefix = vec![0.0; e.len() + 1];
            for k in 0..e.len() {
                prefix[k + 1] = prefix[k] + e[k];
            }
            for j in 0..starts {
                for n in 1..=horizon {
                    let v = (prefix[j + n] - prefix[j]) / n as f64;
                    iterates[n - 1] = iterates[n - 1].max(v);
                }
            }
        }
        PsiFn::Exp => {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::InvalidArgument("exponential utility needs beta > 0".into()));
            }
            for j in 0..starts {
                let moments = window_exp_moments(model, policy, p0, beta, j, horizon)?;
                for (k, m) in moments.into_iter().enumerate() {
                    if !m.is_finite() {
                        return Err(Error::Overflow);
                    }
                    let v = m.ln() / (beta * (k + 1) as f64);
                    iterates[k] = iterates[k].max(v);
                }
            }
        }
    }
    Ok(EvaluationResult::truncated(iterates[horizon - 1], horizon, iterates))
}

/// Expected discounted cost: exact on the induced chain for stationary
/// classes, otherwise truncated at `horizon` with tail bound
/// `β^H max|c| / (1 - β)`.
pub fn discounted_cost(model: &FiniteMdp, policy: &Policy, p0: &[f64], beta: f64, horizon: usize) -> Result<EvaluationResult> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("discount {beta} outside [0, 1)")));
    }
    if policy.class.is_stationary() {
        let pc = policy_chain(model, policy, p0)?;
        let v = pc.chain.discounted_values(beta)?;
        return Ok(EvaluationResult::exact(pc.init.iter().zip(&v).map(|(w, v)| w * v).sum()));
    }
    let e = expected_stage_costs(model, policy, p0, horizon)?;
    let value = e.iter().enumerate().map(|(k, c)| beta.powi(k as i32) * c).sum();
    let max_c = model.cost.iter().flatten().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut r = EvaluationResult::truncated(value, horizon, vec![]);
    r.error_bound = Some(beta.powi(horizon as i32) * max_c / (1.0 - beta));
    Ok(r)
}

/// Evaluates any criterion, choosing exact, truncated or Monte Carlo mode
/// from the policy class.
pub fn evaluate(
    model: &FiniteMdp,
    policy: &Policy,
    p0: &[f64],
    spec: &CriterionSpec,
    mc: &MonteCarloConfig,
) -> Result<EvaluationResult> {
    spec.validate()?;
    let stationary = policy.class.is_stationary();
    match spec.kind {
        CriterionKind::NStage => {
            let mut r = EvaluationResult::exact(n_stage_cost(model, policy, p0, spec.horizon, 0)?);
            r.horizon = Some(spec.horizon);
            Ok(r)
        }
        CriterionKind::Discounted => discounted_cost(model, policy, p0, spec.beta, spec.horizon),
        k if k.is_average() => {
            if stationary {
                average_cost(model, policy, p0, k)
            } else {
                average_cost_truncated(model, policy, p0, k, spec.horizon)
            }
        }
        k if k.is_pathwise() => pathwise_criteria(model, policy, p0, k, mc),
        CriterionKind::Psi | CriterionKind::HatPsi => {
            psi_criterion(model, policy, p0, spec.psi, spec.beta, spec.kind, spec.horizon)
        }
        CriterionKind::Cvar | CriterionKind::Var => {
            let risk = |d: &FiniteDistribution| {
                if spec.kind == CriterionKind::Cvar {
                    cvar(d, spec.alpha)
                } else {
                    var(d, spec.alpha)
                }
            };
            if stationary {
                Ok(EvaluationResult::exact(risk(&pathwise_average_distribution(model, policy, p0)?)?))
            } else {
                let stats = monte_carlo_statistics(model, policy, p0, CriterionKind::TJ1, mc)?;
                let d = FiniteDistribution::empirical(&stats)?;
                Ok(EvaluationResult {
                    value: risk(&d)?,
                    method: Method::MonteCarlo,
                    horizon: Some(mc.horizon),
                    samples: Some(stats.len()),
                    error_bound: None,
                    iterates: vec![],
                })
            }
        }
        _ => unreachable!(),
    }
}
