//! Policy classes, deterministic enumeration and shifted policies.
//!
//! A [`Policy`] is a tagged family of stochastic kernels. The class fixes
//! which part of the observable history a kernel conditions on:
//!
//! | class           | kernels           | key                      |
//! |-----------------|-------------------|--------------------------|
//! | History         | one per stage     | full history `h_n`       |
//! | Markov          | one per stage     | `[x_n]`                  |
//! | SemiMarkov      | one per stage     | `[x_0, x_n]`             |
//! | Stationary      | one               | `[x_n]`                  |
//! | SemiStationary  | one               | `[x_0, x_n]`             |
//!
//! Histories are flat id sequences `(x_0, a_0, ..., x_n)`. The same type
//! serves partially observed problems (keys over information vectors) and
//! both players of a minimax model (keys over each player's own view).
//! Keys that are missing from a kernel fall back to the lowest admissible
//! action.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{dirac, FiniteMdp};
use crate::prob::{is_point_mass, row_sum, Prob, ROW_TOL};

/// Default cap on enumerated candidates.
pub const DEFAULT_CAP: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyClass {
    History,
    Markov,
    SemiMarkov,
    Stationary,
    SemiStationary,
}

impl PolicyClass {
    pub const ALL: [PolicyClass; 5] =
        [Self::History, Self::Markov, Self::SemiMarkov, Self::Stationary, Self::SemiStationary];

    /// One kernel shared by every stage.
    pub fn is_stationary(self) -> bool {
        matches!(self, Self::Stationary | Self::SemiStationary)
    }

    pub fn is_semi(self) -> bool {
        matches!(self, Self::SemiMarkov | Self::SemiStationary)
    }

    /// Conditioning key of a history `(x_0, a_0, ..., x_n)`.
    pub fn key(self, history: &[usize]) -> Vec<usize> {
        let first = history[0];
        let last = *history.last().expect("empty history");
        match self {
            Self::History => history.to_vec(),
            Self::Markov | Self::Stationary => vec![last],
            Self::SemiMarkov | Self::SemiStationary => vec![first, last],
        }
    }

    /// Kernel index used at stage `n`.
    pub fn kernel_index(self, n: usize) -> usize {
        if self.is_stationary() {
            0
        } else {
            n
        }
    }

    /// Stagewise counterpart of a stationary class.
    pub fn stagewise(self) -> Self {
        match self {
            Self::Stationary => Self::Markov,
            Self::SemiStationary => Self::SemiMarkov,
            c => c,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::History => "History",
            Self::Markov => "Markov",
            Self::SemiMarkov => "SemiMarkov",
            Self::Stationary => "Stationary",
            Self::SemiStationary => "SemiStationary",
        }
    }
}

impl fmt::Display for PolicyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().to_lowercase() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy class {s:?}")))
    }
}

/// Conditioning key to action distribution (dense over all action ids).
pub type Kernel<P> = BTreeMap<Vec<usize>, Vec<P>>;

#[derive(Clone, Debug, PartialEq)]
pub struct Policy<P: Prob = f64> {
    pub class: PolicyClass,
    pub randomized: bool,
    /// Per-stage kernels; exactly one for stationary classes.
    pub kernels: Vec<Kernel<P>>,
}

/// Policy over information vectors `(z_0, a_0, ..., z_n)` of a POMDP.
pub type PomdpPolicy = Policy<f64>;

impl<P: Prob> Policy<P> {
    pub fn new(class: PolicyClass, randomized: bool, kernels: Vec<Kernel<P>>) -> Result<Self> {
        if class.is_stationary() && kernels.len() != 1 {
            return Err(Error::InvalidPolicy(format!("{class} policies carry exactly one kernel")));
        }
        Ok(Self { class, randomized, kernels })
    }

    /// Stationary policy from per-state rows.
    pub fn stationary(rows: Vec<Vec<P>>) -> Self {
        let kernel = rows.into_iter().enumerate().map(|(x, r)| (vec![x], r)).collect();
        let mut p = Self { class: PolicyClass::Stationary, randomized: true, kernels: vec![kernel] };
        p.randomized = !p.all_point_masses();
        p
    }

    /// Deterministic stationary policy `x -> actions[x]`.
    pub fn deterministic_stationary(actions: &[usize], num_actions: usize) -> Self {
        Self::stationary(actions.iter().map(|&a| dirac(num_actions, a)).collect())
    }

    /// Markov policy from per-stage, per-state rows.
    pub fn markov(stages: Vec<Vec<Vec<P>>>) -> Self {
        let kernels = stages
            .into_iter()
            .map(|rows| rows.into_iter().enumerate().map(|(x, r)| (vec![x], r)).collect())
            .collect();
        let mut p = Self { class: PolicyClass::Markov, randomized: true, kernels };
        p.randomized = !p.all_point_masses();
        p
    }

    /// Number of stages with kernels; `None` for stationary classes.
    pub fn horizon(&self) -> Option<usize> {
        if self.class.is_stationary() {
            None
        } else {
            Some(self.kernels.len())
        }
    }

    /// Errors if the policy cannot act for `h` stages.
    pub fn check_horizon(&self, h: usize) -> Result<()> {
        match self.horizon() {
            Some(avail) if avail < h => Err(Error::HorizonMismatch { requested: h, available: avail }),
            _ => Ok(()),
        }
    }

    /// Stored kernel row for stage `n` and observable history, if any.
    pub fn row(&self, n: usize, history: &[usize]) -> Option<&[P]> {
        let k = self.kernels.get(self.class.kernel_index(n))?;
        k.get(&self.class.key(history)).map(Vec::as_slice)
    }

    /// Stored kernel row for stage `n` and an already-formed key.
    pub fn key_row(&self, n: usize, key: &[usize]) -> Option<&[P]> {
        self.kernels.get(self.class.kernel_index(n))?.get(key).map(Vec::as_slice)
    }

    /// Kernel row with the lowest-admissible-action fallback.
    pub fn action_dist(&self, n: usize, history: &[usize], fallback: usize, num_actions: usize) -> Cow<'_, [P]> {
        match self.row(n, history) {
            Some(r) => Cow::Borrowed(r),
            None => Cow::Owned(dirac(num_actions, fallback)),
        }
    }

    /// Action distribution at stage `n` for an MDP history.
    pub fn dist_in<'a>(&'a self, model: &FiniteMdp<impl Prob>, n: usize, history: &[usize]) -> Cow<'a, [P]> {
        let x = *history.last().expect("empty history");
        self.action_dist(n, history, model.default_action(x), model.num_actions)
    }

    pub fn all_point_masses(&self) -> bool {
        self.kernels.iter().all(|k| k.values().all(|r| is_point_mass(r, ROW_TOL)))
    }

    /// Checks row sums, the control constraint and the randomized flag.
    /// `admissible(stage, key)` returns the admissible actions for a key.
    pub fn validate_with<F>(&self, num_actions: usize, admissible: F) -> Result<()>
    where
        F: Fn(usize, &[usize]) -> Vec<usize>,
    {
        if self.class.is_stationary() && self.kernels.len() != 1 {
            return Err(Error::InvalidPolicy(format!("{} policies carry exactly one kernel", self.class)));
        }
        for (n, kernel) in self.kernels.iter().enumerate() {
            for (key, row) in kernel {
                let expected_len = match self.class {
                    PolicyClass::History => key.len() == 2 * n + 1,
                    PolicyClass::Markov | PolicyClass::Stationary => key.len() == 1,
                    _ => key.len() == 2,
                };
                if !expected_len {
                    return Err(Error::InvalidPolicy(format!("key {key:?} does not fit class {}", self.class)));
                }
                if row.len() != num_actions {
                    return Err(Error::InvalidPolicy(format!("row for {key:?} has {} entries", row.len())));
                }
                if row.iter().any(|p| *p < P::zero()) {
                    return Err(Error::InvalidPolicy(format!("negative probability in row {key:?}")));
                }
                if !row_sum(row).is_unit(ROW_TOL) {
                    return Err(Error::InvalidPolicy(format!("row for {key:?} does not sum to 1")));
                }
                let adm = admissible(n, key);
                if let Some(a) = (0..num_actions).find(|a| row[*a].is_positive() && !adm.contains(a)) {
                    return Err(Error::InvalidPolicy(format!(
                        "row for {key:?} puts mass on inadmissible action {a}"
                    )));
                }
                if !self.randomized && !is_point_mass(row, ROW_TOL) {
                    return Err(Error::InvalidPolicy(format!("nonrandomized policy has mixed row at {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, model: &FiniteMdp<impl Prob>) -> Result<()> {
        self.validate_with(model.num_actions, |_, key| {
            let x = *key.last().unwrap();
            if x < model.num_states {
                model.admissible[x].clone()
            } else {
                Vec::new()
            }
        })
    }

    pub fn to_f64(&self) -> Policy<f64> {
        Policy {
            class: self.class,
            randomized: self.randomized,
            kernels: self
                .kernels
                .iter()
                .map(|k| k.iter().map(|(key, r)| (key.clone(), r.iter().map(Prob::to_f64).collect())).collect())
                .collect(),
        }
    }
}

/// One decision point: a kernel index, a conditioning key and the actions
/// available there.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Site {
    pub stage: usize,
    pub key: Vec<usize>,
    pub choices: Vec<usize>,
}

/// Number of deterministic selections over `sites`, saturating.
pub fn selection_count(sites: &[Site]) -> u128 {
    sites.iter().fold(1u128, |acc, s| acc.saturating_mul(s.choices.len() as u128))
}

/// Builds a nonrandomized policy picking `sites[i].choices[pick[i]]`.
pub fn policy_from_selection<P: Prob>(
    class: PolicyClass,
    horizon: usize,
    num_actions: usize,
    sites: &[Site],
    pick: &[usize],
) -> Policy<P> {
    let stages = if class.is_stationary() { 1 } else { horizon };
    let mut kernels = vec![Kernel::new(); stages];
    for (site, &i) in sites.iter().zip(pick) {
        kernels[site.stage].insert(site.key.clone(), dirac(num_actions, site.choices[i]));
    }
    Policy { class, randomized: false, kernels }
}

/// Iterates mixed-radix counters in lexicographic order (first digit most
/// significant).
pub(crate) struct Odometer {
    radix: Vec<usize>,
    digits: Vec<usize>,
    done: bool,
}

impl Odometer {
    pub(crate) fn new(radix: Vec<usize>) -> Self {
        let done = radix.iter().any(|&r| r == 0);
        Self { digits: vec![0; radix.len()], radix, done }
    }
}

impl Iterator for Odometer {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.digits.clone();
        let mut i = self.radix.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.digits[i] += 1;
            if self.digits[i] < self.radix[i] {
                break;
            }
            self.digits[i] = 0;
        }
        Some(out)
    }
}

/// States reachable from `init` in exactly `n` steps, for `n < horizon`.
pub fn reachable_by_stage<P: Prob>(model: &FiniteMdp<P>, init: &[usize], horizon: usize) -> Vec<BTreeSet<usize>> {
    let mut out = Vec::with_capacity(horizon);
    let mut cur: BTreeSet<usize> = init.iter().copied().collect();
    for _ in 0..horizon {
        let mut next = BTreeSet::new();
        for &x in &cur {
            for &a in &model.admissible[x] {
                next.extend(model.successors(x, a).map(|(y, _)| y));
            }
        }
        out.push(cur);
        cur = next;
    }
    out
}

/// States reachable from `x0` in any number of steps (including zero).
pub fn reachable_closure<P: Prob>(model: &FiniteMdp<P>, x0: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([x0]);
    let mut stack = vec![x0];
    while let Some(x) = stack.pop() {
        for &a in &model.admissible[x] {
            for (y, _) in model.successors(x, a) {
                if seen.insert(y) {
                    stack.push(y);
                }
            }
        }
    }
    seen
}

/// Histories `(x_0, a_0, ..., x_n)` reachable from `init` under some
/// admissible play, grouped by stage `n < horizon`.
pub fn reachable_histories<P: Prob>(model: &FiniteMdp<P>, init: &[usize], horizon: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(horizon);
    let mut cur: Vec<Vec<usize>> = init.iter().map(|&x| vec![x]).collect();
    cur.sort();
    cur.dedup();
    for n in 0..horizon {
        let mut next = Vec::new();
        if n + 1 < horizon {
            for h in &cur {
                let x = *h.last().unwrap();
                for &a in &model.admissible[x] {
                    for (y, _) in model.successors(x, a) {
                        let mut g = h.clone();
                        g.push(a);
                        g.push(y);
                        next.push(g);
                    }
                }
            }
        }
        out.push(cur);
        cur = next;
    }
    out
}

/// Decision sites of `class` reachable from `init` within `horizon` stages
/// (stationary classes use the full reachable closure), in canonical order.
pub fn decision_sites<P: Prob>(model: &FiniteMdp<P>, class: PolicyClass, horizon: usize, init: &[usize]) -> Vec<Site> {
    let choices = |x: usize| model.admissible[x].clone();
    let mut sites = Vec::new();
    match class {
        PolicyClass::History => {
            for (n, hs) in reachable_histories(model, init, horizon).into_iter().enumerate() {
                for h in hs {
                    let x = *h.last().unwrap();
                    sites.push(Site { stage: n, key: h, choices: choices(x) });
                }
            }
        }
        PolicyClass::Markov => {
            for (n, xs) in reachable_by_stage(model, init, horizon).into_iter().enumerate() {
                for x in xs {
                    sites.push(Site { stage: n, key: vec![x], choices: choices(x) });
                }
            }
        }
        PolicyClass::SemiMarkov => {
            let mut starts: Vec<usize> = init.to_vec();
            starts.sort_unstable();
            starts.dedup();
            let per_start: Vec<_> = starts.iter().map(|&x0| reachable_by_stage(model, &[x0], horizon)).collect();
            for n in 0..horizon {
                for (i, &x0) in starts.iter().enumerate() {
                    for &x in &per_start[i][n] {
                        sites.push(Site { stage: n, key: vec![x0, x], choices: choices(x) });
                    }
                }
            }
        }
        PolicyClass::Stationary => {
            let mut all = BTreeSet::new();
            for &x0 in init {
                all.extend(reachable_closure(model, x0));
            }
            for x in all {
                sites.push(Site { stage: 0, key: vec![x], choices: choices(x) });
            }
        }
        PolicyClass::SemiStationary => {
            let mut starts: Vec<usize> = init.to_vec();
            starts.sort_unstable();
            starts.dedup();
            for x0 in starts {
                for x in reachable_closure(model, x0) {
                    sites.push(Site { stage: 0, key: vec![x0, x], choices: choices(x) });
                }
            }
        }
    }
    sites
}

/// All nonrandomized policies of `class` over decision sites reachable from
/// any state, in lexicographic order of (site, action id).
pub fn enumerate_deterministic<P: Prob>(
    model: &FiniteMdp<P>,
    class: PolicyClass,
    horizon: usize,
    cap: u128,
) -> Result<Vec<Policy<P>>> {
    let init: Vec<usize> = (0..model.num_states).collect();
    enumerate_deterministic_from(model, class, horizon, &init, cap)
}

/// As [`enumerate_deterministic`], restricted to sites reachable from `init`.
pub fn enumerate_deterministic_from<P: Prob>(
    model: &FiniteMdp<P>,
    class: PolicyClass,
    horizon: usize,
    init: &[usize],
    cap: u128,
) -> Result<Vec<Policy<P>>> {
    let sites = decision_sites(model, class, horizon, init);
    let needed = selection_count(&sites);
    if needed > cap {
        return Err(Error::CapExceeded { needed, cap });
    }
    let radix = sites.iter().map(|s| s.choices.len()).collect();
    Ok(Odometer::new(radix)
        .map(|pick| policy_from_selection(class, horizon, model.num_actions, &sites, &pick))
        .collect())
}

/// Inverse-CDF selection: the action whose half-open cumulative interval
/// `[c_{k-1}, c_k)` contains `theta`; `theta = 1` picks the last action
/// carrying mass.
pub fn inverse_cdf_select<P: Prob>(row: &[P], theta: &P) -> usize {
    let mut cum = P::zero();
    let mut last = 0;
    for (a, p) in row.iter().enumerate() {
        if !p.is_positive() {
            continue;
        }
        cum = cum + p.clone();
        last = a;
        if *theta < cum {
            return a;
        }
    }
    last
}

/// The interval of `theta` values that [`inverse_cdf_select`] maps to `a`.
pub fn selection_interval<P: Prob>(row: &[P], a: usize) -> (P, P) {
    let lo = row[..a].iter().cloned().fold(P::zero(), |s, p| s + p);
    let hi = lo.clone() + row[a].clone();
    (lo, hi)
}

/// Nonrandomized policy `f_n(θ_n, ·)` realizing each kernel row by inverse
/// CDF at parameter `thetas[n]` (stationary classes use `thetas[0]`).
pub fn uniform_parameter_policy<P: Prob>(policy: &Policy<P>, thetas: &[P]) -> Result<Policy<P>> {
    if thetas.len() < policy.kernels.len() {
        return Err(Error::InvalidArgument(format!(
            "need {} parameters, got {}",
            policy.kernels.len(),
            thetas.len()
        )));
    }
    if thetas.iter().any(|t| *t < P::zero() || *t > P::one()) {
        return Err(Error::InvalidArgument("parameters must lie in [0, 1]".into()));
    }
    let kernels = policy
        .kernels
        .iter()
        .zip(thetas)
        .map(|(k, t)| {
            k.iter()
                .map(|(key, row)| (key.clone(), dirac(row.len(), inverse_cdf_select(row, t))))
                .collect()
        })
        .collect();
    Ok(Policy { class: policy.class, randomized: false, kernels })
}

/// Player 1 conditions on `(x_0, a1_0, ..., x_n)`; player 2 on the full
/// joint history `(x_0, a_0, ..., x_n)` with joint action ids.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimaxPolicyPair {
    pub pi1: Policy<f64>,
    pub pi2: Policy<f64>,
}

/// Shifted policy `μ^s_n(.|h) = μ_{n+1}(.|prefix, h)` for a two-element
/// prefix `(x̃_0, ã_0)`.
pub fn shift<P: Prob>(policy: &Policy<P>, prefix: [usize; 2]) -> Policy<P> {
    let x0 = prefix[0];
    match policy.class {
        PolicyClass::Stationary => policy.clone(),
        PolicyClass::SemiStationary => {
            let kernel = policy.kernels[0]
                .iter()
                .filter(|(k, _)| k[0] == x0)
                .map(|(k, r)| (vec![k[1]], r.clone()))
                .collect();
            Policy { class: PolicyClass::Stationary, randomized: policy.randomized, kernels: vec![kernel] }
        }
        PolicyClass::Markov => Policy {
            class: PolicyClass::Markov,
            randomized: policy.randomized,
            kernels: policy.kernels.iter().skip(1).cloned().collect(),
        },
        PolicyClass::SemiMarkov => Policy {
            class: PolicyClass::Markov,
            randomized: policy.randomized,
            kernels: policy
                .kernels
                .iter()
                .skip(1)
                .map(|k| k.iter().filter(|(k, _)| k[0] == x0).map(|(k, r)| (vec![k[1]], r.clone())).collect())
                .collect(),
        },
        PolicyClass::History => Policy {
            class: PolicyClass::History,
            randomized: policy.randomized,
            kernels: policy
                .kernels
                .iter()
                .skip(1)
                .map(|k| {
                    k.iter()
                        .filter(|(k, _)| k.len() >= 3 && k[..2] == prefix)
                        .map(|(k, r)| (k[2..].to_vec(), r.clone()))
                        .collect()
                })
                .collect(),
        },
    }
}

/// Shifts both players: player 1 by `(x̃_0, ã1_0)`, player 2 by `(x̃_0, ã_0)`.
pub fn shift_policy(pair: &MinimaxPolicyPair, prefix1: [usize; 2], prefix2: [usize; 2]) -> MinimaxPolicyPair {
    MinimaxPolicyPair { pi1: shift(&pair.pi1, prefix1), pi2: shift(&pair.pi2, prefix2) }
}
