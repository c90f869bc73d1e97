//! Finite-horizon strategic measures.
//!
//! A [`StrategicMeasure`] is the law of the truncated history
//! `(x_0, a_0, ..., x_{H-1}, a_{H-1})` stored sparsely: only histories with
//! positive probability are kept. Every "almost surely" condition below is
//! therefore checked on supported histories only, and recovered kernels use
//! the lowest-admissible-action fallback everywhere else.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::FiniteMdp;
use crate::policy::{policy_from_selection, selection_count, Kernel, Odometer, Policy, PolicyClass, Site};
use crate::prob::{is_point_mass, max_abs_diff, row_sum, rows_approx_eq, Prob, CMP_TOL, ROW_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct StrategicMeasure<P: Prob = f64> {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    /// Full histories of length `2 * horizon` with positive probability.
    pub support: BTreeMap<Vec<usize>, P>,
}

impl<P: Prob> StrategicMeasure<P> {
    pub fn total(&self) -> P {
        self.support.values().cloned().fold(P::zero(), |a, b| a + b)
    }

    /// Marginal of the prefixes of length `len`.
    pub fn prefix_marginal(&self, len: usize) -> BTreeMap<Vec<usize>, P> {
        let mut out: BTreeMap<Vec<usize>, P> = BTreeMap::new();
        for (h, p) in &self.support {
            let key = h[..len].to_vec();
            match out.get_mut(&key) {
                Some(v) => *v = v.clone() + p.clone(),
                None => {
                    out.insert(key, p.clone());
                }
            }
        }
        out
    }

    /// Law of `x_0`.
    pub fn initial(&self) -> Vec<P> {
        let mut p0 = vec![P::zero(); self.num_states];
        for (h, p) in &self.support {
            p0[h[0]] = p0[h[0]].clone() + p.clone();
        }
        p0
    }

    /// `γ_n(p)`: law of `(x_n, a_n)` as a `[x][a]` table.
    pub fn gamma(&self, n: usize) -> Vec<Vec<P>> {
        let mut g = vec![vec![P::zero(); self.num_actions]; self.num_states];
        for (h, p) in &self.support {
            let (x, a) = (h[2 * n], h[2 * n + 1]);
            g[x][a] = g[x][a].clone() + p.clone();
        }
        g
    }

    /// Largest probability difference over the union of supports.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for (h, p) in &self.support {
            let q = other.support.get(h).cloned().unwrap_or_else(P::zero);
            worst = worst.max((p.clone() - q).to_f64().abs());
        }
        for (h, q) in &other.support {
            if !self.support.contains_key(h) {
                worst = worst.max(q.to_f64().abs());
            }
        }
        worst
    }

    /// Equal within `tol` (exactly, for rationals).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.horizon != other.horizon {
            return false;
        }
        if P::EXACT {
            return self.support == other.support;
        }
        self.max_abs_diff(other) <= tol
    }

    pub fn to_f64(&self) -> StrategicMeasure<f64> {
        StrategicMeasure {
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions,
            support: self.support.iter().map(|(h, p)| (h.clone(), p.to_f64())).collect(),
        }
    }

    /// Expectation of a function of the full history.
    pub fn expect(&self, f: impl Fn(&[usize]) -> f64) -> f64 {
        self.support.iter().map(|(h, p)| p.to_f64() * f(h)).sum()
    }
}

/// Convex combination of measures on a common history space.
pub fn mix_measures<P: Prob>(parts: &[(&StrategicMeasure<P>, P)]) -> StrategicMeasure<P> {
    let first = parts.first().expect("empty mixture").0;
    let mut support: BTreeMap<Vec<usize>, P> = BTreeMap::new();
    for (m, w) in parts {
        for (h, p) in &m.support {
            let add = w.clone() * p.clone();
            match support.get_mut(h) {
                Some(v) => *v = v.clone() + add,
                None => {
                    support.insert(h.clone(), add);
                }
            }
        }
    }
    support.retain(|_, p| p.is_positive());
    StrategicMeasure { horizon: first.horizon, num_states: first.num_states, num_actions: first.num_actions, support }
}

/// `ρ_{p0}[π]` truncated to `horizon` stages:
/// `p(h) = p0(x_0) Π_k μ_k(a_k|h_k) Π_k q(x_{k+1}|x_k, a_k)`.
pub fn strategic_measure<P: Prob>(
    model: &FiniteMdp<P>,
    policy: &Policy<P>,
    p0: &[P],
    horizon: usize,
) -> Result<StrategicMeasure<P>> {
    policy.check_horizon(horizon)?;
    check_initial(model, p0)?;
    let mut frontier: Vec<(Vec<usize>, P)> = p0
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_positive())
        .map(|(x, p)| (vec![x], p.clone()))
        .collect();
    for n in 0..horizon {
        let mut next = Vec::new();
        for (h, w) in frontier {
            let x = *h.last().unwrap();
            let dist = policy.dist_in(model, n, &h);
            for (a, pa) in dist.iter().enumerate() {
                if !pa.is_positive() {
                    continue;
                }
                if !model.is_admissible(x, a) {
                    return Err(Error::InvalidPolicy(format!(
                        "stage {n} history {h:?} puts mass on inadmissible action {a}"
                    )));
                }
                let wa = w.clone() * pa.clone();
                if n + 1 == horizon {
                    let mut g = h.clone();
                    g.push(a);
                    next.push((g, wa));
                } else {
                    for (y, py) in model.successors(x, a) {
                        let mut g = h.clone();
                        g.push(a);
                        g.push(y);
                        next.push((g, wa.clone() * py.clone()));
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(StrategicMeasure {
        horizon,
        num_states: model.num_states,
        num_actions: model.num_actions,
        support: frontier.into_iter().filter(|(_, p)| p.is_positive()).collect(),
    })
}

pub(crate) fn check_initial<P: Prob>(model: &FiniteMdp<P>, p0: &[P]) -> Result<()> {
    if p0.len() != model.num_states {
        return Err(Error::InvalidArgument(format!(
            "initial distribution has {} entries, model has {} states",
            p0.len(),
            model.num_states
        )));
    }
    if p0.iter().any(|p| *p < P::zero()) || !row_sum(p0).is_unit(ROW_TOL) {
        return Err(Error::InvalidArgument("initial distribution must be a probability vector".into()));
    }
    Ok(())
}

/// Conditional kernels of a measure on its support.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalKernels<P: Prob = f64> {
    /// `nu[n][h_n]`: law of `a_n` given `h_n`.
    pub nu: Vec<BTreeMap<Vec<usize>, Vec<P>>>,
    /// `q[n][h'_n]`: law of `x_{n+1}` given `h'_n`, for `n < H - 1`.
    pub q: Vec<BTreeMap<Vec<usize>, Vec<P>>>,
}

impl<P: Prob> ConditionalKernels<P> {
    /// The action conditionals as a history-dependent policy.
    pub fn as_history_policy(&self) -> Policy<P> {
        let randomized = !self.nu.iter().all(|k| k.values().all(|r| is_point_mass(r, ROW_TOL)));
        Policy { class: PolicyClass::History, randomized, kernels: self.nu.clone() }
    }
}

pub fn conditional_kernels<P: Prob>(p: &StrategicMeasure<P>) -> ConditionalKernels<P> {
    let h = p.horizon;
    let marginals: Vec<BTreeMap<Vec<usize>, P>> = (0..=2 * h).map(|len| p.prefix_marginal(len)).collect();
    let mut nu = Vec::with_capacity(h);
    let mut q = Vec::with_capacity(h.saturating_sub(1));
    for n in 0..h {
        let mut rows: BTreeMap<Vec<usize>, Vec<P>> = BTreeMap::new();
        for (ha, w) in &marginals[2 * n + 2] {
            let hn = &ha[..2 * n + 1];
            let row = rows.entry(hn.to_vec()).or_insert_with(|| vec![P::zero(); p.num_actions]);
            row[ha[2 * n + 1]] = w.clone() / marginals[2 * n + 1][hn].clone();
        }
        nu.push(rows);
        if n + 1 < h {
            let mut rows: BTreeMap<Vec<usize>, Vec<P>> = BTreeMap::new();
            for (hx, w) in &marginals[2 * n + 3] {
                let hn = &hx[..2 * n + 2];
                let row = rows.entry(hn.to_vec()).or_insert_with(|| vec![P::zero(); p.num_states]);
                row[hx[2 * n + 2]] = w.clone() / marginals[2 * n + 2][hn].clone();
            }
            q.push(rows);
        }
    }
    ConditionalKernels { nu, q }
}

/// Target set of a membership check: the policy class whose strategic
/// measures are tested, optionally restricted to nonrandomized policies.
/// `History` stands for the full set `S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MeasureClass {
    pub structure: PolicyClass,
    pub nonrandomized: bool,
}

impl MeasureClass {
    pub const S: Self = Self { structure: PolicyClass::History, nonrandomized: false };
    pub const S_MARKOV: Self = Self { structure: PolicyClass::Markov, nonrandomized: false };
    pub const S_STATIONARY: Self = Self { structure: PolicyClass::Stationary, nonrandomized: false };

    pub fn new(structure: PolicyClass, nonrandomized: bool) -> Self {
        Self { structure, nonrandomized }
    }

    pub fn nonrandomized(self) -> Self {
        Self { nonrandomized: true, ..self }
    }
}

impl fmt::Display for MeasureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.structure {
            PolicyClass::History => "S",
            PolicyClass::Markov => "S_markov",
            PolicyClass::SemiMarkov => "S_semimarkov",
            PolicyClass::Stationary => "S_stationary",
            PolicyClass::SemiStationary => "S_semistationary",
        };
        f.write_str(base)?;
        if self.nonrandomized {
            f.write_str("_nonrand")?;
        }
        Ok(())
    }
}

impl FromStr for MeasureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase().replace('-', "_");
        let (body, nonrandomized) = match lower.strip_suffix("_nonrand") {
            Some(b) => (b.to_string(), true),
            None => (lower.clone(), false),
        };
        let structure = match body.as_str() {
            "s" => PolicyClass::History,
            "s_markov" => PolicyClass::Markov,
            "s_semimarkov" | "s_semi_markov" => PolicyClass::SemiMarkov,
            "s_stationary" => PolicyClass::Stationary,
            "s_semistationary" | "s_semi_stationary" => PolicyClass::SemiStationary,
            _ => return Err(Error::InvalidArgument(format!("unknown measure class {s:?}"))),
        };
        Ok(Self { structure, nonrandomized })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MembershipFailure {
    NotNormalized { total: f64 },
    /// `(x_n, a_n) ∉ Γ` on the supported prefix `h'_n`.
    Inadmissible { prefix: Vec<usize> },
    /// `Q_n(.|h'_n) ≠ q(.|x_n, a_n)`.
    TransitionMismatch { prefix: Vec<usize>, max_diff: f64 },
    /// Two supported histories share a conditioning key but have different
    /// action conditionals.
    Structure { key: Vec<usize>, first: Vec<usize>, second: Vec<usize>, max_diff: f64 },
    /// Action conditional is not a point mass.
    NotDirac { history: Vec<usize> },
}

impl fmt::Display for MembershipFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotNormalized { total } => write!(f, "total mass {total} ≠ 1"),
            Self::Inadmissible { prefix } => write!(f, "inadmissible action on supported history {prefix:?}"),
            Self::TransitionMismatch { prefix, max_diff } => {
                write!(f, "state transition after {prefix:?} differs from q by {max_diff:e}")
            }
            Self::Structure { key, first, second, max_diff } => write!(
                f,
                "action conditionals for key {key:?} differ by {max_diff:e} between {first:?} and {second:?}"
            ),
            Self::NotDirac { history } => write!(f, "randomized action conditional at {history:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MembershipReport {
    pub class: MeasureClass,
    pub member: bool,
    pub failures: Vec<MembershipFailure>,
    /// `Σ_{n<H} 2^{-n-1} γ_n`, normalized; computed for stationary classes
    /// as a report only.
    pub tilde_gamma: Option<Vec<Vec<f64>>>,
}

/// Checks the constraint characterization of `class` on the support of `p`:
/// admissibility, transition consistency, the class structure of the action
/// conditionals and, for nonrandomized classes, the point-mass condition.
pub fn verify_membership<P: Prob>(model: &FiniteMdp<P>, p: &StrategicMeasure<P>, class: MeasureClass) -> MembershipReport {
    let mut failures = Vec::new();
    let total = p.total();
    if !total.approx_eq(&P::one(), CMP_TOL) || p.support.values().any(|v| !v.is_positive()) {
        failures.push(MembershipFailure::NotNormalized { total: total.to_f64() });
    }
    let kernels = conditional_kernels(p);
    let h = p.horizon;

    for n in 0..h {
        for hn in kernels.nu[n].keys() {
            let x = hn[2 * n];
            let row = &kernels.nu[n][hn];
            for (a, pa) in row.iter().enumerate() {
                if pa.is_positive() && !model.is_admissible(x, a) {
                    let mut prefix = hn.clone();
                    prefix.push(a);
                    failures.push(MembershipFailure::Inadmissible { prefix });
                }
            }
        }
    }
    for n in 0..h.saturating_sub(1) {
        for (prefix, row) in &kernels.q[n] {
            let (x, a) = (prefix[2 * n], prefix[2 * n + 1]);
            if !model.is_admissible(x, a) {
                continue;
            }
            let q = model.q(x, a);
            if !rows_approx_eq(row, q, CMP_TOL) {
                failures.push(MembershipFailure::TransitionMismatch {
                    prefix: prefix.clone(),
                    max_diff: max_abs_diff(row, q),
                });
            }
        }
    }

    if class.structure != PolicyClass::History {
        let mut seen: BTreeMap<(usize, Vec<usize>), (&Vec<usize>, &Vec<P>)> = BTreeMap::new();
        for n in 0..h {
            for (hn, row) in &kernels.nu[n] {
                let key = (class.structure.kernel_index(n), class.structure.key(hn));
                match seen.get(&key) {
                    None => {
                        seen.insert(key, (hn, row));
                    }
                    Some((first, first_row)) => {
                        if !rows_approx_eq(first_row, row, CMP_TOL) {
                            failures.push(MembershipFailure::Structure {
                                key: key.1.clone(),
                                first: (*first).clone(),
                                second: hn.clone(),
                                max_diff: max_abs_diff(first_row, row),
                            });
                        }
                    }
                }
            }
        }
    }

    if class.nonrandomized {
        for n in 0..h {
            for (hn, row) in &kernels.nu[n] {
                if !is_point_mass(row, CMP_TOL) {
                    failures.push(MembershipFailure::NotDirac { history: hn.clone() });
                }
            }
        }
    }

    let tilde_gamma = class.structure.is_stationary().then(|| tilde_gamma(p));
    MembershipReport { class, member: failures.is_empty(), failures, tilde_gamma }
}

/// `Σ_{n<H} 2^{-n-1} γ_n(p)` renormalized over the truncation.
pub fn tilde_gamma<P: Prob>(p: &StrategicMeasure<P>) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; p.num_actions]; p.num_states];
    let mut norm = 0.0;
    for n in 0..p.horizon {
        let w = 0.5f64.powi(n as i32 + 1);
        norm += w;
        for (x, row) in p.gamma(n).iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                out[x][a] += w * v.to_f64();
            }
        }
    }
    for row in &mut out {
        for v in row {
            *v /= norm;
        }
    }
    out
}

/// Policy of `class` whose kernels equal the conditionals of `p` on its
/// support and the lowest-admissible-action fallback elsewhere.
pub fn recover_policy<P: Prob>(model: &FiniteMdp<P>, p: &StrategicMeasure<P>, class: MeasureClass) -> Result<Policy<P>> {
    let report = verify_membership(model, p, class);
    if !report.member {
        let reason = report.failures.first().map(|f| f.to_string()).unwrap_or_default();
        return Err(Error::NotInClass { class: class.to_string(), reason });
    }
    let structure = class.structure;
    let kernels_cond = conditional_kernels(p);
    let stages = if structure.is_stationary() { 1 } else { p.horizon };
    let mut kernels: Vec<Kernel<P>> = vec![Kernel::new(); stages];
    for (n, rows) in kernels_cond.nu.iter().enumerate() {
        for (hn, row) in rows {
            kernels[structure.kernel_index(n)]
                .entry(structure.key(hn))
                .or_insert_with(|| row.clone());
        }
    }
    let mut policy = Policy { class: structure, randomized: true, kernels };
    policy.randomized = !policy.all_point_masses();
    Ok(policy)
}

/// Finite mixture of nonrandomized policies.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureDecomposition<P: Prob = f64> {
    pub components: Vec<(Policy<P>, P)>,
}

impl<P: Prob> MixtureDecomposition<P> {
    pub fn weight_sum(&self) -> P {
        self.components.iter().fold(P::zero(), |s, (_, w)| s + w.clone())
    }

    /// `Σ_k w_k ρ_{p0}[f_k]`.
    pub fn mixture_measure(&self, model: &FiniteMdp<P>, p0: &[P], horizon: usize) -> Result<StrategicMeasure<P>> {
        let measures = self
            .components
            .iter()
            .map(|(f, _)| strategic_measure(model, f, p0, horizon))
            .collect::<Result<Vec<_>>>()?;
        let parts: Vec<_> = measures.iter().zip(&self.components).map(|(m, (_, w))| (m, w.clone())).collect();
        Ok(mix_measures(&parts))
    }
}

/// Represents `ρ_{p0}[π]` as a mixture of nonrandomized policies of the
/// stagewise counterpart of `π`'s class. Each decision site reached with
/// positive probability independently draws an action from its kernel row;
/// a component's weight is the product of the probabilities of its picks.
pub fn decompose_nonrandomized<P: Prob>(
    model: &FiniteMdp<P>,
    policy: &Policy<P>,
    p0: &[P],
    horizon: usize,
    cap: u128,
) -> Result<MixtureDecomposition<P>> {
    let target = strategic_measure(model, policy, p0, horizon)?;
    let class = policy.class.stagewise();
    let mut rows: BTreeMap<(usize, Vec<usize>), Vec<P>> = BTreeMap::new();
    for n in 0..horizon {
        for hn in target.prefix_marginal(2 * n + 1).keys() {
            let key = (n, class.key(hn));
            if !rows.contains_key(&key) {
                rows.insert(key, policy.dist_in(model, n, hn).into_owned());
            }
        }
    }
    let sites: Vec<Site> = rows
        .iter()
        .map(|((n, key), row)| Site {
            stage: *n,
            key: key.clone(),
            choices: (0..row.len()).filter(|&a| row[a].is_positive()).collect(),
        })
        .collect();
    let needed = selection_count(&sites);
    if needed > cap {
        return Err(Error::CapExceeded { needed, cap });
    }
    let site_rows: Vec<&Vec<P>> = rows.values().collect();
    let components = Odometer::new(sites.iter().map(|s| s.choices.len()).collect())
        .map(|pick| {
            let weight = sites
                .iter()
                .zip(&pick)
                .zip(&site_rows)
                .fold(P::one(), |w, ((s, &i), row)| w * row[s.choices[i]].clone());
            (policy_from_selection(class, horizon, model.num_actions, &sites, &pick), weight)
        })
        .collect();
    Ok(MixtureDecomposition { components })
}

/// Markov policy matching every `(x_n, a_n)` marginal of `ρ_{p0}[π]`: its
/// stage-`n` kernel at `x` is the conditional law of `a_n` given `x_n = x`.
pub fn markov_reduction<P: Prob>(model: &FiniteMdp<P>, policy: &Policy<P>, p0: &[P], horizon: usize) -> Result<Policy<P>> {
    let target = strategic_measure(model, policy, p0, horizon)?;
    let mut kernels = Vec::with_capacity(horizon);
    for n in 0..horizon {
        let gamma = target.gamma(n);
        let mut k = Kernel::new();
        for (x, row) in gamma.into_iter().enumerate() {
            let mass = row_sum(&row);
            if mass.is_positive() {
                k.insert(vec![x], row.into_iter().map(|v| v / mass.clone()).collect());
            }
        }
        kernels.push(k);
    }
    let mut out = Policy { class: PolicyClass::Markov, randomized: true, kernels };
    out.randomized = !out.all_point_masses();
    Ok(out)
}
