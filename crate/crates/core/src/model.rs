//! Finite control models and criterion descriptors.
//!
//! States and actions are dense integer ids. A model stores a transition row
//! and a one-stage cost for each admissible `(state, action)` pair; the
//! admissible sets form the graph of the control constraint.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::prob::{row_sum, Prob, ROW_TOL};

/// Finite MDP with transition kernel `q` and one-stage cost `c` on the graph
/// of the admissible-action map.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp<P: Prob = f64> {
    pub num_states: usize,
    pub num_actions: usize,
    /// Admissible action ids per state, ascending.
    pub admissible: Vec<Vec<usize>>,
    /// `transition[x][a]` is a distribution over states for admissible pairs.
    pub transition: Vec<Vec<Option<Vec<P>>>>,
    pub cost: Vec<Vec<Option<f64>>>,
}

impl<P: Prob> FiniteMdp<P> {
    /// A model with no admissible pairs yet; fill it with [`FiniteMdp::set`].
    pub fn empty(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            admissible: vec![Vec::new(); num_states],
            transition: vec![vec![None; num_actions]; num_states],
            cost: vec![vec![None; num_actions]; num_states],
        }
    }

    /// Declares `a` admissible at `x` with the given successor row and cost.
    pub fn set(&mut self, x: usize, a: usize, row: Vec<P>, cost: f64) -> &mut Self {
        if let Err(pos) = self.admissible[x].binary_search(&a) {
            self.admissible[x].insert(pos, a);
        }
        self.transition[x][a] = Some(row);
        self.cost[x][a] = Some(cost);
        self
    }

    /// Validates and returns the model.
    pub fn validated(self) -> Result<Self> {
        let report = validate_mdp(&self);
        if report.is_ok() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(report.to_string()))
        }
    }

    pub fn is_admissible(&self, x: usize, a: usize) -> bool {
        x < self.num_states && self.admissible[x].binary_search(&a).is_ok()
    }

    /// Successor distribution `q(.|x, a)`. Panics off the graph.
    pub fn q(&self, x: usize, a: usize) -> &[P] {
        self.transition[x][a]
            .as_deref()
            .unwrap_or_else(|| panic!("no transition for inadmissible pair ({x}, {a})"))
    }

    /// One-stage cost `c(x, a)`. Panics off the graph.
    pub fn c(&self, x: usize, a: usize) -> f64 {
        self.cost[x][a].unwrap_or_else(|| panic!("no cost for inadmissible pair ({x}, {a})"))
    }

    /// The fixed fallback selection: lowest-id admissible action.
    pub fn default_action(&self, x: usize) -> usize {
        self.admissible[x][0]
    }

    /// Point mass on the default action.
    pub fn default_row(&self, x: usize) -> Vec<P> {
        dirac(self.num_actions, self.default_action(x))
    }

    /// States reachable in one step with positive probability.
    pub fn successors(&self, x: usize, a: usize) -> impl Iterator<Item = (usize, &P)> + '_ {
        self.q(x, a).iter().enumerate().filter(|(_, p)| p.is_positive())
    }

    /// Number of admissible pairs, `|Γ|`.
    pub fn graph_size(&self) -> usize {
        self.admissible.iter().map(Vec::len).sum()
    }

    pub fn to_f64(&self) -> FiniteMdp<f64> {
        FiniteMdp {
            num_states: self.num_states,
            num_actions: self.num_actions,
            admissible: self.admissible.clone(),
            transition: self
                .transition
                .iter()
                .map(|rows| {
                    rows.iter()
                        .map(|r| r.as_ref().map(|r| r.iter().map(Prob::to_f64).collect()))
                        .collect()
                })
                .collect(),
            cost: self.cost.clone(),
        }
    }

    /// Same model with every cost set to zero.
    pub fn with_zero_cost(&self) -> Self {
        let mut m = self.clone();
        for row in &mut m.cost {
            for c in row.iter_mut().flatten() {
                *c = 0.0;
            }
        }
        m
    }
}

pub fn dirac<P: Prob>(len: usize, at: usize) -> Vec<P> {
    let mut v = vec![P::zero(); len];
    v[at] = P::one();
    v
}

/// One invariant violation found by [`validate_mdp`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptyAdmissible { state: usize },
    ActionOutOfRange { state: usize, action: usize },
    MissingTransition { state: usize, action: usize },
    RowLength { state: usize, action: usize, len: usize },
    NegativeProbability { state: usize, action: usize },
    RowSum { state: usize, action: usize, sum: f64 },
    MissingCost { state: usize, action: usize },
    NonFiniteCost { state: usize, action: usize },
    OffGraph { state: usize, action: usize },
    Shape(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyAdmissible { state } => write!(f, "empty admissible set at state {state}"),
            Violation::ActionOutOfRange { state, action } => {
                write!(f, "admissible action {action} at state {state} is out of range")
            }
            Violation::MissingTransition { state, action } => {
                write!(f, "missing transition row for ({state}, {action})")
            }
            Violation::RowLength { state, action, len } => {
                write!(f, "transition row ({state}, {action}) has length {len}")
            }
            Violation::NegativeProbability { state, action } => {
                write!(f, "negative probability in row ({state}, {action})")
            }
            Violation::RowSum { state, action, sum } => {
                write!(f, "row sum ≠ 1 for ({state}, {action}): {sum}")
            }
            Violation::MissingCost { state, action } => write!(f, "missing cost for ({state}, {action})"),
            Violation::NonFiniteCost { state, action } => {
                write!(f, "non-finite cost for ({state}, {action})")
            }
            Violation::OffGraph { state, action } => {
                write!(f, "transition or cost given for inadmissible pair ({state}, {action})")
            }
            Violation::Shape(msg) => f.write_str(msg),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Collects every invariant violation of `model`. Violations are data.
pub fn validate_mdp<P: Prob>(model: &FiniteMdp<P>) -> ValidationReport {
    let mut out = Vec::new();
    let (ns, na) = (model.num_states, model.num_actions);
    if model.admissible.len() != ns || model.transition.len() != ns || model.cost.len() != ns {
        out.push(Violation::Shape(format!("per-state tables must have {ns} entries")));
        return ValidationReport { violations: out };
    }
    for x in 0..ns {
        if model.transition[x].len() != na || model.cost[x].len() != na {
            out.push(Violation::Shape(format!("per-action tables at state {x} must have {na} entries")));
            continue;
        }
        if model.admissible[x].is_empty() {
            out.push(Violation::EmptyAdmissible { state: x });
        }
        for &a in &model.admissible[x] {
            if a >= na {
                out.push(Violation::ActionOutOfRange { state: x, action: a });
                continue;
            }
            match &model.transition[x][a] {
                None => out.push(Violation::MissingTransition { state: x, action: a }),
                Some(row) => {
                    if row.len() != ns {
                        out.push(Violation::RowLength { state: x, action: a, len: row.len() });
                    } else {
                        if row.iter().any(|p| *p < P::zero()) {
                            out.push(Violation::NegativeProbability { state: x, action: a });
                        }
                        let s = row_sum(row);
                        if !s.is_unit(ROW_TOL) {
                            out.push(Violation::RowSum { state: x, action: a, sum: s.to_f64() });
                        }
                    }
                }
            }
            match model.cost[x][a] {
                None => out.push(Violation::MissingCost { state: x, action: a }),
                Some(c) if !c.is_finite() => out.push(Violation::NonFiniteCost { state: x, action: a }),
                Some(_) => {}
            }
        }
        for a in 0..na {
            let defined = model.transition[x][a].is_some() || model.cost[x][a].is_some();
            if defined && !model.admissible[x].contains(&a) {
                out.push(Violation::OffGraph { state: x, action: a });
            }
        }
    }
    ValidationReport { violations: out }
}

/// Finite game against nature. Player 1 picks `a1 ∈ admissible1(x)`, player 2
/// picks `a2 ∈ admissible2(x)`; the joint action drives `q` and `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimaxModel {
    pub num_states: usize,
    pub num_actions1: usize,
    pub num_actions2: usize,
    pub admissible1: Vec<Vec<usize>>,
    pub admissible2: Vec<Vec<usize>>,
    /// `transition[x][a1][a2]`
    pub transition: Vec<Vec<Vec<Option<Vec<f64>>>>>,
    pub cost: Vec<Vec<Vec<Option<f64>>>>,
}

impl MinimaxModel {
    pub fn empty(num_states: usize, num_actions1: usize, num_actions2: usize) -> Self {
        Self {
            num_states,
            num_actions1,
            num_actions2,
            admissible1: vec![Vec::new(); num_states],
            admissible2: vec![Vec::new(); num_states],
            transition: vec![vec![vec![None; num_actions2]; num_actions1]; num_states],
            cost: vec![vec![vec![None; num_actions2]; num_actions1]; num_states],
        }
    }

    pub fn set(&mut self, x: usize, a1: usize, a2: usize, row: Vec<f64>, cost: f64) -> &mut Self {
        if let Err(pos) = self.admissible1[x].binary_search(&a1) {
            self.admissible1[x].insert(pos, a1);
        }
        if let Err(pos) = self.admissible2[x].binary_search(&a2) {
            self.admissible2[x].insert(pos, a2);
        }
        self.transition[x][a1][a2] = Some(row);
        self.cost[x][a1][a2] = Some(cost);
        self
    }

    pub fn validated(self) -> Result<Self> {
        let report = validate_minimax(&self);
        if report.is_ok() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(report.to_string()))
        }
    }

    pub fn num_joint_actions(&self) -> usize {
        self.num_actions1 * self.num_actions2
    }

    /// Joint action id used by [`mdp_of_minimax`].
    pub fn joint(&self, a1: usize, a2: usize) -> usize {
        a1 * self.num_actions2 + a2
    }

    /// Inverse of [`MinimaxModel::joint`].
    pub fn split(&self, a: usize) -> (usize, usize) {
        (a / self.num_actions2, a % self.num_actions2)
    }

    pub fn q(&self, x: usize, a1: usize, a2: usize) -> &[f64] {
        self.transition[x][a1][a2].as_deref().expect("inadmissible joint action")
    }

    pub fn c(&self, x: usize, a1: usize, a2: usize) -> f64 {
        self.cost[x][a1][a2].expect("inadmissible joint action")
    }

    pub fn max_abs_cost(&self) -> f64 {
        self.cost.iter().flatten().flatten().flatten().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Player-1 information vector `(x_0, a1_0, ..., x_n)` of a joint history.
    pub fn info_of_history(&self, history: &[usize]) -> Vec<usize> {
        history
            .iter()
            .enumerate()
            .map(|(i, &v)| if i % 2 == 1 { self.split(v).0 } else { v })
            .collect()
    }
}

/// Validates a minimax model through its joint-action embedding, plus the
/// requirement that `Γ` is the product `Γ1 × Γ2`.
pub fn validate_minimax(model: &MinimaxModel) -> ValidationReport {
    let ns = model.num_states;
    if model.admissible1.len() != ns
        || model.admissible2.len() != ns
        || model.transition.len() != ns
        || model.cost.len() != ns
    {
        return ValidationReport {
            violations: vec![Violation::Shape(format!("per-state tables must have {ns} entries"))],
        };
    }
    for x in 0..ns {
        if model.transition[x].len() != model.num_actions1
            || model.transition[x].iter().any(|r| r.len() != model.num_actions2)
            || model.cost[x].len() != model.num_actions1
            || model.cost[x].iter().any(|r| r.len() != model.num_actions2)
        {
            return ValidationReport {
                violations: vec![Violation::Shape(format!("action tables at state {x} have wrong shape"))],
            };
        }
        if model.admissible1[x].iter().any(|&a| a >= model.num_actions1)
            || model.admissible2[x].iter().any(|&a| a >= model.num_actions2)
        {
            return ValidationReport {
                violations: vec![Violation::Shape(format!("admissible action out of range at state {x}"))],
            };
        }
    }
    validate_mdp(&mdp_of_minimax(model))
}

/// Embeds the game as an MDP over joint actions `a = (a1, a2)` with the
/// product constraint `A(x) = A1(x) × A2(x)`.
pub fn mdp_of_minimax(model: &MinimaxModel) -> FiniteMdp<f64> {
    let mut mdp = FiniteMdp::empty(model.num_states, model.num_joint_actions());
    for x in 0..model.num_states {
        for &a1 in &model.admissible1[x] {
            for &a2 in &model.admissible2[x] {
                let a = model.joint(a1, a2);
                mdp.admissible[x].push(a);
                mdp.transition[x][a] = model.transition[x][a1][a2].clone();
                mdp.cost[x][a] = model.cost[x][a1][a2];
            }
        }
        mdp.admissible[x].sort_unstable();
        // Pairs defined off the product graph stay visible to validation.
        for a1 in 0..model.num_actions1 {
            for a2 in 0..model.num_actions2 {
                let inside = model.admissible1[x].contains(&a1) && model.admissible2[x].contains(&a2);
                if !inside {
                    let a = model.joint(a1, a2);
                    mdp.transition[x][a] = model.transition[x][a1][a2].clone();
                    mdp.cost[x][a] = model.cost[x][a1][a2];
                }
            }
        }
    }
    mdp
}

/// Admissible-action table for a POMDP keyed by `(stage, information vector)`.
pub type InfoConstraintTable = BTreeMap<(usize, Vec<usize>), Vec<usize>>;

/// Finite POMDP with a deterministic observation function.
#[derive(Clone, Debug, PartialEq)]
pub struct FinitePomdp {
    pub base: FiniteMdp<f64>,
    pub num_observations: usize,
    /// `obs_fn[x]` is the observation emitted in state `x`.
    pub obs_fn: Vec<usize>,
    /// Explicit `Γ_n` entries; information vectors missing from the table
    /// use the state-derived default.
    pub admissible_info: InfoConstraintTable,
}

impl FinitePomdp {
    pub fn new(base: FiniteMdp<f64>, num_observations: usize, obs_fn: Vec<usize>) -> Result<Self> {
        let pomdp = Self { base, num_observations, obs_fn, admissible_info: BTreeMap::new() };
        pomdp.validate()?;
        Ok(pomdp)
    }

    /// Fully observed problem: `Z = X`, `f = id`.
    pub fn fully_observed(base: FiniteMdp<f64>) -> Self {
        let n = base.num_states;
        Self { base, num_observations: n, obs_fn: (0..n).collect(), admissible_info: BTreeMap::new() }
    }

    pub fn validate(&self) -> Result<()> {
        let report = validate_mdp(&self.base);
        if !report.is_ok() {
            return Err(Error::InvalidModel(report.to_string()));
        }
        if self.obs_fn.len() != self.base.num_states {
            return Err(Error::InvalidModel("observation function must be total on states".into()));
        }
        if let Some(x) = self.obs_fn.iter().position(|&z| z >= self.num_observations) {
            return Err(Error::InvalidModel(format!("observation of state {x} out of range")));
        }
        for z in 0..self.num_observations {
            if self.obs_fn.contains(&z) && self.default_admissible(z).is_empty() {
                return Err(Error::InvalidModel(format!(
                    "no action is admissible in every state emitting observation {z}"
                )));
            }
        }
        for ((n, info), acts) in &self.admissible_info {
            if acts.is_empty() {
                return Err(Error::InvalidModel(format!("empty admissible set for stage {n}, info {info:?}")));
            }
            let z = *info.last().ok_or_else(|| Error::InvalidModel("empty information vector".into()))?;
            let allowed = self.default_admissible(z);
            if acts.iter().any(|a| !allowed.contains(a)) {
                return Err(Error::InvalidModel(format!(
                    "info constraint at stage {n}, info {info:?} admits an action inadmissible in some state"
                )));
            }
        }
        Ok(())
    }

    /// Actions admissible in every state that emits `z`.
    pub fn default_admissible(&self, z: usize) -> Vec<usize> {
        let mut acc: Option<Vec<usize>> = None;
        for (x, &zx) in self.obs_fn.iter().enumerate() {
            if zx != z {
                continue;
            }
            let ax = &self.base.admissible[x];
            acc = Some(match acc {
                None => ax.clone(),
                Some(prev) => prev.into_iter().filter(|a| ax.contains(a)).collect(),
            });
        }
        acc.unwrap_or_default()
    }

    /// `U_n(i_n)`.
    pub fn admissible_info(&self, n: usize, info: &[usize]) -> Cow<'_, [usize]> {
        match self.admissible_info.get(&(n, info.to_vec())) {
            Some(acts) => Cow::Borrowed(acts.as_slice()),
            None => Cow::Owned(self.default_admissible(*info.last().expect("empty information vector"))),
        }
    }
}

/// Which criterion to evaluate or optimize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CriterionKind {
    J1,
    J2,
    J3,
    J4,
    TJ1,
    TJ2,
    TJ3,
    TJ4,
    Psi,
    HatPsi,
    Cvar,
    Var,
    Discounted,
    NStage,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 14] = [
        Self::J1,
        Self::J2,
        Self::J3,
        Self::J4,
        Self::TJ1,
        Self::TJ2,
        Self::TJ3,
        Self::TJ4,
        Self::Psi,
        Self::HatPsi,
        Self::Cvar,
        Self::Var,
        Self::Discounted,
        Self::NStage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::J1 => "J1",
            Self::J2 => "J2",
            Self::J3 => "J3",
            Self::J4 => "J4",
            Self::TJ1 => "TJ1",
            Self::TJ2 => "TJ2",
            Self::TJ3 => "TJ3",
            Self::TJ4 => "TJ4",
            Self::Psi => "PSI",
            Self::HatPsi => "HAT_PSI",
            Self::Cvar => "CVAR",
            Self::Var => "VAR",
            Self::Discounted => "DISCOUNTED",
            Self::NStage => "NSTAGE",
        }
    }

    /// Expected-cost criteria: mixtures of policies average their values.
    pub fn is_expected_cost(self) -> bool {
        matches!(self, Self::J1 | Self::J2 | Self::J3 | Self::J4 | Self::Discounted | Self::NStage)
    }

    pub fn is_average(self) -> bool {
        matches!(self, Self::J1 | Self::J2 | Self::J3 | Self::J4)
    }

    pub fn is_pathwise(self) -> bool {
        matches!(self, Self::TJ1 | Self::TJ2 | Self::TJ3 | Self::TJ4)
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == up)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown criterion {s:?}")))
    }
}

/// The monotone map `ψ` of the certainty-equivalent criteria.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PsiFn {
    Identity,
    /// `ψ(z) = exp(β z)` with `β = CriterionSpec::beta > 0`.
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriterionSpec {
    pub kind: CriterionKind,
    pub horizon: usize,
    pub beta: f64,
    pub alpha: f64,
    pub psi: PsiFn,
}

impl CriterionSpec {
    pub fn new(kind: CriterionKind) -> Self {
        Self { kind, horizon: 1, beta: 0.0, alpha: 1.0, psi: PsiFn::Identity }
    }

    pub fn n_stage(horizon: usize) -> Self {
        Self { horizon, ..Self::new(CriterionKind::NStage) }
    }

    pub fn discounted(beta: f64, horizon: usize) -> Self {
        Self { horizon, beta, ..Self::new(CriterionKind::Discounted) }
    }

    pub fn cvar(alpha: f64) -> Self {
        Self { alpha, ..Self::new(CriterionKind::Cvar) }
    }

    pub fn var(alpha: f64) -> Self {
        Self { alpha, ..Self::new(CriterionKind::Var) }
    }

    pub fn psi(psi: PsiFn, beta: f64, horizon: usize) -> Self {
        Self { horizon, beta, psi, ..Self::new(CriterionKind::Psi) }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.kind == CriterionKind::Discounted && !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!("discount {} outside [0, 1)", self.beta)));
        }
        if matches!(self.kind, CriterionKind::Psi | CriterionKind::HatPsi)
            && self.psi == PsiFn::Exp
            && !(self.beta > 0.0 && self.beta.is_finite())
        {
            return Err(Error::InvalidArgument("exponential utility needs beta > 0".into()));
        }
        Ok(())
    }
}
