//! JSON model, policy and measure files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use num_rational::BigRational;
use serde_json::{Map, Value};
use strategic::game::MatrixGame;
use strategic::measure::StrategicMeasure;
use strategic::model::{validate_minimax, validate_mdp, FiniteMdp, FinitePomdp, MinimaxModel};
use strategic::policy::{Kernel, Policy, PolicyClass};
use strategic::prob::{format_rational, is_point_mass, parse_rational, row_sum, Prob, ROW_TOL};
use strategic::Error;

/// Tolerance for row sums in float-mode input files.
pub const FILE_ROW_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::CapExceeded { .. } | Error::NotConverged { .. }) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn bad<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Input(msg.into()))
}

/// Probability types that can be written back to JSON.
pub trait ProbJson: Prob {
    fn to_json(&self) -> Value;
}

impl ProbJson for f64 {
    fn to_json(&self) -> Value {
        Value::from(*self)
    }
}

impl ProbJson for BigRational {
    fn to_json(&self) -> Value {
        Value::String(format_rational(self))
    }
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn as_object<'a>(v: &'a Value, what: &str) -> CliResult<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| CliError::Input(format!("{what} must be a JSON object")))
}

fn check_keys(obj: &Map<String, Value>, required: &[&str], optional: &[&str], what: &str) -> CliResult<()> {
    for k in obj.keys() {
        if !required.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
            return bad(format!("unknown key {k:?} in {what}"));
        }
    }
    for k in required {
        if !obj.contains_key(*k) {
            return bad(format!("missing key {k:?} in {what}"));
        }
    }
    Ok(())
}

fn string_list(v: &Value, what: &str) -> CliResult<Vec<String>> {
    let arr = v.as_array().ok_or_else(|| CliError::Input(format!("{what} must be an array of names")))?;
    let names: Vec<String> = arr
        .iter()
        .map(|x| x.as_str().map(str::to_string).ok_or_else(|| CliError::Input(format!("{what} entries must be strings"))))
        .collect::<CliResult<_>>()?;
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != names.len() || names.is_empty() {
        return bad(format!("{what} must be a nonempty list of distinct names"));
    }
    Ok(names)
}

/// Resolves a name, or a numeric id when no name matches.
pub fn lookup(names: &[String], token: &str, what: &str) -> CliResult<usize> {
    let token = token.trim();
    if let Some(i) = names.iter().position(|n| n == token) {
        return Ok(i);
    }
    match token.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => bad(format!("unknown {what} {token:?}")),
    }
}

pub fn parse_prob_value<P: Prob>(v: &Value) -> CliResult<P> {
    let s = match v {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return bad(format!("probability {v} must be a number or a string")),
    };
    P::parse_prob(&s).ok_or_else(|| CliError::Input(format!("cannot parse probability {s:?}")))
}

pub fn parse_real(v: &Value) -> CliResult<f64> {
    let r = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => parse_rational(s).map(|r| r.to_f64()),
        _ => None,
    };
    r.filter(|x| x.is_finite()).ok_or_else(|| CliError::Input(format!("{v} is not a finite real")))
}

fn parse_prob_row<P: Prob>(v: &Value, names: &[String], what: &str) -> CliResult<Vec<P>> {
    let obj = as_object(v, what)?;
    let mut row = vec![P::zero(); names.len()];
    for (k, p) in obj {
        row[lookup(names, k, "entry")?] = parse_prob_value(p)?;
    }
    Ok(row)
}

/// Float rows within [`FILE_ROW_TOL`] of one are renormalized; exact rows
/// must sum to one exactly.
fn normalize_row<P: Prob>(row: Vec<P>, what: &str) -> CliResult<Vec<P>> {
    if row.iter().any(|p| *p < P::zero()) {
        return bad(format!("negative probability in {what}"));
    }
    let s = row_sum(&row);
    if P::EXACT {
        if s != P::one() {
            return bad(format!("{what} sums to {s}, not 1"));
        }
        return Ok(row);
    }
    if (s.to_f64() - 1.0).abs() > FILE_ROW_TOL {
        return bad(format!("{what} sums to {s}, not 1"));
    }
    Ok(row.into_iter().map(|p| p / s.clone()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Mdp,
    Pomdp,
    Minimax,
    Matrix,
}

/// A parsed model file; concrete models are built on demand so the same
/// file serves float and exact mode.
#[derive(Clone, Debug)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub actions1: Vec<String>,
    pub actions2: Vec<String>,
    pub observations: Vec<String>,
    doc: Map<String, Value>,
}

impl ModelFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_value(&read_json(path)?)
    }

    pub fn from_value(v: &Value) -> CliResult<Self> {
        let doc = as_object(v, "model file")?.clone();
        let kind = match doc.get("kind").and_then(Value::as_str) {
            Some("mdp") => ModelKind::Mdp,
            Some("pomdp") => ModelKind::Pomdp,
            Some("minimax") => ModelKind::Minimax,
            Some("matrix") => ModelKind::Matrix,
            _ => return bad("model \"kind\" must be one of mdp, pomdp, minimax, matrix"),
        };
        let base = ["kind", "states", "transition", "cost"];
        match kind {
            ModelKind::Mdp => check_keys(&doc, &[&base[..], &["actions", "admissible"]].concat(), &[], "mdp model")?,
            ModelKind::Pomdp => check_keys(
                &doc,
                &[&base[..], &["actions", "admissible", "observations", "obs_fn"]].concat(),
                &["admissible_info"],
                "pomdp model",
            )?,
            ModelKind::Minimax => check_keys(
                &doc,
                &[&base[..], &["actions1", "actions2", "admissible1", "admissible2"]].concat(),
                &[],
                "minimax model",
            )?,
            ModelKind::Matrix => check_keys(&doc, &["kind", "payoff"], &[], "matrix game")?,
        }
        let names = |key: &str| -> CliResult<Vec<String>> {
            doc.get(key).map_or(Ok(Vec::new()), |v| string_list(v, &format!("\"{key}\"")))
        };
        Ok(Self {
            kind,
            states: names("states")?,
            actions: names("actions")?,
            actions1: names("actions1")?,
            actions2: names("actions2")?,
            observations: names("observations")?,
            doc,
        })
    }

    fn expect_kind(&self, kinds: &[ModelKind], command: &str) -> CliResult<()> {
        if kinds.contains(&self.kind) {
            Ok(())
        } else {
            bad(format!("{command} does not accept a {:?} model", self.kind))
        }
    }

    fn admissible(&self, key: &str, actions: &[String]) -> CliResult<Vec<Vec<usize>>> {
        let obj = as_object(&self.doc[key], key)?;
        let mut out = vec![Vec::new(); self.states.len()];
        for (s, list) in obj {
            let x = lookup(&self.states, s, "state")?;
            let arr = list.as_array().ok_or_else(|| CliError::Input(format!("{key} of {s} must be an array")))?;
            for a in arr {
                let name = a.as_str().ok_or_else(|| CliError::Input(format!("{key} entries must be strings")))?;
                out[x].push(lookup(actions, name, "action")?);
            }
            out[x].sort_unstable();
            out[x].dedup();
        }
        Ok(out)
    }

    fn split_key<'a>(&self, key: &'a str, parts: usize) -> CliResult<Vec<&'a str>> {
        let v: Vec<&str> = key.split('|').collect();
        if v.len() != parts {
            return bad(format!("key {key:?} should have {parts} '|'-separated parts"));
        }
        Ok(v)
    }

    /// The MDP of an `mdp` or `pomdp` file.
    pub fn mdp<P: Prob>(&self) -> CliResult<FiniteMdp<P>> {
        self.expect_kind(&[ModelKind::Mdp, ModelKind::Pomdp], "this command")?;
        let mut m = FiniteMdp::empty(self.states.len(), self.actions.len());
        m.admissible = self.admissible("admissible", &self.actions)?;
        for (k, v) in as_object(&self.doc["transition"], "transition")? {
            let p = self.split_key(k, 2)?;
            let (x, a) = (lookup(&self.states, p[0], "state")?, lookup(&self.actions, p[1], "action")?);
            m.transition[x][a] = Some(parse_prob_row(v, &self.states, k)?);
        }
        for (k, v) in as_object(&self.doc["cost"], "cost")? {
            let p = self.split_key(k, 2)?;
            let (x, a) = (lookup(&self.states, p[0], "state")?, lookup(&self.actions, p[1], "action")?);
            m.cost[x][a] = Some(parse_real(v)?);
        }
        let report = validate_mdp(&m);
        if !report.is_ok() {
            return Err(Error::InvalidModel(report.to_string()).into());
        }
        Ok(m)
    }

    pub fn minimax(&self) -> CliResult<MinimaxModel> {
        if self.kind == ModelKind::Mdp {
            return Ok(minimax_of_mdp(&self.mdp::<f64>()?));
        }
        self.expect_kind(&[ModelKind::Minimax], "this command")?;
        let mut m = MinimaxModel::empty(self.states.len(), self.actions1.len(), self.actions2.len());
        m.admissible1 = self.admissible("admissible1", &self.actions1)?;
        m.admissible2 = self.admissible("admissible2", &self.actions2)?;
        let ids = |p: &[&str]| -> CliResult<(usize, usize, usize)> {
            Ok((
                lookup(&self.states, p[0], "state")?,
                lookup(&self.actions1, p[1], "player-1 action")?,
                lookup(&self.actions2, p[2], "player-2 action")?,
            ))
        };
        for (k, v) in as_object(&self.doc["transition"], "transition")? {
            let (x, a1, a2) = ids(&self.split_key(k, 3)?)?;
            m.transition[x][a1][a2] = Some(parse_prob_row(v, &self.states, k)?);
        }
        for (k, v) in as_object(&self.doc["cost"], "cost")? {
            let (x, a1, a2) = ids(&self.split_key(k, 3)?)?;
            m.cost[x][a1][a2] = Some(parse_real(v)?);
        }
        let report = validate_minimax(&m);
        if !report.is_ok() {
            return Err(Error::InvalidModel(report.to_string()).into());
        }
        Ok(m)
    }

    pub fn pomdp(&self) -> CliResult<FinitePomdp> {
        self.expect_kind(&[ModelKind::Pomdp], "this command")?;
        let base = self.mdp::<f64>()?;
        let obs = as_object(&self.doc["obs_fn"], "obs_fn")?;
        let mut f = vec![usize::MAX; self.states.len()];
        for (s, z) in obs {
            let z = z.as_str().ok_or_else(|| CliError::Input("obs_fn values must be observation names".into()))?;
            f[lookup(&self.states, s, "state")?] = lookup(&self.observations, z, "observation")?;
        }
        if f.contains(&usize::MAX) {
            return bad("obs_fn must be total on states");
        }
        let mut pomdp = FinitePomdp { base, num_observations: self.observations.len(), obs_fn: f, admissible_info: BTreeMap::new() };
        if let Some(table) = self.doc.get("admissible_info") {
            for (k, list) in as_object(table, "admissible_info")? {
                let (n, info) = k
                    .split_once('|')
                    .ok_or_else(|| CliError::Input(format!("admissible_info key {k:?} must be \"n|z0,a0,...\"")))?;
                let n: usize = n.trim().parse().map_err(|_| CliError::Input(format!("bad stage in {k:?}")))?;
                let info = self.codec(Context::Pomdp).parse_history(info)?;
                if info.len() != 2 * n + 1 {
                    return bad(format!("admissible_info key {k:?} has the wrong length for stage {n}"));
                }
                let arr = list.as_array().ok_or_else(|| CliError::Input("admissible_info values must be arrays".into()))?;
                let mut acts = arr
                    .iter()
                    .map(|a| lookup(&self.actions, a.as_str().unwrap_or_default(), "action"))
                    .collect::<CliResult<Vec<_>>>()?;
                acts.sort_unstable();
                acts.dedup();
                pomdp.admissible_info.insert((n, info), acts);
            }
        }
        pomdp.validate()?;
        Ok(pomdp)
    }

    pub fn matrix(&self) -> CliResult<MatrixGame> {
        self.expect_kind(&[ModelKind::Matrix], "this command")?;
        let rows = self.doc["payoff"].as_array().ok_or_else(|| CliError::Input("payoff must be an array of rows".into()))?;
        let payoff = rows
            .iter()
            .map(|r| {
                r.as_array()
                    .ok_or_else(|| CliError::Input("payoff rows must be arrays".into()))?
                    .iter()
                    .map(parse_real)
                    .collect::<CliResult<Vec<f64>>>()
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(MatrixGame::new(payoff)?)
    }

    pub fn codec(&self, ctx: Context) -> Codec<'_> {
        match ctx {
            Context::Mdp => Codec { points: &self.states, hist: HistActions::Plain(&self.actions), row: &self.actions },
            Context::Pomdp => Codec { points: &self.observations, hist: HistActions::Plain(&self.actions), row: &self.actions },
            Context::Player1 => {
                Codec { points: &self.states, hist: HistActions::Plain(self.a1()), row: self.a1() }
            }
            Context::Player2 => Codec {
                points: &self.states,
                hist: HistActions::Joint(self.a1(), self.a2()),
                row: self.a2(),
            },
        }
    }

    fn a1(&self) -> &[String] {
        if self.kind == ModelKind::Mdp {
            &self.actions
        } else {
            &self.actions1
        }
    }

    fn a2(&self) -> &[String] {
        if self.kind == ModelKind::Mdp {
            &SINGLE_ACTION
        } else {
            &self.actions2
        }
    }
}

static SINGLE_ACTION: [String; 1] = [String::new()];

/// An MDP as a game in which player 2 has one action.
pub fn minimax_of_mdp(m: &FiniteMdp) -> MinimaxModel {
    let mut g = MinimaxModel::empty(m.num_states, m.num_actions, 1);
    for x in 0..m.num_states {
        for &a in &m.admissible[x] {
            g.set(x, a, 0, m.q(x, a).to_vec(), m.c(x, a));
        }
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Context {
    /// MDP policies and measures.
    Mdp,
    /// Information-vector policies of a POMDP.
    Pomdp,
    /// Player-1 policies keyed by `(x_0, a1_0, ..., x_n)`.
    Player1,
    /// Player-2 policies keyed by joint histories.
    Player2,
}

#[derive(Clone, Copy, Debug)]
pub enum HistActions<'a> {
    Plain(&'a [String]),
    /// `"a1:a2"` tokens; id `a1 · |A2| + a2`.
    Joint(&'a [String], &'a [String]),
}

/// Name mapping for policy keys and history strings.
#[derive(Clone, Copy, Debug)]
pub struct Codec<'a> {
    pub points: &'a [String],
    pub hist: HistActions<'a>,
    pub row: &'a [String],
}

impl Codec<'_> {
    fn hist_action(&self, token: &str) -> CliResult<usize> {
        match self.hist {
            HistActions::Plain(names) => lookup(names, token, "action"),
            HistActions::Joint(a1, a2) => {
                let (l, r) = token
                    .split_once(':')
                    .ok_or_else(|| CliError::Input(format!("joint action {token:?} must be \"a1:a2\"")))?;
                Ok(lookup(a1, l, "player-1 action")? * a2.len() + lookup(a2, r, "player-2 action")?)
            }
        }
    }

    fn hist_action_name(&self, a: usize) -> String {
        match self.hist {
            HistActions::Plain(names) => names[a].clone(),
            HistActions::Joint(a1, a2) => format!("{}:{}", a1[a / a2.len()], a2[a % a2.len()]),
        }
    }

    /// `"x0,a0,x1,..."` (alternating points and actions).
    pub fn parse_history(&self, s: &str) -> CliResult<Vec<usize>> {
        s.split(',')
            .enumerate()
            .map(|(i, t)| if i % 2 == 0 { lookup(self.points, t, "state") } else { self.hist_action(t) })
            .collect()
    }

    pub fn format_history(&self, h: &[usize]) -> String {
        h.iter()
            .enumerate()
            .map(|(i, &v)| if i % 2 == 0 { self.points[v].clone() } else { self.hist_action_name(v) })
            .collect::<Vec<_>>()
            .join(",")
    }

    fn parse_key(&self, class: PolicyClass, key: &str) -> CliResult<(usize, Vec<usize>)> {
        let parts: Vec<&str> = key.split('|').collect();
        let pt = |t: &str| lookup(self.points, t, "state");
        let stage = |t: &str| t.trim().parse::<usize>().map_err(|_| CliError::Input(format!("bad stage in key {key:?}")));
        let shape_err = || CliError::Input(format!("key {key:?} does not fit class {class}"));
        match (class, parts.as_slice()) {
            (PolicyClass::Stationary, [x]) => Ok((0, vec![pt(x)?])),
            (PolicyClass::SemiStationary, [x0, x]) => Ok((0, vec![pt(x0)?, pt(x)?])),
            (PolicyClass::Markov, [n, x]) => Ok((stage(n)?, vec![pt(x)?])),
            (PolicyClass::SemiMarkov, [n, x0, x]) => Ok((stage(n)?, vec![pt(x0)?, pt(x)?])),
            (PolicyClass::History, [h]) => {
                let h = self.parse_history(h)?;
                if h.len() % 2 == 0 {
                    return Err(shape_err());
                }
                Ok(((h.len() - 1) / 2, h))
            }
            _ => Err(shape_err()),
        }
    }

    fn format_key(&self, class: PolicyClass, n: usize, key: &[usize]) -> String {
        let p = |i: usize| self.points[key[i]].clone();
        match class {
            PolicyClass::Stationary => p(0),
            PolicyClass::SemiStationary => format!("{}|{}", p(0), p(1)),
            PolicyClass::Markov => format!("{n}|{}", p(0)),
            PolicyClass::SemiMarkov => format!("{n}|{}|{}", p(0), p(1)),
            PolicyClass::History => self.format_history(key),
        }
    }
}

pub fn parse_policy<P: Prob>(v: &Value, codec: Codec<'_>) -> CliResult<Policy<P>> {
    let obj = as_object(v, "policy")?;
    check_keys(obj, &["class", "kernels"], &["randomized", "horizon"], "policy")?;
    let class = PolicyClass::from_str(obj["class"].as_str().unwrap_or_default())?;
    let horizon = match obj.get("horizon") {
        None | Some(Value::Null) if class.is_stationary() => 1,
        Some(h) if class.is_stationary() => {
            h.as_u64().ok_or_else(|| CliError::Input("horizon must be a nonnegative integer".into()))?;
            1
        }
        Some(h) => h.as_u64().ok_or_else(|| CliError::Input("horizon must be a nonnegative integer".into()))? as usize,
        None => return bad(format!("{class} policies need a \"horizon\"")),
    };
    let mut kernels: Vec<Kernel<P>> = vec![BTreeMap::new(); horizon];
    for (k, row) in as_object(&obj["kernels"], "kernels")? {
        let (n, key) = codec.parse_key(class, k)?;
        if n >= horizon {
            return bad(format!("key {k:?} is beyond the policy horizon {horizon}"));
        }
        let row = normalize_row(parse_prob_row::<P>(row, codec.row, k)?, &format!("row {k:?}"))?;
        if kernels[n].insert(key, row).is_some() {
            return bad(format!("duplicate key {k:?}"));
        }
    }
    let mixed = kernels.iter().flat_map(|k| k.values()).any(|r| !is_point_mass(r, ROW_TOL));
    let randomized = match obj.get("randomized") {
        None => mixed,
        Some(Value::Bool(false)) if mixed => return bad("policy declared nonrandomized has a mixed row"),
        Some(Value::Bool(b)) => *b,
        Some(_) => return bad("\"randomized\" must be a boolean"),
    };
    Ok(Policy::new(class, randomized, kernels)?)
}

pub fn write_policy<P: ProbJson>(policy: &Policy<P>, codec: Codec<'_>) -> Value {
    let mut kernels = Map::new();
    for (n, k) in policy.kernels.iter().enumerate() {
        for (key, row) in k {
            let mut r = Map::new();
            for (a, p) in row.iter().enumerate() {
                if p.is_positive() {
                    r.insert(codec.row[a].clone(), p.to_json());
                }
            }
            kernels.insert(codec.format_key(policy.class, n, key), Value::Object(r));
        }
    }
    let mut out = Map::new();
    out.insert("class".into(), Value::from(policy.class.name()));
    out.insert("randomized".into(), Value::from(policy.randomized));
    if !policy.class.is_stationary() {
        out.insert("horizon".into(), Value::from(policy.kernels.len()));
    }
    out.insert("kernels".into(), Value::Object(kernels));
    Value::Object(out)
}

pub fn parse_measure<P: Prob>(v: &Value, codec: Codec<'_>, num_states: usize, num_actions: usize) -> CliResult<StrategicMeasure<P>> {
    let obj = as_object(v, "measure")?;
    check_keys(obj, &["horizon", "support"], &[], "measure")?;
    let horizon = obj["horizon"].as_u64().ok_or_else(|| CliError::Input("horizon must be an integer".into()))? as usize;
    let mut support = BTreeMap::new();
    for (k, p) in as_object(&obj["support"], "support")? {
        let h = codec.parse_history(k)?;
        if h.len() != 2 * horizon {
            return bad(format!("history {k:?} does not have {horizon} stages"));
        }
        let p: P = parse_prob_value(p)?;
        if p < P::zero() {
            return bad(format!("negative mass on {k:?}"));
        }
        if support.insert(h, p).is_some() {
            return bad(format!("duplicate history {k:?}"));
        }
    }
    Ok(StrategicMeasure { horizon, num_states, num_actions, support })
}

pub fn write_measure<P: ProbJson>(m: &StrategicMeasure<P>, codec: Codec<'_>) -> Value {
    let support: Map<String, Value> = m.support.iter().map(|(h, p)| (codec.format_history(h), p.to_json())).collect();
    let mut out = Map::new();
    out.insert("horizon".into(), Value::from(m.horizon));
    out.insert("support".into(), Value::Object(support));
    Value::Object(out)
}

/// `"x"` (point mass) or `"x:p,y:q,..."`.
pub fn parse_p0<P: Prob>(s: &str, states: &[String]) -> CliResult<Vec<P>> {
    let mut p0 = vec![P::zero(); states.len()];
    if !s.contains(':') {
        p0[lookup(states, s, "state")?] = P::one();
        return Ok(p0);
    }
    for part in s.split(',') {
        let (x, p) = part.split_once(':').ok_or_else(|| CliError::Input(format!("bad p0 entry {part:?}")))?;
        let p = P::parse_prob(p.trim()).ok_or_else(|| CliError::Input(format!("cannot parse probability {p:?}")))?;
        p0[lookup(states, x, "state")?] = p;
    }
    Ok(p0)
}

/// `"v0,v1,..."` in state order or `"x:v,..."`.
pub fn parse_state_vector(s: &str, states: &[String]) -> CliResult<Vec<f64>> {
    let num = |t: &str| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| CliError::Input(format!("bad number {t:?}")));
    if s.contains(':') {
        let mut out = vec![0.0; states.len()];
        for part in s.split(',') {
            let (x, v) = part.split_once(':').unwrap_or((part, ""));
            out[lookup(states, x, "state")?] = num(v)?;
        }
        Ok(out)
    } else {
        let out: Vec<f64> = s.split(',').map(num).collect::<CliResult<_>>()?;
        if out.len() != states.len() {
            return bad(format!("expected {} values, got {}", states.len(), out.len()));
        }
        Ok(out)
    }
}
