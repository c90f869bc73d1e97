mod files;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use num_rational::BigRational;
use serde_json::{json, Map, Value};
use strategic::criteria::{evaluate, MonteCarloConfig};
use strategic::game::solve_matrix_game;
use strategic::measure::{decompose_nonrandomized, markov_reduction, recover_policy, strategic_measure, verify_membership};
use strategic::minimax::{
    best_response_p2, check_abs_continuity, greedy_strategies, minimax_operator, oe_residual, value_iteration, OeKind,
};
use strategic::optimize::{class_comparison, eps_optimal_policy, optimal_value};
use strategic::pomdp::{pomdp_criterion, pomdp_optimal_value, pomdp_strategic_measure, point_law};
use strategic::{CriterionKind, CriterionSpec, MeasureClass, Policy, PolicyClass, PsiFn};

use files::{
    bad, parse_measure, parse_p0, parse_policy, parse_state_vector, read_json, write_measure, write_policy, CliError,
    CliResult, Context, ModelFile, ModelKind, ProbJson,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Command {
    Evaluate,
    Measure,
    VerifyMeasure,
    RecoverPolicy,
    Decompose,
    MarkovReduce,
    SolveEnum,
    SolveVi,
    GameValue,
    OeResidual,
    BestResponse,
    CheckAc,
    PomdpEval,
    PomdpSolve,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PsiArg {
    Identity,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OeArg {
    Equation,
    Inequality,
}

/// Strategic measures, policy classes and minimax control on finite models.
#[derive(Debug, Parser)]
#[command(name = "strategic", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Model file (JSON).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Policy file (JSON); minimax commands accept {"player1": ..., "player2": ...}.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Measure file (JSON).
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Initial law, "x:prob,..." or a single state name.
    #[arg(long)]
    p0: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    criterion: Option<String>,
    /// Policy class, measure class, or a comma list of policy classes for solve-enum.
    #[arg(long)]
    class: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Rational arithmetic (measure, verify-measure, recover-policy, decompose, markov-reduce).
    #[arg(long)]
    exact: bool,
    /// ψ for PSI and HAT_PSI; defaults to exp when --beta > 0.
    #[arg(long, value_enum)]
    psi: Option<PsiArg>,
    /// Value vector, "v0,v1,..." in state order or "x:v,...".
    #[arg(long)]
    g: Option<String>,
    #[arg(long, value_enum, default_value_t = OeArg::Equation)]
    oe_kind: OeArg,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Largest number of policies any enumeration may visit.
    #[arg(long, default_value_t = 1_000_000)]
    cap: u64,
}

fn need<'a, T>(v: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    v.as_ref().ok_or_else(|| CliError::Input(format!("{flag} is required")))
}

impl Args {
    fn model(&self) -> CliResult<ModelFile> {
        ModelFile::load(need(&self.model, "--model")?)
    }

    fn cap(&self) -> u128 {
        u128::from(self.cap)
    }

    fn mc(&self, fallback_horizon: Option<usize>) -> MonteCarloConfig {
        let horizon = self.horizon.or(fallback_horizon).unwrap_or(200);
        MonteCarloConfig { samples: self.samples, horizon, seed: self.seed }
    }

    fn spec(&self, fallback_horizon: Option<usize>) -> CliResult<CriterionSpec> {
        let kind = CriterionKind::from_str(need(&self.criterion, "--criterion")?)?;
        let horizon = match self.horizon.or(fallback_horizon) {
            Some(h) => h,
            None if matches!(kind, CriterionKind::NStage | CriterionKind::Psi | CriterionKind::HatPsi) => {
                return bad(format!("{kind} needs --horizon"));
            }
            None => 200,
        };
        if kind == CriterionKind::Discounted && self.beta.is_none() {
            return bad("DISCOUNTED needs --beta");
        }
        if matches!(kind, CriterionKind::Cvar | CriterionKind::Var) && self.alpha.is_none() {
            return bad(format!("{kind} needs --alpha"));
        }
        let mut spec = CriterionSpec::new(kind).with_horizon(horizon);
        spec.beta = self.beta.unwrap_or(0.0);
        spec.alpha = self.alpha.unwrap_or(1.0);
        spec.psi = match self.psi {
            Some(PsiArg::Identity) => PsiFn::Identity,
            Some(PsiArg::Exp) => PsiFn::Exp,
            None if spec.beta > 0.0 => PsiFn::Exp,
            None => PsiFn::Identity,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn state_map(states: &[String], values: &[f64]) -> Value {
    Value::Object(states.iter().cloned().zip(values.iter().map(|&v| Value::from(v))).collect())
}

fn action_row<P: ProbJson>(names: &[String], row: &[P]) -> Value {
    Value::Object(
        row.iter().enumerate().filter(|(_, p)| p.is_positive()).map(|(a, p)| (names[a].clone(), p.to_json())).collect(),
    )
}

fn load_policy<P: ProbJson>(a: &Args, mf: &ModelFile, ctx: Context) -> CliResult<Policy<P>> {
    parse_policy(&read_json(need(&a.policy, "--policy")?)?, mf.codec(ctx))
}

/// Player-1 policy from a plain policy file or the "player1" entry of a pair.
fn load_player1(a: &Args, mf: &ModelFile) -> CliResult<(Policy, Option<Vec<Policy>>)> {
    let doc = read_json(need(&a.policy, "--policy")?)?;
    let Some(obj) = doc.as_object().filter(|o| o.contains_key("player1")) else {
        return Ok((parse_policy(&doc, mf.codec(Context::Player1))?, None));
    };
    if let Some(k) = obj.keys().find(|k| *k != "player1" && *k != "player2") {
        return bad(format!("unknown key {k:?} in policy pair"));
    }
    let pi1 = parse_policy(&obj["player1"], mf.codec(Context::Player1))?;
    let pi2 = match obj.get("player2") {
        None => None,
        Some(Value::Array(list)) => {
            Some(list.iter().map(|p| parse_policy(p, mf.codec(Context::Player2))).collect::<CliResult<Vec<_>>>()?)
        }
        Some(p) => Some(vec![parse_policy(p, mf.codec(Context::Player2))?]),
    };
    Ok((pi1, pi2))
}

fn horizon_for<P: ProbJson>(a: &Args, policy: &Policy<P>) -> CliResult<usize> {
    a.horizon.or(policy.horizon()).ok_or_else(|| CliError::Input("--horizon is required for stationary policies".into()))
}

fn cmd_evaluate(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.mdp::<f64>()?;
    let policy = load_policy::<f64>(a, mf, Context::Mdp)?;
    let p0 = parse_p0::<f64>(need(&a.p0, "--p0")?, &mf.states)?;
    let spec = a.spec(policy.horizon())?;
    let r = evaluate(&model, &policy, &p0, &spec, &a.mc(policy.horizon()))?;
    let mut out = Map::new();
    out.insert("criterion".into(), json!(spec.kind.name()));
    out.insert("value".into(), json!(r.value));
    out.insert("method".into(), json!(r.method.name()));
    out.insert("error_bound".into(), json!(r.error_bound));
    out.insert("horizon".into(), json!(r.horizon));
    out.insert("samples".into(), json!(r.samples));
    if !r.iterates.is_empty() {
        out.insert("iterates".into(), json!(r.iterates));
    }
    Ok(Value::Object(out))
}

fn cmd_measure<P: ProbJson>(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.mdp::<P>()?;
    let policy = load_policy::<P>(a, mf, Context::Mdp)?;
    let p0 = parse_p0::<P>(need(&a.p0, "--p0")?, &mf.states)?;
    let m = strategic_measure(&model, &policy, &p0, horizon_for(a, &policy)?)?;
    Ok(write_measure(&m, mf.codec(Context::Mdp)))
}

fn load_measure<P: ProbJson>(a: &Args, mf: &ModelFile) -> CliResult<strategic::StrategicMeasure<P>> {
    parse_measure(&read_json(need(&a.measure, "--measure")?)?, mf.codec(Context::Mdp), mf.states.len(), mf.actions.len())
}

fn measure_class(a: &Args) -> CliResult<MeasureClass> {
    Ok(a.class.as_deref().map(MeasureClass::from_str).transpose()?.unwrap_or(MeasureClass::S))
}

fn cmd_verify_measure<P: ProbJson>(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.mdp::<P>()?;
    let p = load_measure::<P>(a, mf)?;
    let report = verify_membership(&model, &p, measure_class(a)?);
    let mut out = Map::new();
    out.insert("class".into(), json!(report.class.to_string()));
    out.insert("member".into(), json!(report.member));
    out.insert("failures".into(), Value::Array(report.failures.iter().map(|f| json!(f.to_string())).collect()));
    if let Some(tg) = report.tilde_gamma {
        let rows = mf.states.iter().zip(&tg).map(|(x, row)| (x.clone(), action_row(&mf.actions, row))).collect();
        out.insert("tilde_gamma".into(), Value::Object(rows));
    }
    Ok(Value::Object(out))
}

fn cmd_recover_policy<P: ProbJson>(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.mdp::<P>()?;
    let p = load_measure::<P>(a, mf)?;
    let policy = recover_policy(&model, &p, measure_class(a)?)?;
    Ok(write_policy(&policy, mf.codec(Context::Mdp)))
}

fn cmd_decompose<P: ProbJson>(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.mdp::<P>()?;
    let policy = load_policy::<P>(a, mf, Context::Mdp)?;
    let p0 = parse_p0::<P>(need(&a.p0, "--p0")?, &mf.states)?;
    let d = decompose_nonrandomized(&model, &policy, &p0, horizon_for(a, &policy)?, a.cap())?;
    let components = d
        .components
        .iter()
        .map(|(f, w)| json!({"weight": w.to_json(), "policy": write_policy(f, mf.codec(Context::Mdp))}))
        .collect();
    Ok(json!({"weight_sum": d.weight_sum().to_json(), "components": Value::Array(components)}))
}

fn cmd_markov_reduce<P: ProbJson>(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.mdp::<P>()?;
    let policy = load_policy::<P>(a, mf, Context::Mdp)?;
    let p0 = parse_p0::<P>(need(&a.p0, "--p0")?, &mf.states)?;
    let reduced = markov_reduction(&model, &policy, &p0, horizon_for(a, &policy)?)?;
    Ok(write_policy(&reduced, mf.codec(Context::Mdp)))
}

fn cmd_solve_enum(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.mdp::<f64>()?;
    let classes = need(&a.class, "--class")?
        .split(',')
        .map(PolicyClass::from_str)
        .collect::<Result<Vec<_>, _>>()?;
    let spec = a.spec(None)?;
    let mc = a.mc(None);
    if classes.len() > 1 {
        let cmp = class_comparison(&model, &spec, &classes, &mc, a.cap())?;
        let names: Vec<&str> = cmp.classes.iter().map(|c| c.name()).collect();
        let g_star = names.iter().zip(&cmp.g_star).map(|(c, g)| (c.to_string(), state_map(&mf.states, g))).collect();
        let equal = names
            .iter()
            .zip(&cmp.equal)
            .map(|(c, row)| (c.to_string(), Value::Object(names.iter().map(|d| d.to_string()).zip(row.iter().map(|&b| json!(b))).collect())))
            .collect();
        return Ok(json!({
            "criterion": spec.kind.name(),
            "method": "enumeration",
            "g_star": Value::Object(g_star),
            "equal": Value::Object(equal),
        }));
    }
    let opt = optimal_value(&model, classes[0], &spec, &mc, a.cap())?;
    let codec = mf.codec(Context::Mdp);
    let argmin = mf.states.iter().enumerate().map(|(x, name)| (name.clone(), write_policy(opt.argmin_policy(x), codec))).collect();
    let mut out = Map::new();
    out.insert("criterion".into(), json!(spec.kind.name()));
    out.insert("class".into(), json!(opt.class.name()));
    out.insert("method".into(), json!(opt.method()));
    out.insert("label".into(), json!(opt.label.name()));
    out.insert("g_star".into(), state_map(&mf.states, &opt.g_star()));
    out.insert("argmin".into(), Value::Object(argmin));
    if let Some(eps) = a.epsilon {
        let e = eps_optimal_policy(&opt, eps)?;
        out.insert(
            "eps_optimal".into(),
            json!({"epsilon": eps, "values": state_map(&mf.states, &e.values), "policy": write_policy(&e.combined, codec)}),
        );
    }
    Ok(Value::Object(out))
}

fn cmd_solve_vi(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.minimax()?;
    let beta = *need(&a.beta, "--beta")?;
    let r = value_iteration(&model, beta, a.epsilon.unwrap_or(1e-8), a.max_iter)?;
    Ok(json!({
        "method": "value-iteration",
        "states": mf.states,
        "values": r.values,
        "iterations": r.iterations,
        "residual": r.residual,
    }))
}

fn cmd_game_value(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    if mf.kind == ModelKind::Matrix {
        let s = solve_matrix_game(&mf.matrix()?);
        return Ok(json!({"value": s.value, "row_strategy": s.row_strategy, "certificate": s.certificate}));
    }
    let model = mf.minimax()?;
    let g = match &a.g {
        Some(s) => parse_state_vector(s, &mf.states)?,
        None => vec![0.0; mf.states.len()],
    };
    let beta = a.beta.unwrap_or(0.0);
    let values = minimax_operator(&model, &g, beta);
    let actions1 = if mf.kind == ModelKind::Mdp { &mf.actions } else { &mf.actions1 };
    let strategies = mf
        .states
        .iter()
        .zip(greedy_strategies(&model, &g, beta))
        .map(|(x, row)| (x.clone(), action_row(actions1, &row)))
        .collect();
    Ok(json!({"states": mf.states, "values": values, "strategies": Value::Object(strategies)}))
}

fn cmd_oe_residual(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.minimax()?;
    let g = parse_state_vector(need(&a.g, "--g")?, &mf.states)?;
    let (kind, residual) = match a.beta {
        Some(beta) => {
            if !(0.0..1.0).contains(&beta) {
                return bad(format!("discount {beta} outside [0, 1)"));
            }
            let tg = minimax_operator(&model, &g, beta);
            ("discounted", g.iter().zip(&tg).map(|(v, t)| v - t).collect::<Vec<_>>())
        }
        None => match a.oe_kind {
            OeArg::Equation => ("equation", oe_residual(&model, &g, OeKind::Equation)?),
            OeArg::Inequality => ("inequality", oe_residual(&model, &g, OeKind::Inequality)?),
        },
    };
    let max_abs = residual.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    Ok(json!({"kind": kind, "states": mf.states, "residual": residual, "max_abs": max_abs}))
}

fn cmd_best_response(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.minimax()?;
    let (pi1, _) = load_player1(a, mf)?;
    let spec = a.spec(pi1.horizon())?;
    let br = best_response_p2(&model, &pi1, &spec, a.cap())?;
    Ok(json!({
        "criterion": spec.kind.name(),
        "horizon": spec.horizon,
        "values": state_map(&mf.states, &br.values),
        "policy": write_policy(&br.policy, mf.codec(Context::Player2)),
    }))
}

fn cmd_check_ac(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.minimax()?;
    let (pi1, pi2) = load_player1(a, mf)?;
    let horizon = horizon_for(a, &pi1)?;
    let report = check_abs_continuity(&model, &pi1, horizon, pi2.as_deref(), a.cap())?;
    let witness = report.witness.map_or(Value::Null, |w| {
        json!({
            "stage": w.stage,
            "initial_state": mf.states[w.initial_state],
            "info": mf.codec(Context::Player1).format_history(&w.info),
            "charged_by": w.charged_by,
            "missed_by": w.missed_by,
        })
    });
    Ok(json!({"holds": report.holds, "family_size": report.family_size, "witness": witness}))
}

/// Method label and error bound of a criterion computed from a finite-horizon
/// POMDP measure.
fn pomdp_method(spec: &CriterionSpec, max_abs_cost: f64) -> (&'static str, f64) {
    if spec.kind == CriterionKind::Discounted {
        ("truncated", spec.beta.powi(spec.horizon as i32) * max_abs_cost / (1.0 - spec.beta))
    } else {
        ("exact-measure", 0.0)
    }
}

fn max_abs_cost(model: &strategic::FiniteMdp) -> f64 {
    (0..model.num_states)
        .flat_map(|x| model.admissible[x].iter().map(move |&a| (x, a)))
        .fold(0.0_f64, |m, (x, a)| m.max(model.c(x, a).abs()))
}

fn cmd_pomdp_eval(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.pomdp()?;
    let policy = load_policy::<f64>(a, mf, Context::Pomdp)?;
    let p0 = parse_p0::<f64>(need(&a.p0, "--p0")?, &mf.states)?;
    let spec = a.spec(policy.horizon())?;
    let m = pomdp_strategic_measure(&model, &policy, &p0, spec.horizon)?;
    let value = pomdp_criterion(&model, &m, &spec)?;
    let (method, bound) = pomdp_method(&spec, max_abs_cost(&model.base));
    Ok(json!({
        "criterion": spec.kind.name(),
        "value": value,
        "method": method,
        "error_bound": bound,
        "horizon": spec.horizon,
    }))
}

fn cmd_pomdp_solve(a: &Args, mf: &ModelFile) -> CliResult<Value> {
    let model = mf.pomdp()?;
    let spec = a.spec(None)?;
    let (labels, laws): (Vec<String>, Vec<Vec<f64>>) = match &a.p0 {
        Some(s) => (vec![s.clone()], vec![parse_p0(s, &mf.states)?]),
        None => (mf.states.clone(), (0..mf.states.len()).map(|x| point_law(&model, x)).collect()),
    };
    let optima = pomdp_optimal_value(&model, &spec, &laws, a.cap())?;
    let (method, bound) = pomdp_method(&spec, max_abs_cost(&model.base));
    let rows = labels
        .into_iter()
        .zip(optima)
        .map(|(label, o)| {
            json!({
                "p0": label,
                "value": o.value,
                "evaluated": o.evaluated,
                "policy": write_policy(&o.policy, mf.codec(Context::Pomdp)),
            })
        })
        .collect();
    Ok(json!({
        "criterion": spec.kind.name(),
        "horizon": spec.horizon,
        "method": method,
        "error_bound": bound,
        "optima": Value::Array(rows),
    }))
}

fn run(a: &Args) -> CliResult<Value> {
    let mf = a.model()?;
    let generic = matches!(
        a.command,
        Command::Measure | Command::VerifyMeasure | Command::RecoverPolicy | Command::Decompose | Command::MarkovReduce
    );
    if a.exact && !generic {
        return bad("--exact is supported by measure, verify-measure, recover-policy, decompose and markov-reduce");
    }
    macro_rules! either {
        ($f:ident) => {
            if a.exact {
                $f::<BigRational>(a, &mf)
            } else {
                $f::<f64>(a, &mf)
            }
        };
    }
    match a.command {
        Command::Evaluate => cmd_evaluate(a, &mf),
        Command::Measure => either!(cmd_measure),
        Command::VerifyMeasure => either!(cmd_verify_measure),
        Command::RecoverPolicy => either!(cmd_recover_policy),
        Command::Decompose => either!(cmd_decompose),
        Command::MarkovReduce => either!(cmd_markov_reduce),
        Command::SolveEnum => cmd_solve_enum(a, &mf),
        Command::SolveVi => cmd_solve_vi(a, &mf),
        Command::GameValue => cmd_game_value(a, &mf),
        Command::OeResidual => cmd_oe_residual(a, &mf),
        Command::BestResponse => cmd_best_response(a, &mf),
        Command::CheckAc => cmd_check_ac(a, &mf),
        Command::PomdpEval => cmd_pomdp_eval(a, &mf),
        Command::PomdpSolve => cmd_pomdp_solve(a, &mf),
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&args) {
        Ok(report) => {
            match args.format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report).expect("reports are valid JSON")),
                Format::Table => print!("{}", table::render(&report)),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
