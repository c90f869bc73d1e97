//! End-to-end acceptance suite: one line per criterion, nonzero exit on any
//! failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::error::Error as StdError;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use strategic::criteria::{
    cvar, evaluate, expected_stage_costs, n_stage_cost, psi_criterion, var, FiniteDistribution, MonteCarloConfig,
};
use strategic::game::{solve_matrix_game, MatrixGame};
use strategic::measure::{decompose_nonrandomized, markov_reduction, recover_policy, strategic_measure, verify_membership};
use strategic::minimax::{
    check_abs_continuity, enumerate_player1, enumerate_player2, hat_sm_membership, minimax_operator, oe_residual,
    pair_strategic_measure, value_iteration, verify_factored_kernel, OeKind,
};
use strategic::model::dirac;
use strategic::optimize::{class_comparison, eps_optimal_policy, optimal_value};
use strategic::policy::{Kernel, MinimaxPolicyPair, DEFAULT_CAP};
use strategic::pomdp::{lift_measure, pomdp_strategic_measure, verify_pomdp_membership};
use strategic::{
    CriterionKind, CriterionSpec, Error, FiniteMdp, FinitePomdp, MeasureClass, MinimaxModel, Policy, PolicyClass, PsiFn,
    StrategicMeasure,
};

use common::*;

type Outcome = Result<String, Box<dyn StdError + Send + Sync>>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+).into());
        }
    };
}

const CLASSES: [PolicyClass; 5] = PolicyClass::ALL;

fn round_trip() -> Outcome {
    let mut r = rng(1);
    let (mut n, mut worst) = (0, 0.0_f64);
    for class in CLASSES {
        for _ in 0..100 {
            let ns = r.gen_range(1..=4);
            let na = r.gen_range(1..=3);
            let h = r.gen_range(1..=4);
            let model = random_mdp(&mut r, ns, na, 2);
            let p0 = random_p0(&mut r, ns);
            let pi = random_policy(&mut r, &model, class, h, &support(&p0), 0.5);
            let mc = MeasureClass::new(class, false);

            let p = strategic_measure(&model, &pi, &p0, h)?;
            let back = strategic_measure(&model, &recover_policy(&model, &p, mc)?, &p0, h)?;
            ensure!(back == p, "{class}: exact round trip changed the measure");

            let (mf, p0f) = (model.to_f64(), to_f64(&p0));
            let pf = strategic_measure(&mf, &pi.to_f64(), &p0f, h)?;
            let backf = strategic_measure(&mf, &recover_policy(&mf, &pf, mc)?, &p0f, h)?;
            let err = pf.max_abs_diff(&backf);
            ensure!(err <= 1e-9, "{class}: float round trip off by {err:e}");
            worst = worst.max(err);
            n += 1;
        }
    }
    Ok(format!("{n} instances; exact identity; float max error {worst:.1e}"))
}

fn mixture_representation() -> Outcome {
    let mut r = rng(2);
    let classes = [PolicyClass::History, PolicyClass::Markov, PolicyClass::SemiMarkov];
    let (mut components, mut worst) = (0, 0.0_f64);
    for i in 0..50 {
        let class = classes[i % 3];
        let (model, pi, p0, h, d) = loop {
            let ns = r.gen_range(1..=3);
            let na = r.gen_range(2..=3);
            let h = r.gen_range(1..=3);
            let model = random_mdp(&mut r, ns, na, 2).to_f64();
            let p0 = random_p0(&mut r, ns);
            let pi = random_policy(&mut r, &random_mdp_like(&model), class, h, &support(&p0), 0.5).to_f64();
            if !pi.randomized {
                continue;
            }
            let p0 = to_f64(&p0);
            match decompose_nonrandomized(&model, &pi, &p0, h, 20_000) {
                Ok(d) => break (model, pi, p0, h, d),
                Err(Error::CapExceeded { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        };
        ensure!((d.weight_sum() - 1.0).abs() <= 1e-9, "weights sum to {}", d.weight_sum());
        let target = strategic_measure(&model, &pi, &p0, h)?;
        let err = d.mixture_measure(&model, &p0, h)?.max_abs_diff(&target);
        ensure!(err <= 1e-9, "{class}: mixture off by {err:e}");
        worst = worst.max(err);
        for (f, _) in &d.components {
            ensure!(!f.randomized, "randomized component");
            ensure!(class != PolicyClass::Markov || f.class == PolicyClass::Markov, "Markov input gave {}", f.class);
            let fm = strategic_measure(&model, f, &p0, h)?;
            let rep = verify_membership(&model, &fm, MeasureClass::new(class.stagewise(), true));
            ensure!(rep.member, "component fails its nonrandomized class: {:?}", rep.failures);
        }
        components += d.components.len();
    }
    Ok(format!("50 policies, {components} components, max error {worst:.1e}"))
}

/// Rational copy of a float model whose rows are exact binary fractions.
fn random_mdp_like(m: &FiniteMdp) -> FiniteMdp<Q> {
    let mut out = FiniteMdp::empty(m.num_states, m.num_actions);
    out.admissible = m.admissible.clone();
    out.cost = m.cost.clone();
    out.transition = m
        .transition
        .iter()
        .map(|row| row.iter().map(|t| t.as_ref().map(|r| r.iter().map(|&p| Q::from_float(p).unwrap()).collect())).collect())
        .collect();
    out
}

fn kernel(entries: &[(&[usize], &[f64])]) -> Kernel<f64> {
    entries.iter().map(|(k, r)| (k.to_vec(), r.to_vec())).collect()
}

fn membership_fixtures() -> Outcome {
    let m = m1::<f64>();
    m.clone().validated()?;
    let half = [0.5, 0.5];
    let (a, b) = (&[1.0, 0.0][..], &[0.0, 1.0][..]);
    let mixed = &[0.5, 0.5][..];
    use PolicyClass::*;
    // (name, policy, p0, classes its measure belongs to, randomized)
    let witnesses: Vec<(&str, Policy, Vec<f64>, Vec<PolicyClass>, bool)> = vec![
        (
            "stationary mixed",
            Policy::new(Stationary, true, vec![kernel(&[(&[0], mixed), (&[1], a)])])?,
            dirac(2, 0),
            CLASSES.to_vec(),
            true,
        ),
        (
            "stationary b",
            Policy::new(Stationary, false, vec![kernel(&[(&[0], b), (&[1], a)])])?,
            half.to_vec(),
            CLASSES.to_vec(),
            false,
        ),
        (
            "markov b-then-a",
            Policy::new(
                Markov,
                false,
                vec![kernel(&[(&[0], b), (&[1], a)]), kernel(&[(&[0], a), (&[1], a)]), kernel(&[(&[0], a), (&[1], a)])],
            )?,
            dirac(2, 0),
            vec![Markov, SemiMarkov, History],
            false,
        ),
        (
            "semi-stationary",
            Policy::new(SemiStationary, false, vec![kernel(&[(&[0, 0], a), (&[1, 0], b), (&[0, 1], a), (&[1, 1], a)])])?,
            half.to_vec(),
            vec![SemiStationary, SemiMarkov, History],
            false,
        ),
        (
            "history-dependent",
            Policy::new(
                History,
                true,
                vec![
                    kernel(&[(&[0], mixed)]),
                    kernel(&[(&[0, 0, 0], a), (&[0, 1, 1], a)]),
                    kernel(&[(&[0, 0, 0, 0, 0], a), (&[0, 0, 0, 1, 1], a), (&[0, 1, 1, 0, 0], b)]),
                ],
            )?,
            dirac(2, 0),
            vec![History],
            true,
        ),
    ];
    let mut checks = 0;
    for (name, pi, p0, members, randomized) in &witnesses {
        let p = strategic_measure(&m, pi, p0, 3)?;
        for class in CLASSES {
            for nonrand in [false, true] {
                let expected = members.contains(&class) && !(nonrand && *randomized);
                let rep = verify_membership(&m, &p, MeasureClass::new(class, nonrand));
                ensure!(rep.member == expected, "{name} in {}: got {}, expected {expected}", rep.class, rep.member);
                checks += 1;
            }
        }
    }

    // Constant observation: acting on the hidden state is not admissible.
    let mut base = m1::<f64>();
    base.set(1, 1, vec![0.5, 0.5], 2.0);
    let blind = FinitePomdp::new(base.clone(), 1, vec![0, 0])?;
    let seen = FinitePomdp::fully_observed(base.clone());
    let feedback = Policy::deterministic_stationary(&[0, 1], 2);
    let open_loop = Policy::deterministic_stationary(&[1], 2);
    let coin = Policy::stationary(vec![vec![0.5, 0.5]]);
    let fb = strategic_measure(&base, &feedback, &half, 2)?;
    let cases = [
        ("state feedback, blind", verify_pomdp_membership(&blind, &lift_measure(&blind, &fb), false).member, false),
        ("state feedback, observed", verify_pomdp_membership(&seen, &lift_measure(&seen, &fb), true).member, true),
        ("open loop", verify_pomdp_membership(&blind, &pomdp_strategic_measure(&blind, &open_loop, &half, 2)?, true).member, true),
        ("coin", verify_pomdp_membership(&blind, &pomdp_strategic_measure(&blind, &coin, &half, 2)?, false).member, true),
        ("coin, nonrandomized", verify_pomdp_membership(&blind, &pomdp_strategic_measure(&blind, &coin, &half, 2)?, true).member, false),
    ];
    for (name, got, expected) in cases {
        ensure!(got == expected, "POMDP {name}: got {got}, expected {expected}");
        checks += 1;
    }
    Ok(format!("{checks} fixture checks, no false positives or negatives"))
}

fn markov_reduction_check() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let class = CLASSES[i % 5];
        let ns = r.gen_range(1..=4);
        let na = r.gen_range(1..=3);
        let h = r.gen_range(1..=4);
        let exact = random_mdp(&mut r, ns, na, 2);
        let p0 = random_p0(&mut r, ns);
        let pi = random_policy(&mut r, &exact, class, h, &support(&p0), 0.6).to_f64();
        let (model, p0) = (exact.to_f64(), to_f64(&p0));
        let reduced = markov_reduction(&model, &pi, &p0, h)?;
        ensure!(reduced.class == PolicyClass::Markov, "reduction returned {}", reduced.class);
        let (p, pr) = (strategic_measure(&model, &pi, &p0, h)?, strategic_measure(&model, &reduced, &p0, h)?);
        for n in 0..h {
            let (g, gr) = (p.gamma(n), pr.gamma(n));
            for x in 0..ns {
                worst = worst.max(sup_dist(&g[x], &gr[x]));
            }
            for j in 0..h - n {
                let d = (n_stage_cost(&model, &pi, &p0, n + 1, j)? - n_stage_cost(&model, &reduced, &p0, n + 1, j)?).abs();
                worst = worst.max(d);
            }
        }
        ensure!(worst <= 1e-12, "instance {i} ({class}): marginals or costs differ by {worst:e}");
    }
    let mut compared = 0;
    while compared < 10 {
        let ns = r.gen_range(1..=3);
        let h = r.gen_range(1..=3);
        let model = random_mdp(&mut r, ns, 2, 2).to_f64();
        let spec = CriterionSpec::n_stage(h);
        let cmp = match class_comparison(&model, &spec, &[PolicyClass::History, PolicyClass::Markov], &MonteCarloConfig::default(), 50_000) {
            Ok(c) => c,
            Err(Error::CapExceeded { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        ensure!(cmp.equal[0][1], "History {:?} vs Markov {:?}", cmp.g_star[0], cmp.g_star[1]);
        compared += 1;
    }
    Ok(format!("100 reductions, max deviation {worst:.1e}; History = Markov on {compared} instances"))
}

fn ru_objective(atoms: &[(f64, f64)], alpha: f64, z: f64) -> f64 {
    z + atoms.iter().map(|(v, p)| p * (v - z).max(0.0)).sum::<f64>() / alpha
}

fn criteria_identities() -> Outcome {
    let mut r = rng(5);
    let alphas = [0.05, 0.1, 0.25, 0.5, 0.9, 1.0];
    for _ in 0..100 {
        let k = r.gen_range(1..=6);
        let raw: Vec<(f64, f64)> = (0..k).map(|_| (r.gen_range(0..20) as f64 / 2.0, r.gen_range(1..=9) as f64)).collect();
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        let d = FiniteDistribution::new(raw.iter().map(|&(v, w)| (v, w / total)).collect())?;
        ensure!((cvar(&d, 1.0)? - d.mean()).abs() <= 1e-12, "CVaR_1 {} vs mean {}", cvar(&d, 1.0)?, d.mean());
        for &alpha in &alphas {
            let (c, v) = (cvar(&d, alpha)?, var(&d, alpha)?);
            ensure!(c >= v - 1e-12, "CVaR {c} < VaR {v} at {alpha}");
            for (s, t) in [(0.5, -3.0), (2.0, 1.5), (3.7, 0.0)] {
                let e = d.affine(s, t)?;
                ensure!((cvar(&e, alpha)? - (s * c + t)).abs() <= 1e-9, "CVaR not equivariant");
                ensure!((var(&e, alpha)? - (s * v + t)).abs() <= 1e-9, "VaR not equivariant");
            }
            // Grid k/1000 on [0, 9.999] contains every atom.
            let grid = (0..10_000).map(|k| ru_objective(d.atoms(), alpha, k as f64 / 1000.0)).fold(f64::INFINITY, f64::min);
            ensure!((grid - c).abs() <= 1e-9, "grid minimum {grid} vs support-point CVaR {c}");
        }
        let point = FiniteDistribution::point(d.mean());
        for &alpha in &alphas {
            ensure!(cvar(&point, alpha)? == d.mean() && var(&point, alpha)? == d.mean(), "degenerate law");
        }
    }

    let mc = MonteCarloConfig::default();
    let mut spread = 0.0_f64;
    for _ in 0..30 {
        let ns = r.gen_range(2..=4);
        let na = r.gen_range(1..=3);
        let model = random_full_support_mdp(&mut r, ns, na);
        let rows: Vec<Vec<f64>> = (0..ns)
            .map(|_| {
                let w: Vec<f64> = (0..na).map(|_| r.gen_range(0.0..1.0)).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|v| v / t).collect()
            })
            .collect();
        let pi = Policy::stationary(rows);
        let p0 = to_f64(&random_p0(&mut r, ns));
        let kinds = [
            CriterionKind::J1,
            CriterionKind::J2,
            CriterionKind::J3,
            CriterionKind::J4,
            CriterionKind::TJ1,
            CriterionKind::TJ2,
            CriterionKind::TJ3,
            CriterionKind::TJ4,
        ];
        let vals: Vec<f64> = kinds
            .iter()
            .map(|&k| evaluate(&model, &pi, &p0, &CriterionSpec::new(k), &mc).map(|e| e.value))
            .collect::<Result<_, _>>()?;
        let risk = [CriterionSpec::cvar(0.3), CriterionSpec::var(0.3)]
            .iter()
            .map(|s| evaluate(&model, &pi, &p0, s, &mc).map(|e| e.value))
            .collect::<Result<Vec<_>, _>>()?;
        let (lo, hi) = vals.iter().chain(&risk).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        spread = spread.max(hi - lo);
        ensure!(hi - lo <= 1e-10, "unichain criteria spread {:e}: {vals:?} {risk:?}", hi - lo);
    }

    for i in 0..30 {
        let class = [PolicyClass::Stationary, PolicyClass::Markov, PolicyClass::History][i % 3];
        let ns = r.gen_range(1..=3);
        let exact = random_mdp(&mut r, ns, 2, 2);
        let p0 = random_p0(&mut r, ns);
        let h = 6;
        let pi = random_policy(&mut r, &exact, class, h, &support(&p0), 0.5).to_f64();
        let (model, p0) = (exact.to_f64(), to_f64(&p0));
        let res = psi_criterion(&model, &pi, &p0, PsiFn::Identity, 0.0, CriterionKind::Psi, h)?;
        let e = expected_stage_costs(&model, &pi, &p0, h)?;
        let mut s = 0.0;
        for n in 1..=h {
            s += e[n - 1];
            ensure!(res.iterates[n - 1] == s / n as f64, "iterate {n}: {} vs Cesàro {}", res.iterates[n - 1], s / n as f64);
            let jn = n_stage_cost(&model, &pi, &p0, n, 0)? / n as f64;
            ensure!((res.iterates[n - 1] - jn).abs() <= 1e-12, "iterate {n}: {} vs J_n / n {jn}", res.iterates[n - 1]);
        }
    }
    Ok(format!("100 laws; unichain spread {spread:.1e}; 30 identity-ψ runs exact"))
}

fn minimax_instances() -> Vec<(MinimaxModel, f64)> {
    let mut r = rng(6);
    let betas = [0.5, 0.7, 0.9];
    (0..20)
        .map(|i| {
            let ns = r.gen_range(1..=4);
            let n1 = r.gen_range(1..=3);
            let n2 = r.gen_range(1..=3);
            (random_minimax(&mut r, ns, n1, n2, 3), betas[i % 3])
        })
        .collect()
}

fn solve_vi(model: &MinimaxModel, beta: f64) -> Result<(Vec<f64>, f64), Error> {
    let c = model.max_abs_cost().max(1e-3);
    let tol = (0.5 * beta.powi(40) * c / (1.0 - beta)).min(1e-9);
    let res = value_iteration(model, beta, tol, 1_000_000)?;
    Ok((res.values, tol))
}

fn minimax_operator_check() -> Outcome {
    let mut r = rng(7);
    let mut factor = 0.0_f64;
    let instances = minimax_instances();
    for (model, _) in &instances {
        for _ in 0..5 {
            let beta = r.gen_range(0.0..1.0);
            let v: Vec<f64> = (0..model.num_states).map(|_| r.gen_range(-5.0..5.0)).collect();
            let w: Vec<f64> = (0..model.num_states).map(|_| r.gen_range(-5.0..5.0)).collect();
            let d = sup_dist(&v, &w);
            let f = sup_dist(&minimax_operator(model, &v, beta), &minimax_operator(model, &w, beta)) / d;
            ensure!(f <= beta + 1e-12, "contraction factor {f} > beta {beta}");
            factor = factor.max(f - beta);
        }
    }
    let mut worst_gap = 0.0_f64;
    for (model, beta) in &instances {
        let (values, _) = solve_vi(model, *beta)?;
        let res = sup_dist(&oracle_operator(model, &values, *beta), &values);
        ensure!(res <= 1e-8, "VI residual {res:e}");
        let mut bi = vec![0.0; model.num_states];
        for _ in 0..40 {
            bi = oracle_operator(model, &bi, *beta);
        }
        let bound = 2.0 * beta.powi(40) * model.max_abs_cost() / (1.0 - beta);
        let gap = sup_dist(&values, &bi);
        ensure!(gap <= bound, "VI vs backward induction {gap:e} > {bound:e}");
        worst_gap = worst_gap.max(gap / bound.max(f64::MIN_POSITIVE));
    }
    let p = pennies();
    for beta in [0.0, 0.5, 0.9] {
        let v = value_iteration(&p, beta, 1e-10, 100_000)?.values[0];
        ensure!((v - 0.5 / (1.0 - beta)).abs() <= 1e-8, "pennies at {beta}: {v}");
    }
    Ok(format!("100 pairs (max excess {factor:.1e}); 20 VI runs within {:.0}% of the bound; pennies exact", 100.0 * worst_gap))
}

fn matrix_games() -> Outcome {
    let mut r = rng(8);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let (m, n) = (r.gen_range(1..=5), r.gen_range(1..=5));
        let g = MatrixGame::new((0..m).map(|_| (0..n).map(|_| r.gen_range(-5.0..5.0)).collect()).collect())?;
        let s = solve_matrix_game(&g);
        let dual = solve_matrix_game(&g.negated_transpose());
        let oracle = game_value_oracle(&g.payoff);
        let gap = (s.value + dual.value).abs().max((s.value - oracle).abs());
        ensure!(gap <= 1e-9, "{:?}: value {} dual {} oracle {oracle}", g.payoff, s.value, dual.value);
        ensure!(s.row_strategy.iter().all(|&p| p >= 0.0) && (s.row_strategy.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "strategy");
        ensure!(s.certificate <= s.value + 1e-9, "certificate {} > value {}", s.certificate, s.value);
        worst = worst.max(gap);
    }
    for (g, v) in [
        (vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.5),
        (vec![vec![0.0, 0.0], vec![1.0, 1.0]], 0.0),
        (vec![vec![3.0, 1.0], vec![0.0, 2.0]], 1.5),
    ] {
        let s = solve_matrix_game(&MatrixGame::new(g.clone())?);
        ensure!((s.value - v).abs() <= 1e-9, "{g:?}: {} vs {v}", s.value);
    }
    Ok(format!("200 random games, max duality/oracle gap {worst:.1e}; 3 closed forms"))
}

fn info_mass(model: &MinimaxModel, p: &StrategicMeasure, stage: usize, info: &[usize]) -> f64 {
    p.support.iter().filter(|(h, _)| model.info_of_history(&h[..2 * stage + 1]) == info).map(|(_, w)| w).sum()
}

fn measure_key(p: &StrategicMeasure) -> Vec<(Vec<usize>, i64)> {
    p.support.iter().map(|(h, w)| (h.clone(), (w * 1e12).round() as i64)).collect()
}

fn assumption_one() -> Outcome {
    let (model, eta) = factored_game();
    let m = model.clone().validated()?;
    let f = |y: usize, x: usize, a1: usize, a2: usize| {
        let w: f64 = (0..2).map(|z| eta[x][a1][z] * (1.0 + a2 as f64 * (z as f64 + 1.0))).sum();
        (1.0 + a2 as f64 * (y as f64 + 1.0)) / w
    };
    ensure!(verify_factored_kernel(&m, f, |x, a1| eta[x][a1].clone()), "factored kernel not certified");
    let (independent, _) = {
        let mut g = MinimaxModel::empty(2, 2, 2);
        for x in 0..2 {
            for a1 in 0..2 {
                for a2 in 0..2 {
                    g.set(x, a1, a2, eta[x][a1].clone(), (a1 * a2) as f64);
                }
            }
        }
        (g, ())
    };
    ensure!(verify_factored_kernel(&independent, |_, _, _, _| 1.0, |x, a1| eta[x][a1].clone()), "a2-free kernel");
    let mut rr = rng(9);
    for game in [&m, &independent] {
        for _ in 0..3 {
            let rows: Vec<Vec<Vec<f64>>> = (0..2)
                .map(|_| (0..2).map(|_| { let p = rr.gen_range(0.0..=1.0); vec![p, 1.0 - p] }).collect())
                .collect();
            let pi1 = Policy::markov(rows);
            let rep = check_abs_continuity(game, &pi1, 2, None, DEFAULT_CAP)?;
            ensure!(rep.holds, "factored fixture fails absolute continuity: {:?}", rep.witness);
        }
    }

    // Player 2 picks the successor outright.
    let mut split = MinimaxModel::empty(2, 1, 2);
    for x in 0..2 {
        split.set(x, 0, 0, vec![1.0, 0.0], 0.0).set(x, 0, 1, vec![0.0, 1.0], 1.0);
    }
    let pi1 = Policy::deterministic_stationary(&[0, 0], 1);
    let family = [Policy::deterministic_stationary(&[0, 0], 2), Policy::deterministic_stationary(&[1, 1], 2)];
    let rep = check_abs_continuity(&split, &pi1, 2, Some(&family), DEFAULT_CAP)?;
    ensure!(!rep.holds, "disjoint supports reported continuous");
    let w = rep.witness.ok_or("no witness")?;
    let measure = |i: usize| {
        let pair = MinimaxPolicyPair { pi1: pi1.clone(), pi2: family[i].clone() };
        pair_strategic_measure(&split, &pair, &dirac(2, w.initial_state), w.stage + 1)
    };
    ensure!(info_mass(&split, &measure(w.charged_by)?, w.stage, &w.info) > 0.0, "witness not charged");
    ensure!(info_mass(&split, &measure(w.missed_by)?, w.stage, &w.info) == 0.0, "witness charged by both");

    let (mut members, mut pairs) = (0usize, 0usize);
    for x0 in 0..2 {
        let p0 = dirac(2, x0);
        let p1s = enumerate_player1(&m, x0, 2, DEFAULT_CAP)?;
        let p2s = enumerate_player2(&m, x0, 2, DEFAULT_CAP)?;
        let rows: Vec<Vec<StrategicMeasure>> = p1s
            .par_iter()
            .map(|pi1| {
                p2s.iter()
                    .map(|pi2| pair_strategic_measure(&m, &MinimaxPolicyPair { pi1: pi1.clone(), pi2: pi2.clone() }, &p0, 2))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        // Distinct measures, each with the orbit of one generating player-1 policy.
        let mut distinct: BTreeMap<Vec<(Vec<usize>, i64)>, (StrategicMeasure, usize)> = BTreeMap::new();
        let orbits: Vec<BTreeSet<Vec<(Vec<usize>, i64)>>> = rows.iter().map(|row| row.iter().map(measure_key).collect()).collect();
        for (i, row) in rows.iter().enumerate() {
            for p in row {
                distinct.entry(measure_key(p)).or_insert_with(|| (p.clone(), i));
            }
        }
        let list: Vec<_> = distinct.into_iter().collect();
        let (m, orbits, list) = (&m, &orbits, &list);
        let mismatches: Vec<String> = list
            .par_iter()
            .flat_map_iter(|(_, (p, i))| {
                list.iter().filter_map(move |(key_prime, (p_prime, _))| {
                    let orbit = orbits[*i].contains(key_prime);
                    match hat_sm_membership(m, p, p_prime) {
                        Ok(rep) if rep.member == orbit => None,
                        Ok(rep) => Some(format!("x0 {x0}: hat {} vs orbit {orbit}", rep.member)),
                        Err(e) => Some(e.to_string()),
                    }
                })
            })
            .collect();
        ensure!(mismatches.is_empty(), "{} mismatches, first: {}", mismatches.len(), mismatches[0]);
        pairs += list.len() * list.len();
        members += list.iter().map(|(_, (_, i))| list.iter().filter(|(k, _)| orbits[*i].contains(k)).count()).sum::<usize>();
    }
    ensure!(members > 0 && members < pairs, "degenerate enumeration");
    Ok(format!("factored fixtures certified; witness at stage {}; hat-S_M = orbit on {pairs} pairs ({members} members)", w.stage))
}

/// `lim_n P^n r` for a chain whose closed classes are aperiodic.
fn limit_average(p: &[Vec<f64>], r: &[f64]) -> Vec<f64> {
    let mut v = r.to_vec();
    for _ in 0..500 {
        v = p.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
    }
    v
}

/// `min` over a 1/20 grid of stationary player-1 mixtures of `max` over
/// deterministic stationary player-2 policies of the average cost.
fn brute_force_gain(model: &MinimaxModel) -> Vec<f64> {
    let ns = model.num_states;
    let mixes = |x: usize| -> Vec<Vec<f64>> {
        let adm = &model.admissible1[x];
        let mut out = Vec::new();
        if adm.len() == 1 {
            out.push(dirac(model.num_actions1, adm[0]));
        } else {
            for k in 0..=20 {
                let mut row = vec![0.0; model.num_actions1];
                row[adm[0]] = k as f64 / 20.0;
                row[adm[1]] = 1.0 - k as f64 / 20.0;
                out.push(row);
            }
        }
        out
    };
    let per_state1: Vec<Vec<Vec<f64>>> = (0..ns).map(mixes).collect();
    let product = |sizes: Vec<usize>| -> Vec<Vec<usize>> {
        sizes.iter().fold(vec![vec![]], |acc, &k| acc.iter().flat_map(|p| (0..k).map(move |i| [p.clone(), vec![i]].concat())).collect())
    };
    let mut best = vec![f64::INFINITY; ns];
    for pick1 in product(per_state1.iter().map(Vec::len).collect()) {
        let mut worst = vec![f64::NEG_INFINITY; ns];
        for pick2 in product((0..ns).map(|x| model.admissible2[x].len()).collect()) {
            let mut p = vec![vec![0.0; ns]; ns];
            let mut r = vec![0.0; ns];
            for x in 0..ns {
                let a2 = model.admissible2[x][pick2[x]];
                for (a1, &w) in per_state1[x][pick1[x]].iter().enumerate().filter(|(_, w)| **w > 0.0) {
                    r[x] += w * model.c(x, a1, a2);
                    for (y, &t) in model.q(x, a1, a2).iter().enumerate() {
                        p[x][y] += w * t;
                    }
                }
            }
            for (w, v) in worst.iter_mut().zip(limit_average(&p, &r)) {
                *w = w.max(v);
            }
        }
        for (b, w) in best.iter_mut().zip(worst) {
            *b = b.min(w);
        }
    }
    best
}

fn optimality_equations() -> Outcome {
    // Player 2 routes from state 0; player 1 may leave state 2 for an
    // expensive trap.
    let mut routed = MinimaxModel::empty(4, 2, 2);
    routed
        .set(0, 0, 0, vec![0.0, 1.0, 0.0, 0.0], 0.0)
        .set(0, 0, 1, vec![0.0, 0.0, 1.0, 0.0], 0.0)
        .set(1, 0, 0, vec![0.0, 1.0, 0.0, 0.0], 1.0)
        .set(2, 0, 0, vec![0.0, 0.0, 1.0, 0.0], 2.0)
        .set(2, 1, 0, vec![0.0, 0.0, 0.0, 1.0], 5.0)
        .set(3, 0, 0, vec![0.0, 0.0, 0.0, 1.0], 4.0);
    // A one-shot matching game decides between a free and a costly sink.
    let mut matching = MinimaxModel::empty(3, 2, 2);
    matching
        .set(0, 0, 0, vec![0.0, 1.0, 0.0], 0.0)
        .set(0, 0, 1, vec![0.0, 0.0, 1.0], 0.0)
        .set(0, 1, 0, vec![0.0, 0.0, 1.0], 0.0)
        .set(0, 1, 1, vec![0.0, 1.0, 0.0], 0.0)
        .set(1, 0, 0, vec![0.0, 1.0, 0.0], 0.0)
        .set(2, 0, 0, vec![0.0, 0.0, 1.0], 1.0);
    let mut report = Vec::new();
    for (name, model, expected) in [("routed", routed, vec![2.0, 1.0, 2.0, 4.0]), ("matching", matching, vec![0.5, 0.0, 1.0])] {
        let model = model.validated()?;
        let g = brute_force_gain(&model);
        ensure!(sup_dist(&g, &expected) <= 1e-12, "{name}: brute force gave {g:?}");
        let eq = oe_residual(&model, &g, OeKind::Equation)?;
        let res = eq.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        ensure!(res <= 1e-8, "{name}: equation residual {res:e}");
        let ineq = oe_residual(&model, &g, OeKind::Inequality)?;
        ensure!(ineq.iter().all(|&v| v == 0.0), "{name}: inequality violated {ineq:?}");
        report.push(format!("{name} residual {res:.1e}"));
    }
    let mut worst = 0.0_f64;
    for (model, beta) in minimax_instances() {
        let (values, _) = solve_vi(&model, beta)?;
        let res = sup_dist(&oracle_operator(&model, &values, beta), &values);
        ensure!(res <= 1e-8, "discounted residual {res:e}");
        worst = worst.max(res);
    }
    Ok(format!("{}; discounted residual {worst:.1e} on 20 instances", report.join(", ")))
}

fn eps_contract() -> Outcome {
    let mut r = rng(10);
    let mut fixtures: Vec<(FiniteMdp, usize)> = vec![(m1(), 3)];
    for _ in 0..3 {
        let ns = r.gen_range(2..=3);
        fixtures.push((random_mdp(&mut r, ns, 2, 2).to_f64(), 2));
    }
    let mc = MonteCarloConfig::default();
    let stationary = [PolicyClass::Stationary, PolicyClass::SemiStationary];
    let mut checks = 0;
    for (model, h) in &fixtures {
        let mut cases: Vec<(CriterionSpec, Vec<PolicyClass>)> = vec![
            (CriterionSpec::n_stage(*h), CLASSES.to_vec()),
            (CriterionSpec::discounted(0.8, *h), CLASSES.to_vec()),
            (CriterionSpec::psi(PsiFn::Exp, 0.5, *h), vec![PolicyClass::Markov, PolicyClass::Stationary]),
            (CriterionSpec::new(CriterionKind::HatPsi).with_horizon(*h), vec![PolicyClass::SemiMarkov]),
        ];
        for kind in [CriterionKind::J1, CriterionKind::J3, CriterionKind::TJ1, CriterionKind::TJ4] {
            cases.push((CriterionSpec::new(kind), stationary.to_vec()));
        }
        cases.push((CriterionSpec::cvar(0.3), stationary.to_vec()));
        cases.push((CriterionSpec::var(0.3), stationary.to_vec()));
        for (spec, classes) in cases {
            for class in classes {
                let tag = |e: Error| format!("{} {class}: {e}", spec.kind);
                let opt = optimal_value(model, class, &spec, &mc, DEFAULT_CAP).map_err(tag)?;
                for eps in [1e-3, 1e-1] {
                    let chosen = eps_optimal_policy(&opt, eps).map_err(tag)?;
                    for x in 0..model.num_states {
                        let v = evaluate(model, &chosen.combined, &dirac(model.num_states, x), &spec, &mc).map_err(tag)?.value;
                        let g = opt.per_state[x].value;
                        ensure!((v - g).abs() <= eps, "{} {class} from {x}: {v} vs g* {g} (eps {eps})", spec.kind);
                        checks += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{checks} re-evaluations within eps"))
}

fn main() {
    let start = Instant::now();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("round trip", round_trip),
        ("mixture representation", mixture_representation),
        ("membership characterizations", membership_fixtures),
        ("Markov reduction", markov_reduction_check),
        ("criteria identities", criteria_identities),
        ("minimax operator", minimax_operator_check),
        ("matrix games", matrix_games),
        ("absolute continuity", assumption_one),
        ("optimality equations", optimality_equations),
        ("eps-optimality", eps_contract),
    ];
    let results: Vec<(Outcome, f64)> = criteria
        .par_iter()
        .map(|(_, f)| {
            let t = Instant::now();
            let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
                let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
                Err(format!("panicked: {}", msg.unwrap_or_default()).into())
            });
            (out, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut failed = 0;
    for (i, ((name, _), (out, secs))) in criteria.iter().zip(&results).enumerate() {
        match out {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.2}s): {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.2}s): {e}", i + 1);
            }
        }
    }
    let total = start.elapsed().as_secs_f64();
    println!("acceptance: {} of 10 passed in {total:.1}s", 10 - failed);
    if total > 60.0 {
        println!("acceptance: FAIL  suite exceeded 60 s");
        failed += 1;
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
