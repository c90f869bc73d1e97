//! Generators, fixtures and independent oracles shared by the integration
//! tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strategic::policy::{reachable_histories, Kernel};
use strategic::{FiniteMdp, MinimaxModel, Policy, PolicyClass};

pub type Q = BigRational;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Law with small integer weights on a random nonempty subset (at most
/// `max_support` points) of `allowed`.
pub fn random_row(rng: &mut ChaCha8Rng, len: usize, allowed: &[usize], max_support: usize) -> Vec<Q> {
    let k = rng.gen_range(1..=max_support.min(allowed.len()).max(1));
    let mut pts = allowed.to_vec();
    pts.shuffle(rng);
    pts.truncate(k);
    let w: Vec<i64> = pts.iter().map(|_| rng.gen_range(1..=5)).collect();
    let total: i64 = w.iter().sum();
    let mut row = vec![Q::zero(); len];
    for (&p, &wi) in pts.iter().zip(&w) {
        row[p] = q(wi, total);
    }
    row
}

/// Random MDP with rational kernels, integer costs in `0..=5` and at most
/// `max_support` successors per pair.
pub fn random_mdp(rng: &mut ChaCha8Rng, ns: usize, na: usize, max_support: usize) -> FiniteMdp<Q> {
    let mut m = FiniteMdp::empty(ns, na);
    let states: Vec<usize> = (0..ns).collect();
    for x in 0..ns {
        let mut acts: Vec<usize> = (0..na).collect();
        acts.shuffle(rng);
        acts.truncate(rng.gen_range(1..=na));
        acts.sort_unstable();
        for a in acts {
            let row = random_row(rng, ns, &states, max_support);
            m.set(x, a, row, rng.gen_range(0..=5) as f64);
        }
    }
    m
}

/// Random MDP whose every transition row has full support.
pub fn random_full_support_mdp(rng: &mut ChaCha8Rng, ns: usize, na: usize) -> FiniteMdp<f64> {
    let mut m = FiniteMdp::empty(ns, na);
    for x in 0..ns {
        for a in 0..na {
            let w: Vec<f64> = (0..ns).map(|_| rng.gen_range(0.1..1.0)).collect();
            let t: f64 = w.iter().sum();
            m.set(x, a, w.iter().map(|v| v / t).collect(), rng.gen_range(-2.0..3.0));
        }
    }
    m
}

pub fn random_p0(rng: &mut ChaCha8Rng, ns: usize) -> Vec<Q> {
    let states: Vec<usize> = (0..ns).collect();
    random_row(rng, ns, &states, 2)
}

pub fn support<P: strategic::prob::Prob>(p: &[P]) -> Vec<usize> {
    (0..p.len()).filter(|&i| p[i].is_positive()).collect()
}

pub fn to_f64(v: &[Q]) -> Vec<f64> {
    use strategic::prob::Prob;
    v.iter().map(Prob::to_f64).collect()
}

/// Conditioning keys `(stage, key)` a policy of `class` needs from `init`.
pub fn keys_for(model: &FiniteMdp<Q>, class: PolicyClass, horizon: usize, init: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let ns = model.num_states;
    let stages = if class.is_stationary() { 1 } else { horizon };
    let mut out = Vec::new();
    match class {
        PolicyClass::Stationary | PolicyClass::Markov => {
            for n in 0..stages {
                out.extend((0..ns).map(|x| (n, vec![x])));
            }
        }
        PolicyClass::SemiStationary | PolicyClass::SemiMarkov => {
            for n in 0..stages {
                for &x0 in init {
                    out.extend((0..ns).map(|x| (n, vec![x0, x])));
                }
            }
        }
        PolicyClass::History => {
            for (n, hs) in reachable_histories(model, init, horizon).into_iter().enumerate() {
                out.extend(hs.into_iter().map(|h| (n, h)));
            }
        }
    }
    out
}

/// Random member of `class`; each row is mixed with probability `mix`.
pub fn random_policy(
    rng: &mut ChaCha8Rng,
    model: &FiniteMdp<Q>,
    class: PolicyClass,
    horizon: usize,
    init: &[usize],
    mix: f64,
) -> Policy<Q> {
    let stages = if class.is_stationary() { 1 } else { horizon };
    let mut kernels: Vec<Kernel<Q>> = vec![Kernel::new(); stages];
    for (n, key) in keys_for(model, class, horizon, init) {
        let x = *key.last().unwrap();
        let adm = &model.admissible[x];
        let row = if rng.gen_bool(mix) {
            random_row(rng, model.num_actions, adm, 3)
        } else {
            let mut r = vec![Q::zero(); model.num_actions];
            r[*adm.choose(rng).unwrap()] = Q::one();
            r
        };
        kernels[n].insert(key, row);
    }
    let mut p = Policy::new(class, false, kernels).unwrap();
    p.randomized = !p.all_point_masses();
    p
}

/// Random game with `f64` kernels on at most `max_support` successors and
/// costs in `[-1, 1]`.
pub fn random_minimax(rng: &mut ChaCha8Rng, ns: usize, n1: usize, n2: usize, max_support: usize) -> MinimaxModel {
    let mut m = MinimaxModel::empty(ns, n1, n2);
    let states: Vec<usize> = (0..ns).collect();
    for x in 0..ns {
        let k1 = rng.gen_range(1..=n1);
        let k2 = rng.gen_range(1..=n2);
        for a1 in 0..k1 {
            for a2 in 0..k2 {
                let row = to_f64(&random_row(rng, ns, &states, max_support));
                m.set(x, a1, a2, row, rng.gen_range(-1.0..=1.0));
            }
        }
    }
    m
}

/// Two states, two actions each: from `x`, `a1` sets the successor law and
/// `a2` only reweights it, so `q = f · η` with `f > 0`.
pub fn factored_game() -> (MinimaxModel, Vec<Vec<Vec<f64>>>) {
    let eta = vec![vec![vec![0.5, 0.5], vec![0.2, 0.8]], vec![vec![0.9, 0.1], vec![0.3, 0.7]]];
    let mut m = MinimaxModel::empty(2, 2, 2);
    for x in 0..2 {
        for a1 in 0..2 {
            for a2 in 0..2 {
                let e: &Vec<f64> = &eta[x][a1];
                let w: Vec<f64> = (0..2).map(|y| e[y] * (1.0 + a2 as f64 * (y as f64 + 1.0))).collect();
                let z: f64 = w.iter().sum();
                m.set(x, a1, a2, w.iter().map(|v| v / z).collect(), (x + a1 + 2 * a2) as f64 - 1.5);
            }
        }
    }
    (m, eta)
}

/// Matching pennies in one state: player 1 pays 1 on a match.
pub fn pennies() -> MinimaxModel {
    let mut m = MinimaxModel::empty(1, 2, 2);
    for a1 in 0..2 {
        for a2 in 0..2 {
            m.set(0, a1, a2, vec![1.0], if a1 == a2 { 1.0 } else { 0.0 });
        }
    }
    m
}

/// Two states: `a` at state 0 stays (cost 1), `b` moves to 1 (cost 0);
/// state 1 returns with cost 3.
pub fn m1<P: strategic::prob::Prob>() -> FiniteMdp<P> {
    let mut m = FiniteMdp::empty(2, 2);
    m.set(0, 0, vec![P::one(), P::zero()], 1.0)
        .set(0, 1, vec![P::zero(), P::one()], 0.0)
        .set(1, 0, vec![P::one(), P::zero()], 3.0);
    m
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// `min_ν max_j Σ_i ν_i g[i][j]` by vertex enumeration of
/// `{(ν, v) : ν ∈ simplex, Σ_i ν_i g[i][j] ≤ v}`.
pub fn game_value_oracle(g: &[Vec<f64>]) -> f64 {
    let (m, n) = (g.len(), g[0].len());
    // Unknowns (ν_0..ν_{m-1}, v). Candidate tight constraints: ν_i = 0 or
    // column j binding.
    let constraint = |c: usize| -> Vec<f64> {
        let mut row = vec![0.0; m + 1];
        if c < m {
            row[c] = 1.0;
        } else {
            for i in 0..m {
                row[i] = g[i][c - m];
            }
            row[m] = -1.0;
        }
        row
    };
    let mut best = f64::INFINITY;
    for tight in combinations(m + n, m) {
        let mut a: Vec<Vec<f64>> = tight.iter().map(|&c| constraint(c)).collect();
        let mut b = vec![0.0; m];
        let mut simplex = vec![1.0; m + 1];
        simplex[m] = 0.0;
        a.push(simplex);
        b.push(1.0);
        let Some(sol) = solve_square(a, b) else { continue };
        let v = sol[m];
        let feasible = sol[..m].iter().all(|&p| p >= -1e-10)
            && (0..n).all(|j| (0..m).map(|i| sol[i] * g[i][j]).sum::<f64>() <= v + 1e-10);
        if feasible {
            best = best.min(v);
        }
    }
    best
}

/// Minimax operator built on [`game_value_oracle`].
pub fn oracle_operator(model: &MinimaxModel, v: &[f64], beta: f64) -> Vec<f64> {
    (0..model.num_states)
        .map(|x| {
            let g: Vec<Vec<f64>> = model.admissible1[x]
                .iter()
                .map(|&a1| {
                    model.admissible2[x]
                        .iter()
                        .map(|&a2| {
                            let fut: f64 = model.q(x, a1, a2).iter().zip(v).map(|(p, w)| p * w).sum();
                            model.c(x, a1, a2) + beta * fut
                        })
                        .collect()
                })
                .collect();
            game_value_oracle(&g)
        })
        .collect()
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
