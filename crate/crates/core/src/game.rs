//! Zero-sum matrix games: the row player minimizes, the column player
//! maximizes.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixGame {
    pub payoff: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
    /// `max_j Σ_i ν_i g[i][j]` under the returned strategy.
    pub certificate: f64,
}

impl MatrixGame {
    pub fn new(payoff: Vec<Vec<f64>>) -> Result<Self> {
        let cols = payoff.first().map_or(0, Vec::len);
        if payoff.is_empty() || cols == 0 {
            return Err(Error::InvalidArgument("matrix game needs at least one row and one column".into()));
        }
        if payoff.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged payoff matrix".into()));
        }
        if payoff.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("payoff entries must be finite".into()));
        }
        Ok(Self { payoff })
    }

    pub fn rows(&self) -> usize {
        self.payoff.len()
    }

    pub fn cols(&self) -> usize {
        self.payoff[0].len()
    }

    /// Worst column payoff of a row mixture.
    pub fn max_column_payoff(&self, strategy: &[f64]) -> f64 {
        (0..self.cols())
            .map(|j| strategy.iter().zip(&self.payoff).map(|(p, row)| p * row[j]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `-gᵀ`: the same game seen from the other side.
    pub fn negated_transpose(&self) -> Self {
        Self { payoff: (0..self.cols()).map(|j| self.payoff.iter().map(|r| -r[j]).collect()).collect() }
    }
}

/// Solves `min_ν max_j Σ_i ν_i g[i][j]`.
///
/// After shifting the payoffs to be at least 1 the value is positive, and
/// `u = ν / v` turns the row player's problem into
/// `max Σ u_i  s.t.  Σ_i u_i g'[i][j] ≤ 1, u ≥ 0`, feasible at the origin.
/// A dense tableau simplex with Bland's rule solves it; `ν = u / Σ u`.
pub fn solve_matrix_game(game: &MatrixGame) -> GameSolution {
    let (m, n) = (game.rows(), game.cols());
    let min = game.payoff.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
    let shift = 1.0 - min;
    // Variables: u_0..u_{m-1}, slacks s_0..s_{n-1}; last column is the rhs.
    let width = m + n + 1;
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for j in 0..n {
        let mut r = vec![0.0; width];
        for i in 0..m {
            r[i] = game.payoff[i][j] + shift;
        }
        r[m + j] = 1.0;
        r[width - 1] = 1.0;
        t.push(r);
    }
    let mut obj = vec![0.0; width];
    obj[..m].fill(-1.0);
    t.push(obj);
    let mut basis: Vec<usize> = (m..m + n).collect();

    while let Some(enter) = (0..width - 1).find(|&k| t[n][k] < -PIVOT_TOL) {
        let mut leave: Option<usize> = None;
        for r in 0..n {
            if t[r][enter] <= PIVOT_TOL {
                continue;
            }
            let ratio = t[r][width - 1] / t[r][enter];
            leave = match leave {
                Some(l) => {
                    let best = t[l][width - 1] / t[l][enter];
                    let better = ratio < best - PIVOT_TOL || (ratio <= best + PIVOT_TOL && basis[r] < basis[l]);
                    Some(if better { r } else { l })
                }
                None => Some(r),
            };
        }
        // Bounded: every constraint row has positive coefficients.
        let l = leave.expect("bounded game LP");
        let piv = t[l][enter];
        for v in t[l].iter_mut() {
            *v /= piv;
        }
        let pivot_row = t[l].clone();
        for (r, row) in t.iter_mut().enumerate() {
            let f = row[enter];
            if r != l && f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        basis[l] = enter;
    }

    let mut u = vec![0.0; m];
    for (r, &b) in basis.iter().enumerate() {
        if b < m {
            u[b] = t[r][width - 1].max(0.0);
        }
    }
    let total: f64 = u.iter().sum();
    let row_strategy: Vec<f64> = u.iter().map(|x| x / total).collect();
    let value = 1.0 / t[n][width - 1] - shift;
    let certificate = game.max_column_payoff(&row_strategy);
    GameSolution { value, row_strategy, certificate }
}
