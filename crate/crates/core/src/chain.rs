//! Finite Markov chain structure: closed communicating classes, stationary
//! laws on them, and absorption probabilities.

use crate::error::{Error, Result};

/// Transition matrix with a per-state reward.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub p: Vec<Vec<f64>>,
    pub r: Vec<f64>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// One step of `π ↦ π P`.
    pub fn step(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (x, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (y, &p) in self.p[x].iter().enumerate() {
                out[y] += w * p;
            }
        }
        out
    }

    /// Closed communicating classes, each sorted, ordered by smallest member.
    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let reach: Vec<Vec<bool>> = (0..n).map(|x| self.reachable_from(x)).collect();
        let mut assigned = vec![false; n];
        let mut out = Vec::new();
        for x in 0..n {
            if assigned[x] {
                continue;
            }
            // x is recurrent iff everything it reaches reaches it back.
            let closed = (0..n).all(|y| !reach[x][y] || reach[y][x]);
            if closed {
                let class: Vec<usize> = (0..n).filter(|&y| reach[x][y]).collect();
                for &y in &class {
                    assigned[y] = true;
                }
                out.push(class);
            }
        }
        out
    }

    fn reachable_from(&self, x: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        seen[x] = true;
        let mut stack = vec![x];
        while let Some(u) = stack.pop() {
            for (v, &p) in self.p[u].iter().enumerate() {
                if p > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    /// Stationary law of the chain restricted to a closed class.
    pub fn stationary_on(&self, class: &[usize]) -> Result<Vec<f64>> {
        let k = class.len();
        // Solve π (P - I) = 0 with the last balance equation replaced by Σπ = 1.
        let mut a = vec![vec![0.0; k]; k];
        let mut b = vec![0.0; k];
        for (i, &y) in class.iter().enumerate() {
            for (j, &x) in class.iter().enumerate() {
                a[i][j] = self.p[x][y] - if x == y { 1.0 } else { 0.0 };
            }
        }
        for j in 0..k {
            a[k - 1][j] = 1.0;
        }
        b[k - 1] = 1.0;
        solve_linear(a, b)
    }

    /// Long-run average reward of a closed class.
    pub fn class_average(&self, class: &[usize]) -> Result<f64> {
        let pi = self.stationary_on(class)?;
        Ok(class.iter().zip(&pi).map(|(&x, &w)| w * self.r[x]).sum())
    }

    /// `out[x][c]`: probability that the chain started at `x` is eventually
    /// absorbed in `classes[c]`.
    pub fn absorption(&self, classes: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let n = self.len();
        let mut class_of = vec![None; n];
        for (c, class) in classes.iter().enumerate() {
            for &x in class {
                class_of[x] = Some(c);
            }
        }
        let transient: Vec<usize> = (0..n).filter(|&x| class_of[x].is_none()).collect();
        let mut out = vec![vec![0.0; classes.len()]; n];
        for x in 0..n {
            if let Some(c) = class_of[x] {
                out[x][c] = 1.0;
            }
        }
        if transient.is_empty() {
            return Ok(out);
        }
        let t = transient.len();
        for c in 0..classes.len() {
            let mut a = vec![vec![0.0; t]; t];
            let mut b = vec![0.0; t];
            for (i, &x) in transient.iter().enumerate() {
                for (j, &y) in transient.iter().enumerate() {
                    a[i][j] = if x == y { 1.0 } else { 0.0 } - self.p[x][y];
                }
                b[i] = classes[c].iter().map(|&y| self.p[x][y]).sum();
            }
            let sol = solve_linear(a, b)?;
            for (i, &x) in transient.iter().enumerate() {
                out[x][c] = sol[i];
            }
        }
        Ok(out)
    }

    /// Discounted values `v = r + β P v`.
    pub fn discounted_values(&self, beta: f64) -> Result<Vec<f64>> {
        let n = self.len();
        let a = (0..n)
            .map(|x| (0..n).map(|y| if x == y { 1.0 } else { 0.0 } - beta * self.p[x][y]).collect())
            .collect();
        solve_linear(a, self.r.clone())
    }
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty system");
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::InvalidArgument("singular linear system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Ok(x)
}
