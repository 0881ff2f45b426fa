//! Dense tableau simplex for the small linear programs of the monotone
//! Bernstein oracle.
//!
//! Only the form `max c'x  s.t.  Ax <= b, x >= 0` with `b >= 0` is needed: the
//! origin is then a feasible basis (all slacks basic) and no phase one is
//! required. Bland's rule is used throughout, so the many degenerate pivots
//! caused by the zero right-hand sides of the ordering constraints cannot cycle.

use crate::error::{Error, Result};

const EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Solves `max c'x` subject to `rows[i]'x <= rhs[i]` and `x >= 0`, with `rhs >= 0`.
///
/// The feasible region always contains the origin; an unbounded objective is an error.
pub fn maximize_lp(c: &[f64], rows: &[Vec<f64>], rhs: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    let m = rows.len();
    if rhs.len() != m || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter("inconsistent LP dimensions".into()));
    }
    if rhs.iter().any(|&b| b < 0.0) {
        return Err(Error::InvalidParameter("LP right-hand side must be nonnegative".into()));
    }
    let width = n + m + 1;
    // row-major tableau; the last column is the rhs
    let mut tab = vec![0.0; m * width];
    for i in 0..m {
        tab[i * width..i * width + n].copy_from_slice(&rows[i]);
        tab[i * width + n + i] = 1.0;
        tab[i * width + n + m] = rhs[i];
    }
    // reduced costs of the maximization, stored as `c_j - z_j`
    let mut cost: Vec<f64> = c.iter().copied().chain(std::iter::repeat_n(0.0, m)).collect();
    let mut value = 0.0;
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_pivots = 50 * (n + m).pow(2) + 100;
    for _ in 0..max_pivots {
        let Some(enter) = (0..n + m).find(|&j| cost[j] > EPS) else {
            let mut x = vec![0.0; n];
            for (i, &b) in basis.iter().enumerate() {
                if b < n {
                    x[b] = tab[i * width + n + m];
                }
            }
            return Ok(LpSolution { x, objective: value });
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = tab[i * width + enter];
            if a > EPS {
                let ratio = tab[i * width + n + m] / a;
                let better = match leave {
                    None => true,
                    Some((l, r)) => ratio < r - EPS || (ratio <= r + EPS && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            return Err(Error::InvalidParameter("LP objective is unbounded".into()));
        };
        let pivot = tab[row * width + enter];
        for j in 0..width {
            tab[row * width + j] /= pivot;
        }
        for i in 0..m {
            if i == row {
                continue;
            }
            let f = tab[i * width + enter];
            if f != 0.0 {
                for j in 0..width {
                    tab[i * width + j] -= f * tab[row * width + j];
                }
            }
        }
        let f = cost[enter];
        for j in 0..n + m {
            cost[j] -= f * tab[row * width + j];
        }
        value += f * tab[row * width + n + m];
        basis[row] = enter;
    }
    Err(Error::InvalidParameter("simplex iteration limit reached".into()))
}

/// Best monotone Bernstein coefficient vector for the functional `d`.
///
/// Maximizes `sign * sum_v a_v d_v` over `0 <= a_0 <= ... <= a_V <= 1` with
/// increments `a_v - a_{v-1} <= alpha / V` when `alpha` is given. Returns the
/// coefficients and the attained (signed) objective `sign * sum_v a_v d_v`.
pub fn bernstein_lp_oracle(d: &[f64], alpha: Option<f64>, sign: f64) -> (Vec<f64>, f64) {
    let n = d.len();
    assert!(n >= 2, "bernstein order must be at least 1");
    let order = (n - 1) as f64;
    let c: Vec<f64> = d.iter().map(|v| sign * v).collect();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut top = vec![0.0; n];
    top[n - 1] = 1.0;
    rows.push(top);
    rhs.push(1.0);
    for v in 1..n {
        let mut order_row = vec![0.0; n];
        order_row[v - 1] = 1.0;
        order_row[v] = -1.0;
        rows.push(order_row);
        rhs.push(0.0);
        if let Some(alpha) = alpha {
            let mut lip = vec![0.0; n];
            lip[v] = 1.0;
            lip[v - 1] = -1.0;
            rows.push(lip);
            rhs.push(alpha / order);
        }
    }
    let sol = maximize_lp(&c, &rows, &rhs).expect("bounded feasible LP");
    // clean pivoting noise so that the chain constraints hold exactly
    let mut a = sol.x;
    let mut prev = 0.0f64;
    for (v, slot) in a.iter_mut().enumerate() {
        let mut x = slot.clamp(prev, 1.0);
        if let Some(alpha) = alpha {
            if v > 0 {
                x = x.min(prev + alpha / order);
            }
        }
        *slot = x;
        prev = x;
    }
    let objective = a.iter().zip(&c).map(|(x, c)| x * c).sum();
    (a, objective)
}
