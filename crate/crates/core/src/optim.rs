//! Small derivative-free maximizers shared by the oracles and the Hawkes fit.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol`; returns the best point seen,
/// including both endpoints.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut best = (a, f(a));
    let fb = f(b);
    if fb > best.1 {
        best = (b, fb);
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

#[derive(Clone, Copy, Debug)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead { max_evals: 500, tol: 1e-8, initial_step: 0.25 }
    }
}

impl NelderMead {
    /// Maximizes `f` from `start`. Non-finite values count as `-inf`.
    pub fn maximize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, start: &[f64]) -> (Vec<f64>, f64) {
        let n = start.len();
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::NEG_INFINITY
            }
        };
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let v0 = eval(start, &mut evals);
        simplex.push((start.to_vec(), v0));
        for i in 0..n {
            let mut x = start.to_vec();
            x[i] += self.initial_step;
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }
        loop {
            // best first; stable sort keeps ties in insertion order
            simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
            let spread = simplex[0].1 - simplex[n].1;
            if evals >= self.max_evals || (spread.is_finite() && spread.abs() <= self.tol) {
                break;
            }
            let centroid: Vec<f64> =
                (0..n).map(|d| simplex[..n].iter().map(|p| p.0[d]).sum::<f64>() / n as f64).collect();
            let along =
                |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect() };
            let xr = along(1.0);
            let fr = eval(&xr, &mut evals);
            if fr > simplex[0].1 {
                let xe = along(2.0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
            } else if fr > simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr > simplex[n].1 {
                    let x = along(0.5);
                    let v = eval(&x, &mut evals);
                    (x, v)
                } else {
                    let x = along(-0.5);
                    let v = eval(&x, &mut evals);
                    (x, v)
                };
                if fc > simplex[n].1.max(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for p in simplex.iter_mut().skip(1) {
                        for (x, b) in p.0.iter_mut().zip(&best) {
                            *x = b + 0.5 * (*x - b);
                        }
                        p.1 = eval(&p.0, &mut evals);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        simplex.swap_remove(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_interior_and_endpoint_maxima() {
        let (x, _) = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        let (x, _) = golden_max(|x| -x, 0.0, 1.0, 1e-10);
        assert_eq!(x, 0.0);
        let (x, _) = golden_max(|x| x, 0.0, 1.0, 1e-10);
        assert_eq!(x, 1.0);
    }

    #[test]
    fn nelder_mead_on_a_quadratic() {
        let nm = NelderMead { max_evals: 2000, tol: 1e-14, initial_step: 0.5 };
        let (x, v) = nm.maximize(|p| -(p[0] - 1.0).powi(2) - 3.0 * (p[1] + 0.5).powi(2), &[0.0, 0.0]);
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 0.5).abs() < 1e-5, "{x:?}");
        assert!(v > -1e-9);
    }
}
