//! Small deterministic optimizers: box-bounded Nelder–Mead for likelihood
//! maximization and Levenberg–Marquardt for nonlinear least squares.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `n` points of a Latin hypercube in `[0, 1]^dim`.
pub fn latin_hypercube<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    for j in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let k = rng.random_range(0..=i);
            strata.swap(i, k);
        }
        for (i, s) in strata.into_iter().enumerate() {
            let u: f64 = rng.random();
            pts[i][j] = (s as f64 + u) / n as f64;
        }
    }
    pts
}

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ... and every vertex lies within this distance of the best one.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 2000,
            f_tol: 1e-10,
            x_tol: 1e-7,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Minimizes `f` over the box `[lower, upper]`; non-finite values count as `+inf`.
///
/// Trial points are projected onto the box.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut start = x0.to_vec();
    clamp_into(&mut start, lower, upper);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = eval(&start, &mut evals);
    simplex.push((start.clone(), v0));
    for j in 0..dim {
        let mut x = start.clone();
        let step = opts.initial_step;
        x[j] = if x[j] + step <= upper[j] { x[j] + step } else { x[j] - step };
        clamp_into(&mut x, lower, upper);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let spread = if worst.is_finite() { worst - best } else { f64::INFINITY };
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.f_tol && diameter <= opts.x_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp_into(&mut p, lower, upper);
            p
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[dim].1 {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < simplex[dim].1.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best_x = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best_x
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evals,
        converged,
    }
}

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Relative cost reduction below which an accepted step ends the fit.
    pub f_tol: f64,
    /// Relative step size below which an accepted step ends the fit.
    pub x_tol: f64,
    /// Largest cosine between the residual vector and any Jacobian column
    /// at which the fit counts as converged.
    pub g_tol: f64,
    pub initial_lambda: f64,
    /// Damping above this means no descent direction can be found.
    pub max_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iters: 200,
            f_tol: 1e-12,
            x_tol: 1e-10,
            g_tol: 1e-10,
            initial_lambda: 1e-3,
            max_lambda: 1e12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmTermination {
    Converged,
    /// Cost reached exactly zero.
    ZeroResidual,
    MaxIterations,
    /// Damping grew past `max_lambda` without an improving step.
    Stalled,
    /// Residuals were not finite at the starting point.
    NonFiniteStart,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// Half the residual sum of squares.
    pub cost: f64,
    pub iterations: usize,
    pub termination: LmTermination,
}

/// A least-squares problem: residuals and their Jacobian at a parameter vector.
///
/// `residuals` returns `None` when the model cannot be evaluated there.
pub trait LeastSquaresProblem {
    fn residuals(&self, params: &[f64]) -> Option<DVector<f64>>;
    fn jacobian(&self, params: &[f64]) -> Option<DMatrix<f64>>;
}

fn half_sq(r: &DVector<f64>) -> f64 {
    let c = 0.5 * r.norm_squared();
    if c.is_finite() {
        c
    } else {
        f64::INFINITY
    }
}

/// Levenberg–Marquardt with Marquardt's diagonal scaling.
pub fn levenberg_marquardt<P: LeastSquaresProblem>(problem: &P, start: &[f64], opts: &LmOptions) -> LmReport {
    let mut p = DVector::from_column_slice(start);
    let Some(mut r) = problem.residuals(p.as_slice()) else {
        return LmReport {
            params: start.to_vec(),
            cost: f64::INFINITY,
            iterations: 0,
            termination: LmTermination::NonFiniteStart,
        };
    };
    let mut cost = half_sq(&r);
    if !cost.is_finite() {
        return LmReport {
            params: start.to_vec(),
            cost,
            iterations: 0,
            termination: LmTermination::NonFiniteStart,
        };
    }
    let mut lambda = opts.initial_lambda;
    let n = p.len();
    let mut termination = LmTermination::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iters {
        iterations += 1;
        if cost == 0.0 {
            termination = LmTermination::ZeroResidual;
            break;
        }
        let Some(jac) = problem.jacobian(p.as_slice()) else {
            termination = LmTermination::Stalled;
            break;
        };
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let r_norm = r.norm();
        let cosine = (0..n)
            .filter(|&k| jtj[(k, k)] > 0.0)
            .map(|k| grad[k].abs() / (jtj[(k, k)].sqrt() * r_norm))
            .fold(0.0, f64::max);
        if cosine <= opts.g_tol {
            termination = LmTermination::Converged;
            break;
        }
        let diag_floor = jtj.diagonal().max() * 1e-12 + f64::MIN_POSITIVE;

        loop {
            let mut damped = jtj.clone();
            for k in 0..n {
                damped[(k, k)] += lambda * jtj[(k, k)].max(diag_floor);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&grad)));
            if let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) {
                let trial = &p + &step;
                let trial_cost = problem
                    .residuals(trial.as_slice())
                    .map(|tr| (half_sq(&tr), tr));
                if let Some((tc, tr)) = trial_cost.filter(|(tc, _)| *tc < cost) {
                    let rel_drop = (cost - tc) / cost.max(f64::MIN_POSITIVE);
                    let rel_step = step.norm() / (p.norm() + opts.x_tol);
                    p = trial;
                    r = tr;
                    cost = tc;
                    lambda = (lambda / 3.0).max(1e-15);
                    if rel_drop < opts.f_tol || rel_step < opts.x_tol {
                        termination = LmTermination::Converged;
                        break 'outer;
                    }
                    continue 'outer;
                }
            }
            lambda *= 4.0;
            if lambda > opts.max_lambda {
                termination = LmTermination::Stalled;
                break 'outer;
            }
        }
    }
    LmReport {
        params: p.iter().copied().collect(),
        cost,
        iterations,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lhs_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = latin_hypercube(&mut rng, 10, 3);
        for j in 0..3 {
            let mut bins: Vec<usize> = pts.iter().map(|p| (p[j] * 10.0) as usize).collect();
            bins.sort_unstable();
            assert_eq!(bins, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 5000,
            f_tol: 1e-14,
            x_tol: 1e-9,
            initial_step: 0.5,
        };
        let m = nelder_mead(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn nelder_mead_respects_bounds() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let m = nelder_mead(f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &NelderMeadOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-6);
        assert!((m.x[1] + 1.0).abs() < 1e-6);
    }

    struct Exponential {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquaresProblem for Exponential {
        fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
            Some(DVector::from_iterator(
                self.t.len(),
                self.t.iter().zip(&self.y).map(|(t, y)| p[0] * (p[1] * t).exp() - y),
            ))
        }
        fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
            let mut j = DMatrix::zeros(self.t.len(), 2);
            for (i, t) in self.t.iter().enumerate() {
                let e = (p[1] * t).exp();
                j[(i, 0)] = e;
                j[(i, 1)] = p[0] * t * e;
            }
            Some(j)
        }
    }

    #[test]
    fn lm_recovers_exponential() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let prob = Exponential { t, y };
        let rep = levenberg_marquardt(&prob, &[1.0, 0.0], &LmOptions::default());
        assert!(rep.cost < 1e-20, "{rep:?}");
        assert!((rep.params[0] - 2.5).abs() < 1e-8);
        assert!((rep.params[1] + 1.3).abs() < 1e-8);
    }
}
