//! Dense Levenberg–Marquardt for small nonlinear least-squares problems.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// A least-squares problem over a parameter type that may live on a
/// manifold (rotations are updated multiplicatively through `retract`).
pub trait LeastSquaresProblem {
    type Params: Clone;

    fn residuals(&self, params: &Self::Params) -> DVector<f64>;

    /// Jacobian of the residuals with respect to the local increment used by
    /// [`Self::retract`], evaluated at zero increment.
    fn jacobian(&self, params: &Self::Params) -> DMatrix<f64>;

    fn retract(&self, params: &Self::Params, delta: &DVector<f64>) -> Self::Params;
}

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Convergence when `‖Jᵀr‖∞` drops below this.
    pub gradient_tolerance: f64,
    /// Convergence when the accepted step is this small relative to the
    /// parameter scale.
    pub step_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_lambda: 1e-3,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-14,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    StepSize,
    /// Damping saturated: no step can reduce the objective in floating point.
    NoFurtherDecrease,
}

#[derive(Clone, Debug)]
pub struct LmReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Objective `Σ r²` after each accepted step, starting with the initial
    /// value.
    pub accepted_costs: Vec<f64>,
    pub termination: Termination,
}

impl LmReport {
    pub fn is_monotone(&self) -> bool {
        self.accepted_costs.windows(2).all(|w| w[1] <= w[0])
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("Levenberg-Marquardt did not converge in {iterations} iterations (gradient {gradient:e})")]
    ConvergenceFailure { iterations: usize, gradient: f64 },
    #[error("non-finite residuals at the initial estimate")]
    NonFiniteStart,
}

const MAX_LAMBDA: f64 = 1e16;

/// Minimizes `Σ r_i²` starting from `init`, with multiplicative damping
/// updates (×10 on reject, ÷10 on accept) and Marquardt diagonal scaling.
pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &P,
    init: P::Params,
    options: &LmOptions,
) -> Result<(P::Params, LmReport), LmError> {
    let mut params = init;
    let mut r = problem.residuals(&params);
    if !r.iter().all(|x| x.is_finite()) {
        return Err(LmError::NonFiniteStart);
    }
    let mut cost = r.norm_squared();
    let initial_cost = cost;
    let mut accepted_costs = vec![cost];
    let mut lambda = options.initial_lambda;
    let mut gradient = f64::INFINITY;

    let mut iterations = 0;
    let mut need_jacobian = true;
    let mut jtj = DMatrix::zeros(0, 0);
    let mut g = DVector::zeros(0);

    while iterations < options.max_iterations {
        if need_jacobian {
            let j = problem.jacobian(&params);
            jtj = j.transpose() * &j;
            g = j.transpose() * &r;
            gradient = g.amax();
            need_jacobian = false;
        }
        if gradient < options.gradient_tolerance || cost == 0.0 {
            return Ok(finish(
                params,
                iterations,
                initial_cost,
                cost,
                accepted_costs,
                Termination::Gradient,
            ));
        }
        iterations += 1;

        let mut a = jtj.clone();
        for i in 0..a.nrows() {
            let d = jtj[(i, i)].max(1e-12);
            a[(i, i)] += lambda * d;
        }
        let Some(chol) = a.cholesky() else {
            lambda *= 10.0;
            if lambda > MAX_LAMBDA {
                return Ok(finish(
                    params,
                    iterations,
                    initial_cost,
                    cost,
                    accepted_costs,
                    Termination::NoFurtherDecrease,
                ));
            }
            continue;
        };
        let delta = -chol.solve(&g);
        let candidate = problem.retract(&params, &delta);
        let r_new = problem.residuals(&candidate);
        let cost_new = r_new.norm_squared();

        if cost_new.is_finite() && cost_new < cost {
            params = candidate;
            r = r_new;
            cost = cost_new;
            accepted_costs.push(cost);
            lambda = (lambda / 10.0).max(1e-15);
            need_jacobian = true;
            let scale = delta.len() as f64;
            if delta.norm() <= options.step_tolerance * scale.sqrt().max(1.0) {
                return Ok(finish(
                    params,
                    iterations,
                    initial_cost,
                    cost,
                    accepted_costs,
                    Termination::StepSize,
                ));
            }
        } else {
            lambda *= 10.0;
            if lambda > MAX_LAMBDA {
                return Ok(finish(
                    params,
                    iterations,
                    initial_cost,
                    cost,
                    accepted_costs,
                    Termination::NoFurtherDecrease,
                ));
            }
        }
    }

    Err(LmError::ConvergenceFailure { iterations, gradient })
}

fn finish<T>(
    params: T,
    iterations: usize,
    initial_cost: f64,
    final_cost: f64,
    accepted_costs: Vec<f64>,
    termination: Termination,
) -> (T, LmReport) {
    (
        params,
        LmReport {
            iterations,
            initial_cost,
            final_cost,
            accepted_costs,
            termination,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as a residual pair.
    struct Rosenbrock;

    impl LeastSquaresProblem for Rosenbrock {
        type Params = DVector<f64>;

        fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]])
        }

        fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[-20.0 * p[0], 10.0, -1.0, 0.0])
        }

        fn retract(&self, p: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
            p + d
        }
    }

    /// Exponential fit with more residuals than parameters.
    struct ExpFit {
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl LeastSquaresProblem for ExpFit {
        type Params = DVector<f64>;

        fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
            DVector::from_iterator(
                self.xs.len(),
                self.xs.iter().zip(&self.ys).map(|(x, y)| p[0] * (p[1] * x).exp() - y),
            )
        }

        fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
            let mut j = DMatrix::zeros(self.xs.len(), 2);
            for (i, x) in self.xs.iter().enumerate() {
                let e = (p[1] * x).exp();
                j[(i, 0)] = e;
                j[(i, 1)] = p[0] * x * e;
            }
            j
        }

        fn retract(&self, p: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
            p + d
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let (p, report) =
            levenberg_marquardt(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &LmOptions::default()).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-8 && (p[1] - 1.0).abs() < 1e-8);
        assert!(report.is_monotone());
        assert!(report.final_cost < 1e-20);
    }

    #[test]
    fn fits_exponential_with_monotone_cost() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 2.5 * (-1.3 * x).exp() + 0.001 * (x * 37.0).sin())
            .collect();
        let (p, report) = levenberg_marquardt(
            &ExpFit { xs, ys },
            DVector::from_vec(vec![1.0, 0.0]),
            &LmOptions::default(),
        )
        .unwrap();
        assert!((p[0] - 2.5).abs() < 0.01);
        assert!((p[1] + 1.3).abs() < 0.01);
        assert!(report.is_monotone());
        assert!(report.accepted_costs.len() >= 2);
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let opts = LmOptions {
            max_iterations: 2,
            ..LmOptions::default()
        };
        let err = levenberg_marquardt(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &opts).unwrap_err();
        assert!(matches!(err, LmError::ConvergenceFailure { iterations: 2, .. }));
    }
}
