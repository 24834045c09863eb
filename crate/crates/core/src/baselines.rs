//! Comparators that privatize the regression directly instead of going
//! through marginals: AdaSSP for linear regression and objective
//! perturbation for logistic regression, plus their non-private versions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{solve_with_ridge, symmetric_eigenvalues};
use crate::privacy::PrivacyBudget;
use crate::ssp::{sigmoid, Diagnostics, FittedModel, Provenance, Task, DEFAULT_RIDGE_FLOOR};
use crate::{Error, Result};

/// Change in `X^T X` when one row of norm at most `x_bound` is added.
pub fn sensitivity_xtx(x_bound: f64) -> f64 {
    x_bound * x_bound
}

pub fn sensitivity_xty(x_bound: f64, y_bound: f64) -> f64 {
    x_bound * y_bound
}

/// Prepend a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// Feature bound after a ones column is added.
pub fn intercept_bound(x_bound: f64) -> f64 {
    (x_bound * x_bound + 1.0).sqrt()
}

fn check_rows(x: &DMatrix<f64>, y: &DVector<f64>, x_bound: f64, y_bound: Option<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    let slack = 1e-9 * x_bound.max(1.0);
    for (i, row) in x.row_iter().enumerate() {
        let norm = row.norm();
        if !(norm <= x_bound + slack) {
            return Err(Error::BoundViolation(format!(
                "row {i} has norm {norm}, bound is {x_bound}"
            )));
        }
    }
    if let Some(yb) = y_bound {
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(v.abs() <= yb + 1e-9 * yb.max(1.0))) {
            return Err(Error::BoundViolation(format!("target {i} is {v}, bound is {yb}")));
        }
    }
    Ok(())
}

fn prepare(x: &DMatrix<f64>, x_bound: f64, intercept: bool) -> (DMatrix<f64>, f64) {
    if intercept {
        (with_intercept(x), intercept_bound(x_bound))
    } else {
        (x.clone(), x_bound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaSspParams {
    pub budget: PrivacyBudget,
    pub x_bound: f64,
    pub y_bound: f64,
    /// Failure probability of the eigenvalue bound (not a zCDP parameter).
    pub rho_fail: f64,
    pub intercept: bool,
}

impl AdaSspParams {
    pub fn new(budget: PrivacyBudget, x_bound: f64, y_bound: f64) -> Self {
        AdaSspParams {
            budget,
            x_bound,
            y_bound,
            rho_fail: 0.05,
            intercept: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho_fail > 0.0 && self.rho_fail < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rho_fail must lie in (0, 1), got {}",
                self.rho_fail
            )));
        }
        for (name, v) in [("x_bound", self.x_bound), ("y_bound", self.y_bound)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// AdaSSP: noisy `X^T X` and `X^T y` plus a ridge sized from a private
/// estimate of the smallest eigenvalue, each release using `eps / 3`.
pub fn adassp<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    params: &AdaSspParams,
    rng: &mut R,
) -> Result<FittedModel> {
    params.validate()?;
    check_rows(x, y, params.x_bound, Some(params.y_bound))?;
    let (x, xb) = prepare(x, params.x_bound, params.intercept);
    let yb = params.y_bound;
    let d = x.ncols() as f64;
    let eps3 = params.budget.epsilon() / 3.0;
    let log_term = (6.0 / params.budget.delta()).ln();
    let xb2 = xb * xb;

    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let lambda_min = symmetric_eigenvalues(&xtx).first().copied().unwrap_or(0.0);
    let z: f64 = rng.sample(StandardNormal);
    let lambda_min_tilde =
        (lambda_min + log_term.sqrt() / eps3 * xb2 * z - log_term / eps3 * xb2).max(0.0);
    let lambda = ((d * log_term * (2.0 * d * d / params.rho_fail).ln()).sqrt() * xb2 / eps3
        - lambda_min_tilde)
        .max(0.0);

    let p = x.ncols();
    let scale_xtx = log_term.sqrt() * xb2 / eps3;
    let mut noisy_xtx = xtx;
    for i in 0..p {
        for j in i..p {
            let e: f64 = rng.sample(StandardNormal);
            noisy_xtx[(i, j)] += scale_xtx * e;
            if i != j {
                noisy_xtx[(j, i)] += scale_xtx * e;
            }
        }
    }
    let scale_xty = log_term.sqrt() * xb * yb / eps3;
    let noisy_xty = xty.map(|v| v + scale_xty * rng.sample::<f64, _>(StandardNormal));
    for i in 0..p {
        noisy_xtx[(i, i)] += lambda;
    }
    let (theta, info) = solve_with_ridge(&noisy_xtx, &noisy_xty, DEFAULT_RIDGE_FLOOR)?;
    Ok(FittedModel {
        theta: theta.iter().copied().collect(),
        intercept: params.intercept,
        task: Task::Linear,
        provenance: Provenance::Adassp,
        diagnostics: Diagnostics {
            condition: info.condition,
            ridge: lambda + info.ridge,
            iterations: 0,
        },
    })
}

/// Gradient of `log(1 + exp(-y x.theta))` in `theta`.
pub fn logistic_example_gradient(theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64> {
    x * (-y * sigmoid(-y * x.dot(theta)))
}

/// Hessian `phi''(-y x.theta) x x^T` of the same loss.
pub fn logistic_example_hessian(theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DMatrix<f64> {
    let s = sigmoid(y * x.dot(theta));
    x * x.transpose() * (s * (1.0 - s))
}

/// `(1/n) sum log(1 + exp(-y_i x_i.theta)) + (l2/2) |theta|^2 + linear.theta`.
struct LogisticObjective<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    l2: f64,
    linear: DVector<f64>,
}

impl LogisticObjective<'_> {
    fn margins(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.x * theta).component_mul(self.y)
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let n = self.x.nrows() as f64;
        let loss: f64 = self.margins(theta).iter().map(|&m| -crate::ssp::log_sigmoid(m)).sum();
        loss / n + 0.5 * self.l2 * theta.norm_squared() + self.linear.dot(theta)
    }

    fn gradient_and_hessian(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.x.nrows() as f64;
        let m = self.margins(theta);
        let w_grad = DVector::from_iterator(m.len(), m.iter().zip(self.y.iter()).map(|(&mi, &yi)| -yi * sigmoid(-mi) / n));
        let w_hess = m.map(|mi| {
            let s = sigmoid(mi);
            s * (1.0 - s) / n
        });
        let grad = self.x.transpose() * w_grad + theta * self.l2 + &self.linear;
        let mut weighted = self.x.clone();
        for (mut row, w) in weighted.row_iter_mut().zip(w_hess.iter()) {
            row *= *w;
        }
        let mut hess = self.x.transpose() * weighted;
        for i in 0..hess.nrows() {
            hess[(i, i)] += self.l2;
        }
        (grad, hess)
    }
}

#[derive(Debug, Clone)]
pub struct NewtonTrace {
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Objective value before the first step and after every step.
    pub objective: Vec<f64>,
}

const GRADIENT_TOLERANCE: f64 = 1e-8;
const MAX_NEWTON_ITERATIONS: usize = 200;

/// Damped Newton with Armijo backtracking.
fn minimize(obj: &LogisticObjective<'_>) -> Result<NewtonTrace> {
    let p = obj.x.ncols();
    let mut theta = DVector::zeros(p);
    let mut value = obj.value(&theta);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut gradient_norm;
    loop {
        let (grad, hess) = obj.gradient_and_hessian(&theta);
        gradient_norm = grad.norm();
        if gradient_norm <= GRADIENT_TOLERANCE || iterations == MAX_NEWTON_ITERATIONS {
            break;
        }
        let (step, _) = solve_with_ridge(&hess, &(-&grad), 1e-12)?;
        let slope = grad.dot(&step);
        let direction = if slope < 0.0 { step } else { -grad.clone() };
        let slope = grad.dot(&direction);
        let mut t = 1.0;
        let mut next = &theta + &direction * t;
        let mut next_value = obj.value(&next);
        while next_value > value + 1e-4 * t * slope && t > 1e-16 {
            t *= 0.5;
            next = &theta + &direction * t;
            next_value = obj.value(&next);
        }
        iterations += 1;
        if !(next_value <= value) {
            // no descent left at machine precision
            break;
        }
        theta = next;
        value = next_value;
        trace.push(value);
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic optimizer diverged".into()));
    }
    Ok(NewtonTrace {
        theta,
        iterations,
        gradient_norm,
        objective: trace,
    })
}

fn check_labels(y: &DVector<f64>) -> Result<()> {
    match y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        Some(v) => Err(Error::InvalidParameter(format!("labels must be -1 or +1, got {v}"))),
        None => Ok(()),
    }
}

fn logistic_model(trace: NewtonTrace, intercept: bool, provenance: Provenance) -> FittedModel {
    FittedModel {
        theta: trace.theta.iter().copied().collect(),
        intercept,
        task: Task::Logistic,
        provenance,
        diagnostics: Diagnostics {
            condition: f64::NAN,
            ridge: 0.0,
            iterations: trace.iterations,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjPertParams {
    pub budget: PrivacyBudget,
    pub x_bound: f64,
    /// Coefficient `c` of the extra regularizer `r(theta) = (c/2) |theta|^2`.
    pub regularizer: f64,
    pub intercept: bool,
}

impl ObjPertParams {
    pub fn new(budget: PrivacyBudget, x_bound: f64) -> Self {
        ObjPertParams {
            budget,
            x_bound,
            regularizer: 0.0,
            intercept: true,
        }
    }
}

/// Objective perturbation: minimize the mean logistic loss plus
/// `r/n + (Delta/2n)|theta|^2 + b.theta/n` with `Delta = |X|^2/(2 eps)` and
/// `b ~ N(0, |X|^2 (8 log(2/delta) + 4 eps)/eps^2 I)`.
pub fn objpert_logistic<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    params: &ObjPertParams,
    rng: &mut R,
) -> Result<FittedModel> {
    if !(params.x_bound > 0.0) || !(params.regularizer >= 0.0) {
        return Err(Error::InvalidParameter(
            "objective perturbation needs a positive bound and a nonnegative regularizer".into(),
        ));
    }
    check_labels(y)?;
    check_rows(x, y, params.x_bound, None)?;
    if x.nrows() == 0 {
        return Err(Error::InvalidParameter("no training rows".into()));
    }
    let (x, xb) = prepare(x, params.x_bound, params.intercept);
    let (eps, delta) = (params.budget.epsilon(), params.budget.delta());
    let n = x.nrows() as f64;
    let big_delta = xb * xb / (2.0 * eps);
    let variance = xb * xb * (8.0 * (2.0 / delta).ln() + 4.0 * eps) / (eps * eps);
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let b = DVector::from_iterator(x.ncols(), (0..x.ncols()).map(|_| normal.sample(rng)));
    let obj = LogisticObjective {
        x: &x,
        y,
        l2: (params.regularizer + big_delta) / n,
        linear: b / n,
    };
    let trace = minimize(&obj)?;
    if trace.gradient_norm > GRADIENT_TOLERANCE {
        return Err(Error::NonFinite(format!(
            "objective perturbation stopped at gradient norm {:e}",
            trace.gradient_norm
        )));
    }
    Ok(logistic_model(trace, params.intercept, Provenance::Objpert))
}

/// Ordinary least squares through the normal equations (with the same
/// conditioning safeguard as the private solvers).
pub fn nonprivate_ols(x: &DMatrix<f64>, y: &DVector<f64>, intercept: bool) -> Result<FittedModel> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    let (x, _) = prepare(x, 1.0, intercept);
    let (theta, info) = solve_with_ridge(&(x.transpose() * &x), &(x.transpose() * y), DEFAULT_RIDGE_FLOOR)?;
    Ok(FittedModel {
        theta: theta.iter().copied().collect(),
        intercept,
        task: Task::Linear,
        provenance: Provenance::Nonprivate,
        diagnostics: Diagnostics {
            condition: info.condition,
            ridge: info.ridge,
            iterations: 0,
        },
    })
}

/// Logistic maximum likelihood; on separable data the returned iterate is
/// the last one reached.
pub fn nonprivate_logistic(x: &DMatrix<f64>, y: &DVector<f64>, intercept: bool) -> Result<FittedModel> {
    Ok(logistic_model(
        nonprivate_logistic_trace(x, y, intercept)?,
        intercept,
        Provenance::Nonprivate,
    ))
}

/// Like [`nonprivate_logistic`] but with the optimizer's trace.
pub fn nonprivate_logistic_trace(x: &DMatrix<f64>, y: &DVector<f64>, intercept: bool) -> Result<NewtonTrace> {
    check_labels(y)?;
    if x.nrows() != y.len() || x.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    let (x, _) = prepare(x, 1.0, intercept);
    let obj = LogisticObjective {
        x: &x,
        y,
        l2: 0.0,
        linear: DVector::zeros(x.ncols()),
    };
    minimize(&obj)
}
