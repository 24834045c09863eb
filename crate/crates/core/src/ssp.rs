//! Sufficient statistics from pairwise marginals, and regression on them.
//!
//! With `z = [x, y]` built block-wise from per-attribute encodings, the
//! `(j, k)` block of `Z^T Z` is `A_j mu_jk A_k^T` where `A_j` maps a level
//! of attribute `j` to its encoded block and `mu_jk` is the two-way count
//! table. Diagonal blocks need only one-way counts: `A_j diag(mu_j) A_j^T`.
//! So a private release of every pairwise marginal yields `X^T X` and
//! `X^T y` without touching the data again.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::encoding::EncodingSpec;
use crate::linalg::solve_with_ridge;
use crate::marginals::{as_matrix_oriented, derive_one_way};
use crate::mechanism::MechanismOutput;
use crate::{Error, Result};

pub const DEFAULT_RIDGE_FLOOR: f64 = 1e-8;
pub const DEFAULT_CHEBYSHEV_RANGE: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Linear,
    Logistic,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Linear => "linear",
            Task::Logistic => "logistic",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Task::Linear),
            "logistic" => Ok(Task::Logistic),
            other => Err(Error::InvalidParameter(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    DdSsp,
    Adassp,
    Objpert,
    Nonprivate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Condition number of the system before any ridge.
    pub condition: f64,
    pub ridge: f64,
    /// Optimizer iterations (0 for closed-form solves).
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    /// Coefficients; with `intercept` the first entry is the constant term.
    pub theta: Vec<f64>,
    pub intercept: bool,
    pub task: Task,
    pub provenance: Provenance,
    pub diagnostics: Diagnostics,
}

impl FittedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: FittedModel = serde_json::from_str(text)?;
        if model.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta".into()));
        }
        Ok(model)
    }

    /// Number of feature columns expected by [`predict`].
    pub fn num_features(&self) -> usize {
        self.theta.len() - usize::from(self.intercept)
    }
}

/// Linear predictions `X theta`, or logistic scores `1 / (1 + e^{-x theta})`.
/// `x` holds features only; the intercept column is implied.
pub fn predict(model: &FittedModel, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != model.num_features() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} features, design has {} columns",
            model.num_features(),
            x.ncols()
        )));
    }
    let (bias, w) = if model.intercept {
        (model.theta[0], &model.theta[1..])
    } else {
        (0.0, &model.theta[..])
    };
    let margin = x * DVector::from_column_slice(w);
    Ok(match model.task {
        Task::Linear => margin.add_scalar(bias),
        Task::Logistic => margin.map(|m| sigmoid(m + bias)),
    })
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Reconstructed second moments of `[1?, X, y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    /// `(q + 1) x (q + 1)` with the target last, where `q` counts the
    /// intercept column (first, when present) and the features.
    pub ztz: DMatrix<f64>,
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub n_hat: f64,
    pub intercept: bool,
}

#[derive(Serialize)]
struct SuffStatsDump<'a> {
    ztz: Vec<Vec<f64>>,
    n_hat: f64,
    intercept: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
}

impl SuffStats {
    fn from_ztz(ztz: DMatrix<f64>, n_hat: f64, intercept: bool) -> Self {
        let q = ztz.nrows() - 1;
        SuffStats {
            xtx: ztz.view((0, 0), (q, q)).into_owned(),
            xty: ztz.view((0, q), (q, 1)).column(0).into_owned(),
            ztz,
            n_hat,
            intercept,
        }
    }

    /// Pretty JSON of `ztz` for inspection.
    pub fn to_json(&self) -> Result<String> {
        let dump = SuffStatsDump {
            ztz: self.ztz.row_iter().map(|r| r.iter().copied().collect()).collect(),
            n_hat: self.n_hat,
            intercept: self.intercept,
            note: self.intercept.then_some("column 0 is the intercept; the last column is the target"),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }
}

/// Assemble `Z^T Z` from the released pairwise tables.
///
/// The one-way counts on diagonal blocks (and in the intercept row) average
/// the row sums of every pair table containing the attribute.
pub fn reconstruct_ztz(output: &MechanismOutput, spec: &EncodingSpec, intercept: bool) -> Result<SuffStats> {
    if output.attribute_sizes != spec.sizes() {
        return Err(Error::DimensionMismatch(format!(
            "marginals cover sizes {:?}, encoding expects {:?}",
            output.attribute_sizes,
            spec.sizes()
        )));
    }
    let d = spec.num_attributes();
    if d < 2 {
        return Err(Error::InvalidParameter(
            "sufficient statistics need at least two attributes".into(),
        ));
    }
    let off = usize::from(intercept);
    let dim = spec.p() + 1 + off;
    let mut ztz = DMatrix::zeros(dim, dim);
    let transforms: Vec<DMatrix<f64>> = (0..d).map(|j| spec.transform(j)).collect();
    let columns: Vec<Vec<usize>> = (0..d)
        .map(|j| spec.block_columns(j).into_iter().map(|c| c + off).collect())
        .collect();

    let mut one_way_sums: Vec<DVector<f64>> = spec.sizes().iter().map(|&m| DVector::zeros(m)).collect();
    for j in 0..d {
        for k in j + 1..d {
            let table = output.pair(j, k).ok_or(Error::MissingPair(j, k))?;
            if table.shape() != [spec.sizes()[j], spec.sizes()[k]] {
                return Err(Error::DimensionMismatch(format!(
                    "table ({j}, {k}) has shape {:?}",
                    table.shape()
                )));
            }
            let mu = as_matrix_oriented(table, j)?;
            let block = &transforms[j] * &mu * transforms[k].transpose();
            for (a, &r) in columns[j].iter().enumerate() {
                for (b, &c) in columns[k].iter().enumerate() {
                    ztz[(r, c)] = block[(a, b)];
                    ztz[(c, r)] = block[(a, b)];
                }
            }
            for (attr, sums) in [(j, derive_one_way(table, j)?), (k, derive_one_way(table, k)?)] {
                one_way_sums[attr] += DVector::from_column_slice(sums.values());
            }
        }
    }

    for j in 0..d {
        let mu_j = &one_way_sums[j] / (d - 1) as f64;
        let a = &transforms[j];
        let block = a * DMatrix::from_diagonal(&mu_j) * a.transpose();
        for (x, &r) in columns[j].iter().enumerate() {
            for (y, &c) in columns[j].iter().enumerate() {
                ztz[(r, c)] = block[(x, y)];
            }
        }
        if intercept {
            let first = a * &mu_j;
            for (x, &c) in columns[j].iter().enumerate() {
                ztz[(0, c)] = first[x];
                ztz[(c, 0)] = first[x];
            }
        }
    }
    if intercept {
        ztz[(0, 0)] = output.n_hat;
    }
    if ztz.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reconstructed statistics".into()));
    }
    Ok(SuffStats::from_ztz(ztz, output.n_hat, intercept))
}

/// Exact `Z^T Z` from an encoded design, optionally with a leading ones column.
pub fn direct_suff_stats(x: &DMatrix<f64>, y: &DVector<f64>, intercept: bool) -> SuffStats {
    let n = x.nrows();
    let off = usize::from(intercept);
    let mut z = DMatrix::zeros(n, x.ncols() + 1 + off);
    if intercept {
        z.column_mut(0).fill(1.0);
    }
    z.columns_mut(off, x.ncols()).copy_from(x);
    z.set_column(x.ncols() + off, y);
    SuffStats::from_ztz(z.transpose() * z, n as f64, intercept)
}

/// Least squares on the statistics: `(xtx + lambda I) theta = xty`.
pub fn solve_linear(stats: &SuffStats, ridge_floor: f64) -> Result<FittedModel> {
    let (theta, info) = solve_with_ridge(&stats.xtx, &stats.xty, ridge_floor)?;
    Ok(FittedModel {
        theta: theta.iter().copied().collect(),
        intercept: stats.intercept,
        task: Task::Linear,
        provenance: Provenance::DdSsp,
        diagnostics: Diagnostics {
            condition: info.condition,
            ridge: info.ridge,
            iterations: 0,
        },
    })
}

/// `phi(s) = -log(1 + e^{-s})`, the per-record logistic log-likelihood
/// as a function of the margin `s = y x.theta`.
pub fn log_sigmoid(s: f64) -> f64 {
    -((-s).max(0.0) + (-s.abs()).exp().ln_1p())
}

/// Monomial coefficients of a degree-2 Chebyshev fit of [`log_sigmoid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub range: f64,
    /// Sup-norm error of the fit on a 10^4 + 1 point grid over `[-range, range]`.
    pub max_abs_error: f64,
}

impl ChebCoeffs {
    pub fn eval(&self, s: f64) -> f64 {
        self.b0 + self.b1 * s + self.b2 * s * s
    }
}

const CHEB_NODES: usize = 256;
// odd, so the symmetric grid contains s = 0
const ERROR_GRID: usize = 10_001;

/// Chebyshev projection of [`log_sigmoid`] on `[-r, r]`, truncated at
/// degree 2, via Chebyshev-Gauss quadrature.
pub fn chebyshev_coeffs(r: f64) -> Result<ChebCoeffs> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("Chebyshev range must be positive, got {r}")));
    }
    let mut c = [0.0; 3];
    for i in 0..CHEB_NODES {
        let angle = std::f64::consts::PI * (i as f64 + 0.5) / CHEB_NODES as f64;
        let f = log_sigmoid(r * angle.cos());
        for (k, ck) in c.iter_mut().enumerate() {
            *ck += f * (k as f64 * angle).cos();
        }
    }
    c.iter_mut().for_each(|v| *v *= 2.0 / CHEB_NODES as f64);
    // c0/2 + c1 t + c2 (2t^2 - 1) with t = s / r
    let mut fit = ChebCoeffs {
        b0: c[0] / 2.0 - c[2],
        b1: c[1] / r,
        b2: 2.0 * c[2] / (r * r),
        range: r,
        max_abs_error: 0.0,
    };
    fit.max_abs_error = (0..ERROR_GRID)
        .map(|i| -r + 2.0 * r * i as f64 / (ERROR_GRID - 1) as f64)
        .map(|s| (fit.eval(s) - log_sigmoid(s)).abs())
        .fold(0.0, f64::max);
    Ok(fit)
}

/// Maximize `n b0 + b1 xty.theta + b2 theta^T xtx theta`; for `b2 < 0` the
/// maximizer is `-(b1 / (2 b2)) xtx^{-1} xty`.
pub fn solve_logistic_approx(stats: &SuffStats, coeffs: &ChebCoeffs, ridge_floor: f64) -> Result<FittedModel> {
    if !(coeffs.b2 < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "quadratic coefficient must be negative, got {}",
            coeffs.b2
        )));
    }
    let rhs = &stats.xty * (-coeffs.b1 / (2.0 * coeffs.b2));
    let (theta, info) = solve_with_ridge(&stats.xtx, &rhs, ridge_floor)?;
    Ok(FittedModel {
        theta: theta.iter().copied().collect(),
        intercept: stats.intercept,
        task: Task::Logistic,
        provenance: Provenance::DdSsp,
        diagnostics: Diagnostics {
            condition: info.condition,
            ridge: info.ridge,
            iterations: 0,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SspOptions {
    pub intercept: bool,
    pub ridge_floor: f64,
    pub chebyshev_range: f64,
}

impl Default for SspOptions {
    fn default() -> Self {
        SspOptions {
            intercept: true,
            ridge_floor: DEFAULT_RIDGE_FLOOR,
            chebyshev_range: DEFAULT_CHEBYSHEV_RANGE,
        }
    }
}

/// Fit a regression model from released marginals alone.
pub fn fit_from_marginals(
    output: &MechanismOutput,
    spec: &EncodingSpec,
    task: Task,
    options: &SspOptions,
) -> Result<FittedModel> {
    let stats = reconstruct_ztz(output, spec, options.intercept)?;
    match task {
        Task::Linear => solve_linear(&stats, options.ridge_floor),
        Task::Logistic => {
            spec.validate_logistic()?;
            let coeffs = chebyshev_coeffs(options.chebyshev_range)?;
            solve_logistic_approx(&stats, &coeffs, options.ridge_floor)
        }
    }
}
