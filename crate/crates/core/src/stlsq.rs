//! Inner-layer sparse regression: sequentially thresholded least squares.
//!
//! Each state dimension is regressed independently onto the library
//! matrix. STLSQ alternates a restricted least-squares solve over the
//! current support with hard thresholding at λ, so the support can only
//! shrink; it stops early once the support is stable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::ShiftedMatrices;
use crate::error::{Error, Result};
use crate::library::LibrarySpec;

/// STLSQ tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StlsqConfig {
    /// Hard threshold λ: coefficients with |ξ_i| < λ are pruned.
    pub lambda: f64,
    /// Iteration cap; the support usually stabilizes much sooner.
    pub k_max: usize,
    /// Relative singular-value cutoff for rank-revealing least squares.
    pub rank_tol: f64,
}

impl Default for StlsqConfig {
    fn default() -> Self {
        Self {
            lambda: 8.0e-5,
            k_max: 10,
            rank_tol: 1e-10,
        }
    }
}

impl StlsqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rank_tol must lie in (0, 1), got {}",
                self.rank_tol
            )));
        }
        Ok(())
    }
}

/// Sparse coefficient matrix Ξ (p×n, column j drives state j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrix {
    xi: DMatrix<f64>,
}

impl CoefficientMatrix {
    pub fn new(xi: DMatrix<f64>) -> Self {
        Self { xi }
    }

    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    /// Row indices of nonzero entries in column `j`.
    pub fn support(&self, j: usize) -> Vec<usize> {
        self.xi
            .column(j)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Total number of nonzero entries (the ℓ0 "norm" of Ξ).
    pub fn l0_norm(&self) -> usize {
        self.xi.iter().filter(|&&v| v != 0.0).count()
    }

    /// Library row count p.
    pub fn p(&self) -> usize {
        self.xi.nrows()
    }

    /// State dimension n.
    pub fn n_state(&self) -> usize {
        self.xi.ncols()
    }
}

/// Minimum-norm least-squares solution of `‖Av − b‖₂` via SVD.
///
/// Singular values below `rank_tol · σ_max` are treated as zero, so
/// rank-deficient systems return the minimum-norm minimizer.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "least squares".into(),
            expected: format!("{} rows", a.nrows()),
            found: format!("{} target entries", b.len()),
        });
    }
    if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "least-squares system".into(),
        });
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = rank_tol * sigma_max;
    svd.solve(b, eps)
        .map_err(|e| Error::InvariantViolation(format!("SVD solve failed: {e}")))
}

fn restricted_least_squares(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    support: &[usize],
    rank_tol: f64,
) -> Result<DVector<f64>> {
    let sub = DMatrix::from_fn(theta.nrows(), support.len(), |r, c| theta[(r, support[c])]);
    least_squares(&sub, target, rank_tol)
}

fn scatter(p: usize, support: &[usize], coef: &DVector<f64>) -> DVector<f64> {
    let mut xi = DVector::zeros(p);
    for (c, &i) in support.iter().enumerate() {
        xi[i] = coef[c];
    }
    xi
}

/// STLSQ for one target column. Returns the sparse coefficient vector;
/// `trace`, when provided, records the support after every thresholding
/// step (diagnostics and property tests).
fn stlsq_solve_inner(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    cfg: &StlsqConfig,
    mut trace: Option<&mut Vec<Vec<usize>>>,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    if theta.nrows() != target.len() {
        return Err(Error::DimensionMismatch {
            context: "STLSQ target".into(),
            expected: format!("{} rows", theta.nrows()),
            found: format!("{} entries", target.len()),
        });
    }
    let p = theta.ncols();
    let unrestricted = least_squares(theta, target, cfg.rank_tol)?;
    let mut support: Vec<usize> = (0..p).filter(|&i| unrestricted[i].abs() >= cfg.lambda).collect();
    if let Some(t) = trace.as_deref_mut() {
        t.push(support.clone());
    }
    for _ in 0..cfg.k_max {
        if support.is_empty() {
            return Ok(DVector::zeros(p));
        }
        let coef = restricted_least_squares(theta, target, &support, cfg.rank_tol)?;
        let survivors: Vec<usize> = support
            .iter()
            .enumerate()
            .filter(|(c, _)| coef[*c].abs() >= cfg.lambda)
            .map(|(_, &i)| i)
            .collect();
        if let Some(t) = trace.as_deref_mut() {
            t.push(survivors.clone());
        }
        if survivors == support {
            return Ok(scatter(p, &support, &coef));
        }
        support = survivors;
    }
    // Iteration cap reached: report the restricted solution on the final support.
    if support.is_empty() {
        return Ok(DVector::zeros(p));
    }
    let coef = restricted_least_squares(theta, target, &support, cfg.rank_tol)?;
    Ok(scatter(p, &support, &coef))
}

/// Sequentially thresholded least squares for a single regression target.
pub fn stlsq_solve(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    cfg: &StlsqConfig,
) -> Result<DVector<f64>> {
    stlsq_solve_inner(theta, target, cfg, None)
}

/// As [`stlsq_solve`], additionally returning the support after each
/// thresholding step.
pub fn stlsq_solve_traced(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    cfg: &StlsqConfig,
) -> Result<(DVector<f64>, Vec<Vec<usize>>)> {
    let mut trace = Vec::new();
    let xi = stlsq_solve_inner(theta, target, cfg, Some(&mut trace))?;
    Ok((xi, trace))
}

/// Named sparse-solver registry. Alternative regularization schemes can
/// be added as variants; only STLSQ ships.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Stlsq,
}

impl SolverKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "stlsq" => Ok(SolverKind::Stlsq),
            other => Err(Error::UnknownSolver(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Stlsq => "stlsq",
        }
    }

    pub fn solve(
        self,
        theta: &DMatrix<f64>,
        target: &DVector<f64>,
        cfg: &StlsqConfig,
    ) -> Result<DVector<f64>> {
        match self {
            SolverKind::Stlsq => stlsq_solve(theta, target, cfg),
        }
    }
}

/// Builds Θ(X, W; Φ) once and solves one STLSQ problem per state
/// dimension, assembling the p×n coefficient matrix.
pub fn fit(
    spec: &LibrarySpec,
    sm: &ShiftedMatrices,
    phi: &[f64],
    cfg: &StlsqConfig,
) -> Result<CoefficientMatrix> {
    fit_with_solver(SolverKind::Stlsq, spec, sm, phi, cfg)
}

/// As [`fit`] with an explicit solver choice.
pub fn fit_with_solver(
    solver: SolverKind,
    spec: &LibrarySpec,
    sm: &ShiftedMatrices,
    phi: &[f64],
    cfg: &StlsqConfig,
) -> Result<CoefficientMatrix> {
    cfg.validate()?;
    let theta = spec.build_matrix(sm, phi)?;
    let n = sm.x_plus.nrows();
    let mut xi = DMatrix::zeros(spec.p(), n);
    for j in 0..n {
        let target = DVector::from_iterator(sm.n_samples(), sm.x_plus.row(j).iter().copied());
        let col = solver.solve(&theta, &target, cfg)?;
        xi.set_column(j, &col);
    }
    Ok(CoefficientMatrix::new(xi))
}
