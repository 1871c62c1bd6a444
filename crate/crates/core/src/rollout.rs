//! One-step-ahead and recursive long-term (RLT) prediction.
//!
//! One-step prediction evaluates the model map on *true* samples at every
//! step. RLT prediction recurses: predicted states are fed back while the
//! true exogenous inputs are replayed, which is where unstable error
//! propagation shows up.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::library::LibrarySpec;
use crate::stlsq::CoefficientMatrix;

/// Default ∞-norm bound above which a rollout is declared diverged.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e8;

/// A fitted model: library, its parameter vector Φ, and coefficients Ξ.
/// The update law is `x(k+1) = (Θ(x(k), w(k); Φ) Ξ)ᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SindyModel {
    spec: LibrarySpec,
    phi: Vec<f64>,
    xi: CoefficientMatrix,
}

impl SindyModel {
    pub fn new(spec: LibrarySpec, phi: Vec<f64>, xi: CoefficientMatrix) -> Result<Self> {
        if phi.len() != spec.phi_dim() {
            return Err(Error::DimensionMismatch {
                context: "model parameter vector".into(),
                expected: spec.phi_dim().to_string(),
                found: phi.len().to_string(),
            });
        }
        if xi.p() != spec.p() || xi.n_state() != spec.n_state() {
            return Err(Error::DimensionMismatch {
                context: "model coefficient matrix".into(),
                expected: format!("{}x{}", spec.p(), spec.n_state()),
                found: format!("{}x{}", xi.p(), xi.n_state()),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) || xi.xi().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "model parameters".into(),
            });
        }
        Ok(Self { spec, phi, xi })
    }

    pub fn spec(&self) -> &LibrarySpec {
        &self.spec
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn xi(&self) -> &CoefficientMatrix {
        &self.xi
    }

    pub fn n_state(&self) -> usize {
        self.spec.n_state()
    }

    pub fn m_input(&self) -> usize {
        self.spec.m_input()
    }

    /// Θ(x, w; Φ)Ξ without validation; non-finite inputs flow through.
    fn step_raw(&self, x: &[f64], w: &[f64], row_buf: &mut [f64], out: &mut DVector<f64>) {
        self.spec.eval_row_unchecked(x, w, &self.phi, row_buf);
        let xi = self.xi.xi();
        for j in 0..xi.ncols() {
            let mut acc = 0.0;
            for (i, &theta_i) in row_buf.iter().enumerate() {
                let c = xi[(i, j)];
                if c != 0.0 {
                    acc += theta_i * c;
                }
            }
            out[j] = acc;
        }
    }

    /// One application of the model map. A non-finite result is an error:
    /// single-step divergence must be explicit, not a silent NaN.
    pub fn step(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n_state() || w.len() != self.m_input() {
            return Err(Error::DimensionMismatch {
                context: "model step".into(),
                expected: format!("x:{} w:{}", self.n_state(), self.m_input()),
                found: format!("x:{} w:{}", x.len(), w.len()),
            });
        }
        if x.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "model step input".into(),
            });
        }
        let mut row = vec![0.0; self.spec.p()];
        let mut out = DVector::zeros(self.n_state());
        self.step_raw(x.as_slice(), w.as_slice(), &mut row, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "model step output".into(),
            });
        }
        Ok(out)
    }

    fn check_dataset(&self, ds: &TimeSeriesDataset) -> Result<()> {
        if ds.n_state() != self.n_state() || ds.m_input() != self.m_input() {
            return Err(Error::DimensionMismatch {
                context: format!("dataset '{}' vs model", ds.name()),
                expected: format!("x:{} w:{}", self.n_state(), self.m_input()),
                found: format!("x:{} w:{}", ds.n_state(), ds.m_input()),
            });
        }
        Ok(())
    }

    /// One-step-ahead predictions on true samples: column k holds
    /// x̌(k+1) = model(x(k), w(k)). No recursion.
    pub fn predict_one_step(&self, ds: &TimeSeriesDataset) -> Result<OneStepPrediction> {
        self.check_dataset(ds)?;
        let n_pred = ds.len() - 1;
        let mut predictions = DMatrix::zeros(self.n_state(), n_pred);
        let mut diverged = vec![false; n_pred];
        let mut row = vec![0.0; self.spec.p()];
        let mut out = DVector::zeros(self.n_state());
        for k in 0..n_pred {
            self.step_raw(
                ds.state(k).as_slice(),
                ds.input(k).as_slice(),
                &mut row,
                &mut out,
            );
            if out.iter().any(|v| !v.is_finite()) {
                diverged[k] = true;
            }
            predictions.set_column(k, &out);
        }
        Ok(OneStepPrediction {
            predictions,
            diverged,
        })
    }

    /// Recursive long-term prediction: x̂(0) is the dataset's initial
    /// state, then x̂(k+1) = model(x̂(k), w(k)) with true inputs and
    /// predicted states. Stops once a state is non-finite or its ∞-norm
    /// exceeds `bound`; covers at most the shifted sample range
    /// k = 0..len−2.
    pub fn predict_rlt(&self, ds: &TimeSeriesDataset, bound: f64) -> Result<RolloutResult> {
        self.check_dataset(ds)?;
        if !(bound > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "divergence bound must be positive, got {bound}"
            )));
        }
        let n_steps = ds.len() - 1;
        let n = self.n_state();
        let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n_steps);
        let mut row = vec![0.0; self.spec.p()];
        let mut x = ds.state(0).clone_owned();
        let mut diverged_at = None;
        for k in 0..n_steps {
            if x.iter().any(|v| !v.is_finite()) || x.amax() > bound {
                diverged_at = Some(k);
                break;
            }
            columns.push(x.clone());
            if k + 1 < n_steps {
                let mut next = DVector::zeros(n);
                self.step_raw(x.as_slice(), ds.input(k).as_slice(), &mut row, &mut next);
                x = next;
            }
        }
        let trajectory = if columns.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&columns)
        };
        Ok(RolloutResult {
            trajectory,
            diverged: diverged_at.is_some(),
            diverged_at,
        })
    }
}

/// Result of [`SindyModel::predict_one_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepPrediction {
    /// n × (len−1); column k is x̌(k+1).
    pub predictions: DMatrix<f64>,
    /// Per-column flag: true when that step produced a non-finite value.
    pub diverged: Vec<bool>,
}

impl OneStepPrediction {
    pub fn any_diverged(&self) -> bool {
        self.diverged.iter().any(|&d| d)
    }

    /// Index of the first diverged step, if any.
    pub fn first_diverged(&self) -> Option<usize> {
        self.diverged.iter().position(|&d| d)
    }
}

/// Result of [`SindyModel::predict_rlt`].
///
/// `trajectory` holds only the finite, in-bound prefix x̂(0..); when
/// `diverged`, `diverged_at` is the index the offending state would have
/// occupied, and `trajectory.ncols() == diverged_at`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub trajectory: DMatrix<f64>,
    pub diverged: bool,
    pub diverged_at: Option<usize>,
}

impl RolloutResult {
    /// Number of predicted states produced.
    pub fn len(&self) -> usize {
        self.trajectory.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.ncols() == 0
    }
}
