//! One-step loss J_os and the multi-dataset normalized RLT loss J_ms.
//!
//! J_ms drives the outer-layer library search: per dataset, the rollout
//! error of each state component is normalized by the true row norm,
//! weighted, averaged, and topped with an ℓ0 sparsity penalty κ‖Ξ‖₀. A
//! diverged rollout replaces the whole loss with a large finite penalty
//! so fitness ordering stays well-defined.

use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::rollout::SindyModel;
use crate::stlsq::CoefficientMatrix;

/// Loss assigned when any rollout diverges. Large enough to dominate any
/// realistic finite loss, finite so candidate ordering stays total.
pub const DIVERGENCE_PENALTY: f64 = 1e12;

/// Weights of the multi-dataset loss: q_i per dataset, r_j per state
/// component, and the sparsity weight κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub kappa: f64,
}

impl LossWeights {
    /// Unit weights (q_i = r_j = 1) with the shipped default κ.
    pub fn uniform(n_datasets: usize, n_state: usize) -> Self {
        Self {
            q: vec![1.0; n_datasets],
            r: vec![1.0; n_state],
            kappa: 8.0e-7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.is_empty() || self.r.is_empty() {
            return Err(Error::InvalidConfig(
                "loss weights must cover at least one dataset and one state".into(),
            ));
        }
        if self.q.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("all q weights must be positive".into()));
        }
        if self.r.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("all r weights must be positive".into()));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "kappa must be non-negative and finite, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Per-dataset contribution to J_ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTerm {
    pub name: String,
    /// (1/√N) Σ_j r_j ‖Ê_j‖₂ / ‖X_j‖₂, before the q_i weight; absent when
    /// the rollout diverged.
    pub term: Option<f64>,
    pub diverged: bool,
}

/// Decomposed J_ms evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub j_ms: f64,
    pub per_dataset: Vec<DatasetTerm>,
    pub l0_count: usize,
    pub penalty: f64,
}

impl LossReport {
    pub fn any_diverged(&self) -> bool {
        self.per_dataset.iter().any(|t| t.diverged)
    }
}

/// Total count of nonzero coefficients ‖Ξ‖₀.
pub fn l0_norm(xi: &CoefficientMatrix) -> usize {
    xi.l0_norm()
}

/// One-step loss: Σ_j ‖X̌_{j,⋆} − X⁺_{j,⋆}‖₂ over true samples.
pub fn j_os(model: &SindyModel, ds: &TimeSeriesDataset) -> Result<f64> {
    let pred = model.predict_one_step(ds)?;
    if let Some(step) = pred.first_diverged() {
        return Err(Error::OneStepDiverged { step });
    }
    let sm = ds.shifted();
    let n = model.n_state();
    let mut total = 0.0;
    for j in 0..n {
        let mut sq = 0.0;
        for k in 0..sm.n_samples() {
            let e = pred.predictions[(j, k)] - sm.x_plus[(j, k)];
            sq += e * e;
        }
        total += sq.sqrt();
    }
    Ok(total)
}

/// Multi-dataset RLT loss with the documented divergence penalty.
pub fn j_ms(
    model: &SindyModel,
    ll_datasets: &[&TimeSeriesDataset],
    weights: &LossWeights,
    bound: f64,
) -> Result<LossReport> {
    j_ms_with_penalty(model, ll_datasets, weights, bound, DIVERGENCE_PENALTY)
}

/// As [`j_ms`] with an explicit divergence penalty value.
pub fn j_ms_with_penalty(
    model: &SindyModel,
    ll_datasets: &[&TimeSeriesDataset],
    weights: &LossWeights,
    bound: f64,
    divergence_penalty: f64,
) -> Result<LossReport> {
    weights.validate()?;
    let n = model.n_state();
    if weights.q.len() != ll_datasets.len() {
        return Err(Error::DimensionMismatch {
            context: "per-dataset weights q".into(),
            expected: ll_datasets.len().to_string(),
            found: weights.q.len().to_string(),
        });
    }
    if weights.r.len() != n {
        return Err(Error::DimensionMismatch {
            context: "per-state weights r".into(),
            expected: n.to_string(),
            found: weights.r.len().to_string(),
        });
    }
    let q_total: f64 = weights.q.iter().sum();
    let r_total: f64 = weights.r.iter().sum();
    let l0_count = model.xi().l0_norm();
    let penalty = weights.kappa * l0_count as f64;

    let mut per_dataset = Vec::with_capacity(ll_datasets.len());
    let mut weighted_sum = 0.0;
    let mut any_diverged = false;
    for (i, ds) in ll_datasets.iter().enumerate() {
        let sm = ds.shifted();
        // Zero-norm truth rows are a data bug regardless of the rollout.
        let mut row_norms = Vec::with_capacity(n);
        for j in 0..n {
            let norm = sm.x.row(j).norm();
            if norm == 0.0 {
                return Err(Error::ZeroNormRow {
                    dataset: ds.name().to_string(),
                    component: j + 1,
                });
            }
            row_norms.push(norm);
        }
        let rollout = model.predict_rlt(ds, bound)?;
        if rollout.diverged {
            any_diverged = true;
            per_dataset.push(DatasetTerm {
                name: ds.name().to_string(),
                term: None,
                diverged: true,
            });
            continue;
        }
        let n_samples = sm.n_samples();
        debug_assert_eq!(rollout.len(), n_samples);
        let mut inner = 0.0;
        for j in 0..n {
            let mut sq = 0.0;
            for k in 0..n_samples {
                let e = rollout.trajectory[(j, k)] - sm.x[(j, k)];
                sq += e * e;
            }
            inner += weights.r[j] * sq.sqrt() / row_norms[j];
        }
        let term = inner / (n_samples as f64).sqrt();
        per_dataset.push(DatasetTerm {
            name: ds.name().to_string(),
            term: Some(term),
            diverged: false,
        });
        weighted_sum += weights.q[i] * term;
    }

    let j_ms = if any_diverged {
        divergence_penalty
    } else {
        weighted_sum / (q_total * r_total) + penalty
    };
    Ok(LossReport {
        j_ms,
        per_dataset,
        l0_count,
        penalty,
    })
}
