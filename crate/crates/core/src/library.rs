//! Candidate basis functions and the library matrix `Θ(X, W; Φ)`.
//!
//! A library is an ordered list of basis descriptors. Polynomial entries
//! are fixed; Gaussian RBF entries read their center `μ` and scale `σ`
//! (each of dimension n+m) from slots of the tunable parameter vector `Φ`.
//! Column order is part of the contract: coefficient matrices index into
//! it, so it is deterministic and stable.

use nalgebra::{DMatrix, DVectorView, RowDVector};
use serde::{Deserialize, Serialize};

use crate::dataset::ShiftedMatrices;
use crate::error::{Error, Result};

/// Floor applied to |σ| before squaring, so a zero scale drawn by the
/// outer-layer search cannot divide by zero.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// One candidate basis function.
///
/// RBF descriptors store the *start* slot of their center and scale blocks
/// in `Φ`; each block has length `n_state + m_input`. σ components enter
/// squared, so their sign is irrelevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisDescriptor {
    Constant,
    Monomial {
        /// Exponent of each state component.
        x_exponents: Vec<u32>,
        /// Exponent of each input component.
        w_exponents: Vec<u32>,
    },
    GaussianRbf {
        /// First Φ slot of the center block μ ∈ R^{n+m}.
        center_slot: usize,
        /// First Φ slot of the scale block σ ∈ R^{n+m}.
        scale_slot: usize,
    },
}

impl BasisDescriptor {
    /// Number of Φ slots this descriptor claims.
    pub fn slot_count(&self, n_state: usize, m_input: usize) -> usize {
        match self {
            BasisDescriptor::GaussianRbf { .. } => 2 * (n_state + m_input),
            _ => 0,
        }
    }

    /// Human-readable label, e.g. `1`, `x1*w2`, `w4^2`, `rbf(mu@0)`.
    pub fn label(&self) -> String {
        match self {
            BasisDescriptor::Constant => "1".to_string(),
            BasisDescriptor::Monomial {
                x_exponents,
                w_exponents,
            } => {
                let mut factors = Vec::new();
                for (i, &e) in x_exponents.iter().enumerate() {
                    match e {
                        0 => {}
                        1 => factors.push(format!("x{}", i + 1)),
                        _ => factors.push(format!("x{}^{}", i + 1, e)),
                    }
                }
                for (j, &e) in w_exponents.iter().enumerate() {
                    match e {
                        0 => {}
                        1 => factors.push(format!("w{}", j + 1)),
                        _ => factors.push(format!("w{}^{}", j + 1, e)),
                    }
                }
                if factors.is_empty() {
                    "1".to_string()
                } else {
                    factors.join("*")
                }
            }
            BasisDescriptor::GaussianRbf { center_slot, .. } => {
                format!("rbf(mu@{center_slot})")
            }
        }
    }
}

/// Ordered basis-function list plus the Φ slot layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySpec {
    n_state: usize,
    m_input: usize,
    phi_dim: usize,
    descriptors: Vec<BasisDescriptor>,
}

impl LibrarySpec {
    /// Builds a spec from explicit descriptors, validating the Φ slot
    /// layout: RBF blocks must be disjoint and together cover
    /// `[0, phi_dim)` exactly.
    pub fn new(
        n_state: usize,
        m_input: usize,
        descriptors: Vec<BasisDescriptor>,
    ) -> Result<Self> {
        if n_state == 0 {
            return Err(Error::InvalidConfig("n_state must be positive".into()));
        }
        if descriptors.is_empty() {
            return Err(Error::InvalidConfig(
                "library must contain at least one basis function".into(),
            ));
        }
        let u_dim = n_state + m_input;
        let phi_dim: usize = descriptors
            .iter()
            .map(|d| d.slot_count(n_state, m_input))
            .sum();
        let mut claimed = vec![false; phi_dim];
        for d in &descriptors {
            match d {
                BasisDescriptor::Monomial {
                    x_exponents,
                    w_exponents,
                } => {
                    if x_exponents.len() != n_state || w_exponents.len() != m_input {
                        return Err(Error::InvalidConfig(format!(
                            "monomial exponent vectors must have lengths {n_state} and {m_input}"
                        )));
                    }
                }
                BasisDescriptor::GaussianRbf {
                    center_slot,
                    scale_slot,
                } => {
                    for start in [*center_slot, *scale_slot] {
                        for slot in start..start + u_dim {
                            if slot >= phi_dim {
                                return Err(Error::InvalidConfig(format!(
                                    "RBF slot {slot} outside [0, {phi_dim})"
                                )));
                            }
                            if claimed[slot] {
                                return Err(Error::InvalidConfig(format!(
                                    "RBF slot {slot} claimed twice"
                                )));
                            }
                            claimed[slot] = true;
                        }
                    }
                }
                BasisDescriptor::Constant => {}
            }
        }
        debug_assert!(claimed.iter().all(|&c| c), "slot coverage is exact by sum");
        Ok(Self {
            n_state,
            m_input,
            phi_dim,
            descriptors,
        })
    }

    /// Constant plus all monomials in (x, w) of total degree ≤ `degree`.
    ///
    /// Order: constant, then for each degree d = 1..=degree all monomials
    /// over the stacked variables u = (x₁..x_n, w₁..w_m) in lexicographic
    /// multiset order. For degree 2 this is `1, x1, …, wm, x1², x1x2,
    /// x1w1, …, wm²`.
    pub fn polynomial(n_state: usize, m_input: usize, degree: u32) -> Result<Self> {
        if n_state == 0 {
            return Err(Error::InvalidConfig("n_state must be positive".into()));
        }
        let u_dim = n_state + m_input;
        let mut descriptors = vec![BasisDescriptor::Constant];
        for d in 1..=degree {
            for combo in multisets(u_dim, d as usize) {
                let mut x_exponents = vec![0u32; n_state];
                let mut w_exponents = vec![0u32; m_input];
                for idx in combo {
                    if idx < n_state {
                        x_exponents[idx] += 1;
                    } else {
                        w_exponents[idx - n_state] += 1;
                    }
                }
                descriptors.push(BasisDescriptor::Monomial {
                    x_exponents,
                    w_exponents,
                });
            }
        }
        Self::new(n_state, m_input, descriptors)
    }

    /// Appends `count` Gaussian RBF descriptors, each claiming 2(n+m)
    /// fresh Φ slots laid out center-then-scale.
    pub fn with_rbfs(&self, count: usize) -> Self {
        let u_dim = self.n_state + self.m_input;
        let mut descriptors = self.descriptors.clone();
        let mut next = self.phi_dim;
        for _ in 0..count {
            descriptors.push(BasisDescriptor::GaussianRbf {
                center_slot: next,
                scale_slot: next + u_dim,
            });
            next += 2 * u_dim;
        }
        Self {
            n_state: self.n_state,
            m_input: self.m_input,
            phi_dim: next,
            descriptors,
        }
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn m_input(&self) -> usize {
        self.m_input
    }

    /// Number of basis functions p (= columns of Θ).
    pub fn p(&self) -> usize {
        self.descriptors.len()
    }

    /// Total tunable-parameter count r.
    pub fn phi_dim(&self) -> usize {
        self.phi_dim
    }

    pub fn descriptors(&self) -> &[BasisDescriptor] {
        &self.descriptors
    }

    /// Column indices of descriptors that read Φ (the RBF columns).
    pub fn parametrized_columns(&self) -> Vec<usize> {
        self.descriptors
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d, BasisDescriptor::GaussianRbf { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    fn check_eval_dims(&self, x_len: usize, w_len: usize, phi_len: usize) -> Result<()> {
        if x_len != self.n_state || w_len != self.m_input {
            return Err(Error::DimensionMismatch {
                context: "library evaluation sample".into(),
                expected: format!("x:{} w:{}", self.n_state, self.m_input),
                found: format!("x:{x_len} w:{w_len}"),
            });
        }
        if phi_len != self.phi_dim {
            return Err(Error::DimensionMismatch {
                context: "library parameter vector".into(),
                expected: self.phi_dim.to_string(),
                found: phi_len.to_string(),
            });
        }
        Ok(())
    }

    /// Evaluation without dimension/finiteness checks, for hot loops whose
    /// callers validate once up front. Non-finite inputs propagate as
    /// non-finite outputs; they never panic.
    pub(crate) fn eval_row_unchecked(&self, x: &[f64], w: &[f64], phi: &[f64], out: &mut [f64]) {
        self.eval_into(x, w, phi, out);
    }

    fn eval_into(&self, x: &[f64], w: &[f64], phi: &[f64], out: &mut [f64]) {
        for (j, d) in self.descriptors.iter().enumerate() {
            out[j] = match d {
                BasisDescriptor::Constant => 1.0,
                BasisDescriptor::Monomial {
                    x_exponents,
                    w_exponents,
                } => {
                    let mut v = 1.0;
                    for (xi, &e) in x.iter().zip(x_exponents) {
                        if e > 0 {
                            v *= xi.powi(e as i32);
                        }
                    }
                    for (wj, &e) in w.iter().zip(w_exponents) {
                        if e > 0 {
                            v *= wj.powi(e as i32);
                        }
                    }
                    v
                }
                BasisDescriptor::GaussianRbf {
                    center_slot,
                    scale_slot,
                } => {
                    let mut exponent = 0.0;
                    for (d_idx, &u_d) in x.iter().chain(w.iter()).enumerate() {
                        let mu = phi[center_slot + d_idx];
                        let sigma = phi[scale_slot + d_idx].abs().max(SIGMA_FLOOR);
                        let z = (u_d - mu) / sigma;
                        exponent += z * z;
                    }
                    (-exponent).exp()
                }
            };
        }
    }

    /// Evaluates the library row `Θ(x, w; Φ)`.
    pub fn eval_row(
        &self,
        x: DVectorView<'_, f64>,
        w: DVectorView<'_, f64>,
        phi: &[f64],
    ) -> Result<RowDVector<f64>> {
        self.check_eval_dims(x.len(), w.len(), phi.len())?;
        if x.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "library evaluation sample".into(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "library parameter vector".into(),
            });
        }
        let mut row = RowDVector::zeros(self.p());
        self.eval_into(x.as_slice(), w.as_slice(), phi, row.as_mut_slice());
        Ok(row)
    }

    /// Stacks `eval_row` over every sample of `sm`: row k of the result is
    /// `Θ(x(k), w(k); Φ)`. Shape N × p.
    pub fn build_matrix(&self, sm: &ShiftedMatrices, phi: &[f64]) -> Result<DMatrix<f64>> {
        self.check_eval_dims(sm.x.nrows(), sm.w.nrows(), phi.len())?;
        let n = sm.n_samples();
        let mut theta = DMatrix::zeros(n, self.p());
        let mut row = vec![0.0; self.p()];
        for k in 0..n {
            let x_col = sm.x.column(k);
            let w_col = sm.w.column(k);
            self.eval_into(x_col.as_slice(), w_col.as_slice(), phi, &mut row);
            for (j, &v) in row.iter().enumerate() {
                theta[(k, j)] = v;
            }
        }
        Ok(theta)
    }
}

/// All multisets of size `degree` over `{0..n_vars}`, lexicographic,
/// each as a non-decreasing index list.
fn multisets(n_vars: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(degree);
    fn recurse(n_vars: usize, degree: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == degree {
            out.push(current.clone());
            return;
        }
        for idx in start..n_vars {
            current.push(idx);
            recurse(n_vars, degree, idx, current, out);
            current.pop();
        }
    }
    recurse(n_vars, degree, 0, &mut current, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn ev(spec: &LibrarySpec, x: &[f64], w: &[f64], phi: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let w = DVector::from_column_slice(w);
        spec.eval_row(x.as_view(), w.as_view(), phi)
            .unwrap()
            .iter()
            .copied()
            .collect()
    }

    #[test]
    fn second_order_library_for_two_states_four_inputs() {
        let spec = LibrarySpec::polynomial(2, 4, 2).unwrap();
        assert_eq!(spec.p(), 28);
        // Spot-check the catalogue order against hand labels.
        let labels: Vec<String> = spec.descriptors().iter().map(|d| d.label()).collect();
        assert_eq!(labels[0], "1");
        assert_eq!(labels[1], "x1");
        assert_eq!(labels[2], "x2");
        assert_eq!(labels[3], "w1");
        assert_eq!(labels[6], "w4");
        assert_eq!(labels[7], "x1^2");
        assert_eq!(labels[8], "x1*x2");
        assert_eq!(labels[9], "x1*w1");
        assert_eq!(labels[13], "x2^2");
        assert_eq!(labels[18], "w1^2");
        assert_eq!(labels[27], "w4^2");
    }

    #[test]
    fn smallest_nontrivial_library() {
        let spec = LibrarySpec::polynomial(1, 0, 1).unwrap();
        assert_eq!(spec.p(), 2);
        assert_eq!(spec.descriptors()[0], BasisDescriptor::Constant);
        assert_eq!(
            spec.descriptors()[1],
            BasisDescriptor::Monomial {
                x_exponents: vec![1],
                w_exponents: vec![]
            }
        );
    }

    #[test]
    fn monomial_count_matches_exhaustive_enumeration() {
        // Oracle: count exponent tuples (e_1, e_2, e_3) with sum ≤ 2 by
        // brute force over the three variables (x1, x2, w1).
        let mut count = 0;
        for e in 0..3usize.pow(3) {
            let mut rem = e;
            let mut total = 0;
            for _ in 0..3 {
                total += rem % 3;
                rem /= 3;
            }
            if total <= 2 {
                count += 1;
            }
        }
        let spec = LibrarySpec::polynomial(2, 1, 2).unwrap();
        assert_eq!(spec.p(), count);
        assert_eq!(spec.p(), 10);
    }

    #[test]
    fn two_state_four_input_rbf_dimensions() {
        let spec = LibrarySpec::polynomial(2, 4, 2).unwrap().with_rbfs(5);
        assert_eq!(spec.p(), 33);
        assert_eq!(spec.phi_dim(), 60);
    }

    #[test]
    fn single_rbf_scalar_state_claims_two_slots() {
        let spec = LibrarySpec::polynomial(1, 0, 1).unwrap().with_rbfs(1);
        assert_eq!(spec.phi_dim(), 2);
    }

    #[test]
    fn rbf_slots_partition_phi() {
        let spec = LibrarySpec::polynomial(2, 1, 2).unwrap().with_rbfs(3);
        let u_dim = 3;
        let mut seen = vec![0usize; spec.phi_dim()];
        for d in spec.descriptors() {
            if let BasisDescriptor::GaussianRbf {
                center_slot,
                scale_slot,
            } = d
            {
                for s in *center_slot..center_slot + u_dim {
                    seen[s] += 1;
                }
                for s in *scale_slot..scale_slot + u_dim {
                    seen[s] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn constant_descriptor_is_one() {
        let spec = LibrarySpec::polynomial(1, 1, 0).unwrap();
        assert_eq!(ev(&spec, &[7.0], &[-3.0], &[]), vec![1.0]);
    }

    #[test]
    fn rbf_at_center_is_one() {
        let spec = LibrarySpec::polynomial(1, 0, 0).unwrap().with_rbfs(1);
        let phi = [2.5, 1.0]; // mu, sigma
        let vals = ev(&spec, &[2.5], &[], &phi);
        assert_eq!(vals[1], 1.0);
    }

    #[test]
    fn rbf_scalar_value_matches_direct_evaluation() {
        // u - mu = 1, sigma = 2 → exp(-1/4)
        let spec = LibrarySpec::polynomial(1, 0, 0).unwrap().with_rbfs(1);
        let phi = [0.0, 2.0];
        let vals = ev(&spec, &[1.0], &[], &phi);
        let expected = (-0.25f64).exp();
        assert!((vals[1] - expected).abs() < 1e-15);
        assert!((expected - 0.778_800_783_1).abs() < 1e-10);
    }

    #[test]
    fn rbf_zero_sigma_is_floored_not_nan() {
        let spec = LibrarySpec::polynomial(1, 0, 0).unwrap().with_rbfs(1);
        let vals = ev(&spec, &[1.0], &[], &[0.0, 0.0]);
        assert!(vals[1].is_finite());
        assert_eq!(vals[1], 0.0); // exp of a hugely negative number underflows
        let at_center = ev(&spec, &[0.0], &[], &[0.0, 0.0]);
        assert_eq!(at_center[1], 1.0);
    }

    #[test]
    fn eval_row_rejects_non_finite_sample() {
        let spec = LibrarySpec::polynomial(1, 0, 1).unwrap();
        let x = DVector::from_column_slice(&[f64::INFINITY]);
        let w = DVector::zeros(0);
        assert!(spec.eval_row(x.as_view(), w.as_view(), &[]).is_err());
    }

    #[test]
    fn build_matrix_constant_library_is_ones() {
        let samples = vec![
            (vec![1.0], vec![]),
            (vec![2.0], vec![]),
            (vec![3.0], vec![]),
            (vec![4.0], vec![]),
        ];
        let ds = crate::dataset::TimeSeriesDataset::new("c", 1, 0, &samples).unwrap();
        let spec = LibrarySpec::polynomial(1, 0, 0).unwrap();
        let theta = spec.build_matrix(&ds.shifted(), &[]).unwrap();
        assert_eq!(theta.shape(), (3, 1));
        assert!(theta.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn build_matrix_rows_match_eval_row() {
        let samples = vec![
            (vec![1.0, -0.5], vec![0.3]),
            (vec![0.2, 0.8], vec![-1.0]),
            (vec![-0.7, 0.1], vec![0.0]),
        ];
        let ds = crate::dataset::TimeSeriesDataset::new("r", 2, 1, &samples).unwrap();
        let spec = LibrarySpec::polynomial(2, 1, 2).unwrap().with_rbfs(1);
        let phi: Vec<f64> = (0..spec.phi_dim()).map(|i| 0.1 * i as f64 + 0.5).collect();
        let sm = ds.shifted();
        let theta = spec.build_matrix(&sm, &phi).unwrap();
        for k in 0..sm.n_samples() {
            let row = spec
                .eval_row(sm.x.column(k), sm.w.column(k), &phi)
                .unwrap();
            for j in 0..spec.p() {
                assert_eq!(theta[(k, j)], row[j]);
            }
        }
    }

    #[test]
    fn polynomial_columns_do_not_depend_on_phi() {
        let samples = vec![
            (vec![1.0, 2.0], vec![0.5]),
            (vec![-1.0, 0.3], vec![0.1]),
            (vec![0.4, -0.2], vec![-0.6]),
        ];
        let ds = crate::dataset::TimeSeriesDataset::new("pc", 2, 1, &samples).unwrap();
        let spec = LibrarySpec::polynomial(2, 1, 2).unwrap().with_rbfs(2);
        let sm = ds.shifted();
        let phi_a = vec![0.5; spec.phi_dim()];
        let phi_b: Vec<f64> = (0..spec.phi_dim()).map(|i| -3.0 + i as f64).collect();
        let ta = spec.build_matrix(&sm, &phi_a).unwrap();
        let tb = spec.build_matrix(&sm, &phi_b).unwrap();
        let rbf_cols = spec.parametrized_columns();
        let mut some_rbf_changed = false;
        for j in 0..spec.p() {
            for k in 0..sm.n_samples() {
                if rbf_cols.contains(&j) {
                    if ta[(k, j)] != tb[(k, j)] {
                        some_rbf_changed = true;
                    }
                } else {
                    assert_eq!(ta[(k, j)], tb[(k, j)], "fixed column {j} moved with phi");
                }
            }
        }
        assert!(some_rbf_changed);
    }

    proptest! {
        // RBF values lie in [0, 1] (0 only by exp underflow) and are
        // invariant to sign flips of sigma.
        #[test]
        fn rbf_range_and_sigma_sign(
            u in -50.0f64..50.0,
            mu in -50.0f64..50.0,
            sigma in 0.01f64..100.0,
        ) {
            let spec = LibrarySpec::polynomial(1, 0, 0).unwrap().with_rbfs(1);
            let pos = ev(&spec, &[u], &[], &[mu, sigma]);
            let neg = ev(&spec, &[u], &[], &[mu, -sigma]);
            prop_assert_eq!(pos[1], neg[1]);
            prop_assert!((0.0..=1.0).contains(&pos[1]));
            if u == mu {
                prop_assert_eq!(pos[1], 1.0);
            }
        }
    }
}
