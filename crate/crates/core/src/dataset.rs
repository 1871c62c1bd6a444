//! Time-series data, shifted-matrix views and CSV ingestion.
//!
//! A dataset is a paired sequence of state samples `x(k)` and exogenous
//! input samples `w(k)`, `k = 0..=N`. The regression consumes it through
//! [`ShiftedMatrices`]: the stacked columns `X = [x(0) … x(N−1)]`, the
//! one-step advance `X⁺ = [x(1) … x(N)]`, and the aligned inputs
//! `W = [w(0) … w(N−1)]`.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numfmt::f64_to_csv;

/// Paired state/input sequences with sampling metadata.
///
/// Immutable after construction; the time index `k` is 0-based and
/// dimensionless.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    name: String,
    n_state: usize,
    m_input: usize,
    /// Column k holds x(k); shape n_state × len.
    states: DMatrix<f64>,
    /// Column k holds w(k); shape m_input × len.
    inputs: DMatrix<f64>,
}

impl TimeSeriesDataset {
    /// Builds a dataset from per-sample rows `(state, input)`.
    ///
    /// Rejects datasets shorter than 2 samples, dimension mismatches and
    /// non-finite entries.
    pub fn new(
        name: impl Into<String>,
        n_state: usize,
        m_input: usize,
        samples: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<Self> {
        let name = name.into();
        if n_state == 0 {
            return Err(Error::InvalidConfig("n_state must be positive".into()));
        }
        if samples.len() < 2 {
            return Err(Error::DatasetTooShort {
                name,
                len: samples.len(),
                min: 2,
            });
        }
        let len = samples.len();
        let mut states = DMatrix::zeros(n_state, len);
        let mut inputs = DMatrix::zeros(m_input, len);
        for (k, (x, w)) in samples.iter().enumerate() {
            if x.len() != n_state {
                return Err(Error::DimensionMismatch {
                    context: format!("state sample {k} of dataset '{name}'"),
                    expected: n_state.to_string(),
                    found: x.len().to_string(),
                });
            }
            if w.len() != m_input {
                return Err(Error::DimensionMismatch {
                    context: format!("input sample {k} of dataset '{name}'"),
                    expected: m_input.to_string(),
                    found: w.len().to_string(),
                });
            }
            for (i, &v) in x.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("state {i} at sample {k} of dataset '{name}'"),
                    });
                }
                states[(i, k)] = v;
            }
            for (j, &v) in w.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("input {j} at sample {k} of dataset '{name}'"),
                    });
                }
                inputs[(j, k)] = v;
            }
        }
        Ok(Self {
            name,
            n_state,
            m_input,
            states,
            inputs,
        })
    }

    /// Builds a dataset from column-per-sample matrices.
    pub fn from_matrices(
        name: impl Into<String>,
        states: DMatrix<f64>,
        inputs: DMatrix<f64>,
    ) -> Result<Self> {
        let name = name.into();
        if states.ncols() != inputs.ncols() {
            return Err(Error::DimensionMismatch {
                context: format!("dataset '{name}' state/input sample counts"),
                expected: states.ncols().to_string(),
                found: inputs.ncols().to_string(),
            });
        }
        if states.ncols() < 2 {
            return Err(Error::DatasetTooShort {
                name,
                len: states.ncols(),
                min: 2,
            });
        }
        if states.nrows() == 0 {
            return Err(Error::InvalidConfig("n_state must be positive".into()));
        }
        if states.iter().any(|v| !v.is_finite()) || inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("dataset '{name}'"),
            });
        }
        Ok(Self {
            name,
            n_state: states.nrows(),
            m_input: inputs.nrows(),
            states,
            inputs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn m_input(&self) -> usize {
        self.m_input
    }

    /// Number of samples, i.e. N+1.
    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least 2 samples
    }

    /// State vector x(k).
    pub fn state(&self, k: usize) -> nalgebra::DVectorView<'_, f64> {
        self.states.column(k)
    }

    /// Input vector w(k).
    pub fn input(&self, k: usize) -> nalgebra::DVectorView<'_, f64> {
        self.inputs.column(k)
    }

    /// All states, column k = x(k).
    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    /// All inputs, column k = w(k).
    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    /// Produces the shifted regression views `X`, `X⁺`, `W`.
    pub fn shifted(&self) -> ShiftedMatrices {
        let n_cols = self.len() - 1;
        ShiftedMatrices {
            x: self.states.columns(0, n_cols).into_owned(),
            x_plus: self.states.columns(1, n_cols).into_owned(),
            w: self.inputs.columns(0, n_cols).into_owned(),
        }
    }

    /// Loads a dataset from CSV: header row, one row per time step, state
    /// columns first then input columns.
    pub fn load_csv(path: impl AsRef<Path>, n_state: usize, m_input: usize) -> Result<Self> {
        let path = path.as_ref();
        let path_str = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path_str.clone(),
            source,
        })?;
        let expected = n_state + m_input;
        let mut lines = text.lines().enumerate();

        let (_, header) = lines.next().ok_or_else(|| Error::DatasetTooShort {
            name: path_str.clone(),
            len: 0,
            min: 2,
        })?;
        let header_fields: Vec<&str> = header.split(',').collect();
        if header_fields.len() != expected {
            return Err(Error::ColumnCount {
                path: path_str,
                line: 1,
                expected,
                found: header_fields.len(),
            });
        }

        let mut samples = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected {
                return Err(Error::ColumnCount {
                    path: path_str,
                    line: idx + 1,
                    expected,
                    found: fields.len(),
                });
            }
            let mut row = Vec::with_capacity(expected);
            for (col, field) in fields.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::NonNumericCell {
                    path: path_str.clone(),
                    line: idx + 1,
                    column: header_fields[col].trim().to_string(),
                    value: field.trim().to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonNumericCell {
                        path: path_str.clone(),
                        line: idx + 1,
                        column: header_fields[col].trim().to_string(),
                        value: field.trim().to_string(),
                    });
                }
                row.push(v);
            }
            let (x, w) = row.split_at(n_state);
            samples.push((x.to_vec(), w.to_vec()));
        }

        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path_str.clone());
        Self::new(name, n_state, m_input, &samples)
    }

    /// Writes the dataset as CSV with a canonical `x1..xn,w1..wm` header
    /// and 17-significant-digit floats.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let path_str = path.display().to_string();
        let mut out = Vec::new();
        let header: Vec<String> = (1..=self.n_state)
            .map(|i| format!("x{i}"))
            .chain((1..=self.m_input).map(|j| format!("w{j}")))
            .collect();
        writeln!(out, "{}", header.join(",")).expect("in-memory write");
        for k in 0..self.len() {
            let fields: Vec<String> = self
                .states
                .column(k)
                .iter()
                .chain(self.inputs.column(k).iter())
                .map(|&v| f64_to_csv(v))
                .collect();
            writeln!(out, "{}", fields.join(",")).expect("in-memory write");
        }
        std::fs::write(path, out).map_err(|source| Error::Io {
            path: path_str,
            source,
        })
    }
}

/// Regression views over a dataset: `X`, its one-step advance `X⁺`, and the
/// aligned inputs `W`. All three have N = len−1 columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedMatrices {
    /// n × N, column k = x(k).
    pub x: DMatrix<f64>,
    /// n × N, column k = x(k+1).
    pub x_plus: DMatrix<f64>,
    /// m × N, column k = w(k).
    pub w: DMatrix<f64>,
}

impl ShiftedMatrices {
    /// Number of regression samples N.
    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }
}
