//! Synthetic discrete-time plants with known sparse ground truth.
//!
//! Every shipped plant's dynamics are expressed through its own
//! `SindyModel`, so noise-free simulation reproduces exactly what a
//! perfect fit would predict — the bit-exact oracle the test suites and
//! acceptance criteria build on. Observation noise, when enabled, is
//! added to the *recorded* states only; the dynamics evolve clean.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::library::LibrarySpec;
use crate::rollout::SindyModel;
use crate::stlsq::CoefficientMatrix;

/// States beyond this ∞-norm during simulation abort with an error; the
/// shipped plants stay far below it under their default excitations.
const SIMULATION_BOUND: f64 = 1e12;

/// Waveform of one exogenous input channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    /// Random levels, each held for `hold` steps.
    PiecewiseConstant { hold: usize },
    /// Sum of `count` sinusoids with random frequency, phase and weight,
    /// rescaled into the amplitude range.
    Sinusoids { count: usize },
    /// Single sweep whose per-step frequency moves linearly from
    /// `cycles_start` to `cycles_end` (cycles per step).
    Chirp { cycles_start: f64, cycles_end: f64 },
}

/// One input channel: waveform plus amplitude range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputChannel {
    pub kind: SignalKind,
    pub low: f64,
    pub high: f64,
}

/// Excitation for all input channels of a plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub channels: Vec<InputChannel>,
}

impl ExcitationSpec {
    /// No inputs (autonomous plant).
    pub fn none() -> Self {
        Self { channels: vec![] }
    }

    /// Piecewise-constant levels on every one of `m` channels.
    pub fn piecewise(m: usize, low: f64, high: f64, hold: usize) -> Self {
        Self {
            channels: (0..m)
                .map(|_| InputChannel {
                    kind: SignalKind::PiecewiseConstant { hold },
                    low,
                    high,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.channels.iter().enumerate() {
            if !(c.low < c.high) || !c.low.is_finite() || !c.high.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "channel {i}: amplitude range [{}, {}] is invalid",
                    c.low, c.high
                )));
            }
            if let SignalKind::PiecewiseConstant { hold } = c.kind {
                if hold == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "channel {i}: hold length must be positive"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws the m × n_samples input matrix. Values stay inside each
    /// channel's amplitude range.
    pub fn generate(&self, n_samples: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        self.validate()?;
        let m = self.channels.len();
        let mut w = DMatrix::zeros(m, n_samples);
        for (i, c) in self.channels.iter().enumerate() {
            let mid = 0.5 * (c.low + c.high);
            let half = 0.5 * (c.high - c.low);
            match &c.kind {
                SignalKind::PiecewiseConstant { hold } => {
                    let mut level = rng.random_range(c.low..=c.high);
                    for k in 0..n_samples {
                        if k % hold == 0 && k > 0 {
                            level = rng.random_range(c.low..=c.high);
                        }
                        w[(i, k)] = level;
                    }
                }
                SignalKind::Sinusoids { count } => {
                    let count = (*count).max(1);
                    let comps: Vec<(f64, f64, f64)> = (0..count)
                        .map(|_| {
                            (
                                rng.random_range(0.5..1.0),
                                rng.random_range(0.005..0.05),
                                rng.random_range(0.0..std::f64::consts::TAU),
                            )
                        })
                        .collect();
                    let weight_sum: f64 = comps.iter().map(|c| c.0).sum();
                    for k in 0..n_samples {
                        let mut s = 0.0;
                        for (a, f, ph) in &comps {
                            s += a * (std::f64::consts::TAU * f * k as f64 + ph).sin();
                        }
                        w[(i, k)] = mid + half * s / weight_sum;
                    }
                }
                SignalKind::Chirp {
                    cycles_start,
                    cycles_end,
                } => {
                    let span = n_samples.max(2) as f64 - 1.0;
                    for k in 0..n_samples {
                        let t = k as f64;
                        // Integrated instantaneous frequency.
                        let phase = std::f64::consts::TAU
                            * (cycles_start * t + (cycles_end - cycles_start) * t * t / (2.0 * span));
                        w[(i, k)] = mid + half * phase.sin();
                    }
                }
            }
        }
        Ok(w)
    }
}

/// A plant with known dynamics, expressed through its own model.
#[derive(Debug, Clone)]
pub struct SyntheticPlant {
    name: String,
    true_model: SindyModel,
    noise_stddev: f64,
    default_x0: DVector<f64>,
    default_excitation: ExcitationSpec,
}

impl SyntheticPlant {
    pub fn new(
        name: impl Into<String>,
        true_model: SindyModel,
        default_x0: DVector<f64>,
        default_excitation: ExcitationSpec,
    ) -> Result<Self> {
        let name = name.into();
        if default_x0.len() != true_model.n_state() {
            return Err(Error::DimensionMismatch {
                context: format!("plant '{name}' initial state"),
                expected: true_model.n_state().to_string(),
                found: default_x0.len().to_string(),
            });
        }
        if default_excitation.channels.len() != true_model.m_input() {
            return Err(Error::DimensionMismatch {
                context: format!("plant '{name}' excitation channels"),
                expected: true_model.m_input().to_string(),
                found: default_excitation.channels.len().to_string(),
            });
        }
        Ok(Self {
            name,
            true_model,
            noise_stddev: 0.0,
            default_x0,
            default_excitation,
        })
    }

    /// Returns a copy recording states with Gaussian observation noise.
    pub fn with_noise(mut self, stddev: f64) -> Self {
        self.noise_stddev = stddev.max(0.0);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn true_model(&self) -> &SindyModel {
        &self.true_model
    }

    pub fn noise_stddev(&self) -> f64 {
        self.noise_stddev
    }

    pub fn n_state(&self) -> usize {
        self.true_model.n_state()
    }

    pub fn m_input(&self) -> usize {
        self.true_model.m_input()
    }

    pub fn default_x0(&self) -> &DVector<f64> {
        &self.default_x0
    }

    pub fn default_excitation(&self) -> &ExcitationSpec {
        &self.default_excitation
    }

    /// Simulates `n_samples` steps from `x0` under `excitation`, seeded.
    /// The recorded dataset is named `{plant}_s{seed}`.
    pub fn simulate(
        &self,
        excitation: &ExcitationSpec,
        x0: &DVector<f64>,
        n_samples: usize,
        seed: u64,
    ) -> Result<TimeSeriesDataset> {
        if n_samples < 2 {
            return Err(Error::DatasetTooShort {
                name: self.name.clone(),
                len: n_samples,
                min: 2,
            });
        }
        if x0.len() != self.n_state() {
            return Err(Error::DimensionMismatch {
                context: format!("plant '{}' initial state", self.name),
                expected: self.n_state().to_string(),
                found: x0.len().to_string(),
            });
        }
        if excitation.channels.len() != self.m_input() {
            return Err(Error::DimensionMismatch {
                context: format!("plant '{}' excitation channels", self.name),
                expected: self.m_input().to_string(),
                found: excitation.channels.len().to_string(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = excitation.generate(n_samples, &mut rng)?;

        let n = self.n_state();
        let mut clean = DMatrix::zeros(n, n_samples);
        let mut x = x0.clone();
        for k in 0..n_samples {
            if x.iter().any(|v| !v.is_finite()) || x.amax() > SIMULATION_BOUND {
                return Err(Error::PlantDiverged {
                    plant: self.name.clone(),
                    step: k,
                });
            }
            clean.set_column(k, &x);
            if k + 1 < n_samples {
                let w = DVector::from_iterator(self.m_input(), inputs.column(k).iter().copied());
                x = self.true_model.step(&x, &w).map_err(|_| Error::PlantDiverged {
                    plant: self.name.clone(),
                    step: k + 1,
                })?;
            }
        }

        let mut recorded = clean;
        if self.noise_stddev > 0.0 {
            let normal = Normal::new(0.0, self.noise_stddev)
                .map_err(|e| Error::InvalidConfig(format!("noise stddev: {e}")))?;
            for k in 0..n_samples {
                for j in 0..n {
                    recorded[(j, k)] += normal.sample(&mut rng);
                }
            }
        }
        TimeSeriesDataset::from_matrices(
            format!("{}_s{}", self.name, seed),
            recorded,
            inputs,
        )
    }
}

fn model(spec: LibrarySpec, phi: Vec<f64>, entries: &[(usize, usize, f64)]) -> SindyModel {
    let mut xi = DMatrix::zeros(spec.p(), spec.n_state());
    for &(row, col, value) in entries {
        xi[(row, col)] = value;
    }
    SindyModel::new(spec, phi, CoefficientMatrix::new(xi)).expect("builtin plant is well-formed")
}

/// Stable linear two-state plant, one input.
/// x1' = 0.8·x1 + 0.1·w1, x2' = 0.7·x2 — three nonzero coefficients.
fn plant_linear2() -> SyntheticPlant {
    let spec = LibrarySpec::polynomial(2, 1, 1).unwrap(); // [1, x1, x2, w1]
    let m = model(spec, vec![], &[(1, 0, 0.8), (3, 0, 0.1), (2, 1, 0.7)]);
    SyntheticPlant::new(
        "linear2",
        m,
        DVector::from_column_slice(&[1.0, -0.5]),
        ExcitationSpec::piecewise(1, -1.0, 1.0, 20),
    )
    .unwrap()
}

/// Coupled quadratic plant using the degree-2 catalogue terms x1·x2
/// and w1².
/// x1' = 0.5·x1 + 0.2·x1x2 + 0.1·w1², x2' = 0.6·x2 − 0.15·x1x2 + 0.3·w1.
fn plant_quadratic2() -> SyntheticPlant {
    // Library order: [1, x1, x2, w1, x1², x1x2, x1w1, x2², x2w1, w1²].
    let spec = LibrarySpec::polynomial(2, 1, 2).unwrap();
    let m = model(
        spec,
        vec![],
        &[
            (1, 0, 0.5),
            (5, 0, 0.2),
            (9, 0, 0.1),
            (2, 1, 0.6),
            (5, 1, -0.15),
            (3, 1, 0.3),
        ],
    );
    SyntheticPlant::new(
        "quadratic2",
        m,
        DVector::from_column_slice(&[0.5, -0.3]),
        ExcitationSpec::piecewise(1, -0.8, 0.8, 20),
    )
    .unwrap()
}

/// Scalar autonomous plant with a Gaussian-bump nonlinearity that no
/// finite polynomial library contains — the motivating case for library
/// optimization. x' = 0.05 + 0.95·x + 0.3·exp(−(x−1)²/0.5²); the slow
/// sweep from the default x0 = −1 crosses the bump, so the data carry
/// information about μ* and σ*.
fn plant_rbf1() -> SyntheticPlant {
    let spec = LibrarySpec::polynomial(1, 0, 1).unwrap().with_rbfs(1); // [1, x, rbf]
    let m = model(
        spec,
        vec![1.0, 0.5],
        &[(0, 0, 0.05), (1, 0, 0.95), (2, 0, 0.3)],
    );
    SyntheticPlant::new(
        "rbf1",
        m,
        DVector::from_column_slice(&[-1.0]),
        ExcitationSpec::none(),
    )
    .unwrap()
}

/// Near-unstable scalar plant (pole 0.995) with a small RBF bump.
/// One-step residuals of a polynomial fit stay tiny while recursive
/// prediction amplifies them by roughly 1/(1−0.995).
/// x' = 0.995·x + 0.1·w + 0.08·rbf((x,w); μ=(1.5,0), σ=(0.5,30)); the
/// huge σ_w makes the bump effectively input-independent.
fn plant_margin1() -> SyntheticPlant {
    let spec = LibrarySpec::polynomial(1, 1, 1).unwrap().with_rbfs(1); // [1, x, w, rbf]
    let m = model(
        spec,
        vec![1.5, 0.0, 0.5, 30.0],
        &[(1, 0, 0.995), (2, 0, 0.1), (3, 0, 0.08)],
    );
    SyntheticPlant::new(
        "margin1",
        m,
        DVector::from_column_slice(&[0.0]),
        ExcitationSpec::piecewise(1, -1.0, 1.0, 20),
    )
    .unwrap()
}

/// All shipped plants.
pub fn builtin_plants() -> Vec<SyntheticPlant> {
    vec![
        plant_linear2(),
        plant_quadratic2(),
        plant_rbf1(),
        plant_margin1(),
    ]
}

/// Looks a shipped plant up by name.
pub fn plant_by_name(name: &str) -> Result<SyntheticPlant> {
    builtin_plants()
        .into_iter()
        .find(|p| p.name() == name)
        .ok_or_else(|| Error::UnknownPlant(name.to_string()))
}
