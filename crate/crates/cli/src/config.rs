//! TOML run configuration.
//!
//! Every field has a default, so an empty file (or none at all) is a
//! valid configuration. Sections mirror the library's config types;
//! command-line flags and `SINDY_LOM_*` environment variables override
//! file values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sindy_lom::liboptim::{GaConfig, LomConfig};
use sindy_lom::loss::LossWeights;
use sindy_lom::stlsq::StlsqConfig;
use sindy_lom::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StlsqSection {
    pub lambda: f64,
    pub k_max: usize,
    pub rank_tol: f64,
    pub solver: String,
}

impl Default for StlsqSection {
    fn default() -> Self {
        let d = StlsqConfig::default();
        Self {
            lambda: d.lambda,
            k_max: d.k_max,
            rank_tol: d.rank_tol,
            solver: "stlsq".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub kappa: f64,
    /// Per-LL-dataset weights; replicated to the dataset count when absent.
    pub q: Option<Vec<f64>>,
    /// Per-state-component weights; replicated when absent.
    pub r: Option<Vec<f64>>,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            kappa: 8.0e-7,
            q: None,
            r: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSection {
    pub population_size: usize,
    pub max_generations: usize,
    pub crossover_fraction: f64,
    pub mutation_stddev: f64,
    pub elite_count: usize,
    pub tournament_size: usize,
    /// Scalar bounds, replicated over all Φ dimensions.
    pub init_low: f64,
    pub init_high: f64,
    pub stall_generations: usize,
}

impl Default for GaSection {
    fn default() -> Self {
        let d = GaConfig::new(0, -500.0, 500.0, 0);
        Self {
            population_size: d.population_size,
            max_generations: d.max_generations,
            crossover_fraction: d.crossover_fraction,
            mutation_stddev: d.mutation_stddev,
            elite_count: d.elite_count,
            tournament_size: d.tournament_size,
            init_low: -500.0,
            init_high: 500.0,
            stall_generations: d.stall_generations,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSection {
    pub divergence_bound: f64,
    pub divergence_penalty: f64,
}

impl Default for RolloutSection {
    fn default() -> Self {
        Self {
            divergence_bound: 1e8,
            divergence_penalty: 1e12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibrarySection {
    /// Maximum total degree of the polynomial part.
    pub degree: u32,
    /// Number of Gaussian RBFs appended to the polynomial part.
    pub rbf_count: usize,
}

impl Default for LibrarySection {
    fn default() -> Self {
        Self {
            degree: 2,
            rbf_count: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub sr: Option<String>,
    pub ll: Vec<String>,
    pub n_state: Option<usize>,
    pub m_input: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// Strategy names: `poly`, `rbf-random`, `rbf-optimized`.
    pub strategies: Vec<String>,
    /// Interval the random-Φ strategy draws from.
    pub random_phi_low: f64,
    pub random_phi_high: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            strategies: vec![
                "poly".to_string(),
                "rbf-random".to_string(),
                "rbf-optimized".to_string(),
            ],
            random_phi_low: -500.0,
            random_phi_high: 500.0,
        }
    }
}

/// Full run configuration; the TOML document mirrors this layout.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub stlsq: StlsqSection,
    pub loss: LossSection,
    pub ga: GaSection,
    pub rollout: RolloutSection,
    pub library: LibrarySection,
    pub data: DataSection,
    pub compare: CompareSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Builds the library-optimization config for `phi_dim` parameters,
    /// `n_ll` loss datasets and `n_state` state components.
    pub fn lom_config(&self, phi_dim: usize, n_ll: usize, n_state: usize, seed: u64) -> Result<LomConfig> {
        let mut ga = GaConfig::new(phi_dim, self.ga.init_low, self.ga.init_high, seed);
        ga.population_size = self.ga.population_size;
        ga.max_generations = self.ga.max_generations;
        ga.crossover_fraction = self.ga.crossover_fraction;
        ga.mutation_stddev = self.ga.mutation_stddev;
        ga.elite_count = self.ga.elite_count;
        ga.tournament_size = self.ga.tournament_size;
        ga.stall_generations = self.ga.stall_generations;

        let q = match &self.loss.q {
            Some(q) => {
                if q.len() != n_ll {
                    return Err(Error::InvalidConfig(format!(
                        "loss.q has {} entries but {} loss datasets are in use",
                        q.len(),
                        n_ll
                    )));
                }
                q.clone()
            }
            None => vec![1.0; n_ll],
        };
        let r = match &self.loss.r {
            Some(r) => {
                if r.len() != n_state {
                    return Err(Error::InvalidConfig(format!(
                        "loss.r has {} entries but the state dimension is {}",
                        r.len(),
                        n_state
                    )));
                }
                r.clone()
            }
            None => vec![1.0; n_state],
        };

        Ok(LomConfig {
            stlsq: StlsqConfig {
                lambda: self.stlsq.lambda,
                k_max: self.stlsq.k_max,
                rank_tol: self.stlsq.rank_tol,
            },
            weights: LossWeights {
                q,
                r,
                kappa: self.loss.kappa,
            },
            ga,
            divergence_bound: self.rollout.divergence_bound,
            divergence_penalty: self.rollout.divergence_penalty,
        })
    }
}
