//! Outer-layer library optimization: a seeded genetic algorithm over the
//! RBF parameter vector Φ, minimizing the multi-dataset RLT loss.
//!
//! Determinism contract: candidate evaluation is a pure function and all
//! randomness (init, selection, crossover, mutation) is drawn from a
//! single sequential ChaCha8 stream, so a fixed seed reproduces the run
//! bit-exactly regardless of how many threads evaluate the population.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::library::LibrarySpec;
use crate::loss::{j_ms_with_penalty, LossReport, LossWeights, DIVERGENCE_PENALTY};
use crate::rollout::{SindyModel, DEFAULT_DIVERGENCE_BOUND};
use crate::stlsq::{fit, CoefficientMatrix, StlsqConfig};

/// Blend-crossover spread: children are drawn uniformly from the parent
/// interval extended by α·|a−b| on both sides.
const BLEND_ALPHA: f64 = 0.5;

/// Genetic-algorithm settings. The search domain itself is unbounded;
/// `init_low`/`init_high` only shape the initial population and set the
/// per-dimension mutation scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    /// Fraction of offspring produced by crossover (the rest mutate).
    pub crossover_fraction: f64,
    /// Mutation stddev as a fraction of each dimension's init width.
    pub mutation_stddev: f64,
    /// Individuals copied unchanged into the next generation (≥ 1 keeps
    /// the best-so-far fitness non-increasing).
    pub elite_count: usize,
    pub tournament_size: usize,
    pub init_low: Vec<f64>,
    pub init_high: Vec<f64>,
    pub seed: u64,
    /// Stop after this many generations without improvement.
    pub stall_generations: usize,
}

impl GaConfig {
    /// Defaults with the initial population drawn from `[low, high]` in
    /// every one of `phi_dim` dimensions.
    pub fn new(phi_dim: usize, low: f64, high: f64, seed: u64) -> Self {
        Self {
            population_size: 60,
            max_generations: 200,
            crossover_fraction: 0.8,
            mutation_stddev: 0.1,
            elite_count: 2,
            tournament_size: 3,
            init_low: vec![low; phi_dim],
            init_high: vec![high; phi_dim],
            seed,
            stall_generations: 50,
        }
    }

    pub fn validate(&self, phi_dim: usize) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::InvalidConfig("population_size must be ≥ 2".into()));
        }
        if self.elite_count == 0 || self.elite_count >= self.population_size {
            return Err(Error::InvalidConfig(
                "elite_count must satisfy 1 ≤ elite_count < population_size".into(),
            ));
        }
        if self.max_generations == 0 {
            return Err(Error::InvalidConfig("max_generations must be ≥ 1".into()));
        }
        if !(self.crossover_fraction > 0.0 && self.crossover_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "crossover_fraction must lie in (0, 1), got {}",
                self.crossover_fraction
            )));
        }
        if !(self.mutation_stddev > 0.0) || !self.mutation_stddev.is_finite() {
            return Err(Error::InvalidConfig("mutation_stddev must be positive".into()));
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return Err(Error::InvalidConfig(
                "tournament_size must satisfy 1 ≤ size ≤ population_size".into(),
            ));
        }
        if self.init_low.len() != phi_dim || self.init_high.len() != phi_dim {
            return Err(Error::DimensionMismatch {
                context: "GA init interval".into(),
                expected: phi_dim.to_string(),
                found: format!("low:{} high:{}", self.init_low.len(), self.init_high.len()),
            });
        }
        for d in 0..phi_dim {
            if !(self.init_low[d] < self.init_high[d]) {
                return Err(Error::InvalidConfig(format!(
                    "init interval dimension {d}: low {} must be < high {}",
                    self.init_low[d], self.init_high[d]
                )));
            }
        }
        if self.stall_generations == 0 {
            return Err(Error::InvalidConfig("stall_generations must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Full configuration of one library-optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LomConfig {
    pub stlsq: StlsqConfig,
    pub weights: LossWeights,
    pub ga: GaConfig,
    pub divergence_bound: f64,
    pub divergence_penalty: f64,
}

impl LomConfig {
    pub fn new(ga: GaConfig, n_datasets: usize, n_state: usize) -> Self {
        Self {
            stlsq: StlsqConfig::default(),
            weights: LossWeights::uniform(n_datasets, n_state),
            ga,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
            divergence_penalty: DIVERGENCE_PENALTY,
        }
    }
}

/// One generation's summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_j_ms: f64,
    pub mean_j_ms: f64,
    pub best_phi: Vec<f64>,
}

/// Outcome of [`optimize`]: per-generation records plus the final model
/// (library, Φ*, Ξ* refit at Φ*) and its loss report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    pub generations: Vec<GenerationRecord>,
    pub model: SindyModel,
    pub report: LossReport,
}

impl OptimTrace {
    pub fn best_phi(&self) -> &[f64] {
        self.model.phi()
    }

    pub fn final_j_ms(&self) -> f64 {
        self.report.j_ms
    }
}

/// Fits Ξ at this Φ on the SR data, then scores the model's recursive
/// predictions on the LL datasets. Pure: identical inputs give
/// bit-identical outputs.
pub fn evaluate_candidate(
    phi: &[f64],
    spec: &LibrarySpec,
    sr: &TimeSeriesDataset,
    ll: &[&TimeSeriesDataset],
    cfg: &LomConfig,
) -> Result<(CoefficientMatrix, LossReport)> {
    let xi = fit(spec, &sr.shifted(), phi, &cfg.stlsq)?;
    let model = SindyModel::new(spec.clone(), phi.to_vec(), xi.clone())?;
    let report = j_ms_with_penalty(
        &model,
        ll,
        &cfg.weights,
        cfg.divergence_bound,
        cfg.divergence_penalty,
    )?;
    Ok((xi, report))
}

/// Index of the tournament winner: draw `size` candidates uniformly,
/// keep the lowest fitness (ties resolved toward the lower index).
fn tournament(rng: &mut ChaCha8Rng, fitness: &[f64], size: usize) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] < fitness[best] || (fitness[c] == fitness[best] && c < best) {
            best = c;
        }
    }
    best
}

fn blend_crossover(rng: &mut ChaCha8Rng, a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            let spread = BLEND_ALPHA * (hi - lo);
            rng.random_range(lo - spread..=hi + spread)
        })
        .collect()
}

/// Ranks candidate indices by fitness ascending, then by index so ties
/// are deterministic.
fn ranked(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| {
        fitness[a]
            .partial_cmp(&fitness[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Seeded GA minimizing j_ms(Φ). Candidate fitness within a generation
/// is evaluated in parallel; the evolutionary operators consume the RNG
/// sequentially, so results do not depend on thread count.
pub fn optimize(
    spec: &LibrarySpec,
    sr: &TimeSeriesDataset,
    ll: &[&TimeSeriesDataset],
    cfg: &LomConfig,
) -> Result<OptimTrace> {
    let phi_dim = spec.phi_dim();
    cfg.ga.validate(phi_dim)?;
    cfg.stlsq.validate()?;
    cfg.weights.validate()?;
    if !(cfg.divergence_bound > 0.0) {
        return Err(Error::InvalidConfig("divergence_bound must be positive".into()));
    }
    if !(cfg.divergence_penalty > 0.0) {
        return Err(Error::InvalidConfig("divergence_penalty must be positive".into()));
    }

    let ga = &cfg.ga;
    let mut rng = ChaCha8Rng::seed_from_u64(ga.seed);
    let mutation_dists: Vec<Normal<f64>> = (0..phi_dim)
        .map(|d| {
            let width = ga.init_high[d] - ga.init_low[d];
            Normal::new(0.0, ga.mutation_stddev * width)
                .map_err(|e| Error::InvalidConfig(format!("mutation stddev: {e}")))
        })
        .collect::<Result<_>>()?;

    let mut population: Vec<Vec<f64>> = (0..ga.population_size)
        .map(|_| {
            (0..phi_dim)
                .map(|d| rng.random_range(ga.init_low[d]..=ga.init_high[d]))
                .collect()
        })
        .collect();

    let evaluate_all = |pop: &[Vec<f64>]| -> Result<Vec<f64>> {
        pop.par_iter()
            .map(|phi| evaluate_candidate(phi, spec, sr, ll, cfg).map(|(_, r)| r.j_ms))
            .collect()
    };

    let mut generations = Vec::new();
    let mut fitness = evaluate_all(&population)?;
    let mut order = ranked(&fitness);
    let mut best_so_far = fitness[order[0]];
    generations.push(GenerationRecord {
        generation: 0,
        best_j_ms: best_so_far,
        mean_j_ms: fitness.iter().sum::<f64>() / fitness.len() as f64,
        best_phi: population[order[0]].clone(),
    });

    let n_offspring = ga.population_size - ga.elite_count;
    let n_cross = ((ga.crossover_fraction * n_offspring as f64).round() as usize).min(n_offspring);
    let mut stalled = 0usize;

    for generation in 1..=ga.max_generations {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(ga.population_size);
        for &i in order.iter().take(ga.elite_count) {
            next.push(population[i].clone());
        }
        for _ in 0..n_cross {
            let a = tournament(&mut rng, &fitness, ga.tournament_size);
            let b = tournament(&mut rng, &fitness, ga.tournament_size);
            next.push(blend_crossover(&mut rng, &population[a], &population[b]));
        }
        for _ in 0..(n_offspring - n_cross) {
            let p = tournament(&mut rng, &fitness, ga.tournament_size);
            let child: Vec<f64> = population[p]
                .iter()
                .enumerate()
                .map(|(d, &v)| v + mutation_dists[d].sample(&mut rng))
                .collect();
            next.push(child);
        }
        population = next;
        fitness = evaluate_all(&population)?;
        order = ranked(&fitness);
        let best = fitness[order[0]];
        generations.push(GenerationRecord {
            generation,
            best_j_ms: best,
            mean_j_ms: fitness.iter().sum::<f64>() / fitness.len() as f64,
            best_phi: population[order[0]].clone(),
        });
        if best < best_so_far {
            best_so_far = best;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= ga.stall_generations {
                break;
            }
        }
    }

    // The final model always re-fits Ξ at Φ* instead of trusting any
    // cached candidate state.
    let best_phi = generations
        .last()
        .expect("at least the initial generation exists")
        .best_phi
        .clone();
    let (xi, report) = evaluate_candidate(&best_phi, spec, sr, ll, cfg)?;
    let model = SindyModel::new(spec.clone(), best_phi, xi)?;
    Ok(OptimTrace {
        generations,
        model,
        report,
    })
}

/// How a strategy obtains its library parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StrategyMode {
    /// Library used as-is with the given Φ (empty for RBF-free libraries).
    FixedPhi(Vec<f64>),
    /// Φ optimized by [`optimize`].
    OptimizePhi,
}

/// One modeling strategy: a library plus how Φ is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub label: String,
    pub spec: LibrarySpec,
    pub mode: StrategyMode,
}

impl StrategySpec {
    /// Fixed library with no tunable parameters (polynomial-only path).
    pub fn fixed(label: impl Into<String>, spec: LibrarySpec) -> Self {
        Self {
            label: label.into(),
            spec,
            mode: StrategyMode::FixedPhi(vec![]),
        }
    }

    /// RBF library evaluated at one random Φ drawn uniformly from
    /// `[low, high]^phi_dim`.
    pub fn random_phi(label: impl Into<String>, spec: LibrarySpec, low: f64, high: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = (0..spec.phi_dim())
            .map(|_| rng.random_range(low..=high))
            .collect();
        Self {
            label: label.into(),
            spec,
            mode: StrategyMode::FixedPhi(phi),
        }
    }

    /// RBF library with Φ optimized on the LL data.
    pub fn optimized(label: impl Into<String>, spec: LibrarySpec) -> Self {
        Self {
            label: label.into(),
            spec,
            mode: StrategyMode::OptimizePhi,
        }
    }
}

/// Per-dataset, per-component prediction errors of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetComparison {
    pub dataset: String,
    /// ‖Ê_j‖₂ of the recursive prediction per state component; `None`
    /// when the rollout diverged.
    pub rlt_errors: Vec<Option<f64>>,
    /// ‖Ě_j‖₂ of the one-step prediction per state component; `None`
    /// when a one-step evaluation produced a non-finite value.
    pub one_step_errors: Vec<Option<f64>>,
    pub diverged: bool,
    pub diverged_at: Option<usize>,
}

/// One strategy's fitted model and its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub label: String,
    pub model: SindyModel,
    pub report: LossReport,
    pub per_dataset: Vec<DatasetComparison>,
    /// Convergence trace when the strategy optimized Φ.
    pub trace: Option<Vec<GenerationRecord>>,
}

/// Side-by-side evaluation of several strategies on identical data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub strategies: Vec<StrategyOutcome>,
}

/// Recursive- and one-step-prediction error norms of `model` on `ds`.
pub fn dataset_comparison(
    model: &SindyModel,
    ds: &TimeSeriesDataset,
    bound: f64,
) -> Result<DatasetComparison> {
    let n = model.n_state();
    let sm = ds.shifted();
    let rollout = model.predict_rlt(ds, bound)?;
    let rlt_errors: Vec<Option<f64>> = if rollout.diverged {
        vec![None; n]
    } else {
        (0..n)
            .map(|j| {
                let mut sq = 0.0;
                for k in 0..sm.n_samples() {
                    let e = rollout.trajectory[(j, k)] - sm.x[(j, k)];
                    sq += e * e;
                }
                Some(sq.sqrt())
            })
            .collect()
    };
    let one_step = model.predict_one_step(ds)?;
    let one_step_errors: Vec<Option<f64>> = if one_step.any_diverged() {
        vec![None; n]
    } else {
        (0..n)
            .map(|j| {
                let mut sq = 0.0;
                for k in 0..sm.n_samples() {
                    let e = one_step.predictions[(j, k)] - sm.x_plus[(j, k)];
                    sq += e * e;
                }
                Some(sq.sqrt())
            })
            .collect()
    };
    Ok(DatasetComparison {
        dataset: ds.name().to_string(),
        rlt_errors,
        one_step_errors,
        diverged: rollout.diverged,
        diverged_at: rollout.diverged_at,
    })
}

/// Runs every strategy on the same SR/LL data and tabulates per-dataset
/// error norms (recursive and one-step) plus each fitted model.
pub fn run_strategy_comparison(
    strategies: &[StrategySpec],
    sr: &TimeSeriesDataset,
    ll: &[&TimeSeriesDataset],
    cfg: &LomConfig,
) -> Result<ComparisonReport> {
    if strategies.is_empty() {
        return Err(Error::InvalidConfig("no strategies supplied".into()));
    }
    let mut outcomes = Vec::with_capacity(strategies.len());
    for s in strategies {
        let (model, report, trace) = match &s.mode {
            StrategyMode::FixedPhi(phi) => {
                let (xi, report) = evaluate_candidate(phi, &s.spec, sr, ll, cfg)?;
                let model = SindyModel::new(s.spec.clone(), phi.clone(), xi)?;
                (model, report, None)
            }
            StrategyMode::OptimizePhi => {
                let trace = optimize(&s.spec, sr, ll, cfg)?;
                (trace.model.clone(), trace.report.clone(), Some(trace.generations))
            }
        };
        let per_dataset = ll
            .iter()
            .map(|ds| dataset_comparison(&model, ds, cfg.divergence_bound))
            .collect::<Result<Vec<_>>>()?;
        outcomes.push(StrategyOutcome {
            label: s.label.clone(),
            model,
            report,
            per_dataset,
            trace,
        });
    }
    Ok(ComparisonReport {
        strategies: outcomes,
    })
}
