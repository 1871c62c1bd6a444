//! System-level acceptance gate. Seven criteria, one test each; every
//! test prints a single `AC-n PASS`/`AC-n FAIL` line (visible with
//! `--nocapture`, and on failure). Tolerances and budgets are pinned as
//! constants next to the checks that use them.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sindy_lom::dataset::TimeSeriesDataset;
use sindy_lom::liboptim::{
    dataset_comparison, evaluate_candidate, optimize, run_strategy_comparison, StrategyMode,
    StrategySpec,
};
use sindy_lom::library::LibrarySpec;
use sindy_lom::loss::{j_ms, j_os, LossWeights, DIVERGENCE_PENALTY};
use sindy_lom::model_io::{load_model, model_to_bytes, save_model_full, Provenance};
use sindy_lom::rollout::{SindyModel, DEFAULT_DIVERGENCE_BOUND};
use sindy_lom::stlsq::{fit, stlsq_solve_traced, CoefficientMatrix, StlsqConfig};
use sindy_lom::synth::plant_by_name;
use sindy_lom::{GaConfig, LomConfig};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_sindy-lom");

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Runs one criterion, enforces its runtime budget, prints the verdict.
fn criterion(name: &str, budget: Duration, body: impl FnOnce() -> Result<(), String>) {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let outcome = outcome.and_then(|()| {
        if elapsed <= budget {
            Ok(())
        } else {
            Err(format!("runtime {elapsed:.2?} exceeds budget {budget:?}"))
        }
    });
    match outcome {
        Ok(()) => println!("{name} PASS ({elapsed:.2?})"),
        Err(msg) => {
            println!("{name} FAIL: {msg}");
            panic!("{name}: {msg}");
        }
    }
}

fn simulate_default(plant_name: &str, samples: usize, seed: u64) -> TimeSeriesDataset {
    let plant = plant_by_name(plant_name).unwrap();
    plant
        .simulate(plant.default_excitation(), plant.default_x0(), samples, seed)
        .unwrap()
}

// ---------------------------------------------------------------------
// AC-1: exact recovery of noise-free plants with linear and quadratic
// dynamics (N = 2000, λ = 8.0e-5).

#[test]
fn ac1_exact_recovery() {
    const N: usize = 2000;
    const REL_TOL: f64 = 1e-8;
    criterion("AC-1", Duration::from_secs(5), || {
        for plant_name in ["linear2", "quadratic2"] {
            let plant = plant_by_name(plant_name).unwrap();
            let truth = plant.true_model();
            let ds = simulate_default(plant_name, N, 1);
            let cfg = StlsqConfig::default();
            check!(cfg.lambda == 8.0e-5, "default lambda changed");
            let fitted = fit(truth.spec(), &ds.shifted(), truth.phi(), &cfg)
                .map_err(|e| e.to_string())?;
            for j in 0..truth.n_state() {
                let want = truth.xi().support(j);
                let got = fitted.support(j);
                check!(
                    got == want,
                    "{plant_name} x{}: support {got:?}, expected {want:?}",
                    j + 1
                );
                for &i in &want {
                    let t = truth.xi().xi()[(i, j)];
                    let f = fitted.xi()[(i, j)];
                    check!(
                        (f - t).abs() <= REL_TOL * t.abs(),
                        "{plant_name} xi[{i},{j}] = {f}, expected {t} (rel tol {REL_TOL})"
                    );
                }
            }
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------
// AC-2: structural invariants of the thresholded least-squares loop on
// 200 random regression instances (N ≤ 500, p ≤ 40).

#[test]
fn ac2_stlsq_structural_properties() {
    const INSTANCES: usize = 200;
    const ORTHO_TOL: f64 = 1e-8;
    criterion("AC-2", Duration::from_secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut early_stops = 0usize;
        for inst in 0..INSTANCES {
            let n = rng.random_range(40..=220);
            let p = rng.random_range(5..=25);
            let theta = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..=1.0));
            // Half planted sparse targets, half arbitrary ones.
            let target = if inst % 2 == 0 {
                let k = rng.random_range(1..=p / 2 + 1);
                let mut xi = DVector::zeros(p);
                for _ in 0..k {
                    let i = rng.random_range(0..p);
                    xi[i] = rng.random_range(0.5..=1.5) * if rng.random_bool(0.5) { -1.0 } else { 1.0 };
                }
                &theta * xi
                    + DVector::from_fn(n, |_, _| rng.random_range(-1e-3..=1e-3))
            } else {
                DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))
            };
            let cfg = StlsqConfig {
                lambda: rng.random_range(1e-4..=0.3),
                k_max: if inst % 3 == 0 { 40 } else { 10 },
                ..StlsqConfig::default()
            };
            let (xi, trace) =
                stlsq_solve_traced(&theta, &target, &cfg).map_err(|e| e.to_string())?;

            // Support never grows between thresholding steps.
            for w in trace.windows(2) {
                let prev: BTreeSet<_> = w[0].iter().collect();
                check!(
                    w[1].iter().all(|i| prev.contains(i)) && w[1].len() <= w[0].len(),
                    "instance {inst}: support grew: {:?} -> {:?}",
                    w[0],
                    w[1]
                );
            }
            // Support-shrinking iterations are bounded by min(K_max, p).
            let shrinks = trace.windows(2).filter(|w| w[1] != w[0]).count();
            check!(
                shrinks <= cfg.k_max.min(p),
                "instance {inst}: {shrinks} shrinking iterations, cap {}",
                cfg.k_max.min(p)
            );

            let support: Vec<usize> = (0..p).filter(|&i| xi[i] != 0.0).collect();
            let early_stop = trace.len() >= 2 && trace[trace.len() - 1] == trace[trace.len() - 2]
                || support.is_empty();
            if early_stop {
                early_stops += 1;
                // Fixed point: every surviving coefficient clears λ.
                check!(
                    support.iter().all(|&i| xi[i].abs() >= cfg.lambda),
                    "instance {inst}: sub-threshold coefficient survived"
                );
            }
            // On-support optimality: residual orthogonal to active columns.
            let residual = &target - &theta * &xi;
            for &i in &support {
                let col = theta.column(i);
                let inner = col.dot(&residual);
                let scale = col.norm() * target.norm();
                check!(
                    inner.abs() <= ORTHO_TOL * scale + 1e-12,
                    "instance {inst}: residual correlates with active column {i}: {inner:e}"
                );
            }
        }
        // The early-stop branch must carry the fixed-point check.
        check!(
            early_stops * 10 >= INSTANCES * 8,
            "only {early_stops}/{INSTANCES} instances terminated early"
        );
        Ok(())
    });
}

// ---------------------------------------------------------------------
// AC-3: library optimization beats the polynomial-only fit on the RBF
// plant, and the recovered center matches a dense grid-scan oracle.

/// RBF-plant data: one fitting trajectory and two held-out loss
/// trajectories started elsewhere so they probe the bump differently.
fn rbf_plant_data() -> (TimeSeriesDataset, TimeSeriesDataset, TimeSeriesDataset) {
    let plant = plant_by_name("rbf1").unwrap();
    let sim = |x0: f64, seed: u64| {
        plant
            .simulate(
                plant.default_excitation(),
                &DVector::from_vec(vec![x0]),
                600,
                seed,
            )
            .unwrap()
    };
    (sim(-1.0, 1), sim(3.0, 2), sim(-0.5, 3))
}

#[test]
fn ac3_library_optimization_benefit() {
    const TRUE_CENTER: f64 = 1.0;
    const CENTER_TOL: f64 = 0.2;
    const IMPROVEMENT: f64 = 0.5; // optimized j_ms ≤ 0.5× polynomial j_ms
    const GRID_STEP: f64 = 0.1;
    const GRID_SLACK: f64 = 1.05; // GA must land within 5% of the grid optimum
    criterion("AC-3", Duration::from_secs(300), || {
        let (sr, ll1, ll2) = rbf_plant_data();
        let ll = [&ll1, &ll2];
        let poly = LibrarySpec::polynomial(1, 0, 2).unwrap();
        let rbf_spec = poly.clone().with_rbfs(1);

        let mut cfg = LomConfig::new(GaConfig::new(rbf_spec.phi_dim(), -4.0, 4.0, 42), ll.len(), 1);
        cfg.ga.population_size = 40;
        cfg.ga.max_generations = 100;
        cfg.ga.stall_generations = 100; // run the full budget

        let (_, poly_report) =
            evaluate_candidate(&[], &poly, &sr, &ll, &cfg).map_err(|e| e.to_string())?;

        let trace = optimize(&rbf_spec, &sr, &ll, &cfg).map_err(|e| e.to_string())?;
        check!(
            trace
                .generations
                .windows(2)
                .all(|w| w[1].best_j_ms <= w[0].best_j_ms),
            "best-so-far j_ms increased between generations"
        );
        check!(
            trace.final_j_ms() <= IMPROVEMENT * poly_report.j_ms,
            "optimized j_ms {} not ≤ {IMPROVEMENT}× polynomial j_ms {}",
            trace.final_j_ms(),
            poly_report.j_ms
        );

        // Dense grid scan over (center, scale) as an independent oracle
        // for the landscape optimum.
        let mut grid_best = (f64::INFINITY, 0.0f64);
        let mut mu = -3.0;
        while mu <= 3.0 + 1e-9 {
            let mut sigma = GRID_STEP;
            while sigma <= 3.0 + 1e-9 {
                let (_, rep) = evaluate_candidate(&[mu, sigma], &rbf_spec, &sr, &ll, &cfg)
                    .map_err(|e| e.to_string())?;
                if rep.j_ms < grid_best.0 {
                    grid_best = (rep.j_ms, mu);
                }
                sigma += GRID_STEP;
            }
            mu += GRID_STEP;
        }
        check!(
            (grid_best.1 - TRUE_CENTER).abs() <= GRID_STEP + 1e-9,
            "grid oracle places the optimum at center {}, expected {TRUE_CENTER}",
            grid_best.1
        );
        let center = trace.best_phi()[0];
        check!(
            (center - TRUE_CENTER).abs() <= CENTER_TOL,
            "recovered center {center} not within {CENTER_TOL} of {TRUE_CENTER}"
        );
        check!(
            trace.final_j_ms() <= GRID_SLACK * grid_best.0,
            "GA j_ms {} worse than grid oracle {} beyond slack",
            trace.final_j_ms(),
            grid_best.0
        );
        Ok(())
    });
}

// ---------------------------------------------------------------------
// AC-4: a model can look excellent one step ahead and still be an
// order of magnitude worse when rolled out recursively.

#[test]
fn ac4_one_step_vs_recursive_gap() {
    const OS_CEILING: f64 = 0.01; // one-step RMS below 1% of signal RMS
    const GAP: f64 = 10.0; // recursive error at least 10× the one-step error
    criterion("AC-4", Duration::from_secs(60), || {
        let sr = simulate_default("margin1", 2000, 5);
        let ll = simulate_default("margin1", 2000, 6);
        let poly = LibrarySpec::polynomial(1, 1, 2).unwrap();
        let cfg = LomConfig::new(GaConfig::new(0, 0.0, 1.0, 0), 2, 1);

        let xi = fit(&poly, &sr.shifted(), &[], &cfg.stlsq).map_err(|e| e.to_string())?;
        let model = SindyModel::new(poly.clone(), vec![], xi).map_err(|e| e.to_string())?;

        // One-step figure: per-sample RMS relative to signal RMS.
        let os = j_os(&model, &sr).map_err(|e| e.to_string())?;
        let signal = sr.shifted().x_plus.row(0).norm();
        let os_figure = os / signal;
        check!(
            os_figure < OS_CEILING,
            "one-step error {os_figure:.3e} of signal RMS, need < {OS_CEILING}"
        );

        // Same-normalization recursive figure from the loss machinery.
        let n_samples = sr.shifted().n_samples() as f64;
        let weights = LossWeights {
            q: vec![1.0],
            r: vec![1.0],
            kappa: 0.0,
        };
        let report =
            j_ms(&model, &[&sr], &weights, DEFAULT_DIVERGENCE_BOUND).map_err(|e| e.to_string())?;
        let rlt_figure = report.per_dataset[0]
            .term
            .ok_or("rollout diverged unexpectedly")?
            * n_samples.sqrt();
        check!(
            rlt_figure > GAP * os_figure,
            "recursive error {rlt_figure:.3e} not > {GAP}× one-step error {os_figure:.3e}"
        );

        // The comparison report must exhibit the same gap.
        let strategies = [StrategySpec::fixed("poly", poly)];
        let comparison = run_strategy_comparison(&strategies, &sr, &[&sr, &ll], &cfg)
            .map_err(|e| e.to_string())?;
        for per in &comparison.strategies[0].per_dataset {
            let rlt = per.rlt_errors[0].ok_or("diverged in comparison")?;
            let one = per.one_step_errors[0].ok_or("one-step diverged")?;
            check!(
                rlt > GAP * one,
                "{}: recursive norm {rlt:.3e} not > {GAP}× one-step norm {one:.3e}",
                per.dataset
            );
        }

        // And the installed command reports it the same way.
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path();
        run_bin(dir, &["simulate", "--plant", "margin1", "--samples", "2000", "--seed", "5"])?;
        let csv = dir.join("margin1_s5.csv");
        run_bin(
            dir,
            &[
                "compare",
                "--sr",
                csv.to_str().unwrap(),
                "--n-state",
                "1",
                "--m-input",
                "1",
                "--strategies",
                "poly",
            ],
        )?;
        let table = std::fs::read_to_string(dir.join("comparison.csv")).unwrap();
        let row = table
            .lines()
            .nth(1)
            .ok_or("comparison.csv has no data row")?;
        let cells: Vec<&str> = row.split(',').collect();
        let rlt: f64 = cells[3].parse().map_err(|_| format!("bad cell {}", cells[3]))?;
        let one: f64 = cells[4].parse().map_err(|_| format!("bad cell {}", cells[4]))?;
        check!(
            rlt > GAP * one,
            "compare command: recursive norm {rlt:.3e} not > {GAP}× one-step norm {one:.3e}"
        );
        Ok(())
    });
}

fn run_bin(out_dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN)
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "binary failed ({:?}): {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

// ---------------------------------------------------------------------
// AC-5: closed-form loss values.

#[test]
fn ac5_loss_closed_forms() {
    const TOL: f64 = 1e-12;
    criterion("AC-5", Duration::from_secs(60), || {
        // Identity model holds x̂(k) = 1; truth row (1, 1+a, 1−a, 1/2)
        // with a = √(3/8) gives ‖X‖ = 2, ‖Ê‖ = 1, j_ms = (1/√4)(1/2).
        let a = (3.0f64 / 8.0).sqrt();
        let states = DMatrix::from_row_slice(1, 5, &[1.0, 1.0 + a, 1.0 - a, 0.5, 0.3]);
        let ds = TimeSeriesDataset::from_matrices("micro", states, DMatrix::zeros(0, 5))
            .map_err(|e| e.to_string())?;
        let line = LibrarySpec::polynomial(1, 0, 1).unwrap();
        let identity = SindyModel::new(
            line.clone(),
            vec![],
            CoefficientMatrix::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])),
        )
        .map_err(|e| e.to_string())?;
        let weights = LossWeights {
            q: vec![1.0],
            r: vec![1.0],
            kappa: 0.0,
        };
        let report = j_ms(&identity, &[&ds], &weights, DEFAULT_DIVERGENCE_BOUND)
            .map_err(|e| e.to_string())?;
        check!(
            (report.j_ms - 0.25).abs() <= TOL,
            "worked micro-case: j_ms = {}, expected 0.25 ± {TOL}",
            report.j_ms
        );

        // The true model of every noise-free plant scores exactly κ‖Ξ‖₀.
        for plant_name in ["linear2", "quadratic2", "rbf1", "margin1"] {
            let plant = plant_by_name(plant_name).unwrap();
            let truth = plant.true_model();
            let ds = simulate_default(plant_name, 300, 9);
            let weights = LossWeights::uniform(1, truth.n_state());
            let report = j_ms(truth, &[&ds], &weights, DEFAULT_DIVERGENCE_BOUND)
                .map_err(|e| e.to_string())?;
            let expected = weights.kappa * truth.xi().l0_norm() as f64;
            check!(
                report.j_ms == expected,
                "{plant_name}: true-model j_ms = {:e}, expected exactly {expected:e}",
                report.j_ms
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------
// AC-6: determinism across reruns and thread counts; persistence
// round-trips bit-exactly.

#[test]
fn ac6_determinism_and_persistence() {
    const ROUND_TRIP_INPUTS: usize = 1000;
    criterion("AC-6", Duration::from_secs(120), || {
        let (sr, ll1, ll2) = rbf_plant_data();
        let ll = [&ll1, &ll2];
        let spec = LibrarySpec::polynomial(1, 0, 2).unwrap().with_rbfs(1);
        let mut cfg = LomConfig::new(GaConfig::new(spec.phi_dim(), -4.0, 4.0, 42), ll.len(), 1);
        cfg.ga.population_size = 16;
        cfg.ga.max_generations = 12;
        cfg.ga.stall_generations = 12;

        // Two runs per thread count; every artifact must agree bytewise.
        let mut blobs: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
        let mut final_model = None;
        for &threads in &[1usize, 4, 1, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| e.to_string())?;
            let trace = pool
                .install(|| optimize(&spec, &sr, &ll, &cfg))
                .map_err(|e| e.to_string())?;
            let trace_bytes = serde_json::to_vec(&trace).map_err(|e| e.to_string())?;
            let model_bytes =
                model_to_bytes(&trace.model, &Provenance::default()).map_err(|e| e.to_string())?;
            blobs.push((trace_bytes, model_bytes));
            final_model = Some(trace.model);
        }
        check!(
            blobs.iter().all(|b| *b == blobs[0]),
            "optimization artifacts differ across runs/thread counts"
        );

        // Round-trip through a file, then drive both models with the
        // same random inputs.
        let model = final_model.unwrap();
        let tmp = TempDir::new().unwrap();
        let path_a = tmp.path().join("model_a.json");
        let path_b = tmp.path().join("model_b.json");
        save_model_full(&model, &Provenance::default(), &path_a).map_err(|e| e.to_string())?;
        save_model_full(&model, &Provenance::default(), &path_b).map_err(|e| e.to_string())?;
        check!(
            std::fs::read(&path_a).unwrap() == std::fs::read(&path_b).unwrap(),
            "two saves of the same model differ"
        );
        let loaded = load_model(&path_a).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let w = DVector::zeros(0);
        for _ in 0..ROUND_TRIP_INPUTS {
            let x = DVector::from_fn(1, |_, _| rng.random_range(-3.0..=3.0));
            let before = model.step(&x, &w).map_err(|e| e.to_string())?;
            let after = loaded.step(&x, &w).map_err(|e| e.to_string())?;
            check!(
                before[0].to_bits() == after[0].to_bits(),
                "round-tripped model drifts at x = {}: {} vs {}",
                x[0],
                before[0],
                after[0]
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------
// AC-7: random-Φ fits complete or diverge deterministically; divergence
// pins j_ms to the penalty constant.

#[test]
fn ac7_divergence_handling() {
    const SEEDS: u64 = 30;
    criterion("AC-7", Duration::from_secs(120), || {
        let (sr, ll1, ll2) = rbf_plant_data();
        let ll = [&ll1, &ll2];
        let spec = LibrarySpec::polynomial(1, 0, 2).unwrap().with_rbfs(1);
        let cfg = LomConfig::new(GaConfig::new(spec.phi_dim(), -4.0, 4.0, 0), ll.len(), 1);

        let mut diverged_seeds = 0usize;
        let mut completed_seeds = 0usize;
        for seed in 0..SEEDS {
            let strategy = StrategySpec::random_phi("random", spec.clone(), -4.0, 4.0, seed);
            let StrategyMode::FixedPhi(phi) = &strategy.mode else {
                unreachable!()
            };
            let evaluate = || -> Result<_, String> {
                let (xi, report) =
                    evaluate_candidate(phi, &spec, &sr, &ll, &cfg).map_err(|e| e.to_string())?;
                let model = SindyModel::new(spec.clone(), phi.clone(), xi)
                    .map_err(|e| e.to_string())?;
                let steps: Vec<Option<usize>> = ll
                    .iter()
                    .map(|ds| {
                        dataset_comparison(&model, ds, cfg.divergence_bound)
                            .map(|c| c.diverged_at)
                            .map_err(|e| e.to_string())
                    })
                    .collect::<Result<_, _>>()?;
                Ok((report, steps))
            };
            let (report_a, steps_a) = evaluate()?;
            let (report_b, steps_b) = evaluate()?;
            check!(
                report_a.j_ms.to_bits() == report_b.j_ms.to_bits() && steps_a == steps_b,
                "seed {seed}: repeated evaluation disagrees ({} vs {}, {steps_a:?} vs {steps_b:?})",
                report_a.j_ms,
                report_b.j_ms
            );
            if report_a.any_diverged() {
                diverged_seeds += 1;
                check!(
                    report_a.j_ms == DIVERGENCE_PENALTY,
                    "seed {seed}: diverged but j_ms = {:e}, expected the {DIVERGENCE_PENALTY:e} penalty",
                    report_a.j_ms
                );
                check!(
                    steps_a.iter().any(|s| s.is_some()),
                    "seed {seed}: divergence flagged without a step index"
                );
                for (term, step) in report_a.per_dataset.iter().zip(&steps_a) {
                    check!(
                        term.diverged == step.is_some() && term.term.is_some() != term.diverged,
                        "seed {seed}: inconsistent per-dataset divergence bookkeeping"
                    );
                }
            } else {
                completed_seeds += 1;
                check!(
                    report_a.j_ms < DIVERGENCE_PENALTY,
                    "seed {seed}: completed run scored the divergence penalty"
                );
            }
        }
        check!(
            diverged_seeds > 0 && completed_seeds > 0,
            "need both outcomes, got {diverged_seeds} diverged / {completed_seeds} completed"
        );
        Ok(())
    });
}
