//! Plot-ready CSV artifacts and plain-text reports.
//!
//! All floats are written with 17 significant digits so downstream tools
//! read back the exact bit patterns; none of the artifacts embed
//! timestamps, so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use sindy_lom::liboptim::{ComparisonReport, GenerationRecord};
use sindy_lom::loss::LossReport;
use sindy_lom::numfmt::f64_to_csv;
use sindy_lom::rollout::SindyModel;
use sindy_lom::{Error, Result};

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// `generation,best_j_ms,mean_j_ms` per GA generation.
pub fn write_convergence_csv(path: &Path, generations: &[GenerationRecord]) -> Result<()> {
    let mut out = String::from("generation,best_j_ms,mean_j_ms\n");
    for g in generations {
        let _ = writeln!(
            out,
            "{},{},{}",
            g.generation,
            f64_to_csv(g.best_j_ms),
            f64_to_csv(g.mean_j_ms)
        );
    }
    write_text(path, &out)
}

/// One row per time step: index, true states, predicted states, and a
/// divergence flag. Rows past a recursive divergence are absent.
pub struct PredictionRows {
    pub n_state: usize,
    /// (step index, true state, predicted state, diverged flag).
    pub rows: Vec<(usize, Vec<f64>, Vec<f64>, bool)>,
}

pub fn write_predictions_csv(path: &Path, rows: &PredictionRows) -> Result<()> {
    let mut header = String::from("k");
    for j in 1..=rows.n_state {
        let _ = write!(header, ",x{j}_true");
    }
    for j in 1..=rows.n_state {
        let _ = write!(header, ",x{j}_pred");
    }
    header.push_str(",diverged\n");
    let mut out = header;
    for (k, truth, pred, diverged) in &rows.rows {
        let _ = write!(out, "{k}");
        for v in truth {
            let _ = write!(out, ",{}", f64_to_csv(*v));
        }
        for v in pred {
            let _ = write!(out, ",{}", f64_to_csv(*v));
        }
        let _ = writeln!(out, ",{}", u8::from(*diverged));
    }
    write_text(path, &out)
}

fn error_cell(v: &Option<f64>) -> String {
    match v {
        Some(v) => f64_to_csv(*v),
        None => "diverged".to_string(),
    }
}

/// Per-strategy, per-dataset, per-component 2-norm prediction errors.
pub fn write_comparison_csv(path: &Path, report: &ComparisonReport) -> Result<()> {
    let mut out = String::from("strategy,dataset,component,rlt_error,one_step_error\n");
    for s in &report.strategies {
        for d in &s.per_dataset {
            for (j, (rlt, os)) in d.rlt_errors.iter().zip(&d.one_step_errors).enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},x{},{},{}",
                    s.label,
                    d.dataset,
                    j + 1,
                    error_cell(rlt),
                    error_cell(os)
                );
            }
        }
    }
    write_text(path, &out)
}

/// Nonzero coefficient patterns of every strategy's model.
pub fn write_xi_patterns_csv(path: &Path, report: &ComparisonReport) -> Result<()> {
    let mut out = String::from("strategy,term_index,term,component,coefficient\n");
    for s in &report.strategies {
        let xi = s.model.xi().xi();
        let descriptors = s.model.spec().descriptors();
        for col in 0..xi.ncols() {
            for row in 0..xi.nrows() {
                let v = xi[(row, col)];
                if v != 0.0 {
                    let _ = writeln!(
                        out,
                        "{},{},{},x{},{}",
                        s.label,
                        row,
                        descriptors[row].label(),
                        col + 1,
                        f64_to_csv(v)
                    );
                }
            }
        }
    }
    write_text(path, &out)
}

/// Structured text rendering of a loss report.
pub fn render_loss_report(report: &LossReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "j_ms: {}", f64_to_csv(report.j_ms));
    let _ = writeln!(out, "l0_count: {}", report.l0_count);
    let _ = writeln!(out, "penalty: {}", f64_to_csv(report.penalty));
    let _ = writeln!(out, "per_dataset:");
    for t in &report.per_dataset {
        match &t.term {
            Some(v) => {
                let _ = writeln!(out, "  {}: term={} diverged=false", t.name, f64_to_csv(*v));
            }
            None => {
                let _ = writeln!(out, "  {}: diverged=true", t.name);
            }
        }
    }
    out
}

pub fn write_loss_report(path: &Path, report: &LossReport) -> Result<()> {
    write_text(path, &render_loss_report(report))
}

/// Human-readable model summary (also used by `model-info`).
pub fn render_model_summary(model: &SindyModel) -> String {
    let spec = model.spec();
    let xi = model.xi().xi();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "states: {}  inputs: {}  basis functions: {}  phi dimension: {}",
        spec.n_state(),
        spec.m_input(),
        spec.p(),
        spec.phi_dim()
    );
    let _ = writeln!(out, "nonzero coefficients: {}", model.xi().l0_norm());
    for col in 0..xi.ncols() {
        let _ = writeln!(out, "x{}(k+1) =", col + 1);
        let mut any = false;
        for row in 0..xi.nrows() {
            let v = xi[(row, col)];
            if v != 0.0 {
                any = true;
                let _ = writeln!(
                    out,
                    "  {:+.6e} * {}",
                    v,
                    spec.descriptors()[row].label()
                );
            }
        }
        if !any {
            let _ = writeln!(out, "  0");
        }
    }
    if !model.phi().is_empty() {
        let _ = writeln!(out, "phi:");
        for (i, v) in model.phi().iter().enumerate() {
            let _ = writeln!(out, "  [{i}] {}", f64_to_csv(*v));
        }
    }
    out
}

/// Table of per-component errors, `diverged` where a rollout blew up.
pub fn render_comparison_table(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<20} {:<10} {:<24} {:<24}",
        "strategy", "dataset", "component", "rlt_error", "one_step_error"
    );
    for s in &report.strategies {
        for d in &s.per_dataset {
            for (j, (rlt, os)) in d.rlt_errors.iter().zip(&d.one_step_errors).enumerate() {
                let _ = writeln!(
                    out,
                    "{:<16} {:<20} x{:<9} {:<24} {:<24}",
                    s.label,
                    d.dataset,
                    j + 1,
                    match rlt {
                        Some(v) => format!("{v:.6e}"),
                        None => "diverged".to_string(),
                    },
                    match os {
                        Some(v) => format!("{v:.6e}"),
                        None => "diverged".to_string(),
                    }
                );
            }
        }
    }
    out
}
