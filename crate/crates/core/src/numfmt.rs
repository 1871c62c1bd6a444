//! Decimal formatting used by every on-disk artifact.
//!
//! 17 significant digits are enough to reproduce any f64 bit pattern on
//! parse, so CSV and model files round-trip exactly.

/// Formats `v` with 17 significant digits in scientific notation.
pub fn f64_to_csv(v: f64) -> String {
    format!("{v:.16e}")
}
