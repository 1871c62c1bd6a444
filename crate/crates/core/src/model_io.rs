//! Model persistence: a versioned, diff-stable JSON document.
//!
//! Layout: top-level keys `version`, `library`, `phi`, `xi`, `provenance`.
//! Ξ is stored as (row, col, value) triplets with zeros suppressed. Every
//! float is written as a decimal with 17 significant digits, which f64
//! round-trips bit-exactly; field order is fixed by the struct layout and
//! nothing in the file depends on wall-clock time, so identical models
//! produce identical bytes.

use std::fs;
use std::io;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use crate::error::{Error, Result};
use crate::library::{BasisDescriptor, LibrarySpec};
use crate::liboptim::LomConfig;
use crate::loss::LossReport;
use crate::rollout::SindyModel;
use crate::stlsq::CoefficientMatrix;

/// Current on-disk format version.
pub const FORMAT_VERSION: u32 = 1;

/// Reproducibility context stored alongside the model. Deliberately free
/// of timestamps: rerunning a pipeline with the same seed must produce a
/// byte-identical file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sr_dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ll_datasets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<LomConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossReport>,
}

#[derive(Serialize, Deserialize)]
struct LibrarySection {
    n_state: usize,
    m_input: usize,
    descriptors: Vec<BasisDescriptor>,
}

#[derive(Serialize, Deserialize)]
struct XiSection {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    library: LibrarySection,
    phi: Vec<f64>,
    xi: XiSection,
    provenance: Provenance,
}

/// Pretty JSON with floats rendered as 17-significant-digit decimals.
struct SciPretty<'a> {
    inner: PrettyFormatter<'a>,
}

impl<'a> SciPretty<'a> {
    fn new() -> Self {
        Self {
            inner: PrettyFormatter::new(),
        }
    }
}

impl<'a> Formatter for SciPretty<'a> {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_array(writer)
    }

    fn end_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object(writer)
    }

    fn end_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_object_value(writer)
    }
}

/// Serializes the model to bytes (exposed for byte-identity tests).
pub fn model_to_bytes(model: &SindyModel, provenance: &Provenance) -> Result<Vec<u8>> {
    let spec = model.spec();
    let xi = model.xi().xi();
    let mut entries = Vec::new();
    for col in 0..xi.ncols() {
        for row in 0..xi.nrows() {
            let v = xi[(row, col)];
            if v != 0.0 {
                entries.push((row, col, v));
            }
        }
    }
    let file = ModelFile {
        version: FORMAT_VERSION,
        library: LibrarySection {
            n_state: spec.n_state(),
            m_input: spec.m_input(),
            descriptors: spec.descriptors().to_vec(),
        },
        phi: model.phi().to_vec(),
        xi: XiSection {
            rows: xi.nrows(),
            cols: xi.ncols(),
            entries,
        },
        provenance: provenance.clone(),
    };
    let mut ser = Serializer::with_formatter(Vec::new(), SciPretty::new());
    file.serialize(&mut ser)
        .map_err(|e| Error::InvariantViolation(format!("model serialization failed: {e}")))?;
    let mut bytes = ser.into_inner();
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes the model plus provenance to `path`.
pub fn save_model_full(
    model: &SindyModel,
    provenance: &Provenance,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = model_to_bytes(model, provenance)?;
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the model with its loss report as the only provenance.
pub fn save_model(model: &SindyModel, report: &LossReport, path: impl AsRef<Path>) -> Result<()> {
    let provenance = Provenance {
        loss: Some(report.clone()),
        ..Provenance::default()
    };
    save_model_full(model, &provenance, path)
}

/// Loads a model and its provenance, re-validating every structural
/// invariant (format version, Φ slot layout, Ξ dimensions and sparsity).
pub fn load_model_full(path: impl AsRef<Path>) -> Result<(SindyModel, Provenance)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::MalformedModel {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if file.version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.display().to_string(),
            found: file.version,
            supported: FORMAT_VERSION,
        });
    }
    // Rebuilding through the constructor re-runs slot-layout validation.
    let spec = LibrarySpec::new(
        file.library.n_state,
        file.library.m_input,
        file.library.descriptors,
    )?;
    if file.xi.rows != spec.p() || file.xi.cols != spec.n_state() {
        return Err(Error::InvariantViolation(format!(
            "coefficient matrix is {}x{}, library expects {}x{}",
            file.xi.rows,
            file.xi.cols,
            spec.p(),
            spec.n_state()
        )));
    }
    let mut xi = DMatrix::zeros(file.xi.rows, file.xi.cols);
    for &(row, col, value) in &file.xi.entries {
        if row >= file.xi.rows || col >= file.xi.cols {
            return Err(Error::MalformedModel {
                path: path.display().to_string(),
                reason: format!("coefficient entry ({row}, {col}) out of range"),
            });
        }
        if value == 0.0 {
            return Err(Error::MalformedModel {
                path: path.display().to_string(),
                reason: format!("explicit zero stored at ({row}, {col})"),
            });
        }
        if xi[(row, col)] != 0.0 {
            return Err(Error::MalformedModel {
                path: path.display().to_string(),
                reason: format!("duplicate coefficient entry at ({row}, {col})"),
            });
        }
        xi[(row, col)] = value;
    }
    let model = SindyModel::new(spec, file.phi, CoefficientMatrix::new(xi))?;
    Ok((model, file.provenance))
}

/// Loads just the model.
pub fn load_model(path: impl AsRef<Path>) -> Result<SindyModel> {
    load_model_full(path).map(|(m, _)| m)
}
