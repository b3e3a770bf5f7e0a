//! JSON and CSV formats for matrices, datasets and results.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CanonicalUnitary, C64};
use crate::moduli::{IntensityMatrix, SinkhornResult};
use crate::phases::{CorrelationEntry, CorrelationSet, PhaseSolution};
use crate::simulator::{TwoBeamSample, TwoBeamSeries};

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Format(format!(
            "ragged matrix: rows of length {ncols} and {}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Complex matrix as separate real and imaginary row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrixJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrixJson {
    pub fn from_matrix(m: &DMatrix<C64>) -> Self {
        Self {
            re: rows_of(&m.map(|z| z.re)),
            im: rows_of(&m.map(|z| z.im)),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<C64>> {
        let re = matrix_from_rows(&self.re)?;
        let im = matrix_from_rows(&self.im)?;
        if re.shape() != im.shape() {
            return Err(Error::Format(
                "real and imaginary parts differ in shape".into(),
            ));
        }
        Ok(re.zip_map(&im, C64::new))
    }
}

/// Real matrix, rows first. Used for intensity and probability matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrixJson {
    pub entries: Vec<Vec<f64>>,
}

impl RealMatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            entries: rows_of(m),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.entries)
    }
}

impl From<&IntensityMatrix> for RealMatrixJson {
    fn from(m: &IntensityMatrix) -> Self {
        Self::from_matrix(m.entries())
    }
}

/// Complex diagonal given by amplitude moduli and arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossJson {
    #[serde(rename = "mod")]
    pub modulus: Vec<f64>,
    #[serde(rename = "arg", default)]
    pub phase: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornJson {
    pub method: String,
    pub p: Vec<Vec<f64>>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub stalled: bool,
}

impl From<&SinkhornResult> for SinkhornJson {
    fn from(r: &SinkhornResult) -> Self {
        Self {
            method: "sinkhorn".into(),
            p: rows_of(r.p.entries()),
            d1: r.d1.clone(),
            d2: r.d2.clone(),
            iterations: r.iterations,
            residual: r.residual,
            stalled: r.stalled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceJson {
    pub method: String,
    pub alpha: Vec<f64>,
    /// Ratio of each input's mean weighted sum to that of the first input.
    pub input_ratios: BTreeMap<usize, f64>,
    /// Smallest eigenvalue of the summed variance matrix.
    pub eigenvalue: f64,
    pub spectral_gap: f64,
    /// Probability columns keyed by input; the full matrix when all inputs were measured.
    pub columns: BTreeMap<usize, Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p: Option<Vec<Vec<f64>>>,
    /// Largest deviation of a row sum of `p` from 1.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationJson {
    pub h: usize,
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub c: f64,
    pub stderr: f64,
    pub samples: usize,
}

pub fn correlations_to_json(set: &CorrelationSet) -> Vec<CorrelationJson> {
    set.iter()
        .map(|(key, e)| CorrelationJson {
            h: key.h,
            k: key.k,
            i: key.i,
            j: key.j,
            c: e.c,
            stderr: e.stderr,
            samples: e.samples,
        })
        .collect()
}

pub fn correlations_from_json(items: &[CorrelationJson]) -> CorrelationSet {
    let mut set = CorrelationSet::new();
    for e in items {
        set.insert(
            e.h,
            e.k,
            e.i,
            e.j,
            CorrelationEntry {
                c: e.c,
                stderr: e.stderr,
                samples: e.samples,
            },
        );
    }
    set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSolutionJson {
    pub phases: Vec<Vec<f64>>,
    pub confidence: Vec<Vec<f64>>,
    pub chi2: f64,
}

impl From<&PhaseSolution> for PhaseSolutionJson {
    fn from(s: &PhaseSolution) -> Self {
        Self {
            phases: rows_of(&s.phases),
            confidence: rows_of(&s.confidence),
            chi2: s.chi2,
        }
    }
}

impl PhaseSolutionJson {
    pub fn to_solution(&self) -> Result<PhaseSolution> {
        Ok(PhaseSolution {
            phases: matrix_from_rows(&self.phases)?,
            confidence: matrix_from_rows(&self.confidence)?,
            chi2: self.chi2,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalUnitaryJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
    pub conjugated: bool,
    pub unitarity_residual: f64,
}

impl From<&CanonicalUnitary> for CanonicalUnitaryJson {
    fn from(u: &CanonicalUnitary) -> Self {
        let m = ComplexMatrixJson::from_matrix(u.entries());
        Self {
            re: m.re,
            im: m.im,
            conjugated: u.conjugated(),
            unitarity_residual: u.unitarity_residual(),
        }
    }
}

/// One circuit setting and the output powers measured with light in one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRecord {
    pub theta: Vec<f64>,
    pub intensities: Vec<f64>,
}

/// Output powers over circuit settings, grouped by input mode. The first
/// record of each input is the setting being characterized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SettingsDataset {
    pub inputs: BTreeMap<usize, Vec<SettingRecord>>,
}

impl SettingsDataset {
    /// Intensity vectors per input, in record order.
    pub fn groups(&self) -> BTreeMap<usize, Vec<Vec<f64>>> {
        self.inputs
            .iter()
            .map(|(&k, recs)| (k, recs.iter().map(|r| r.intensities.clone()).collect()))
            .collect()
    }

    /// Output powers of the first record of each input.
    pub fn target_columns(&self) -> BTreeMap<usize, Vec<f64>> {
        self.inputs
            .iter()
            .filter_map(|(&k, recs)| recs.first().map(|r| (k, r.intensities.clone())))
            .collect()
    }
}

pub fn series_file_name(h: usize, k: usize) -> String {
    format!("series_h{h}_k{k}.csv")
}

/// Writes `t,phi_M,I_0,...,I_{n-1}`.
pub fn write_series_csv(path: &Path, series: &TwoBeamSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "phi_M".to_string()];
    header.extend((0..series.n_outputs()).map(|i| format!("I_{i}")));
    w.write_record(&header)?;
    for s in &series.samples {
        let mut row = vec![s.t.to_string(), s.modulator_phase.to_string()];
        row.extend(s.intensities.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv(path: &Path, h: usize, k: usize) -> Result<TwoBeamSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 3 || &header[0] != "t" || &header[1] != "phi_M" {
        return Err(Error::Format(format!(
            "{}: expected header t,phi_M,I_0,...",
            path.display()
        )));
    }
    let parse = |field: &str| -> Result<f64> {
        field
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("{}: bad number {field:?}: {e}", path.display())))
    };
    let mut samples = Vec::new();
    for record in r.records() {
        let record = record?;
        let t = record[0]
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("{}: bad time index: {e}", path.display())))?;
        let intensities = record
            .iter()
            .skip(2)
            .map(parse)
            .collect::<Result<Vec<_>>>()?;
        samples.push(TwoBeamSample {
            t,
            modulator_phase: parse(&record[1])?,
            intensities,
        });
    }
    Ok(TwoBeamSeries { h, k, samples })
}

/// Finds `series_h{h}_k{k}.csv` files in `dir`, sorted by `(h, k)`.
pub fn read_series_dir(dir: &Path) -> Result<Vec<TwoBeamSeries>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(rest) = name
            .strip_prefix("series_h")
            .and_then(|s| s.strip_suffix(".csv"))
        else {
            continue;
        };
        let Some((h, k)) = rest.split_once("_k") else {
            continue;
        };
        if let (Ok(h), Ok(k)) = (h.parse::<usize>(), k.parse::<usize>()) {
            found.push((h, k));
        }
    }
    found.sort_unstable();
    found
        .into_iter()
        .map(|(h, k)| read_series_csv(&dir.join(series_file_name(h, k)), h, k))
        .collect()
}

/// Writes rows of numbers under a header.
pub fn write_table_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Matrix data found in a JSON document: a report, a moduli result, a
/// complex matrix or a plain real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDocument {
    pub p: DMatrix<f64>,
    pub unitary: Option<DMatrix<C64>>,
}

pub fn matrix_document(value: &serde_json::Value) -> Result<MatrixDocument> {
    let complex = |v: &serde_json::Value| -> Result<DMatrix<C64>> {
        let m: ComplexMatrixJson = serde_json::from_value(v.clone())?;
        m.to_matrix()
    };
    let real = |v: &serde_json::Value| -> Result<DMatrix<f64>> {
        let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone())?;
        matrix_from_rows(&rows)
    };
    if let Some(u) = value.get("unitary").filter(|u| !u.is_null()) {
        let u = complex(u)?;
        let p = match value.get("p").filter(|p| !p.is_null()) {
            Some(p) => real(p)?,
            None => u.map(|z| z.norm_sqr()),
        };
        return Ok(MatrixDocument {
            p,
            unitary: Some(u),
        });
    }
    if value.get("re").is_some() {
        let u = complex(value)?;
        return Ok(MatrixDocument {
            p: u.map(|z| z.norm_sqr()),
            unitary: Some(u),
        });
    }
    for key in ["p", "entries"] {
        if let Some(p) = value.get(key).filter(|p| !p.is_null()) {
            return Ok(MatrixDocument {
                p: real(p)?,
                unitary: None,
            });
        }
    }
    Err(Error::Format(
        "no matrix found: expected `unitary`, `re`/`im`, `p` or `entries`".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("lochar-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let series = TwoBeamSeries {
            h: 0,
            k: 2,
            samples: (0..5)
                .map(|t| TwoBeamSample {
                    t,
                    modulator_phase: t as f64 * 0.1,
                    intensities: vec![1.0 / (t as f64 + 1.0), 0.25, 3.5e-7],
                })
                .collect(),
        };
        write_series_csv(&dir.join(series_file_name(0, 2)), &series).unwrap();
        fs::write(dir.join("notes.txt"), "ignored").unwrap();
        let back = read_series_dir(&dir).unwrap();
        assert_eq!(back, vec![series]);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn correlation_json_round_trip() {
        let mut set = CorrelationSet::new();
        set.insert(
            1,
            0,
            2,
            1,
            CorrelationEntry {
                c: -0.5,
                stderr: 0.01,
                samples: 100,
            },
        );
        let json = correlations_to_json(&set);
        assert_eq!((json[0].h, json[0].k, json[0].i, json[0].j), (0, 1, 1, 2));
        assert_eq!(correlations_from_json(&json), set);
    }

    #[test]
    fn matrix_document_variants() {
        let v = serde_json::json!({"re": [[1.0, 0.0], [0.0, 1.0]], "im": [[0.0, 0.0], [0.0, 0.0]]});
        let d = matrix_document(&v).unwrap();
        assert_eq!(d.p, DMatrix::identity(2, 2));
        let v = serde_json::json!({"entries": [[0.5, 0.5], [0.5, 0.5]]});
        assert!(matrix_document(&v).unwrap().unitary.is_none());
        assert!(matrix_document(&serde_json::json!({"x": 1})).is_err());
        assert!(matrix_from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn settings_dataset_shape() {
        let text = r#"{"inputs": {"0": [{"theta": [0, 1, 2], "intensities": [0.1, 0.2, 0.7]}]}}"#;
        let d: SettingsDataset = serde_json::from_str(text).unwrap();
        assert_eq!(d.target_columns()[&0], vec![0.1, 0.2, 0.7]);
        assert_eq!(d.groups()[&0].len(), 1);
    }
}
