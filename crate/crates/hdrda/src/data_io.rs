//! Dataset ingestion from delimited text, between/within sum-of-squares
//! feature ranking, and binary model persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::estimator::{ClassFactor, HdrdaModel, Parameterization};
use crate::model_selection::CvReport;
use crate::reduction::ReducedSubspace;

const MODEL_MAGIC: &[u8; 8] = b"HDRDAMDL";
const MODEL_VERSION: u32 = 1;

/// Reads a delimited text file with a header row into a dataset. One row
/// per observation, one designated label column, every other column numeric.
///
/// Returns the dataset and the feature column names in matrix order. Error
/// positions are 1-based: rows count data rows (the header is row 0),
/// columns count file columns including the label column.
pub fn read_dataset(
    path: impl AsRef<Path>,
    label_column: &str,
    delimiter: u8,
) -> Result<(LabeledDataset, Vec<String>)> {
    let file = File::open(path.as_ref()).map_err(|e| Error::file(path.as_ref(), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(BufReader::new(file));

    let headers = reader.headers().map_err(|e| map_csv_error(e, 0))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabel(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| map_csv_error(e, row))?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: record.len(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (col_idx, field) in record.iter().enumerate() {
            if col_idx == label_idx {
                if field.trim().is_empty() {
                    return Err(Error::Parse {
                        row,
                        column: col_idx + 1,
                        message: "empty label".into(),
                    });
                }
                labels.push(field.trim().to_string());
            } else {
                let value: f64 = field.trim().parse().map_err(|_| Error::NonNumericFeature {
                    row,
                    column: col_idx + 1,
                    value: field.to_string(),
                })?;
                values.push(value);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "file contains no data rows".into(),
        });
    }

    let n = labels.len();
    let p = feature_names.len();
    let observations = DMatrix::from_row_slice(n, p, &values);
    let dataset = LabeledDataset::from_named_labels(observations, &labels)?;
    Ok((dataset, feature_names))
}

/// Reads a delimited text file with a header row into a plain feature
/// matrix. When `skip_column` names a column present in the header it is
/// dropped, so labeled files can be scored without retyping them. Error
/// positions follow the `read_dataset` convention.
pub fn read_matrix(
    path: impl AsRef<Path>,
    skip_column: Option<&str>,
    delimiter: u8,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    let file = File::open(path.as_ref()).map_err(|e| Error::file(path.as_ref(), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader.headers().map_err(|e| map_csv_error(e, 0))?.clone();
    let skip_idx = skip_column.and_then(|name| headers.iter().position(|h| h == name));
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != skip_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut values: Vec<f64> = Vec::new();
    let mut n = 0;
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| map_csv_error(e, row))?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: record.len(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (col_idx, field) in record.iter().enumerate() {
            if Some(col_idx) == skip_idx {
                continue;
            }
            let value: f64 = field.trim().parse().map_err(|_| Error::NonNumericFeature {
                row,
                column: col_idx + 1,
                value: field.to_string(),
            })?;
            values.push(value);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "file contains no data rows".into(),
        });
    }
    Ok((
        DMatrix::from_row_slice(n, feature_names.len(), &values),
        feature_names,
    ))
}

/// Writes a dataset back to delimited text. Floats are rendered with the
/// shortest decimal form that parses back to the same value, so a
/// write-then-read round trip reproduces the matrix bit-exactly.
pub fn write_dataset<W: Write>(
    data: &LabeledDataset,
    feature_names: &[String],
    label_column: &str,
    delimiter: u8,
    mut writer: W,
) -> Result<()> {
    let sep = delimiter as char;
    let header: Vec<&str> = feature_names
        .iter()
        .map(String::as_str)
        .chain(std::iter::once(label_column))
        .collect();
    writeln!(writer, "{}", header.join(&sep.to_string()))?;
    for i in 0..data.n() {
        let mut fields: Vec<String> = (0..data.p())
            .map(|j| format!("{}", data.observations()[(i, j)]))
            .collect();
        fields.push(data.class_names()[data.labels()[i]].clone());
        writeln!(writer, "{}", fields.join(&sep.to_string()))?;
    }
    Ok(())
}

/// Per-feature scores: ratio of between-class to within-class sums of
/// squares, with the order sorting features by descending score.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    /// Score per feature; `+inf` marks a perfect separator (zero
    /// within-class scatter, positive between-class scatter).
    pub scores: Vec<f64>,
    /// Feature indices by descending score, ties broken by smaller index.
    pub order: Vec<usize>,
}

/// Ranks features by the ratio of between-class to within-class sums of
/// squares. A feature with zero within-class scatter but separated class
/// means scores `+inf`; a feature with no scatter at all scores 0.
pub fn bss_wss_ranking(data: &LabeledDataset) -> Result<FeatureRanking> {
    if data.n_classes() < 2 {
        return Err(Error::BadParameter(
            "feature ranking needs at least two classes".into(),
        ));
    }
    let n = data.n() as f64;
    let p = data.p();
    let k = data.n_classes();
    let class_means: Vec<DVector<f64>> = (0..k).map(|c| data.class_mean(c)).collect();
    let grand_mean = data.observations().row_sum() / n;

    let mut scores = Vec::with_capacity(p);
    for j in 0..p {
        let mut between = 0.0;
        let mut within = 0.0;
        let mut sum_sq = 0.0;
        for (mean, &count) in class_means.iter().zip(data.class_counts()) {
            between += count as f64 * (mean[j] - grand_mean[j]).powi(2);
        }
        for i in 0..data.n() {
            let x = data.observations()[(i, j)];
            within += (x - class_means[data.labels()[i]][j]).powi(2);
            sum_sq += x * x;
        }
        // Sums of squares at the level of accumulated rounding noise are
        // zero in substance; without this floor a constant feature would
        // score 0/0 noise instead of 0.
        let floor = 1e-24 * sum_sq;
        let between = if between <= floor { 0.0 } else { between };
        let within = if within <= floor { 0.0 } else { within };
        let score = if within == 0.0 {
            if between > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            between / within
        };
        scores.push(score);
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    Ok(FeatureRanking { scores, order })
}

/// Keeps the `m` best-ranked features, preserving their original column
/// order. The returned indices can be applied to a held-out set so both are
/// reduced identically.
pub fn select_features(
    data: &LabeledDataset,
    ranking: &FeatureRanking,
    m: usize,
) -> Result<(LabeledDataset, Vec<usize>)> {
    if m == 0 || m > data.p() || ranking.order.len() != data.p() {
        return Err(Error::BadCount {
            requested: m,
            available: data.p(),
        });
    }
    let mut kept: Vec<usize> = ranking.order[..m].to_vec();
    kept.sort_unstable();
    let reduced = data.select_columns(&kept)?;
    Ok((reduced, kept))
}

/// Writes a ranking as CSV with columns `rank,feature_index,feature,score`.
/// Infinite scores render as `inf`.
pub fn write_ranking_csv<W: Write>(
    ranking: &FeatureRanking,
    feature_names: &[String],
    mut writer: W,
) -> Result<()> {
    writeln!(writer, "rank,feature_index,feature,score")?;
    for (rank, &j) in ranking.order.iter().enumerate() {
        writeln!(
            writer,
            "{},{},{},{}",
            rank + 1,
            j,
            feature_names.get(j).map(String::as_str).unwrap_or(""),
            ranking.scores[j]
        )?;
    }
    Ok(())
}

/// Writes a cross-validation report as CSV with columns
/// `lambda,gamma,misclassified,error`, one row per grid point.
pub fn write_cv_report_csv<W: Write>(report: &CvReport, mut writer: W) -> Result<()> {
    writeln!(writer, "lambda,gamma,misclassified,error")?;
    for (gi, &lambda) in report.grid.lambdas().iter().enumerate() {
        for (hi, &gamma) in report.grid.gammas().iter().enumerate() {
            let count: u32 = report.fold_counts.iter().map(|c| c[(gi, hi)]).sum();
            writeln!(
                writer,
                "{},{},{},{}",
                lambda,
                gamma,
                count,
                report.errors[(gi, hi)]
            )?;
        }
    }
    Ok(())
}

/// Saves a fitted model to a self-describing versioned binary file.
///
/// Layout (all integers and floats little-endian): an 8-byte magic tag, a
/// `u32` format version, the parameterization tag, `lambda`, `gamma`, the
/// rank tolerance, the dimensions `p`, `q`, `K`, the class labels as
/// length-prefixed UTF-8, the eigenvalues `d_q`, `U1` column-major, then per
/// class the full-space mean, the projected mean, `W_k^{-1}` column-major
/// and `log det W_k`. The file is written to a temporary sibling and renamed
/// into place.
pub fn save_model(model: &HdrdaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp_path = path.with_extension("tmp");
    {
        let file = File::create(&tmp_path).map_err(|e| Error::file(&tmp_path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        let param_tag: u8 = match model.parameterization {
            Parameterization::Ridge => 0,
            Parameterization::Convex => 1,
        };
        w.write_all(&[param_tag])?;
        w.write_all(&model.lambda.to_le_bytes())?;
        w.write_all(&model.gamma.to_le_bytes())?;
        w.write_all(&model.subspace.tolerance.to_le_bytes())?;
        let p = model.p() as u64;
        let q = model.subspace.q as u64;
        let k = model.n_classes() as u64;
        w.write_all(&p.to_le_bytes())?;
        w.write_all(&q.to_le_bytes())?;
        w.write_all(&k.to_le_bytes())?;
        for label in &model.class_labels {
            let bytes = label.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
        }
        write_f64_slice(&mut w, model.subspace.d_q.as_slice())?;
        write_f64_slice(&mut w, model.subspace.u1.as_slice())?;
        for factor in &model.factors {
            write_f64_slice(&mut w, factor.mean_full.as_slice())?;
            write_f64_slice(&mut w, factor.mean_projected.as_slice())?;
            write_f64_slice(&mut w, factor.w_inverse.as_slice())?;
            w.write_all(&factor.log_det_w.to_le_bytes())?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp_path, path).map_err(|e| Error::file(path, e))?;
    Ok(())
}

/// Loads a model saved by `save_model`. Predictions from the loaded model
/// are bit-identical to the original's.
pub fn load_model(path: impl AsRef<Path>) -> Result<HdrdaModel> {
    let file = File::open(path.as_ref()).map_err(|e| Error::file(path.as_ref(), e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::CorruptFile("bad magic tag".into()));
    }
    let version = read_u32(&mut r)?;
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: MODEL_VERSION,
        });
    }
    let mut tag = [0u8; 1];
    read_exact(&mut r, &mut tag)?;
    let parameterization = match tag[0] {
        0 => Parameterization::Ridge,
        1 => Parameterization::Convex,
        other => {
            return Err(Error::CorruptFile(format!(
                "unknown parameterization tag {other}"
            )))
        }
    };
    let lambda = read_f64(&mut r)?;
    let gamma = read_f64(&mut r)?;
    let tolerance = read_f64(&mut r)?;
    let p = read_u64(&mut r)? as usize;
    let q = read_u64(&mut r)? as usize;
    let k = read_u64(&mut r)? as usize;
    if p == 0 || q == 0 || q > p || k == 0 || p > (1 << 32) || k > (1 << 24) {
        return Err(Error::CorruptFile(format!(
            "implausible dimensions p={p}, q={q}, K={k}"
        )));
    }

    let mut class_labels = Vec::with_capacity(k);
    for _ in 0..k {
        let len = read_u32(&mut r)? as usize;
        if len > (1 << 20) {
            return Err(Error::CorruptFile(format!("label length {len}")));
        }
        let mut bytes = vec![0u8; len];
        read_exact(&mut r, &mut bytes)?;
        let label = String::from_utf8(bytes)
            .map_err(|_| Error::CorruptFile("label is not valid UTF-8".into()))?;
        class_labels.push(label);
    }

    let d_q = DVector::from_vec(read_f64_vec(&mut r, q)?);
    let u1 = DMatrix::from_vec(p, q, read_f64_vec(&mut r, p * q)?);

    let alpha = parameterization.alpha(gamma);
    let mut factors = Vec::with_capacity(k);
    for _ in 0..k {
        let mean_full = DVector::from_vec(read_f64_vec(&mut r, p)?);
        let mean_projected = DVector::from_vec(read_f64_vec(&mut r, q)?);
        let w_inverse = DMatrix::from_vec(q, q, read_f64_vec(&mut r, q * q)?);
        let log_det_w = read_f64(&mut r)?;
        let gamma_diag = d_q.map(|d| alpha * lambda * d + gamma);
        factors.push(ClassFactor {
            gamma_diag,
            w_inverse,
            log_det_w,
            mean_projected,
            mean_full,
        });
    }

    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => {}
        _ => return Err(Error::CorruptFile("trailing data after model".into())),
    }

    Ok(HdrdaModel {
        subspace: ReducedSubspace {
            u1,
            d_q,
            q,
            tolerance,
        },
        factors,
        lambda,
        gamma,
        parameterization,
        class_labels,
    })
}

fn write_f64_slice<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for &v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::CorruptFile("unexpected end of file".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

fn map_csv_error(e: csv::Error, row: usize) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                Error::Io(io)
            } else {
                unreachable!()
            }
        }
        _ => Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        },
    }
}
