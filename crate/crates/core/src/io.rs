//! File formats: CSV tables (comma separated, header row required, empty
//! field = missing, UTF-8), per-column schema files (TOML with one block per
//! column), factorization directories (X.csv / Y.csv / mu.csv plus a JSON
//! layout manifest), and output manifests with config hashes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hurdle::{HurdleMode, HurdleSpec, Nu};
use crate::loss::Loss;
use crate::solver::Factorization;
use crate::table::{CMultiplier, Column, ColumnModel, ColumnSpan, DataTable};

/// Reads a CSV file into (header, column-major cells); empty fields are
/// missing.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if header.is_empty() {
        return Err(parse_err(path, "empty header row".into()));
    }
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); header.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                format!("row {} has {} fields, expected {}", line + 2, record.len(), header.len()),
            ));
        }
        for (j, field) in record.iter().enumerate() {
            if field.is_empty() {
                columns[j].push(None);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    parse_err(path, format!("row {}, column {}: bad number {field:?}", line + 2, header[j]))
                })?;
                columns[j].push(Some(v));
            }
        }
    }
    Ok((header, columns))
}

fn parse_err(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message,
    }
}

/// Writes a value table with header; missing cells become empty fields.
pub fn write_csv(path: &Path, header: &[String], columns: &[Vec<Option<f64>>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    let n = columns.first().map_or(0, |c| c.len());
    for i in 0..n {
        let row: Vec<String> = columns
            .iter()
            .map(|col| col[i].map_or(String::new(), |v| format_f64(v)))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Headerless numeric matrix, one CSV row per matrix row.
pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.parse()
                    .map_err(|_| parse_err(path, format!("line {}: bad number {f:?}", i + 1)))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(parse_err(path, "ragged matrix".into()));
    }
    let nrows = rows.len();
    Array2::from_shape_vec((nrows, ncols), rows.into_iter().flatten().collect())
        .map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_vector_csv(path: &Path, v: &[f64]) -> Result<()> {
    let mut out = String::new();
    for x in v {
        out.push_str(&format_f64(*x));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse()
                .map_err(|_| parse_err(path, format!("bad number {l:?}")))
        })
        .collect()
}

/// Shortest round-trip float formatting (matches Rust's Display).
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// Schema files
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct SchemaFile {
    column: Vec<SchemaColumnRaw>,
}

#[derive(Debug, Deserialize)]
struct SchemaColumnRaw {
    name: String,
    loss: String,
    #[serde(default)]
    nu: Option<toml::Value>,
    #[serde(default)]
    binary: Option<String>,
    #[serde(default)]
    g: Option<String>,
    #[serde(default)]
    c: Option<toml::Value>,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    mar_offset_refresh: Option<bool>,
}

/// One resolved schema entry.
#[derive(Debug, Clone)]
pub struct ColumnSchema {
    pub name: String,
    pub model: ColumnModel,
    pub c: CMultiplier,
    pub mar_offset_refresh: bool,
}

pub fn parse_loss(name: &str) -> Result<Loss> {
    match name {
        "quadratic" => Ok(Loss::Quadratic),
        "logistic" => Ok(Loss::Logistic),
        "poisson" => Ok(Loss::Poisson),
        "truncated_poisson" => Ok(Loss::TruncatedPoisson),
        other => Err(Error::Schema(format!("unknown loss kind {other:?}"))),
    }
}

fn parse_nu(v: &toml::Value, column: &str) -> Result<Nu> {
    match v {
        toml::Value::String(s) if s == "missing" => Ok(Nu::Missing),
        toml::Value::Integer(i) => Ok(Nu::Value(*i as f64)),
        toml::Value::Float(f) => Ok(Nu::Value(*f)),
        other => Err(Error::Schema(format!(
            "column {column}: nu must be a number or \"missing\", got {other}"
        ))),
    }
}

pub fn parse_schema(text: &str) -> Result<Vec<ColumnSchema>> {
    let file: SchemaFile =
        toml::from_str(text).map_err(|e| Error::Schema(format!("invalid schema: {e}")))?;
    if file.column.is_empty() {
        return Err(Error::Schema("schema declares no columns".into()));
    }
    let mut out = Vec::with_capacity(file.column.len());
    for raw in file.column {
        let c = match &raw.c {
            None => CMultiplier::Ratio,
            Some(toml::Value::String(s)) if s == "ratio" => CMultiplier::Ratio,
            Some(toml::Value::Float(f)) if *f > 0.0 => CMultiplier::Fixed(*f),
            Some(toml::Value::Integer(i)) if *i > 0 => CMultiplier::Fixed(*i as f64),
            Some(other) => {
                return Err(Error::Schema(format!(
                    "column {}: c must be \"ratio\" or a positive number, got {other}",
                    raw.name
                )))
            }
        };
        let model = if raw.loss == "hurdle" {
            let nu = match &raw.nu {
                Some(v) => parse_nu(v, &raw.name)?,
                None => {
                    return Err(Error::Schema(format!(
                        "column {}: hurdle loss requires nu",
                        raw.name
                    )))
                }
            };
            let g = match &raw.g {
                Some(g) => parse_loss(g)?,
                None => {
                    return Err(Error::Schema(format!(
                        "column {}: hurdle loss requires g",
                        raw.name
                    )))
                }
            };
            let binary = match &raw.binary {
                Some(b) => parse_loss(b)?,
                None => Loss::Logistic,
            };
            let mode = match raw.mode.as_deref() {
                None | Some("full") => HurdleMode::Full,
                Some("reduced") => HurdleMode::Reduced,
                Some(other) => {
                    return Err(Error::Schema(format!(
                        "column {}: mode must be full or reduced, got {other:?}",
                        raw.name
                    )))
                }
            };
            let mut spec = HurdleSpec::new(nu, g, mode);
            spec.binary_loss = binary;
            ColumnModel::Hurdle(spec)
        } else {
            ColumnModel::Plain(parse_loss(&raw.loss)?)
        };
        out.push(ColumnSchema {
            name: raw.name,
            model,
            c,
            mar_offset_refresh: raw.mar_offset_refresh.unwrap_or(false),
        });
    }
    Ok(out)
}

pub fn load_schema(path: &Path) -> Result<Vec<ColumnSchema>> {
    let text = fs::read_to_string(path)?;
    parse_schema(&text)
}

/// Binds CSV columns to schema entries. Every schema column must exist in
/// the CSV and vice versa; table columns follow the CSV order.
pub fn build_table(
    header: &[String],
    columns: Vec<Vec<Option<f64>>>,
    schema: &[ColumnSchema],
) -> Result<DataTable> {
    for s in schema {
        if !header.contains(&s.name) {
            return Err(Error::Schema(format!(
                "schema names a missing column: {}",
                s.name
            )));
        }
    }
    let mut cols = Vec::with_capacity(header.len());
    for (name, values) in header.iter().zip(columns) {
        let entry = schema
            .iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| Error::Schema(format!("CSV column {name} has no schema entry")))?;
        let col = match &entry.model {
            ColumnModel::Plain(loss) => Column::plain(name.clone(), *loss, values),
            ColumnModel::Hurdle(spec) => Column::hurdle(name.clone(), spec.clone(), values),
        };
        cols.push(col.with_c(entry.c));
    }
    DataTable::new(cols)
}

/// Names of the columns flagged for the MAR offset refresh.
pub fn mar_refresh_columns(schema: &[ColumnSchema]) -> Vec<String> {
    schema
        .iter()
        .filter(|s| s.mar_offset_refresh)
        .map(|s| s.name.clone())
        .collect()
}

// ---------------------------------------------------------------------------
// Factorization directories
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct LayoutManifest {
    pub rank: usize,
    pub embedded_dim: usize,
    pub columns: Vec<LayoutColumn>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LayoutColumn {
    pub name: String,
    pub start: usize,
    pub embed_dim: usize,
    pub loss: String,
    /// "missing" or the numeric nu, present for hurdle columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_loss: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_loss: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub offset: Vec<f64>,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
}

/// Writes X.csv, Y.csv, mu.csv and layout.json under `dir`; returns the
/// file names written.
pub fn save_factorization(dir: &Path, table: &DataTable, fact: &Factorization) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join("X.csv"), &fact.x)?;
    write_matrix_csv(&dir.join("Y.csv"), &fact.y)?;
    write_vector_csv(&dir.join("mu.csv"), &fact.mu)?;
    let columns = fact
        .spans
        .iter()
        .map(|span| {
            let col = &table.columns[span.column];
            let fitted_offset: Vec<f64> =
                (0..span.dim).map(|ell| fact.mu[span.start + ell]).collect();
            match &col.model {
                ColumnModel::Plain(loss) => LayoutColumn {
                    name: col.name.clone(),
                    start: span.start,
                    embed_dim: span.dim,
                    loss: loss.name().into(),
                    nu: None,
                    binary_loss: None,
                    g_loss: None,
                    mode: None,
                    offset: fitted_offset,
                    scale: col.scale,
                    lambda1: None,
                    lambda2: None,
                },
                ColumnModel::Hurdle(h) => LayoutColumn {
                    name: col.name.clone(),
                    start: span.start,
                    embed_dim: span.dim,
                    loss: "hurdle".into(),
                    nu: Some(match h.nu {
                        Nu::Missing => "missing".into(),
                        Nu::Value(v) => format_f64(v),
                    }),
                    binary_loss: Some(h.binary_loss.name().into()),
                    g_loss: Some(h.g_loss.name().into()),
                    mode: Some(
                        match h.mode {
                            HurdleMode::Full => "full",
                            HurdleMode::Reduced => "reduced",
                        }
                        .into(),
                    ),
                    offset: fitted_offset,
                    scale: col.scale,
                    lambda1: Some(h.lambda1),
                    lambda2: Some(h.lambda2),
                },
            }
        })
        .collect();
    let manifest = LayoutManifest {
        rank: fact.rank(),
        embedded_dim: fact.y.ncols(),
        columns,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::numeric(format!("layout serialization failed: {e}")))?;
    fs::write(dir.join("layout.json"), json + "\n")?;
    Ok(vec![
        "X.csv".into(),
        "Y.csv".into(),
        "mu.csv".into(),
        "layout.json".into(),
    ])
}

pub fn load_factorization(dir: &Path) -> Result<(Factorization, LayoutManifest)> {
    let x = read_matrix_csv(&dir.join("X.csv"))?;
    let y = read_matrix_csv(&dir.join("Y.csv"))?;
    let mu = read_vector_csv(&dir.join("mu.csv"))?;
    let text = fs::read_to_string(dir.join("layout.json"))?;
    let manifest: LayoutManifest = serde_json::from_str(&text)
        .map_err(|e| parse_err(&dir.join("layout.json"), e.to_string()))?;
    if mu.len() != y.ncols() {
        return Err(Error::Dimension(format!(
            "mu has length {}, Y has {} columns",
            mu.len(),
            y.ncols()
        )));
    }
    let spans = manifest
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| ColumnSpan {
            column: j,
            start: c.start,
            dim: c.embed_dim,
        })
        .collect();
    Ok((
        Factorization { x, y, mu, spans },
        manifest,
    ))
}

// ---------------------------------------------------------------------------
// Output manifests
// ---------------------------------------------------------------------------

/// SHA-256 hex digest of a canonical configuration string.
pub fn config_hash(canonical: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// A manifest listing output files plus run metadata; keys serialize in
/// sorted order so re-runs are byte identical.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub rng: String,
    pub files: Vec<String>,
    pub extra: BTreeMap<String, String>,
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::numeric(format!("manifest serialization failed: {e}")))?;
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}
