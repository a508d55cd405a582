use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

use crate::numfmt::{fmt_sig, round_sig};
use crate::preprocess::{Column, FeatureTable};
use crate::types::{ImportanceMatrix, TagDerivationConfig, TagRule};

pub const ID_COLUMN: &str = "sample_id";

fn open(path: &Path) -> Result<(csv::Reader<std::fs::File>, Vec<String>, usize)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let id = headers
        .iter()
        .position(|h| h == ID_COLUMN)
        .ok_or_else(|| anyhow!("{}: no `{ID_COLUMN}` column", path.display()))?;
    Ok((reader, headers, id))
}

fn parse_number(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        anyhow!(
            "{}: line {line}, column `{column}`: cannot parse {cell:?} as a number",
            path.display()
        )
    })?;
    if !v.is_finite() {
        bail!("{}: line {line}, column `{column}`: value {cell:?} is not finite", path.display());
    }
    Ok(v)
}

fn parse_flag(path: &Path, line: u64, column: &str, cell: &str) -> Result<bool> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => bail!(
            "{}: line {line}, column `{column}`: cannot parse {cell:?} as a binary flag",
            path.display()
        ),
    }
}

/// Importance CSV: a `sample_id` column plus one numeric column per feature.
pub fn read_importances(path: &Path) -> Result<(Vec<String>, ImportanceMatrix)> {
    let (mut reader, headers, id_col) = open(path)?;
    let features: Vec<usize> = (0..headers.len()).filter(|&c| c != id_col).collect();
    if features.is_empty() {
        bail!("{}: no feature columns", path.display());
    }
    let mut ids = Vec::new();
    let mut seen = HashMap::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        if seen.insert(id.clone(), line).is_some() {
            bail!("{}: line {line}: duplicate sample_id {id:?}", path.display());
        }
        for &c in &features {
            values.push(parse_number(path, line, &headers[c], record.get(c).unwrap_or(""))?);
        }
        ids.push(id);
    }
    if ids.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let names = features.iter().map(|&c| headers[c].clone()).collect();
    let w = ImportanceMatrix::new(values, names).with_context(|| format!("loading {}", path.display()))?;
    Ok((ids, w))
}

/// Descriptor CSV joined to `ids` by `sample_id`. Only columns named by a rule
/// are read, and each is parsed according to its rule.
pub fn read_descriptors(path: &Path, rules: &TagDerivationConfig, ids: &[String]) -> Result<FeatureTable> {
    let (mut reader, headers, id_col) = open(path)?;
    let mut cols = Vec::with_capacity(rules.rules.len());
    for rule in &rules.rules {
        let c = headers
            .iter()
            .position(|h| *h == rule.column)
            .ok_or_else(|| anyhow!("{}: unknown column `{}`", path.display(), rule.column))?;
        cols.push(c);
    }
    let mut by_id: HashMap<String, (u64, csv::StringRecord)> = HashMap::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        if by_id.insert(id.clone(), (line, record)).is_some() {
            bail!("{}: line {line}: duplicate sample_id {id:?}", path.display());
        }
    }
    if let Some(missing) = ids.iter().find(|id| !by_id.contains_key(*id)) {
        bail!("{}: no row for sample_id {missing:?}", path.display());
    }
    if by_id.len() != ids.len() {
        bail!(
            "{}: {} rows but the importance file has {} samples",
            path.display(),
            by_id.len(),
            ids.len()
        );
    }

    let mut columns = Vec::with_capacity(cols.len());
    for (rule, &c) in rules.rules.iter().zip(&cols) {
        let name = &rule.column;
        let cells = ids.iter().map(|id| {
            let (line, rec) = &by_id[id];
            (*line, rec.get(c).unwrap_or("").trim())
        });
        let column = match rule.rule {
            TagRule::Quantile(_) => Column::Continuous(
                cells
                    .map(|(line, cell)| parse_number(path, line, name, cell))
                    .collect::<Result<_>>()?,
            ),
            TagRule::OneHot => Column::Categorical(
                cells
                    .map(|(line, cell)| {
                        if cell.is_empty() {
                            bail!("{}: line {line}, column `{name}`: empty value", path.display());
                        }
                        Ok(cell.to_string())
                    })
                    .collect::<Result<_>>()?,
            ),
            TagRule::Passthrough => Column::Binary(
                cells
                    .map(|(line, cell)| parse_flag(path, line, name, cell))
                    .collect::<Result<_>>()?,
            ),
        };
        columns.push((name.clone(), column));
    }
    Ok(FeatureTable::new(columns)?)
}

/// Writes rows of already formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn num(x: f64) -> Value {
    Value::from(round_sig(x))
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn cell(x: f64) -> String {
    fmt_sig(x)
}
