//! File formats.
//!
//! All inputs are UTF-8 CSV with a header row:
//!
//! | file       | header                    | notes                                  |
//! |------------|---------------------------|----------------------------------------|
//! | concepts   | `id,name,values`          | `values` is `\|`-separated and optional |
//! | priors     | `left_id,right_id,p_one`  |                                        |
//! | labels     | `left_id,right_id,label`  | label is 0 or 1                        |
//! | embeddings | `id,v0,v1,...`            | one row per embedded concept           |
//!
//! Reports and assignments are written as JSON.

use std::fs::File;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{validate_vocabulary, Concept, Pair};

/// One `left_id,right_id,<value>` row with its 1-based file line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRow<T> {
    pub line: u64,
    pub pair: Pair,
    pub value: T,
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(path, line, e.to_string())
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let ok = expected.iter().enumerate().all(|(i, name)| {
        header
            .get(i)
            .is_some_and(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
    });
    if !ok {
        return Err(parse_error(
            path,
            1,
            format!(
                "expected header '{}', found '{}'",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn field<'r, T: std::str::FromStr>(
    path: &Path,
    record: &'r csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T> {
    let line = record.position().map_or(0, |p| p.line());
    let raw = record
        .get(idx)
        .ok_or_else(|| parse_error(path, line, format!("missing column '{name}'")))?;
    raw.parse()
        .map_err(|_| parse_error(path, line, format!("invalid {name} '{raw}'")))
}

/// Reads a concepts file; rows may appear in any order but ids must be exactly `0..n`.
pub fn read_concepts(path: &Path) -> Result<Vec<Concept>> {
    let mut reader = open(path)?;
    check_header(path, &mut reader, &["id", "name"])?;
    let mut rows: Vec<(u64, Concept)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let id: usize = field(path, &record, 0, "id")?;
        let name = record.get(1).unwrap_or("").to_owned();
        let values = record
            .get(2)
            .filter(|v| !v.is_empty())
            .map(|v| v.split('|').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();
        let concept = Concept::with_values(id, name, values).map_err(|e| parse_error(path, line, e.to_string()))?;
        rows.push((line, concept));
    }
    rows.sort_by_key(|(_, c)| c.id);
    for w in rows.windows(2) {
        if w[0].1.id == w[1].1.id {
            return Err(parse_error(path, w[1].0, format!("duplicate concept id {}", w[1].1.id)));
        }
    }
    let concepts: Vec<Concept> = rows.into_iter().map(|(_, c)| c).collect();
    validate_vocabulary(&concepts).map_err(|e| parse_error(path, 0, e.to_string()))?;
    Ok(concepts)
}

pub fn write_concepts(path: &Path, concepts: &[Concept]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["id", "name", "values"]).map_err(|e| csv_error(path, e))?;
    for c in concepts {
        w.write_record([c.id.to_string(), c.name.clone(), c.values.join("|")])
            .map_err(|e| csv_error(path, e))?;
    }
    flush(path, w)
}

fn read_pair_rows<T: std::str::FromStr>(path: &Path, value_col: &str) -> Result<Vec<PairRow<T>>> {
    let mut reader = open(path)?;
    check_header(path, &mut reader, &["left_id", "right_id", value_col])?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        out.push(PairRow {
            line,
            pair: Pair::new(
                field(path, &record, 0, "left_id")?,
                field(path, &record, 1, "right_id")?,
            ),
            value: field(path, &record, 2, value_col)?,
        });
    }
    Ok(out)
}

/// Raw rows of a priors file. Range checks happen in
/// [`load_external_priors`](crate::priors::load_external_priors).
pub fn read_prior_rows(path: &Path) -> Result<Vec<PairRow<f64>>> {
    read_pair_rows(path, "p_one")
}

/// Rows of a labels file; labels other than 0/1 are rejected.
pub fn read_label_rows(path: &Path) -> Result<Vec<PairRow<u8>>> {
    let rows: Vec<PairRow<u8>> = read_pair_rows(path, "label")?;
    if let Some(bad) = rows.iter().find(|r| r.value > 1) {
        return Err(parse_error(path, bad.line, format!("label must be 0 or 1, got {}", bad.value)));
    }
    Ok(rows)
}

/// Pairs from the first two columns of any `left_id,right_id,...` file.
pub fn read_pairs(path: &Path) -> Result<Vec<PairRow<()>>> {
    let mut reader = open(path)?;
    check_header(path, &mut reader, &["left_id", "right_id"])?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        out.push(PairRow {
            line,
            pair: Pair::new(
                field(path, &record, 0, "left_id")?,
                field(path, &record, 1, "right_id")?,
            ),
            value: (),
        });
    }
    Ok(out)
}

pub fn write_priors<I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = (Pair, f64)>,
{
    let mut w = writer(path)?;
    w.write_record(["left_id", "right_id", "p_one"]).map_err(|e| csv_error(path, e))?;
    for (p, v) in rows {
        w.write_record([p.left.to_string(), p.right.to_string(), format!("{v}")])
            .map_err(|e| csv_error(path, e))?;
    }
    flush(path, w)
}

pub fn write_labels<I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = (Pair, u8)>,
{
    let mut w = writer(path)?;
    w.write_record(["left_id", "right_id", "label"]).map_err(|e| csv_error(path, e))?;
    for (p, v) in rows {
        w.write_record([p.left.to_string(), p.right.to_string(), v.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    flush(path, w)
}

/// Rows of an embeddings file as `(id, vector)`.
pub fn read_embedding_rows(path: &Path) -> Result<Vec<(u64, usize, Vec<f64>)>> {
    let mut reader = open(path)?;
    check_header(path, &mut reader, &["id"])?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let id: usize = field(path, &record, 0, "id")?;
        let mut v = Vec::with_capacity(record.len().saturating_sub(1));
        for i in 1..record.len() {
            v.push(field(path, &record, i, "component")?);
        }
        out.push((line, id, v));
    }
    Ok(out)
}

pub fn write_embeddings(path: &Path, rows: &[(usize, Vec<f64>)]) -> Result<()> {
    let mut w = writer(path)?;
    let dim = rows.first().map_or(0, |(_, v)| v.len());
    let mut header = vec!["id".to_owned()];
    header.extend((0..dim).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (id, v) in rows {
        let mut rec = vec![id.to_string()];
        rec.extend(v.iter().map(|x| format!("{x}")));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    flush(path, w)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

fn flush(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
