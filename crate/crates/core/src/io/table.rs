//! FeatureTable CSV: UTF-8, one header row, `.` decimal, shortest
//! round-trip float formatting, so parsed values are bit-identical to the
//! written ones.

use std::path::Path;

use crate::fusion::{Condition, FeatureTable, Provenance};
use crate::{Error, Result};

/// Metadata columns preceding the feature columns, in order.
pub const RESERVED_COLUMNS: [&str; 4] = ["specimen_id", "layer_index", "condition", "provenance"];

fn escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Split one CSV record, honoring double-quote escaping.
fn split_record(line: &str, line_no: usize) -> Result<Vec<String>> {
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    field.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' if field.is_empty() => quoted = true,
            ',' if !quoted => fields.push(std::mem::take(&mut field)),
            c => field.push(c),
        }
    }
    if quoted {
        return Err(Error::Format(format!(
            "line {line_no}: unterminated quoted field"
        )));
    }
    fields.push(field);
    Ok(fields)
}

/// Write the table as CSV. Non-finite cells are a format error: they would
/// not survive the round trip as data.
pub fn write_feature_table(path: &Path, table: &FeatureTable) -> Result<()> {
    table
        .validate()
        .map_err(|e| Error::Format(format!("table not writable: {e}")))?;
    let mut out = String::new();
    for (i, name) in RESERVED_COLUMNS
        .iter()
        .copied()
        .chain(table.column_names.iter().map(String::as_str))
        .enumerate()
    {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&escape(name));
    }
    out.push('\n');

    for r in 0..table.rows.len() {
        out.push_str(&escape(&table.specimen_ids[r]));
        out.push(',');
        out.push_str(&table.layer_indices[r].to_string());
        out.push(',');
        out.push_str(table.labels[r].as_str());
        out.push(',');
        out.push_str(table.provenance[r].as_str());
        for v in &table.rows[r] {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    super::write_atomic(path, out.as_bytes())
}

/// Parse a CSV written by `write_feature_table`.
pub fn read_feature_table(path: &Path) -> Result<FeatureTable> {
    let bytes = super::read_bytes(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::Format(format!("{}: not UTF-8: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();

    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty file", path.display())))?;
    let header = split_record(header_line, 1)?;
    if header.len() < RESERVED_COLUMNS.len() {
        return Err(Error::Format(format!(
            "header has {} columns, need at least the {} reserved ones",
            header.len(),
            RESERVED_COLUMNS.len()
        )));
    }
    for (i, expected) in RESERVED_COLUMNS.iter().enumerate() {
        if header[i] != *expected {
            return Err(Error::Format(format!(
                "reserved column {i} is {:?}, expected {expected:?}",
                header[i]
            )));
        }
    }
    let column_names: Vec<String> = header[RESERVED_COLUMNS.len()..].to_vec();
    {
        let mut seen = std::collections::HashSet::new();
        for name in &header {
            if !seen.insert(name.as_str()) {
                return Err(Error::Format(format!("duplicate column name {name:?}")));
            }
        }
    }

    let mut table = FeatureTable::empty(column_names);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields = split_record(line, line_no)?;
        if fields.len() != header.len() {
            return Err(Error::Format(format!(
                "line {line_no}: {} fields, header has {}",
                fields.len(),
                header.len()
            )));
        }
        table.specimen_ids.push(fields[0].clone());
        table.layer_indices.push(fields[1].parse().map_err(|e| {
            Error::Format(format!("line {line_no}: bad layer_index {:?}: {e}", fields[1]))
        })?);
        table.labels.push(Condition::parse(&fields[2])?);
        table.provenance.push(Provenance::parse(&fields[3])?);
        let mut row = Vec::with_capacity(header.len() - RESERVED_COLUMNS.len());
        for field in &fields[RESERVED_COLUMNS.len()..] {
            let v: f64 = field.parse().map_err(|e| {
                Error::Format(format!("line {line_no}: bad float {field:?}: {e}"))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "line {line_no}: non-finite value {field:?}"
                )));
            }
            row.push(v);
        }
        table.rows.push(row);
    }
    table
        .validate()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(table)
}
