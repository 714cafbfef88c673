//! Bit-exact file formats.
//!
//! Signal matrices travel as flat CSV: line 1 declares the kind
//! (`#kind=Reference`), further `#key=value` comment lines may follow
//! (config hash, column labels), then a header `model_id,<record_id>,...`
//! and one row per model. Losses are printed as the shortest decimal that
//! round-trips to the same f64, so a rerun with equal inputs produces
//! byte-identical files. Membership bits, when present, live in a
//! companion `<name>.membership.csv` with an identical header.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::core::{MatrixKind, SignalMatrix};
use crate::error::{Error, Result};
use crate::signals::OutWorldSet;

fn schema(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Companion file holding 0/1 membership cells for `path`.
pub fn membership_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("matrix");
    path.with_file_name(format!("{stem}.membership.csv"))
}

fn header_line(matrix: &SignalMatrix) -> String {
    let mut line = String::from("model_id");
    for rid in matrix.record_ids() {
        let _ = write!(line, ",{rid}");
    }
    line
}

/// Writes `set` to `path`, plus the membership companion when bits are
/// present. `config_hash` lands in a `#config=` comment so outputs are
/// traceable to the configuration that produced them.
pub fn write_matrix_csv(set: &OutWorldSet, path: &Path, config_hash: Option<&str>) -> Result<()> {
    set.validate()?;
    let matrix = &set.matrix;
    let header = header_line(matrix);

    let mut text = format!("#kind={}\n", set.kind.as_str());
    if let Some(hash) = config_hash {
        let _ = writeln!(text, "#config={hash}");
    }
    if !set.labels.is_empty() {
        let joined: Vec<String> = set.labels.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(text, "#labels={}", joined.join(","));
    }
    text.push_str(&header);
    text.push('\n');
    for (i, model_id) in matrix.model_ids().iter().enumerate() {
        text.push_str(model_id);
        for v in matrix.row(i) {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;

    if let Some(bits) = matrix.membership() {
        let mut companion = format!("#kind={}\n", set.kind.as_str());
        if let Some(hash) = config_hash {
            let _ = writeln!(companion, "#config={hash}");
        }
        companion.push_str(&header);
        companion.push('\n');
        let w = matrix.n_records();
        for (i, model_id) in matrix.model_ids().iter().enumerate() {
            companion.push_str(model_id);
            for &b in &bits[i * w..(i + 1) * w] {
                let _ = write!(companion, ",{b}");
            }
            companion.push('\n');
        }
        std::fs::write(membership_path(path), companion)?;
    }
    Ok(())
}

struct RawTable {
    /// `#key=value` comment values, in file order.
    comments: Vec<(String, String)>,
    header_line_no: usize,
    header: String,
    /// (line number, all fields) per data row.
    rows: Vec<(usize, Vec<String>)>,
}

/// Parses the comment block, single header, and data rows shared by every
/// CSV this crate emits. Field interpretation is left to the caller.
fn read_raw(path: &Path) -> Result<RawTable> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::invalid(format!("cannot read {}: {e}", path.display()))
    })?;
    let mut comments = Vec::new();
    let mut header: Option<(usize, String)> = None;
    let mut rows = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if header.is_some() {
                return Err(schema(path, line_no, "comment after the header line"));
            }
            let (key, value) = comment
                .split_once('=')
                .ok_or_else(|| schema(path, line_no, format!("comment \"{line}\" is not #key=value")))?;
            comments.push((key.to_string(), value.to_string()));
            continue;
        }
        if header.is_none() {
            header = Some((line_no, line.to_string()));
            continue;
        }
        rows.push((line_no, line.split(',').map(str::to_string).collect::<Vec<String>>()));
    }

    let (header_line_no, header) =
        header.ok_or_else(|| schema(path, text.lines().count().max(1), "missing header line"))?;
    Ok(RawTable {
        comments,
        header_line_no,
        header,
        rows,
    })
}

struct MatrixTable {
    raw: RawTable,
    record_ids: Vec<u64>,
    /// (line number, model id, cell strings) per data row.
    rows: Vec<(usize, String, Vec<String>)>,
}

/// Applies the matrix-CSV shape rules on top of [`read_raw`]: a
/// `model_id,<record_id>,...` header, at least one row, a full row width.
fn read_matrix_raw(path: &Path) -> Result<MatrixTable> {
    let raw = read_raw(path)?;
    let mut cols = raw.header.split(',');
    if cols.next() != Some("model_id") {
        return Err(schema(path, raw.header_line_no, "header must start with \"model_id\""));
    }
    let mut record_ids = Vec::new();
    for col in cols {
        let rid: u64 = col.parse().map_err(|_| {
            schema(path, raw.header_line_no, format!("record id \"{col}\" is not an unsigned integer"))
        })?;
        record_ids.push(rid);
    }
    if raw.rows.is_empty() {
        return Err(schema(path, raw.header_line_no, "no model rows after the header"));
    }
    let mut rows = Vec::with_capacity(raw.rows.len());
    for (line_no, mut fields) in raw.rows.clone() {
        let model_id = if fields.is_empty() { String::new() } else { fields.remove(0) };
        if model_id.is_empty() {
            return Err(schema(path, line_no, "empty model id"));
        }
        if fields.len() != record_ids.len() {
            return Err(schema(
                path,
                line_no,
                format!("{} cells for {} record columns", fields.len(), record_ids.len()),
            ));
        }
        rows.push((line_no, model_id, fields));
    }
    Ok(MatrixTable {
        raw,
        record_ids,
        rows,
    })
}

/// Reads a signal matrix CSV (and its membership companion, if one sits
/// next to it). Files written by foreign tools carry no `#labels` comment;
/// their labels default to zero and the set carries no model metadata.
pub fn read_matrix_csv(path: &Path) -> Result<OutWorldSet> {
    let table = read_matrix_raw(path)?;
    let (first_key, first_value) = table
        .raw
        .comments
        .first()
        .ok_or_else(|| schema(path, 1, "first line must be #kind=<matrix kind>"))?;
    if first_key != "kind" {
        return Err(schema(path, 1, "first line must be #kind=<matrix kind>"));
    }
    let kind = MatrixKind::parse(first_value)
        .ok_or_else(|| schema(path, 1, format!("unknown matrix kind \"{first_value}\"")))?;

    let mut labels = vec![0usize; table.record_ids.len()];
    for (key, value) in &table.raw.comments[1..] {
        if key == "labels" {
            let parsed: std::result::Result<Vec<usize>, _> =
                value.split(',').map(str::parse).collect();
            labels = parsed.map_err(|_| {
                schema(path, 2, format!("labels comment \"{value}\" is not a comma list of integers"))
            })?;
            if labels.len() != table.record_ids.len() {
                return Err(schema(
                    path,
                    2,
                    format!("{} labels for {} record columns", labels.len(), table.record_ids.len()),
                ));
            }
        }
    }

    let mut model_ids = Vec::with_capacity(table.rows.len());
    let mut values = Vec::with_capacity(table.rows.len() * table.record_ids.len());
    for (line_no, model_id, cells) in &table.rows {
        model_ids.push(model_id.clone());
        for cell in cells {
            let v: f64 = cell.parse().map_err(|_| {
                schema(path, *line_no, format!("cell \"{cell}\" is not a number"))
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(schema(
                    path,
                    *line_no,
                    format!("loss {v} is not finite and non-negative"),
                ));
            }
            values.push(v);
        }
    }
    let mut matrix = SignalMatrix::new(model_ids, table.record_ids, values)?;

    let companion = membership_path(path);
    if companion != path && companion.exists() {
        let bits_table = read_matrix_raw(&companion)?;
        if bits_table.raw.header != table.raw.header {
            return Err(schema(&companion, 1, "membership header differs from the matrix header"));
        }
        let mut bits = Vec::with_capacity(matrix.n_models() * matrix.n_records());
        for ((line_no, model_id, cells), main_id) in
            bits_table.rows.iter().zip(matrix.model_ids())
        {
            if model_id != main_id {
                return Err(schema(
                    &companion,
                    *line_no,
                    format!("model id \"{model_id}\" does not match matrix row \"{main_id}\""),
                ));
            }
            for cell in cells {
                match cell.as_str() {
                    "0" => bits.push(0),
                    "1" => bits.push(1),
                    other => {
                        return Err(schema(
                            &companion,
                            *line_no,
                            format!("membership cell \"{other}\" is not 0 or 1"),
                        ))
                    }
                }
            }
        }
        if bits_table.rows.len() != matrix.n_models() {
            return Err(schema(
                &companion,
                1,
                format!("{} rows for {} matrix models", bits_table.rows.len(), matrix.n_models()),
            ));
        }
        matrix = matrix.with_membership(bits)?;
    }

    let set = OutWorldSet {
        kind,
        matrix,
        models: Vec::new(),
        labels,
        target_presence: None,
    };
    set.validate()?;
    Ok(set)
}

/// Writes a generic report CSV: comment lines, one header, data rows.
/// Single choke point so every output shares line endings and number
/// formatting, keeping reruns byte-identical.
pub fn write_table(
    path: &Path,
    comments: &[(&str, String)],
    header: &str,
    rows: &[String],
) -> Result<()> {
    let mut text = String::new();
    for (key, value) in comments {
        let _ = writeln!(text, "#{key}={value}");
    }
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Re-ingestion check run over every emitted CSV: comments only at the
/// top, a single header, and a consistent field count on every row.
pub fn check_csv(path: &Path) -> Result<()> {
    let raw = read_raw(path)?;
    let width = raw.header.split(',').count();
    for (line_no, fields) in &raw.rows {
        if fields.len() != width {
            return Err(schema(
                path,
                *line_no,
                format!("{} fields for a {}-column header", fields.len(), width),
            ));
        }
    }
    Ok(())
}
