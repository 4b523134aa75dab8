//! Signal and feature CSV files.
//!
//! Signals: header `time_s,<ch1>,...,<chN>,label`, one row per sample.
//! Features: header `window_start_s,<ch:feature>...,label`, one row per window.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{HdError, Result};
use crate::features::{FeatureMatrix, SignalRecord};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> HdError {
    HdError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HdError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HdError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| HdError::io(path, e))
}

/// Non-empty lines with their 1-based line numbers, CR stripped.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_number(path: &Path, line: usize, cell: &str, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        parse_err(
            path,
            line,
            format!("column {column}: '{cell}' is not a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("column {column}: non-finite value"),
        ));
    }
    Ok(v)
}

fn parse_label(path: &Path, line: usize, cell: &str) -> Result<u8> {
    match cell.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(parse_err(
            path,
            line,
            format!("unknown label value '{other}'"),
        )),
    }
}

struct Table<'a> {
    header: Vec<&'a str>,
    header_line: usize,
    rows: Vec<(usize, Vec<&'a str>)>,
}

fn split_table<'a>(path: &Path, text: &'a str, first: &str) -> Result<Table<'a>> {
    let mut it = lines(text);
    let (header_line, header) = it.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    if header.first() != Some(&first) {
        return Err(parse_err(
            path,
            header_line,
            format!("first column must be '{first}'"),
        ));
    }
    if header.last() != Some(&"label") {
        return Err(parse_err(
            path,
            header_line,
            "missing 'label' column (must be last)",
        ));
    }
    if header.len() < 3 {
        return Err(parse_err(path, header_line, "no data columns"));
    }
    let mut rows = Vec::new();
    for (n, l) in it {
        let cells: Vec<&str> = l.split(',').collect();
        if cells.len() != header.len() {
            return Err(parse_err(
                path,
                n,
                format!("expected {} cells, found {}", header.len(), cells.len()),
            ));
        }
        rows.push((n, cells));
    }
    Ok(Table {
        header,
        header_line,
        rows,
    })
}

fn stem(path: &Path) -> String {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("record");
    name.strip_suffix(".features.csv")
        .or_else(|| name.strip_suffix(".csv"))
        .unwrap_or(name)
        .to_string()
}

fn parent_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .unwrap_or("unknown")
        .to_string()
}

pub fn write_record(record: &SignalRecord, path: &Path) -> Result<()> {
    record.validate()?;
    let mut out = String::with_capacity(record.len() * (record.channels.len() + 2) * 12);
    out.push_str("time_s");
    for c in &record.channels {
        out.push(',');
        out.push_str(c);
    }
    out.push_str(",label\n");
    for t in 0..record.len() {
        let _ = write!(out, "{}", t as f64 / record.fs);
        for ch in &record.samples {
            let _ = write!(out, ",{}", ch[t]);
        }
        let _ = writeln!(out, ",{}", record.labels[t]);
    }
    write_text(path, &out)
}

/// Record ID is the file stem, subject ID the parent directory name; the
/// sampling rate is inferred from the time column.
pub fn read_record(path: &Path) -> Result<SignalRecord> {
    let text = read_text(path)?;
    let table = split_table(path, &text, "time_s")?;
    let n_ch = table.header.len() - 2;
    let channels: Vec<String> = table.header[1..=n_ch]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if let Some(c) = channels.iter().find(|c| c.is_empty()) {
        return Err(parse_err(
            path,
            table.header_line,
            format!("empty channel name '{c}'"),
        ));
    }
    if table.rows.len() < 2 {
        return Err(parse_err(
            path,
            table.header_line,
            "need at least 2 samples to infer the sampling rate",
        ));
    }
    let mut times = Vec::with_capacity(table.rows.len());
    let mut samples = vec![Vec::with_capacity(table.rows.len()); n_ch];
    let mut labels = Vec::with_capacity(table.rows.len());
    for (line, cells) in &table.rows {
        times.push(parse_number(path, *line, cells[0], "time_s")?);
        for (c, cell) in cells[1..=n_ch].iter().enumerate() {
            samples[c].push(parse_number(path, *line, cell, &channels[c])?);
        }
        labels.push(parse_label(path, *line, cells[n_ch + 1])?);
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(parse_err(
            path,
            table.rows[1].0,
            "time column is not increasing",
        ));
    }
    let fs = (((times.len() - 1) as f64 / span) * 1e6).round() / 1e6;
    let record = SignalRecord {
        record_id: stem(path),
        subject_id: parent_name(path),
        fs,
        channels,
        samples,
        labels,
    };
    record.validate()?;
    Ok(record)
}

pub fn write_features(fm: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("window_start_s");
    for c in fm.column_names() {
        out.push(',');
        out.push_str(&c);
    }
    out.push_str(",label\n");
    for w in 0..fm.windows() {
        let _ = write!(out, "{}", fm.window_start_sec[w]);
        for v in fm.row(w) {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", fm.window_labels[w]);
    }
    write_text(path, &out)
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let text = read_text(path)?;
    let table = split_table(path, &text, "window_start_s")?;
    let columns = &table.header[1..table.header.len() - 1];
    let mut channels: Vec<String> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for col in columns {
        let (ch, feat) = col.rsplit_once(':').ok_or_else(|| {
            parse_err(
                path,
                table.header_line,
                format!("column '{col}' is not <channel>:<feature>"),
            )
        })?;
        if channels.last().map(String::as_str) != Some(ch) {
            channels.push(ch.to_string());
        }
        if channels.len() == 1 {
            names.push(feat.to_string());
        }
    }
    let expected: Vec<String> = channels
        .iter()
        .flat_map(|c| names.iter().map(move |f| format!("{c}:{f}")))
        .collect();
    if expected.len() != columns.len() || expected.iter().zip(columns).any(|(a, b)| a != b) {
        return Err(parse_err(
            path,
            table.header_line,
            "feature columns must repeat the same feature list for every channel",
        ));
    }
    let mut starts = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let last = table.header.len() - 1;
    for (line, cells) in &table.rows {
        starts.push(parse_number(path, *line, cells[0], "window_start_s")?);
        for (i, cell) in cells[1..last].iter().enumerate() {
            values.push(parse_number(path, *line, cell, columns[i])?);
        }
        labels.push(parse_label(path, *line, cells[last])?);
    }
    FeatureMatrix::new(
        stem(path),
        parent_name(path),
        channels,
        names,
        values,
        labels,
        starts,
    )
    .map_err(|e| parse_err(path, table.header_line, e.to_string()))
}
