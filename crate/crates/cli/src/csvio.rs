//! Matrix CSV input and report CSV output.
//!
//! Matrices start with a `rows=R,cols=C` line followed by `R` lines of `C`
//! numbers; lines beginning with `#` are ignored. Reports are a block of
//! `#` metadata lines followed by an ordinary CSV table.

use std::path::Path;

use crate::error::{CliError, CliResult};

fn parse_dim(field: Option<&str>, key: &str, name: &str) -> CliResult<usize> {
    let text = field.ok_or_else(|| CliError::schema(format!("{name}: header must be `rows=R,cols=C`")))?;
    let value = text
        .trim()
        .strip_prefix(key)
        .and_then(|v| v.trim_start().strip_prefix('='))
        .ok_or_else(|| CliError::schema(format!("{name}: expected `{key}=...` in the header, found `{text}`")))?;
    value
        .trim()
        .parse()
        .map_err(|_| CliError::schema(format!("{name}: `{text}` is not a dimension")))
}

/// Parses a matrix from CSV text. Errors name the offending line and column.
pub fn parse_matrix(text: &str, name: &str) -> CliResult<(usize, usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| CliError::schema(format!("{name}: empty matrix file")))?
        .map_err(|e| CliError::schema(format!("{name}: {e}")))?;
    let rows = parse_dim(header.get(0), "rows", name)?;
    let cols = parse_dim(header.get(1), "cols", name)?;
    if rows == 0 || cols == 0 {
        return Err(CliError::schema(format!("{name}: empty matrix ({rows}x{cols})")));
    }
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for record in records {
        let record = record.map_err(|e| CliError::schema(format!("{name}: {e}")))?;
        if seen == rows {
            return Err(CliError::schema(format!("{name}: more than the declared {rows} rows")));
        }
        if record.len() != cols {
            return Err(CliError::schema(format!("{name}: row {seen} has {} values, expected {cols}", record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field
                .parse()
                .map_err(|_| CliError::schema(format!("{name}: cell ({seen}, {j}) = `{field}` is not a number")))?;
            data.push(value);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(CliError::schema(format!("{name}: declared {rows} rows but found {seen}")));
    }
    Ok((rows, cols, data))
}

pub fn read_matrix(path: &Path) -> CliResult<(usize, usize, Vec<f64>)> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::schema(format!("{name}: {e}")))?;
    parse_matrix(&text, &name)
}

/// A CSV table with a `#` metadata preamble.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    meta: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), ..Self::default() }
    }

    pub fn set_header(&mut self, header: Vec<String>) {
        self.header = header;
    }

    pub fn set_header_str(&mut self, header: &[&str]) {
        self.header = header.iter().map(|s| s.to_string()).collect();
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) {
        self.meta.push(format!("{key}: {value}"));
    }

    /// Echoes a multi-line block (such as a configuration) line by line.
    pub fn meta_block(&mut self, text: &str) {
        self.meta.extend(text.lines().map(str::to_string));
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.meta {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(&self.header).expect("writing to memory");
        for row in &self.rows {
            writer.write_record(row).expect("writing to memory");
        }
        let bytes = writer.into_inner().expect("flushing to memory");
        out.push_str(&String::from_utf8(bytes).expect("CSV fields are UTF-8"));
        out
    }
}
