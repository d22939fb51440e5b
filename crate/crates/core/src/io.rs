//! Comma-separated matrix files: one header row, one row per subject.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NamedMatrix {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn read_matrix_csv(path: &Path) -> Result<NamedMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text, path)
}

pub(crate) fn parse_matrix_csv(text: &str, path: &Path) -> Result<NamedMatrix> {
    let parse_err = |line: usize, message: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || (names.len() == 1 && names[0].is_empty()) {
        return Err(parse_err(1, "missing header row".into()));
    }
    let width = names.len();
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(parse_err(
                line,
                format!("ragged row: expected {width} fields, found {}", record.len()),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(line, format!("non-numeric cell {cell:?} in column {:?}", names[c]))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    // `data` is row-major.
    let values = DMatrix::from_row_slice(rows, width, &data);
    Ok(NamedMatrix { names, values })
}

pub fn write_matrix_csv(path: &Path, names: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&names.join(","));
    out.push('\n');
    for i in 0..values.nrows() {
        let row: Vec<String> = (0..values.ncols())
            .map(|j| format_f64(values[(i, j)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

/// Shortest representation that parses back to the identical `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Simple CSV builder for the tabular exports.
#[derive(Debug, Default)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_string(&self) -> String {
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        writer.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            writer.write_record(row).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv_string())
    }
}
