//! Numeric CSV tables with a fixed header, shared by the curve, parameter,
//! profile and HPPC readers.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub(crate) struct Row {
    pub line: u64,
    pub values: Vec<f64>,
}

pub(crate) fn read_path(path: &Path, header: &[&str]) -> Result<Vec<Row>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read(file, path, header)
}

pub(crate) fn read<R: Read>(reader: R, path: &Path, header: &[&str]) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let found: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(header.len());
        for (field, name) in record.iter().zip(header) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("column `{name}`: `{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("column `{name}` is not finite"),
                });
            }
            values.push(v);
        }
        rows.push(Row { line, values });
    }
    Ok(rows)
}

/// Column-major view of parsed rows.
pub(crate) fn columns(rows: &[Row], n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|c| rows.iter().map(|r| r.values[c]).collect())
        .collect()
}

pub(crate) fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_columns<W: Write>(
    mut out: W,
    header: &[&str],
    columns: &[&[f64]],
    path: &Path,
) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    let mut body = String::with_capacity(n * 16 * header.len());
    body.push_str(&header.join(","));
    body.push('\n');
    for r in 0..n {
        for (c, col) in columns.iter().enumerate() {
            if c > 0 {
                body.push(',');
            }
            body.push_str(&col[r].to_string());
        }
        body.push('\n');
    }
    out.write_all(body.as_bytes()).map_err(io_err(path))
}

pub(crate) fn embedded(name: &str) -> PathBuf {
    PathBuf::from(format!("<embedded {name}>"))
}
