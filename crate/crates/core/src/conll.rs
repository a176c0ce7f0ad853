//! Column files: one token per line, whitespace- or tab-separated columns,
//! blank lines between documents. A line whose first column is `-DOCSTART-`
//! also ends the current document.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ColumnDocument {
    pub rows: Vec<Vec<String>>,
    /// 1-based line number of each row, for diagnostics.
    pub lines: Vec<usize>,
}

impl ColumnDocument {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, idx: usize) -> Vec<&str> {
        self.rows.iter().map(|r| r[idx].as_str()).collect()
    }

    pub fn last_column(&self, from_end: usize) -> Vec<&str> {
        self.rows.iter().map(|r| r[r.len() - 1 - from_end].as_str()).collect()
    }
}

fn split_columns(line: &str) -> Vec<String> {
    if line.contains('\t') {
        line.split('\t').map(str::to_string).collect()
    } else {
        line.split_whitespace().map(str::to_string).collect()
    }
}

/// Reads documents, requiring every row to have exactly `columns` fields when
/// given.
pub fn read_columns(reader: impl BufRead, columns: Option<usize>) -> Result<Vec<ColumnDocument>> {
    let mut docs = Vec::new();
    let mut current = ColumnDocument::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(std::mem::take(&mut current));
            }
            continue;
        }
        let fields = split_columns(line);
        if fields.first().map(String::as_str) == Some("-DOCSTART-") {
            if !current.is_empty() {
                docs.push(std::mem::take(&mut current));
            }
            continue;
        }
        if let Some(n) = columns {
            if fields.len() != n {
                return Err(Error::parse(
                    lineno,
                    format!("expected {n} columns, found {}: {line:?}", fields.len()),
                ));
            }
        }
        if fields.iter().any(String::is_empty) {
            return Err(Error::parse(lineno, format!("empty column in {line:?}")));
        }
        current.rows.push(fields);
        current.lines.push(lineno);
    }
    if !current.is_empty() {
        docs.push(current);
    }
    Ok(docs)
}

pub fn read_columns_file(path: impl AsRef<Path>, columns: Option<usize>) -> Result<Vec<ColumnDocument>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_columns(std::io::BufReader::new(file), columns)
}

/// Writes documents as tab-separated rows with a blank line after each.
pub fn write_columns<R, C>(mut out: impl Write, docs: impl IntoIterator<Item = R>) -> std::io::Result<()>
where
    R: IntoIterator<Item = C>,
    C: IntoIterator,
    C::Item: AsRef<str>,
{
    for doc in docs {
        for row in doc {
            let mut first = true;
            for field in row {
                if !first {
                    out.write_all(b"\t")?;
                }
                out.write_all(field.as_ref().as_bytes())?;
                first = false;
            }
            out.write_all(b"\n")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}
