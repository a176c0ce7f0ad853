use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use tempfile::NamedTempFile;

use crate::{CliResult, Failure};

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

/// Writes through a temporary file in the target directory, renamed into
/// place once complete.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> CliResult) -> CliResult {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir).map_err(|e| io_failure(path, e))?;
    let mut out = BufWriter::new(tmp);
    f(&mut out)?;
    let tmp = out.into_inner().map_err(|e| io_failure(path, e.error()))?;
    tmp.as_file().sync_all().map_err(|e| io_failure(path, e))?;
    tmp.persist(path).map_err(|e| io_failure(path, e.error))?;
    Ok(())
}

pub fn write_string(path: &Path, s: &str) -> CliResult {
    write_atomic(path, |w| w.write_all(s.as_bytes()).map_err(|e| io_failure(path, e)))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| io_failure(path, e))
}

/// Documents of a plain text file, separated by blank lines.
pub fn read_text_documents(path: &Path) -> CliResult<Vec<String>> {
    let file = std::fs::File::open(path).map_err(|e| io_failure(path, e))?;
    let mut docs = Vec::new();
    let mut current = String::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| io_failure(path, e))?;
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(std::mem::take(&mut current));
            }
        } else {
            if !current.is_empty() {
                current.push('\n');
            }
            current.push_str(&line);
        }
    }
    if !current.is_empty() {
        docs.push(current);
    }
    Ok(docs)
}

pub fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| io_failure(path, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_string(&p, "first").unwrap();
        write_string(&p, "second").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "second");
        let failed = write_atomic(&p, |w| {
            w.write_all(b"partial").unwrap();
            Err(Failure::Data("boom".into()))
        });
        assert!(failed.is_err());
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn text_documents_split_on_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("in.txt");
        std::fs::write(&p, "a b\nc\n\n\n  \nd\n").unwrap();
        assert_eq!(read_text_documents(&p).unwrap(), ["a b\nc", "d"]);
    }
}
