//! Precomputed emission scores supplied by an outside encoder.
//!
//! Line-delimited text. The first record declares the tag columns:
//!
//! ```text
//! #tags<TAB>K<TAB>tag_0<TAB>...<TAB>tag_{K-1}
//! ```
//!
//! Every following non-empty line holds one document:
//!
//! ```text
//! doc_id<TAB>n<TAB>s_0 s_1 ... s_{n*K-1}
//! ```
//!
//! with the `n × K` scores in row-major order (one row per pre-token),
//! space-separated decimal numbers.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tagscheme::TagSet;

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEmissions {
    pub tags: Vec<String>,
    pub docs: Vec<(String, Matrix)>,
    index: HashMap<String, usize>,
}

impl ExternalEmissions {
    pub fn new(tags: Vec<String>, docs: Vec<(String, Matrix)>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, (id, m)) in docs.iter().enumerate() {
            if m.cols() != tags.len() {
                return Err(Error::shape(format!(
                    "document {id:?} has {} score columns, header declares {}",
                    m.cols(),
                    tags.len()
                )));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate document id {id:?}")));
            }
        }
        Ok(ExternalEmissions { tags, docs, index })
    }

    pub fn get(&self, id: &str) -> Option<&Matrix> {
        self.index.get(id).map(|&i| &self.docs[i].1)
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing #tags header"))?;
        let header = header.map_err(|e| Error::parse(1, e.to_string()))?;
        let fields: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
        if fields.first() != Some(&"#tags") || fields.len() < 2 {
            return Err(Error::parse(1, "header must start with #tags<TAB>K"));
        }
        let k: usize = fields[1]
            .parse()
            .map_err(|_| Error::parse(1, format!("bad tag count {:?}", fields[1])))?;
        let tags: Vec<String> = fields[2..].iter().map(|s| s.to_string()).collect();
        if tags.len() != k || k == 0 {
            return Err(Error::parse(1, format!("header declares {k} tags but lists {}", tags.len())));
        }

        let mut docs = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let id = parts.next().unwrap_or_default().to_string();
            let n: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(lineno, "expected doc_id<TAB>n<TAB>scores"))?;
            let scores = parts.next().unwrap_or("");
            let values = scores
                .split_ascii_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(lineno, format!("bad score: {e}")))?;
            if values.len() != n * k {
                return Err(Error::parse(
                    lineno,
                    format!("document {id:?}: expected {} scores, found {}", n * k, values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(lineno, format!("document {id:?}: non-finite score")));
            }
            docs.push((id, Matrix::from_vec(n, k, values).expect("length checked")));
        }
        ExternalEmissions::new(tags, docs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        ExternalEmissions::read(std::io::BufReader::new(file))
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        write!(out, "#tags\t{}", self.tags.len())?;
        for t in &self.tags {
            write!(out, "\t{t}")?;
        }
        writeln!(out)?;
        for (id, m) in &self.docs {
            write!(out, "{id}\t{}\t", m.rows())?;
            let mut first = true;
            for v in m.as_slice() {
                if !first {
                    write!(out, " ")?;
                }
                write!(out, "{v}")?;
                first = false;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reorders score columns to follow `ts`. The header must name exactly
    /// the tags of `ts`, in any order.
    pub fn aligned_to(&self, ts: &TagSet) -> Result<ExternalEmissions> {
        if self.tags.len() != ts.len() {
            return Err(Error::Data(format!(
                "emission file has {} tags, model has {}",
                self.tags.len(),
                ts.len()
            )));
        }
        let mut perm = vec![usize::MAX; ts.len()];
        for (col, name) in self.tags.iter().enumerate() {
            let target = ts.index(name)?;
            if perm[target] != usize::MAX {
                return Err(Error::Data(format!("tag {name:?} listed twice")));
            }
            perm[target] = col;
        }
        let docs = self
            .docs
            .iter()
            .map(|(id, m)| {
                let mut out = Matrix::zeros(m.rows(), m.cols());
                for r in 0..m.rows() {
                    for (t, &src) in perm.iter().enumerate() {
                        out[(r, t)] = m[(r, src)];
                    }
                }
                (id.clone(), out)
            })
            .collect();
        ExternalEmissions::new(ts.names().to_vec(), docs)
    }
}
