//! Compound library files: one `<SMILES><TAB><id>` record per line, `#`
//! comments, unique ids.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibraryRecord {
    pub smiles: String,
    pub id: String,
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("line {line}: expected '<SMILES>\\t<id>'")]
    Malformed { line: usize },
    #[error("line {line}: duplicate compound id '{id}'")]
    DuplicateId { line: usize, id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_library<R: BufRead>(reader: R) -> Result<Vec<LibraryRecord>, LibraryError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.splitn(2, '\t');
        let smiles = parts.next().unwrap_or("").trim();
        let id = parts.next().unwrap_or("").trim();
        if smiles.is_empty() || id.is_empty() {
            return Err(LibraryError::Malformed { line: line_no });
        }
        if !seen.insert(id.to_string()) {
            return Err(LibraryError::DuplicateId { line: line_no, id: id.to_string() });
        }
        out.push(LibraryRecord { smiles: smiles.to_string(), id: id.to_string() });
    }
    Ok(out)
}

pub fn write_library<W: Write>(mut w: W, records: &[LibraryRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}\t{}", r.smiles, r.id)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_records_and_skips_comments() {
        let text = "# header\nCCO\tethanol\n\nc1ccccc1\tbenzene\n";
        let lib = read_library(text.as_bytes()).unwrap();
        assert_eq!(lib.len(), 2);
        assert_eq!(lib[1].id, "benzene");
    }

    #[test]
    fn rejects_duplicates_and_malformed() {
        assert!(matches!(read_library("C\ta\nCC\ta\n".as_bytes()), Err(LibraryError::DuplicateId { line: 2, .. })));
        assert!(matches!(read_library("CCO\n".as_bytes()), Err(LibraryError::Malformed { line: 1 })));
    }
}
