//! Protein embedding file: a `dim=<D>` header line followed by `D`
//! whitespace-separated decimal floats.

use std::io::{BufRead, Write};

use super::ModelError;

pub fn read_protein_embedding<R: BufRead>(reader: R) -> Result<Vec<f64>, ModelError> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(ModelError::ProteinEmbedding("empty file".into())),
        }
    };
    let dim: usize = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| ModelError::ProteinEmbedding(format!("bad header '{header}'")))?;
    let mut values = Vec::with_capacity(dim);
    for line in lines {
        for tok in line?.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| ModelError::ProteinEmbedding(format!("not a number: '{tok}'")))?;
            if !v.is_finite() {
                return Err(ModelError::ProteinEmbedding(format!("non-finite value '{tok}'")));
            }
            values.push(v);
        }
    }
    if values.len() != dim {
        return Err(ModelError::ProteinEmbedding(format!("header says {dim} values, found {}", values.len())));
    }
    Ok(values)
}

pub fn write_protein_embedding<W: Write>(mut w: W, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "dim={}", values.len())?;
    let line: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    writeln!(w, "{}", line.join(" "))
}
