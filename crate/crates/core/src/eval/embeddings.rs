use std::io::{BufRead, Write};

use ndarray::Array2;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Embedding rows for a chosen list of tokens, in request order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub tokens: Vec<String>,
    pub rows: Array2<f64>,
}

pub fn export_embeddings<S: AsRef<str>>(
    params: &ModelParams,
    vocab: &Vocabulary,
    tokens: &[S],
) -> Result<EmbeddingTable> {
    let h = params.embedding.ncols();
    let mut rows = Array2::zeros((tokens.len(), h));
    for (k, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        let id = vocab
            .id(tok)
            .filter(|&id| (id as usize) < params.embedding.nrows())
            .ok_or_else(|| Error::UnknownToken(tok.to_string()))?;
        rows.row_mut(k).assign(&params.embedding.row(id as usize));
    }
    Ok(EmbeddingTable {
        tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        rows,
    })
}

/// TSV with a header line `token d0 d1 ...`, then one row per token.
pub fn write_embedding_tsv<W: Write>(mut writer: W, table: &EmbeddingTable) -> Result<()> {
    write!(writer, "token")?;
    for d in 0..table.rows.ncols() {
        write!(writer, "\td{d}")?;
    }
    writeln!(writer)?;
    for (tok, row) in table.tokens.iter().zip(table.rows.rows()) {
        write!(writer, "{tok}")?;
        for v in row {
            write!(writer, "\t{v}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

pub fn read_embedding_tsv<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let dims = header.split('\t').count() - 1;
    let mut tokens = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 2;
        let mut fields = line.split('\t');
        tokens.push(fields.next().unwrap_or_default().to_string());
        let row: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if row.len() != dims {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {dims} values, found {}", row.len()),
            });
        }
        values.extend(row);
    }
    let rows = Array2::from_shape_vec((tokens.len(), dims), values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(EmbeddingTable { tokens, rows })
}
