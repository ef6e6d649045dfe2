use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};

/// Word embeddings with unit-length rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: DMatrix<f64>,
}

impl EmbeddingTable {
    /// Rows are L2-normalized; zero rows are left as zeros.
    pub fn new(words: Vec<String>, mut matrix: DMatrix<f64>) -> Result<Self> {
        if words.len() != matrix.nrows() {
            return Err(Error::format(
                "embedding table",
                format!("{} words for {} rows", words.len(), matrix.nrows()),
            ));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::format("embedding table", format!("duplicate word {w:?}")));
            }
        }
        for mut row in matrix.row_iter_mut() {
            let n = row.norm();
            if n > 0.0 {
                row /= n;
            }
        }
        Ok(EmbeddingTable { words, index, matrix })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, word: &str) -> Option<RowDVector<f64>> {
        self.index_of(word).map(|i| self.matrix.row(i).into_owned())
    }

    /// Right-multiplies every row by `w` and renormalizes.
    pub fn mapped(&self, w: &DMatrix<f64>) -> Result<Self> {
        if w.nrows() != self.dim() || w.ncols() != self.dim() {
            return Err(Error::ShapeMismatch {
                name: "embedding map".into(),
                expected: vec![self.dim(), self.dim()],
                got: vec![w.nrows(), w.ncols()],
            });
        }
        EmbeddingTable::new(self.words.clone(), &self.matrix * w)
    }

    /// Text format: a "count dim" header, then "word v1 ... vd" per line.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format("embeddings", "missing header"))?;
        let mut it = header.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(count)), Some(Ok(dim)), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::format("embeddings", format!("bad header {header:?}")));
        };
        let mut words = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for (n, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let mut fields = line.split_whitespace();
            let word = fields.next().unwrap_or_default();
            let before = data.len();
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::format("embeddings", format!("line {}: bad value {f:?}", n + 2)))?;
                data.push(v);
            }
            if data.len() - before != dim {
                return Err(Error::format(
                    "embeddings",
                    format!("line {}: expected {dim} values, got {}", n + 2, data.len() - before),
                ));
            }
            words.push(word.to_owned());
        }
        if words.len() != count {
            return Err(Error::format("embeddings", format!("header says {count} rows, found {}", words.len())));
        }
        EmbeddingTable::new(words, DMatrix::from_row_slice(count, dim, &data))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.len(), self.dim());
        for (i, w) in self.words.iter().enumerate() {
            s.push_str(w);
            for v in self.matrix.row(i).iter() {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }
}
