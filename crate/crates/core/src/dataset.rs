use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Training inputs `X` (`N x d`), targets `Y` (`N x m`) and optional class structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
    /// Class embedding `Z` (`m x m`, full rank); row `j` is the target of class `j`.
    pub embedding: Option<DMatrix<f64>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::structure(format!(
                "X has {} rows, Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(Dataset {
            x,
            y,
            labels: None,
            embedding: None,
        })
    }

    /// Targets `Y_i = Z_{label_i}`.
    pub fn classification(x: DMatrix<f64>, labels: Vec<usize>, embedding: DMatrix<f64>) -> Result<Self> {
        let m = embedding.nrows();
        if embedding.ncols() != m {
            return Err(Error::structure("class embedding must be square"));
        }
        if labels.len() != x.nrows() {
            return Err(Error::structure(format!(
                "{} labels for {} samples",
                labels.len(),
                x.nrows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= m) {
            return Err(Error::structure(format!("label {bad} >= number of classes {m}")));
        }
        let rank = embedding.clone().rank(1e-12 * embedding.norm().max(1.0));
        if rank != m {
            return Err(Error::Assumption(format!("class embedding has rank {rank} < {m}")));
        }
        let y = DMatrix::from_fn(x.nrows(), m, |i, j| embedding[(labels[i], j)]);
        Ok(Dataset {
            x,
            y,
            labels: Some(labels),
            embedding: Some(embedding),
        })
    }

    /// One-hot targets (`Z = I_m`).
    pub fn one_hot(x: DMatrix<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        Self::classification(x, labels, DMatrix::identity(classes, classes))
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn classes(&self) -> Option<usize> {
        self.embedding.as_ref().map(|z| z.nrows())
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            x: self.x.rows(0, n).into_owned(),
            y: self.y.rows(0, n).into_owned(),
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
            embedding: self.embedding.clone(),
        }
    }

    /// Samples `start..start + n`.
    pub fn slice(&self, start: usize, n: usize) -> Dataset {
        let start = start.min(self.len());
        let n = n.min(self.len() - start);
        Dataset {
            x: self.x.rows(start, n).into_owned(),
            y: self.y.rows(start, n).into_owned(),
            labels: self.labels.as_ref().map(|l| l[start..start + n].to_vec()),
            embedding: self.embedding.clone(),
        }
    }

    pub fn with_inputs(&self, x: DMatrix<f64>) -> Dataset {
        Dataset {
            x,
            ..self.clone()
        }
    }
}
