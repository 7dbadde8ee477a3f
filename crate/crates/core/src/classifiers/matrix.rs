use crate::tfidf::SparseVector;
use crate::{Error, Result};

/// Row-major feature matrix: dense for document embeddings, sparse for
/// TF-IDF vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMatrix {
    Dense { dim: usize, data: Vec<f64> },
    Sparse { dim: usize, rows: Vec<SparseVector> },
}

#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse(&'a SparseVector),
}

impl<'a> Row<'a> {
    pub fn dim(&self) -> usize {
        match self {
            Row::Dense(x) => x.len(),
            Row::Sparse(s) => s.dim,
        }
    }

    pub fn get(&self, j: usize) -> f64 {
        match self {
            Row::Dense(x) => x[j],
            Row::Sparse(s) => match s.indices.binary_search(&(j as u32)) {
                Ok(p) => s.values[p],
                Err(_) => 0.0,
            },
        }
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        match self {
            Row::Dense(x) => x.iter().zip(w).map(|(a, b)| a * b).sum(),
            Row::Sparse(s) => s.iter().map(|(j, v)| v * w[j]).sum(),
        }
    }

    /// `out += alpha * x`
    pub fn axpy(&self, alpha: f64, out: &mut [f64]) {
        match self {
            Row::Dense(x) => out.iter_mut().zip(x.iter()).for_each(|(o, v)| *o += alpha * v),
            Row::Sparse(s) => s.iter().for_each(|(j, v)| out[j] += alpha * v),
        }
    }

    pub fn nonzeros(&self) -> Box<dyn Iterator<Item = (usize, f64)> + 'a> {
        match *self {
            Row::Dense(x) => Box::new(x.iter().copied().enumerate().filter(|&(_, v)| v != 0.0)),
            Row::Sparse(s) => Box::new(s.iter()),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Row::Dense(x) => x.iter().all(|v| v.is_finite()),
            Row::Sparse(s) => s.values.iter().all(|v| v.is_finite()),
        }
    }
}

impl FeatureMatrix {
    pub fn dense(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::Validation(format!(
                "feature row {i} has dimension {} but row 0 has {dim}",
                r.len()
            )));
        }
        Ok(FeatureMatrix::Dense {
            dim,
            data: rows.concat(),
        })
    }

    pub fn sparse(dim: usize, rows: Vec<SparseVector>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            let sorted = r.indices.windows(2).all(|w| w[0] < w[1]);
            if r.dim != dim || !sorted || r.indices.len() != r.values.len() || r.indices.iter().any(|&j| j as usize >= dim)
            {
                return Err(Error::Validation(format!("sparse feature row {i} is malformed or has wrong dimension")));
            }
        }
        Ok(FeatureMatrix::Sparse { dim, rows })
    }

    pub fn n_rows(&self) -> usize {
        match self {
            FeatureMatrix::Dense { dim, data } => {
                if *dim == 0 {
                    0
                } else {
                    data.len() / dim
                }
            }
            FeatureMatrix::Sparse { rows, .. } => rows.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureMatrix::Dense { dim, .. } | FeatureMatrix::Sparse { dim, .. } => *dim,
        }
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        match self {
            FeatureMatrix::Dense { dim, data } => Row::Dense(&data[i * dim..(i + 1) * dim]),
            FeatureMatrix::Sparse { rows, .. } => Row::Sparse(&rows[i]),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        (0..self.n_rows()).map(|i| self.row(i))
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, FeatureMatrix::Sparse { .. })
    }

    /// Subset of rows in the given order.
    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        match self {
            FeatureMatrix::Dense { dim, data } => FeatureMatrix::Dense {
                dim: *dim,
                data: idx.iter().flat_map(|&i| data[i * dim..(i + 1) * dim].iter().copied()).collect(),
            },
            FeatureMatrix::Sparse { dim, rows } => FeatureMatrix::Sparse {
                dim: *dim,
                rows: idx.iter().map(|&i| rows[i].clone()).collect(),
            },
        }
    }
}

/// Per-feature stored entries sorted by value, for split search. Dense
/// matrices store every entry; sparse matrices store only non-zeros and
/// treat the rest as implicit zeros.
pub(crate) struct Columns {
    pub cols: Vec<Vec<(f64, u32)>>,
    pub implicit_zeros: bool,
}

impl Columns {
    pub fn new(x: &FeatureMatrix) -> Self {
        let mut cols: Vec<Vec<(f64, u32)>> = vec![Vec::new(); x.dim()];
        let sparse = x.is_sparse();
        for (i, row) in x.rows().enumerate() {
            match row {
                Row::Dense(r) => r.iter().enumerate().for_each(|(j, &v)| cols[j].push((v, i as u32))),
                Row::Sparse(_) => row.nonzeros().for_each(|(j, v)| cols[j].push((v, i as u32))),
            }
        }
        for c in &mut cols {
            c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        Self {
            cols,
            implicit_zeros: sparse,
        }
    }
}
