//! In-memory annotated expression matrix: observations (cells or spots) by
//! features (genes), with per-observation annotation columns and named
//! low-dimensional embeddings.

use std::collections::HashSet;

use indexmap::IndexMap;

use super::StatsError;

/// Observation-by-feature values, dense row-major or compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Dense {
        n_rows: usize,
        n_cols: usize,
        values: Vec<f32>,
    },
    Csr {
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f32>,
    },
}

impl Expression {
    pub fn dense(n_rows: usize, n_cols: usize, values: Vec<f32>) -> Result<Self, StatsError> {
        if values.len() != n_rows * n_cols {
            return Err(StatsError::Shape(format!(
                "dense matrix {n_rows}x{n_cols} needs {} values, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        Ok(Expression::Dense {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn csr(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f32>,
    ) -> Result<Self, StatsError> {
        if indptr.len() != n_rows + 1 || indptr[0] != 0 {
            return Err(StatsError::Shape("indptr must have n_rows + 1 entries starting at 0".into()));
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != indices.len() {
            return Err(StatsError::Shape("indptr, indices and values disagree".into()));
        }
        for row in 0..n_rows {
            let (start, end) = (indptr[row], indptr[row + 1]);
            if start > end {
                return Err(StatsError::Shape(format!("indptr decreases at row {row}")));
            }
            let cols = &indices[start..end];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(StatsError::Shape(format!(
                    "column indices of row {row} are not strictly increasing"
                )));
            }
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(StatsError::Shape(format!("column index out of range in row {row}")));
            }
        }
        Ok(Expression::Csr {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds a CSR copy of a dense matrix, dropping exact zeros.
    pub fn to_csr(&self) -> Expression {
        match self {
            Expression::Csr { .. } => self.clone(),
            Expression::Dense {
                n_rows,
                n_cols,
                values,
            } => {
                let mut indptr = Vec::with_capacity(n_rows + 1);
                let mut indices = Vec::new();
                let mut nz = Vec::new();
                indptr.push(0);
                for row in values.chunks(*n_cols.max(&1)).take(*n_rows) {
                    for (col, &v) in row.iter().enumerate() {
                        if v != 0.0 {
                            indices.push(col);
                            nz.push(v);
                        }
                    }
                    indptr.push(indices.len());
                }
                // zero-column matrices still need one indptr entry per row
                indptr.resize(n_rows + 1, indices.len());
                Expression::Csr {
                    n_rows: *n_rows,
                    n_cols: *n_cols,
                    indptr,
                    indices,
                    values: nz,
                }
            }
        }
    }

    pub fn to_dense(&self) -> Expression {
        match self {
            Expression::Dense { .. } => self.clone(),
            Expression::Csr { n_rows, n_cols, .. } => {
                let mut values = vec![0.0f32; n_rows * n_cols];
                for row in 0..*n_rows {
                    self.densify_row_into(row, &mut values[row * n_cols..(row + 1) * n_cols]);
                }
                Expression::Dense {
                    n_rows: *n_rows,
                    n_cols: *n_cols,
                    values,
                }
            }
        }
    }

    pub fn n_rows(&self) -> usize {
        match self {
            Expression::Dense { n_rows, .. } | Expression::Csr { n_rows, .. } => *n_rows,
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            Expression::Dense { n_cols, .. } | Expression::Csr { n_cols, .. } => *n_cols,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Expression::Csr { .. })
    }

    /// Value at (row, col); zero for entries absent from a sparse row.
    pub fn get(&self, row: usize, col: usize) -> f32 {
        match self {
            Expression::Dense { n_cols, values, .. } => values[row * n_cols + col],
            Expression::Csr {
                indptr,
                indices,
                values,
                ..
            } => {
                let (start, end) = (indptr[row], indptr[row + 1]);
                match indices[start..end].binary_search(&col) {
                    Ok(pos) => values[start + pos],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Writes row `row` into `out` (length n_cols), zero-filling sparse gaps.
    pub fn densify_row_into(&self, row: usize, out: &mut [f32]) {
        match self {
            Expression::Dense { n_cols, values, .. } => {
                out.copy_from_slice(&values[row * n_cols..(row + 1) * n_cols]);
            }
            Expression::Csr {
                indptr,
                indices,
                values,
                ..
            } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for k in indptr[row]..indptr[row + 1] {
                    out[indices[k]] = values[k];
                }
            }
        }
    }

    /// Stored (row-ordered) non-zero structure of one column. Dense matrices
    /// yield every entry, sparse ones only stored entries.
    pub(crate) fn column_entries(&self, col: usize) -> Vec<(usize, f32)> {
        match self {
            Expression::Dense {
                n_rows,
                n_cols,
                values,
            } => (0..*n_rows).map(|r| (r, values[r * n_cols + col])).collect(),
            Expression::Csr {
                n_rows,
                indptr,
                indices,
                values,
                ..
            } => (0..*n_rows)
                .filter_map(|r| {
                    let (start, end) = (indptr[r], indptr[r + 1]);
                    indices[start..end]
                        .binary_search(&col)
                        .ok()
                        .map(|pos| (r, values[start + pos]))
                })
                .collect(),
        }
    }
}

/// A per-observation annotation column.
#[derive(Debug, Clone, PartialEq)]
pub enum ObsColumn {
    Categorical { codes: Vec<i32>, categories: Vec<String> },
    Numeric(Vec<f32>),
}

impl ObsColumn {
    pub fn categorical<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut categories: Vec<String> = Vec::new();
        let codes = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                match categories.iter().position(|c| c == l) {
                    Some(i) => i as i32,
                    None => {
                        categories.push(l.to_string());
                        (categories.len() - 1) as i32
                    }
                }
            })
            .collect();
        ObsColumn::Categorical { codes, categories }
    }

    pub fn len(&self) -> usize {
        match self {
            ObsColumn::Categorical { codes, .. } => codes.len(),
            ObsColumn::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, ObsColumn::Categorical { .. })
    }
}

/// Row-major n_obs x dim coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub dim: usize,
    pub values: Vec<f32>,
}

impl Embedding {
    pub fn new(dim: usize, values: Vec<f32>) -> Self {
        Embedding { dim, values }
    }

    pub fn n_rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedMatrix {
    pub x: Expression,
    pub obs_ids: Vec<String>,
    pub var_ids: Vec<String>,
    pub obs_columns: IndexMap<String, ObsColumn>,
    pub embeddings: IndexMap<String, Embedding>,
}

impl AnnotatedMatrix {
    pub fn new(x: Expression, obs_ids: Vec<String>, var_ids: Vec<String>) -> Result<Self, StatsError> {
        let am = AnnotatedMatrix {
            x,
            obs_ids,
            var_ids,
            obs_columns: IndexMap::new(),
            embeddings: IndexMap::new(),
        };
        am.check()?;
        Ok(am)
    }

    pub fn with_obs(mut self, name: &str, column: ObsColumn) -> Result<Self, StatsError> {
        self.add_obs(name, column)?;
        Ok(self)
    }

    pub fn with_embedding(mut self, name: &str, embedding: Embedding) -> Result<Self, StatsError> {
        self.add_embedding(name, embedding)?;
        Ok(self)
    }

    pub fn add_obs(&mut self, name: &str, column: ObsColumn) -> Result<(), StatsError> {
        if column.len() != self.n_obs() {
            return Err(StatsError::Shape(format!(
                "obs column {name:?} has {} entries, expected {}",
                column.len(),
                self.n_obs()
            )));
        }
        if let ObsColumn::Categorical { codes, categories } = &column {
            if codes.iter().any(|&c| c < 0 || c as usize >= categories.len()) {
                return Err(StatsError::Shape(format!(
                    "obs column {name:?} has codes outside [0, {})",
                    categories.len()
                )));
            }
        }
        self.obs_columns.insert(name.to_string(), column);
        Ok(())
    }

    pub fn add_embedding(&mut self, name: &str, embedding: Embedding) -> Result<(), StatsError> {
        if embedding.dim == 0 || embedding.values.len() != embedding.dim * self.n_obs() {
            return Err(StatsError::Shape(format!(
                "embedding {name:?} must be {} x dim with dim >= 1",
                self.n_obs()
            )));
        }
        self.embeddings.insert(name.to_string(), embedding);
        Ok(())
    }

    fn check(&self) -> Result<(), StatsError> {
        if self.obs_ids.len() != self.x.n_rows() || self.var_ids.len() != self.x.n_cols() {
            return Err(StatsError::Shape(format!(
                "ids ({} obs, {} var) do not match matrix {}x{}",
                self.obs_ids.len(),
                self.var_ids.len(),
                self.x.n_rows(),
                self.x.n_cols()
            )));
        }
        for (what, ids) in [("obs", &self.obs_ids), ("var", &self.var_ids)] {
            let mut seen = HashSet::new();
            if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(StatsError::Shape(format!("duplicate {what} id {dup:?}")));
            }
        }
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.x.n_rows()
    }

    pub fn n_var(&self) -> usize {
        self.x.n_cols()
    }

    pub fn feature_index(&self, feature: &str) -> Option<usize> {
        self.var_ids.iter().position(|v| v == feature)
    }

    pub fn has_feature(&self, feature: &str) -> bool {
        self.feature_index(feature).is_some()
    }

    /// Copy with the same annotations and a densified or sparsified matrix.
    pub fn with_expression(&self, x: Expression) -> Self {
        AnnotatedMatrix { x, ..self.clone() }
    }

    /// Copy with observations reordered: row i of the result is row `order[i]`.
    pub fn permute_obs(&self, order: &[usize]) -> Self {
        let n_cols = self.n_var();
        let mut values = Vec::with_capacity(order.len() * n_cols);
        let mut row = vec![0.0f32; n_cols];
        for &r in order {
            self.x.densify_row_into(r, &mut row);
            values.extend_from_slice(&row);
        }
        let mut x = Expression::Dense {
            n_rows: order.len(),
            n_cols,
            values,
        };
        if self.x.is_sparse() {
            x = x.to_csr();
        }
        let obs_columns = self
            .obs_columns
            .iter()
            .map(|(k, col)| {
                let col = match col {
                    ObsColumn::Categorical { codes, categories } => ObsColumn::Categorical {
                        codes: order.iter().map(|&r| codes[r]).collect(),
                        categories: categories.clone(),
                    },
                    ObsColumn::Numeric(v) => ObsColumn::Numeric(order.iter().map(|&r| v[r]).collect()),
                };
                (k.clone(), col)
            })
            .collect();
        let embeddings = self
            .embeddings
            .iter()
            .map(|(k, e)| {
                let values = order
                    .iter()
                    .flat_map(|&r| e.values[r * e.dim..(r + 1) * e.dim].iter().copied())
                    .collect();
                (k.clone(), Embedding::new(e.dim, values))
            })
            .collect();
        AnnotatedMatrix {
            x,
            obs_ids: order.iter().map(|&r| self.obs_ids[r].clone()).collect(),
            var_ids: self.var_ids.clone(),
            obs_columns,
            embeddings,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_rejects_unsorted_columns() {
        let err = Expression::csr(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 2.0]).unwrap_err();
        assert!(matches!(err, StatsError::Shape(_)));
    }

    #[test]
    fn dense_csr_round_trip() {
        let dense = Expression::dense(2, 3, vec![0.0, 1.5, 0.0, 2.0, 0.0, 3.0]).unwrap();
        let csr = dense.to_csr();
        assert!(csr.is_sparse());
        assert_eq!(csr.to_dense(), dense);
        assert_eq!(csr.get(1, 2), 3.0);
        assert_eq!(csr.get(0, 0), 0.0);
    }

    #[test]
    fn categorical_codes_follow_first_appearance() {
        let col = ObsColumn::categorical(&["b", "a", "b"]);
        assert_eq!(
            col,
            ObsColumn::Categorical {
                codes: vec![0, 1, 0],
                categories: vec!["b".into(), "a".into()]
            }
        );
    }

    #[test]
    fn duplicate_ids_rejected() {
        let x = Expression::dense(2, 1, vec![0.0, 0.0]).unwrap();
        assert!(AnnotatedMatrix::new(x, vec!["c".into(), "c".into()], vec!["g".into()]).is_err());
    }

    #[test]
    fn out_of_range_codes_rejected() {
        let x = Expression::dense(1, 1, vec![0.0]).unwrap();
        let am = AnnotatedMatrix::new(x, vec!["c".into()], vec!["g".into()]).unwrap();
        let bad = ObsColumn::Categorical {
            codes: vec![3],
            categories: vec!["a".into()],
        };
        assert!(am.with_obs("g", bad).is_err());
    }
}
