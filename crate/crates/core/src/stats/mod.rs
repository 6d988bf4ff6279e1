//! Group-wise summaries behind the dot plot, grouped heatmap and violin views.
//!
//! All accumulation happens in `f64` over the stored `f32` values, visiting
//! cells in row order, so dense and sparse inputs produce identical sums.

mod matrix;

pub use matrix::{AnnotatedMatrix, Embedding, Expression, ObsColumn};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("unknown or non-categorical group column {0:?}")]
    UnknownGroupColumn(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("shape error: {0}")]
    Shape(String),
}

/// Dot plot statistics, row-major over `groups` x `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct DotPlotTable {
    pub groups: Vec<String>,
    pub features: Vec<String>,
    pub fraction_expressing: Vec<f64>,
    pub mean_expression: Vec<f64>,
}

impl DotPlotTable {
    pub fn fraction(&self, group: usize, feature: usize) -> f64 {
        self.fraction_expressing[group * self.features.len() + feature]
    }

    pub fn mean(&self, group: usize, feature: usize) -> f64 {
        self.mean_expression[group * self.features.len() + feature]
    }
}

/// Five-number summary of one feature within one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub group: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
}

/// Group-by-feature mean matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMeans {
    pub groups: Vec<String>,
    pub features: Vec<String>,
    pub values: Vec<f64>,
}

impl GroupMeans {
    pub fn get(&self, group: usize, feature: usize) -> f64 {
        self.values[group * self.features.len() + feature]
    }
}

struct Grouping<'a> {
    codes: &'a [i32],
    categories: &'a [String],
    sizes: Vec<usize>,
}

impl<'a> Grouping<'a> {
    fn of(am: &'a AnnotatedMatrix, group_col: &str) -> Result<Self, StatsError> {
        match am.obs_columns.get(group_col) {
            Some(ObsColumn::Categorical { codes, categories }) => {
                let mut sizes = vec![0usize; categories.len()];
                for &c in codes {
                    sizes[c as usize] += 1;
                }
                Ok(Grouping {
                    codes,
                    categories,
                    sizes,
                })
            }
            _ => Err(StatsError::UnknownGroupColumn(group_col.to_string())),
        }
    }

    /// Category indices with at least one member, in category-label order.
    fn non_empty(&self) -> Vec<usize> {
        (0..self.categories.len()).filter(|&g| self.sizes[g] > 0).collect()
    }
}

fn feature_indices<S: AsRef<str>>(am: &AnnotatedMatrix, features: &[S]) -> Result<Vec<usize>, StatsError> {
    features
        .iter()
        .map(|f| {
            am.feature_index(f.as_ref())
                .ok_or_else(|| StatsError::UnknownFeature(f.as_ref().to_string()))
        })
        .collect()
}

/// Per (category, feature): sum of values and count of values above `threshold`.
struct GroupAccumulator {
    sums: Vec<f64>,
    above: Vec<usize>,
    n_features: usize,
}

impl GroupAccumulator {
    fn run(am: &AnnotatedMatrix, grouping: &Grouping, cols: &[usize], threshold: f64) -> Self {
        let n_features = cols.len();
        let n_groups = grouping.categories.len();
        let mut sums = vec![0.0f64; n_groups * n_features];
        let mut above = vec![0usize; n_groups * n_features];
        for (j, &col) in cols.iter().enumerate() {
            for (row, v) in am.x.column_entries(col) {
                let g = grouping.codes[row] as usize;
                let v = v as f64;
                sums[g * n_features + j] += v;
                if v > threshold {
                    above[g * n_features + j] += 1;
                }
            }
        }
        // implicit sparse zeros only matter when the threshold is negative
        if am.x.is_sparse() && threshold < 0.0 {
            for (j, &col) in cols.iter().enumerate() {
                let stored = am.x.column_entries(col);
                let mut per_group = vec![0usize; n_groups];
                for (row, _) in &stored {
                    per_group[grouping.codes[*row] as usize] += 1;
                }
                for g in 0..n_groups {
                    above[g * n_features + j] += grouping.sizes[g] - per_group[g];
                }
            }
        }
        GroupAccumulator {
            sums,
            above,
            n_features,
        }
    }

    fn mean(&self, grouping: &Grouping, g: usize, j: usize) -> f64 {
        self.sums[g * self.n_features + j] / grouping.sizes[g] as f64
    }
}

/// Fraction of cells per group with value strictly above `threshold`, and the
/// mean over all cells of the group (zeros included). Empty groups are omitted.
pub fn dotplot_stats<S: AsRef<str>>(
    am: &AnnotatedMatrix,
    group_col: &str,
    features: &[S],
    threshold: f64,
) -> Result<DotPlotTable, StatsError> {
    let grouping = Grouping::of(am, group_col)?;
    let cols = feature_indices(am, features)?;
    let acc = GroupAccumulator::run(am, &grouping, &cols, threshold);
    let groups = grouping.non_empty();
    let mut fraction_expressing = Vec::with_capacity(groups.len() * cols.len());
    let mut mean_expression = Vec::with_capacity(groups.len() * cols.len());
    for &g in &groups {
        for j in 0..cols.len() {
            fraction_expressing.push(acc.above[g * cols.len() + j] as f64 / grouping.sizes[g] as f64);
            mean_expression.push(acc.mean(&grouping, g, j));
        }
    }
    Ok(DotPlotTable {
        groups: groups.iter().map(|&g| grouping.categories[g].clone()).collect(),
        features: features.iter().map(|f| f.as_ref().to_string()).collect(),
        fraction_expressing,
        mean_expression,
    })
}

/// Mean over all cells of each non-empty group, rows in category-label order.
pub fn aggregate_means<S: AsRef<str>>(
    am: &AnnotatedMatrix,
    group_col: &str,
    features: &[S],
) -> Result<GroupMeans, StatsError> {
    let grouping = Grouping::of(am, group_col)?;
    let cols = feature_indices(am, features)?;
    let acc = GroupAccumulator::run(am, &grouping, &cols, 0.0);
    let groups = grouping.non_empty();
    let values = groups
        .iter()
        .flat_map(|&g| (0..cols.len()).map(move |j| (g, j)))
        .map(|(g, j)| acc.mean(&grouping, g, j))
        .collect();
    Ok(GroupMeans {
        groups: groups.iter().map(|&g| grouping.categories[g].clone()).collect(),
        features: features.iter().map(|f| f.as_ref().to_string()).collect(),
        values,
    })
}

/// Linear-interpolation quantile (R type 7) of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Min, quartiles and max of one feature for each non-empty group.
pub fn group_summary(am: &AnnotatedMatrix, group_col: &str, feature: &str) -> Result<Vec<GroupSummary>, StatsError> {
    let grouping = Grouping::of(am, group_col)?;
    let col = am
        .feature_index(feature)
        .ok_or_else(|| StatsError::UnknownFeature(feature.to_string()))?;
    let mut per_group: Vec<Vec<f64>> = grouping.sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
    for (row, &code) in grouping.codes.iter().enumerate() {
        per_group[code as usize].push(am.x.get(row, col) as f64);
    }
    Ok(grouping
        .non_empty()
        .into_iter()
        .map(|g| {
            let values = &mut per_group[g];
            values.sort_by(|a, b| a.total_cmp(b));
            GroupSummary {
                group: grouping.categories[g].clone(),
                min: values[0],
                q1: quantile_sorted(values, 0.25),
                median: quantile_sorted(values, 0.5),
                q3: quantile_sorted(values, 0.75),
                max: values[values.len() - 1],
                n: values.len(),
            }
        })
        .collect())
}
