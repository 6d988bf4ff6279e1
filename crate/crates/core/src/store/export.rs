use std::path::Path;

use serde_json::json;

use crate::spatial::{Circles, Image, LabelMask, Points};
use crate::stats::{AnnotatedMatrix, ObsColumn};

use super::pyramid::{build_pyramid, PixelValue};
use super::{chunk_shape_for, StoreError, StoreManifest, StoreWriter, WriteMode};

/// Rows per chunk for observation-indexed arrays.
pub const OBS_CHUNK_ROWS: usize = 1000;
/// Spatial tile edge for images and label masks.
pub const TILE: usize = 256;

/// Which parts of an annotated matrix go into a store. `None` means all.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatrixSelection {
    pub features: Option<Vec<String>>,
    pub embeddings: Option<Vec<String>>,
    pub obs_columns: Option<Vec<String>>,
}

impl MatrixSelection {
    pub fn all() -> Self {
        Self::default()
    }

    /// Selects nothing; callers add what they need.
    pub fn empty() -> Self {
        MatrixSelection {
            features: Some(Vec::new()),
            embeddings: Some(Vec::new()),
            obs_columns: Some(Vec::new()),
        }
    }
}

/// Writes the selected parts of `am`:
///
/// - `X`: n_obs x n_selected f32, chunked by row blocks; CSR rows are
///   densified chunk by chunk
/// - `obsm/<name>`: embeddings, f32
/// - `obs/<name>`: categorical codes (i32, labels in attributes) or numeric values (f32)
/// - attributes `obs_ids` and `var_ids` (the exported columns)
pub fn write_matrix(w: &mut StoreWriter, am: &AnnotatedMatrix, sel: &MatrixSelection) -> Result<(), StoreError> {
    let n_obs = am.n_obs();
    let cols: Vec<usize> = match &sel.features {
        None => (0..am.n_var()).collect(),
        Some(fs) => fs
            .iter()
            .map(|f| am.feature_index(f).ok_or_else(|| StoreError::UnknownFeature(f.clone())))
            .collect::<Result<_, _>>()?,
    };
    w.set_attribute("obs_ids", json!(am.obs_ids));
    w.set_attribute(
        "var_ids",
        json!(cols.iter().map(|&c| am.var_ids[c].as_str()).collect::<Vec<_>>()),
    );
    if !cols.is_empty() {
        let mut full = vec![0.0f32; am.n_var()];
        w.write_rows("X", n_obs, cols.len(), OBS_CHUNK_ROWS, |r, out: &mut [f32]| {
            am.x.densify_row_into(r, &mut full);
            for (o, &c) in out.iter_mut().zip(&cols) {
                *o = full[c];
            }
        })?;
    }

    let embeddings: Vec<String> = sel
        .embeddings
        .clone()
        .unwrap_or_else(|| am.embeddings.keys().cloned().collect());
    for name in &embeddings {
        let emb = am
            .embeddings
            .get(name)
            .ok_or_else(|| StoreError::UnknownBasis(name.clone()))?;
        let path = format!("obsm/{name}");
        w.write_rows(&path, n_obs, emb.dim, OBS_CHUNK_ROWS, |r, out: &mut [f32]| {
            out.copy_from_slice(&emb.values[r * emb.dim..(r + 1) * emb.dim]);
        })?;
    }

    let columns: Vec<String> = sel
        .obs_columns
        .clone()
        .unwrap_or_else(|| am.obs_columns.keys().cloned().collect());
    for name in &columns {
        let col = am
            .obs_columns
            .get(name)
            .ok_or_else(|| StoreError::UnknownObsColumn(name.clone()))?;
        let path = format!("obs/{name}");
        let chunk = chunk_shape_for(&[n_obs], &[OBS_CHUNK_ROWS]);
        match col {
            ObsColumn::Categorical { codes, categories } => {
                w.write_array(&path, &[n_obs], &chunk, codes)?;
                w.set_attribute(&path, json!({ "kind": "categorical", "categories": categories }));
            }
            ObsColumn::Numeric(values) => {
                w.write_array(&path, &[n_obs], &chunk, values)?;
                w.set_attribute(&path, json!({ "kind": "numeric" }));
            }
        }
    }
    Ok(())
}

/// Exports every part of `am` into a fresh store at `dir`.
pub fn export_matrix(am: &AnnotatedMatrix, dir: &Path, mode: WriteMode) -> Result<StoreManifest, StoreError> {
    let mut w = StoreWriter::create(dir, mode)?;
    write_matrix(&mut w, am, &MatrixSelection::all())?;
    w.finish()
}

/// Writes pyramid levels as `levels/<k>`, each (c, y, x) tiled 256 x 256.
pub fn export_image_pyramid<T: PixelValue>(
    image: &Image<T>,
    dir: &Path,
    min_dim: usize,
    mode: WriteMode,
) -> Result<StoreManifest, StoreError> {
    if image.channels == 0 || image.height == 0 || image.width == 0 {
        return Err(StoreError::Shape(format!("image dims must be >= 1, got {:?}", image.shape())));
    }
    let mut w = StoreWriter::create(dir, mode)?;
    let levels = build_pyramid(image, min_dim);
    for (k, level) in levels.iter().enumerate() {
        let shape = level.shape();
        let chunk = chunk_shape_for(&shape, &[1, TILE, TILE]);
        w.write_array(&format!("levels/{k}"), &shape, &chunk, &level.data)?;
    }
    w.set_attribute(
        "levels",
        json!({
            "count": levels.len(),
            "shapes": levels.iter().map(|l| l.shape()).collect::<Vec<_>>(),
        }),
    );
    w.finish()
}

pub fn export_circles(circles: &Circles, dir: &Path, mode: WriteMode) -> Result<StoreManifest, StoreError> {
    let mut w = StoreWriter::create(dir, mode)?;
    let shape = [circles.len(), 3];
    w.write_array("circles", &shape, &chunk_shape_for(&shape, &[OBS_CHUNK_ROWS, 3]), &circles.xyr)?;
    w.set_attribute("circles", json!({ "ids": circles.ids, "columns": ["x", "y", "r"] }));
    w.finish()
}

pub fn export_points(points: &Points, dir: &Path, mode: WriteMode) -> Result<StoreManifest, StoreError> {
    let mut w = StoreWriter::create(dir, mode)?;
    let shape = [points.len(), 2];
    w.write_array("points", &shape, &chunk_shape_for(&shape, &[OBS_CHUNK_ROWS, 2]), &points.xy)?;
    w.set_attribute("points", json!({ "ids": points.ids, "columns": ["x", "y"] }));
    w.finish()
}

/// Label masks are stored as a single-channel image without a pyramid.
pub fn export_labels(mask: &LabelMask, dir: &Path, mode: WriteMode) -> Result<StoreManifest, StoreError> {
    let mut w = StoreWriter::create(dir, mode)?;
    let shape = [1, mask.height, mask.width];
    w.write_array("labels", &shape, &chunk_shape_for(&shape, &[1, TILE, TILE]), &mask.data)?;
    let mut ids: Vec<i32> = mask.data.iter().copied().filter(|&v| v != 0).collect();
    ids.sort_unstable();
    ids.dedup();
    w.set_attribute("labels", json!({ "ids": ids }));
    w.finish()
}
