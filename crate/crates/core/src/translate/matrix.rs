//! Translators for plotting functions that take an annotated matrix.

use serde_json::{json, Value};

use crate::host::{BoundArgs, DataHandle};
use crate::stats::{AnnotatedMatrix, ObsColumn};
use crate::store::MatrixSelection;
use crate::viewmodel::{ComponentKind, CoordinationType, FileKind, COLOR_BY_FEATURE, COLOR_BY_SETS};

use super::registry::{opt_f64, opt_str, opt_str_list, req_str, req_str_list, Family, Translated, Translator};
use super::spatial::{initial_view, Extent};
use super::{
    compose, file, Composed, ExportContent, ExportEntry, MatrixSource, Summary, SyntheticEmbedding, TranslateError,
    TranslationResult,
};

const MATRIX_URL: &str = "matrix";
const DATASET_NAME: &str = "plot data";

/// Where a color or axis value comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ColorSource {
    Categorical(String),
    Numeric(String),
    Feature(String),
}

fn resolve_color(am: &AnnotatedMatrix, name: &str) -> Result<ColorSource, TranslateError> {
    let column = am.obs_columns.get(name);
    let feature = am.has_feature(name);
    match (column, feature) {
        (Some(_), true) => Err(TranslateError::AmbiguousColor(name.into())),
        (Some(ObsColumn::Categorical { .. }), false) => Ok(ColorSource::Categorical(name.into())),
        (None, true) => Ok(ColorSource::Feature(name.into())),
        _ => Err(TranslateError::UnknownColor(name.into())),
    }
}

fn resolve_axis(am: &AnnotatedMatrix, name: &str) -> Result<ColorSource, TranslateError> {
    let column = am.obs_columns.get(name);
    let feature = am.has_feature(name);
    match (column, feature) {
        (Some(_), true) => Err(TranslateError::AmbiguousColor(name.into())),
        (Some(ObsColumn::Numeric(_)), false) => Ok(ColorSource::Numeric(name.into())),
        (None, true) => Ok(ColorSource::Feature(name.into())),
        _ => Err(TranslateError::UnknownColumn(name.into())),
    }
}

/// Resolves `basis` as given or with an `X_` prefix.
fn resolve_basis(am: &AnnotatedMatrix, basis: &str) -> Result<String, TranslateError> {
    let key = if am.embeddings.contains_key(basis) {
        basis.to_string()
    } else if am.embeddings.contains_key(&format!("X_{basis}")) {
        format!("X_{basis}")
    } else {
        return Err(TranslateError::UnknownBasis(basis.into()));
    };
    let dim = am.embeddings[&key].dim;
    if dim < 2 {
        return Err(TranslateError::NarrowEmbedding { basis: key, dim });
    }
    Ok(key)
}

/// Embedding-type label: drop a leading `X_`, upper-case the well-known
/// reductions, keep anything else verbatim.
pub(crate) fn embedding_type(basis: &str) -> String {
    let stripped = basis.strip_prefix("X_").unwrap_or(basis);
    match stripped {
        "pca" | "umap" | "tsne" => stripped.to_uppercase(),
        other => other.to_string(),
    }
}

fn categorical_sets(am: &AnnotatedMatrix, column: &str) -> Result<Vec<String>, TranslateError> {
    match am.obs_columns.get(column) {
        Some(ObsColumn::Categorical { categories, .. }) => Ok(categories.clone()),
        _ => Err(TranslateError::UnknownGroupColumn(column.into())),
    }
}

/// All categories of `column` as selection paths `[column, category]`.
fn set_selection(column: &str, categories: &[String]) -> Value {
    Value::Array(categories.iter().map(|c| json!([column, c])).collect())
}

fn check_features(am: &AnnotatedMatrix, features: &[String]) -> Result<(), TranslateError> {
    if features.is_empty() {
        return Err(TranslateError::UnknownFeature(String::new()));
    }
    match features.iter().find(|f| !am.has_feature(f)) {
        Some(f) => Err(TranslateError::UnknownFeature(f.clone())),
        None => Ok(()),
    }
}

/// Accumulates the matrix-store file for one translation.
#[derive(Default)]
struct MatrixFile {
    features: Vec<String>,
    embeddings: Vec<(String, String)>,
    obs_sets: Vec<String>,
    synthetic: Option<SyntheticEmbedding>,
    synthetic_type: Option<String>,
    summaries: Vec<Summary>,
}

impl MatrixFile {
    fn add_features(&mut self, features: &[String]) {
        for f in features {
            if !self.features.contains(f) {
                self.features.push(f.clone());
            }
        }
    }

    fn add_obs_set(&mut self, column: &str) {
        if !self.obs_sets.iter().any(|c| c == column) {
            self.obs_sets.push(column.to_string());
        }
    }

    fn options(&self) -> Value {
        let mut o = serde_json::Map::new();
        if !self.features.is_empty() {
            o.insert("obsFeatureMatrix".into(), json!({ "path": "X" }));
        }
        let mut embeddings: Vec<Value> = self
            .embeddings
            .iter()
            .map(|(key, etype)| json!({ "path": format!("obsm/{key}"), "embeddingType": etype, "dims": [0, 1] }))
            .collect();
        if let (Some(s), Some(etype)) = (&self.synthetic, &self.synthetic_type) {
            embeddings.push(json!({ "path": s.path, "embeddingType": etype, "dims": [0, 1] }));
        }
        if !embeddings.is_empty() {
            o.insert("obsEmbedding".into(), Value::Array(embeddings));
        }
        if !self.obs_sets.is_empty() {
            let sets: Vec<Value> = self
                .obs_sets
                .iter()
                .map(|c| json!({ "name": c, "path": format!("obs/{c}") }))
                .collect();
            o.insert("obsSets".into(), Value::Array(sets));
        }
        if !self.summaries.is_empty() {
            let summaries: Vec<Value> = self
                .summaries
                .iter()
                .map(|s| match s {
                    Summary::DotStats {
                        group,
                        features,
                        threshold,
                        path,
                    } => json!({ "kind": "dotStats", "group": group, "features": features, "threshold": threshold, "path": path }),
                    Summary::GroupMeans { group, features, path } => {
                        json!({ "kind": "groupMeans", "group": group, "features": features, "path": path })
                    }
                    Summary::GroupSummary { group, feature, path } => {
                        json!({ "kind": "groupSummary", "group": group, "feature": feature, "path": path })
                    }
                })
                .collect();
            o.insert("summaries".into(), Value::Array(summaries));
        }
        Value::Object(o)
    }

    fn decl(&self) -> crate::viewmodel::FileDecl {
        file(MATRIX_URL, FileKind::MatrixStore, self.options())
    }

    fn entry(self, source: MatrixSource) -> ExportEntry {
        ExportEntry {
            url: MATRIX_URL.into(),
            kind: FileKind::MatrixStore,
            content: ExportContent::Matrix {
                source,
                selection: MatrixSelection {
                    features: Some(self.features),
                    embeddings: Some(self.embeddings.into_iter().map(|(k, _)| k).collect()),
                    obs_columns: Some(self.obs_sets),
                },
                synthetic: self.synthetic,
                summaries: self.summaries,
            },
        }
    }
}

/// Links `color` onto `main` plus the matching side panel.
fn link_color(c: &mut Composed, am: &AnnotatedMatrix, color: &ColorSource) -> Result<(), TranslateError> {
    match color {
        ColorSource::Categorical(column) => {
            let sets = c.obs_sets.expect("obs set list composed");
            let categories = categorical_sets(am, column)?;
            c.link(&[c.main, sets], CoordinationType::ObsSetSelection, set_selection(column, &categories));
            c.link(&[c.main, sets], CoordinationType::ObsColorEncoding, json!(COLOR_BY_SETS));
        }
        ColorSource::Feature(feature) => {
            let list = c.feature_list.expect("feature list composed");
            c.link(&[c.main, list], CoordinationType::FeatureSelection, json!([feature]));
            c.link(&[c.main, list], CoordinationType::ObsColorEncoding, json!(COLOR_BY_FEATURE));
        }
        ColorSource::Numeric(_) => unreachable!("numeric colors are rejected during resolution"),
    }
    Ok(())
}

fn add_color_to_file(mf: &mut MatrixFile, color: Option<&ColorSource>) {
    match color {
        Some(ColorSource::Categorical(c)) => mf.add_obs_set(c),
        Some(ColorSource::Feature(f)) => mf.add_features(std::slice::from_ref(f)),
        _ => {}
    }
}

fn result(c: Composed, plan: Vec<ExportEntry>) -> TranslationResult {
    TranslationResult {
        config: c.config,
        export_plan: plan,
        warnings: Vec::new(),
    }
}

/// Scatterplot of a named embedding, optionally colored by a categorical
/// observation column or a feature.
pub fn translate_embedding(
    am: &AnnotatedMatrix,
    basis: &str,
    color: Option<&str>,
    title: Option<&str>,
) -> Result<TranslationResult, TranslateError> {
    let key = resolve_basis(am, basis)?;
    let etype = embedding_type(&key);
    let color = color.map(|c| resolve_color(am, c)).transpose()?;

    let mut mf = MatrixFile::default();
    mf.embeddings.push((key.clone(), etype.clone()));
    add_color_to_file(&mut mf, color.as_ref());

    let mut c = compose(
        title.unwrap_or(&key),
        DATASET_NAME,
        vec![mf.decl()],
        ComponentKind::Scatterplot,
        matches!(color, Some(ColorSource::Feature(_))),
        matches!(color, Some(ColorSource::Categorical(_))),
        false,
    );
    c.link(&[c.main], CoordinationType::EmbeddingType, json!(etype));
    if let Some(color) = &color {
        link_color(&mut c, am, color)?;
    }
    Ok(result(c, vec![mf.entry(MatrixSource::Plot)]))
}

/// Scatterplot over two numeric observation columns or features.
pub fn translate_scatter(
    am: &AnnotatedMatrix,
    x: &str,
    y: &str,
    color: Option<&str>,
    title: Option<&str>,
) -> Result<TranslationResult, TranslateError> {
    let xs = resolve_axis(am, x)?;
    let ys = resolve_axis(am, y)?;
    let color = color.map(|c| resolve_color(am, c)).transpose()?;
    let etype = format!("scatter:{x}:{y}");

    let mut mf = MatrixFile {
        synthetic: Some(SyntheticEmbedding {
            path: "obsm/scatter".into(),
            x: xs,
            y: ys,
        }),
        synthetic_type: Some(etype.clone()),
        ..Default::default()
    };
    add_color_to_file(&mut mf, color.as_ref());

    let mut c = compose(
        title.unwrap_or("scatter"),
        DATASET_NAME,
        vec![mf.decl()],
        ComponentKind::Scatterplot,
        matches!(color, Some(ColorSource::Feature(_))),
        matches!(color, Some(ColorSource::Categorical(_))),
        false,
    );
    c.link(&[c.main], CoordinationType::EmbeddingType, json!(etype));
    if let Some(color) = &color {
        link_color(&mut c, am, color)?;
    }
    Ok(result(c, vec![mf.entry(MatrixSource::Plot)]))
}

/// Dot plot of `var_names` per category of `groupby`, with precomputed
/// fraction-expressing and mean-expression tables.
pub fn translate_dotplot(
    am: &AnnotatedMatrix,
    var_names: &[String],
    groupby: &str,
    expression_cutoff: f64,
    title: Option<&str>,
) -> Result<TranslationResult, TranslateError> {
    check_features(am, var_names)?;
    let categories = categorical_sets(am, groupby)?;

    let mut mf = MatrixFile::default();
    mf.add_features(var_names);
    mf.add_obs_set(groupby);
    mf.summaries.push(Summary::DotStats {
        group: groupby.into(),
        features: var_names.to_vec(),
        threshold: expression_cutoff,
        path: "summaries/dotplot".into(),
    });

    let mut c = compose(
        title.unwrap_or("dotplot"),
        DATASET_NAME,
        vec![mf.decl()],
        ComponentKind::DotPlot,
        true,
        true,
        false,
    );
    let (main, list, sets) = (c.main, c.feature_list.unwrap(), c.obs_sets.unwrap());
    c.link(&[main, list], CoordinationType::FeatureSelection, json!(var_names));
    c.link(&[main, sets], CoordinationType::ObsSetSelection, set_selection(groupby, &categories));
    Ok(result(c, vec![mf.entry(MatrixSource::Plot)]))
}

/// Heatmap of cell-level values, or of group means when `groupby` is given.
pub fn translate_heatmap(
    am: &AnnotatedMatrix,
    var_names: &[String],
    groupby: Option<&str>,
    title: Option<&str>,
) -> Result<TranslationResult, TranslateError> {
    check_features(am, var_names)?;
    let categories = groupby.map(|g| categorical_sets(am, g)).transpose()?;

    let mut mf = MatrixFile::default();
    match groupby {
        Some(g) => {
            mf.add_obs_set(g);
            mf.summaries.push(Summary::GroupMeans {
                group: g.into(),
                features: var_names.to_vec(),
                path: "summaries/means".into(),
            });
        }
        None => mf.add_features(var_names),
    }

    let mut c = compose(
        title.unwrap_or("heatmap"),
        DATASET_NAME,
        vec![mf.decl()],
        ComponentKind::Heatmap,
        true,
        groupby.is_some(),
        false,
    );
    let (main, list) = (c.main, c.feature_list.unwrap());
    c.link(&[main, list], CoordinationType::FeatureSelection, json!(var_names));
    if let (Some(g), Some(categories), Some(sets)) = (groupby, &categories, c.obs_sets) {
        c.link(&[main, sets], CoordinationType::ObsSetSelection, set_selection(g, categories));
    }
    Ok(result(c, vec![mf.entry(MatrixSource::Plot)]))
}

/// Violin plot of each key per category of `groupby`, backed by five-number
/// summaries and the cell-level values.
pub fn translate_violin(
    am: &AnnotatedMatrix,
    keys: &[String],
    groupby: &str,
    title: Option<&str>,
) -> Result<TranslationResult, TranslateError> {
    check_features(am, keys)?;
    let categories = categorical_sets(am, groupby)?;

    let mut mf = MatrixFile::default();
    mf.add_features(keys);
    mf.add_obs_set(groupby);
    for (i, key) in keys.iter().enumerate() {
        mf.summaries.push(Summary::GroupSummary {
            group: groupby.into(),
            feature: key.clone(),
            path: format!("summaries/violin/{i}"),
        });
    }

    let mut c = compose(
        title.unwrap_or("violin"),
        DATASET_NAME,
        vec![mf.decl()],
        ComponentKind::Violin,
        true,
        true,
        false,
    );
    let (main, list, sets) = (c.main, c.feature_list.unwrap(), c.obs_sets.unwrap());
    c.link(&[main, list], CoordinationType::FeatureSelection, json!(keys));
    c.link(&[main, sets], CoordinationType::ObsSetSelection, set_selection(groupby, &categories));
    Ok(result(c, vec![mf.entry(MatrixSource::Plot)]))
}

/// Spots at spatial coordinates stored as an embedding, drawn as circles.
pub fn translate_spatial_matrix(
    am: &AnnotatedMatrix,
    basis: &str,
    color: Option<&str>,
    spot_size: f64,
    title: Option<&str>,
) -> Result<TranslationResult, TranslateError> {
    let key = resolve_basis(am, basis)?;
    let color = color.map(|c| resolve_color(am, c)).transpose()?;
    if !(spot_size.is_finite() && spot_size > 0.0) {
        return Err(TranslateError::InvalidArgument {
            function: "spatial".into(),
            param: "spot_size".into(),
            reason: format!("must be a positive number, got {spot_size}"),
        });
    }
    let radius = (spot_size / 2.0) as f32;
    let emb = &am.embeddings[&key];
    let mut extent = Extent::default();
    for row in emb.values.chunks(emb.dim) {
        extent.include_circle(row[0] as f64, row[1] as f64, radius as f64);
    }

    let shapes_url = "shapes/spots";
    let mut files = vec![file(shapes_url, FileKind::Circles, json!({ "element": "spots" }))];
    let mut plan = vec![ExportEntry {
        url: shapes_url.into(),
        kind: FileKind::Circles,
        content: ExportContent::CirclesFromEmbedding {
            basis: key.clone(),
            radius,
        },
    }];
    let mut mf = MatrixFile::default();
    add_color_to_file(&mut mf, color.as_ref());
    if color.is_some() {
        files.push(mf.decl());
    }

    let mut c = compose(
        title.unwrap_or("spatial"),
        DATASET_NAME,
        files,
        ComponentKind::Spatial,
        matches!(color, Some(ColorSource::Feature(_))),
        matches!(color, Some(ColorSource::Categorical(_))),
        true,
    );
    let (zoom, tx, ty) = initial_view(&extent);
    let spatial_views = [c.main, c.layer_controller.unwrap()];
    c.link(&spatial_views, CoordinationType::SpatialZoom, json!(zoom));
    c.link(&spatial_views, CoordinationType::SpatialTargetX, json!(tx));
    c.link(&spatial_views, CoordinationType::SpatialTargetY, json!(ty));
    let mut layer = json!({ "type": "circles", "element": "spots", "visible": true, "opacity": 1.0 });
    if let Some(color) = &color {
        let encoding = match color {
            ColorSource::Feature(_) => COLOR_BY_FEATURE,
            _ => COLOR_BY_SETS,
        };
        layer["colorEncoding"] = json!(encoding);
    }
    c.link(&spatial_views, CoordinationType::SpatialLayers, json!([layer]));
    if let Some(color) = &color {
        link_color(&mut c, am, color)?;
        plan.push(mf.entry(MatrixSource::Plot));
    }
    Ok(result(c, plan))
}

fn matrix_of<'a>(function: &str, data: &'a DataHandle) -> Result<&'a AnnotatedMatrix, TranslateError> {
    match data {
        DataHandle::Matrix(am) => Ok(am),
        DataHandle::Spatial(_) => Err(TranslateError::WrongData {
            function: function.into(),
        }),
    }
}

/// `embedding` (basis from the call) and the fixed-basis `pca`/`umap`/`tsne`.
pub(crate) struct EmbeddingTranslator {
    name: &'static str,
    fixed_basis: Option<&'static str>,
}

impl EmbeddingTranslator {
    pub fn generic() -> Self {
        EmbeddingTranslator {
            name: "embedding",
            fixed_basis: None,
        }
    }

    pub fn fixed(name: &'static str, basis: &'static str) -> Self {
        EmbeddingTranslator {
            name,
            fixed_basis: Some(basis),
        }
    }
}

impl Translator for EmbeddingTranslator {
    fn name(&self) -> &'static str {
        self.name
    }

    fn family(&self) -> Family {
        Family::Matrix
    }

    fn supported_params(&self) -> &'static [&'static str] {
        match self.fixed_basis {
            None => &["basis", "color", "title", "show"],
            Some(_) => &["color", "title", "show"],
        }
    }

    fn translate(&self, data: &DataHandle, args: &BoundArgs) -> Result<Translated, TranslateError> {
        let am = matrix_of(self.name, data)?;
        let basis = match self.fixed_basis {
            Some(b) => b.to_string(),
            None => req_str(self.name, args, "basis")?,
        };
        let color = opt_str(self.name, args, "color")?;
        let title = opt_str(self.name, args, "title")?;
        translate_embedding(am, &basis, color.as_deref(), title.as_deref()).map(Translated::Config)
    }
}

pub(crate) struct ScatterTranslator;

impl Translator for ScatterTranslator {
    fn name(&self) -> &'static str {
        "scatter"
    }

    fn family(&self) -> Family {
        Family::Matrix
    }

    fn supported_params(&self) -> &'static [&'static str] {
        &["x", "y", "color", "title", "show"]
    }

    fn translate(&self, data: &DataHandle, args: &BoundArgs) -> Result<Translated, TranslateError> {
        let am = matrix_of("scatter", data)?;
        let x = req_str("scatter", args, "x")?;
        let y = req_str("scatter", args, "y")?;
        let color = opt_str("scatter", args, "color")?;
        let title = opt_str("scatter", args, "title")?;
        translate_scatter(am, &x, &y, color.as_deref(), title.as_deref()).map(Translated::Config)
    }
}

pub(crate) struct SpatialMatrixTranslator;

impl Translator for SpatialMatrixTranslator {
    fn name(&self) -> &'static str {
        "spatial"
    }

    fn family(&self) -> Family {
        Family::Matrix
    }

    fn supported_params(&self) -> &'static [&'static str] {
        &["color", "basis", "spot_size", "title", "show"]
    }

    fn translate(&self, data: &DataHandle, args: &BoundArgs) -> Result<Translated, TranslateError> {
        let am = matrix_of("spatial", data)?;
        let basis = opt_str("spatial", args, "basis")?.unwrap_or_else(|| "spatial".into());
        let color = opt_str("spatial", args, "color")?;
        let spot_size = opt_f64("spatial", args, "spot_size")?.unwrap_or(1.0);
        let title = opt_str("spatial", args, "title")?;
        translate_spatial_matrix(am, &basis, color.as_deref(), spot_size, title.as_deref()).map(Translated::Config)
    }
}

pub(crate) struct DotplotTranslator;

impl Translator for DotplotTranslator {
    fn name(&self) -> &'static str {
        "dotplot"
    }

    fn family(&self) -> Family {
        Family::Matrix
    }

    fn supported_params(&self) -> &'static [&'static str] {
        &["var_names", "groupby", "expression_cutoff", "title", "show"]
    }

    fn translate(&self, data: &DataHandle, args: &BoundArgs) -> Result<Translated, TranslateError> {
        let am = matrix_of("dotplot", data)?;
        let var_names = req_str_list("dotplot", args, "var_names")?;
        let groupby = req_str("dotplot", args, "groupby")?;
        let cutoff = opt_f64("dotplot", args, "expression_cutoff")?.unwrap_or(0.0);
        let title = opt_str("dotplot", args, "title")?;
        translate_dotplot(am, &var_names, &groupby, cutoff, title.as_deref()).map(Translated::Config)
    }
}

pub(crate) struct HeatmapTranslator;

impl Translator for HeatmapTranslator {
    fn name(&self) -> &'static str {
        "heatmap"
    }

    fn family(&self) -> Family {
        Family::Matrix
    }

    fn supported_params(&self) -> &'static [&'static str] {
        &["var_names", "groupby", "show"]
    }

    fn translate(&self, data: &DataHandle, args: &BoundArgs) -> Result<Translated, TranslateError> {
        let am = matrix_of("heatmap", data)?;
        let var_names = req_str_list("heatmap", args, "var_names")?;
        let groupby = opt_str("heatmap", args, "groupby")?;
        translate_heatmap(am, &var_names, groupby.as_deref(), None).map(Translated::Config)
    }
}

pub(crate) struct ViolinTranslator;

impl Translator for ViolinTranslator {
    fn name(&self) -> &'static str {
        "violin"
    }

    fn family(&self) -> Family {
        Family::Matrix
    }

    fn supported_params(&self) -> &'static [&'static str] {
        &["keys", "groupby", "show"]
    }

    fn translate(&self, data: &DataHandle, args: &BoundArgs) -> Result<Translated, TranslateError> {
        let am = matrix_of("violin", data)?;
        let keys = opt_str_list("violin", args, "keys")?.ok_or_else(|| TranslateError::MissingArgument {
            function: "violin".into(),
            param: "keys".into(),
        })?;
        let groupby = req_str("violin", args, "groupby")?;
        translate_violin(am, &keys, &groupby, None).map(Translated::Config)
    }
}
