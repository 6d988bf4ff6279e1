//! Compiles intercepted plotting calls into a view configuration plus the
//! list of arrays that must be exported for it.
//!
//! Each supported host function has a [`Translator`] registered by name in a
//! [`TranslatorRegistry`]. [`dispatch`] looks the call up and either
//! translates it or tells the caller to run the original function.

mod matrix;
mod registry;
mod spatial;

pub use matrix::{
    translate_dotplot, translate_embedding, translate_heatmap, translate_scatter, translate_spatial_matrix,
    translate_violin, ColorSource,
};
pub use registry::{Family, Translated, Translator, TranslatorRegistry};
pub use spatial::{push_spatial_layer, translate_spatial_show, ElementKind, LayerStyle, SpatialLayer, SpatialLayerStack};

use serde_json::{json, Value};
use thiserror::Error;

use crate::host::{BoundArgs, DataHandle};
use crate::store::MatrixSelection;
use crate::viewmodel::{ComponentKind, CoordinationType, FileDecl, FileKind, GridRect, ViewConfig, ViewId, GRID_COLUMNS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranslateError {
    #[error("unknown embedding basis {0:?}")]
    UnknownBasis(String),
    #[error("embedding {basis:?} has {dim} dimension(s), need at least 2")]
    NarrowEmbedding { basis: String, dim: usize },
    #[error("color {0:?} names both an observation column and a feature")]
    AmbiguousColor(String),
    #[error("color {0:?} is neither a categorical observation column nor a feature")]
    UnknownColor(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("unknown or non-categorical group column {0:?}")]
    UnknownGroupColumn(String),
    #[error("{0:?} is neither a numeric observation column nor a feature")]
    UnknownColumn(String),
    #[error("{function}() needs argument {param:?}")]
    MissingArgument { function: String, param: String },
    #[error("{function}() argument {param:?}: {reason}")]
    InvalidArgument {
        function: String,
        param: String,
        reason: String,
    },
    #[error("{function}() cannot translate this kind of data object")]
    WrongData { function: String },
    #[error("no {kind:?} element named {name:?}")]
    UnknownElement { kind: ElementKind, name: String },
    #[error("an image layer can only be the first layer of a stack")]
    MisplacedImage,
    #[error("cannot show an empty layer stack")]
    EmptyStack,
}

/// Group-wise statistics precomputed into the matrix store.
#[derive(Debug, Clone, PartialEq)]
pub enum Summary {
    DotStats {
        group: String,
        features: Vec<String>,
        threshold: f64,
        path: String,
    },
    GroupMeans {
        group: String,
        features: Vec<String>,
        path: String,
    },
    GroupSummary {
        group: String,
        feature: String,
        path: String,
    },
}

/// Which annotated matrix a matrix store is cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixSource {
    /// The data argument of the plotting call.
    Plot,
    /// The expression table attached to spatial elements.
    SpatialTable,
}

/// Two observation columns or features combined into a 2-d embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEmbedding {
    pub path: String,
    pub x: ColorSource,
    pub y: ColorSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExportContent {
    Matrix {
        source: MatrixSource,
        selection: MatrixSelection,
        synthetic: Option<SyntheticEmbedding>,
        summaries: Vec<Summary>,
    },
    ImagePyramid { element: String },
    Circles { element: String },
    /// Spots built from an embedding of the plot matrix, one circle per observation.
    CirclesFromEmbedding { basis: String, radius: f32 },
    Points { element: String },
    Labels { element: String },
}

/// One store directory to write; `url` matches exactly one config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportEntry {
    pub url: String,
    pub kind: FileKind,
    pub content: ExportContent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationResult {
    pub config: ViewConfig,
    pub export_plan: Vec<ExportEntry>,
    pub warnings: Vec<String>,
}

impl TranslationResult {
    /// Config file urls and export-plan urls pair up one to one.
    pub fn plan_is_closed(&self) -> bool {
        let mut files: Vec<&str> = self.config.file_urls().collect();
        let mut plan: Vec<&str> = self.export_plan.iter().map(|e| e.url.as_str()).collect();
        files.sort_unstable();
        plan.sort_unstable();
        let unique = plan.windows(2).all(|w| w[0] != w[1]);
        unique && files == plan
    }
}

/// A plotting call as seen by the dispatcher.
#[derive(Debug, Clone)]
pub struct PlotCall {
    pub function: String,
    pub data: DataHandle,
    pub args: BoundArgs,
}

#[derive(Debug, Clone)]
pub enum Dispatch {
    Translated(Translated),
    /// Run the original function. Carries a warning when the call was
    /// recognized but could not be translated.
    PassThrough { warning: Option<String> },
}

/// Routes a call to its translator. Registry misses pass through silently;
/// unsupported arguments or translation failures pass through with a warning.
pub fn dispatch(registry: &TranslatorRegistry, call: &PlotCall) -> Dispatch {
    let Some(translator) = registry.get(&call.function) else {
        return Dispatch::PassThrough { warning: None };
    };
    let supported = translator.supported_params();
    if let Some(arg) = call.args.keys().find(|k| !supported.contains(&k.as_str())) {
        return Dispatch::PassThrough {
            warning: Some(format!(
                "{}(): argument {arg:?} is not supported interactively; using the static plot",
                call.function
            )),
        };
    }
    match translator.translate(&call.data, &call.args) {
        Ok(t) => Dispatch::Translated(t),
        Err(e) => Dispatch::PassThrough {
            warning: Some(format!("{}(): {e}; using the static plot", call.function)),
        },
    }
}

/// Views of a composed config, by role.
pub(crate) struct Composed {
    pub config: ViewConfig,
    pub main: ViewId,
    pub feature_list: Option<ViewId>,
    pub obs_sets: Option<ViewId>,
    pub layer_controller: Option<ViewId>,
}

impl Composed {
    pub fn all_views(&self) -> Vec<ViewId> {
        std::iter::once(self.main)
            .chain(self.feature_list)
            .chain(self.obs_sets)
            .chain(self.layer_controller)
            .collect()
    }

    pub fn link(&mut self, views: &[ViewId], ctype: CoordinationType, value: Value) {
        self.config
            .link_views(views, ctype, value)
            .expect("composed views are in the layout");
    }
}

/// Main view in columns 0..8 at full height; auxiliary views stacked in
/// columns 8..12 in fixed order: feature list, observation sets, layer
/// controller. All views share one dataset scope.
pub(crate) fn compose(
    name: &str,
    dataset: &str,
    files: Vec<FileDecl>,
    main: ComponentKind,
    feature_list: bool,
    obs_sets: bool,
    layer_controller: bool,
) -> Composed {
    const ROWS: u32 = 12;
    const MAIN_WIDTH: u32 = 8;
    let mut config = ViewConfig::new(name);
    let uid = config.add_dataset(dataset, files).expect("fresh config");
    let main = config.add_view(
        main,
        GridRect {
            x: 0,
            y: 0,
            w: MAIN_WIDTH,
            h: ROWS,
        },
    );
    let wanted = [
        (ComponentKind::FeatureList, feature_list),
        (ComponentKind::ObsSetList, obs_sets),
        (ComponentKind::LayerController, layer_controller),
    ];
    let n_aux = wanted.iter().filter(|(_, w)| *w).count() as u32;
    let mut ids = [None, None, None];
    let mut y = 0;
    let mut placed = 0;
    for (slot, (kind, want)) in wanted.into_iter().enumerate() {
        if !want {
            continue;
        }
        placed += 1;
        // the last auxiliary view absorbs the remainder rows
        let h = if placed == n_aux { ROWS - y } else { ROWS / n_aux };
        ids[slot] = Some(config.add_view(
            kind,
            GridRect {
                x: MAIN_WIDTH,
                y,
                w: GRID_COLUMNS - MAIN_WIDTH,
                h,
            },
        ));
        y += h;
    }
    let mut composed = Composed {
        config,
        main,
        feature_list: ids[0],
        obs_sets: ids[1],
        layer_controller: ids[2],
    };
    let views = composed.all_views();
    composed.link(&views, CoordinationType::Dataset, json!(uid));
    composed
}

pub(crate) fn file(url: &str, kind: FileKind, options: Value) -> FileDecl {
    let options = match options {
        Value::Object(map) => map.into_iter().collect(),
        Value::Null => Default::default(),
        other => panic!("file options must be an object, got {other}"),
    };
    FileDecl {
        url: url.to_string(),
        kind,
        options,
    }
}
