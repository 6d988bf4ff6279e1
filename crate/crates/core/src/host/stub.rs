//! Hermetic stand-in for the host plotting API: same namespace shape and
//! parameter lists, static "figures" as return values, call counters for
//! pass-through assertions.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::{
    BoundArgs, Callable, DataHandle, HostNamespaces, Namespace, PlotArgs, PlotError, PlotFunction, PlotOutput,
    RenderedLayer, Signature,
};

pub const MATRIX_NAMESPACE: &str = "sc.pl";
pub const SPATIAL_NAMESPACE: &str = "sdata.pl";

/// Parameter lists of the stub host, data argument excluded.
const MATRIX_FUNCTIONS: &[(&str, &[&str])] = &[
    (
        "embedding",
        &[
            "basis", "color", "gene_symbols", "use_raw", "layer", "ncols", "title", "palette", "show", "save", "ax",
            "return_fig",
        ],
    ),
    (
        "pca",
        &[
            "color", "gene_symbols", "use_raw", "layer", "ncols", "title", "palette", "show", "save", "ax", "return_fig",
        ],
    ),
    (
        "umap",
        &[
            "color", "gene_symbols", "use_raw", "layer", "ncols", "title", "palette", "show", "save", "ax", "return_fig",
        ],
    ),
    (
        "tsne",
        &[
            "color", "gene_symbols", "use_raw", "layer", "ncols", "title", "palette", "show", "save", "ax", "return_fig",
        ],
    ),
    (
        "scatter",
        &["x", "y", "color", "use_raw", "layers", "basis", "title", "palette", "show", "save", "ax"],
    ),
    (
        "spatial",
        &["color", "basis", "img_key", "spot_size", "ncols", "title", "palette", "show", "save", "ax"],
    ),
    (
        "dotplot",
        &[
            "var_names", "groupby", "use_raw", "log", "expression_cutoff", "mean_only_expressed", "standard_scale",
            "title", "dendrogram", "swap_axes", "show", "save", "ax", "return_fig",
        ],
    ),
    (
        "heatmap",
        &[
            "var_names", "groupby", "use_raw", "log", "standard_scale", "dendrogram", "swap_axes", "show", "save", "ax",
        ],
    ),
    (
        "violin",
        &[
            "keys", "groupby", "log", "use_raw", "stripplot", "jitter", "rotation", "multi_panel", "xlabel", "ylabel",
            "show", "save", "ax",
        ],
    ),
    ("dendrogram", &["groupby", "dendrogram_key", "orientation", "show", "save", "ax"]),
    ("rank_genes_groups", &["groups", "n_genes", "gene_symbols", "key", "fontsize", "ncols", "show", "save", "ax"]),
];

const SPATIAL_FUNCTIONS: &[(&str, &[&str])] = &[
    ("render_images", &["element", "channel", "cmap", "alpha", "palette", "scale"]),
    (
        "render_shapes",
        &["element", "color", "fill_alpha", "groups", "palette", "outline_alpha", "cmap", "size"],
    ),
    ("render_points", &["element", "color", "alpha", "groups", "palette", "cmap", "size"]),
    (
        "render_labels",
        &["element", "color", "fill_alpha", "outline_alpha", "groups", "palette", "cmap"],
    ),
];

/// What a static call "drew".
#[derive(Debug, Clone, PartialEq)]
pub struct StaticFigure {
    pub function: String,
    pub args: BoundArgs,
    /// Render calls composited by a spatial `show`.
    pub layers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Matrix,
    SpatialRender,
}

/// An original (static) host plotting function.
pub struct StaticPlot {
    name: String,
    signature: Signature,
    family: Family,
    calls: AtomicUsize,
}

impl StaticPlot {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl PlotFunction for StaticPlot {
    fn name(&self) -> &str {
        &self.name
    }

    fn signature(&self) -> &Signature {
        &self.signature
    }

    fn call(&self, data: &DataHandle, args: &PlotArgs) -> Result<PlotOutput, PlotError> {
        let bound = self.signature.bind(&self.name, args)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        match (self.family, data) {
            (Family::Matrix, DataHandle::Matrix(_)) => Ok(PlotOutput::Static(StaticFigure {
                function: self.name.clone(),
                args: bound,
                layers: Vec::new(),
            })),
            (Family::SpatialRender, DataHandle::Spatial(chain)) => Ok(PlotOutput::Spatial(chain.push(
                RenderedLayer {
                    function: self.name.clone(),
                    args: bound,
                    interactive: None,
                },
                None,
            ))),
            _ => Err(PlotError::Data {
                function: self.name.clone(),
                reason: "wrong kind of data object".into(),
            }),
        }
    }
}

/// Stub host with a matrix plotting namespace (`sc.pl`) and a spatial
/// rendering namespace (`sdata.pl`).
pub struct StubHost {
    pub matrix: Arc<Namespace>,
    pub spatial: Arc<Namespace>,
    originals: Vec<(String, Arc<StaticPlot>)>,
}

impl Default for StubHost {
    fn default() -> Self {
        Self::new()
    }
}

impl StubHost {
    pub fn new() -> Self {
        let matrix = Arc::new(Namespace::new(MATRIX_NAMESPACE));
        let spatial = Arc::new(Namespace::new(SPATIAL_NAMESPACE));
        let mut originals = Vec::new();
        for (ns, family, table) in [
            (&matrix, Family::Matrix, MATRIX_FUNCTIONS),
            (&spatial, Family::SpatialRender, SPATIAL_FUNCTIONS),
        ] {
            for (name, params) in table {
                let f = Arc::new(StaticPlot {
                    name: name.to_string(),
                    signature: Signature::new(params),
                    family,
                    calls: AtomicUsize::new(0),
                });
                ns.set(name, f.clone() as Callable);
                originals.push((format!("{}.{name}", ns.path()), f));
            }
        }
        StubHost {
            matrix,
            spatial,
            originals,
        }
    }

    /// Host install missing some functions (older or trimmed release).
    pub fn without(names: &[&str]) -> Self {
        let host = Self::new();
        for name in names {
            host.matrix.remove(name);
            host.spatial.remove(name);
        }
        host
    }

    pub fn namespaces(&self) -> HostNamespaces {
        let mut map = HostNamespaces::new();
        map.insert(MATRIX_NAMESPACE.to_string(), self.matrix.clone());
        map.insert(SPATIAL_NAMESPACE.to_string(), self.spatial.clone());
        map
    }

    /// The original function object for a dotted target, whether or not it
    /// is currently bound.
    pub fn original(&self, target: &str) -> Option<Arc<StaticPlot>> {
        self.originals.iter().find(|(t, _)| t == target).map(|(_, f)| f.clone())
    }

    pub fn original_callable(&self, target: &str) -> Option<Callable> {
        self.original(target).map(|f| f as Callable)
    }

    /// Calls whatever `target` currently resolves to.
    pub fn call(&self, target: &str, data: &DataHandle, args: PlotArgs) -> Result<PlotOutput, PlotError> {
        let f = super::resolve(&self.namespaces(), target)
            .ok_or_else(|| PlotError::Signature(format!("module has no attribute {target:?}")))?;
        f.call(data, &args)
    }

    pub fn calls(&self, target: &str) -> usize {
        self.original(target).map_or(0, |f| f.calls())
    }
}
