//! Turns a translation into something a notebook can show: exports its
//! data, serves it, and embeds the viewer in an iframe.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::json;
use thiserror::Error;

use crate::serve::{self, ServeError, Server};
use crate::spatial::{Circles, SpatialElements};
use crate::stats::{self, AnnotatedMatrix, ObsColumn, StatsError};
use crate::store::{
    chunk_shape_for, export_circles, export_image_pyramid, export_labels, export_points, write_matrix, StoreError,
    StoreWriter, WriteMode,
};
use crate::translate::{ColorSource, ExportContent, ExportEntry, MatrixSource, Summary, TranslationResult};
use crate::viewmodel::{ViewConfig, ViewModelError};

pub const CONFIG_FILE: &str = "config.json";
pub const FRAME_WIDTH: u32 = 900;
pub const FRAME_HEIGHT: u32 = 600;
/// Pyramids stop once the longest edge fits this many pixels.
pub const PYRAMID_MIN_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error(transparent)]
    ViewModel(#[from] ViewModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("base url override {0:?} is not an absolute url")]
    InvalidOverride(String),
    #[error("export plan needs {0}, which was not provided")]
    MissingSource(&'static str),
    #[error("no {kind} element named {name:?}")]
    UnknownElement { kind: &'static str, name: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BridgeError + '_ {
    move |source| BridgeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The objects an export plan reads from.
#[derive(Debug, Clone, Default)]
pub struct DataSources {
    pub matrix: Option<Arc<AnnotatedMatrix>>,
    pub spatial: Option<Arc<SpatialElements>>,
}

/// Return value of every interactive plotting call.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractivePlotHandle {
    /// The translation, its config rewritten to served urls.
    pub result: TranslationResult,
    pub mount_uid: String,
    pub config_url: String,
    pub viewer_url: String,
    pub base_url: String,
    pub dir: PathBuf,
}

impl InteractivePlotHandle {
    pub fn config(&self) -> &ViewConfig {
        &self.result.config
    }
}

enum ServerSource {
    Global,
    Instance(Arc<Server>),
}

/// Writes export plans into fresh directories under a root and mounts them.
pub struct Materializer {
    server: ServerSource,
    root: PathBuf,
    counter: AtomicUsize,
}

impl Materializer {
    /// Uses the per-process server (started on demand) and a per-process
    /// directory under the system temp dir.
    pub fn global() -> Self {
        Materializer {
            server: ServerSource::Global,
            root: std::env::temp_dir().join(format!("plotmorph-{}", std::process::id())),
            counter: AtomicUsize::new(0),
        }
    }

    pub fn with_server(server: Arc<Server>, root: impl Into<PathBuf>) -> Self {
        Materializer {
            server: ServerSource::Instance(server),
            root: root.into(),
            counter: AtomicUsize::new(0),
        }
    }

    fn server(&self) -> Result<Arc<Server>, BridgeError> {
        match &self.server {
            ServerSource::Instance(s) => Ok(s.clone()),
            ServerSource::Global => {
                serve::start(None)?;
                Ok(serve::global().ok_or(ServeError::NotStarted)?)
            }
        }
    }

    fn fresh_dir(&self) -> Result<PathBuf, BridgeError> {
        std::fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        loop {
            let n = self.counter.fetch_add(1, Ordering::SeqCst);
            let dir = self.root.join(format!("plot-{n}"));
            match std::fs::create_dir(&dir) {
                Ok(()) => return Ok(dir),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(io_err(&dir)(e)),
            }
        }
    }

    pub fn materialize(
        &self,
        result: &TranslationResult,
        sources: &DataSources,
    ) -> Result<InteractivePlotHandle, BridgeError> {
        let server = self.server()?;
        let dir = self.fresh_dir()?;
        for entry in &result.export_plan {
            execute_entry(entry, sources, &dir.join(&entry.url))?;
        }
        let mount = server.mount(&dir)?;
        let mut served = result.clone();
        for dataset in &mut served.config.datasets {
            for file in &mut dataset.files {
                file.url = format!("{}{}", mount.prefix, file.url);
            }
        }
        let text = served.config.serialize()?;
        let config_path = dir.join(CONFIG_FILE);
        std::fs::write(&config_path, text).map_err(io_err(&config_path))?;
        let config_url = format!("{}{CONFIG_FILE}", mount.prefix);
        let viewer_url = viewer_url(server.base_url(), &config_url);
        Ok(InteractivePlotHandle {
            result: served,
            mount_uid: mount.uid,
            config_url,
            viewer_url,
            base_url: server.base_url().to_string(),
            dir,
        })
    }
}

pub fn viewer_url(base_url: &str, config_url: &str) -> String {
    let encoded: String = url::form_urlencoded::byte_serialize(config_url.as_bytes()).collect();
    format!("{base_url}/viewer/index.html?config={encoded}")
}

fn matrix_source<'a>(source: MatrixSource, sources: &'a DataSources) -> Result<&'a AnnotatedMatrix, BridgeError> {
    match source {
        MatrixSource::Plot => sources.matrix.as_deref().ok_or(BridgeError::MissingSource("a matrix")),
        MatrixSource::SpatialTable => spatial_source(sources)?
            .table
            .as_ref()
            .ok_or(BridgeError::MissingSource("a spatial table")),
    }
}

fn spatial_source(sources: &DataSources) -> Result<&SpatialElements, BridgeError> {
    sources.spatial.as_deref().ok_or(BridgeError::MissingSource("spatial elements"))
}

fn element<'a, T>(map: &'a indexmap::IndexMap<String, T>, kind: &'static str, name: &str) -> Result<&'a T, BridgeError> {
    map.get(name).ok_or_else(|| BridgeError::UnknownElement {
        kind,
        name: name.into(),
    })
}

/// Per-observation values of a numeric column or a feature.
fn source_values(am: &AnnotatedMatrix, source: &ColorSource) -> Result<Vec<f32>, StoreError> {
    match source {
        ColorSource::Numeric(name) => match am.obs_columns.get(name) {
            Some(ObsColumn::Numeric(v)) => Ok(v.clone()),
            _ => Err(StoreError::UnknownObsColumn(name.clone())),
        },
        ColorSource::Feature(name) => {
            let col = am.feature_index(name).ok_or_else(|| StoreError::UnknownFeature(name.clone()))?;
            Ok((0..am.n_obs()).map(|r| am.x.get(r, col)).collect())
        }
        ColorSource::Categorical(name) => match am.obs_columns.get(name) {
            Some(ObsColumn::Categorical { codes, .. }) => Ok(codes.iter().map(|&c| c as f32).collect()),
            _ => Err(StoreError::UnknownObsColumn(name.clone())),
        },
    }
}

fn write_table(w: &mut StoreWriter, path: &str, rows: usize, cols: usize, values: &[f64]) -> Result<(), StoreError> {
    let data: Vec<f32> = values.iter().map(|&v| v as f32).collect();
    let shape = [rows, cols];
    w.write_array(path, &shape, &chunk_shape_for(&shape, &shape), &data)
}

fn write_summary(w: &mut StoreWriter, am: &AnnotatedMatrix, summary: &Summary) -> Result<(), BridgeError> {
    match summary {
        Summary::DotStats {
            group,
            features,
            threshold,
            path,
        } => {
            let t = stats::dotplot_stats(am, group, features, *threshold)?;
            let (g, f) = (t.groups.len(), t.features.len());
            write_table(w, &format!("{path}/fraction"), g, f, &t.fraction_expressing)?;
            write_table(w, &format!("{path}/mean"), g, f, &t.mean_expression)?;
            w.set_attribute(
                path,
                json!({ "groups": t.groups, "features": t.features, "threshold": threshold }),
            );
        }
        Summary::GroupMeans { group, features, path } => {
            let m = stats::aggregate_means(am, group, features)?;
            write_table(w, path, m.groups.len(), m.features.len(), &m.values)?;
            w.set_attribute(path, json!({ "groups": m.groups, "features": m.features }));
        }
        Summary::GroupSummary { group, feature, path } => {
            let rows = stats::group_summary(am, group, feature)?;
            let values: Vec<f64> = rows
                .iter()
                .flat_map(|s| [s.min, s.q1, s.median, s.q3, s.max, s.n as f64])
                .collect();
            write_table(w, path, rows.len(), 6, &values)?;
            w.set_attribute(
                path,
                json!({
                    "groups": rows.iter().map(|s| s.group.as_str()).collect::<Vec<_>>(),
                    "feature": feature,
                    "columns": ["min", "q1", "median", "q3", "max", "n"],
                }),
            );
        }
    }
    Ok(())
}

/// Writes one export-plan entry into `dir`.
pub fn execute_entry(entry: &ExportEntry, sources: &DataSources, dir: &Path) -> Result<(), BridgeError> {
    let mode = WriteMode::CreateNew;
    match &entry.content {
        ExportContent::Matrix {
            source,
            selection,
            synthetic,
            summaries,
        } => {
            let am = matrix_source(*source, sources)?;
            let mut w = StoreWriter::create(dir, mode)?;
            write_matrix(&mut w, am, selection)?;
            if let Some(s) = synthetic {
                let xs = source_values(am, &s.x)?;
                let ys = source_values(am, &s.y)?;
                let xy: Vec<f32> = xs.iter().zip(&ys).flat_map(|(&x, &y)| [x, y]).collect();
                let shape = [am.n_obs(), 2];
                w.write_array(
                    &s.path,
                    &shape,
                    &chunk_shape_for(&shape, &[crate::store::OBS_CHUNK_ROWS, 2]),
                    &xy,
                )?;
            }
            for summary in summaries {
                write_summary(&mut w, am, summary)?;
            }
            w.finish()?;
        }
        ExportContent::ImagePyramid { element: name } => {
            let image = element(&spatial_source(sources)?.images, "image", name)?;
            export_image_pyramid(image, dir, PYRAMID_MIN_DIM, mode)?;
        }
        ExportContent::Circles { element: name } => {
            export_circles(element(&spatial_source(sources)?.shapes, "shapes", name)?, dir, mode)?;
        }
        ExportContent::CirclesFromEmbedding { basis, radius } => {
            let am = matrix_source(MatrixSource::Plot, sources)?;
            let emb = am.embeddings.get(basis).ok_or_else(|| StoreError::UnknownBasis(basis.clone()))?;
            let xyr: Vec<f32> = emb
                .values
                .chunks(emb.dim)
                .flat_map(|row| [row[0], row[1], *radius])
                .collect();
            export_circles(&Circles::new(am.obs_ids.clone(), xyr), dir, mode)?;
        }
        ExportContent::Points { element: name } => {
            export_points(element(&spatial_source(sources)?.points, "points", name)?, dir, mode)?;
        }
        ExportContent::Labels { element: name } => {
            export_labels(element(&spatial_source(sources)?.labels, "labels", name)?, dir, mode)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Environment {
    Notebook,
    Plain,
}

/// Environment variables set by notebook kernels with an HTML display hook.
const NOTEBOOK_MARKERS: &[&str] = &["EVCXR_IS_RUNTIME", "JPY_PARENT_PID", "MARIMO_SERVER", "COLAB_RELEASE_TAG"];
/// `notebook` or `plain` forces the result.
pub const DISPLAY_ENV: &str = "PLOTMORPH_DISPLAY";

/// Detection against an arbitrary variable lookup.
pub fn detect_environment_with(lookup: impl Fn(&str) -> Option<String>) -> Environment {
    match lookup(DISPLAY_ENV).as_deref() {
        Some("notebook") => return Environment::Notebook,
        Some("plain") => return Environment::Plain,
        _ => {}
    }
    if NOTEBOOK_MARKERS.iter().any(|k| lookup(k).is_some()) {
        Environment::Notebook
    } else {
        Environment::Plain
    }
}

pub fn detect_environment() -> Environment {
    detect_environment_with(|k| std::env::var(k).ok())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rendered {
    Html(String),
    Text(String),
}

pub fn display(handle: &InteractivePlotHandle, env: Environment) -> Rendered {
    display_sized(handle, env, FRAME_WIDTH, FRAME_HEIGHT)
}

pub fn display_sized(handle: &InteractivePlotHandle, env: Environment, width: u32, height: u32) -> Rendered {
    match env {
        Environment::Notebook => Rendered::Html(format!(
            "<iframe src=\"{}\" width=\"{width}\" height=\"{height}\" style=\"border:0\"></iframe>",
            html_escape(&handle.viewer_url)
        )),
        Environment::Plain => Rendered::Text(handle.viewer_url.clone()),
    }
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('"', "&quot;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the handle's config to `path`, optionally replacing the local
/// base url of every file url with `base_url_override`.
pub fn export_config(
    handle: &InteractivePlotHandle,
    path: &Path,
    base_url_override: Option<&str>,
) -> Result<PathBuf, BridgeError> {
    let mut config = handle.result.config.clone();
    if let Some(base) = base_url_override {
        let parsed = url::Url::parse(base).map_err(|_| BridgeError::InvalidOverride(base.into()))?;
        if parsed.cannot_be_a_base() {
            return Err(BridgeError::InvalidOverride(base.into()));
        }
        let base = base.trim_end_matches('/');
        for dataset in &mut config.datasets {
            for file in &mut dataset.files {
                if let Some(rest) = file.url.strip_prefix(&handle.base_url) {
                    file.url = format!("{base}{rest}");
                }
            }
        }
    }
    let text = config.serialize()?;
    std::fs::write(path, text).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn handle(viewer_url: &str) -> InteractivePlotHandle {
        InteractivePlotHandle {
            result: TranslationResult {
                config: ViewConfig::new("t"),
                export_plan: Vec::new(),
                warnings: Vec::new(),
            },
            mount_uid: "m0".into(),
            config_url: String::new(),
            viewer_url: viewer_url.into(),
            base_url: "http://127.0.0.1:1".into(),
            dir: PathBuf::new(),
        }
    }

    #[test]
    fn environment_detection() {
        assert_eq!(detect_environment_with(|_| None), Environment::Plain);
        assert_eq!(
            detect_environment_with(|k| (k == "JPY_PARENT_PID").then(|| "1".into())),
            Environment::Notebook
        );
        assert_eq!(
            detect_environment_with(|k| match k {
                "JPY_PARENT_PID" => Some("1".into()),
                DISPLAY_ENV => Some("plain".into()),
                _ => None,
            }),
            Environment::Plain
        );
    }

    #[test]
    fn display_modes() {
        let h = handle("http://127.0.0.1:1/viewer/index.html?config=a&b");
        let Rendered::Html(html) = display(&h, Environment::Notebook) else {
            panic!()
        };
        assert!(html.starts_with("<iframe "));
        assert!(html.contains("width=\"900\" height=\"600\""));
        assert!(html.contains("config=a&amp;b"));
        assert_eq!(display(&h, Environment::Plain), Rendered::Text(h.viewer_url.clone()));
        assert_eq!(display(&h, Environment::Notebook), display(&h, Environment::Notebook));
    }

    #[test]
    fn viewer_url_encodes_config() {
        assert_eq!(
            viewer_url("http://h:1", "http://h:1/m0/config.json"),
            "http://h:1/viewer/index.html?config=http%3A%2F%2Fh%3A1%2Fm0%2Fconfig.json"
        );
    }

    #[test]
    fn relative_override_rejected() {
        let d = tempfile::tempdir().unwrap();
        let h = handle("");
        assert!(matches!(
            export_config(&h, &d.path().join("c.json"), Some("foo/bar")),
            Err(BridgeError::InvalidOverride(_))
        ));
        assert!(matches!(
            export_config(&h, &d.path().join("c.json"), Some("mailto:a@b")),
            Err(BridgeError::InvalidOverride(_))
        ));
    }
}
