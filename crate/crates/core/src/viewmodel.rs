//! Declarative view configuration: datasets, a coordination space of named
//! shared values, and a grid layout of views bound to those values.
//!
//! Serialization is canonical JSON. Keys are emitted in schema order and
//! maps keep insertion order, so equal configs always produce equal bytes.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const CONFIG_VERSION: &str = "0.1.0";
pub const GRID_COLUMNS: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViewModelError {
    #[error("dataset name {0:?} already declared")]
    DuplicateName(String),
    #[error("dataset {0:?} declares no files")]
    NoFiles(String),
    #[error("view index {0} is not part of the layout")]
    UnknownView(usize),
    #[error("config is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CoordinationType {
    Dataset,
    EmbeddingType,
    FeatureSelection,
    ObsColorEncoding,
    ObsSetSelection,
    SpatialZoom,
    SpatialTargetX,
    SpatialTargetY,
    SpatialLayers,
}

impl CoordinationType {
    pub fn as_str(self) -> &'static str {
        match self {
            CoordinationType::Dataset => "dataset",
            CoordinationType::EmbeddingType => "embeddingType",
            CoordinationType::FeatureSelection => "featureSelection",
            CoordinationType::ObsColorEncoding => "obsColorEncoding",
            CoordinationType::ObsSetSelection => "obsSetSelection",
            CoordinationType::SpatialZoom => "spatialZoom",
            CoordinationType::SpatialTargetX => "spatialTargetX",
            CoordinationType::SpatialTargetY => "spatialTargetY",
            CoordinationType::SpatialLayers => "spatialLayers",
        }
    }
}

/// Allowed values of the `obsColorEncoding` coordination type.
pub const COLOR_BY_SETS: &str = "cellSetSelection";
pub const COLOR_BY_FEATURE: &str = "geneSelection";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ComponentKind {
    Scatterplot,
    Spatial,
    DotPlot,
    Heatmap,
    Violin,
    FeatureList,
    #[serde(rename = "obsSets")]
    ObsSetList,
    LayerController,
}

impl ComponentKind {
    pub fn is_auxiliary(self) -> bool {
        matches!(
            self,
            ComponentKind::FeatureList | ComponentKind::ObsSetList | ComponentKind::LayerController
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FileKind {
    MatrixStore,
    ImagePyramid,
    Circles,
    Points,
    Labels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDecl {
    pub url: String,
    pub kind: FileKind,
    #[serde(default)]
    pub options: IndexMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDecl {
    pub uid: String,
    pub name: String,
    pub files: Vec<FileDecl>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct View {
    pub component: ComponentKind,
    pub coordination_scopes: IndexMap<CoordinationType, String>,
    pub grid: GridRect,
}

/// Index of a view within `ViewConfig::layout`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ViewId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ViewConfig {
    pub version: String,
    pub name: String,
    pub datasets: Vec<DatasetDecl>,
    pub coordination_space: IndexMap<CoordinationType, IndexMap<String, Value>>,
    pub layout: Vec<View>,
}

/// A broken invariant, located by a JSON-path-like string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Scope and dataset names: "A".."Z", then "AA", "AB", ...
pub fn scope_name(index: usize) -> String {
    let mut n = index + 1;
    let mut out = Vec::new();
    while n > 0 {
        n -= 1;
        out.push(b'A' + (n % 26) as u8);
        n /= 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

impl ViewConfig {
    pub fn new(name: impl Into<String>) -> Self {
        ViewConfig {
            version: CONFIG_VERSION.to_string(),
            name: name.into(),
            datasets: Vec::new(),
            coordination_space: IndexMap::new(),
            layout: Vec::new(),
        }
    }

    pub fn add_dataset(&mut self, name: &str, files: Vec<FileDecl>) -> Result<String, ViewModelError> {
        if self.datasets.iter().any(|d| d.name == name) {
            return Err(ViewModelError::DuplicateName(name.to_string()));
        }
        if files.is_empty() {
            return Err(ViewModelError::NoFiles(name.to_string()));
        }
        let uid = (0..)
            .map(scope_name)
            .find(|uid| self.datasets.iter().all(|d| &d.uid != uid))
            .expect("unbounded");
        self.datasets.push(DatasetDecl {
            uid: uid.clone(),
            name: name.to_string(),
            files,
        });
        Ok(uid)
    }

    pub fn add_view(&mut self, component: ComponentKind, grid: GridRect) -> ViewId {
        self.layout.push(View {
            component,
            coordination_scopes: IndexMap::new(),
            grid,
        });
        ViewId(self.layout.len() - 1)
    }

    /// Creates a fresh scope of `ctype` holding `value` and binds every view
    /// in `views` to it. Returns the new scope name.
    pub fn link_views(&mut self, views: &[ViewId], ctype: CoordinationType, value: Value) -> Result<String, ViewModelError> {
        if let Some(bad) = views.iter().find(|v| v.0 >= self.layout.len()) {
            return Err(ViewModelError::UnknownView(bad.0));
        }
        let scopes = self.coordination_space.entry(ctype).or_default();
        let name = (scopes.len()..)
            .map(scope_name)
            .find(|n| !scopes.contains_key(n))
            .expect("unbounded");
        scopes.insert(name.clone(), value);
        for v in views {
            self.layout[v.0].coordination_scopes.insert(ctype, name.clone());
        }
        Ok(name)
    }

    pub fn scope_value(&self, ctype: CoordinationType, scope: &str) -> Option<&Value> {
        self.coordination_space.get(&ctype).and_then(|s| s.get(scope))
    }

    /// Value bound to `view` for `ctype`, if any.
    pub fn view_value(&self, view: ViewId, ctype: CoordinationType) -> Option<&Value> {
        let scope = self.layout.get(view.0)?.coordination_scopes.get(&ctype)?;
        self.scope_value(ctype, scope)
    }

    pub fn views_of(&self, kind: ComponentKind) -> impl Iterator<Item = (ViewId, &View)> {
        self.layout
            .iter()
            .enumerate()
            .filter(move |(_, v)| v.component == kind)
            .map(|(i, v)| (ViewId(i), v))
    }

    pub fn file_urls(&self) -> impl Iterator<Item = &str> {
        self.datasets.iter().flat_map(|d| d.files.iter().map(|f| f.url.as_str()))
    }

    /// Every broken invariant. Never fails.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |path: String, message: String| out.push(Violation { path, message });

        if self.version != CONFIG_VERSION {
            push("version".into(), format!("expected {CONFIG_VERSION:?}, found {:?}", self.version));
        }
        for (i, d) in self.datasets.iter().enumerate() {
            if self.datasets[..i].iter().any(|o| o.uid == d.uid) {
                push(format!("datasets[{i}].uid"), format!("duplicate dataset uid {:?}", d.uid));
            }
        }
        if let Some(scopes) = self.coordination_space.get(&CoordinationType::ObsColorEncoding) {
            for (name, value) in scopes {
                if !matches!(value.as_str(), Some(COLOR_BY_SETS) | Some(COLOR_BY_FEATURE)) {
                    push(
                        format!("coordinationSpace.obsColorEncoding.{name}"),
                        format!("value {value} is not {COLOR_BY_SETS:?} or {COLOR_BY_FEATURE:?}"),
                    );
                }
            }
        }
        if let Some(scopes) = self.coordination_space.get(&CoordinationType::Dataset) {
            for (name, value) in scopes {
                let known = value.as_str().is_some_and(|uid| self.datasets.iter().any(|d| d.uid == uid));
                if !known {
                    push(
                        format!("coordinationSpace.dataset.{name}"),
                        format!("value {value} names no declared dataset"),
                    );
                }
            }
        }
        for (i, view) in self.layout.iter().enumerate() {
            for (ctype, scope) in &view.coordination_scopes {
                if self.scope_value(*ctype, scope).is_none() {
                    push(
                        format!("layout[{i}].coordinationScopes.{}", ctype.as_str()),
                        format!("view {i} references missing scope {:?} of {}", scope, ctype.as_str()),
                    );
                }
            }
            let required: &[CoordinationType] = match view.component {
                ComponentKind::Scatterplot => &[CoordinationType::EmbeddingType],
                ComponentKind::Spatial => &[
                    CoordinationType::SpatialZoom,
                    CoordinationType::SpatialTargetX,
                    CoordinationType::SpatialTargetY,
                ],
                _ => &[],
            };
            for ctype in required {
                if !view.coordination_scopes.contains_key(ctype) {
                    push(
                        format!("layout[{i}].coordinationScopes"),
                        format!("{:?} view {i} lacks a {} scope", view.component, ctype.as_str()),
                    );
                }
            }
            let g = view.grid;
            if g.w < 1 || g.h < 1 {
                push(format!("layout[{i}].grid"), format!("w and h must be >= 1, got w={} h={}", g.w, g.h));
            }
            if g.x + g.w > GRID_COLUMNS {
                push(
                    format!("layout[{i}].grid"),
                    format!("x + w = {} exceeds {GRID_COLUMNS} columns", g.x + g.w),
                );
            }
        }
        out
    }

    /// Canonical JSON text. Refuses invalid configs.
    pub fn serialize(&self) -> Result<String, ViewModelError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(ViewModelError::Invalid(violations));
        }
        Ok(serde_json::to_string_pretty(self).expect("config values always serialize"))
    }

    pub fn deserialize(text: &str) -> Result<Self, ViewModelError> {
        serde_json::from_str(text).map_err(|e| ViewModelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}
