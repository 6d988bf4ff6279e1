//! Host plotting namespaces.
//!
//! A namespace maps attribute names to shared callables. Callers always
//! resolve through the namespace at call time, so swapping an entry changes
//! what every subsequent call runs, and putting the original `Arc` back
//! restores it by identity.

mod stub;

pub use stub::{StaticFigure, StaticPlot, StubHost, MATRIX_NAMESPACE, SPATIAL_NAMESPACE};

use std::fmt;
use std::sync::{Arc, RwLock};

use indexmap::IndexMap;
use thiserror::Error;

use crate::bridge::{BridgeError, InteractivePlotHandle};
use crate::spatial::SpatialElements;
use crate::stats::AnnotatedMatrix;
use crate::translate::{SpatialLayer, TranslateError};

#[derive(Debug, Clone, PartialEq)]
pub enum ArgValue {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    StrList(Vec<String>),
}

impl ArgValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            ArgValue::Str(s) => Some(s),
            _ => None,
        }
    }

    /// A single string is a one-element list.
    pub fn as_str_list(&self) -> Option<Vec<String>> {
        match self {
            ArgValue::Str(s) => Some(vec![s.clone()]),
            ArgValue::StrList(v) => Some(v.clone()),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ArgValue::Int(i) => Some(*i as f64),
            ArgValue::Float(f) => Some(*f),
            _ => None,
        }
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::None => f.write_str("None"),
            ArgValue::Bool(b) => write!(f, "{b}"),
            ArgValue::Int(i) => write!(f, "{i}"),
            ArgValue::Float(x) => write!(f, "{x}"),
            ArgValue::Str(s) => write!(f, "{s:?}"),
            ArgValue::StrList(v) => write!(f, "{v:?}"),
        }
    }
}

impl From<&str> for ArgValue {
    fn from(s: &str) -> Self {
        ArgValue::Str(s.to_string())
    }
}

impl From<String> for ArgValue {
    fn from(s: String) -> Self {
        ArgValue::Str(s)
    }
}

impl From<Vec<&str>> for ArgValue {
    fn from(v: Vec<&str>) -> Self {
        ArgValue::StrList(v.into_iter().map(str::to_string).collect())
    }
}

impl From<Vec<String>> for ArgValue {
    fn from(v: Vec<String>) -> Self {
        ArgValue::StrList(v)
    }
}

impl From<bool> for ArgValue {
    fn from(b: bool) -> Self {
        ArgValue::Bool(b)
    }
}

impl From<i64> for ArgValue {
    fn from(i: i64) -> Self {
        ArgValue::Int(i)
    }
}

impl From<f64> for ArgValue {
    fn from(x: f64) -> Self {
        ArgValue::Float(x)
    }
}

/// Arguments as written at the call site.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotArgs {
    pub positional: Vec<ArgValue>,
    pub keyword: IndexMap<String, ArgValue>,
}

impl PlotArgs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn arg(mut self, value: impl Into<ArgValue>) -> Self {
        self.positional.push(value.into());
        self
    }

    pub fn kw(mut self, name: &str, value: impl Into<ArgValue>) -> Self {
        self.keyword.insert(name.to_string(), value.into());
        self
    }
}

/// Arguments bound to parameter names, explicit `None`s dropped.
pub type BoundArgs = IndexMap<String, ArgValue>;

/// Ordered parameter names after the data argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    params: Vec<String>,
}

impl Signature {
    pub fn new(params: &[&str]) -> Self {
        Signature {
            params: params.iter().map(|p| p.to_string()).collect(),
        }
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    /// True when every parameter of `other` is accepted here at the same
    /// positional index.
    pub fn accepts_all(&self, other: &Signature) -> bool {
        other.params.iter().enumerate().all(|(i, p)| self.params.get(i) == Some(p))
    }

    pub fn bind(&self, function: &str, args: &PlotArgs) -> Result<BoundArgs, PlotError> {
        if args.positional.len() > self.params.len() {
            return Err(PlotError::Signature(format!(
                "{function}() takes {} positional arguments but {} were given",
                self.params.len(),
                args.positional.len()
            )));
        }
        let mut bound = BoundArgs::new();
        for (name, value) in self.params.iter().zip(&args.positional) {
            bound.insert(name.clone(), value.clone());
        }
        for (name, value) in &args.keyword {
            if !self.params.contains(name) {
                return Err(PlotError::Signature(format!(
                    "{function}() got an unexpected keyword argument {name:?}"
                )));
            }
            if bound.contains_key(name) {
                return Err(PlotError::Signature(format!(
                    "{function}() got multiple values for argument {name:?}"
                )));
            }
            bound.insert(name.clone(), value.clone());
        }
        bound.retain(|_, v| *v != ArgValue::None);
        Ok(bound)
    }
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("{0}")]
    Signature(String),
    #[error("cannot show an empty layer stack")]
    EmptyStack,
    #[error("{function}() cannot plot this data: {reason}")]
    Data { function: String, reason: String },
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

/// The data argument of a plotting call.
#[derive(Debug, Clone)]
pub enum DataHandle {
    Matrix(Arc<AnnotatedMatrix>),
    Spatial(SpatialChain),
}

impl From<Arc<AnnotatedMatrix>> for DataHandle {
    fn from(am: Arc<AnnotatedMatrix>) -> Self {
        DataHandle::Matrix(am)
    }
}

impl From<SpatialChain> for DataHandle {
    fn from(chain: SpatialChain) -> Self {
        DataHandle::Spatial(chain)
    }
}

/// What a plotting call returns.
#[derive(Debug, Clone)]
pub enum PlotOutput {
    Static(StaticFigure),
    /// Chainable result of a spatial render call; finish with `show()`.
    Spatial(SpatialChain),
    Interactive(InteractivePlotHandle),
}

impl PlotOutput {
    pub fn into_interactive(self) -> Option<InteractivePlotHandle> {
        match self {
            PlotOutput::Interactive(h) => Some(h),
            _ => None,
        }
    }

    pub fn into_static(self) -> Option<StaticFigure> {
        match self {
            PlotOutput::Static(f) => Some(f),
            _ => None,
        }
    }

    pub fn into_chain(self) -> Option<SpatialChain> {
        match self {
            PlotOutput::Spatial(c) => Some(c),
            _ => None,
        }
    }
}

pub trait PlotFunction: Send + Sync {
    fn name(&self) -> &str;
    fn signature(&self) -> &Signature;
    fn call(&self, data: &DataHandle, args: &PlotArgs) -> Result<PlotOutput, PlotError>;
}

pub type Callable = Arc<dyn PlotFunction>;

/// Finishes a chain whose layers were all accepted interactively.
pub trait ShowHook: Send + Sync {
    fn show(&self, chain: &SpatialChain) -> Result<PlotOutput, PlotError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedLayer {
    pub function: String,
    pub args: BoundArgs,
    /// Set when the layer was accepted by an interactive replacement.
    pub interactive: Option<SpatialLayer>,
}

/// Spatial elements plus the render calls accumulated on them.
#[derive(Clone)]
pub struct SpatialChain {
    pub elements: Arc<SpatialElements>,
    pub layers: Vec<RenderedLayer>,
    show_hook: Option<Arc<dyn ShowHook>>,
}

impl fmt::Debug for SpatialChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialChain")
            .field("layers", &self.layers)
            .field("show_hook", &self.show_hook.is_some())
            .finish_non_exhaustive()
    }
}

impl SpatialChain {
    pub fn new(elements: Arc<SpatialElements>) -> Self {
        SpatialChain {
            elements,
            layers: Vec::new(),
            show_hook: None,
        }
    }

    pub fn push(&self, layer: RenderedLayer, hook: Option<Arc<dyn ShowHook>>) -> SpatialChain {
        let mut next = self.clone();
        next.layers.push(layer);
        if hook.is_some() {
            next.show_hook = hook;
        }
        next
    }

    pub fn is_interactive(&self) -> bool {
        self.show_hook.is_some() && !self.layers.is_empty() && self.layers.iter().all(|l| l.interactive.is_some())
    }

    /// Interactive when every layer was accepted interactively; otherwise a
    /// static figure of all layers.
    pub fn show(&self) -> Result<PlotOutput, PlotError> {
        if self.layers.is_empty() {
            return Err(PlotError::EmptyStack);
        }
        match &self.show_hook {
            Some(hook) if self.is_interactive() => hook.show(self),
            _ => Ok(PlotOutput::Static(StaticFigure {
                function: "show".into(),
                args: BoundArgs::new(),
                layers: self.layers.iter().map(|l| l.function.clone()).collect(),
            })),
        }
    }
}

/// A named table of callables, e.g. the `pl` module of a host library.
pub struct Namespace {
    path: String,
    entries: RwLock<IndexMap<String, Callable>>,
}

impl fmt::Debug for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Namespace")
            .field("path", &self.path)
            .field("entries", &self.names())
            .finish()
    }
}

impl Namespace {
    pub fn new(path: &str) -> Self {
        Namespace {
            path: path.to_string(),
            entries: RwLock::new(IndexMap::new()),
        }
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn resolve(&self, name: &str) -> Option<Callable> {
        self.entries.read().expect("namespace lock").get(name).cloned()
    }

    /// Binds `name`, returning the previous entry.
    pub fn set(&self, name: &str, f: Callable) -> Option<Callable> {
        self.entries.write().expect("namespace lock").insert(name.to_string(), f)
    }

    pub fn remove(&self, name: &str) -> Option<Callable> {
        self.entries.write().expect("namespace lock").shift_remove(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.read().expect("namespace lock").keys().cloned().collect()
    }
}

/// Dotted namespace path -> namespace, as handed to the patch builder.
pub type HostNamespaces = IndexMap<String, Arc<Namespace>>;

/// Splits "a.b.c" into ("a.b", "c").
pub fn split_target(target: &str) -> Option<(&str, &str)> {
    target.rsplit_once('.')
}

/// Resolves a dotted target against `namespaces`.
pub fn resolve(namespaces: &HostNamespaces, target: &str) -> Option<Callable> {
    let (ns, name) = split_target(target)?;
    namespaces.get(ns)?.resolve(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bind_positional_then_keyword() {
        let sig = Signature::new(&["var_names", "groupby", "show"]);
        let args = PlotArgs::new().arg(vec!["a", "b"]).kw("groupby", "louvain").kw("show", ArgValue::None);
        let bound = sig.bind("dotplot", &args).unwrap();
        assert_eq!(bound.len(), 2);
        assert_eq!(bound["groupby"], ArgValue::from("louvain"));
    }

    #[test]
    fn bind_errors_mirror_host_type_errors() {
        let sig = Signature::new(&["color"]);
        assert!(sig.bind("f", &PlotArgs::new().kw("ncols", 3i64)).is_err());
        assert!(sig.bind("f", &PlotArgs::new().arg("a").arg("b")).is_err());
        assert!(sig.bind("f", &PlotArgs::new().arg("a").kw("color", "b")).is_err());
    }

    #[test]
    fn signature_superset() {
        let small = Signature::new(&["a", "b"]);
        let big = Signature::new(&["a", "b", "c"]);
        assert!(big.accepts_all(&small));
        assert!(!small.accepts_all(&big));
        assert!(!Signature::new(&["b", "a"]).accepts_all(&small));
    }
}
