use indexmap::IndexMap;

use crate::host::{ArgValue, BoundArgs, DataHandle};

use super::matrix::{
    DotplotTranslator, EmbeddingTranslator, HeatmapTranslator, ScatterTranslator, SpatialMatrixTranslator,
    ViolinTranslator,
};
use super::spatial::{ElementKind, RenderTranslator, SpatialLayer};
use super::{TranslateError, TranslationResult};

/// Which host namespace a translator's function lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Functions taking an annotated matrix (`sc.pl.*`).
    Matrix,
    /// Chainable render calls on spatial elements (`sdata.pl.render_*`).
    SpatialRender,
}

impl Family {
    pub fn default_namespace(self) -> &'static str {
        match self {
            Family::Matrix => crate::host::MATRIX_NAMESPACE,
            Family::SpatialRender => crate::host::SPATIAL_NAMESPACE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Translated {
    Config(TranslationResult),
    /// A spatial render call contributes one layer; `show` builds the config.
    Layer(SpatialLayer),
}

/// Interactive counterpart of one host plotting function.
pub trait Translator: Send + Sync {
    fn name(&self) -> &'static str;
    fn family(&self) -> Family;
    /// Parameters handled interactively; any other argument falls back to
    /// the static function.
    fn supported_params(&self) -> &'static [&'static str];
    fn translate(&self, data: &DataHandle, args: &BoundArgs) -> Result<Translated, TranslateError>;
}

pub struct TranslatorRegistry {
    entries: IndexMap<&'static str, Box<dyn Translator>>,
}

impl Default for TranslatorRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl TranslatorRegistry {
    pub fn empty() -> Self {
        TranslatorRegistry {
            entries: IndexMap::new(),
        }
    }

    /// The nine matrix-plot and four spatial-render translators.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(EmbeddingTranslator::generic()));
        r.register(Box::new(EmbeddingTranslator::fixed("pca", "X_pca")));
        r.register(Box::new(EmbeddingTranslator::fixed("umap", "X_umap")));
        r.register(Box::new(EmbeddingTranslator::fixed("tsne", "X_tsne")));
        r.register(Box::new(ScatterTranslator));
        r.register(Box::new(SpatialMatrixTranslator));
        r.register(Box::new(DotplotTranslator));
        r.register(Box::new(HeatmapTranslator));
        r.register(Box::new(ViolinTranslator));
        for kind in [ElementKind::Image, ElementKind::Shapes, ElementKind::Points, ElementKind::Labels] {
            r.register(Box::new(RenderTranslator::new(kind)));
        }
        r
    }

    /// Adds or replaces the translator for its name, returning the old one.
    pub fn register(&mut self, t: Box<dyn Translator>) -> Option<Box<dyn Translator>> {
        self.entries.insert(t.name(), t)
    }

    pub fn get(&self, name: &str) -> Option<&dyn Translator> {
        self.entries.get(name).map(|t| t.as_ref())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Translator> {
        self.entries.values().map(|t| t.as_ref())
    }

    pub fn count(&self, family: Family) -> usize {
        self.iter().filter(|t| t.family() == family).count()
    }

    /// Markdown table of functions and their interactively supported parameters.
    pub fn supported_table_markdown(&self) -> String {
        let mut out = String::from(
            "# Supported plotting functions\n\n\
             Calls using only the listed parameters render interactively. Any other\n\
             parameter falls back to the original static function with a warning.\n\
             Arguments explicitly set to `None` count as not given.\n\n\
             | function | namespace | supported parameters |\n\
             |---|---|---|\n",
        );
        for t in self.iter() {
            let params: Vec<String> = t.supported_params().iter().map(|p| format!("`{p}`")).collect();
            out.push_str(&format!(
                "| `{}` | `{}` | {} |\n",
                t.name(),
                t.family().default_namespace(),
                params.join(", ")
            ));
        }
        out
    }
}

pub(crate) fn opt_str(function: &str, args: &BoundArgs, param: &str) -> Result<Option<String>, TranslateError> {
    match args.get(param) {
        None => Ok(None),
        Some(ArgValue::Str(s)) => Ok(Some(s.clone())),
        Some(other) => Err(TranslateError::InvalidArgument {
            function: function.into(),
            param: param.into(),
            reason: format!("expected a string, got {other}"),
        }),
    }
}

pub(crate) fn req_str(function: &str, args: &BoundArgs, param: &str) -> Result<String, TranslateError> {
    opt_str(function, args, param)?.ok_or_else(|| TranslateError::MissingArgument {
        function: function.into(),
        param: param.into(),
    })
}

pub(crate) fn opt_str_list(function: &str, args: &BoundArgs, param: &str) -> Result<Option<Vec<String>>, TranslateError> {
    match args.get(param) {
        None => Ok(None),
        Some(v) => v.as_str_list().map(Some).ok_or_else(|| TranslateError::InvalidArgument {
            function: function.into(),
            param: param.into(),
            reason: format!("expected a string or list of strings, got {v}"),
        }),
    }
}

pub(crate) fn req_str_list(function: &str, args: &BoundArgs, param: &str) -> Result<Vec<String>, TranslateError> {
    opt_str_list(function, args, param)?.ok_or_else(|| TranslateError::MissingArgument {
        function: function.into(),
        param: param.into(),
    })
}

pub(crate) fn opt_f64(function: &str, args: &BoundArgs, param: &str) -> Result<Option<f64>, TranslateError> {
    match args.get(param) {
        None => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| TranslateError::InvalidArgument {
            function: function.into(),
            param: param.into(),
            reason: format!("expected a number, got {v}"),
        }),
    }
}
