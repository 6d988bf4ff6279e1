//! Spatial render calls: each call adds a layer, `show` compiles the stack.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::host::{BoundArgs, DataHandle};
use crate::spatial::SpatialElements;
use crate::store::MatrixSelection;
use crate::viewmodel::{ComponentKind, CoordinationType, FileKind, COLOR_BY_FEATURE};

use super::registry::{opt_f64, opt_str, req_str, Family, Translated, Translator};
use super::{compose, file, ExportContent, ExportEntry, MatrixSource, TranslateError, TranslationResult};

/// Screen size, in pixels, the initial view fits the data into.
const INITIAL_VIEWPORT: f64 = 512.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Image,
    Shapes,
    Points,
    Labels,
}

impl ElementKind {
    pub fn render_function(self) -> &'static str {
        match self {
            ElementKind::Image => "render_images",
            ElementKind::Shapes => "render_shapes",
            ElementKind::Points => "render_points",
            ElementKind::Labels => "render_labels",
        }
    }

    fn file_kind(self) -> FileKind {
        match self {
            ElementKind::Image => FileKind::ImagePyramid,
            ElementKind::Shapes => FileKind::Circles,
            ElementKind::Points => FileKind::Points,
            ElementKind::Labels => FileKind::Labels,
        }
    }

    fn url_dir(self) -> &'static str {
        match self {
            ElementKind::Image => "images",
            ElementKind::Shapes => "shapes",
            ElementKind::Points => "points",
            ElementKind::Labels => "labels",
        }
    }

    fn layer_type(self) -> &'static str {
        match self {
            ElementKind::Image => "image",
            ElementKind::Shapes => "circles",
            ElementKind::Points => "points",
            ElementKind::Labels => "labels",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStyle {
    /// Feature of the spatial table to color by (shapes only).
    pub color: Option<String>,
    pub palette: Option<String>,
    pub opacity: f64,
}

impl Default for LayerStyle {
    fn default() -> Self {
        LayerStyle {
            color: None,
            palette: None,
            opacity: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialLayer {
    pub kind: ElementKind,
    pub element: String,
    pub style: LayerStyle,
}

/// Layers in drawing order, bottom first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpatialLayerStack {
    layers: Vec<SpatialLayer>,
}

impl SpatialLayerStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn layers(&self) -> &[SpatialLayer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub(crate) fn from_accepted(layers: Vec<SpatialLayer>) -> Self {
        SpatialLayerStack { layers }
    }
}

fn element_exists(elements: &SpatialElements, kind: ElementKind, name: &str) -> bool {
    match kind {
        ElementKind::Image => elements.images.contains_key(name),
        ElementKind::Shapes => elements.shapes.contains_key(name),
        ElementKind::Points => elements.points.contains_key(name),
        ElementKind::Labels => elements.labels.contains_key(name),
    }
}

/// Validates `layer` against `elements` and returns the stack with it on top.
pub fn push_spatial_layer(
    stack: &SpatialLayerStack,
    elements: &SpatialElements,
    layer: SpatialLayer,
) -> Result<SpatialLayerStack, TranslateError> {
    let function = layer.kind.render_function();
    if !element_exists(elements, layer.kind, &layer.element) {
        return Err(TranslateError::UnknownElement {
            kind: layer.kind,
            name: layer.element,
        });
    }
    if layer.kind == ElementKind::Image && !stack.is_empty() {
        return Err(TranslateError::MisplacedImage);
    }
    if let Some(color) = &layer.style.color {
        if layer.kind != ElementKind::Shapes {
            return Err(TranslateError::InvalidArgument {
                function: function.into(),
                param: "color".into(),
                reason: "only shapes layers can be colored by a feature".into(),
            });
        }
        if !elements.has_feature(color) {
            return Err(TranslateError::UnknownFeature(color.clone()));
        }
    }
    if !(0.0..=1.0).contains(&layer.style.opacity) {
        return Err(TranslateError::InvalidArgument {
            function: function.into(),
            param: "opacity".into(),
            reason: format!("must lie in [0, 1], got {}", layer.style.opacity),
        });
    }
    let mut next = stack.clone();
    next.layers.push(layer);
    Ok(next)
}

/// Bounding box of drawn content in level-0 pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Extent {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
}

impl Default for Extent {
    fn default() -> Self {
        Extent {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        }
    }
}

impl Extent {
    pub fn include_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.min_x = self.min_x.min(x0);
        self.min_y = self.min_y.min(y0);
        self.max_x = self.max_x.max(x1);
        self.max_y = self.max_y.max(y1);
    }

    pub fn include_circle(&mut self, x: f64, y: f64, r: f64) {
        self.include_rect(x - r, y - r, x + r, y + r);
    }

    fn is_empty(&self) -> bool {
        !(self.min_x <= self.max_x && self.min_y <= self.max_y)
    }
}

/// Zoom and target that fit `extent` into the initial viewport.
pub(crate) fn initial_view(extent: &Extent) -> (f64, f64, f64) {
    if extent.is_empty() {
        return (1.0, 0.0, 0.0);
    }
    let size = (extent.max_x - extent.min_x).max(extent.max_y - extent.min_y);
    let zoom = if size > 0.0 { INITIAL_VIEWPORT / size } else { 1.0 };
    (
        zoom,
        (extent.min_x + extent.max_x) / 2.0,
        (extent.min_y + extent.max_y) / 2.0,
    )
}

fn layer_extent(elements: &SpatialElements, layer: &SpatialLayer, extent: &mut Extent) {
    match layer.kind {
        ElementKind::Image => {
            let [_, h, w] = elements.images[&layer.element].shape();
            extent.include_rect(0.0, 0.0, w as f64, h as f64);
        }
        ElementKind::Shapes => {
            for row in elements.shapes[&layer.element].xyr.chunks(3) {
                extent.include_circle(row[0] as f64, row[1] as f64, row[2] as f64);
            }
        }
        ElementKind::Points => {
            for row in elements.points[&layer.element].xy.chunks(2) {
                extent.include_rect(row[0] as f64, row[1] as f64, row[0] as f64, row[1] as f64);
            }
        }
        ElementKind::Labels => {
            let mask = &elements.labels[&layer.element];
            extent.include_rect(0.0, 0.0, mask.width as f64, mask.height as f64);
        }
    }
}

fn layer_json(layer: &SpatialLayer) -> Value {
    let mut v = json!({
        "type": layer.kind.layer_type(),
        "element": layer.element,
        "visible": true,
        "opacity": layer.style.opacity,
    });
    if let Some(color) = &layer.style.color {
        v["colorEncoding"] = json!(COLOR_BY_FEATURE);
        v["feature"] = json!(color);
    }
    if let Some(palette) = &layer.style.palette {
        v["palette"] = json!(palette);
    }
    v
}

const TABLE_URL: &str = "table";

/// One SPATIAL view and a LAYER_CONTROLLER sharing zoom, target and layer
/// scopes; a FEATURE_LIST joins when a shapes layer is colored by a feature.
pub fn translate_spatial_show(
    elements: &SpatialElements,
    stack: &SpatialLayerStack,
    title: Option<&str>,
) -> Result<TranslationResult, TranslateError> {
    if stack.is_empty() {
        return Err(TranslateError::EmptyStack);
    }
    let mut files = Vec::new();
    let mut plan = Vec::new();
    let mut extent = Extent::default();
    let mut features: Vec<String> = Vec::new();
    for layer in stack.layers() {
        layer_extent(elements, layer, &mut extent);
        if let Some(f) = &layer.style.color {
            if !features.contains(f) {
                features.push(f.clone());
            }
        }
        let url = format!("{}/{}", layer.kind.url_dir(), layer.element);
        if plan.iter().any(|e: &ExportEntry| e.url == url) {
            continue;
        }
        let kind = layer.kind.file_kind();
        files.push(file(&url, kind, json!({ "element": layer.element })));
        let element = layer.element.clone();
        let content = match layer.kind {
            ElementKind::Image => ExportContent::ImagePyramid { element },
            ElementKind::Shapes => ExportContent::Circles { element },
            ElementKind::Points => ExportContent::Points { element },
            ElementKind::Labels => ExportContent::Labels { element },
        };
        plan.push(ExportEntry { url, kind, content });
    }
    if !features.is_empty() {
        files.push(file(
            TABLE_URL,
            FileKind::MatrixStore,
            json!({ "obsFeatureMatrix": { "path": "X" } }),
        ));
        plan.push(ExportEntry {
            url: TABLE_URL.into(),
            kind: FileKind::MatrixStore,
            content: ExportContent::Matrix {
                source: MatrixSource::SpatialTable,
                selection: MatrixSelection {
                    features: Some(features.clone()),
                    embeddings: Some(Vec::new()),
                    obs_columns: Some(Vec::new()),
                },
                synthetic: None,
                summaries: Vec::new(),
            },
        });
    }

    let mut c = compose(
        title.unwrap_or("spatial"),
        "spatial data",
        files,
        ComponentKind::Spatial,
        !features.is_empty(),
        false,
        true,
    );
    let (zoom, tx, ty) = initial_view(&extent);
    let views = [c.main, c.layer_controller.expect("layer controller composed")];
    c.link(&views, CoordinationType::SpatialZoom, json!(zoom));
    c.link(&views, CoordinationType::SpatialTargetX, json!(tx));
    c.link(&views, CoordinationType::SpatialTargetY, json!(ty));
    let layers: Vec<Value> = stack.layers().iter().map(layer_json).collect();
    c.link(&views, CoordinationType::SpatialLayers, Value::Array(layers));
    if let Some(list) = c.feature_list {
        c.link(&[c.main, list], CoordinationType::FeatureSelection, json!(features));
        c.link(&[c.main, list], CoordinationType::ObsColorEncoding, json!(COLOR_BY_FEATURE));
    }
    Ok(TranslationResult {
        config: c.config,
        export_plan: plan,
        warnings: Vec::new(),
    })
}

/// One of the four `render_*` calls.
pub(crate) struct RenderTranslator {
    kind: ElementKind,
}

impl RenderTranslator {
    pub fn new(kind: ElementKind) -> Self {
        RenderTranslator { kind }
    }
}

impl Translator for RenderTranslator {
    fn name(&self) -> &'static str {
        self.kind.render_function()
    }

    fn family(&self) -> Family {
        Family::SpatialRender
    }

    fn supported_params(&self) -> &'static [&'static str] {
        match self.kind {
            ElementKind::Image => &["element", "alpha"],
            ElementKind::Shapes => &["element", "color", "fill_alpha", "palette"],
            ElementKind::Points => &["element", "alpha", "palette"],
            ElementKind::Labels => &["element", "fill_alpha"],
        }
    }

    fn translate(&self, data: &DataHandle, args: &BoundArgs) -> Result<Translated, TranslateError> {
        let name = self.name();
        let DataHandle::Spatial(chain) = data else {
            return Err(TranslateError::WrongData { function: name.into() });
        };
        if self.kind == ElementKind::Image && !chain.layers.is_empty() {
            return Err(TranslateError::MisplacedImage);
        }
        let opacity_param = match self.kind {
            ElementKind::Shapes | ElementKind::Labels => "fill_alpha",
            ElementKind::Image | ElementKind::Points => "alpha",
        };
        let style = LayerStyle {
            color: opt_str(name, args, "color")?,
            palette: opt_str(name, args, "palette")?,
            opacity: opt_f64(name, args, opacity_param)?.unwrap_or(1.0),
        };
        let layer = SpatialLayer {
            kind: self.kind,
            element: req_str(name, args, "element")?,
            style,
        };
        let below = SpatialLayerStack::from_accepted(chain.layers.iter().filter_map(|l| l.interactive.clone()).collect());
        push_spatial_layer(&below, &chain.elements, layer.clone())?;
        Ok(Translated::Layer(layer))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{Circles, Image, LabelMask};
    use crate::stats::{AnnotatedMatrix, Expression};
    use crate::viewmodel::ViewId;

    fn elements() -> SpatialElements {
        let mut e = SpatialElements::default();
        e.images.insert("hne".into(), Image::filled(3, 40, 60, 0.5));
        e.shapes.insert(
            "spots".into(),
            Circles::new(vec!["s0".into(), "s1".into()], vec![10.0, 10.0, 2.0, 50.0, 30.0, 2.0]),
        );
        e.labels.insert("cells".into(), LabelMask::new(2, 2, vec![0, 1, 2, 0]));
        e.table = Some(
            AnnotatedMatrix::new(
                Expression::dense(2, 1, vec![1.0, 3.0]).unwrap(),
                vec!["s0".into(), "s1".into()],
                vec!["Fth1".into()],
            )
            .unwrap(),
        );
        e
    }

    fn layer(kind: ElementKind, element: &str, color: Option<&str>) -> SpatialLayer {
        SpatialLayer {
            kind,
            element: element.into(),
            style: LayerStyle {
                color: color.map(str::to_string),
                ..Default::default()
            },
        }
    }

    #[test]
    fn image_plus_feature_colored_circles() {
        let e = elements();
        let s = push_spatial_layer(&SpatialLayerStack::new(), &e, layer(ElementKind::Image, "hne", None)).unwrap();
        let s = push_spatial_layer(&s, &e, layer(ElementKind::Shapes, "spots", Some("Fth1"))).unwrap();
        let r = translate_spatial_show(&e, &s, None).unwrap();
        assert_eq!(r.config.validate(), vec![]);
        assert!(r.plan_is_closed());
        let kinds: Vec<ComponentKind> = r.config.layout.iter().map(|v| v.component).collect();
        assert_eq!(
            kinds,
            vec![ComponentKind::Spatial, ComponentKind::FeatureList, ComponentKind::LayerController]
        );
        assert_eq!(
            r.config.view_value(ViewId(0), CoordinationType::FeatureSelection),
            Some(&json!(["Fth1"]))
        );
        let layers = r.config.view_value(ViewId(2), CoordinationType::SpatialLayers).unwrap();
        assert_eq!(layers[0]["type"], "image");
        assert_eq!(layers[1]["type"], "circles");
        // the 60 px wide image dominates the extent
        assert_eq!(
            r.config.view_value(ViewId(0), CoordinationType::SpatialZoom),
            Some(&json!(512.0 / 60.0))
        );
    }

    #[test]
    fn labels_only() {
        let e = elements();
        let s = push_spatial_layer(&SpatialLayerStack::new(), &e, layer(ElementKind::Labels, "cells", None)).unwrap();
        let r = translate_spatial_show(&e, &s, None).unwrap();
        let kinds: Vec<ComponentKind> = r.config.layout.iter().map(|v| v.component).collect();
        assert_eq!(kinds, vec![ComponentKind::Spatial, ComponentKind::LayerController]);
        assert_eq!(r.export_plan.len(), 1);
    }

    #[test]
    fn empty_stack() {
        assert_eq!(
            translate_spatial_show(&elements(), &SpatialLayerStack::new(), None).unwrap_err(),
            TranslateError::EmptyStack
        );
    }

    #[test]
    fn push_errors() {
        let e = elements();
        let empty = SpatialLayerStack::new();
        assert_eq!(
            push_spatial_layer(&empty, &e, layer(ElementKind::Shapes, "spots", Some("Actb"))).unwrap_err(),
            TranslateError::UnknownFeature("Actb".into())
        );
        assert!(matches!(
            push_spatial_layer(&empty, &e, layer(ElementKind::Points, "tx", None)),
            Err(TranslateError::UnknownElement { kind: ElementKind::Points, .. })
        ));
        let s = push_spatial_layer(&empty, &e, layer(ElementKind::Labels, "cells", None)).unwrap();
        assert_eq!(
            push_spatial_layer(&s, &e, layer(ElementKind::Image, "hne", None)).unwrap_err(),
            TranslateError::MisplacedImage
        );
    }

    #[test]
    fn repeated_element_exports_once() {
        let e = elements();
        let s = push_spatial_layer(&SpatialLayerStack::new(), &e, layer(ElementKind::Shapes, "spots", None)).unwrap();
        let s = push_spatial_layer(&s, &e, layer(ElementKind::Shapes, "spots", Some("Fth1"))).unwrap();
        let r = translate_spatial_show(&e, &s, None).unwrap();
        assert!(r.plan_is_closed());
        assert_eq!(r.export_plan.len(), 2);
    }
}
