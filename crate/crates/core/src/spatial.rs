//! Spatial elements: multiscale-capable images, circular spots, points and
//! label masks, plus an optional expression table keyed by spot id.

use indexmap::IndexMap;

use crate::stats::AnnotatedMatrix;

/// Channel-first image, row-major within each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * height * width, "image buffer size mismatch");
        Image {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Image::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

/// Circles as rows of (x, y, radius).
#[derive(Debug, Clone, PartialEq)]
pub struct Circles {
    pub ids: Vec<String>,
    pub xyr: Vec<f32>,
}

impl Circles {
    pub fn new(ids: Vec<String>, xyr: Vec<f32>) -> Self {
        assert_eq!(ids.len() * 3, xyr.len(), "circles need one (x, y, r) row per id");
        Circles { ids, xyr }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Points as rows of (x, y).
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    pub ids: Vec<String>,
    pub xy: Vec<f32>,
}

impl Points {
    pub fn new(ids: Vec<String>, xy: Vec<f32>) -> Self {
        assert_eq!(ids.len() * 2, xy.len(), "points need one (x, y) row per id");
        Points { ids, xy }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Integer segmentation mask, `height` x `width`; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<i32>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, data: Vec<i32>) -> Self {
        assert_eq!(data.len(), height * width, "label mask size mismatch");
        LabelMask { height, width, data }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpatialElements {
    pub images: IndexMap<String, Image<f32>>,
    pub shapes: IndexMap<String, Circles>,
    pub points: IndexMap<String, Points>,
    pub labels: IndexMap<String, LabelMask>,
    /// Expression table whose observation ids match shape ids.
    pub table: Option<AnnotatedMatrix>,
}

impl SpatialElements {
    pub fn has_feature(&self, feature: &str) -> bool {
        self.table.as_ref().is_some_and(|t| t.has_feature(feature))
    }
}
