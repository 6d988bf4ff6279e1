//! AVCS: a chunked array container made of a JSON manifest plus raw
//! little-endian chunk files.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/<array path>/c<i0>_<i1>[_<i2>].bin
//! ```
//!
//! Chunks are C-order, uncompressed, and truncated at the array edge.

mod export;
mod pyramid;

pub use export::{
    OBS_CHUNK_ROWS, TILE,
    export_circles, export_image_pyramid, export_labels, export_matrix, export_points, write_matrix,
    MatrixSelection,
};
pub use pyramid::{build_pyramid, PixelValue, MAX_PYRAMID_LEVELS};

use std::fs;
use std::io::ErrorKind;
use std::ops::Range;
use std::path::{Component, Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const FORMAT_VERSION: &str = "avcs-0.1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("refusing to overwrite existing store at {0}")]
    Overwrite(PathBuf),
    #[error("array {0:?} is not in the manifest")]
    UnknownPath(String),
    #[error("chunk {path} holds {found} bytes, manifest implies {expected}")]
    CorruptChunk { path: PathBuf, expected: u64, found: u64 },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid array: {0}")]
    Shape(String),
    #[error("unknown embedding {0:?}")]
    UnknownBasis(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("unknown obs column {0:?}")]
    UnknownObsColumn(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I32,
    U16,
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::U16 => 2,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayMeta {
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub chunk_shape: Vec<usize>,
    pub order: String,
}

impl ArrayMeta {
    pub fn grid(&self) -> Vec<usize> {
        self.shape
            .iter()
            .zip(&self.chunk_shape)
            .map(|(&n, &c)| n.div_ceil(c))
            .collect()
    }

    pub fn chunk_count(&self) -> usize {
        self.grid().iter().product()
    }

    /// Actual extent of chunk `index` along each axis.
    fn chunk_extent(&self, index: &[usize]) -> Vec<Range<usize>> {
        index
            .iter()
            .zip(self.shape.iter().zip(&self.chunk_shape))
            .map(|(&i, (&n, &c))| (i * c)..((i + 1) * c).min(n))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreManifest {
    pub format_version: String,
    pub arrays: IndexMap<String, ArrayMeta>,
    pub attributes: IndexMap<String, Value>,
}

impl StoreManifest {
    pub fn read(dir: &Path) -> Result<Self, StoreError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: StoreManifest =
            serde_json::from_str(&text).map_err(|e| StoreError::Manifest(e.to_string()))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(StoreError::Manifest(format!(
                "unsupported format version {:?}",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }
}

/// Fixed-size little-endian scalar stored in chunks.
pub trait Element: Copy + Default + Send + Sync + 'static {
    const DTYPE: DType;
    fn put_le(self, out: &mut Vec<u8>);
    fn from_le(bytes: &[u8]) -> Self;
    fn wrap(values: Vec<Self>) -> ArrayValues;
}

macro_rules! element {
    ($t:ty, $dtype:ident) => {
        impl Element for $t {
            const DTYPE: DType = DType::$dtype;
            fn put_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn from_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element width"))
            }
            fn wrap(values: Vec<Self>) -> ArrayValues {
                ArrayValues::$dtype(values)
            }
        }
    };
}

element!(f32, F32);
element!(i32, I32);
element!(u16, U16);
element!(u8, U8);

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayValues {
    F32(Vec<f32>),
    I32(Vec<i32>),
    U16(Vec<u16>),
    U8(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedArray {
    pub shape: Vec<usize>,
    pub values: ArrayValues,
}

impl LoadedArray {
    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.values {
            ArrayValues::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i32(&self) -> Option<&[i32]> {
        match &self.values {
            ArrayValues::I32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.values {
            ArrayValues::U8(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u16(&self) -> Option<&[u16]> {
        match &self.values {
            ArrayValues::U16(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WriteMode {
    #[default]
    CreateNew,
    Overwrite,
}

/// Default chunking: `preferred` per axis, clamped to the array extent and to at least 1.
pub fn chunk_shape_for(shape: &[usize], preferred: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .zip(preferred)
        .map(|(&n, &p)| p.min(n).max(1))
        .collect()
}

fn check_array_path(path: &str) -> Result<(), StoreError> {
    let ok = !path.is_empty()
        && path != MANIFEST_FILE
        && Path::new(path).components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(StoreError::Shape(format!("invalid array path {path:?}")))
    }
}

pub fn chunk_file_name(index: &[usize]) -> String {
    let parts: Vec<String> = index.iter().map(usize::to_string).collect();
    format!("c{}.bin", parts.join("_"))
}

/// Row-major odometer over a grid; yields nothing if any extent is zero.
fn grid_indices(grid: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = grid.iter().product();
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; grid.len()];
        for axis in (0..grid.len()).rev() {
            idx[axis] = flat % grid[axis];
            flat /= grid[axis];
        }
        idx
    })
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for axis in (0..shape.len().saturating_sub(1)).rev() {
        s[axis] = s[axis + 1] * shape[axis + 1];
    }
    s
}

/// Calls `f(src_offset, dst_offset, run_len)` for each contiguous innermost
/// run copying `region` of an array with `src_shape` into a dense buffer of
/// the region's own shape, where both are positioned relative to `origin`.
fn for_each_run(
    region: &[Range<usize>],
    src_origin: &[usize],
    src_shape: &[usize],
    dst_origin: &[usize],
    dst_shape: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let nd = region.len();
    if nd == 0 {
        f(0, 0, 1);
        return;
    }
    if region.iter().any(|r| r.is_empty()) {
        return;
    }
    let src_strides = strides(src_shape);
    let dst_strides = strides(dst_shape);
    let outer: Vec<usize> = region[..nd - 1].iter().map(|r| r.len()).collect();
    let run = region[nd - 1].len();
    for idx in grid_indices(&outer) {
        let mut src = 0;
        let mut dst = 0;
        for axis in 0..nd {
            let pos = if axis < nd - 1 {
                region[axis].start + idx[axis]
            } else {
                region[axis].start
            };
            src += (pos - src_origin[axis]) * src_strides[axis];
            dst += (pos - dst_origin[axis]) * dst_strides[axis];
        }
        f(src, dst, run);
    }
}

/// Incremental writer for one store directory.
pub struct StoreWriter {
    dir: PathBuf,
    manifest: StoreManifest,
}

impl StoreWriter {
    pub fn create(dir: &Path, mode: WriteMode) -> Result<Self, StoreError> {
        if dir.join(MANIFEST_FILE).exists() {
            match mode {
                WriteMode::CreateNew => return Err(StoreError::Overwrite(dir.to_path_buf())),
                WriteMode::Overwrite => fs::remove_dir_all(dir).map_err(io_err(dir))?,
            }
        }
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(StoreWriter {
            dir: dir.to_path_buf(),
            manifest: StoreManifest {
                format_version: FORMAT_VERSION.to_string(),
                arrays: IndexMap::new(),
                attributes: IndexMap::new(),
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn declare<T: Element>(&mut self, path: &str, shape: &[usize], chunk_shape: &[usize]) -> Result<ArrayMeta, StoreError> {
        check_array_path(path)?;
        if shape.len() != chunk_shape.len() || chunk_shape.iter().any(|&c| c == 0) {
            return Err(StoreError::Shape(format!(
                "array {path:?}: chunk shape {chunk_shape:?} does not fit shape {shape:?}"
            )));
        }
        if self.manifest.arrays.contains_key(path) {
            return Err(StoreError::Shape(format!("array {path:?} written twice")));
        }
        let meta = ArrayMeta {
            shape: shape.to_vec(),
            dtype: T::DTYPE,
            chunk_shape: chunk_shape.to_vec(),
            order: "C".into(),
        };
        let array_dir = self.dir.join(path);
        fs::create_dir_all(&array_dir).map_err(io_err(&array_dir))?;
        Ok(meta)
    }

    fn write_chunk(&self, path: &str, index: &[usize], bytes: &[u8]) -> Result<(), StoreError> {
        let file = self.dir.join(path).join(chunk_file_name(index));
        fs::write(&file, bytes).map_err(io_err(&file))
    }

    /// Writes a whole C-order array.
    pub fn write_array<T: Element>(
        &mut self,
        path: &str,
        shape: &[usize],
        chunk_shape: &[usize],
        data: &[T],
    ) -> Result<(), StoreError> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(StoreError::Shape(format!(
                "array {path:?}: {} values for shape {shape:?}",
                data.len()
            )));
        }
        let meta = self.declare::<T>(path, shape, chunk_shape)?;
        let origin = vec![0; shape.len()];
        for index in grid_indices(&meta.grid()) {
            let extent = meta.chunk_extent(&index);
            let chunk_origin: Vec<usize> = extent.iter().map(|r| r.start).collect();
            let chunk_dims: Vec<usize> = extent.iter().map(|r| r.len()).collect();
            let mut buf = Vec::with_capacity(chunk_dims.iter().product::<usize>() * T::DTYPE.size());
            for_each_run(&extent, &origin, shape, &chunk_origin, &chunk_dims, |src, _, len| {
                for &v in &data[src..src + len] {
                    v.put_le(&mut buf);
                }
            });
            self.write_chunk(path, &index, &buf)?;
        }
        self.manifest.arrays.insert(path.to_string(), meta);
        Ok(())
    }

    /// Writes an `n_rows` x `n_cols` array chunked by row blocks spanning all
    /// columns, producing each row on demand via `fill_row`.
    pub fn write_rows<T: Element>(
        &mut self,
        path: &str,
        n_rows: usize,
        n_cols: usize,
        chunk_rows: usize,
        mut fill_row: impl FnMut(usize, &mut [T]),
    ) -> Result<(), StoreError> {
        let chunk_shape = chunk_shape_for(&[n_rows, n_cols], &[chunk_rows, n_cols]);
        let meta = self.declare::<T>(path, &[n_rows, n_cols], &chunk_shape)?;
        let mut row = vec![T::default(); n_cols];
        for index in grid_indices(&meta.grid()) {
            let extent = meta.chunk_extent(&index);
            let mut buf = Vec::with_capacity(extent[0].len() * n_cols * T::DTYPE.size());
            for r in extent[0].clone() {
                fill_row(r, &mut row);
                for &v in &row {
                    v.put_le(&mut buf);
                }
            }
            self.write_chunk(path, &index, &buf)?;
        }
        self.manifest.arrays.insert(path.to_string(), meta);
        Ok(())
    }

    pub fn set_attribute(&mut self, path: &str, value: Value) {
        self.manifest.attributes.insert(path.to_string(), value);
    }

    pub fn finish(self) -> Result<StoreManifest, StoreError> {
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(self.manifest)
    }
}

/// Read side of a store directory.
pub struct Store {
    dir: PathBuf,
    manifest: StoreManifest,
}

impl Store {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        Ok(Store {
            dir: dir.to_path_buf(),
            manifest: StoreManifest::read(dir)?,
        })
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn read(&self, path: &str, region: Option<&[Range<usize>]>) -> Result<LoadedArray, StoreError> {
        let meta = self
            .manifest
            .arrays
            .get(path)
            .ok_or_else(|| StoreError::UnknownPath(path.to_string()))?;
        match meta.dtype {
            DType::F32 => self.read_typed::<f32>(path, meta, region),
            DType::I32 => self.read_typed::<i32>(path, meta, region),
            DType::U16 => self.read_typed::<u16>(path, meta, region),
            DType::U8 => self.read_typed::<u8>(path, meta, region),
        }
    }

    fn read_typed<T: Element>(
        &self,
        path: &str,
        meta: &ArrayMeta,
        region: Option<&[Range<usize>]>,
    ) -> Result<LoadedArray, StoreError> {
        let full: Vec<Range<usize>> = meta.shape.iter().map(|&n| 0..n).collect();
        let region = region.unwrap_or(&full);
        if region.len() != meta.shape.len()
            || region.iter().zip(&meta.shape).any(|(r, &n)| r.start > r.end || r.end > n)
        {
            return Err(StoreError::Shape(format!(
                "region {region:?} outside array {path:?} of shape {:?}",
                meta.shape
            )));
        }
        let out_shape: Vec<usize> = region.iter().map(|r| r.len()).collect();
        let out_origin: Vec<usize> = region.iter().map(|r| r.start).collect();
        let mut out = vec![T::default(); out_shape.iter().product()];
        if out.is_empty() {
            return Ok(LoadedArray {
                shape: out_shape,
                values: T::wrap(out),
            });
        }
        // chunk index range covering the region on each axis
        let first: Vec<usize> = region.iter().zip(&meta.chunk_shape).map(|(r, &c)| r.start / c).collect();
        let span: Vec<usize> = region
            .iter()
            .zip(&meta.chunk_shape)
            .zip(&first)
            .map(|((r, &c), &f)| (r.end - 1) / c - f + 1)
            .collect();
        let width = T::DTYPE.size();
        for rel in grid_indices(&span) {
            let index: Vec<usize> = rel.iter().zip(&first).map(|(a, b)| a + b).collect();
            let extent = meta.chunk_extent(&index);
            let file = self.dir.join(path).join(chunk_file_name(&index));
            let bytes = std::fs::read(&file).map_err(|e| match e.kind() {
                ErrorKind::NotFound => StoreError::CorruptChunk {
                    path: file.clone(),
                    expected: (extent.iter().map(|r| r.len()).product::<usize>() * width) as u64,
                    found: 0,
                },
                _ => StoreError::Io {
                    path: file.clone(),
                    source: e,
                },
            })?;
            let chunk_dims: Vec<usize> = extent.iter().map(|r| r.len()).collect();
            let expected = chunk_dims.iter().product::<usize>() * width;
            if bytes.len() != expected {
                return Err(StoreError::CorruptChunk {
                    path: file,
                    expected: expected as u64,
                    found: bytes.len() as u64,
                });
            }
            let chunk_origin: Vec<usize> = extent.iter().map(|r| r.start).collect();
            let overlap: Vec<Range<usize>> = extent
                .iter()
                .zip(region)
                .map(|(e, r)| e.start.max(r.start)..e.end.min(r.end))
                .collect();
            for_each_run(&overlap, &chunk_origin, &chunk_dims, &out_origin, &out_shape, |src, dst, len| {
                for k in 0..len {
                    let at = (src + k) * width;
                    out[dst + k] = T::from_le(&bytes[at..at + width]);
                }
            });
        }
        Ok(LoadedArray {
            shape: out_shape,
            values: T::wrap(out),
        })
    }
}

/// Reads `path` (optionally a sub-region) from the store at `dir`.
pub fn load_array(dir: &Path, path: &str, region: Option<&[Range<usize>]>) -> Result<LoadedArray, StoreError> {
    Store::open(dir)?.read(path, region)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_chunks(dir: &Path) -> usize {
        fn walk(p: &Path, n: &mut usize) {
            for e in fs::read_dir(p).unwrap() {
                let e = e.unwrap().path();
                if e.is_dir() {
                    walk(&e, n);
                } else if e.extension().is_some_and(|x| x == "bin") {
                    *n += 1;
                }
            }
        }
        let mut n = 0;
        walk(dir, &mut n);
        n
    }

    #[test]
    fn edge_chunks_are_truncated() {
        let tmp = tempfile::tempdir().unwrap();
        let mut w = StoreWriter::create(tmp.path(), WriteMode::CreateNew).unwrap();
        let data: Vec<i32> = (0..15).collect();
        w.write_array("a", &[3, 5], &[2, 2], &data).unwrap();
        w.finish().unwrap();
        assert_eq!(count_chunks(tmp.path()), 6);
        assert_eq!(fs::read(tmp.path().join("a/c1_2.bin")).unwrap(), 14i32.to_le_bytes());
        assert_eq!(fs::read(tmp.path().join("a/c0_2.bin")).unwrap().len(), 8);
        let back = load_array(tmp.path(), "a", None).unwrap();
        assert_eq!(back.as_i32().unwrap(), &data[..]);
        let region = load_array(tmp.path(), "a", Some(&[1..3, 1..4])).unwrap();
        assert_eq!(region.shape, vec![2, 3]);
        assert_eq!(region.as_i32().unwrap(), &[6, 7, 8, 11, 12, 13]);
    }

    #[test]
    fn overwrite_needs_flag() {
        let tmp = tempfile::tempdir().unwrap();
        StoreWriter::create(tmp.path(), WriteMode::CreateNew).unwrap().finish().unwrap();
        assert!(matches!(
            StoreWriter::create(tmp.path(), WriteMode::CreateNew),
            Err(StoreError::Overwrite(_))
        ));
        assert!(StoreWriter::create(tmp.path(), WriteMode::Overwrite).is_ok());
    }

    #[test]
    fn rejects_escaping_paths() {
        let tmp = tempfile::tempdir().unwrap();
        let mut w = StoreWriter::create(tmp.path(), WriteMode::CreateNew).unwrap();
        assert!(w.write_array::<u8>("../x", &[1], &[1], &[0]).is_err());
        assert!(w.write_array::<u8>("/abs", &[1], &[1], &[0]).is_err());
    }

    #[test]
    fn unknown_path() {
        let tmp = tempfile::tempdir().unwrap();
        StoreWriter::create(tmp.path(), WriteMode::CreateNew).unwrap().finish().unwrap();
        assert!(matches!(load_array(tmp.path(), "X", None), Err(StoreError::UnknownPath(_))));
    }

    #[test]
    fn scalar_types_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let mut w = StoreWriter::create(tmp.path(), WriteMode::CreateNew).unwrap();
        w.write_array::<u16>("u16", &[3], &[2], &[1, 65535, 7]).unwrap();
        w.write_array::<u8>("u8", &[2, 2], &[1, 2], &[0, 255, 3, 4]).unwrap();
        w.finish().unwrap();
        assert_eq!(load_array(tmp.path(), "u16", None).unwrap().as_u16().unwrap(), &[1, 65535, 7]);
        assert_eq!(load_array(tmp.path(), "u8", None).unwrap().as_u8().unwrap(), &[0, 255, 3, 4]);
    }
}
