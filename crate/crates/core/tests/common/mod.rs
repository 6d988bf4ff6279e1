//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;
use std::sync::Arc;

use plotmorph::spatial::{Circles, Image, LabelMask, Points, SpatialElements};
use plotmorph::survey::{query_for, SearchResponse, SearchTransport, Sleeper, SurveyError};
use plotmorph::stats::{AnnotatedMatrix, Embedding, Expression, ObsColumn};
use plotmorph::translate::{
    push_spatial_layer, translate_embedding, translate_spatial_show, ElementKind, LayerStyle, SpatialLayer,
    SpatialLayerStack, TranslationResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn docs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs")
}

/// Compares against a checked-in file; `PLOTMORPH_BLESS=1` rewrites it.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var("PLOTMORPH_BLESS").is_ok_and(|v| v == "1") {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{} differs from the generated text", path.display()))
    }
}

/// Dense matrix with roughly `zero_frac` exact zeros.
pub fn random_dense(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize, zero_frac: f64) -> Vec<f32> {
    (0..n_rows * n_cols)
        .map(|_| {
            if rng.random_bool(zero_frac) {
                0.0
            } else {
                (rng.random_range(0.0f32..10.0) * 8.0).round() / 8.0
            }
        })
        .collect()
}

pub fn dense_to_csr(n_rows: usize, n_cols: usize, values: &[f32]) -> Expression {
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut data = Vec::new();
    for r in 0..n_rows {
        for c in 0..n_cols {
            let v = values[r * n_cols + c];
            if v != 0.0 {
                indices.push(c);
                data.push(v);
            }
        }
        indptr.push(indices.len());
    }
    Expression::csr(n_rows, n_cols, indptr, indices, data).unwrap()
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Seeded matrix with a categorical column "group" of `n_groups` labels
/// ("g0", "g1", ...) assigned at random.
pub fn random_grouped(seed: u64, n_obs: usize, n_var: usize, n_groups: usize) -> AnnotatedMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = random_dense(&mut rng, n_obs, n_var, 0.4);
    let labels: Vec<String> = (0..n_obs).map(|_| format!("g{}", rng.random_range(0..n_groups))).collect();
    AnnotatedMatrix::new(Expression::dense(n_obs, n_var, values).unwrap(), ids("cell_", n_obs), ids("gene_", n_var))
        .unwrap()
        .with_obs("group", ObsColumn::categorical(&labels))
        .unwrap()
}

/// 100 cells in 3 clusters with PCA and UMAP coordinates.
pub fn clustered_fixture() -> AnnotatedMatrix {
    let n = 100;
    let genes = ["CD3E", "MS4A1", "LYZ", "NKG7", "GNLY"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let labels: Vec<String> = (0..n).map(|i| (i % 3).to_string()).collect();
    let mut x = Vec::with_capacity(n * genes.len());
    let mut pca = Vec::with_capacity(n * 2);
    for i in 0..n {
        let cluster = i % 3;
        for g in 0..genes.len() {
            let base = if g == cluster { 4.0 } else { 0.0 };
            let v: f32 = base + rng.random_range(0.0..1.0);
            x.push(if v < 0.5 { 0.0 } else { v });
        }
        pca.push(cluster as f32 * 5.0 + rng.random_range(-1.0..1.0));
        pca.push(rng.random_range(-1.0..1.0));
    }
    let umap: Vec<f32> = pca.iter().map(|v| v * 0.5).collect();
    AnnotatedMatrix::new(
        Expression::dense(n, genes.len(), x).unwrap(),
        ids("cell_", n),
        genes.iter().map(|g| g.to_string()).collect(),
    )
    .unwrap()
    .with_obs("louvain", ObsColumn::categorical(&labels))
    .unwrap()
    .with_obs("n_counts", ObsColumn::Numeric((0..n).map(|i| i as f32 * 10.0).collect()))
    .unwrap()
    .with_obs("n_genes", ObsColumn::Numeric((0..n).map(|i| (i % 17) as f32).collect()))
    .unwrap()
    .with_embedding("X_pca", Embedding::new(2, pca))
    .unwrap()
    .with_embedding("X_umap", Embedding::new(2, umap))
    .unwrap()
}

pub fn clustered() -> Arc<AnnotatedMatrix> {
    Arc::new(clustered_fixture())
}

/// A histology image, 6 spots with an Fth1 table, transcripts and a mask.
pub fn visium_fixture() -> SpatialElements {
    let (h, w) = (64, 96);
    let data: Vec<f32> = (0..3 * h * w).map(|i| (i % 251) as f32 / 250.0).collect();
    let spot_ids = ids("spot_", 6);
    let xyr: Vec<f32> = (0..6)
        .flat_map(|i| [16.0 + 12.0 * i as f32, 20.0 + 4.0 * (i % 2) as f32, 5.0])
        .collect();
    let fth1: Vec<f32> = vec![0.0, 1.5, 3.0, 4.5, 6.0, 7.5];
    let table = AnnotatedMatrix::new(
        Expression::dense(6, 2, fth1.iter().flat_map(|&v| [v, 1.0]).collect()).unwrap(),
        spot_ids.clone(),
        vec!["Fth1".into(), "Actb".into()],
    )
    .unwrap();
    let mut mask = vec![0i32; h * w];
    for y in 10..20 {
        for x in 10..30 {
            mask[y * w + x] = 1 + (x / 10) as i32;
        }
    }
    let mut e = SpatialElements::default();
    e.images.insert("hne".into(), Image::new(3, h, w, data));
    e.shapes.insert("spots".into(), Circles::new(spot_ids, xyr));
    e.points.insert("transcripts".into(), Points::new(ids("tx_", 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    e.labels.insert("cells".into(), LabelMask::new(h, w, mask));
    e.table = Some(table);
    e
}

pub const PCA_GOLDEN: &str = "embedding_pca_louvain.json";
pub const FTH1_GOLDEN: &str = "spatial_image_fth1.json";

/// `embedding(basis="X_pca", color="louvain")` on the clustered fixture.
pub fn pca_translation() -> TranslationResult {
    translate_embedding(&clustered_fixture(), "X_pca", Some("louvain"), None).unwrap()
}

/// Histology image under spots colored by Fth1.
pub fn fth1_translation() -> TranslationResult {
    let elements = visium_fixture();
    let stack = SpatialLayerStack::new();
    let stack = push_spatial_layer(
        &stack,
        &elements,
        SpatialLayer {
            kind: ElementKind::Image,
            element: "hne".into(),
            style: LayerStyle::default(),
        },
    )
    .unwrap();
    let stack = push_spatial_layer(
        &stack,
        &elements,
        SpatialLayer {
            kind: ElementKind::Shapes,
            element: "spots".into(),
            style: LayerStyle {
                color: Some("Fth1".into()),
                ..LayerStyle::default()
            },
        },
    )
    .unwrap();
    translate_spatial_show(&elements, &stack, None).unwrap()
}

/// Brute-force dot-plot oracle: for each (group label, feature) the
/// fraction of cells with value > threshold and the mean over all cells.
/// Groups are listed in category order, empty ones skipped.
pub fn dotplot_oracle(
    am: &AnnotatedMatrix,
    group_col: &str,
    features: &[&str],
    threshold: f64,
) -> Vec<(String, String, f64, f64)> {
    let ObsColumn::Categorical { codes, categories } = &am.obs_columns[group_col] else {
        panic!("categorical column expected")
    };
    let mut out = Vec::new();
    for (g, label) in categories.iter().enumerate() {
        for f in features {
            let col = am.var_ids.iter().position(|v| v == f).unwrap();
            let mut n = 0usize;
            let mut above = 0usize;
            let mut sum = 0.0f64;
            for row in 0..am.n_obs() {
                if codes[row] as usize != g {
                    continue;
                }
                let v = am.x.get(row, col) as f64;
                n += 1;
                sum += v;
                if v > threshold {
                    above += 1;
                }
            }
            if n > 0 {
                out.push((label.clone(), f.to_string(), above as f64 / n as f64, sum / n as f64));
            }
        }
    }
    out
}

/// Sort-and-interpolate quantile oracle.
pub fn quantile_oracle(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor();
    let i = lo as usize;
    if i + 1 >= v.len() {
        return v[i];
    }
    v[i] + (h - lo) * (v[i + 1] - v[i])
}

/// 2x2 block means of a (c, y, x) image, partial blocks at odd edges.
pub fn block_mean_oracle(data: &[f32], c: usize, h: usize, w: usize) -> (usize, usize, Vec<f32>) {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut sum = 0.0f64;
                let mut n = 0;
                for y in 2 * oy..(2 * oy + 2).min(h) {
                    for x in 2 * ox..(2 * ox + 2).min(w) {
                        sum += data[(ch * h + y) * w + x] as f64;
                        n += 1;
                    }
                }
                out.push((sum / n as f64) as f32);
            }
        }
    }
    (oh, ow, out)
}

/// Counts `.bin` files below `dir`.
pub fn chunk_files(dir: &std::path::Path) -> usize {
    let mut n = 0;
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in std::fs::read_dir(&p).unwrap() {
            let e = e.unwrap().path();
            if e.is_dir() {
                stack.push(e);
            } else if e.extension().is_some_and(|x| x == "bin") {
                n += 1;
            }
        }
    }
    n
}

/// Answers from a table; a query with a script of statuses replays it.
#[derive(Default)]
pub struct MockTransport {
    pub counts: HashMap<String, u64>,
    pub scripted: RefCell<HashMap<String, Vec<u16>>>,
    pub calls: RefCell<Vec<String>>,
}

impl MockTransport {
    pub fn with_counts(pairs: &[(&str, u64)]) -> Self {
        MockTransport {
            counts: pairs.iter().map(|(f, c)| (query_for("sc.pl", f), *c)).collect(),
            ..Default::default()
        }
    }
}

impl SearchTransport for MockTransport {
    fn search(&self, query: &str) -> Result<SearchResponse, SurveyError> {
        self.calls.borrow_mut().push(query.to_string());
        if let Some(script) = self.scripted.borrow_mut().get_mut(query) {
            if !script.is_empty() {
                let status = script.remove(0);
                if status != 200 {
                    return Ok(SearchResponse {
                        status,
                        body: "{\"message\": \"rate limited\"}".into(),
                    });
                }
            }
        }
        let count = self.counts.get(query).copied().unwrap_or(0);
        Ok(SearchResponse {
            status: 200,
            body: format!("{{\"total_count\": {count}, \"items\": []}}"),
        })
    }
}

#[derive(Default)]
pub struct RecordingSleeper(pub RefCell<Vec<Duration>>);

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.0.borrow_mut().push(d);
    }
}
