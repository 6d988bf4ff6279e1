mod common;

use common::{block_mean_oracle, chunk_files, dense_to_csr, ids, random_dense};
use plotmorph::spatial::{Image, LabelMask};
use plotmorph::stats::{AnnotatedMatrix, Embedding, Expression, ObsColumn};
use plotmorph::store::{
    build_pyramid, export_image_pyramid, export_labels, export_matrix, load_array, Store, StoreError, StoreWriter,
    WriteMode, MAX_PYRAMID_LEVELS,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn read_bytes_sorted(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in std::fs::read_dir(&p).unwrap() {
            let e = e.unwrap().path();
            if e.is_dir() {
                stack.push(e);
            } else if e.extension().is_some_and(|x| x == "bin") {
                out.push((e.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&e).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn matrix_round_trip_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, m) = (2500, 7);
    let values = random_dense(&mut rng, n, m, 0.3);
    let labels: Vec<String> = (0..n).map(|i| format!("c{}", i % 5)).collect();
    let emb: Vec<f32> = (0..n * 2).map(|i| i as f32 * 0.25 - 3.0).collect();
    let am = AnnotatedMatrix::new(Expression::dense(n, m, values.clone()).unwrap(), ids("o", n), ids("v", m))
        .unwrap()
        .with_obs("cluster", ObsColumn::categorical(&labels))
        .unwrap()
        .with_obs("depth", ObsColumn::Numeric((0..n).map(|i| i as f32).collect()))
        .unwrap()
        .with_embedding("X_umap", Embedding::new(2, emb.clone()))
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = export_matrix(&am, dir.path(), WriteMode::CreateNew).unwrap();
    assert_eq!(manifest.arrays["X"].chunk_count(), 3);

    let x = load_array(dir.path(), "X", None).unwrap();
    assert_eq!(x.shape, vec![n, m]);
    let got = x.as_f32().unwrap();
    assert!(got.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
    let e = load_array(dir.path(), "obsm/X_umap", None).unwrap();
    assert!(e.as_f32().unwrap().iter().zip(&emb).all(|(a, b)| a.to_bits() == b.to_bits()));
    let ObsColumn::Categorical { codes, .. } = &am.obs_columns["cluster"] else { unreachable!() };
    assert_eq!(load_array(dir.path(), "obs/cluster", None).unwrap().as_i32().unwrap(), codes.as_slice());
    assert_eq!(chunk_files(dir.path()), Store::open(dir.path()).unwrap().manifest().arrays.values().map(|a| a.chunk_count()).sum::<usize>());
}

#[test]
fn sparse_and_dense_exports_are_byte_equal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, m) = (1300, 9);
    let values = random_dense(&mut rng, n, m, 0.7);
    let dense = AnnotatedMatrix::new(Expression::dense(n, m, values.clone()).unwrap(), ids("o", n), ids("v", m)).unwrap();
    let sparse = dense.with_expression(dense_to_csr(n, m, &values));
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    export_matrix(&dense, a.path(), WriteMode::CreateNew).unwrap();
    export_matrix(&sparse, b.path(), WriteMode::CreateNew).unwrap();
    assert_eq!(read_bytes_sorted(a.path()), read_bytes_sorted(b.path()));
}

#[test]
fn labels_round_trip() {
    let (h, w) = (300, 270);
    let data: Vec<i32> = (0..h * w).map(|i| ((i * 7919) % 13) as i32 - 1).collect();
    let dir = tempfile::tempdir().unwrap();
    export_labels(&LabelMask::new(h, w, data.clone()), dir.path(), WriteMode::CreateNew).unwrap();
    let l = load_array(dir.path(), "labels", None).unwrap();
    assert_eq!(l.shape, vec![1, h, w]);
    assert_eq!(l.as_i32().unwrap(), data.as_slice());
}

#[test]
fn create_new_refuses_existing_store() {
    let dir = tempfile::tempdir().unwrap();
    let mask = LabelMask::new(2, 2, vec![0, 1, 2, 3]);
    export_labels(&mask, dir.path(), WriteMode::CreateNew).unwrap();
    assert!(export_labels(&mask, dir.path(), WriteMode::CreateNew).is_err());
    export_labels(&mask, dir.path(), WriteMode::Overwrite).unwrap();
}

#[test]
fn unknown_array_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let w = StoreWriter::create(dir.path(), WriteMode::CreateNew).unwrap();
    w.finish().unwrap();
    assert!(matches!(load_array(dir.path(), "X", None), Err(StoreError::UnknownPath(_))));
}

#[test]
fn seeded_level_one_is_block_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let data = random_dense(&mut rng, 1, 64 * 64, 0.0);
    let levels = build_pyramid(&Image::new(1, 64, 64, data.clone()), 16);
    let (oh, ow, expected) = block_mean_oracle(&data, 1, 64, 64);
    assert_eq!((levels[1].height, levels[1].width), (oh, ow));
    for (a, b) in levels[1].data.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-6);
    }
}

fn image_strategy() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..3, 1usize..300, 1usize..300, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pyramid_levels_round_trip((c, h, w, seed) in image_strategy(), min_dim in 1usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Image::new(c, h, w, random_dense(&mut rng, c, h * w, 0.2));
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_image_pyramid(&img, dir.path(), min_dim, WriteMode::CreateNew).unwrap();
        let levels = build_pyramid(&img, min_dim);
        prop_assert!(levels.len() <= MAX_PYRAMID_LEVELS);
        for (k, level) in levels.iter().enumerate() {
            prop_assert_eq!(level.height, h.div_ceil(1 << k));
            prop_assert_eq!(level.width, w.div_ceil(1 << k));
            let loaded = load_array(dir.path(), &format!("levels/{k}"), None).unwrap();
            prop_assert_eq!(&loaded.shape, &vec![c, level.height, level.width]);
            prop_assert!(loaded.as_f32().unwrap().iter().zip(&level.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let last = levels.last().unwrap();
        prop_assert!(last.height.max(last.width) <= min_dim || levels.len() == MAX_PYRAMID_LEVELS);
        prop_assert_eq!(chunk_files(dir.path()), manifest.arrays.values().map(|a| a.chunk_count()).sum::<usize>());
    }

    #[test]
    fn halving_is_block_mean((c, h, w, seed) in image_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_dense(&mut rng, c, h * w, 0.2);
        let levels = build_pyramid(&Image::new(c, h, w, data.clone()), 0);
        if levels.len() > 1 {
            let (oh, ow, expected) = block_mean_oracle(&data, c, h, w);
            prop_assert_eq!((levels[1].height, levels[1].width), (oh, ow));
            for (a, b) in levels[1].data.iter().zip(&expected) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn integer_dtypes_round_trip(h in 1usize..600, w in 1usize..40, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u8s: Vec<u8> = (0..h * w).map(|_| rng.random()).collect();
        let u16s: Vec<u16> = (0..h * w).map(|_| rng.random()).collect();
        let i32s: Vec<i32> = (0..h * w).map(|_| rng.random()).collect();
        let dir = tempfile::tempdir().unwrap();
        let mut wr = StoreWriter::create(dir.path(), WriteMode::CreateNew).unwrap();
        wr.write_array("a/u8", &[h, w], &[256, 16], &u8s).unwrap();
        wr.write_array("a/u16", &[h, w], &[100, 7], &u16s).unwrap();
        wr.write_array("i32", &[h, w], &[h, w], &i32s).unwrap();
        let manifest = wr.finish().unwrap();
        let a = load_array(dir.path(), "a/u8", None).unwrap();
        prop_assert_eq!(a.as_u8().unwrap(), u8s.as_slice());
        let b = load_array(dir.path(), "a/u16", None).unwrap();
        prop_assert_eq!(b.as_u16().unwrap(), u16s.as_slice());
        let c = load_array(dir.path(), "i32", None).unwrap();
        prop_assert_eq!(c.as_i32().unwrap(), i32s.as_slice());
        prop_assert_eq!(manifest.arrays["a/u8"].chunk_count(), h.div_ceil(256) * w.div_ceil(16));
        prop_assert_eq!(chunk_files(dir.path()), manifest.arrays.values().map(|a| a.chunk_count()).sum::<usize>());
    }

    #[test]
    fn region_reads_match_slices(h in 1usize..80, w in 1usize..80, r0 in 0usize..80, r1 in 0usize..80, c0 in 0usize..80, c1 in 0usize..80) {
        let data: Vec<f32> = (0..h * w).map(|i| i as f32).collect();
        let dir = tempfile::tempdir().unwrap();
        let mut wr = StoreWriter::create(dir.path(), WriteMode::CreateNew).unwrap();
        wr.write_array("a", &[h, w], &[17, 9], &data).unwrap();
        wr.finish().unwrap();
        let (y0, x0) = (r0 % h, c0 % w);
        let (ys, xs) = (y0..y0 + 1 + r1 % (h - y0), x0..x0 + 1 + c1 % (w - x0));
        let got = load_array(dir.path(), "a", Some(&[ys.clone(), xs.clone()])).unwrap();
        prop_assert_eq!(&got.shape, &vec![ys.len(), xs.len()]);
        let expected: Vec<f32> = ys.flat_map(|y| xs.clone().map(move |x| (y * w + x) as f32)).collect();
        prop_assert_eq!(got.as_f32().unwrap(), expected.as_slice());
    }
}
