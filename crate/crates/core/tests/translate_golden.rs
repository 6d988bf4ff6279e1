mod common;

use std::sync::Arc;

use common::{check_golden, clustered, fth1_translation, pca_translation, visium_fixture, FTH1_GOLDEN, PCA_GOLDEN};
use plotmorph::host::{ArgValue, BoundArgs, DataHandle, SpatialChain};
use plotmorph::translate::{
    dispatch, translate_dotplot, translate_embedding, translate_heatmap, translate_scatter, translate_spatial_matrix,
    translate_violin, Dispatch, Family, PlotCall, TranslateError, Translated, TranslatorRegistry,
};
use plotmorph::viewmodel::{ComponentKind, CoordinationType, ViewConfig};
use proptest::prelude::*;
use serde_json::json;

fn kinds(cfg: &ViewConfig) -> Vec<ComponentKind> {
    cfg.layout.iter().map(|v| v.component).collect()
}

#[test]
fn pca_embedding_golden() {
    let r = pca_translation();
    let cfg = &r.config;
    assert_eq!(kinds(cfg), vec![ComponentKind::Scatterplot, ComponentKind::ObsSetList]);
    let (main, _) = cfg.views_of(ComponentKind::Scatterplot).next().unwrap();
    assert_eq!(cfg.view_value(main, CoordinationType::EmbeddingType), Some(&json!("PCA")));
    assert!(cfg.validate().is_empty());
    assert!(r.plan_is_closed());
    check_golden(PCA_GOLDEN, &cfg.serialize().unwrap()).unwrap();
}

#[test]
fn fth1_spatial_golden() {
    let r = fth1_translation();
    let cfg = &r.config;
    let mut k = kinds(cfg);
    k.sort_by_key(|c| format!("{c:?}"));
    assert_eq!(k, vec![ComponentKind::FeatureList, ComponentKind::LayerController, ComponentKind::Spatial]);
    let (main, _) = cfg.views_of(ComponentKind::Spatial).next().unwrap();
    assert_eq!(cfg.view_value(main, CoordinationType::FeatureSelection), Some(&json!(["Fth1"])));
    assert!(r.plan_is_closed());
    check_golden(FTH1_GOLDEN, &cfg.serialize().unwrap()).unwrap();
}

#[test]
fn translation_is_deterministic() {
    assert_eq!(pca_translation(), pca_translation());
    assert_eq!(fth1_translation().config.serialize().unwrap(), fth1_translation().config.serialize().unwrap());
}

#[test]
fn serialized_config_round_trips() {
    for r in [pca_translation(), fth1_translation()] {
        let text = r.config.serialize().unwrap();
        let back = ViewConfig::deserialize(&text).unwrap();
        assert_eq!(back, r.config);
        assert_eq!(back.serialize().unwrap(), text);
    }
}

#[test]
fn registry_has_nine_plus_four() {
    let r = TranslatorRegistry::with_defaults();
    assert_eq!(r.len(), 13);
    assert_eq!(r.count(Family::Matrix), 9);
    assert_eq!(r.count(Family::SpatialRender), 4);
}

fn call(function: &str, data: DataHandle, args: &[(&str, ArgValue)]) -> PlotCall {
    let mut bound = BoundArgs::new();
    for (k, v) in args {
        bound.insert(k.to_string(), v.clone());
    }
    PlotCall {
        function: function.into(),
        data,
        args: bound,
    }
}

#[test]
fn dispatch_routes_and_falls_back() {
    let reg = TranslatorRegistry::with_defaults();
    let data = DataHandle::Matrix(clustered());
    let ok = call("umap", data.clone(), &[("color", "louvain".into())]);
    assert!(matches!(dispatch(&reg, &ok), Dispatch::Translated(Translated::Config(_))));

    let unknown = call("dendrogram", data.clone(), &[("groupby", "louvain".into())]);
    assert!(matches!(dispatch(&reg, &unknown), Dispatch::PassThrough { warning: None }));

    let unsupported = call("dotplot", data.clone(), &[("var_names", vec!["LYZ"].into()), ("groupby", "louvain".into()), ("swap_axes", true.into())]);
    assert!(matches!(dispatch(&reg, &unsupported), Dispatch::PassThrough { warning: Some(w) } if w.contains("swap_axes")));

    let bad_basis = call("embedding", data, &[("basis", "X_diffmap".into())]);
    assert!(matches!(dispatch(&reg, &bad_basis), Dispatch::PassThrough { warning: Some(w) } if w.contains("X_diffmap")));
}

#[test]
fn render_dispatch_yields_layers() {
    let reg = TranslatorRegistry::with_defaults();
    let chain = SpatialChain::new(Arc::new(visium_fixture()));
    let c = call("render_shapes", DataHandle::Spatial(chain), &[("element", "spots".into()), ("color", "Fth1".into())]);
    match dispatch(&reg, &c) {
        Dispatch::Translated(Translated::Layer(l)) => assert_eq!(l.style.color.as_deref(), Some("Fth1")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn error_cases() {
    let am = clustered();
    assert!(matches!(translate_embedding(&am, "X_diffmap", None, None), Err(TranslateError::UnknownBasis(_))));
    assert!(matches!(translate_embedding(&am, "pca", Some("nope"), None), Err(TranslateError::UnknownColor(_))));
    assert!(matches!(translate_embedding(&am, "pca", Some("n_counts"), None), Err(TranslateError::UnknownColor(_))));
    assert!(matches!(
        translate_dotplot(&am, &["LYZ".into()], "n_counts", 0.0, None),
        Err(TranslateError::UnknownGroupColumn(_))
    ));
    assert!(matches!(
        translate_violin(&am, &["XIST".into()], "louvain", None),
        Err(TranslateError::UnknownFeature(_))
    ));
}

fn all_translations() -> Vec<plotmorph::translate::TranslationResult> {
    let am = clustered();
    let genes: Vec<String> = vec!["LYZ".into(), "CD3E".into()];
    vec![
        pca_translation(),
        fth1_translation(),
        translate_embedding(&am, "umap", Some("LYZ"), Some("t")).unwrap(),
        translate_scatter(&am, "n_counts", "LYZ", Some("louvain"), None).unwrap(),
        translate_dotplot(&am, &genes, "louvain", 0.5, None).unwrap(),
        translate_heatmap(&am, &genes, Some("louvain"), None).unwrap(),
        translate_heatmap(&am, &genes, None, None).unwrap(),
        translate_violin(&am, &genes, "louvain", None).unwrap(),
        translate_spatial_matrix(&am, "X_pca", Some("louvain"), 2.0, None).unwrap(),
    ]
}

#[test]
fn every_translation_is_valid_and_closed() {
    for r in all_translations() {
        assert!(r.config.validate().is_empty(), "{:?}", r.config.validate());
        assert!(r.plan_is_closed(), "{}", r.config.name);
        assert_eq!(r.config.datasets.len(), 1);
    }
}

proptest! {
    #[test]
    fn embedding_plans_close(basis in prop::sample::select(vec!["pca", "X_pca", "umap", "X_umap"]),
                             color in prop::option::of(prop::sample::select(vec!["louvain", "LYZ", "GNLY"])),
                             title in prop::option::of("[a-z ]{0,12}")) {
        let am = clustered();
        let r = translate_embedding(&am, basis, color, title.as_deref()).unwrap();
        prop_assert!(r.plan_is_closed());
        prop_assert!(r.config.validate().is_empty());
        let again = translate_embedding(&am, basis, color, title.as_deref()).unwrap();
        prop_assert_eq!(r.config.serialize().unwrap(), again.config.serialize().unwrap());
    }

    #[test]
    fn dotplot_plans_close(genes in prop::sample::subsequence(vec!["CD3E", "MS4A1", "LYZ", "NKG7", "GNLY"], 1..5),
                           cutoff in 0.0f64..3.0) {
        let genes: Vec<String> = genes.into_iter().map(String::from).collect();
        let r = translate_dotplot(&clustered(), &genes, "louvain", cutoff, None).unwrap();
        prop_assert!(r.plan_is_closed());
        prop_assert!(r.config.validate().is_empty());
    }
}
