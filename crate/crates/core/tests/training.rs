mod common;

use mdrr_core::classifier::{InputShape, ModelVariant};
use mdrr_core::cluster::{
    agglomerative, class_means, context_vector, export_dendrogram, export_embeddings, extract_embeddings,
    read_embeddings, Dendrogram, EmbeddingRow, EmbeddingSet,
};
use mdrr_core::eval::{confusion, metrics, run_ablation, run_sweep, SweepParameter, SweepSpec, SweepValue};
use mdrr_core::nn::{attention_forward, bilstm_forward};
use mdrr_core::pipeline::{
    featurize_clips, fit_variant, FeatureSplits, FittedPipeline, LabeledFeatures, PipelineConfig,
};
use mdrr_core::synth::{tone_corpus, tone_label, SynthConfig};
use mdrr_core::Error;
use proptest::prelude::*;
use std::sync::OnceLock;

fn small_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.rearrange.slice_len = 10;
    c.rearrange.max_dim = 400;
    c.reduce.input_dim = 400;
    c.reduce.hidden_sizes = vec![16];
    c.reduce.reduced_dim = 20;
    c.reduce.epochs = 5;
    c.classifier.input_shape = InputShape::new(4, 5);
    c.classifier.hidden = 8;
    c.classifier.epochs = 8;
    c.classifier.batch_size = 8;
    c.classifier.plateau_patience = 1;
    c.shapes.md = InputShape::new(30, 20);
    c.shapes.mdr = InputShape::new(20, 20);
    c
}

fn data() -> &'static FeatureSplits {
    static DATA: OnceLock<FeatureSplits> = OnceLock::new();
    DATA.get_or_init(|| {
        let freqs = [440.0, 880.0, 1760.0];
        let synth = SynthConfig {
            frequencies: freqs.to_vec(),
            clips_per_class: 8,
            duration_secs: 0.3,
            ..Default::default()
        };
        let clips = tone_corpus(&synth).unwrap();
        let mut labels: Vec<String> = freqs.iter().map(|&f| tone_label(f)).collect();
        labels.sort();
        let feats = featurize_clips(&clips, &Default::default(), &labels).unwrap();
        let mut d = FeatureSplits {
            labels,
            ..Default::default()
        };
        for (i, f) in feats.into_iter().enumerate() {
            match i % 4 {
                0 | 1 => d.train.push(f),
                2 => d.val.push(f),
                _ => d.test.push(f),
            }
        }
        d
    })
}

fn fitted(variant: ModelVariant) -> &'static FittedPipeline {
    static FITS: OnceLock<Vec<FittedPipeline>> = OnceLock::new();
    let fits = FITS.get_or_init(|| {
        ModelVariant::ALL
            .iter()
            .map(|&v| fit_variant(v, data(), &small_config()).unwrap())
            .collect()
    });
    fits.iter().find(|f| f.variant() == variant).unwrap()
}

#[test]
fn small_config_is_consistent() {
    small_config().validate().unwrap();
}

#[test]
fn training_is_deterministic() {
    for v in ModelVariant::ALL {
        let again = fit_variant(v, data(), &small_config()).unwrap();
        let first = fitted(v);
        assert_eq!(again.log, first.log, "{v}");
        assert_eq!(again.model, first.model, "{v}");
        assert_eq!(
            again.to_container().unwrap().to_bytes().unwrap(),
            first.to_container().unwrap().to_bytes().unwrap()
        );
    }
}

#[test]
fn seed_changes_the_model() {
    let other = fit_variant(ModelVariant::MDRR, data(), &small_config().with_seed(5)).unwrap();
    assert_ne!(other.model, fitted(ModelVariant::MDRR).model);
}

#[test]
fn learning_rate_never_increases() {
    for v in ModelVariant::ALL {
        let lrs: Vec<f64> = fitted(v).log.epochs.iter().map(|e| e.lr).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]), "{v}: {lrs:?}");
        assert_eq!(lrs[0], 1e-3);
    }
}

#[test]
fn unit_decay_keeps_rate_constant() {
    let mut c = small_config();
    c.classifier.decay_factor = 1.0;
    let f = fit_variant(ModelVariant::MD, data(), &c).unwrap();
    assert!(f.log.epochs.iter().all(|e| e.lr == 1e-3));
}

#[test]
fn best_checkpoint_has_lowest_validation_loss() {
    for v in ModelVariant::ALL {
        let f = fitted(v);
        let best = f.log.epochs.iter().find(|e| e.epoch == f.best_epoch).unwrap();
        assert!(f.log.epochs.iter().all(|e| best.val_loss <= e.val_loss), "{v}");
        let val = f.front.prepare_all(&data().val).unwrap();
        let (loss, _) = mdrr_core::classifier::evaluate(&f.model, &val).unwrap();
        assert!((loss - best.val_loss).abs() < 1e-12, "{v}: {loss} vs {}", best.val_loss);
    }
}

#[test]
fn early_stopping_halts_training() {
    let mut c = small_config();
    c.classifier.epochs = 200;
    c.classifier.early_stop_patience = 2;
    c.classifier.learning_rate = 0.5;
    let f = fit_variant(ModelVariant::MD, data(), &c).unwrap();
    let n = f.log.epochs.len();
    assert!(n < 200);
    assert_eq!(n, f.best_epoch + 1 + 2, "stopped at {n}, best {}", f.best_epoch);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for v in ModelVariant::ALL {
        let f = fitted(v);
        let path = dir.path().join(format!("{v}.bin"));
        f.save(&path).unwrap();
        let back = FittedPipeline::load(&path).unwrap();
        assert_eq!(back.variant(), v);
        assert_eq!(back.labels, f.labels);
        for clip in &data().test {
            let a = f.front.prepare(&clip.features).unwrap();
            let b = back.front.prepare(&clip.features).unwrap();
            assert_eq!(
                mdrr_core::classifier::forward_classify(&f.model, &a).unwrap(),
                mdrr_core::classifier::forward_classify(&back.model, &b).unwrap()
            );
        }
        let resaved = dir.path().join(format!("{v}.again.bin"));
        back.save(&resaved).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&resaved).unwrap());
    }
}

#[test]
fn checkpoint_records_variant() {
    let c = fitted(ModelVariant::MDR).to_container().unwrap();
    assert_eq!(c.meta["model_variant"], "MDR");
}

#[test]
fn embeddings_are_attention_contexts() {
    let f = fitted(ModelVariant::MDRR);
    let clips = &data().test;
    let set = extract_embeddings(f, clips).unwrap();
    assert_eq!(set.len(), clips.len());
    assert_eq!(set.dim(), 2 * f.model.hidden());
    for (row, clip) in set.rows.iter().zip(clips) {
        let x = f.front.prepare(&clip.features).unwrap();
        let hs = bilstm_forward(&f.model.bilstm, &x).unwrap();
        let att = attention_forward(&f.model.attention, &hs).unwrap();
        let mut manual = vec![0.0; hs.cols()];
        for j in 0..hs.rows() {
            for k in 0..hs.cols() {
                manual[k] += att.weights[j] * hs.get(j, k);
            }
        }
        for (a, b) in row.vector.iter().zip(&manual) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(row.vector, context_vector(&f.model, &x).unwrap());
        assert_eq!(row.label, f.labels[clip.label]);
        assert_eq!(row.id, clip.id);
    }
}

#[test]
fn duplicate_clips_embed_identically() {
    let f = fitted(ModelVariant::MD);
    let c = data().test[0].clone();
    let set = extract_embeddings(f, &[c.clone(), c]).unwrap();
    assert_eq!(set.rows[0].vector, set.rows[1].vector);
}

#[test]
fn untrained_pipeline_is_rejected() {
    let mut f = fitted(ModelVariant::MD).clone();
    f.trained = false;
    assert!(matches!(extract_embeddings(&f, &data().test), Err(Error::Untrained)));
}

#[test]
fn class_means_ignore_row_order() {
    let set = extract_embeddings(fitted(ModelVariant::MDRR), &data().test).unwrap();
    let mut reversed = set.clone();
    reversed.rows.reverse();
    let a = class_means(&set).unwrap();
    assert_eq!(a, class_means(&reversed).unwrap());
    assert_eq!(a.len(), 3);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["tone_1760", "tone_440", "tone_880"]);
}

#[test]
fn embedding_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let set = extract_embeddings(fitted(ModelVariant::MDRR), &data().test).unwrap();
    let path = dir.path().join("emb.csv");
    export_embeddings(&set, &path).unwrap();
    assert_eq!(read_embeddings(&path).unwrap(), set);
    let header = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let expected: Vec<String> = ["id", "label"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..set.dim()).map(|k| format!("e{k}")))
        .collect();
    assert_eq!(header, expected.join(","));

    let empty = dir.path().join("empty.csv");
    assert!(export_embeddings(&EmbeddingSet::default(), &empty).is_err());
    assert!(!empty.exists());
}

#[test]
fn dendrogram_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let set = extract_embeddings(fitted(ModelVariant::MDRR), &data().test).unwrap();
    let tree = agglomerative(&class_means(&set).unwrap()).unwrap();
    let base = dir.path().join("tree");
    export_dendrogram(&tree, &base).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(base.with_extension("json")).unwrap()).unwrap();
    let back = Dendrogram::from_json(&json).unwrap();
    assert_eq!(back.leaves.len(), 3);
    assert_eq!(back.merges.len(), 2);
    let n = tree.leaves.len();
    for (k, (a, b)) in back.merges.iter().zip(&tree.merges).enumerate() {
        assert_eq!(back.members(n + k), tree.members(n + k));
        assert_eq!(a.distance, b.distance);
        assert_eq!(a.size, b.size);
    }
    let nwk = std::fs::read_to_string(base.with_extension("nwk")).unwrap();
    assert!(nwk.trim_end().ends_with(';'));
    for leaf in &tree.leaves {
        assert!(nwk.contains(leaf.as_str()));
    }
}

#[test]
fn per_clip_dendrogram_matches_oracle() {
    let set = extract_embeddings(fitted(ModelVariant::MD), &data().test).unwrap();
    let points: Vec<(String, Vec<f64>)> = set.rows.iter().map(|r| (r.id.clone(), r.vector.clone())).collect();
    let tree = agglomerative(&points).unwrap();
    let oracle = common::agglomerative_oracle(&points);
    assert_eq!(tree.merges.len(), oracle.len());
    for (k, (m, (members, d))) in tree.merges.iter().zip(&oracle).enumerate() {
        assert_eq!(&tree.members(tree.leaves.len() + k), members);
        assert!((m.distance - d).abs() < 1e-12);
    }
}

#[test]
fn ablation_covers_every_variant() {
    let rows = run_ablation(data(), &small_config(), "tones");
    assert_eq!(rows.len(), 3);
    for (row, v) in rows.iter().zip(ModelVariant::ALL) {
        assert_eq!(row.variant, v);
        assert_eq!(row.dataset, "tones");
        let r = row.outcome.as_ref().unwrap();
        assert!((0.0..=1.0).contains(&r.accuracy));
    }
}

#[test]
fn single_class_dataset_is_rejected() {
    let mut d = data().clone();
    d.labels.truncate(1);
    let keep = |v: &mut Vec<LabeledFeatures>| v.retain(|c| c.label == 0);
    keep(&mut d.train);
    keep(&mut d.val);
    keep(&mut d.test);
    assert!(matches!(
        fit_variant(ModelVariant::MD, &d, &small_config()),
        Err(Error::InvalidConfig { .. })
    ));
    let rows = run_ablation(&d, &small_config(), "one");
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.outcome.is_err()));
}

#[test]
fn sweep_row_counts() {
    let spec = SweepSpec {
        parameter: SweepParameter::ReducedDim,
        values: vec![SweepValue::Size(20), SweepValue::Size(7), SweepValue::Size(12)],
        seeds: vec![0, 1],
    };
    let out = run_sweep(&spec, data(), &small_config()).unwrap();
    assert_eq!(out.skipped.len(), 2);
    assert!(out.skipped.iter().all(|s| s.0 == "7"));
    assert_eq!(out.rows.len(), 2 * 2);
    assert!(out.rows.iter().all(|r| r.parameter == "reduced_dim"));

    let one = SweepSpec {
        parameter: SweepParameter::AutoencoderHidden,
        values: vec![SweepValue::List(vec![4])],
        seeds: vec![3],
    };
    let out = run_sweep(&one, data(), &small_config()).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].seed, 3);
}

#[test]
fn front_end_sees_only_training_clips() {
    let mut d = data().clone();
    d.val = d.train.iter().rev().take(4).cloned().collect();
    d.test = d.train.iter().take(3).cloned().collect();
    let f = fit_variant(ModelVariant::MDRR, &d, &small_config()).unwrap();
    let reference = &fitted(ModelVariant::MDRR).front;
    assert_eq!(f.front.autoencoder, reference.autoencoder);
    assert_eq!(f.front.input_norm, reference.input_norm);
}

#[test]
fn test_split_is_never_used_for_selection() {
    let mut d = data().clone();
    d.test.reverse();
    d.test.truncate(2);
    let f = fit_variant(ModelVariant::MDR, &d, &small_config()).unwrap();
    assert_eq!(f.model, fitted(ModelVariant::MDR).model);
}

#[test]
fn evaluation_is_consistent_with_metrics() {
    let f = fitted(ModelVariant::MDRR);
    let e = f.evaluate(&data().test).unwrap();
    let cm = confusion(&e.truth, &e.predicted, 3).unwrap();
    assert_eq!(metrics(&cm).unwrap(), e.report);
    let preds: Vec<usize> = data().test.iter().map(|c| f.predict(&c.features).unwrap()).collect();
    assert_eq!(preds, e.predicted);
}

#[test]
fn embedding_rows_can_be_built_by_hand() {
    let rows = vec![
        EmbeddingRow {
            id: "a".into(),
            label: "x".into(),
            vector: vec![0.0, 1.0],
        },
        EmbeddingRow {
            id: "b".into(),
            label: "x".into(),
            vector: vec![2.0, 3.0],
        },
    ];
    let means = class_means(&EmbeddingSet { rows }).unwrap();
    assert_eq!(means, vec![("x".to_string(), vec![1.0, 2.0])]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_invariant_under_class_relabeling(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
        perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let a = metrics(&confusion(&t, &p, 4).unwrap()).unwrap();
        let t2: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
        let p2: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
        let b = metrics(&confusion(&t2, &p2, 4).unwrap()).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert!((a.macro_precision - b.macro_precision).abs() < 1e-12);
        prop_assert!((a.macro_recall - b.macro_recall).abs() < 1e-12);
        for c in 0..4 {
            prop_assert_eq!(a.precision[c], b.precision[perm[c]]);
            prop_assert_eq!(a.recall[c], b.recall[perm[c]]);
        }
    }
}
