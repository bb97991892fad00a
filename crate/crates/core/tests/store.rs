use std::collections::BTreeMap;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use skillvid_core::featurize::{FeatureRow, SchemaId, FEATURE_SCHEMA_VERSION};
use skillvid_core::store::{
    append_labels, effective_labels, export_training_set, join_labels, read_jsonl, read_labels, write_jsonl,
    DatasetManifest, ParseMode, StoreError, MANIFEST_FILE,
};
use skillvid_core::{Label, LabelRecord, PairId};

fn row(pair: &str, video: &str, schema: SchemaId) -> FeatureRow {
    FeatureRow {
        pair_id: PairId::from(pair),
        video_id: video.into(),
        schema_id: schema,
        values: (0..schema.dim()).map(|i| i as f64 * 0.5).collect(),
        label: None,
    }
}

fn label(pair: &str, video: &str, positive: bool, minute: i64) -> LabelRecord {
    LabelRecord {
        pair_id: PairId::from(pair),
        video_id: video.into(),
        label: Label::from_positive(positive),
        curator_id: "c".into(),
        labeled_at: Utc.with_ymd_and_hms(2019, 6, 1, 0, 0, 0).unwrap() + Duration::minutes(minute),
    }
}

#[test]
fn join_reconciles_both_sides() {
    let features: Vec<FeatureRow> = (0..10).map(|i| row("p", &format!("v{i}"), SchemaId::Set1)).collect();
    // v5..v9 overlap the features, v10 does not; v5 is labeled twice.
    let mut log: Vec<LabelRecord> = (5..11).map(|i| label("p", &format!("v{i}"), i % 2 == 0, i)).collect();
    log.push(label("p", "v5", true, 100));
    let export = join_labels(features, &log);
    assert_eq!(export.rows.len(), 5);
    assert_eq!(export.reconciliation.unlabeled, 5);
    assert_eq!(export.reconciliation.orphan_labels, 1);
    assert_eq!(export.rows[0].video_id, "v5");
    assert_eq!(export.rows[0].label, Some(Label::from_positive(true)));
}

#[test]
fn export_checks_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("features.jsonl");
    let labels = dir.path().join("labels.jsonl");
    append_labels(&labels, &[label("p", "a", true, 0), label("p", "b", false, 1)]).unwrap();

    write_jsonl(&features, &[row("p", "a", SchemaId::Set1), row("p", "b", SchemaId::Set1)]).unwrap();
    let ok = export_training_set(&labels, &features, ParseMode::Strict).unwrap();
    assert_eq!(ok.rows.len(), 2);

    write_jsonl(&features, &[row("p", "a", SchemaId::Set1), row("p", "b", SchemaId::Set2)]).unwrap();
    assert!(matches!(
        export_training_set(&labels, &features, ParseMode::Strict),
        Err(StoreError::MixedSchemas { .. })
    ));

    write_jsonl(&features, &[row("p", "a", SchemaId::Set1)]).unwrap();
    let manifest = DatasetManifest {
        created_at: Utc::now(),
        seed: 1,
        config_hash: "x".into(),
        provider_id: None,
        schema_versions: BTreeMap::from([("features".to_string(), "features/v0".to_string())]),
        counts: BTreeMap::new(),
    };
    manifest.save(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(matches!(
        export_training_set(&labels, &features, ParseMode::Strict),
        Err(StoreError::SchemaVersion { .. })
    ));
    let mut current = manifest;
    current.schema_versions.insert("features".into(), FEATURE_SCHEMA_VERSION.into());
    current.save(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(export_training_set(&labels, &features, ParseMode::Strict).is_ok());
}

#[test]
fn lenient_mode_skips_bad_lines_and_strict_names_them() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.jsonl");
    append_labels(&path, &[label("p", "a", true, 0)]).unwrap();
    std::fs::write(
        &path,
        format!("{}{{not json\n\n", std::fs::read_to_string(&path).unwrap()),
    )
    .unwrap();
    append_labels(&path, &[label("p", "b", false, 1)]).unwrap();
    match read_labels(&path, ParseMode::Strict) {
        Err(StoreError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let lenient = read_labels(&path, ParseMode::Lenient).unwrap();
    assert_eq!(lenient.rows.len(), 2);
    assert_eq!(lenient.skipped, vec![2]);
}

#[test]
fn feature_rows_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.jsonl");
    let mut r = row("p", "v", SchemaId::Set1);
    r.values = vec![
        0.1 + 0.2,
        f64::MIN_POSITIVE,
        5e-324,
        1.7976931348623157e308,
        -0.0,
        std::f64::consts::PI,
        1.0 / 3.0,
        (126f64).ln_1p(),
        2.0 / 127.0,
        0.0,
        600.0,
        1234.0,
    ];
    r.label = Some(Label::from_positive(false));
    write_jsonl(&path, std::slice::from_ref(&r)).unwrap();
    let back: Vec<FeatureRow> = read_jsonl(&path, ParseMode::Strict).unwrap().rows;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back[0].values), bits(&r.values));
}

proptest! {
    #[test]
    fn fold_is_order_independent(
        events in prop::collection::vec((0u8..4, 0u8..4, any::<bool>()), 1..60),
        perm_seed in any::<u64>(),
    ) {
        // Distinct timestamps: event i happens at minute i.
        let log: Vec<LabelRecord> = events
            .iter()
            .enumerate()
            .map(|(i, &(p, v, y))| label(&format!("p{p}"), &format!("v{v}"), y, i as i64))
            .collect();
        let mut shuffled = log.clone();
        let mut s = perm_seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = effective_labels(&log);
        prop_assert_eq!(&a, &effective_labels(&shuffled));
        for (k, r) in &a {
            let latest = log.iter().filter(|e| &e.key() == k).max_by_key(|e| e.labeled_at).unwrap();
            prop_assert_eq!(r, latest);
        }
    }
}
