//! Append-only label log and its last-write-wins fold.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use super::{io_error, read_jsonl, ParseMode, ReadOutcome, StoreError};
use crate::types::{LabelRecord, PairId};

/// Serializes appends within the process; `O_APPEND` plus a single write
/// keeps batches contiguous across processes.
static APPEND_LOCK: Mutex<()> = Mutex::new(());

/// Appends the whole batch or nothing. Returns the number of records written.
pub fn append_labels(path: &Path, records: &[LabelRecord]) -> Result<usize, StoreError> {
    if records.is_empty() {
        return Ok(0);
    }
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("label record serializes");
        buf.push(b'\n');
    }

    let _guard = APPEND_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_error(path))?;
    let before = f.metadata().map_err(io_error(path))?.len();
    if let Err(e) = f.write_all(&buf).and_then(|_| f.sync_data()) {
        // Roll back a partial batch so readers never see it.
        let _ = f.set_len(before);
        return Err(io_error(path)(e));
    }
    Ok(records.len())
}

/// Reads the log in file order. A missing file is an empty log.
pub fn read_labels(path: &Path, mode: ParseMode) -> Result<ReadOutcome<LabelRecord>, StoreError> {
    if !path.exists() {
        return Ok(ReadOutcome {
            rows: Vec::new(),
            skipped: Vec::new(),
        });
    }
    read_jsonl(path, mode)
}

pub type EffectiveLabels = BTreeMap<(PairId, String), LabelRecord>;

/// Latest label per (pair_id, video_id) by `labeled_at`; equal timestamps
/// go to the record later in `records`.
pub fn effective_labels(records: &[LabelRecord]) -> EffectiveLabels {
    let mut out = EffectiveLabels::new();
    for r in records {
        match out.get(&r.key()) {
            Some(cur) if cur.labeled_at > r.labeled_at => {}
            _ => {
                out.insert(r.key(), r.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Label;
    use chrono::{Duration, TimeZone, Utc};

    fn rec(video: &str, label: Label, secs: i64, curator: &str) -> LabelRecord {
        LabelRecord {
            pair_id: PairId::from("p1"),
            video_id: video.into(),
            label,
            curator_id: curator.into(),
            labeled_at: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap() + Duration::seconds(secs),
        }
    }

    #[test]
    fn later_label_wins() {
        let log = vec![rec("v1", Label::Relevant, 0, "a"), rec("v1", Label::Irrelevant, 5, "b")];
        let eff = effective_labels(&log);
        assert_eq!(eff.len(), 1);
        assert_eq!(eff.values().next().unwrap().label, Label::Irrelevant);
        let rev: Vec<_> = log.iter().rev().cloned().collect();
        assert_eq!(effective_labels(&rev), eff);
    }

    #[test]
    fn ties_go_to_log_position() {
        let log = vec![rec("v1", Label::Relevant, 0, "a"), rec("v1", Label::Irrelevant, 0, "b")];
        assert_eq!(effective_labels(&log)[&(PairId::from("p1"), "v1".into())].curator_id, "b");
    }

    #[test]
    fn append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        assert_eq!(append_labels(&path, &[]).unwrap(), 0);
        assert!(!path.exists());
        append_labels(&path, &[rec("v1", Label::Relevant, 0, "a")]).unwrap();
        append_labels(&path, &[rec("v2", Label::Irrelevant, 1, "a"), rec("v1", Label::Irrelevant, 2, "b")])
            .unwrap();
        let log = read_labels(&path, ParseMode::Strict).unwrap().rows;
        assert_eq!(log.len(), 3);
        assert_eq!(log[2].curator_id, "b");
        assert!(read_labels(&dir.path().join("none"), ParseMode::Strict).unwrap().rows.is_empty());
    }

    #[test]
    fn concurrent_batches_stay_contiguous() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        std::thread::scope(|s| {
            for t in 0..8 {
                let path = &path;
                s.spawn(move || {
                    for b in 0..10 {
                        let batch: Vec<_> = (0..5)
                            .map(|i| rec(&format!("t{t}b{b}i{i}"), Label::Relevant, i, &format!("c{t}")))
                            .collect();
                        append_labels(path, &batch).unwrap();
                    }
                });
            }
        });
        let log = read_labels(&path, ParseMode::Strict).unwrap().rows;
        assert_eq!(log.len(), 400);
        for chunk in log.chunks(5) {
            let prefix = &chunk[0].video_id[..chunk[0].video_id.len() - 1];
            for (i, r) in chunk.iter().enumerate() {
                assert_eq!(r.video_id, format!("{prefix}{i}"));
            }
        }
    }
}
