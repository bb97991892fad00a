//! Queue selection, leases and the in-memory view of the label log.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use skillvid_core::store::{effective_labels, EffectiveLabels};
use skillvid_core::{Candidate, Label, LabelRecord, PairId, VideoRecord};

use crate::dataset::Dataset;

pub const LEASE_MINUTES: i64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueKind {
    #[default]
    Unlabeled,
    Review,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Band {
    fn default() -> Self {
        Band { lo: 0.0, hi: 1.0 }
    }
}

impl Band {
    fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairView {
    pub pair_id: PairId,
    pub job_title: String,
    pub skill: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoStats {
    pub view_count: u64,
    pub like_count: u64,
    pub dislike_count: u64,
    pub comment_count: u64,
    pub duration_s: u64,
    pub days_elapsed: u64,
    pub published_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dislike_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoView {
    pub video_id: String,
    pub title: String,
    pub description: String,
    pub stats: VideoStats,
    pub watch_url: String,
}

impl VideoView {
    fn new(v: &VideoRecord) -> Self {
        VideoView {
            video_id: v.video_id.clone(),
            title: v.title.clone(),
            description: v.description.clone(),
            stats: VideoStats {
                view_count: v.view_count,
                like_count: v.like_count,
                dislike_count: v.dislike_count,
                comment_count: v.comment_count,
                duration_s: v.duration_s,
                days_elapsed: v.days_elapsed(),
                published_at: v.published_at,
                dislike_missing: v.dislike_missing,
            },
            watch_url: format!("https://www.youtube.com/watch?v={}", v.video_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub pair: PairView,
    pub video: VideoView,
    pub retrieval_rank: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_proba: Option<f64>,
    pub queue_kind: QueueKind,
}

/// A candidate as listed under its pair, with its current label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub video: VideoView,
    pub retrieval_rank: u32,
    pub model_proba: Option<f64>,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCoverage {
    pub pair_id: PairId,
    pub job_title: String,
    pub skill: String,
    pub candidates: usize,
    pub labeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub total: usize,
    pub labeled: usize,
    pub positive_fraction: f64,
    pub per_pair_coverage: Vec<PairCoverage>,
}

type Key = (PairId, String);

#[derive(Debug, Clone)]
struct Lease {
    curator: String,
    expires: DateTime<Utc>,
}

/// Queue state. Every method takes `now` so lease timing is testable.
#[derive(Debug)]
pub struct LabelQueue {
    data: Dataset,
    labels: EffectiveLabels,
    leases: HashMap<Key, Lease>,
    /// (curator, item) -> hidden from that curator until
    skips: HashMap<(String, Key), DateTime<Utc>>,
}

fn key(c: &Candidate) -> Key {
    (c.pair_id.clone(), c.video_id.clone())
}

impl LabelQueue {
    pub fn new(data: Dataset, log: &[LabelRecord]) -> Self {
        LabelQueue {
            labels: effective_labels(log),
            data,
            leases: HashMap::new(),
            skips: HashMap::new(),
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn effective(&self, pair_id: &PairId, video_id: &str) -> Option<&LabelRecord> {
        self.labels.get(&(pair_id.clone(), video_id.to_string()))
    }

    fn available(&self, c: &Candidate, curator: &str, now: DateTime<Utc>) -> bool {
        let k = key(c);
        if self.labels.contains_key(&k) || !self.data.videos.contains_key(&c.video_id) {
            return false;
        }
        if let Some(l) = self.leases.get(&k) {
            if l.expires > now && l.curator != curator {
                return false;
            }
        }
        !self
            .skips
            .get(&(curator.to_string(), k))
            .is_some_and(|until| *until > now)
    }

    fn matches(&self, c: &Candidate, kind: QueueKind, band: Band) -> bool {
        match kind {
            QueueKind::Unlabeled => true,
            QueueKind::Review => self.data.probas.get(&key(c)).is_some_and(|&p| band.contains(p)),
        }
    }

    /// Next item for `curator`, leasing it for [`LEASE_MINUTES`].
    pub fn next(&mut self, curator: &str, kind: QueueKind, band: Band, now: DateTime<Utc>) -> Option<QueueItem> {
        self.leases.retain(|_, l| l.expires > now);
        self.skips.retain(|_, until| *until > now);

        let eligible = self
            .data
            .candidates
            .iter()
            .filter(|c| self.available(c, curator, now) && self.matches(c, kind, band));
        // an item this curator already holds comes back first
        let own = eligible
            .clone()
            .find(|c| self.leases.get(&key(c)).is_some_and(|l| l.curator == curator));
        let chosen = own.or_else(|| match kind {
            QueueKind::Unlabeled => eligible.clone().next(),
            QueueKind::Review => eligible.min_by(|a, b| {
                let d = |c: &Candidate| (self.data.probas[&key(c)] - 0.5).abs();
                d(a).total_cmp(&d(b))
            }),
        })?;
        let chosen = chosen.clone();

        self.leases.insert(
            key(&chosen),
            Lease {
                curator: curator.to_string(),
                expires: now + Duration::minutes(LEASE_MINUTES),
            },
        );
        Some(self.item(&chosen, kind))
    }

    fn item(&self, c: &Candidate, kind: QueueKind) -> QueueItem {
        let pair = self.data.pair(&c.pair_id);
        QueueItem {
            pair: PairView {
                pair_id: c.pair_id.clone(),
                job_title: pair.map(|p| p.job_title.clone()).unwrap_or_default(),
                skill: pair.map(|p| p.skill.clone()).unwrap_or_default(),
            },
            video: VideoView::new(&self.data.videos[&c.video_id]),
            retrieval_rank: c.retrieval_rank,
            model_proba: self.data.probas.get(&key(c)).copied(),
            queue_kind: kind,
        }
    }

    /// Gives up the curator's lease and hides the item from them for the
    /// rest of the lease window. Returns false for unknown candidates.
    pub fn skip(&mut self, curator: &str, pair_id: &PairId, video_id: &str, now: DateTime<Utc>) -> bool {
        if !self.data.has_candidate(pair_id, video_id) {
            return false;
        }
        let k = (pair_id.clone(), video_id.to_string());
        if self.leases.get(&k).is_some_and(|l| l.curator == curator) {
            self.leases.remove(&k);
        }
        self.skips
            .insert((curator.to_string(), k), now + Duration::minutes(LEASE_MINUTES));
        true
    }

    /// True when recording `record` would not change anything: the same
    /// curator already gave the same effective label.
    pub fn is_repeat(&self, record: &LabelRecord) -> bool {
        self.labels
            .get(&record.key())
            .is_some_and(|cur| cur.label == record.label && cur.curator_id == record.curator_id)
    }

    /// Folds an already-persisted record into the in-memory view and
    /// releases its lease. Returns the effective record.
    pub fn apply(&mut self, record: LabelRecord) -> &LabelRecord {
        let k = record.key();
        self.leases.remove(&k);
        let replace = self.labels.get(&k).is_none_or(|cur| record.labeled_at >= cur.labeled_at);
        if replace {
            self.labels.insert(k.clone(), record);
        }
        &self.labels[&k]
    }

    pub fn stats(&self) -> Stats {
        let mut per_pair: BTreeMap<usize, PairCoverage> = BTreeMap::new();
        let order: HashMap<&PairId, usize> =
            self.data.pairs.iter().enumerate().map(|(i, p)| (&p.pair_id, i)).collect();
        let (mut labeled, mut positive) = (0, 0);
        for c in &self.data.candidates {
            let i = order.get(&c.pair_id).copied().unwrap_or(usize::MAX);
            let entry = per_pair.entry(i).or_insert_with(|| {
                let pair = self.data.pair(&c.pair_id);
                PairCoverage {
                    pair_id: c.pair_id.clone(),
                    job_title: pair.map(|p| p.job_title.clone()).unwrap_or_default(),
                    skill: pair.map(|p| p.skill.clone()).unwrap_or_default(),
                    candidates: 0,
                    labeled: 0,
                }
            });
            entry.candidates += 1;
            if let Some(l) = self.labels.get(&key(c)) {
                entry.labeled += 1;
                labeled += 1;
                positive += l.label.is_positive() as usize;
            }
        }
        Stats {
            total: self.data.candidates.len(),
            labeled,
            positive_fraction: if labeled == 0 { 0.0 } else { positive as f64 / labeled as f64 },
            per_pair_coverage: per_pair.into_values().collect(),
        }
    }

    pub fn pair_candidates(&self, pair_id: &PairId) -> Option<Vec<CandidateView>> {
        self.data.pair(pair_id)?;
        Some(
            self.data
                .candidates
                .iter()
                .filter(|c| &c.pair_id == pair_id)
                .filter_map(|c| {
                    let v = self.data.videos.get(&c.video_id)?;
                    Some(CandidateView {
                        video: VideoView::new(v),
                        retrieval_rank: c.retrieval_rank,
                        model_proba: self.data.probas.get(&key(c)).copied(),
                        label: self.labels.get(&key(c)).map(|l| l.label),
                    })
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use skillvid_core::TitleSkillPair;
    use std::collections::BTreeSet;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 1, 1, 12, 0, 0).unwrap()
    }

    fn video(id: &str) -> VideoRecord {
        VideoRecord {
            video_id: id.into(),
            title: format!("title {id}"),
            description: String::new(),
            published_at: Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap(),
            duration_s: 60,
            view_count: 10,
            like_count: 1,
            dislike_count: 0,
            comment_count: 0,
            category_id: "27".into(),
            language: "en".into(),
            fetched_at: Utc.with_ymd_and_hms(2019, 1, 11, 0, 0, 0).unwrap(),
            dislike_missing: false,
        }
    }

    fn queue(probas: &[f64]) -> LabelQueue {
        let pair = TitleSkillPair::new("Nurse", "Patient Care").unwrap();
        let ids: Vec<String> = (0..probas.len()).map(|i| format!("v{i}")).collect();
        let candidates = ids
            .iter()
            .enumerate()
            .map(|(i, id)| Candidate {
                pair_id: pair.pair_id.clone(),
                video_id: id.clone(),
                retrieval_rank: i as u32,
                query_forms: BTreeSet::new(),
            })
            .collect();
        let probas: Vec<_> = ids
            .iter()
            .zip(probas)
            .map(|(id, &p)| ((pair.pair_id.clone(), id.clone()), p))
            .collect();
        let data = Dataset::new(vec![pair], candidates, ids.iter().map(|i| video(i)).collect(), probas);
        LabelQueue::new(data, &[])
    }

    fn label(q: &LabelQueue, video: &str, positive: bool) -> LabelRecord {
        LabelRecord {
            pair_id: q.data.pairs[0].pair_id.clone(),
            video_id: video.into(),
            label: Label::from_positive(positive),
            curator_id: "a".into(),
            labeled_at: t0(),
        }
    }

    #[test]
    fn review_band_picks_closest_in_band() {
        let mut q = queue(&[0.2, 0.55, 0.9]);
        let item = q.next("a", QueueKind::Review, Band { lo: 0.4, hi: 0.6 }, t0()).unwrap();
        assert_eq!(item.video.video_id, "v1");
        assert_eq!(item.model_proba, Some(0.55));
        assert!(q.next("b", QueueKind::Review, Band { lo: 0.4, hi: 0.6 }, t0()).is_none());
    }

    #[test]
    fn two_curators_get_distinct_items() {
        let mut q = queue(&[0.5, 0.5, 0.5]);
        let a = q.next("a", QueueKind::Unlabeled, Band::default(), t0()).unwrap();
        let b = q.next("b", QueueKind::Unlabeled, Band::default(), t0()).unwrap();
        assert_eq!(a.video.video_id, "v0");
        assert_eq!(b.video.video_id, "v1");
        // a polls again and gets its own lease back
        let a2 = q.next("a", QueueKind::Unlabeled, Band::default(), t0()).unwrap();
        assert_eq!(a2.video.video_id, "v0");
    }

    #[test]
    fn lease_expires_after_ten_minutes() {
        let mut q = queue(&[0.5]);
        assert!(q.next("a", QueueKind::Unlabeled, Band::default(), t0()).is_some());
        assert!(q.next("b", QueueKind::Unlabeled, Band::default(), t0() + Duration::minutes(9)).is_none());
        let item = q.next("b", QueueKind::Unlabeled, Band::default(), t0() + Duration::minutes(10));
        assert_eq!(item.unwrap().video.video_id, "v0");
    }

    #[test]
    fn skip_releases_for_others_but_hides_from_skipper() {
        let mut q = queue(&[0.5, 0.5]);
        let pair = q.data.pairs[0].pair_id.clone();
        q.next("a", QueueKind::Unlabeled, Band::default(), t0()).unwrap();
        assert!(q.skip("a", &pair, "v0", t0()));
        assert_eq!(q.next("a", QueueKind::Unlabeled, Band::default(), t0()).unwrap().video.video_id, "v1");
        assert_eq!(q.next("b", QueueKind::Unlabeled, Band::default(), t0()).unwrap().video.video_id, "v0");
        assert!(!q.skip("a", &pair, "nope", t0()));
    }

    #[test]
    fn labeled_items_leave_the_queue() {
        let mut q = queue(&[0.5, 0.5]);
        let r0 = label(&q, "v0", true);
        let r1 = label(&q, "v1", false);
        q.apply(r0);
        q.apply(r1);
        assert!(q.next("a", QueueKind::Unlabeled, Band::default(), t0()).is_none());
        let s = q.stats();
        assert_eq!((s.total, s.labeled, s.positive_fraction), (2, 2, 0.5));
    }

    #[test]
    fn stats_with_no_labels() {
        let q = queue(&[0.1; 7]);
        let s = q.stats();
        assert_eq!((s.total, s.labeled, s.positive_fraction), (7, 0, 0.0));
        assert_eq!(s.per_pair_coverage.len(), 1);
    }

    #[test]
    fn repeats_are_detected() {
        let mut q = queue(&[0.5]);
        let r = label(&q, "v0", true);
        assert!(!q.is_repeat(&r));
        q.apply(r.clone());
        assert!(q.is_repeat(&r));
        assert!(!q.is_repeat(&LabelRecord { label: Label::Irrelevant, ..r }));
    }
}
