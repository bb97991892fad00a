use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use skillvid_core::store::{read_jsonl, ParseMode, StoreError};
use skillvid_core::{Candidate, PairId, TitleSkillPair, VideoRecord};

/// Everything the queue serves, loaded once at startup.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub pairs: Vec<TitleSkillPair>,
    /// Sorted by (pair order, retrieval_rank).
    pub candidates: Vec<Candidate>,
    pub videos: HashMap<String, VideoRecord>,
    pub probas: HashMap<(PairId, String), f64>,
}

/// The subset of a decisions.jsonl row the queue needs.
#[derive(Deserialize)]
struct Scored {
    pair_id: PairId,
    video_id: String,
    proba: f64,
}

impl Dataset {
    /// Reads `pairs.jsonl`, `candidates.jsonl` and `videos.jsonl` from
    /// `dir`, plus `decisions.jsonl` when present.
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let file = |name: &str| -> PathBuf { dir.join(name) };
        let pairs: Vec<TitleSkillPair> = read_jsonl(&file("pairs.jsonl"), ParseMode::Strict)?.rows;
        let candidates: Vec<Candidate> = read_jsonl(&file("candidates.jsonl"), ParseMode::Strict)?.rows;
        let videos: Vec<VideoRecord> = read_jsonl(&file("videos.jsonl"), ParseMode::Strict)?.rows;
        let decisions = file("decisions.jsonl");
        let scored: Vec<Scored> = if decisions.exists() {
            read_jsonl(&decisions, ParseMode::Strict)?.rows
        } else {
            Vec::new()
        };
        Ok(Dataset::new(
            pairs,
            candidates,
            videos,
            scored.into_iter().map(|s| ((s.pair_id, s.video_id), s.proba)),
        ))
    }

    pub fn new(
        pairs: Vec<TitleSkillPair>,
        mut candidates: Vec<Candidate>,
        videos: Vec<VideoRecord>,
        probas: impl IntoIterator<Item = ((PairId, String), f64)>,
    ) -> Self {
        let order: HashMap<&PairId, usize> = pairs.iter().enumerate().map(|(i, p)| (&p.pair_id, i)).collect();
        // Candidates of unknown pairs sort last, by pair id.
        candidates.sort_by(|a, b| {
            let key = |c: &Candidate| (order.get(&c.pair_id).copied().unwrap_or(usize::MAX), c.pair_id.clone(), c.retrieval_rank);
            key(a).cmp(&key(b))
        });
        Dataset {
            candidates,
            videos: videos.into_iter().map(|v| (v.video_id.clone(), v)).collect(),
            probas: probas.into_iter().collect(),
            pairs,
        }
    }

    pub fn pair(&self, id: &PairId) -> Option<&TitleSkillPair> {
        self.pairs.iter().find(|p| &p.pair_id == id)
    }

    pub fn has_candidate(&self, pair_id: &PairId, video_id: &str) -> bool {
        self.candidates
            .iter()
            .any(|c| &c.pair_id == pair_id && c.video_id == video_id)
    }
}
