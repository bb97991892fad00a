//! Candidate retrieval for title-skill pairs.
//!
//! For each pair the three query forms are searched in order, paging
//! through each form before moving to the next, until `cap` unique videos
//! with resolvable details have been collected or every page is consumed.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::hash::Hash;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use crate::querygen::{generate_queries, QueryForm};
use crate::source::{SourceError, VideoSource};
use crate::types::{Candidate, PairId, TitleSkillPair, VideoRecord};

pub const DEFAULT_CAP: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestResult {
    pub pair_id: PairId,
    pub candidates: Vec<Candidate>,
    /// All forms and pages were consumed before reaching the cap.
    pub exhausted: bool,
    /// Detail records for the retained candidates, in candidate order.
    pub videos: Vec<VideoRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarvestOptions {
    pub cap: usize,
    pub max_pages_per_query: usize,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        HarvestOptions {
            cap: DEFAULT_CAP,
            max_pages_per_query: 3,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum HarvestError {
    #[error("cap must be >= 1")]
    InvalidCap,
    #[error("concurrency must be >= 1")]
    InvalidConcurrency,
    #[error("pair {pair_id} ({job_title} / {skill}): {source}")]
    Source {
        pair_id: PairId,
        job_title: String,
        skill: String,
        #[source]
        source: SourceError,
    },
    #[error("{failed} of {total} pairs failed (more than 10%); first: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
        failures: Vec<PairFailure>,
    },
}

#[derive(Debug, Clone)]
pub struct PairFailure {
    pub index: usize,
    pub pair_id: PairId,
    pub error: HarvestError,
}

#[derive(Debug, Clone, Default)]
pub struct HarvestOutcome {
    /// Successful pairs, in input order.
    pub results: Vec<HarvestResult>,
    /// Failed pairs, in input order.
    pub failures: Vec<PairFailure>,
}

/// Keeps the first occurrence of each id, preserving order.
pub fn dedupe<T: Eq + Hash + Clone>(ids: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut seen = HashSet::new();
    ids.into_iter().filter(|id| seen.insert(id.clone())).collect()
}

pub fn harvest_pair(
    pair: &TitleSkillPair,
    source: &dyn VideoSource,
    opts: HarvestOptions,
) -> Result<HarvestResult, HarvestError> {
    if opts.cap == 0 {
        return Err(HarvestError::InvalidCap);
    }
    let wrap = |source: SourceError| HarvestError::Source {
        pair_id: pair.pair_id.clone(),
        job_title: pair.job_title.clone(),
        skill: pair.skill.clone(),
        source,
    };

    let mut retained: Vec<(String, BTreeSet<QueryForm>)> = Vec::new();
    let mut videos: Vec<VideoRecord> = Vec::new();
    let mut position: HashMap<String, usize> = HashMap::new();
    // ids already tried, including ones whose details could not be resolved
    let mut seen: HashSet<String> = HashSet::new();

    'forms: for query in generate_queries(pair) {
        let mut token: Option<String> = None;
        for _ in 0..opts.max_pages_per_query.max(1) {
            let page = source.search(&query, token.as_deref()).map_err(wrap)?;
            let mut fresh = Vec::new();
            for id in page.video_ids {
                if let Some(&i) = position.get(&id) {
                    retained[i].1.insert(query.form);
                } else if seen.insert(id.clone()) {
                    fresh.push(id);
                }
            }
            // resolve only as many as the cap still needs, topping up if
            // some of them turn out to be missing
            let mut pending = fresh.as_slice();
            while !pending.is_empty() && retained.len() < opts.cap {
                let take = (opts.cap - retained.len()).min(pending.len());
                let (batch, rest) = pending.split_at(take);
                pending = rest;
                let details = source.fetch_details(batch).map_err(wrap)?;
                for miss in &details.missing {
                    log::warn!("pair {}: dropping {miss}, details unavailable", pair.pair_id);
                }
                let mut by_id: HashMap<&str, &VideoRecord> =
                    details.records.iter().map(|r| (r.video_id.as_str(), r)).collect();
                for id in batch {
                    if let Some(rec) = by_id.remove(id.as_str()) {
                        position.insert(id.clone(), retained.len());
                        retained.push((id.clone(), BTreeSet::from([query.form])));
                        videos.push(rec.clone());
                    }
                }
            }
            if retained.len() >= opts.cap {
                break 'forms;
            }
            match page.next_page_token {
                Some(t) => token = Some(t),
                None => break,
            }
        }
    }

    let exhausted = retained.len() < opts.cap;
    let candidates = retained
        .into_iter()
        .enumerate()
        .map(|(rank, (video_id, query_forms))| Candidate {
            pair_id: pair.pair_id.clone(),
            video_id,
            retrieval_rank: rank as u32,
            query_forms,
        })
        .collect();
    Ok(HarvestResult {
        pair_id: pair.pair_id.clone(),
        candidates,
        exhausted,
        videos,
    })
}

/// Harvests every pair with up to `concurrency` workers. Output order
/// follows input order whatever the completion order. Fails as a whole
/// only when more than 10% of pairs fail.
pub fn harvest_all(
    pairs: &[TitleSkillPair],
    source: &dyn VideoSource,
    opts: HarvestOptions,
    concurrency: usize,
) -> Result<HarvestOutcome, HarvestError> {
    if concurrency == 0 {
        return Err(HarvestError::InvalidConcurrency);
    }
    if opts.cap == 0 {
        return Err(HarvestError::InvalidCap);
    }
    let slots: Vec<Mutex<Option<Result<HarvestResult, HarvestError>>>> =
        pairs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = concurrency.min(pairs.len()).max(1);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(pair) = pairs.get(i) else { break };
                let out = harvest_pair(pair, source, opts);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });

    let mut outcome = HarvestOutcome::default();
    for (index, slot) in slots.into_iter().enumerate() {
        match slot.into_inner().unwrap().expect("every slot is filled") {
            Ok(r) => outcome.results.push(r),
            Err(error) => {
                log::error!("{error}");
                outcome.failures.push(PairFailure {
                    index,
                    pair_id: pairs[index].pair_id.clone(),
                    error,
                });
            }
        }
    }
    let failed = outcome.failures.len();
    if failed * 10 > pairs.len() {
        return Err(HarvestError::TooManyFailures {
            failed,
            total: pairs.len(),
            first: outcome.failures[0].error.to_string(),
            failures: outcome.failures,
        });
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{FixtureFile, FixtureSource, SourceConfig};
    use serde_json::json;

    pub(crate) fn video(id: &str) -> serde_json::Value {
        json!({
            "title": format!("video {id}"), "description": "",
            "published_at": "2019-01-01T00:00:00Z", "fetched_at": "2019-06-01T00:00:00Z",
            "duration_s": 300, "view_count": 10, "like_count": 1,
            "dislike_count": 0, "comment_count": 0, "category_id": "27", "language": "en",
        })
    }

    fn file(query: &str, pages: &[(&[&str], Option<&str>)], known: &[&str]) -> FixtureFile {
        let videos: serde_json::Map<String, serde_json::Value> =
            known.iter().map(|id| (id.to_string(), video(id))).collect();
        serde_json::from_value(json!({
            "query": query,
            "pages": pages.iter().map(|(ids, next)| json!({"ids": ids, "next": next})).collect::<Vec<_>>(),
            "videos": videos,
        }))
        .unwrap()
    }

    fn time_management_source() -> FixtureSource {
        let all = ["v1", "v2", "v3", "v4", "v5", "v6", "v7", "v8", "v9"];
        FixtureSource::from_files(
            [
                file("Time Management", &[(&["v1", "v2", "v3", "v4", "v5"], Some("p2")), (&["v2", "v5"], None)], &all),
                file("Time Management Executive Assistant", &[(&["v4", "v5", "v6"], Some("p2")), (&["v7", "v8"], None)], &[]),
                file("\"Time Management\" Executive Assistant", &[(&["v6", "v7", "v9"], None)], &[]),
            ],
            &SourceConfig::default(),
        )
        .unwrap()
    }

    fn ids(r: &HarvestResult) -> Vec<&str> {
        r.candidates.iter().map(|c| c.video_id.as_str()).collect()
    }

    #[test]
    fn dedupe_keeps_first_seen() {
        assert_eq!(dedupe(["a", "b", "a", "c"]), ["a", "b", "c"]);
        assert_eq!(dedupe(Vec::<&str>::new()), Vec::<&str>::new());
        assert_eq!(dedupe(["a", "a", "a"]), ["a"]);
    }

    #[test]
    fn three_forms_reach_cap_of_nine() {
        let pair = TitleSkillPair::new("Executive Assistant", "Time Management").unwrap();
        let r = harvest_pair(&pair, &time_management_source(), HarvestOptions::default()).unwrap();
        assert_eq!(ids(&r), ["v1", "v2", "v3", "v4", "v5", "v6", "v7", "v8", "v9"]);
        assert!(!r.exhausted);
        for (i, c) in r.candidates.iter().enumerate() {
            assert_eq!(c.retrieval_rank as usize, i);
        }
        assert_eq!(r.videos.len(), 9);
        // v4 was surfaced by forms 1 and 2, v6 by forms 2 and 3
        assert_eq!(
            r.candidates[3].query_forms,
            BTreeSet::from([QueryForm::SkillOnly, QueryForm::SkillTitle])
        );
        assert_eq!(
            r.candidates[5].query_forms,
            BTreeSet::from([QueryForm::SkillTitle, QueryForm::QuotedSkillTitle])
        );
        assert_eq!(r.candidates[8].query_forms, BTreeSet::from([QueryForm::QuotedSkillTitle]));
    }

    #[test]
    fn thin_supply_is_retained_and_flagged() {
        let known = ["a", "b", "c", "d"];
        let src = FixtureSource::from_files(
            [
                file("Pallet Jacks", &[(&["a", "b"], None)], &known),
                file("Pallet Jacks Loader", &[(&["b", "c"], None)], &[]),
                file("\"Pallet Jacks\" Loader", &[(&["d", "a"], None)], &[]),
            ],
            &SourceConfig::default(),
        )
        .unwrap();
        let pair = TitleSkillPair::new("Loader", "Pallet Jacks").unwrap();
        let r = harvest_pair(&pair, &src, HarvestOptions::default()).unwrap();
        assert_eq!(ids(&r), ["a", "b", "c", "d"]);
        assert!(r.exhausted);
    }

    #[test]
    fn cap_one_takes_first_id_of_first_form() {
        let pair = TitleSkillPair::new("Executive Assistant", "Time Management").unwrap();
        let opts = HarvestOptions { cap: 1, ..Default::default() };
        let r = harvest_pair(&pair, &time_management_source(), opts).unwrap();
        assert_eq!(ids(&r), ["v1"]);
        assert!(!r.exhausted);
        assert!(matches!(
            harvest_pair(&pair, &time_management_source(), HarvestOptions { cap: 0, ..opts }),
            Err(HarvestError::InvalidCap)
        ));
    }

    #[test]
    fn unresolvable_ids_do_not_count_toward_cap() {
        let src = FixtureSource::from_files(
            [
                file("S", &[(&["a", "ghost", "b"], None)], &["a", "b", "c"]),
                file("S T", &[(&["c"], None)], &[]),
                file("\"S\" T", &[(&["ghost"], None)], &[]),
            ],
            &SourceConfig::default(),
        )
        .unwrap();
        let pair = TitleSkillPair::new("T", "S").unwrap();
        let r = harvest_pair(&pair, &src, HarvestOptions { cap: 3, ..Default::default() }).unwrap();
        assert_eq!(ids(&r), ["a", "b", "c"]);
        assert!(!r.exhausted);
    }

    #[test]
    fn max_pages_bounds_paging() {
        let pair = TitleSkillPair::new("Executive Assistant", "Time Management").unwrap();
        let opts = HarvestOptions { cap: 9, max_pages_per_query: 1 };
        let r = harvest_pair(&pair, &time_management_source(), opts).unwrap();
        // form 2 page 2 (v7, v8) is never requested
        assert_eq!(ids(&r), ["v1", "v2", "v3", "v4", "v5", "v6", "v7", "v9"]);
        assert!(r.exhausted);
    }

    #[test]
    fn source_errors_carry_pair_context() {
        let pair = TitleSkillPair::new("Juggler", "Clubs").unwrap();
        let err = harvest_pair(&pair, &time_management_source(), HarvestOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Juggler") && msg.contains("Clubs"), "{msg}");
    }

    #[test]
    fn harvest_all_handles_empty_and_zero_concurrency() {
        let src = time_management_source();
        let out = harvest_all(&[], &src, HarvestOptions::default(), 4).unwrap();
        assert!(out.results.is_empty() && out.failures.is_empty());
        assert!(matches!(
            harvest_all(&[], &src, HarvestOptions::default(), 0),
            Err(HarvestError::InvalidConcurrency)
        ));
    }

    #[test]
    fn too_many_failures_is_an_error() {
        let src = time_management_source();
        let pairs = vec![
            TitleSkillPair::new("Executive Assistant", "Time Management").unwrap(),
            TitleSkillPair::new("Juggler", "Clubs").unwrap(),
        ];
        let err = harvest_all(&pairs, &src, HarvestOptions::default(), 2).unwrap_err();
        assert!(matches!(err, HarvestError::TooManyFailures { failed: 1, total: 2, .. }));
    }
}
