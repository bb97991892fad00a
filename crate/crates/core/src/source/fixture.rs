//! Offline source replaying recorded search pages.
//!
//! A fixture directory holds one JSON file per query text:
//!
//! ```json
//! {"query": "Time Management",
//!  "pages": [{"ids": ["v1", "v2"], "next": "p2"}, {"ids": ["v3"], "next": null}],
//!  "videos": {"v1": {"title": "...", "published_at": "...", ...}}}
//! ```
//!
//! Page `i + 1` is addressed by the `next` token of page `i`; the first
//! page by no token. Video records from every file are pooled.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DetailBatch, SearchPage, SourceConfig, SourceError, VideoSource};
use crate::querygen::SearchQuery;
use crate::types::VideoRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixturePage {
    pub ids: Vec<String>,
    #[serde(default)]
    pub next: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub query: String,
    pub pages: Vec<FixturePage>,
    /// Keyed by video id; the record's own `video_id` may be omitted.
    #[serde(default)]
    pub videos: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Default)]
pub struct FixtureSource {
    /// (query text, page token) -> page
    pages: HashMap<(String, Option<String>), SearchPage>,
    videos: HashMap<String, VideoRecord>,
    language: String,
    category_id: String,
}

fn fixture_err(path: &Path, message: impl Into<String>) -> SourceError {
    SourceError::Fixture {
        path: path.display().to_string(),
        message: message.into(),
    }
}

impl FixtureSource {
    /// Loads every `*.json` file in `dir`.
    pub fn load(dir: impl AsRef<Path>, config: &SourceConfig) -> Result<Self, SourceError> {
        let dir = dir.as_ref();
        let entries = fs::read_dir(dir).map_err(|e| fixture_err(dir, e.to_string()))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();

        let mut source = FixtureSource::empty(config);
        for path in paths {
            let text = fs::read_to_string(&path).map_err(|e| fixture_err(&path, e.to_string()))?;
            let file: FixtureFile =
                serde_json::from_str(&text).map_err(|e| fixture_err(&path, e.to_string()))?;
            source
                .add_file(file)
                .map_err(|m| fixture_err(&path, m))?;
        }
        Ok(source)
    }

    pub fn empty(config: &SourceConfig) -> Self {
        FixtureSource {
            language: config.language.clone(),
            category_id: config.education_category_id.clone(),
            ..Default::default()
        }
    }

    pub fn from_files(
        files: impl IntoIterator<Item = FixtureFile>,
        config: &SourceConfig,
    ) -> Result<Self, SourceError> {
        let mut source = FixtureSource::empty(config);
        for file in files {
            let query = file.query.clone();
            source.add_file(file).map_err(|message| SourceError::Fixture {
                path: format!("<memory:{query}>"),
                message,
            })?;
        }
        Ok(source)
    }

    fn add_file(&mut self, file: FixtureFile) -> Result<(), String> {
        for (id, value) in file.videos {
            let mut value = value;
            if let Some(obj) = value.as_object_mut() {
                obj.entry("video_id")
                    .or_insert_with(|| serde_json::Value::String(id.clone()));
            }
            let record: VideoRecord =
                serde_json::from_value(value).map_err(|e| format!("video {id}: {e}"))?;
            if record.video_id != id {
                return Err(format!("video key {id} disagrees with video_id {}", record.video_id));
            }
            match self.videos.get(&id) {
                Some(existing) if *existing != record => {
                    return Err(format!("video {id} recorded twice with different contents"));
                }
                _ => {
                    self.videos.insert(id, record);
                }
            }
        }

        let mut token: Option<String> = None;
        for (i, page) in file.pages.into_iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = page.ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(format!("page {i} lists {dup} twice"));
            }
            if page.ids.is_empty() && page.next.is_some() {
                return Err(format!("page {i} is empty but has a next token"));
            }
            let key = (file.query.clone(), token.clone());
            if self.pages.contains_key(&key) {
                return Err(format!("duplicate page for query {:?} token {:?}", key.0, key.1));
            }
            token = page.next.clone();
            self.pages.insert(
                key,
                SearchPage {
                    video_ids: page.ids,
                    next_page_token: page.next,
                },
            );
        }
        Ok(())
    }

    fn passes_filters(&self, id: &str) -> bool {
        match self.videos.get(id) {
            // unknown ids stay in the page; details will report them missing
            None => true,
            Some(v) => v.language == self.language && v.category_id == self.category_id,
        }
    }
}

impl VideoSource for FixtureSource {
    fn search(
        &self,
        query: &SearchQuery,
        page_token: Option<&str>,
    ) -> Result<SearchPage, SourceError> {
        let key = (query.text.clone(), page_token.map(str::to_string));
        let page = self.pages.get(&key).ok_or_else(|| SourceError::UnknownFixtureKey {
            key: match page_token {
                Some(t) => format!("{} @ {t}", query.text),
                None => query.text.clone(),
            },
        })?;
        Ok(SearchPage {
            video_ids: page
                .video_ids
                .iter()
                .filter(|id| self.passes_filters(id))
                .cloned()
                .collect(),
            next_page_token: page.next_page_token.clone(),
        })
    }

    fn fetch_details(&self, video_ids: &[String]) -> Result<DetailBatch, SourceError> {
        if video_ids.is_empty() {
            return Err(SourceError::EmptyIdList);
        }
        let mut batch = DetailBatch::default();
        for id in video_ids {
            match self.videos.get(id) {
                Some(v) => batch.records.push(v.clone()),
                None => batch.missing.push(id.clone()),
            }
        }
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::querygen::QueryForm;
    use crate::types::TitleSkillPair;
    use serde_json::json;

    fn video(id: &str, views: u64, likes: u64) -> serde_json::Value {
        json!({
            "title": format!("video {id}"), "description": "",
            "published_at": "2019-01-01T00:00:00Z", "fetched_at": "2019-06-01T00:00:00Z",
            "duration_s": 300, "view_count": views, "like_count": likes,
            "dislike_count": 0, "comment_count": 0, "category_id": "27", "language": "en",
            "video_id": id,
        })
    }

    fn source() -> FixtureSource {
        let file: FixtureFile = serde_json::from_value(json!({
            "query": "Time Management",
            "pages": [
                {"ids": ["v1", "v2", "v3", "v4", "v5"], "next": "p2"},
                {"ids": ["v2", "fr"], "next": null}
            ],
            "videos": {
                "v1": video("v1", 126, 1), "v2": video("v2", 10, 0),
                "v3": video("v3", 10, 0), "v4": video("v4", 10, 0), "v5": video("v5", 10, 0),
                "fr": {"title": "x", "description": "", "published_at": "2019-01-01T00:00:00Z",
                       "fetched_at": "2019-06-01T00:00:00Z", "duration_s": 1, "view_count": 1,
                       "like_count": 0, "dislike_count": 0, "comment_count": 0,
                       "category_id": "27", "language": "fr"}
            }
        }))
        .unwrap();
        FixtureSource::from_files([file], &SourceConfig::default()).unwrap()
    }

    fn query(text_skill: &str) -> SearchQuery {
        let pair = TitleSkillPair::new("Executive Assistant", text_skill).unwrap();
        SearchQuery::new(&pair, QueryForm::SkillOnly)
    }

    #[test]
    fn replays_first_page() {
        let page = source().search(&query("Time Management"), None).unwrap();
        assert_eq!(page.video_ids, ["v1", "v2", "v3", "v4", "v5"]);
        assert_eq!(page.next_page_token.as_deref(), Some("p2"));
    }

    #[test]
    fn replay_is_deterministic() {
        let s = source();
        let a = serde_json::to_vec(&s.search(&query("Time Management"), None).unwrap()).unwrap();
        let b = serde_json::to_vec(&s.search(&query("Time Management"), None).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn filters_other_languages() {
        let page = source().search(&query("Time Management"), Some("p2")).unwrap();
        assert_eq!(page.video_ids, ["v2"]);
        assert_eq!(page.next_page_token, None);
    }

    #[test]
    fn unknown_query_is_terminal() {
        let err = source().search(&query("Juggling"), None).unwrap_err();
        assert!(matches!(&err, SourceError::UnknownFixtureKey { key } if key == "Juggling"));
        assert!(!err.is_retryable());
        let err = source().search(&query("Time Management"), Some("zz")).unwrap_err();
        assert!(err.to_string().contains("zz"));
    }

    #[test]
    fn details_partial_result() {
        let s = source();
        let batch = s.fetch_details(&["v1".to_string()]).unwrap();
        assert_eq!(batch.records.len(), 1);
        assert_eq!(batch.records[0].view_count, 126);
        assert_eq!(batch.records[0].like_count, 1);

        let batch = s.fetch_details(&["v1".into(), "missing".into()]).unwrap();
        assert_eq!(batch.records.len(), 1);
        assert_eq!(batch.missing, ["missing"]);

        assert!(matches!(s.fetch_details(&[]), Err(SourceError::EmptyIdList)));
    }

    #[test]
    fn rejects_conflicting_video_definitions() {
        let a: FixtureFile = serde_json::from_value(json!({
            "query": "a", "pages": [{"ids": ["v1"]}], "videos": {"v1": video("v1", 1, 0)}
        }))
        .unwrap();
        let b: FixtureFile = serde_json::from_value(json!({
            "query": "b", "pages": [{"ids": ["v1"]}], "videos": {"v1": video("v1", 2, 0)}
        }))
        .unwrap();
        assert!(FixtureSource::from_files([a, b], &SourceConfig::default()).is_err());
    }
}
