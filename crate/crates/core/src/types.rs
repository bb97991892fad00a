//! Domain records shared by every pipeline stage.
//!
//! All records are immutable values once validated. Deserialization goes
//! through the same validation as construction, so a record read back from
//! disk carries the same guarantees as one built in memory.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use crate::querygen::QueryForm;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("{field} must not be empty")]
    Empty { field: &'static str },
    #[error("video {video_id}: {field} must be non-negative, got {value}")]
    Negative {
        video_id: String,
        field: &'static str,
        value: i64,
    },
    #[error("video {video_id}: fetched_at {fetched_at} precedes published_at {published_at}")]
    SnapshotBeforePublish {
        video_id: String,
        published_at: DateTime<Utc>,
        fetched_at: DateTime<Utc>,
    },
    #[error("pair_id {given} does not match ({job_title}, {skill}); expected {expected}")]
    PairIdMismatch {
        given: String,
        expected: String,
        job_title: String,
        skill: String,
    },
    #[error("invalid label {0:?}, expected \"+\" or \"-\"")]
    Label(String),
}

/// Stable identifier of a title-skill pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairId(String);

impl PairId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PairId {
    fn from(s: &str) -> Self {
        PairId(s.to_string())
    }
}

impl From<String> for PairId {
    fn from(s: String) -> Self {
        PairId(s)
    }
}

/// Lowercases and collapses whitespace runs to single spaces.
pub fn normalize_term(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Derives the pair identifier: the xxh3-64 digest of the normalized
/// `title \0 skill` string, as 16 lowercase hex digits.
pub fn make_pair_id(job_title: &str, skill: &str) -> Result<PairId, ValidationError> {
    let title = normalize_term(job_title);
    if title.is_empty() {
        return Err(ValidationError::Empty { field: "job_title" });
    }
    let skill = normalize_term(skill);
    if skill.is_empty() {
        return Err(ValidationError::Empty { field: "skill" });
    }
    let key = format!("{title}\u{0}{skill}");
    Ok(PairId(format!("{:016x}", xxh3_64(key.as_bytes()))))
}

/// One normalized job title combined with one skill term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPair")]
pub struct TitleSkillPair {
    pub job_title: String,
    pub skill: String,
    pub pair_id: PairId,
}

#[derive(Deserialize)]
struct RawPair {
    job_title: String,
    skill: String,
    #[serde(default)]
    pair_id: Option<PairId>,
}

impl TryFrom<RawPair> for TitleSkillPair {
    type Error = ValidationError;

    fn try_from(raw: RawPair) -> Result<Self, Self::Error> {
        let pair = TitleSkillPair::new(&raw.job_title, &raw.skill)?;
        match raw.pair_id {
            Some(given) if given != pair.pair_id => Err(ValidationError::PairIdMismatch {
                given: given.0,
                expected: pair.pair_id.0,
                job_title: pair.job_title,
                skill: pair.skill,
            }),
            _ => Ok(pair),
        }
    }
}

impl TitleSkillPair {
    /// Keeps the trimmed original casing; the identifier is computed from
    /// the normalized form.
    pub fn new(job_title: &str, skill: &str) -> Result<Self, ValidationError> {
        let pair_id = make_pair_id(job_title, skill)?;
        Ok(TitleSkillPair {
            job_title: job_title.trim().to_string(),
            skill: skill.trim().to_string(),
            pair_id,
        })
    }
}

/// One video's metadata plus a statistics snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVideoRecord")]
pub struct VideoRecord {
    pub video_id: String,
    pub title: String,
    pub description: String,
    pub published_at: DateTime<Utc>,
    pub duration_s: u64,
    pub view_count: u64,
    pub like_count: u64,
    pub dislike_count: u64,
    pub comment_count: u64,
    pub category_id: String,
    pub language: String,
    pub fetched_at: DateTime<Utc>,
    /// Set when the backend did not report dislikes and `dislike_count`
    /// was filled with 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dislike_missing: bool,
}

#[derive(Deserialize)]
struct RawVideoRecord {
    video_id: String,
    title: String,
    #[serde(default)]
    description: String,
    published_at: DateTime<Utc>,
    duration_s: i64,
    view_count: i64,
    like_count: i64,
    dislike_count: i64,
    comment_count: i64,
    category_id: String,
    language: String,
    fetched_at: DateTime<Utc>,
    #[serde(default)]
    dislike_missing: bool,
}

impl TryFrom<RawVideoRecord> for VideoRecord {
    type Error = ValidationError;

    fn try_from(raw: RawVideoRecord) -> Result<Self, Self::Error> {
        let id = raw.video_id.clone();
        let non_negative = |field: &'static str, value: i64| {
            u64::try_from(value).map_err(|_| ValidationError::Negative {
                video_id: id.clone(),
                field,
                value,
            })
        };
        let record = VideoRecord {
            duration_s: non_negative("duration_s", raw.duration_s)?,
            view_count: non_negative("view_count", raw.view_count)?,
            like_count: non_negative("like_count", raw.like_count)?,
            dislike_count: non_negative("dislike_count", raw.dislike_count)?,
            comment_count: non_negative("comment_count", raw.comment_count)?,
            video_id: raw.video_id,
            title: raw.title,
            description: raw.description,
            published_at: raw.published_at,
            category_id: raw.category_id,
            language: raw.language,
            fetched_at: raw.fetched_at,
            dislike_missing: raw.dislike_missing,
        };
        record.validate()?;
        Ok(record)
    }
}

impl VideoRecord {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.video_id.trim().is_empty() {
            return Err(ValidationError::Empty { field: "video_id" });
        }
        if self.fetched_at < self.published_at {
            return Err(ValidationError::SnapshotBeforePublish {
                video_id: self.video_id.clone(),
                published_at: self.published_at,
                fetched_at: self.fetched_at,
            });
        }
        Ok(())
    }

    /// Whole days between publication and the statistics snapshot.
    pub fn days_elapsed(&self) -> u64 {
        let secs = (self.fetched_at - self.published_at).num_seconds().max(0);
        (secs / 86_400) as u64
    }
}

/// Binary relevance label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+")]
    Relevant,
    #[serde(rename = "-")]
    Irrelevant,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Relevant
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::Relevant
        } else {
            Label::Irrelevant
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Relevant => "+",
            Label::Irrelevant => "-",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" => Ok(Label::Relevant),
            "-" => Ok(Label::Irrelevant),
            other => Err(ValidationError::Label(other.to_string())),
        }
    }
}

/// A human judgment for one (pair, video). The same video may carry
/// different labels under different pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub pair_id: PairId,
    pub video_id: String,
    pub label: Label,
    pub curator_id: String,
    pub labeled_at: DateTime<Utc>,
}

impl LabelRecord {
    pub fn key(&self) -> (PairId, String) {
        (self.pair_id.clone(), self.video_id.clone())
    }
}

/// A video retained for a pair during harvest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub pair_id: PairId,
    pub video_id: String,
    /// 0-based order of first appearance during harvest.
    pub retrieval_rank: u32,
    pub query_forms: BTreeSet<QueryForm>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn pair_id_is_deterministic() {
        let a = make_pair_id("Executive Assistant", "Time Management").unwrap();
        let b = make_pair_id("Executive Assistant", "Time Management").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.as_str().len(), 16);
    }

    #[test]
    fn pair_id_normalizes_case_and_whitespace() {
        let a = make_pair_id("executive  assistant", "Time Management").unwrap();
        let b = make_pair_id("Executive Assistant", "Time Management").unwrap();
        assert_eq!(a, b);
        let c = make_pair_id("  Executive\tAssistant ", "time   management").unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn pair_id_rejects_empty_fields() {
        assert_eq!(
            make_pair_id("", "Time Management"),
            Err(ValidationError::Empty { field: "job_title" })
        );
        assert_eq!(
            make_pair_id("Recruiter", "   "),
            Err(ValidationError::Empty { field: "skill" })
        );
    }

    #[test]
    fn title_and_skill_are_not_interchangeable() {
        let a = make_pair_id("a b", "c").unwrap();
        let b = make_pair_id("a", "b c").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn pair_deserialization_checks_id() {
        let ok: TitleSkillPair =
            serde_json::from_str(r#"{"job_title":"Recruiter","skill":"Interview Scheduling"}"#)
                .unwrap();
        let json = serde_json::to_string(&ok).unwrap();
        let back: TitleSkillPair = serde_json::from_str(&json).unwrap();
        assert_eq!(ok, back);
        let bad = r#"{"job_title":"Recruiter","skill":"Interview Scheduling","pair_id":"0000"}"#;
        assert!(serde_json::from_str::<TitleSkillPair>(bad).is_err());
    }

    fn video_json(views: i64, published: &str, fetched: &str) -> String {
        format!(
            r#"{{"video_id":"v1","title":"t","description":"d","published_at":"{published}",
            "duration_s":60,"view_count":{views},"like_count":1,"dislike_count":0,
            "comment_count":0,"category_id":"27","language":"en","fetched_at":"{fetched}"}}"#
        )
    }

    #[test]
    fn video_ingest_rejects_negative_counts() {
        let json = video_json(-1, "2019-01-01T00:00:00Z", "2019-01-02T00:00:00Z");
        let err = serde_json::from_str::<VideoRecord>(&json).unwrap_err();
        assert!(err.to_string().contains("view_count"), "{err}");
    }

    #[test]
    fn video_ingest_rejects_snapshot_before_publish() {
        let json = video_json(5, "2019-01-02T00:00:00Z", "2019-01-01T00:00:00Z");
        let err = serde_json::from_str::<VideoRecord>(&json).unwrap_err();
        assert!(err.to_string().contains("precedes"), "{err}");
    }

    #[test]
    fn days_elapsed_floors() {
        let json = video_json(5, "2019-01-01T00:00:00Z", "2019-01-11T23:59:59Z");
        let v: VideoRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(v.days_elapsed(), 10);
        assert_eq!(v.fetched_at, Utc.with_ymd_and_hms(2019, 1, 11, 23, 59, 59).unwrap());
        assert!(!serde_json::to_string(&v).unwrap().contains("dislike_missing"));
    }

    #[test]
    fn label_wire_format() {
        assert_eq!(serde_json::to_string(&Label::Relevant).unwrap(), "\"+\"");
        assert_eq!("-".parse::<Label>().unwrap(), Label::Irrelevant);
        assert!("yes".parse::<Label>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn pair_id_equality_matches_normalized_equality(
                t1 in "[A-Za-z ]{1,12}", s1 in "[A-Za-z ]{1,12}",
                t2 in "[A-Za-z ]{1,12}", s2 in "[A-Za-z ]{1,12}",
            ) {
                let a = make_pair_id(&t1, &s1);
                let b = make_pair_id(&t2, &s2);
                if let (Ok(a), Ok(b)) = (a, b) {
                    let same = normalize_term(&t1) == normalize_term(&t2)
                        && normalize_term(&s1) == normalize_term(&s2);
                    prop_assert_eq!(a == b, same);
                }
            }
        }
    }
}
