//! Feature rows for (pair, video).
//!
//! `set1` holds twelve statistics; `set2` appends five 512-d text
//! embeddings (video title, video description, search query, job title,
//! skill) and the ten pairwise cosines between them.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{cosine, EmbedError, Embedder, EmbeddingVector, EMBED_DIM};
use crate::querygen::{QueryForm, SearchQuery};
use crate::types::{Label, PairId, TitleSkillPair, VideoRecord};

/// Recorded in dataset manifests; bump whenever feature order or a
/// transform changes.
pub const FEATURE_SCHEMA_VERSION: &str = "features/v1: log1p counts, 6 directed ratios (+1 smoothing), duration, days";

pub const STAT_DIM: usize = 12;
pub const N_TEXT_VECTORS: usize = 5;
pub const N_COSINES: usize = 10;
pub const SEMANTIC_DIM: usize = N_TEXT_VECTORS * EMBED_DIM + N_COSINES;

const STAT_NAMES: [&str; STAT_DIM] = [
    "log1p_view_count",
    "log1p_like_count",
    "log1p_dislike_count",
    "log1p_comment_count",
    "like_per_view",
    "dislike_per_view",
    "comment_per_view",
    "dislike_per_like",
    "comment_per_like",
    "comment_per_dislike",
    "duration_s",
    "days_elapsed",
];

const TEXT_NAMES: [&str; N_TEXT_VECTORS] = ["title", "desc", "query", "jobtitle", "skill"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaId {
    Set1,
    Set2,
}

impl SchemaId {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::Set1 => "set1",
            SchemaId::Set2 => "set2",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            SchemaId::Set1 => STAT_DIM,
            SchemaId::Set2 => STAT_DIM + SEMANTIC_DIM,
        }
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemaId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "set1" => Ok(SchemaId::Set1),
            "set2" => Ok(SchemaId::Set2),
            other => Err(format!("unknown feature schema {other:?} (expected set1 or set2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    pub schema_id: SchemaId,
    pub names: Vec<String>,
    pub dim: usize,
}

impl FeatureSchema {
    pub fn new(schema_id: SchemaId) -> Self {
        let mut names: Vec<String> = STAT_NAMES.iter().map(|s| s.to_string()).collect();
        if schema_id == SchemaId::Set2 {
            for t in TEXT_NAMES {
                names.extend((0..EMBED_DIM).map(|i| format!("{t}_vec_{i:03}")));
            }
            for (a, b) in cosine_pairs() {
                names.push(format!("cos_{}_{}", TEXT_NAMES[a], TEXT_NAMES[b]));
            }
        }
        let dim = names.len();
        FeatureSchema {
            schema_id,
            names,
            dim,
        }
    }
}

/// Index pairs (i < j) over the five text vectors in lexicographic order.
fn cosine_pairs() -> impl Iterator<Item = (usize, usize)> {
    (0..N_TEXT_VECTORS).flat_map(|i| (i + 1..N_TEXT_VECTORS).map(move |j| (i, j)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureRow")]
pub struct FeatureRow {
    pub pair_id: PairId,
    pub video_id: String,
    #[serde(rename = "schema")]
    pub schema_id: SchemaId,
    pub values: Vec<f64>,
    pub label: Option<Label>,
}

#[derive(Deserialize)]
struct RawFeatureRow {
    pair_id: PairId,
    video_id: String,
    schema: SchemaId,
    values: Vec<f64>,
    #[serde(default)]
    label: Option<Label>,
}

impl TryFrom<RawFeatureRow> for FeatureRow {
    type Error = FeaturizeError;

    fn try_from(raw: RawFeatureRow) -> Result<Self, Self::Error> {
        let row = FeatureRow {
            pair_id: raw.pair_id,
            video_id: raw.video_id,
            schema_id: raw.schema,
            values: raw.values,
            label: raw.label,
        };
        row.validate()?;
        Ok(row)
    }
}

impl FeatureRow {
    pub fn validate(&self) -> Result<(), FeaturizeError> {
        if self.values.len() != self.schema_id.dim() {
            return Err(FeaturizeError::Length {
                schema: self.schema_id,
                expected: self.schema_id.dim(),
                got: self.values.len(),
            });
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(FeaturizeError::NonFinite { index: i });
        }
        Ok(())
    }

    pub fn key(&self) -> (PairId, String) {
        (self.pair_id.clone(), self.video_id.clone())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum FeaturizeError {
    #[error("feature set 2 needs an embedder")]
    MissingEmbedder,
    #[error("embedding failed for pair {pair_id}, video {video_id}: {source}")]
    Embed {
        pair_id: PairId,
        video_id: String,
        #[source]
        source: EmbedError,
    },
    #[error("{schema} rows have {expected} values, got {got}")]
    Length {
        schema: SchemaId,
        expected: usize,
        got: usize,
    },
    #[error("non-finite feature value at index {index}")]
    NonFinite { index: usize },
}

fn ratio(num: u64, den: u64) -> f64 {
    num as f64 / (den as f64 + 1.0)
}

/// Twelve statistics: four log1p counts, six directed count ratios with a
/// +1 smoothed denominator, duration in seconds, and whole days elapsed.
pub fn stat_features(video: &VideoRecord) -> [f64; STAT_DIM] {
    let (v, l, d, c) = (
        video.view_count,
        video.like_count,
        video.dislike_count,
        video.comment_count,
    );
    [
        (v as f64).ln_1p(),
        (l as f64).ln_1p(),
        (d as f64).ln_1p(),
        (c as f64).ln_1p(),
        ratio(l, v),
        ratio(d, v),
        ratio(c, v),
        ratio(d, l),
        ratio(c, l),
        ratio(c, d),
        video.duration_s as f64,
        video.days_elapsed() as f64,
    ]
}

/// Five embeddings followed by their ten pairwise cosines.
pub fn semantic_features(
    video: &VideoRecord,
    pair: &TitleSkillPair,
    query_text: &str,
    embedder: &dyn Embedder,
) -> Result<Vec<f64>, FeaturizeError> {
    let texts = [
        video.title.as_str(),
        video.description.as_str(),
        query_text,
        pair.job_title.as_str(),
        pair.skill.as_str(),
    ];
    let wrap = |source: EmbedError| FeaturizeError::Embed {
        pair_id: pair.pair_id.clone(),
        video_id: video.video_id.clone(),
        source,
    };
    let vectors: Vec<EmbeddingVector> = embedder.embed_batch(&texts).map_err(wrap)?;
    if vectors.len() != N_TEXT_VECTORS {
        return Err(wrap(EmbedError::Shape(format!(
            "expected {N_TEXT_VECTORS} vectors, got {}",
            vectors.len()
        ))));
    }
    let mut out = Vec::with_capacity(SEMANTIC_DIM);
    for v in &vectors {
        if v.values.len() != EMBED_DIM {
            return Err(wrap(EmbedError::DimensionMismatch {
                left: EMBED_DIM,
                right: v.values.len(),
            }));
        }
        out.extend_from_slice(&v.values);
    }
    for (i, j) in cosine_pairs() {
        out.push(cosine(&vectors[i], &vectors[j]).map_err(wrap)?);
    }
    Ok(out)
}

/// The query used for the semantic block: the unquoted skill + title form.
pub fn embedding_query(pair: &TitleSkillPair) -> String {
    SearchQuery::new(pair, QueryForm::SkillTitle).text
}

pub fn build_row(
    pair: &TitleSkillPair,
    video: &VideoRecord,
    schema_id: SchemaId,
    embedder: Option<&dyn Embedder>,
    label: Option<Label>,
) -> Result<FeatureRow, FeaturizeError> {
    let mut values = stat_features(video).to_vec();
    if schema_id == SchemaId::Set2 {
        let embedder = embedder.ok_or(FeaturizeError::MissingEmbedder)?;
        values.extend(semantic_features(video, pair, &embedding_query(pair), embedder)?);
    }
    let row = FeatureRow {
        pair_id: pair.pair_id.clone(),
        video_id: video.video_id.clone(),
        schema_id,
        values,
        label,
    };
    row.validate()?;
    Ok(row)
}

/// Builds one row per `(pair, video)` job in parallel, returning rows in
/// input order.
pub fn build_rows(
    jobs: &[(&TitleSkillPair, &VideoRecord)],
    schema_id: SchemaId,
    embedder: Option<&dyn Embedder>,
) -> Result<Vec<FeatureRow>, FeaturizeError> {
    if schema_id == SchemaId::Set2 && embedder.is_none() {
        return Err(FeaturizeError::MissingEmbedder);
    }
    jobs.par_iter()
        .map(|(pair, video)| build_row(pair, video, schema_id, embedder, None))
        .collect()
}
