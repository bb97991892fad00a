//! Discovery and relevance classification of training videos for job
//! title / skill pairs.
//!
//! The pipeline runs: [`querygen`] builds three search queries per pair,
//! [`harvest`] collects up to nine candidate videos from a [`source`],
//! [`featurize`] turns each (pair, video) into statistics and embedding
//! similarity features, [`forest`] trains a random forest on curated
//! labels, and [`eval`] scores it. [`store`] persists every artifact.

pub mod embed;
pub mod eval;
pub mod featurize;
pub mod forest;
pub mod harvest;
pub mod http;
pub mod querygen;
pub mod source;
pub mod store;
pub mod types;

pub use types::{
    make_pair_id, normalize_term, Candidate, Label, LabelRecord, PairId, TitleSkillPair, ValidationError,
    VideoRecord,
};
