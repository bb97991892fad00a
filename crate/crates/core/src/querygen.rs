//! Search query templates for a title-skill pair.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::{PairId, TitleSkillPair};

/// The three query templates, in the order they are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryForm {
    /// `skill`
    SkillOnly,
    /// `skill title`
    SkillTitle,
    /// `"skill" title`
    QuotedSkillTitle,
}

impl QueryForm {
    pub const ALL: [QueryForm; 3] = [
        QueryForm::SkillOnly,
        QueryForm::SkillTitle,
        QueryForm::QuotedSkillTitle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryForm::SkillOnly => "skill_only",
            QueryForm::SkillTitle => "skill_title",
            QueryForm::QuotedSkillTitle => "quoted_skill_title",
        }
    }
}

impl fmt::Display for QueryForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub pair_id: PairId,
    pub form: QueryForm,
    pub text: String,
}

impl SearchQuery {
    pub fn new(pair: &TitleSkillPair, form: QueryForm) -> Self {
        let text = match form {
            QueryForm::SkillOnly => pair.skill.clone(),
            QueryForm::SkillTitle => format!("{} {}", pair.skill, pair.job_title),
            QueryForm::QuotedSkillTitle => {
                // interior quotes would end the phrase early
                let bare: String = pair.skill.chars().filter(|&c| c != '"').collect();
                format!("\"{}\" {}", bare.trim(), pair.job_title)
            }
        };
        SearchQuery {
            pair_id: pair.pair_id.clone(),
            form,
            text,
        }
    }
}

/// All three queries for `pair`, in search order.
pub fn generate_queries(pair: &TitleSkillPair) -> [SearchQuery; 3] {
    QueryForm::ALL.map(|form| SearchQuery::new(pair, form))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(title: &str, skill: &str) -> Vec<String> {
        let pair = TitleSkillPair::new(title, skill).unwrap();
        generate_queries(&pair).into_iter().map(|q| q.text).collect()
    }

    #[test]
    fn executive_assistant_time_management() {
        assert_eq!(
            texts("Executive Assistant", "Time Management"),
            [
                "Time Management",
                "Time Management Executive Assistant",
                "\"Time Management\" Executive Assistant",
            ]
        );
    }

    #[test]
    fn recruiter_interview_scheduling() {
        assert_eq!(
            texts("Recruiter", "Interview Scheduling"),
            [
                "Interview Scheduling",
                "Interview Scheduling Recruiter",
                "\"Interview Scheduling\" Recruiter",
            ]
        );
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            texts("Executive Assistant", "Time Management"),
            texts("Executive Assistant", "Time Management")
        );
    }

    #[test]
    fn interior_quotes_are_stripped_only_in_quoted_form() {
        let q = texts("Analyst", "the \"R\" language");
        assert_eq!(q[0], "the \"R\" language");
        assert_eq!(q[2], "\"the R language\" Analyst");
    }

    proptest! {
        #[test]
        fn three_distinct_forms(title in "[A-Za-z][A-Za-z ]{0,15}", skill in "[A-Za-z][A-Za-z ]{0,15}") {
            let pair = TitleSkillPair::new(&title, &skill).unwrap();
            let qs = generate_queries(&pair);
            prop_assert_eq!(qs.len(), 3);
            prop_assert!(qs[0].form != qs[1].form && qs[1].form != qs[2].form && qs[0].form != qs[2].form);
            prop_assert_eq!(&qs[0].text, &pair.skill);
            prop_assert_eq!(&qs[1].text, &format!("{} {}", qs[0].text, pair.job_title));
            let quoted = format!("\"{}\"", pair.skill);
            prop_assert!(qs[2].text.contains(&quoted));
            prop_assert!(qs.iter().all(|q| !q.text.is_empty()));
        }
    }
}
