//! Moderator highlights and participation scoring.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{ActivityId, ContributionId, UserId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Highlight {
    pub contribution_id: ContributionId,
    pub moderator_id: UserId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScoreComponent {
    Submission,
    Curation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipationScore {
    pub learner_id: UserId,
    pub activity_id: ActivityId,
    pub score: f64,
    pub components: BTreeMap<ScoreComponent, u8>,
    pub computed_at: DateTime<Utc>,
}

/// Binary components and their mean.
///
/// `curation` is `None` when the curation component does not apply (stage
/// disabled, or nothing to curate under the ALL policy).
pub fn score_components(submitted_all: bool, curation: Option<bool>) -> (f64, BTreeMap<ScoreComponent, u8>) {
    let mut components = BTreeMap::new();
    components.insert(ScoreComponent::Submission, u8::from(submitted_all));
    if let Some(done) = curation {
        components.insert(ScoreComponent::Curation, u8::from(done));
    }
    let sum: u32 = components.values().map(|&v| u32::from(v)).sum();
    (f64::from(sum) / components.len() as f64, components)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_means() {
        assert_eq!(score_components(true, None).0, 1.0);
        assert_eq!(score_components(false, None).0, 0.0);
        assert_eq!(score_components(true, Some(false)).0, 0.5);
        assert_eq!(score_components(false, Some(true)).0, 0.5);
        assert_eq!(score_components(true, Some(true)).0, 1.0);
        let (_, c) = score_components(true, None);
        assert!(!c.contains_key(&ScoreComponent::Curation));
    }
}
