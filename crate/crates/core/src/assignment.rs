//! Which perspective(s) a learner must contribute to.
//!
//! RANDOM is balanced: each draw picks uniformly among the perspectives that
//! currently have the fewest learners, so after any prefix of assignments the
//! per-perspective counts differ by at most one.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ActivityId, PerspectiveId, UserId};
use crate::model::{ActivityTemplate, ContributionPolicy};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub activity_id: ActivityId,
    pub learner_id: UserId,
    pub required_perspectives: Vec<PerspectiveId>,
    pub policy_used: ContributionPolicy,
    pub assigned_at: DateTime<Utc>,
    pub seed_tag: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    pub required_perspectives: Vec<PerspectiveId>,
    pub seed_tag: String,
}

/// Number of existing assignments per perspective, in template order.
pub fn perspective_counts<'a>(
    template: &ActivityTemplate,
    records: impl IntoIterator<Item = &'a AssignmentRecord>,
) -> Vec<usize> {
    let index: BTreeMap<&PerspectiveId, usize> = template
        .perspectives
        .iter()
        .enumerate()
        .map(|(i, p)| (&p.id, i))
        .collect();
    let mut counts = vec![0; template.perspectives.len()];
    for record in records {
        for p in &record.required_perspectives {
            if let Some(&i) = index.get(p) {
                counts[i] += 1;
            }
        }
    }
    counts
}

/// Decides the required perspectives for the next learner.
///
/// `counts` are the current per-perspective assignment counts in template
/// order and `ordinal` is the number of records already in the activity; the
/// RANDOM draw uses stream `ordinal` of a ChaCha8 generator seeded with
/// `seed`, so a fixed seed and learner order always reproduce the sequence.
pub fn plan(
    template: &ActivityTemplate,
    policy: ContributionPolicy,
    counts: &[usize],
    selected: Option<&PerspectiveId>,
    seed: u64,
    ordinal: u64,
) -> Result<Plan> {
    debug_assert_eq!(counts.len(), template.perspectives.len());
    match policy {
        ContributionPolicy::Select => {
            let chosen = selected.ok_or(Error::SelectionRequired)?;
            if template.perspective(chosen).is_none() {
                return Err(Error::UnknownPerspective(chosen.to_string()));
            }
            Ok(Plan {
                required_perspectives: vec![chosen.clone()],
                seed_tag: String::new(),
            })
        }
        ContributionPolicy::All => {
            if selected.is_some() {
                return Err(Error::SelectionForbidden);
            }
            Ok(Plan {
                required_perspectives: template.perspective_ids(),
                seed_tag: String::new(),
            })
        }
        ContributionPolicy::Random => {
            if selected.is_some() {
                return Err(Error::SelectionForbidden);
            }
            let min = counts.iter().copied().min().unwrap_or(0);
            let candidates: Vec<usize> = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c == min)
                .map(|(i, _)| i)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ordinal);
            let pick = candidates[rng.random_range(0..candidates.len())];
            Ok(Plan {
                required_perspectives: vec![template.perspectives[pick].id.clone()],
                seed_tag: format!("chacha8:{seed}:{ordinal}"),
            })
        }
    }
}
