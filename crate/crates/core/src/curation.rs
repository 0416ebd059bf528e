//! The optional curation stage: learners collate peers' shared contributions
//! into the perspectives they did not author themselves.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentRecord;
use crate::error::{Error, Result};
use crate::ids::{ActivityId, ContributionId, CurationId, PerspectiveId, UserId};
use crate::model::{Activity, ActivityTemplate};
use crate::submissions::{visible_to, Contribution, Viewer};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationEntry {
    pub id: CurationId,
    pub activity_id: ActivityId,
    pub curator_id: UserId,
    pub source_contribution_id: ContributionId,
    pub target_perspective_id: PerspectiveId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub curated_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationTask {
    pub activity_id: ActivityId,
    pub learner_id: UserId,
    pub perspectives_to_curate: Vec<PerspectiveId>,
    pub required_per_perspective: u32,
    pub progress: BTreeMap<PerspectiveId, u32>,
}

impl CurationTask {
    pub fn is_complete(&self) -> bool {
        self.perspectives_to_curate.iter().all(|p| {
            self.progress.get(p).copied().unwrap_or(0) >= self.required_per_perspective
        })
    }
}

/// Template perspectives minus the ones the learner must author.
pub fn perspectives_to_curate(
    template: &ActivityTemplate,
    assignment: &AssignmentRecord,
) -> Vec<PerspectiveId> {
    template
        .perspectives
        .iter()
        .map(|p| &p.id)
        .filter(|id| !assignment.required_perspectives.contains(id))
        .cloned()
        .collect()
}

/// Derives the task from the assignment and the curator's entries in the
/// activity. Entries stay counted even if their source was later retracted.
pub fn task<'a>(
    activity: &Activity,
    template: &ActivityTemplate,
    assignment: &AssignmentRecord,
    entries: impl IntoIterator<Item = &'a CurationEntry>,
) -> Result<CurationTask> {
    if !activity.config.curation_enabled {
        return Err(Error::CurationDisabled);
    }
    let targets = perspectives_to_curate(template, assignment);
    let mut progress: BTreeMap<PerspectiveId, u32> =
        targets.iter().map(|p| (p.clone(), 0)).collect();
    for entry in entries {
        if entry.curator_id == assignment.learner_id && entry.activity_id == activity.id {
            if let Some(count) = progress.get_mut(&entry.target_perspective_id) {
                *count += 1;
            }
        }
    }
    Ok(CurationTask {
        activity_id: activity.id.clone(),
        learner_id: assignment.learner_id.clone(),
        perspectives_to_curate: targets,
        required_per_perspective: activity.config.min_curated_per_perspective,
        progress,
    })
}

/// True when curation is disabled, there is nothing to curate, or every
/// target perspective has reached the configured minimum.
pub fn is_complete<'a>(
    activity: &Activity,
    template: &ActivityTemplate,
    assignment: &AssignmentRecord,
    entries: impl IntoIterator<Item = &'a CurationEntry>,
) -> bool {
    match task(activity, template, assignment, entries) {
        Ok(task) => task.is_complete(),
        Err(_) => true,
    }
}

/// Validates a curation request. `already_curated` reports whether the
/// curator already has an entry for this source.
pub fn check_curate(
    activity: &Activity,
    template: &ActivityTemplate,
    assignment: &AssignmentRecord,
    source: &Contribution,
    already_curated: bool,
) -> Result<PerspectiveId> {
    if !activity.config.curation_enabled {
        return Err(Error::CurationDisabled);
    }
    if source.learner_id == assignment.learner_id {
        return Err(Error::SelfCuration);
    }
    if !visible_to(source, &Viewer::learner(assignment.learner_id.clone())) {
        return Err(Error::SourceNotVisible);
    }
    if !perspectives_to_curate(template, assignment).contains(&source.perspective_id) {
        return Err(Error::WrongPerspective);
    }
    if already_curated {
        return Err(Error::DuplicateCuration);
    }
    Ok(source.perspective_id.clone())
}
