//! Embedded store: in-memory tables behind one reader/writer lock, persisted
//! as an atomically replaced JSON snapshot after every committed write.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use parking_lot::{RwLock, RwLockReadGuard};
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentRecord;
use crate::curation::CurationEntry;
use crate::error::{Error, Result};
use crate::ids::{ActivityId, ContributionId, CourseRunId, CurationId, FeedbackId, LineageKey, ModelId, PerspectiveId, TemplateId, UserId};
use crate::kb::InvertedIndex;
use crate::lti::{ConsumerCredential, NonceStore};
use crate::model::{builtin_templates, Activity, ActivityTemplate, CourseContext};
use crate::moderation::{Highlight, ParticipationScore};
use crate::passback::{OutcomeBinding, PassbackJob};
use crate::submissions::Contribution;
use crate::topics::{FeedbackMessage, TopicModel};

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: UserId,
    pub display_name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLink {
    pub consumer_key: String,
    pub context_id: String,
    pub resource_link_id: String,
    pub activity_id: ActivityId,
}

impl ResourceLink {
    pub fn key(consumer_key: &str, context_id: &str, resource_link_id: &str) -> String {
        format!("{consumer_key}\u{0}{context_id}\u{0}{resource_link_id}")
    }
}

#[derive(Clone, Debug, Default)]
pub struct Database {
    pub templates: BTreeMap<TemplateId, ActivityTemplate>,
    pub courses: BTreeMap<CourseRunId, CourseContext>,
    pub users: BTreeMap<UserId, UserProfile>,
    pub activities: BTreeMap<ActivityId, Activity>,
    pub resource_links: BTreeMap<String, ResourceLink>,
    pub assignments: BTreeMap<(ActivityId, UserId), AssignmentRecord>,
    pub contributions: BTreeMap<ContributionId, Contribution>,
    pub contribution_keys: BTreeMap<(ActivityId, UserId, PerspectiveId), ContributionId>,
    pub curation: BTreeMap<CurationId, CurationEntry>,
    pub highlights: BTreeMap<ContributionId, Highlight>,
    pub reviewed: BTreeSet<ContributionId>,
    pub scores: BTreeMap<(ActivityId, UserId), ParticipationScore>,
    pub outcome_bindings: BTreeMap<(ActivityId, UserId), OutcomeBinding>,
    pub passbacks: BTreeMap<u64, PassbackJob>,
    pub models: BTreeMap<ModelId, TopicModel>,
    pub published_models: BTreeMap<LineageKey, ModelId>,
    pub feedback: BTreeMap<FeedbackId, FeedbackMessage>,
    pub consumers: BTreeMap<String, ConsumerCredential>,
    pub nonces: NonceStore,
    pub index: InvertedIndex,
}

impl Database {
    pub fn new() -> Self {
        let mut db = Self::default();
        for t in builtin_templates() {
            db.templates.insert(t.id.clone(), t);
        }
        db
    }

    pub fn template(&self, id: &TemplateId) -> Result<&ActivityTemplate> {
        self.templates.get(id).ok_or_else(|| Error::UnknownTemplate(id.to_string()))
    }

    pub fn activity(&self, id: &ActivityId) -> Result<&Activity> {
        self.activities.get(id).ok_or_else(|| Error::UnknownActivity(id.to_string()))
    }

    pub fn activity_template(&self, id: &ActivityId) -> Result<(&Activity, &ActivityTemplate)> {
        let activity = self.activity(id)?;
        Ok((activity, self.template(&activity.template_id)?))
    }

    pub fn contribution(&self, id: &ContributionId) -> Result<&Contribution> {
        self.contributions
            .get(id)
            .ok_or_else(|| Error::UnknownContribution(id.to_string()))
    }

    pub fn assignment(&self, activity: &ActivityId, learner: &UserId) -> Option<&AssignmentRecord> {
        self.assignments.get(&(activity.clone(), learner.clone()))
    }

    pub fn display_name(&self, user: &UserId) -> String {
        self.users
            .get(user)
            .map(|u| u.display_name.clone())
            .unwrap_or_else(|| user.to_string())
    }

    pub fn lineage_exists(&self, lineage: &LineageKey) -> bool {
        self.activities.values().any(|a| &a.lineage_key == lineage)
    }

    pub fn lineage_of(&self, contribution: &Contribution) -> Option<&LineageKey> {
        self.activities.get(&contribution.activity_id).map(|a| &a.lineage_key)
    }

    /// Every contribution belonging to an activity of `lineage`.
    pub fn lineage_contributions<'a>(&'a self, lineage: &LineageKey) -> impl Iterator<Item = &'a Contribution> + use<'a> {
        let activities: BTreeSet<&ActivityId> = self
            .activities
            .values()
            .filter(|a| &a.lineage_key == lineage)
            .map(|a| &a.id)
            .collect();
        self.contributions
            .values()
            .filter(move |c| activities.contains(&c.activity_id))
    }

    pub fn learner_contributions<'a>(&'a self, activity: &'a ActivityId, learner: &'a UserId) -> impl Iterator<Item = &'a Contribution> + 'a {
        self.contribution_keys
            .range((activity.clone(), learner.clone(), PerspectiveId::new(""))..)
            .take_while(move |((a, l, _), _)| a == activity && l == learner)
            .map(move |(_, id)| &self.contributions[id])
    }

    pub fn curation_entries<'a>(&'a self, activity: &'a ActivityId, curator: &'a UserId) -> impl Iterator<Item = &'a CurationEntry> + 'a {
        self.curation
            .values()
            .filter(move |e| &e.activity_id == activity && &e.curator_id == curator)
    }

    pub fn latest_model(&self, lineage: &LineageKey) -> Option<&TopicModel> {
        self.published_models.get(lineage).and_then(|id| self.models.get(id))
    }

    pub fn next_passback_id(&self) -> u64 {
        self.passbacks.keys().next_back().map_or(1, |id| id + 1)
    }
}

/// On-disk form: one array per table.
#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    templates: Vec<ActivityTemplate>,
    courses: Vec<CourseContext>,
    users: Vec<UserProfile>,
    activities: Vec<Activity>,
    resource_links: Vec<ResourceLink>,
    assignments: Vec<AssignmentRecord>,
    contributions: Vec<Contribution>,
    curation: Vec<CurationEntry>,
    highlights: Vec<Highlight>,
    reviewed: Vec<ContributionId>,
    scores: Vec<ParticipationScore>,
    outcome_bindings: Vec<OutcomeBinding>,
    passbacks: Vec<PassbackJob>,
    models: Vec<TopicModel>,
    published_models: Vec<(LineageKey, ModelId)>,
    feedback: Vec<FeedbackMessage>,
    consumers: Vec<ConsumerCredential>,
    nonces: NonceStore,
    postings: InvertedIndex,
}

impl From<&Database> for Snapshot {
    fn from(db: &Database) -> Self {
        Snapshot {
            version: SNAPSHOT_VERSION,
            templates: db.templates.values().filter(|t| !t.builtin).cloned().collect(),
            courses: db.courses.values().cloned().collect(),
            users: db.users.values().cloned().collect(),
            activities: db.activities.values().cloned().collect(),
            resource_links: db.resource_links.values().cloned().collect(),
            assignments: db.assignments.values().cloned().collect(),
            contributions: db.contributions.values().cloned().collect(),
            curation: db.curation.values().cloned().collect(),
            highlights: db.highlights.values().cloned().collect(),
            reviewed: db.reviewed.iter().cloned().collect(),
            scores: db.scores.values().cloned().collect(),
            outcome_bindings: db.outcome_bindings.values().cloned().collect(),
            passbacks: db.passbacks.values().cloned().collect(),
            models: db.models.values().cloned().collect(),
            published_models: db.published_models.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            feedback: db.feedback.values().cloned().collect(),
            consumers: db.consumers.values().cloned().collect(),
            nonces: db.nonces.clone(),
            postings: db.index.clone(),
        }
    }
}

impl From<Snapshot> for Database {
    fn from(s: Snapshot) -> Self {
        let mut db = Database::new();
        db.templates.extend(s.templates.into_iter().map(|t| (t.id.clone(), t)));
        db.courses = s.courses.into_iter().map(|c| (c.course_run_id.clone(), c)).collect();
        db.users = s.users.into_iter().map(|u| (u.id.clone(), u)).collect();
        db.activities = s.activities.into_iter().map(|a| (a.id.clone(), a)).collect();
        db.resource_links = s
            .resource_links
            .into_iter()
            .map(|r| (ResourceLink::key(&r.consumer_key, &r.context_id, &r.resource_link_id), r))
            .collect();
        db.assignments = s
            .assignments
            .into_iter()
            .map(|a| ((a.activity_id.clone(), a.learner_id.clone()), a))
            .collect();
        for c in s.contributions {
            db.contribution_keys.insert(
                (c.activity_id.clone(), c.learner_id.clone(), c.perspective_id.clone()),
                c.id.clone(),
            );
            db.contributions.insert(c.id.clone(), c);
        }
        db.curation = s.curation.into_iter().map(|e| (e.id.clone(), e)).collect();
        db.highlights = s.highlights.into_iter().map(|h| (h.contribution_id.clone(), h)).collect();
        db.reviewed = s.reviewed.into_iter().collect();
        db.scores = s
            .scores
            .into_iter()
            .map(|p| ((p.activity_id.clone(), p.learner_id.clone()), p))
            .collect();
        db.outcome_bindings = s
            .outcome_bindings
            .into_iter()
            .map(|b| ((b.activity_id.clone(), b.learner_id.clone()), b))
            .collect();
        db.passbacks = s.passbacks.into_iter().map(|j| (j.id, j)).collect();
        db.models = s.models.into_iter().map(|m| (m.model_id.clone(), m)).collect();
        db.published_models = s.published_models.into_iter().collect();
        db.feedback = s.feedback.into_iter().map(|f| (f.id.clone(), f)).collect();
        db.consumers = s.consumers.into_iter().map(|c| (c.consumer_key.clone(), c)).collect();
        db.nonces = s.nonces;
        db.index = s.postings;
        db
    }
}

pub struct Store {
    db: RwLock<Database>,
    path: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            db: RwLock::new(Database::new()),
            path: None,
        }
    }

    /// Opens (or creates) a file-backed store.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let db = match std::fs::read(&path) {
            Ok(bytes) => {
                let snapshot: Snapshot = serde_json::from_slice(&bytes)
                    .map_err(|e| Error::Storage(format!("corrupt database {}: {e}", path.display())))?;
                if snapshot.version != SNAPSHOT_VERSION {
                    return Err(Error::Storage(format!(
                        "unsupported database version {}",
                        snapshot.version
                    )));
                }
                Database::from(snapshot)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Database::new(),
            Err(e) => {
                return Err(Error::UnreadableFile {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })
            }
        };
        Ok(Self {
            db: RwLock::new(db),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Database> {
        self.db.read()
    }

    /// Runs `f` under the write lock and persists when it succeeds.
    ///
    /// Writers validate before mutating, so an `Err` leaves the tables
    /// untouched.
    pub fn write<T>(&self, f: impl FnOnce(&mut Database) -> Result<T>) -> Result<T> {
        let mut db = self.db.write();
        let out = f(&mut db)?;
        if let Some(path) = &self.path {
            persist(path, &db)?;
        }
        Ok(out)
    }
}

fn persist(path: &Path, db: &Database) -> Result<()> {
    let storage = |e: &dyn std::fmt::Display| Error::Storage(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| storage(&e))?;
    serde_json::to_writer(&mut tmp, &Snapshot::from(db)).map_err(|e| storage(&e))?;
    tmp.flush().map_err(|e| storage(&e))?;
    tmp.as_file().sync_data().map_err(|e| storage(&e))?;
    tmp.persist(path).map_err(|e| storage(&e.error))?;
    Ok(())
}
