//! The tool's operations over the store, with sessions, identity and the
//! grade passback queue wired together. The HTTP layer is a thin adapter
//! over this type.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::assignment::{self, AssignmentRecord};
use crate::blob::{BlobStore, FsBlobStore};
use crate::clock::{Clock, SystemClock};
use crate::config::ServiceConfig;
use crate::curation::{self, CurationEntry, CurationTask};
use crate::error::{Error, Result};
use crate::ids::{
    ActivityId, ContributionId, CourseRunId, CurationId, FeedbackId, LineageKey, ModelId, PerspectiveId, SessionId,
    TemplateId, UserId,
};
use crate::kb::{self, build_postings, KbEntry, KbPage, KbQuery, KbView, Related, Tokenizer};
use crate::lti::{self, ConsumerCredential, LaunchRequest, LtiSession, SecretVault, VerifiedLaunch};
use crate::model::{
    Activity, ActivityConfig, ActivityTemplate, ContributionPolicy, CourseContext, CourseMode, PerspectiveSpec,
};
use crate::moderation::{score_components, Highlight, ParticipationScore};
use crate::passback::{DispatchReport, OutcomeBinding, OutcomeTransport, PassbackJob, PassbackStatus, RETRY_DELAYS};
use crate::store::{Database, ResourceLink, Store, UserProfile};
use crate::submissions::{normalize_tags, validate_items, Contribution, ContributionItem, PseudonymKey, Role, Sharing, Viewer};
use crate::topics::{self, Corpus, FeedbackMessage, LdaDefaults, TopicModel, TopicSummary};

pub const RETRACTED_PLACEHOLDER: &str = "retracted by author";
const EXCERPT_CHARS: usize = 160;

pub struct ServiceOptions {
    pub database_path: Option<PathBuf>,
    pub server_secret: Vec<u8>,
    /// Absolute URL launches are signed against.
    pub launch_url: String,
    pub session_idle: Duration,
    pub session_request_cap_per_minute: u32,
    pub tokenizer: Tokenizer,
    pub lda: LdaDefaults,
    pub blob_root: Option<PathBuf>,
    /// Create an activity on first launch of an unmapped resource link when
    /// the launch carries `custom_px_template`.
    pub auto_provision: bool,
}

impl ServiceOptions {
    pub fn in_memory(server_secret: &[u8], launch_url: &str) -> Self {
        Self {
            database_path: None,
            server_secret: server_secret.to_vec(),
            launch_url: launch_url.to_owned(),
            session_idle: Duration::hours(8),
            session_request_cap_per_minute: 600,
            tokenizer: Tokenizer::default(),
            lda: LdaDefaults::default(),
            blob_root: None,
            auto_provision: false,
        }
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self> {
        let tokenizer = match &config.stopword_file {
            Some(path) => Tokenizer::from_stopword_file(path)?,
            None => Tokenizer::default(),
        };
        Ok(Self {
            database_path: Some(config.database_path.clone()),
            server_secret: config.server_secret.as_bytes().to_vec(),
            launch_url: config.launch_url(),
            session_idle: Duration::seconds(config.session_idle_timeout_secs as i64),
            session_request_cap_per_minute: config.session_request_cap_per_minute,
            tokenizer,
            lda: config.lda,
            blob_root: Some(config.blob_store_root.clone()),
            auto_provision: config.auto_provision,
        })
    }
}

struct SessionSlot {
    session: LtiSession,
    last_seen: DateTime<Utc>,
    window_start: DateTime<Utc>,
    window_count: u32,
}

/// One entry of a learner's curated collection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuratedItem {
    pub entry: CurationEntry,
    /// `None` once the author made the source private.
    pub source: Option<KbEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placeholder: Option<String>,
}

/// Staff audit row: a highlight and whether its contribution is still shared.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightAudit {
    pub highlight: Highlight,
    pub perspective_id: PerspectiveId,
    pub sharing: Sharing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicOverview {
    pub model_id: ModelId,
    pub topics: usize,
    pub trained_at: DateTime<Utc>,
    pub summaries: Vec<TopicSummary>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainRequest {
    #[serde(default)]
    pub topics: Option<usize>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerSummary {
    pub consumer_key: String,
    pub label: String,
}

pub struct Service {
    store: Store,
    clock: Arc<dyn Clock>,
    pseudonyms: PseudonymKey,
    vault: SecretVault,
    tokenizer: Tokenizer,
    lda: LdaDefaults,
    launch_url: String,
    session_idle: Duration,
    request_cap: u32,
    auto_provision: bool,
    blobs: Option<Box<dyn BlobStore>>,
    sessions: Mutex<HashMap<SessionId, SessionSlot>>,
    training: Mutex<HashSet<LineageKey>>,
}

impl Service {
    pub fn open(options: ServiceOptions) -> Result<Self> {
        Self::with_clock(options, Arc::new(SystemClock))
    }

    pub fn with_clock(options: ServiceOptions, clock: Arc<dyn Clock>) -> Result<Self> {
        let store = match &options.database_path {
            Some(path) => Store::open(path)?,
            None => Store::in_memory(),
        };
        Ok(Self {
            store,
            clock,
            pseudonyms: PseudonymKey::new(&options.server_secret),
            vault: SecretVault::new(&options.server_secret),
            tokenizer: options.tokenizer,
            lda: options.lda,
            launch_url: options.launch_url,
            session_idle: options.session_idle,
            request_cap: options.session_request_cap_per_minute,
            auto_provision: options.auto_provision,
            blobs: options
                .blob_root
                .map(|root| Box::new(FsBlobStore::new(root)) as Box<dyn BlobStore>),
            sessions: Mutex::new(HashMap::new()),
            training: Mutex::new(HashSet::new()),
        })
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn launch_url(&self) -> &str {
        &self.launch_url
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn lda_defaults(&self) -> &LdaDefaults {
        &self.lda
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Read access to the tables, for reporting and tests.
    pub fn with_db<T>(&self, f: impl FnOnce(&Database) -> T) -> T {
        f(&self.store.read())
    }

    // ---- consumers -------------------------------------------------------

    pub fn add_consumer(&self, consumer_key: &str, secret: &str, label: &str) -> Result<ConsumerSummary> {
        let key = consumer_key.trim();
        if key.is_empty() || secret.is_empty() {
            return Err(Error::InvalidInput("consumer key and secret must be non-empty".into()));
        }
        let credential = ConsumerCredential::new(key, label, secret, &self.vault)?;
        self.store.write(|db| {
            if db.consumers.contains_key(key) {
                return Err(Error::DuplicateConsumer(key.to_owned()));
            }
            db.consumers.insert(key.to_owned(), credential);
            Ok(())
        })?;
        tracing::info!(consumer = key, "consumer registered");
        Ok(ConsumerSummary {
            consumer_key: key.to_owned(),
            label: label.to_owned(),
        })
    }

    /// Removes a consumer; returns whether it existed.
    pub fn revoke_consumer(&self, consumer_key: &str) -> Result<bool> {
        let removed = self.store.write(|db| Ok(db.consumers.remove(consumer_key).is_some()))?;
        if removed {
            tracing::info!(consumer = consumer_key, "consumer revoked");
        }
        Ok(removed)
    }

    pub fn consumers(&self) -> Vec<ConsumerSummary> {
        self.store
            .read()
            .consumers
            .values()
            .map(|c| ConsumerSummary {
                consumer_key: c.consumer_key.clone(),
                label: c.label.clone(),
            })
            .collect()
    }

    // ---- launch and sessions --------------------------------------------

    /// Verifies a launch, records the user, course and outcome binding, and
    /// opens a session.
    pub fn launch(&self, request: &LaunchRequest) -> Result<LtiSession> {
        let now = self.clock.now();
        let result = self.store.write(|db| {
            let vault = &self.vault;
            let consumers = &db.consumers;
            let verified = lti::verify_launch(
                request,
                |key| consumers.get(key).and_then(|c| c.secret(vault).ok()),
                &mut db.nonces,
                now.timestamp(),
            )?;
            Ok(self.admit(db, &verified, now))
        });
        match result {
            Ok(session) => {
                tracing::info!(
                    consumer = %session.consumer_key,
                    user = %session.user_id,
                    role = ?session.role,
                    activity = ?session.activity_id.as_ref().map(|a| a.as_str()),
                    "launch accepted"
                );
                let slot = SessionSlot {
                    session: session.clone(),
                    last_seen: now,
                    window_start: now,
                    window_count: 0,
                };
                self.sessions.lock().insert(session.session_id.clone(), slot);
                Ok(session)
            }
            Err(e) => {
                tracing::warn!(
                    code = e.code(),
                    consumer = request.param("oauth_consumer_key").unwrap_or(""),
                    "launch rejected"
                );
                Err(e)
            }
        }
    }

    /// Post-verification bookkeeping. Infallible so that a verified launch
    /// always commits together with its nonce.
    fn admit(&self, db: &mut Database, launch: &VerifiedLaunch, now: DateTime<Utc>) -> LtiSession {
        let user_id = launch.internal_user_id();
        let display_name = launch.display_name();
        db.users.insert(
            user_id.clone(),
            UserProfile {
                id: user_id.clone(),
                display_name: display_name.clone(),
            },
        );

        let course_run_id = course_run_id(&launch.consumer_key, &launch.context_id);
        let existing_mode = db.courses.get(&course_run_id).map(|c| c.mode);
        let mode = match launch.param("custom_px_mode") {
            Some(m) if m.eq_ignore_ascii_case("self_paced") || m.eq_ignore_ascii_case("self-paced") => CourseMode::SelfPaced,
            Some(m) if m.eq_ignore_ascii_case("paced") => CourseMode::Paced,
            _ => existing_mode.unwrap_or(CourseMode::Paced),
        };
        let course = CourseContext {
            course_run_id: course_run_id.clone(),
            lti_context_id: launch.context_id.clone(),
            title: launch
                .param("context_title")
                .filter(|t| !t.trim().is_empty())
                .unwrap_or(&launch.context_id)
                .to_owned(),
            mode,
        };
        db.courses.insert(course_run_id.clone(), course.clone());

        let link_key = ResourceLink::key(&launch.consumer_key, &launch.context_id, &launch.resource_link_id);
        let mut activity_id = db.resource_links.get(&link_key).map(|r| r.activity_id.clone());
        if activity_id.is_none() && self.auto_provision {
            match self.provision_from_launch(db, launch, &course_run_id, now) {
                Ok(Some(id)) => activity_id = Some(id),
                Ok(None) => {}
                Err(e) => tracing::warn!(code = e.code(), "auto-provisioning skipped"),
            }
        }

        if let (Some(activity), Some(target), Role::Learner) = (&activity_id, &launch.outcome, launch.role) {
            let binding = OutcomeBinding {
                activity_id: activity.clone(),
                learner_id: user_id.clone(),
                consumer_key: launch.consumer_key.clone(),
                service_url: target.service_url.clone(),
                sourcedid: target.sourcedid.clone(),
            };
            db.outcome_bindings
                .insert((activity.clone(), user_id.clone()), binding);
            if let Some(score) = db.scores.get(&(activity.clone(), user_id.clone())).cloned() {
                enqueue_passback(db, &score, now);
            }
        }

        LtiSession {
            session_id: SessionId::new(self.vault.random_token(24)),
            user_id,
            display_name,
            role: launch.role,
            consumer_key: launch.consumer_key.clone(),
            course,
            resource_link_id: launch.resource_link_id.clone(),
            activity_id,
            outcome: launch.outcome.clone(),
        }
    }

    fn provision_from_launch(
        &self,
        db: &mut Database,
        launch: &VerifiedLaunch,
        course_run_id: &CourseRunId,
        now: DateTime<Utc>,
    ) -> Result<Option<ActivityId>> {
        let Some(template) = launch.param("custom_px_template") else {
            return Ok(None);
        };
        let mut config = ActivityConfig::default();
        if let Some(policy) = launch.param("custom_px_policy") {
            config.contribution_policy = match policy.to_ascii_uppercase().as_str() {
                "SELECT" => ContributionPolicy::Select,
                "ALL" => ContributionPolicy::All,
                "RANDOM" => ContributionPolicy::Random,
                other => return Err(Error::InvalidConfig(format!("unknown policy {other}"))),
            };
        }
        if let Some(flag) = launch.param("custom_px_curation") {
            config.curation_enabled = matches!(flag.to_ascii_lowercase().as_str(), "1" | "true" | "yes");
        }
        if let Some(min) = launch.param("custom_px_min_curated") {
            config.min_curated_per_perspective = min
                .parse()
                .map_err(|_| Error::InvalidConfig("custom_px_min_curated is not a number".into()))?;
        }
        config.grade_passback_enabled = launch.outcome.is_some();
        let lineage = launch.param("custom_px_lineage").map(LineageKey::from);
        let activity = build_activity(db, &TemplateId::from(template), config, course_run_id, lineage, now)?;
        let id = activity.id.clone();
        db.activities.insert(id.clone(), activity);
        db.resource_links.insert(
            ResourceLink::key(&launch.consumer_key, &launch.context_id, &launch.resource_link_id),
            ResourceLink {
                consumer_key: launch.consumer_key.clone(),
                context_id: launch.context_id.clone(),
                resource_link_id: launch.resource_link_id.clone(),
                activity_id: id.clone(),
            },
        );
        tracing::info!(activity = %id, "activity provisioned from launch");
        Ok(Some(id))
    }

    /// Looks up a live session, refreshing its idle timer and counting the
    /// request against the per-minute cap.
    pub fn session(&self, id: &SessionId) -> Result<LtiSession> {
        let now = self.clock.now();
        let mut sessions = self.sessions.lock();
        let Some(slot) = sessions.get_mut(id) else {
            return Err(Error::Unauthenticated);
        };
        if now - slot.last_seen > self.session_idle {
            sessions.remove(id);
            return Err(Error::Unauthenticated);
        }
        if now - slot.window_start >= Duration::minutes(1) {
            slot.window_start = now;
            slot.window_count = 0;
        }
        if slot.window_count >= self.request_cap {
            return Err(Error::RateLimited);
        }
        slot.window_count += 1;
        slot.last_seen = now;
        Ok(slot.session.clone())
    }

    pub fn end_session(&self, id: &SessionId) {
        self.sessions.lock().remove(id);
    }

    /// Points the resource link of `session` at `activity` and updates the
    /// session, so an instructor's first launch can finish setting up.
    pub fn bind_session_activity(&self, session_id: &SessionId, activity: &ActivityId) -> Result<LtiSession> {
        let session = self.session(session_id)?;
        if !session.role.is_staff() {
            return Err(Error::Forbidden);
        }
        self.store.write(|db| {
            db.activity(activity)?;
            db.resource_links.insert(
                ResourceLink::key(&session.consumer_key, &session.course.lti_context_id, &session.resource_link_id),
                ResourceLink {
                    consumer_key: session.consumer_key.clone(),
                    context_id: session.course.lti_context_id.clone(),
                    resource_link_id: session.resource_link_id.clone(),
                    activity_id: activity.clone(),
                },
            );
            Ok(())
        })?;
        let mut sessions = self.sessions.lock();
        let slot = sessions.get_mut(session_id).ok_or(Error::Unauthenticated)?;
        slot.session.activity_id = Some(activity.clone());
        Ok(slot.session.clone())
    }

    // ---- templates and activities ---------------------------------------

    pub fn templates(&self) -> Vec<ActivityTemplate> {
        self.store.read().templates.values().cloned().collect()
    }

    pub fn template(&self, id: &TemplateId) -> Result<ActivityTemplate> {
        self.store.read().template(id).cloned()
    }

    pub fn create_template(&self, name: &str, perspectives: Vec<PerspectiveSpec>) -> Result<ActivityTemplate> {
        let template = ActivityTemplate::custom(TemplateId::generate(), name, perspectives)?;
        self.store.write(|db| {
            db.templates.insert(template.id.clone(), template.clone());
            Ok(())
        })?;
        Ok(template)
    }

    pub fn upsert_course(&self, course: CourseContext) -> Result<()> {
        self.store.write(|db| {
            db.courses.insert(course.course_run_id.clone(), course);
            Ok(())
        })
    }

    /// Creates an activity in a course run. Without `lineage_key` the
    /// activity starts a fresh lineage; reusing a key links it to earlier
    /// runs so their shared contributions join one knowledge base.
    pub fn create_activity(
        &self,
        template_id: &TemplateId,
        config: ActivityConfig,
        course_run_id: &CourseRunId,
        lineage_key: Option<LineageKey>,
    ) -> Result<Activity> {
        let now = self.clock.now();
        let activity = self.store.write(|db| {
            let activity = build_activity(db, template_id, config, course_run_id, lineage_key, now)?;
            db.activities.insert(activity.id.clone(), activity.clone());
            Ok(activity)
        })?;
        tracing::info!(activity = %activity.id, lineage = %activity.lineage_key, "activity created");
        Ok(activity)
    }

    pub fn activity(&self, id: &ActivityId) -> Result<Activity> {
        self.store.read().activity(id).cloned()
    }

    pub fn activity_template(&self, id: &ActivityId) -> Result<(Activity, ActivityTemplate)> {
        let db = self.store.read();
        let (a, t) = db.activity_template(id)?;
        Ok((a.clone(), t.clone()))
    }

    pub fn bind_resource_link(&self, consumer_key: &str, context_id: &str, resource_link_id: &str, activity: &ActivityId) -> Result<()> {
        self.store.write(|db| {
            db.activity(activity)?;
            db.resource_links.insert(
                ResourceLink::key(consumer_key, context_id, resource_link_id),
                ResourceLink {
                    consumer_key: consumer_key.to_owned(),
                    context_id: context_id.to_owned(),
                    resource_link_id: resource_link_id.to_owned(),
                    activity_id: activity.clone(),
                },
            );
            Ok(())
        })
    }

    pub fn set_display_name(&self, user: &UserId, display_name: &str) -> Result<()> {
        self.store.write(|db| {
            db.users.insert(
                user.clone(),
                UserProfile {
                    id: user.clone(),
                    display_name: display_name.to_owned(),
                },
            );
            Ok(())
        })
    }

    // ---- assignment -----------------------------------------------------

    /// Assigns required perspectives; repeated calls return the stored
    /// record unchanged.
    pub fn assign(&self, activity_id: &ActivityId, learner: &UserId, selected: Option<&PerspectiveId>) -> Result<AssignmentRecord> {
        let now = self.clock.now();
        self.store.write(|db| {
            if let Some(existing) = db.assignment(activity_id, learner) {
                return Ok(existing.clone());
            }
            let (activity, template) = db.activity_template(activity_id)?;
            let existing: Vec<&AssignmentRecord> = db
                .assignments
                .range((activity_id.clone(), UserId::new(""))..)
                .take_while(|((a, _), _)| a == activity_id)
                .map(|(_, r)| r)
                .collect();
            let counts = assignment::perspective_counts(template, existing.iter().copied());
            let plan = assignment::plan(
                template,
                activity.config.contribution_policy,
                &counts,
                selected,
                activity.assignment_seed,
                existing.len() as u64,
            )?;
            let record = AssignmentRecord {
                activity_id: activity_id.clone(),
                learner_id: learner.clone(),
                required_perspectives: plan.required_perspectives,
                policy_used: activity.config.contribution_policy,
                assigned_at: now,
                seed_tag: plan.seed_tag,
            };
            db.assignments
                .insert((activity_id.clone(), learner.clone()), record.clone());
            refresh_score(db, activity_id, learner, now)?;
            Ok(record)
        })
    }

    pub fn current_assignment(&self, activity_id: &ActivityId, learner: &UserId) -> Result<Option<AssignmentRecord>> {
        let db = self.store.read();
        db.activity(activity_id)?;
        Ok(db.assignment(activity_id, learner).cloned())
    }

    pub fn assignments(&self, activity_id: &ActivityId) -> Result<Vec<AssignmentRecord>> {
        let db = self.store.read();
        db.activity(activity_id)?;
        Ok(db
            .assignments
            .values()
            .filter(|r| &r.activity_id == activity_id)
            .cloned()
            .collect())
    }

    // ---- submissions ----------------------------------------------------

    pub fn store_media(&self, bytes: &[u8]) -> Result<String> {
        let blobs = self
            .blobs
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("media uploads are not configured".into()))?;
        if bytes.is_empty() {
            return Err(Error::InvalidItem("empty media upload".into()));
        }
        blobs.put(bytes)
    }

    pub fn media(&self, reference: &str) -> Result<Vec<u8>> {
        match &self.blobs {
            Some(b) => b.get(reference),
            None => Err(Error::InvalidItem(format!("unknown media asset `{reference}`"))),
        }
    }

    /// Creates or replaces the learner's contribution for one perspective.
    pub fn submit(
        &self,
        activity_id: &ActivityId,
        learner: &UserId,
        perspective_id: &PerspectiveId,
        items: Vec<ContributionItem>,
        tags: Vec<String>,
        sharing: Sharing,
    ) -> Result<Contribution> {
        let now = self.clock.now();
        let media_exists = |r: &str| self.blobs.as_ref().is_some_and(|b| b.exists(r));
        let contribution = self.store.write(|db| {
            let (activity, template) = db.activity_template(activity_id)?;
            let record = db.assignment(activity_id, learner).ok_or(Error::NotAssigned)?;
            if !record.required_perspectives.contains(perspective_id) {
                return Err(Error::NotAssigned);
            }
            let spec = template
                .perspective(perspective_id)
                .ok_or_else(|| Error::UnknownPerspective(perspective_id.to_string()))?;
            validate_items(&items, spec, &media_exists)?;
            if sharing == Sharing::Private && !activity.config.allow_private {
                return Err(Error::PrivateForbidden);
            }
            let tags = normalize_tags(&tags)?;
            let items: Vec<ContributionItem> = items
                .into_iter()
                .map(|mut i| {
                    i.body = i.body.trim().to_owned();
                    i.caption = i.caption.map(|c| c.trim().to_owned()).filter(|c| !c.is_empty());
                    i
                })
                .collect();

            let key = (activity_id.clone(), learner.clone(), perspective_id.clone());
            let contribution = match db.contribution_keys.get(&key).and_then(|id| db.contributions.get(id)) {
                Some(existing) => Contribution {
                    items,
                    tags,
                    sharing,
                    updated_at: now,
                    ..existing.clone()
                },
                None => Contribution {
                    id: ContributionId::generate(),
                    activity_id: activity_id.clone(),
                    learner_id: learner.clone(),
                    perspective_id: perspective_id.clone(),
                    items,
                    tags,
                    sharing,
                    submitted_at: now,
                    updated_at: now,
                },
            };
            let postings = build_postings(&self.tokenizer, &contribution);
            db.index.replace(&contribution.id, postings);
            db.contribution_keys.insert(key, contribution.id.clone());
            db.contributions.insert(contribution.id.clone(), contribution.clone());
            refresh_score(db, activity_id, learner, now)?;
            Ok(contribution)
        })?;
        tracing::debug!(contribution = %contribution.id, sharing = ?contribution.sharing, "contribution saved");
        Ok(contribution)
    }

    /// The learner's own contributions to an activity.
    pub fn my_contributions(&self, activity_id: &ActivityId, learner: &UserId) -> Result<Vec<Contribution>> {
        let db = self.store.read();
        db.activity(activity_id)?;
        Ok(db.learner_contributions(activity_id, learner).cloned().collect())
    }

    /// A single contribution as `viewer` may see it.
    pub fn contribution_entry(&self, id: &ContributionId, viewer: &Viewer) -> Result<KbEntry> {
        let db = self.store.read();
        let c = db.contribution(id)?;
        let lineage = db.lineage_of(c).cloned().unwrap_or_else(|| LineageKey::new(""));
        KbView::new(&db, &self.pseudonyms, &lineage).entry(c, viewer)
    }

    // ---- curation -------------------------------------------------------

    pub fn curation_task(&self, activity_id: &ActivityId, learner: &UserId) -> Result<CurationTask> {
        let db = self.store.read();
        let (activity, template) = db.activity_template(activity_id)?;
        if !activity.config.curation_enabled {
            return Err(Error::CurationDisabled);
        }
        let record = db.assignment(activity_id, learner).ok_or(Error::NotAssigned)?;
        curation::task(activity, template, record, db.curation_entries(activity_id, learner))
    }

    pub fn curation_complete(&self, activity_id: &ActivityId, learner: &UserId) -> Result<bool> {
        let db = self.store.read();
        let (activity, template) = db.activity_template(activity_id)?;
        let record = db.assignment(activity_id, learner).ok_or(Error::NotAssigned)?;
        Ok(curation::is_complete(activity, template, record, db.curation_entries(activity_id, learner)))
    }

    pub fn curate(&self, activity_id: &ActivityId, curator: &UserId, source: &ContributionId, note: Option<String>) -> Result<CurationEntry> {
        let now = self.clock.now();
        self.store.write(|db| {
            let (activity, template) = db.activity_template(activity_id)?;
            if !activity.config.curation_enabled {
                return Err(Error::CurationDisabled);
            }
            let record = db.assignment(activity_id, curator).ok_or(Error::NotAssigned)?;
            let source = db.contribution(source)?;
            if db.lineage_of(source) != Some(&activity.lineage_key) {
                return Err(Error::UnknownContribution(source.id.to_string()));
            }
            let already = db
                .curation_entries(activity_id, curator)
                .any(|e| e.source_contribution_id == source.id);
            let target = curation::check_curate(activity, template, record, source, already)?;
            let entry = CurationEntry {
                id: CurationId::generate(),
                activity_id: activity_id.clone(),
                curator_id: curator.clone(),
                source_contribution_id: source.id.clone(),
                target_perspective_id: target,
                note: note.map(|n| n.trim().to_owned()).filter(|n| !n.is_empty()),
                curated_at: now,
            };
            db.curation.insert(entry.id.clone(), entry.clone());
            refresh_score(db, activity_id, curator, now)?;
            Ok(entry)
        })
    }

    /// The curator's collection, oldest first. Sources their authors have
    /// since made private show as placeholders.
    pub fn curated_collection(&self, activity_id: &ActivityId, curator: &UserId) -> Result<Vec<CuratedItem>> {
        let db = self.store.read();
        let activity = db.activity(activity_id)?;
        let view = KbView::new(&db, &self.pseudonyms, &activity.lineage_key);
        let viewer = Viewer::learner(curator.clone());
        let mut entries: Vec<&CurationEntry> = db.curation_entries(activity_id, curator).collect();
        entries.sort_by(|a, b| a.curated_at.cmp(&b.curated_at).then(a.id.cmp(&b.id)));
        entries
            .into_iter()
            .map(|e| {
                let source = db
                    .contributions
                    .get(&e.source_contribution_id)
                    .filter(|c| c.sharing.is_shared())
                    .map(|c| view.entry(c, &viewer))
                    .transpose()?;
                Ok(CuratedItem {
                    entry: e.clone(),
                    placeholder: source.is_none().then(|| RETRACTED_PLACEHOLDER.to_owned()),
                    source,
                })
            })
            .collect()
    }

    // ---- knowledge base -------------------------------------------------

    pub fn query(&self, q: &KbQuery) -> Result<KbPage> {
        let db = self.store.read();
        if !db.lineage_exists(&q.lineage_key) {
            return Err(Error::UnknownLineage(q.lineage_key.to_string()));
        }
        kb::query(&db, &self.tokenizer, &self.pseudonyms, q)
    }

    pub fn related(&self, id: &ContributionId, viewer: &Viewer) -> Result<Related> {
        kb::related(&self.store.read(), &self.pseudonyms, id, viewer)
    }

    /// Writes the lineage's shared entries as newline-delimited JSON and
    /// returns how many were written.
    pub fn export_knowledge_base(&self, lineage: &LineageKey, actor: &Viewer, out: &mut dyn Write) -> Result<usize> {
        let entries = kb::export_entries(&self.store.read(), &self.pseudonyms, lineage, actor)?;
        for entry in &entries {
            serde_json::to_writer(&mut *out, entry).map_err(|e| Error::Storage(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| Error::Storage(e.to_string()))?;
        }
        Ok(entries.len())
    }

    // ---- moderation -----------------------------------------------------

    pub fn highlight(&self, actor: &Viewer, id: &ContributionId, note: Option<String>) -> Result<Highlight> {
        actor.require_staff()?;
        let now = self.clock.now();
        self.store.write(|db| {
            let c = db.contribution(id)?;
            if !c.sharing.is_shared() {
                return Err(Error::CannotHighlightPrivate);
            }
            let created_at = db.highlights.get(id).map_or(now, |h| h.created_at);
            let highlight = Highlight {
                contribution_id: id.clone(),
                moderator_id: actor.user_id.clone(),
                note: note.map(|n| n.trim().to_owned()).filter(|n| !n.is_empty()),
                created_at,
            };
            db.highlights.insert(id.clone(), highlight.clone());
            db.reviewed.insert(id.clone());
            Ok(highlight)
        })
    }

    pub fn unhighlight(&self, actor: &Viewer, id: &ContributionId) -> Result<bool> {
        actor.require_staff()?;
        self.store.write(|db| {
            db.contribution(id)?;
            Ok(db.highlights.remove(id).is_some())
        })
    }

    pub fn mark_reviewed(&self, actor: &Viewer, id: &ContributionId) -> Result<()> {
        actor.require_staff()?;
        self.store.write(|db| {
            db.contribution(id)?;
            db.reviewed.insert(id.clone());
            Ok(())
        })
    }

    /// Shared contributions nobody on staff has looked at yet, oldest first.
    pub fn review_queue(&self, actor: &Viewer, lineage: &LineageKey, limit: usize) -> Result<Vec<KbEntry>> {
        actor.require_staff()?;
        let db = self.store.read();
        if !db.lineage_exists(lineage) {
            return Err(Error::UnknownLineage(lineage.to_string()));
        }
        let view = KbView::new(&db, &self.pseudonyms, lineage);
        let mut pending: Vec<&Contribution> = db
            .lineage_contributions(lineage)
            .filter(|c| c.sharing.is_shared() && !db.reviewed.contains(&c.id) && !db.highlights.contains_key(&c.id))
            .collect();
        pending.sort_by(|a, b| a.submitted_at.cmp(&b.submitted_at).then(a.id.cmp(&b.id)));
        pending.into_iter().take(limit).map(|c| view.entry(c, actor)).collect()
    }

    /// Every highlight in a lineage, including ones whose contribution was
    /// later made private (those are hidden from the knowledge base).
    pub fn highlights(&self, actor: &Viewer, lineage: &LineageKey) -> Result<Vec<HighlightAudit>> {
        actor.require_staff()?;
        let db = self.store.read();
        let mut rows: Vec<HighlightAudit> = db
            .highlights
            .values()
            .filter_map(|h| {
                let c = db.contributions.get(&h.contribution_id)?;
                (db.lineage_of(c) == Some(lineage)).then(|| HighlightAudit {
                    highlight: h.clone(),
                    perspective_id: c.perspective_id.clone(),
                    sharing: c.sharing,
                })
            })
            .collect();
        rows.sort_by_key(|r| r.highlight.created_at);
        Ok(rows)
    }

    // ---- scores and passback --------------------------------------------

    pub fn participation_score(&self, activity_id: &ActivityId, learner: &UserId) -> Result<ParticipationScore> {
        let now = self.clock.now();
        {
            let db = self.store.read();
            db.activity(activity_id)?;
            db.assignment(activity_id, learner).ok_or(Error::NotAssigned)?;
            if let Some(stored) = db.scores.get(&(activity_id.clone(), learner.clone())) {
                let fresh = compute_score(&db, activity_id, learner, now)?;
                if fresh.score.to_bits() == stored.score.to_bits() {
                    return Ok(stored.clone());
                }
            }
        }
        self.store.write(|db| refresh_score(db, activity_id, learner, now))
    }

    /// Recomputes every assigned learner's score; returns how many changed.
    pub fn recompute_scores(&self, activity_id: &ActivityId) -> Result<usize> {
        let now = self.clock.now();
        self.store.write(|db| {
            db.activity(activity_id)?;
            let learners: Vec<UserId> = db
                .assignments
                .keys()
                .filter(|(a, _)| a == activity_id)
                .map(|(_, l)| l.clone())
                .collect();
            let mut changed = 0;
            for learner in learners {
                let before = db.scores.get(&(activity_id.clone(), learner.clone())).map(|s| s.score);
                let after = refresh_score(db, activity_id, &learner, now)?.score;
                if before.map(f64::to_bits) != Some(after.to_bits()) {
                    changed += 1;
                }
            }
            Ok(changed)
        })
    }

    pub fn passback_jobs(&self) -> Vec<PassbackJob> {
        self.store.read().passbacks.values().cloned().collect()
    }

    /// Sends every due passback job once. Jobs for a sourcedid wait until
    /// the earlier ones for that sourcedid are delivered or failed.
    pub fn dispatch_due_passbacks(&self, transport: &dyn OutcomeTransport) -> Result<DispatchReport> {
        let now = self.clock.now();
        let due: Vec<(PassbackJob, Option<String>)> = {
            let db = self.store.read();
            let mut blocked: BTreeSet<&str> = BTreeSet::new();
            let mut due = Vec::new();
            for job in db.passbacks.values() {
                if job.status != PassbackStatus::Pending {
                    continue;
                }
                if !blocked.insert(job.sourcedid.as_str()) {
                    continue;
                }
                if job.next_attempt_at <= now {
                    let secret = db
                        .consumers
                        .get(&job.consumer_key)
                        .and_then(|c| c.secret(&self.vault).ok());
                    due.push((job.clone(), secret));
                }
            }
            due
        };

        let mut report = DispatchReport::default();
        for (job, secret) in due {
            let outcome = match secret {
                None => Err("consumer is no longer registered".to_owned()),
                Some(secret) => self.send(&job, &secret, transport, now),
            };
            let status = self.store.write(|db| {
                let Some(stored) = db.passbacks.get_mut(&job.id) else {
                    return Ok(PassbackStatus::Failed);
                };
                stored.attempts += 1;
                match &outcome {
                    Ok(()) => {
                        stored.status = PassbackStatus::Delivered;
                        stored.last_error = None;
                    }
                    Err(e) => {
                        stored.last_error = Some(e.clone());
                        match RETRY_DELAYS.get(stored.attempts as usize - 1) {
                            Some(delay) => {
                                stored.next_attempt_at = now + Duration::from_std(*delay).expect("small delay");
                            }
                            None => stored.status = PassbackStatus::Failed,
                        }
                    }
                }
                Ok(stored.status)
            })?;
            match status {
                PassbackStatus::Delivered => report.delivered += 1,
                PassbackStatus::Pending => report.retried += 1,
                PassbackStatus::Failed => {
                    tracing::warn!(job = job.id, activity = %job.activity_id, "grade passback gave up");
                    report.failed += 1
                }
            }
        }
        Ok(report)
    }

    fn send(&self, job: &PassbackJob, secret: &str, transport: &dyn OutcomeTransport, now: DateTime<Utc>) -> std::result::Result<(), String> {
        let message = lti::outcomes::build_replace_result(&job.sourcedid, job.score).map_err(|e| e.to_string())?;
        let header = lti::oauth::authorization_header(
            &job.service_url,
            &job.consumer_key,
            secret,
            &message.body,
            &self.vault.random_token(16),
            now.timestamp(),
        )
        .map_err(|e| e.to_string())?;
        let body = transport
            .post(&job.service_url, &header, message.content_type, &message.body)
            .map_err(|e| e.to_string())?;
        let response = lti::outcomes::parse_response(&body).map_err(|e| e.to_string())?;
        if response.is_success() {
            Ok(())
        } else {
            Err(format!("consumer answered {}", response.code_major))
        }
    }

    // ---- topics ---------------------------------------------------------

    pub fn tokenize_corpus(&self, lineage: &LineageKey) -> Result<Corpus> {
        let db = self.store.read();
        lineage_corpus(&db, &self.tokenizer, lineage)
    }

    /// Trains and publishes a topic model for a lineage. Only one training
    /// run per lineage may be in flight.
    pub fn train_topics(&self, actor: &Viewer, lineage: &LineageKey, request: &TrainRequest) -> Result<TopicModel> {
        actor.require_staff()?;
        let _guard = TrainingGuard::acquire(&self.training, lineage)?;
        let corpus = {
            let db = self.store.read();
            if !db.lineage_exists(lineage) {
                return Err(Error::UnknownLineage(lineage.to_string()));
            }
            lineage_corpus(&db, &self.tokenizer, lineage)?
        };
        if corpus.docs.len() < self.lda.min_docs {
            return Err(Error::TooFewDocs {
                needed: self.lda.min_docs,
                have: corpus.docs.len(),
            });
        }
        let seed = request.seed.unwrap_or_else(rand::random);
        let params = self.lda.params(corpus.docs.len(), request.topics, request.iterations, seed);
        let started = std::time::Instant::now();
        let mut model = topics::train(&corpus.docs, &corpus.vocabulary, &params)?;
        model.lineage_key = lineage.clone();
        model.trained_at = self.clock.now();
        self.store.write(|db| {
            db.published_models.insert(lineage.clone(), model.model_id.clone());
            db.models.insert(model.model_id.clone(), model.clone());
            Ok(())
        })?;
        tracing::info!(
            lineage = %lineage,
            model = %model.model_id,
            docs = corpus.docs.len(),
            topics = model.topics,
            elapsed_ms = started.elapsed().as_millis() as u64,
            "topic model published"
        );
        Ok(model)
    }

    pub fn topic_model(&self, lineage: &LineageKey) -> Option<TopicModel> {
        self.store.read().latest_model(lineage).cloned()
    }

    pub fn topic_overview(&self, actor: &Viewer, lineage: &LineageKey, top_n: usize) -> Result<Option<TopicOverview>> {
        actor.require_staff()?;
        let db = self.store.read();
        let Some(model) = db.latest_model(lineage) else {
            return Ok(None);
        };
        let summaries = topics::summarize(model, top_n, |id| {
            db.contributions
                .get(id)
                .filter(|c| c.sharing.is_shared())
                .and_then(|c| c.excerpt(EXCERPT_CHARS))
        })?;
        Ok(Some(TopicOverview {
            model_id: model.model_id.clone(),
            topics: model.topics,
            trained_at: model.trained_at,
            summaries,
        }))
    }

    /// Sends one message to every learner whose still-shared contribution
    /// falls in `topic_id`; returns the number of distinct recipients.
    pub fn broadcast_feedback(&self, actor: &Viewer, lineage: &LineageKey, model_id: &ModelId, topic_id: usize, message: &str) -> Result<usize> {
        actor.require_staff()?;
        if message.trim().is_empty() {
            return Err(Error::InvalidInput("feedback message is empty".into()));
        }
        let now = self.clock.now();
        let count = self.store.write(|db| {
            let model = db
                .models
                .get(model_id)
                .filter(|m| &m.lineage_key == lineage)
                .ok_or_else(|| Error::UnknownModel(model_id.to_string()))?;
            if topic_id >= model.topics {
                return Err(Error::UnknownTopic(topic_id));
            }
            let mut recipients = BTreeSet::new();
            let mut contribution_ids = Vec::new();
            for (d, id) in model.doc_ids.iter().enumerate() {
                if model.dominant_topic(d) != topic_id {
                    continue;
                }
                if let Some(c) = db.contributions.get(id).filter(|c| c.sharing.is_shared()) {
                    recipients.insert(c.learner_id.clone());
                    contribution_ids.push(id.clone());
                }
            }
            let msg = FeedbackMessage {
                id: FeedbackId::generate(),
                lineage_key: lineage.clone(),
                model_id: model_id.clone(),
                topic_id,
                message: message.trim().to_owned(),
                sender_id: actor.user_id.clone(),
                created_at: now,
                recipients: recipients.into_iter().collect(),
                contribution_ids,
            };
            let count = msg.recipients.len();
            db.feedback.insert(msg.id.clone(), msg);
            Ok(count)
        })?;
        tracing::info!(lineage = %lineage, topic = topic_id, recipients = count, "feedback broadcast");
        Ok(count)
    }

    /// Feedback addressed to `learner`, newest first.
    pub fn feedback_for(&self, learner: &UserId) -> Vec<FeedbackMessage> {
        let db = self.store.read();
        let mut out: Vec<FeedbackMessage> = db
            .feedback
            .values()
            .filter(|f| f.recipients.contains(learner))
            .cloned()
            .collect();
        out.sort_by_key(|f| std::cmp::Reverse(f.created_at));
        out
    }
}

fn course_run_id(consumer_key: &str, context_id: &str) -> CourseRunId {
    let id = lti::internal_user_id(consumer_key, context_id);
    CourseRunId::new(format!("run-{}", &id.as_str()[2..]))
}

fn build_activity(
    db: &Database,
    template_id: &TemplateId,
    config: ActivityConfig,
    course_run_id: &CourseRunId,
    lineage_key: Option<LineageKey>,
    now: DateTime<Utc>,
) -> Result<Activity> {
    let template = db.template(template_id)?;
    config.validate(template)?;
    if !db.courses.contains_key(course_run_id) {
        return Err(Error::InvalidInput(format!("unknown course run {course_run_id}")));
    }
    let lineage_key = match lineage_key {
        Some(key) if key.as_str().trim().is_empty() => {
            return Err(Error::InvalidInput("lineage key is empty".into()));
        }
        Some(key) => {
            let taken = db
                .activities
                .values()
                .any(|a| &a.course_run_id == course_run_id && a.lineage_key == key);
            if taken {
                return Err(Error::DuplicateLineageInRun(key.to_string()));
            }
            key
        }
        None => LineageKey::generate(),
    };
    Ok(Activity {
        id: ActivityId::generate(),
        template_id: template_id.clone(),
        config,
        course_run_id: course_run_id.clone(),
        lineage_key,
        created_at: now,
        assignment_seed: rand::random(),
    })
}

fn lineage_corpus(db: &Database, tokenizer: &Tokenizer, lineage: &LineageKey) -> Result<Corpus> {
    let mut contributions: Vec<&Contribution> = db.lineage_contributions(lineage).collect();
    contributions.sort_by(|a, b| a.submitted_at.cmp(&b.submitted_at).then(a.id.cmp(&b.id)));
    topics::tokenize_corpus(tokenizer, contributions)
}

fn compute_score(db: &Database, activity_id: &ActivityId, learner: &UserId, now: DateTime<Utc>) -> Result<ParticipationScore> {
    let (activity, template) = db.activity_template(activity_id)?;
    let record = db.assignment(activity_id, learner).ok_or(Error::NotAssigned)?;
    let submitted: BTreeSet<&PerspectiveId> = db
        .learner_contributions(activity_id, learner)
        .map(|c| &c.perspective_id)
        .collect();
    let submitted_all = record.required_perspectives.iter().all(|p| submitted.contains(p));
    let curation = (activity.config.curation_enabled
        && !curation::perspectives_to_curate(template, record).is_empty())
    .then(|| curation::is_complete(activity, template, record, db.curation_entries(activity_id, learner)));
    let (score, components) = score_components(submitted_all, curation);
    Ok(ParticipationScore {
        learner_id: learner.clone(),
        activity_id: activity_id.clone(),
        score,
        components,
        computed_at: now,
    })
}

/// Recomputes and stores the score, queueing a passback when it changed.
fn refresh_score(db: &mut Database, activity_id: &ActivityId, learner: &UserId, now: DateTime<Utc>) -> Result<ParticipationScore> {
    let fresh = compute_score(db, activity_id, learner, now)?;
    let key = (activity_id.clone(), learner.clone());
    let changed = db
        .scores
        .get(&key)
        .is_none_or(|s| s.score.to_bits() != fresh.score.to_bits());
    if !changed {
        return Ok(db.scores[&key].clone());
    }
    db.scores.insert(key, fresh.clone());
    enqueue_passback(db, &fresh, now);
    Ok(fresh)
}

fn enqueue_passback(db: &mut Database, score: &ParticipationScore, now: DateTime<Utc>) {
    let Ok(activity) = db.activity(&score.activity_id) else {
        return;
    };
    if !activity.config.grade_passback_enabled {
        return;
    }
    let Some(binding) = db
        .outcome_bindings
        .get(&(score.activity_id.clone(), score.learner_id.clone()))
        .cloned()
    else {
        return;
    };
    let latest = db
        .passbacks
        .values()
        .rfind(|j| j.sourcedid == binding.sourcedid);
    if latest.is_some_and(|j| j.same_grade(&binding.sourcedid, score.score) && j.status != PassbackStatus::Failed) {
        return;
    }
    let id = db.next_passback_id();
    db.passbacks.insert(
        id,
        PassbackJob {
            id,
            activity_id: score.activity_id.clone(),
            learner_id: score.learner_id.clone(),
            consumer_key: binding.consumer_key,
            service_url: binding.service_url,
            sourcedid: binding.sourcedid,
            score: score.score,
            attempts: 0,
            status: PassbackStatus::Pending,
            next_attempt_at: now,
            last_error: None,
        },
    );
}

struct TrainingGuard<'a> {
    running: &'a Mutex<HashSet<LineageKey>>,
    lineage: LineageKey,
}

impl<'a> TrainingGuard<'a> {
    fn acquire(running: &'a Mutex<HashSet<LineageKey>>, lineage: &LineageKey) -> Result<Self> {
        if !running.lock().insert(lineage.clone()) {
            return Err(Error::TrainingInProgress(lineage.to_string()));
        }
        Ok(Self {
            running,
            lineage: lineage.clone(),
        })
    }
}

impl Drop for TrainingGuard<'_> {
    fn drop(&mut self) {
        self.running.lock().remove(&self.lineage);
    }
}
