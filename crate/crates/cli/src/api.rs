//! REST + session API over [`Service`].
//!
//! Every `/api` route needs the `px_session` cookie set by `/lti/launch` and
//! is scoped to the course run of that launch. Errors are returned as
//! `{"error": code, "detail": message}`; see `status_for` for status codes.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::FormRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::header::{CONTENT_TYPE, COOKIE, LOCATION, SET_COOKIE};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Form, Json, Router};
use chrono::{DateTime, Utc};
use perspectivesx_core::service::{CuratedItem, TrainRequest};
use perspectivesx_core::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::error::{ApiError, ApiResult};

pub const SESSION_COOKIE: &str = "px_session";
const MEDIA_LIMIT_BYTES: usize = 16 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TrainingStatus {
    Running,
    Done { model_id: ModelId },
    Failed { error: &'static str, detail: String },
}

pub struct AppState {
    pub service: Arc<Service>,
    /// Adds `Secure; SameSite=None` to the session cookie so it survives
    /// the cross-site iframe the LMS embeds the tool in.
    pub secure_cookies: bool,
    training: Mutex<HashMap<LineageKey, TrainingStatus>>,
}

impl AppState {
    pub fn new(service: Arc<Service>, secure_cookies: bool) -> Arc<Self> {
        Arc::new(Self {
            service,
            secure_cookies,
            training: Mutex::new(HashMap::new()),
        })
    }

    pub fn training_status(&self, lineage: &LineageKey) -> Option<TrainingStatus> {
        self.training.lock().unwrap().get(lineage).cloned()
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared, webapp_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/session", get(session_info).delete(logout))
        .route("/templates", get(list_templates).post(create_template))
        .route("/activities", post(create_activity))
        .route("/activities/{id}", get(get_activity))
        .route("/activities/{id}/assignment", get(get_assignment).post(assign))
        .route("/activities/{id}/assignments", get(list_assignments))
        .route("/activities/{id}/contributions", get(my_contributions).post(submit))
        .route("/contributions/{id}", get(get_contribution))
        .route("/media", post(upload_media))
        .route("/media/{reference}", get(download_media))
        .route("/kb/{lineage}/search", get(search))
        .route("/kb/{lineage}/related/{contribution}", get(related))
        .route("/kb/{lineage}/export", get(export_kb))
        .route("/curation/{activity}", get(curation_status).post(curate))
        .route("/moderation/highlights", post(highlight).get(list_highlights))
        .route("/moderation/highlights/{contribution}", delete(unhighlight))
        .route("/moderation/queue", get(review_queue))
        .route("/moderation/reviewed", post(mark_reviewed))
        .route("/topics/{lineage}", get(topic_overview))
        .route("/topics/{lineage}/train", post(train_topics))
        .route("/topics/{lineage}/model", get(export_model))
        .route("/topics/{lineage}/broadcast", post(broadcast))
        .route("/feedback", get(my_feedback))
        .route("/scores/{activity}/{learner}", get(score));

    let app = Router::new()
        .route("/lti/launch", post(launch))
        .nest("/api", api)
        .layer(DefaultBodyLimit::max(MEDIA_LIMIT_BYTES));
    let app = match webapp_dir {
        Some(dir) => app.nest_service("/app", ServeDir::new(dir)),
        None => app.route("/app", get(no_webapp)).route("/app/{*rest}", get(no_webapp)),
    };
    app.with_state(state)
}

async fn no_webapp() -> impl IntoResponse {
    (StatusCode::NOT_FOUND, "the web client is not installed on this server")
}

// ---- extractors -------------------------------------------------------------

/// The session behind the request's cookie.
pub struct Caller(pub LtiSession);

impl FromRequestParts<Shared> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, ApiError> {
        let id = session_cookie(&parts.headers).ok_or(Error::Unauthenticated)?;
        Ok(Caller(state.service.session(&SessionId::new(id))?))
    }
}

pub fn session_cookie(headers: &HeaderMap) -> Option<String> {
    headers
        .get_all(COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|pair| pair.trim().split_once('='))
        .find(|(name, _)| *name == SESSION_COOKIE)
        .map(|(_, value)| value.to_owned())
}

impl Caller {
    fn viewer(&self) -> Viewer {
        Viewer {
            user_id: self.0.user_id.clone(),
            role: self.0.role,
        }
    }

    /// Activities are reachable only from launches in their course run.
    fn activity(&self, service: &Service, id: &str) -> ApiResult<Activity> {
        let activity = service.activity(&ActivityId::new(id))?;
        if activity.course_run_id != self.0.course.course_run_id {
            return Err(Error::Forbidden.into());
        }
        Ok(activity)
    }

    /// A lineage is reachable when some activity of the caller's run joins it.
    fn lineage(&self, service: &Service, key: &str) -> ApiResult<LineageKey> {
        let lineage = LineageKey::new(key);
        let run = &self.0.course.course_run_id;
        service.with_db(|db| {
            if !db.lineage_exists(&lineage) {
                return Err(Error::UnknownLineage(key.to_owned()).into());
            }
            if !db.activities.values().any(|a| a.lineage_key == lineage && &a.course_run_id == run) {
                return Err(Error::Forbidden.into());
            }
            Ok(lineage.clone())
        })
    }

    fn contribution_lineage(&self, service: &Service, id: &ContributionId) -> ApiResult<LineageKey> {
        let lineage = service.with_db(|db| {
            let c = db.contribution(id)?;
            db.lineage_of(c).cloned().ok_or_else(|| Error::UnknownContribution(id.to_string()))
        })?;
        self.lineage(service, lineage.as_str())
    }
}

macro_rules! role_gate {
    ($(#[$doc:meta])* $name:ident, $allowed:pat) => {
        $(#[$doc])*
        pub struct $name(pub Caller);

        impl FromRequestParts<Shared> for $name {
            type Rejection = ApiError;

            async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, ApiError> {
                let caller = Caller::from_request_parts(parts, state).await?;
                match caller.0.role {
                    $allowed => Ok($name(caller)),
                    _ => Err(Error::Forbidden.into()),
                }
            }
        }
    };
}

// Role checks run as extractors so they precede body parsing.
role_gate!(
    /// Moderators and instructors.
    Staff,
    Role::Moderator | Role::Instructor
);
role_gate!(Instructor, Role::Instructor);
role_gate!(Learner, Role::Learner);

/// `Json` with rejections mapped onto the API error shape.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| Body(v))
            .map_err(|r| Error::InvalidInput(r.body_text()).into())
    }
}

/// `Query` with rejections mapped onto the API error shape.
pub struct Params<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| Params(v))
            .map_err(|r| Error::InvalidInput(r.body_text()).into())
    }
}

fn created<T: Serialize>(value: T) -> Response {
    (StatusCode::CREATED, Json(value)).into_response()
}

// ---- launch and session -----------------------------------------------------

async fn launch(
    State(state): State<Shared>,
    form: Result<Form<Vec<(String, String)>>, FormRejection>,
) -> ApiResult<Response> {
    let Form(form_params) = form.map_err(|r| Error::MalformedLaunch(r.body_text()))?;
    let request = LaunchRequest {
        http_method: "POST".into(),
        launch_url: state.service.launch_url().to_owned(),
        form_params,
    };
    let session = state.service.launch(&request)?;
    let cookie = session_set_cookie(session.session_id.as_str(), state.secure_cookies);
    Ok((StatusCode::SEE_OTHER, [(SET_COOKIE, cookie), (LOCATION, "/app/".to_owned())]).into_response())
}

fn session_set_cookie(value: &str, secure: bool) -> String {
    let site = if secure { "SameSite=None; Secure" } else { "SameSite=Lax" };
    format!("{SESSION_COOKIE}={value}; Path=/; HttpOnly; {site}")
}

#[derive(Serialize)]
struct SessionView {
    user_id: UserId,
    display_name: String,
    role: Role,
    course: CourseContext,
    activity_id: Option<ActivityId>,
    grade_passback: bool,
}

async fn session_info(caller: Caller) -> Json<SessionView> {
    let s = caller.0;
    Json(SessionView {
        user_id: s.user_id,
        display_name: s.display_name,
        role: s.role,
        course: s.course,
        activity_id: s.activity_id,
        grade_passback: s.outcome.is_some(),
    })
}

async fn logout(State(state): State<Shared>, caller: Caller) -> Response {
    state.service.end_session(&caller.0.session_id);
    let expired = format!("{}; Max-Age=0", session_set_cookie("", state.secure_cookies));
    (StatusCode::NO_CONTENT, [(SET_COOKIE, expired)]).into_response()
}

// ---- templates and activities -----------------------------------------------

async fn list_templates(State(state): State<Shared>, _caller: Caller) -> Json<Vec<ActivityTemplate>> {
    Json(state.service.templates())
}

#[derive(Deserialize)]
struct NewTemplate {
    name: String,
    perspectives: Vec<PerspectiveSpec>,
}

async fn create_template(State(state): State<Shared>, _: Instructor, Body(body): Body<NewTemplate>) -> ApiResult<Response> {
    Ok(created(state.service.create_template(&body.name, body.perspectives)?))
}

#[derive(Deserialize)]
struct NewActivity {
    template_id: TemplateId,
    #[serde(default)]
    config: ActivityConfig,
    #[serde(default)]
    lineage_key: Option<LineageKey>,
    /// Bind the launching resource link to the new activity.
    #[serde(default = "yes")]
    bind_launch: bool,
}

fn yes() -> bool {
    true
}

async fn create_activity(State(state): State<Shared>, Instructor(caller): Instructor, Body(body): Body<NewActivity>) -> ApiResult<Response> {
    let activity = state.service.create_activity(
        &body.template_id,
        body.config,
        &caller.0.course.course_run_id,
        body.lineage_key,
    )?;
    if body.bind_launch {
        state.service.bind_session_activity(&caller.0.session_id, &activity.id)?;
    }
    Ok(created(activity))
}

#[derive(Serialize)]
struct ActivityView {
    activity: Activity,
    template: ActivityTemplate,
}

async fn get_activity(State(state): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<Json<ActivityView>> {
    let activity = caller.activity(&state.service, &id)?;
    let template = state.service.template(&activity.template_id)?;
    Ok(Json(ActivityView { activity, template }))
}

async fn get_assignment(
    State(state): State<Shared>,
    caller: Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<Option<AssignmentRecord>>> {
    let activity = caller.activity(&state.service, &id)?;
    Ok(Json(state.service.current_assignment(&activity.id, &caller.0.user_id)?))
}

#[derive(Deserialize, Default)]
struct AssignBody {
    #[serde(default)]
    perspective_id: Option<PerspectiveId>,
}

async fn assign(
    State(state): State<Shared>,
    Learner(caller): Learner,
    Path(id): Path<String>,
    Body(body): Body<AssignBody>,
) -> ApiResult<Json<AssignmentRecord>> {
    let activity = caller.activity(&state.service, &id)?;
    Ok(Json(state.service.assign(&activity.id, &caller.0.user_id, body.perspective_id.as_ref())?))
}

async fn list_assignments(
    State(state): State<Shared>,
    Staff(caller): Staff,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<AssignmentRecord>>> {
    let activity = caller.activity(&state.service, &id)?;
    Ok(Json(state.service.assignments(&activity.id)?))
}

#[derive(Deserialize)]
struct NewContribution {
    perspective_id: PerspectiveId,
    items: Vec<ContributionItem>,
    #[serde(default)]
    tags: Vec<String>,
    /// Defaults to the activity's sharing default.
    #[serde(default)]
    sharing: Option<Sharing>,
}

async fn submit(
    State(state): State<Shared>,
    Learner(caller): Learner,
    Path(id): Path<String>,
    Body(body): Body<NewContribution>,
) -> ApiResult<Response> {
    let activity = caller.activity(&state.service, &id)?;
    let sharing = body.sharing.unwrap_or(match activity.config.kb_sharing_default {
        KbSharingDefault::Named => Sharing::Named,
        KbSharingDefault::Anonymous => Sharing::Anonymous,
    });
    let contribution = state.service.submit(
        &activity.id,
        &caller.0.user_id,
        &body.perspective_id,
        body.items,
        body.tags,
        sharing,
    )?;
    Ok(created(contribution))
}

async fn my_contributions(
    State(state): State<Shared>,
    caller: Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<Contribution>>> {
    let activity = caller.activity(&state.service, &id)?;
    Ok(Json(state.service.my_contributions(&activity.id, &caller.0.user_id)?))
}

async fn get_contribution(State(state): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<Json<KbEntry>> {
    let id = ContributionId::new(id);
    caller.contribution_lineage(&state.service, &id)?;
    Ok(Json(state.service.contribution_entry(&id, &caller.viewer())?))
}

#[derive(Serialize)]
struct MediaRef {
    reference: String,
}

async fn upload_media(State(state): State<Shared>, _caller: Caller, body: Bytes) -> ApiResult<Response> {
    if body.is_empty() {
        return Err(Error::InvalidInput("empty upload".into()).into());
    }
    Ok(created(MediaRef {
        reference: state.service.store_media(&body)?,
    }))
}

async fn download_media(State(state): State<Shared>, _caller: Caller, Path(reference): Path<String>) -> ApiResult<Response> {
    let bytes = state.service.media(&reference)?;
    Ok(([(CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

// ---- knowledge base ---------------------------------------------------------

#[derive(Deserialize, Default)]
struct SearchParams {
    text: Option<String>,
    /// Comma-separated; entries must carry all of them.
    tags: Option<String>,
    perspective_id: Option<PerspectiveId>,
    #[serde(default)]
    highlighted_only: bool,
    topic_id: Option<usize>,
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn search(
    State(state): State<Shared>,
    caller: Caller,
    Path(lineage): Path<String>,
    Params(p): Params<SearchParams>,
) -> ApiResult<Json<KbPage>> {
    let lineage = caller.lineage(&state.service, &lineage)?;
    let mut q = KbQuery::new(lineage, caller.viewer());
    q.text = p.text.filter(|t| !t.trim().is_empty());
    q.tags = p.tags.map(|t| {
        t.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect::<BTreeSet<_>>()
    });
    q.perspective_id = p.perspective_id;
    q.highlighted_only = p.highlighted_only;
    q.topic_id = p.topic_id;
    q.offset = p.offset.unwrap_or(q.offset);
    q.limit = p.limit.unwrap_or(q.limit);
    Ok(Json(state.service.query(&q)?))
}

async fn related(
    State(state): State<Shared>,
    caller: Caller,
    Path((lineage, contribution)): Path<(String, String)>,
) -> ApiResult<Json<Related>> {
    let lineage = caller.lineage(&state.service, &lineage)?;
    let id = ContributionId::new(contribution);
    if caller.contribution_lineage(&state.service, &id)? != lineage {
        return Err(Error::UnknownContribution(id.to_string()).into());
    }
    Ok(Json(state.service.related(&id, &caller.viewer())?))
}

async fn export_kb(State(state): State<Shared>, Staff(caller): Staff, Path(lineage): Path<String>) -> ApiResult<Response> {
    let lineage = caller.lineage(&state.service, &lineage)?;
    let mut out = Vec::new();
    state.service.export_knowledge_base(&lineage, &caller.viewer(), &mut out)?;
    Ok(([(CONTENT_TYPE, "application/x-ndjson")], out).into_response())
}

// ---- curation ---------------------------------------------------------------

#[derive(Serialize)]
struct CurationStatus {
    task: CurationTask,
    complete: bool,
    collection: Vec<CuratedItem>,
}

async fn curation_status(
    State(state): State<Shared>,
    Learner(caller): Learner,
    Path(id): Path<String>,
) -> ApiResult<Json<CurationStatus>> {
    let activity = caller.activity(&state.service, &id)?;
    let learner = &caller.0.user_id;
    let task = state.service.curation_task(&activity.id, learner)?;
    Ok(Json(CurationStatus {
        complete: task.is_complete(),
        task,
        collection: state.service.curated_collection(&activity.id, learner)?,
    }))
}

#[derive(Deserialize)]
struct CurateBody {
    source_contribution_id: ContributionId,
    #[serde(default)]
    note: Option<String>,
}

async fn curate(
    State(state): State<Shared>,
    Learner(caller): Learner,
    Path(id): Path<String>,
    Body(body): Body<CurateBody>,
) -> ApiResult<Response> {
    let activity = caller.activity(&state.service, &id)?;
    let entry = state
        .service
        .curate(&activity.id, &caller.0.user_id, &body.source_contribution_id, body.note)?;
    Ok(created(entry))
}

// ---- moderation -------------------------------------------------------------

#[derive(Deserialize)]
struct HighlightBody {
    contribution_id: ContributionId,
    #[serde(default)]
    note: Option<String>,
}

async fn highlight(State(state): State<Shared>, Staff(caller): Staff, Body(body): Body<HighlightBody>) -> ApiResult<Response> {
    caller.contribution_lineage(&state.service, &body.contribution_id)?;
    Ok(created(state.service.highlight(&caller.viewer(), &body.contribution_id, body.note)?))
}

async fn unhighlight(State(state): State<Shared>, Staff(caller): Staff, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let id = ContributionId::new(id);
    caller.contribution_lineage(&state.service, &id)?;
    state.service.unhighlight(&caller.viewer(), &id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct LineageParams {
    lineage: String,
    limit: Option<usize>,
}

async fn list_highlights(
    State(state): State<Shared>,
    Staff(caller): Staff,
    Params(p): Params<LineageParams>,
) -> ApiResult<Json<Vec<service::HighlightAudit>>> {
    let lineage = caller.lineage(&state.service, &p.lineage)?;
    Ok(Json(state.service.highlights(&caller.viewer(), &lineage)?))
}

async fn review_queue(
    State(state): State<Shared>,
    Staff(caller): Staff,
    Params(p): Params<LineageParams>,
) -> ApiResult<Json<Vec<KbEntry>>> {
    let lineage = caller.lineage(&state.service, &p.lineage)?;
    let limit = p.limit.unwrap_or(20).clamp(1, 100);
    Ok(Json(state.service.review_queue(&caller.viewer(), &lineage, limit)?))
}

#[derive(Deserialize)]
struct ReviewedBody {
    contribution_id: ContributionId,
}

async fn mark_reviewed(State(state): State<Shared>, Staff(caller): Staff, Body(body): Body<ReviewedBody>) -> ApiResult<StatusCode> {
    caller.contribution_lineage(&state.service, &body.contribution_id)?;
    state.service.mark_reviewed(&caller.viewer(), &body.contribution_id)?;
    Ok(StatusCode::NO_CONTENT)
}

// ---- topics -----------------------------------------------------------------

#[derive(Deserialize)]
struct OverviewParams {
    top_n: Option<usize>,
}

#[derive(Serialize)]
struct TopicsView {
    model: Option<service::TopicOverview>,
    training: Option<TrainingStatus>,
}

async fn topic_overview(
    State(state): State<Shared>,
    Staff(caller): Staff,
    Path(lineage): Path<String>,
    Params(p): Params<OverviewParams>,
) -> ApiResult<Json<TopicsView>> {
    let lineage = caller.lineage(&state.service, &lineage)?;
    let model = state
        .service
        .topic_overview(&caller.viewer(), &lineage, p.top_n.unwrap_or(10))?;
    Ok(Json(TopicsView {
        model,
        training: state.training_status(&lineage),
    }))
}

/// Queues training on a blocking worker and answers 202 at once; progress
/// shows up in the `training` field of the topic overview.
async fn train_topics(
    State(state): State<Shared>,
    Staff(caller): Staff,
    Path(lineage): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let lineage = caller.lineage(&state.service, &lineage)?;
    let request: TrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        TrainRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| Error::InvalidInput(e.to_string()))?
    };
    {
        let mut training = state.training.lock().unwrap();
        if training.get(&lineage) == Some(&TrainingStatus::Running) {
            return Err(Error::TrainingInProgress(lineage.to_string()).into());
        }
        training.insert(lineage.clone(), TrainingStatus::Running);
    }
    let viewer = caller.viewer();
    let worker = state.clone();
    let key = lineage.clone();
    tokio::task::spawn_blocking(move || {
        let status = match worker.service.train_topics(&viewer, &key, &request) {
            Ok(model) => TrainingStatus::Done { model_id: model.model_id },
            Err(e) => {
                tracing::warn!(lineage = %key, code = e.code(), "topic training failed");
                TrainingStatus::Failed {
                    error: e.code(),
                    detail: e.to_string(),
                }
            }
        };
        worker.training.lock().unwrap().insert(key, status);
    });
    Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "status": "queued", "lineage_key": lineage }))).into_response())
}

async fn export_model(State(state): State<Shared>, Staff(caller): Staff, Path(lineage): Path<String>) -> ApiResult<Json<TopicModel>> {
    let lineage = caller.lineage(&state.service, &lineage)?;
    state
        .service
        .topic_model(&lineage)
        .map(Json)
        .ok_or_else(|| Error::UnknownModel(format!("no model published for `{lineage}`")).into())
}

#[derive(Deserialize)]
struct BroadcastBody {
    model_id: ModelId,
    topic_id: usize,
    message: String,
}

#[derive(Serialize)]
struct BroadcastResult {
    recipients: usize,
}

async fn broadcast(
    State(state): State<Shared>,
    Staff(caller): Staff,
    Path(lineage): Path<String>,
    Body(body): Body<BroadcastBody>,
) -> ApiResult<Json<BroadcastResult>> {
    let lineage = caller.lineage(&state.service, &lineage)?;
    if body.message.trim().is_empty() {
        return Err(Error::InvalidInput("message is empty".into()).into());
    }
    let recipients = state
        .service
        .broadcast_feedback(&caller.viewer(), &lineage, &body.model_id, body.topic_id, &body.message)?;
    Ok(Json(BroadcastResult { recipients }))
}

/// Feedback as a learner sees it: without the recipient list.
#[derive(Serialize)]
struct FeedbackView {
    id: FeedbackId,
    lineage_key: LineageKey,
    topic_id: usize,
    message: String,
    created_at: DateTime<Utc>,
}

async fn my_feedback(State(state): State<Shared>, caller: Caller) -> Json<Vec<FeedbackView>> {
    Json(
        state
            .service
            .feedback_for(&caller.0.user_id)
            .into_iter()
            .map(|f| FeedbackView {
                id: f.id,
                lineage_key: f.lineage_key,
                topic_id: f.topic_id,
                message: f.message,
                created_at: f.created_at,
            })
            .collect(),
    )
}

// ---- scores -----------------------------------------------------------------

async fn score(
    State(state): State<Shared>,
    caller: Caller,
    Path((activity, learner)): Path<(String, String)>,
) -> ApiResult<Json<ParticipationScore>> {
    let activity = caller.activity(&state.service, &activity)?;
    let learner = UserId::new(learner);
    if !caller.0.role.is_staff() && learner != caller.0.user_id {
        return Err(Error::Forbidden.into());
    }
    Ok(Json(state.service.participation_score(&activity.id, &learner)?))
}
