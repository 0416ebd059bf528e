#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use perspectivesx_cli::api::{self, AppState};
use perspectivesx_core::lti::oauth;
use perspectivesx_core::*;
use serde_json::Value;
use tower::ServiceExt;

pub const LAUNCH_URL: &str = "https://px.example.org/lti/launch";
pub const CONSUMER: &str = "campus";
pub const CONSUMER_SECRET: &str = "campus-shared-secret";
pub const INSTRUCTOR: &str = "urn:lti:role:ims/lis/Instructor";
pub const MODERATOR: &str = "urn:lti:role:ims/lis/TeachingAssistant";
pub const LEARNER: &str = "Learner";

pub struct TestApp {
    pub app: Router,
    pub state: Arc<AppState>,
    pub service: Arc<Service>,
    nonce: AtomicU64,
    _blobs: tempfile::TempDir,
}

pub struct Response {
    pub status: StatusCode,
    pub headers: axum::http::HeaderMap,
    pub body: Value,
    pub raw: Vec<u8>,
}

impl TestApp {
    pub fn new() -> Self {
        Self::with_options(ServiceOptions::in_memory(&[7u8; 32], LAUNCH_URL))
    }

    pub fn with_options(mut options: ServiceOptions) -> Self {
        let blobs = tempfile::tempdir().unwrap();
        options.blob_root.get_or_insert_with(|| blobs.path().to_owned());
        let service = Arc::new(Service::open(options).unwrap());
        service.add_consumer(CONSUMER, CONSUMER_SECRET, "Campus LMS").unwrap();
        let state = AppState::new(service.clone(), true);
        Self {
            app: api::router(state.clone(), None),
            state,
            service,
            nonce: AtomicU64::new(0),
            _blobs: blobs,
        }
    }

    pub fn launch_params(&self, user: &str, roles: &str, context: &str, extra: &[(&str, &str)]) -> Vec<(String, String)> {
        let nonce = format!("nonce-{}", self.nonce.fetch_add(1, Ordering::SeqCst));
        let mut params: Vec<(String, String)> = [
            ("lti_message_type", "basic-lti-launch-request"),
            ("lti_version", "LTI-1p0"),
            ("oauth_consumer_key", CONSUMER),
            ("oauth_nonce", nonce.as_str()),
            ("oauth_signature_method", "HMAC-SHA1"),
            ("oauth_version", "1.0"),
            ("resource_link_id", "unit-3"),
            ("context_id", context),
            ("context_title", "Business Strategy"),
            ("user_id", user),
            ("roles", roles),
            ("lis_person_name_full", user),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        params.push(("oauth_timestamp".into(), chrono::Utc::now().timestamp().to_string()));
        for (k, v) in extra {
            params.retain(|(name, _)| name != k);
            params.push((k.to_string(), v.to_string()));
        }
        let base = oauth::signature_base_string("POST", LAUNCH_URL, &params).unwrap();
        params.push(("oauth_signature".into(), oauth::sign(&base, CONSUMER_SECRET)));
        params
    }

    pub async fn post_launch(&self, params: &[(String, String)]) -> Response {
        let body = params
            .iter()
            .map(|(k, v)| format!("{}={}", oauth::percent_encode(k), oauth::percent_encode(v)))
            .collect::<Vec<_>>()
            .join("&");
        let request = Request::builder()
            .method(Method::POST)
            .uri("/lti/launch")
            .header(header::CONTENT_TYPE, "application/x-www-form-urlencoded")
            .body(Body::from(body))
            .unwrap();
        self.send(request).await
    }

    /// Launches and returns the `Cookie` header value for the new session.
    pub async fn login(&self, user: &str, roles: &str) -> String {
        self.login_in(user, roles, "course-1").await
    }

    pub async fn login_in(&self, user: &str, roles: &str, context: &str) -> String {
        let response = self.post_launch(&self.launch_params(user, roles, context, &[])).await;
        assert_eq!(response.status, StatusCode::SEE_OTHER, "{:?}", response.body);
        cookie_of(&response)
    }

    pub async fn call(&self, method: Method, uri: &str, cookie: Option<&str>, body: Option<Value>) -> Response {
        let mut request = Request::builder().method(method).uri(uri);
        if let Some(c) = cookie {
            request = request.header(header::COOKIE, c);
        }
        let request = match body {
            Some(json) => request
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(json.to_string())),
            None => request.body(Body::empty()),
        }
        .unwrap();
        self.send(request).await
    }

    pub async fn get(&self, uri: &str, cookie: &str) -> Response {
        self.call(Method::GET, uri, Some(cookie), None).await
    }

    pub async fn post(&self, uri: &str, cookie: &str, body: Value) -> Response {
        self.call(Method::POST, uri, Some(cookie), Some(body)).await
    }

    pub async fn send(&self, request: Request<Body>) -> Response {
        let response = self.app.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let headers = response.headers().clone();
        let raw = response.into_body().collect().await.unwrap().to_bytes().to_vec();
        let body = serde_json::from_slice(&raw).unwrap_or(Value::Null);
        Response { status, headers, body, raw }
    }
}

pub fn cookie_of(response: &Response) -> String {
    let set = response.headers[header::SET_COOKIE].to_str().unwrap();
    set.split(';').next().unwrap().to_owned()
}

/// An LMS outcome endpoint that records every replaceResult it receives.
#[derive(Clone, Default)]
pub struct RecordingLms {
    pub bodies: Arc<Mutex<Vec<String>>>,
}

impl OutcomeTransport for RecordingLms {
    fn post(&self, _url: &str, authorization: &str, _content_type: &str, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        assert!(authorization.starts_with("OAuth ") && authorization.contains("oauth_body_hash"));
        self.bodies.lock().unwrap().push(String::from_utf8(body.to_vec()).unwrap());
        Ok(SUCCESS.as_bytes().to_vec())
    }
}

impl RecordingLms {
    pub fn scores(&self) -> Vec<(String, f64)> {
        self.bodies
            .lock()
            .unwrap()
            .iter()
            .map(|b| perspectivesx_core::lti::outcomes::parse_replace_result(b.as_bytes()).unwrap())
            .collect()
    }
}

const SUCCESS: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<imsx_POXEnvelopeResponse xmlns="http://www.imsglobal.org/services/ltiv1p1/xsd/imsoms_v1p0">
  <imsx_POXHeader><imsx_POXResponseHeaderInfo><imsx_version>V1.0</imsx_version>
    <imsx_messageIdentifier>r1</imsx_messageIdentifier>
    <imsx_statusInfo><imsx_codeMajor>success</imsx_codeMajor><imsx_severity>status</imsx_severity>
      <imsx_messageRefIdentifier>m1</imsx_messageRefIdentifier><imsx_operationRefIdentifier>replaceResult</imsx_operationRefIdentifier>
    </imsx_statusInfo></imsx_POXResponseHeaderInfo></imsx_POXHeader>
  <imsx_POXBody><replaceResultResponse/></imsx_POXBody>
</imsx_POXEnvelopeResponse>"#;
