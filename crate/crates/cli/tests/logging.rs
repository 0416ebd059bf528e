mod common;

use std::io::Write;
use std::sync::{Arc, Mutex};

use axum::http::StatusCode;
use common::*;

#[derive(Clone, Default)]
struct Capture(Arc<Mutex<Vec<u8>>>);

impl Write for Capture {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[tokio::test]
async fn request_logs_carry_no_credentials() {
    let capture = Capture::default();
    let writer = capture.clone();
    let subscriber = tracing_subscriber::fmt()
        .with_max_level(tracing::Level::TRACE)
        .with_writer(move || writer.clone())
        .finish();
    let _guard = tracing::subscriber::set_default(subscriber);

    let app = TestApp::new();
    let good = app.launch_params("ada", LEARNER, "course-1", &[]);
    let response = app.post_launch(&good).await;
    assert_eq!(response.status, StatusCode::SEE_OTHER);
    let cookie = cookie_of(&response);
    app.get("/api/session", &cookie).await;

    let mut forged = app.launch_params("eve", INSTRUCTOR, "course-1", &[]);
    forged.last_mut().unwrap().1 = "Zm9yZ2VkLXNpZ25hdHVyZQ==".into();
    assert_eq!(app.post_launch(&forged).await.status, StatusCode::UNAUTHORIZED);

    let logs = String::from_utf8(capture.0.lock().unwrap().clone()).unwrap();
    assert!(logs.contains("launch accepted"), "{logs}");
    let session_id = cookie.split_once('=').unwrap().1;
    let signature = &good.iter().find(|(k, _)| k == "oauth_signature").unwrap().1;
    for secret in [CONSUMER_SECRET, session_id, signature.as_str(), "Zm9yZ2VkLXNpZ25hdHVyZQ=="] {
        assert!(!logs.contains(secret), "log leaks {secret}:\n{logs}");
    }
}
