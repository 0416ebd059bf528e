use std::time::Duration;

use perspectivesx_core::{OutcomeTransport, TransportError};

/// Sends outcome requests over HTTP(S).
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        Self { agent: config.into() }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl OutcomeTransport for HttpTransport {
    fn post(&self, url: &str, authorization: &str, content_type: &str, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        let mut response = self
            .agent
            .post(url)
            .header("Authorization", authorization)
            .header("Content-Type", content_type)
            .send(body)
            .map_err(|e| TransportError(e.to_string()))?;
        response
            .body_mut()
            .read_to_vec()
            .map_err(|e| TransportError(e.to_string()))
    }
}
