//! Outbound grade passback queue.
//!
//! Jobs are deduplicated by (sourcedid, score), delivered at least once, and
//! retried with 1s/10s/100s backoff before being marked failed. Jobs for the
//! same sourcedid are sent in creation order.

use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{ActivityId, UserId};

pub const RETRY_DELAYS: [Duration; 3] = [
    Duration::from_secs(1),
    Duration::from_secs(10),
    Duration::from_secs(100),
];

/// Where a learner's grade for an activity goes, captured from their launch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeBinding {
    pub activity_id: ActivityId,
    pub learner_id: UserId,
    pub consumer_key: String,
    pub service_url: String,
    pub sourcedid: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PassbackStatus {
    Pending,
    Delivered,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassbackJob {
    pub id: u64,
    pub activity_id: ActivityId,
    pub learner_id: UserId,
    pub consumer_key: String,
    pub service_url: String,
    pub sourcedid: String,
    pub score: f64,
    pub attempts: u32,
    pub status: PassbackStatus,
    pub next_attempt_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

impl PassbackJob {
    pub fn same_grade(&self, sourcedid: &str, score: f64) -> bool {
        self.sourcedid == sourcedid && self.score.to_bits() == score.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Sends a signed outcome request and returns the response body.
pub trait OutcomeTransport: Send + Sync {
    fn post(&self, url: &str, authorization: &str, content_type: &str, body: &[u8]) -> Result<Vec<u8>, TransportError>;
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct DispatchReport {
    pub delivered: usize,
    pub retried: usize,
    pub failed: usize,
}
