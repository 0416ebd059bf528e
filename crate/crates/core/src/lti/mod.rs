//! LTI 1.1 tool-provider gateway: launch verification, role mapping,
//! replay protection, consumer credentials and outcome messages.

pub mod oauth;
pub mod outcomes;

use std::collections::BTreeMap;

use base64::engine::general_purpose::{STANDARD, URL_SAFE_NO_PAD};
use base64::Engine;
use ring::aead::{self, LessSafeKey, UnboundKey};
use ring::digest;
use ring::rand::{SecureRandom, SystemRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ActivityId, SessionId, UserId};
use crate::model::CourseContext;
use crate::submissions::Role;

/// Launch timestamps further than this from the server clock are rejected,
/// and nonces are remembered for the same span.
pub const TIMESTAMP_WINDOW_SECS: i64 = 300;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchRequest {
    pub http_method: String,
    pub launch_url: String,
    pub form_params: Vec<(String, String)>,
}

impl LaunchRequest {
    pub fn param(&self, name: &str) -> Option<&str> {
        self.form_params
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    fn required(&self, name: &str) -> Result<&str> {
        self.param(name)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| Error::MalformedLaunch(format!("missing {name}")))
    }
}

/// A launch whose signature, timestamp and nonce all checked out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifiedLaunch {
    pub consumer_key: String,
    pub user_id: String,
    pub roles: String,
    pub role: Role,
    pub context_id: String,
    pub resource_link_id: String,
    pub outcome: Option<OutcomeTarget>,
    pub params: BTreeMap<String, String>,
}

impl VerifiedLaunch {
    pub fn param(&self, name: &str) -> Option<&str> {
        self.params.get(name).map(String::as_str)
    }

    /// Pseudonymous user id scoped to the consumer.
    pub fn internal_user_id(&self) -> UserId {
        internal_user_id(&self.consumer_key, &self.user_id)
    }

    pub fn display_name(&self) -> String {
        if let Some(full) = self.param("lis_person_name_full").filter(|s| !s.trim().is_empty()) {
            return full.trim().to_owned();
        }
        let given = self.param("lis_person_name_given").unwrap_or("").trim();
        let family = self.param("lis_person_name_family").unwrap_or("").trim();
        let joined = format!("{given} {family}").trim().to_owned();
        if joined.is_empty() {
            format!("Learner {}", &self.internal_user_id().as_str()[2..8])
        } else {
            joined
        }
    }
}

pub fn internal_user_id(consumer_key: &str, lti_user_id: &str) -> UserId {
    let mut ctx = digest::Context::new(&digest::SHA256);
    ctx.update(consumer_key.as_bytes());
    ctx.update(&[0]);
    ctx.update(lti_user_id.as_bytes());
    let hash = ctx.finish();
    let hex: String = hash.as_ref()[..16].iter().map(|b| format!("{b:02x}")).collect();
    UserId::new(format!("u-{hex}"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeTarget {
    pub service_url: String,
    pub sourcedid: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LtiSession {
    pub session_id: SessionId,
    pub user_id: UserId,
    pub display_name: String,
    pub role: Role,
    pub consumer_key: String,
    pub course: CourseContext,
    pub resource_link_id: String,
    pub activity_id: Option<ActivityId>,
    pub outcome: Option<OutcomeTarget>,
}

/// Maps the LTI `roles` parameter onto the three roles the tool knows.
///
/// Matching is case-insensitive on the final path segment of each
/// comma-separated token, so URN forms work.
pub fn map_role(roles: &str) -> Role {
    let segments: Vec<String> = roles
        .split(',')
        .map(|t| t.trim().rsplit(['/', ':']).next().unwrap_or("").to_lowercase())
        .collect();
    if segments.iter().any(|s| s.contains("instructor")) {
        Role::Instructor
    } else if segments
        .iter()
        .any(|s| s.contains("teachingassistant") || s.contains("mentor"))
    {
        Role::Moderator
    } else {
        Role::Learner
    }
}

/// Seen (consumer, nonce) pairs within the timestamp window.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonceStore {
    seen: BTreeMap<String, i64>,
}

impl NonceStore {
    fn key(consumer_key: &str, nonce: &str) -> String {
        format!("{consumer_key}\u{0}{nonce}")
    }

    /// Records the nonce or rejects it as a replay. Entries older than the
    /// window are pruned first; they could not pass the timestamp check.
    pub fn check_and_insert(&mut self, consumer_key: &str, nonce: &str, timestamp: i64, now: i64) -> Result<()> {
        self.prune(now);
        let key = Self::key(consumer_key, nonce);
        if self.seen.contains_key(&key) {
            return Err(Error::ReplayedNonce);
        }
        self.seen.insert(key, timestamp);
        Ok(())
    }

    pub fn prune(&mut self, now: i64) {
        self.seen.retain(|_, ts| *ts >= now - TIMESTAMP_WINDOW_SECS);
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Checks message fields, signature, timestamp and nonce, in that order.
/// The nonce is only recorded for correctly signed, fresh launches.
pub fn verify_launch(
    launch: &LaunchRequest,
    secret_for: impl FnOnce(&str) -> Option<String>,
    nonces: &mut NonceStore,
    now: i64,
) -> Result<VerifiedLaunch> {
    let message_type = launch.required("lti_message_type")?;
    if message_type != "basic-lti-launch-request" {
        return Err(Error::MalformedLaunch(format!("unsupported lti_message_type {message_type}")));
    }
    let version = launch.required("lti_version")?;
    if version != "LTI-1p0" {
        return Err(Error::MalformedLaunch(format!("unsupported lti_version {version}")));
    }
    let method = launch.required("oauth_signature_method")?;
    if method != "HMAC-SHA1" {
        return Err(Error::MalformedLaunch(format!("unsupported signature method {method}")));
    }
    if let Some(v) = launch.param("oauth_version") {
        if v != "1.0" {
            return Err(Error::MalformedLaunch(format!("unsupported oauth_version {v}")));
        }
    }
    let consumer_key = launch.required("oauth_consumer_key")?;
    let nonce = launch.required("oauth_nonce")?;
    let timestamp: i64 = launch
        .required("oauth_timestamp")?
        .parse()
        .map_err(|_| Error::MalformedLaunch("oauth_timestamp is not an integer".into()))?;
    let signature = launch.required("oauth_signature")?;
    let resource_link_id = launch.required("resource_link_id")?;
    let user_id = launch.required("user_id")?;
    let context_id = launch.required("context_id")?;

    let secret = secret_for(consumer_key).ok_or(Error::UnknownConsumer)?;
    let base = oauth::signature_base_string(&launch.http_method, &launch.launch_url, &launch.form_params)?;
    if !oauth::verify(&base, &secret, signature) {
        return Err(Error::BadSignature);
    }
    if (now - timestamp).abs() > TIMESTAMP_WINDOW_SECS {
        return Err(Error::StaleTimestamp);
    }
    nonces.check_and_insert(consumer_key, nonce, timestamp, now)?;

    let outcome = match (
        launch.param("lis_outcome_service_url").filter(|s| !s.is_empty()),
        launch.param("lis_result_sourcedid").filter(|s| !s.is_empty()),
    ) {
        (Some(url), Some(sid)) => Some(OutcomeTarget {
            service_url: url.to_owned(),
            sourcedid: sid.to_owned(),
        }),
        _ => None,
    };
    let roles = launch.param("roles").unwrap_or("").to_owned();
    Ok(VerifiedLaunch {
        consumer_key: consumer_key.to_owned(),
        user_id: user_id.to_owned(),
        role: map_role(&roles),
        roles,
        context_id: context_id.to_owned(),
        resource_link_id: resource_link_id.to_owned(),
        outcome,
        params: launch
            .form_params
            .iter()
            .filter(|(k, _)| k != "oauth_signature")
            .cloned()
            .collect(),
    })
}

/// A consumer's key and its shared secret, the latter sealed with a key
/// derived from the server secret.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerCredential {
    pub consumer_key: String,
    pub label: String,
    sealed_secret: String,
}

impl std::fmt::Debug for ConsumerCredential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConsumerCredential")
            .field("consumer_key", &self.consumer_key)
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

impl ConsumerCredential {
    pub fn new(consumer_key: &str, label: &str, secret: &str, vault: &SecretVault) -> Result<Self> {
        Ok(Self {
            consumer_key: consumer_key.to_owned(),
            label: label.to_owned(),
            sealed_secret: vault.seal(secret)?,
        })
    }

    pub fn secret(&self, vault: &SecretVault) -> Result<String> {
        vault.open(&self.sealed_secret)
    }
}

/// ChaCha20-Poly1305 sealing for secrets stored at rest.
pub struct SecretVault {
    key: LessSafeKey,
    rng: SystemRandom,
}

impl SecretVault {
    pub fn new(server_secret: &[u8]) -> Self {
        let mut ctx = digest::Context::new(&digest::SHA256);
        ctx.update(b"perspectivesx consumer secrets\0");
        ctx.update(server_secret);
        let derived = ctx.finish();
        let unbound = UnboundKey::new(&aead::CHACHA20_POLY1305, derived.as_ref()).expect("32-byte key");
        Self {
            key: LessSafeKey::new(unbound),
            rng: SystemRandom::new(),
        }
    }

    pub fn seal(&self, plaintext: &str) -> Result<String> {
        let mut nonce = [0u8; aead::NONCE_LEN];
        self.rng
            .fill(&mut nonce)
            .map_err(|_| Error::Storage("no randomness available".into()))?;
        let mut buf = plaintext.as_bytes().to_vec();
        self.key
            .seal_in_place_append_tag(aead::Nonce::assume_unique_for_key(nonce), aead::Aad::empty(), &mut buf)
            .map_err(|_| Error::Storage("sealing failed".into()))?;
        let mut out = nonce.to_vec();
        out.extend_from_slice(&buf);
        Ok(STANDARD.encode(out))
    }

    pub fn open(&self, sealed: &str) -> Result<String> {
        let bad = || Error::Storage("sealed secret cannot be opened with this server secret".into());
        let raw = STANDARD.decode(sealed).map_err(|_| bad())?;
        if raw.len() < aead::NONCE_LEN {
            return Err(bad());
        }
        let (nonce, ciphertext) = raw.split_at(aead::NONCE_LEN);
        let nonce = aead::Nonce::try_assume_unique_for_key(nonce).map_err(|_| bad())?;
        let mut buf = ciphertext.to_vec();
        let plain = self
            .key
            .open_in_place(nonce, aead::Aad::empty(), &mut buf)
            .map_err(|_| bad())?;
        String::from_utf8(plain.to_vec()).map_err(|_| bad())
    }

    pub fn random_token(&self, bytes: usize) -> String {
        let mut buf = vec![0u8; bytes];
        self.rng.fill(&mut buf).expect("system randomness");
        URL_SAFE_NO_PAD.encode(buf)
    }
}
