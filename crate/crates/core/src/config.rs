//! Service configuration: a flat TOML key-value file with `PX_`-prefixed
//! environment overrides (`bind_address` ← `PX_BIND_ADDRESS`).

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::topics::LdaDefaults;

pub const ENV_PREFIX: &str = "PX_";
pub const MIN_SECRET_BYTES: usize = 32;

const KEYS: &[&str] = &[
    "bind_address",
    "base_url",
    "database_path",
    "server_secret",
    "session_idle_timeout_secs",
    "session_request_cap_per_minute",
    "stopword_file",
    "lda_k_cap",
    "lda_alpha",
    "lda_beta",
    "lda_iterations",
    "lda_min_docs",
    "blob_store_root",
    "webapp_dir",
    "auto_provision",
];

#[derive(Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind_address: SocketAddr,
    pub base_url: url::Url,
    pub database_path: PathBuf,
    pub server_secret: String,
    pub session_idle_timeout_secs: u64,
    pub session_request_cap_per_minute: u32,
    pub stopword_file: Option<PathBuf>,
    pub lda: LdaDefaults,
    pub blob_store_root: PathBuf,
    pub webapp_dir: Option<PathBuf>,
    pub auto_provision: bool,
}

impl std::fmt::Debug for ServiceConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceConfig")
            .field("bind_address", &self.bind_address)
            .field("base_url", &self.base_url.as_str())
            .field("database_path", &self.database_path)
            .field("server_secret", &"<redacted>")
            .field("session_idle_timeout_secs", &self.session_idle_timeout_secs)
            .field("stopword_file", &self.stopword_file)
            .field("lda", &self.lda)
            .field("blob_store_root", &self.blob_store_root)
            .finish_non_exhaustive()
    }
}

impl ServiceConfig {
    /// The absolute URL consumers POST launches to.
    pub fn launch_url(&self) -> String {
        format!("{}/lti/launch", self.base_url.as_str().trim_end_matches('/'))
    }
}

/// Reads `path` and applies overrides from the process environment.
pub fn load_config(path: &Path) -> Result<ServiceConfig> {
    load_config_with_env(path, std::env::vars())
}

pub fn load_config_with_env(path: &Path, env: impl IntoIterator<Item = (String, String)>) -> Result<ServiceConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::UnreadableFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::UnreadableFile {
        path: path.display().to_string(),
        reason: e.message().to_owned(),
    })?;
    let mut values = BTreeMap::new();
    for (key, value) in table {
        if !KEYS.contains(&key.as_str()) {
            return Err(invalid(&key, "unknown key"));
        }
        let scalar = match value {
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            _ => return Err(invalid(&key, "expected a scalar value")),
        };
        values.insert(key, scalar);
    }
    for (name, value) in env {
        if let Some(key) = name.strip_prefix(ENV_PREFIX) {
            let key = key.to_lowercase();
            if KEYS.contains(&key.as_str()) {
                values.insert(key, value);
            }
        }
    }
    let base_dir = path.parent().unwrap_or(Path::new("."));
    from_values(&values, base_dir)
}

fn invalid(key: &str, reason: impl Into<String>) -> Error {
    Error::InvalidValue {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

fn required<'a>(values: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    values
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::MissingKey(key.to_owned()))
}

fn parsed<T: FromStr>(values: &BTreeMap<String, String>, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match values.get(key) {
        Some(raw) => raw.trim().parse().map_err(|e: T::Err| invalid(key, e.to_string())),
        None => Ok(default),
    }
}

fn resolve(base_dir: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base_dir.join(p)
    }
}

fn from_values(values: &BTreeMap<String, String>, base_dir: &Path) -> Result<ServiceConfig> {
    let bind_address = required(values, "bind_address")?
        .parse()
        .map_err(|e: std::net::AddrParseError| invalid("bind_address", e.to_string()))?;
    let base_url = url::Url::parse(required(values, "base_url")?).map_err(|e| invalid("base_url", e.to_string()))?;
    if !matches!(base_url.scheme(), "http" | "https") {
        return Err(invalid("base_url", "must be an http(s) URL"));
    }

    let database_path = resolve(base_dir, required(values, "database_path")?);
    let db_dir = database_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !db_dir.is_dir() {
        return Err(invalid("database_path", format!("directory {} does not exist", db_dir.display())));
    }

    let server_secret = required(values, "server_secret")?.to_owned();
    if server_secret.len() < MIN_SECRET_BYTES {
        return Err(invalid("server_secret", format!("must be at least {MIN_SECRET_BYTES} bytes")));
    }

    let session_idle_timeout_secs: u64 = parsed(values, "session_idle_timeout_secs", 8 * 3600)?;
    if session_idle_timeout_secs == 0 {
        return Err(invalid("session_idle_timeout_secs", "must be positive"));
    }
    let session_request_cap_per_minute: u32 = parsed(values, "session_request_cap_per_minute", 600)?;
    if session_request_cap_per_minute == 0 {
        return Err(invalid("session_request_cap_per_minute", "must be positive"));
    }

    let stopword_file = values.get("stopword_file").map(|raw| resolve(base_dir, raw));
    if let Some(p) = &stopword_file {
        if !p.is_file() {
            return Err(invalid("stopword_file", format!("{} does not exist", p.display())));
        }
    }

    let defaults = LdaDefaults::default();
    let alpha = match values.get("lda_alpha").map(|s| s.trim()) {
        None | Some("auto") => None,
        Some(raw) => Some(raw.parse::<f64>().map_err(|e| invalid("lda_alpha", e.to_string()))?),
    };
    let lda = LdaDefaults {
        k_cap: parsed(values, "lda_k_cap", defaults.k_cap)?,
        alpha,
        beta: parsed(values, "lda_beta", defaults.beta)?,
        iterations: parsed(values, "lda_iterations", defaults.iterations)?,
        min_docs: parsed(values, "lda_min_docs", defaults.min_docs)?,
    };
    if lda.k_cap < 1 {
        return Err(invalid("lda_k_cap", "must be at least 1"));
    }
    if lda.alpha.is_some_and(|a| !(a > 0.0 && a.is_finite())) {
        return Err(invalid("lda_alpha", "must be positive or \"auto\""));
    }
    if !(lda.beta > 0.0 && lda.beta.is_finite()) {
        return Err(invalid("lda_beta", "must be positive"));
    }
    if lda.iterations < 1 {
        return Err(invalid("lda_iterations", "must be at least 1"));
    }

    let blob_store_root = resolve(base_dir, required(values, "blob_store_root")?);
    if !blob_store_root.is_dir() {
        return Err(invalid("blob_store_root", format!("{} does not exist", blob_store_root.display())));
    }
    let webapp_dir = values.get("webapp_dir").map(|raw| resolve(base_dir, raw));
    if let Some(p) = &webapp_dir {
        if !p.is_dir() {
            return Err(invalid("webapp_dir", format!("{} does not exist", p.display())));
        }
    }

    Ok(ServiceConfig {
        bind_address,
        base_url,
        database_path,
        server_secret,
        session_idle_timeout_secs,
        session_request_cap_per_minute,
        stopword_file,
        lda,
        blob_store_root,
        webapp_dir,
        auto_provision: parsed(values, "auto_provision", false)?,
    })
}
