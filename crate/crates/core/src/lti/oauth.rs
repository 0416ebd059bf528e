//! OAuth 1.0a HMAC-SHA1 request signing as used by LTI 1.1.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use ring::{digest, hmac};

use crate::error::{Error, Result};

// RFC 3986 unreserved characters stay literal, everything else is encoded.
const UNRESERVED: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

pub fn percent_encode(s: &str) -> String {
    utf8_percent_encode(s, UNRESERVED).to_string()
}

/// Splits `url` into the normalized base URL (lowercase scheme and host,
/// default port dropped, no query or fragment) and its query parameters.
pub fn normalize_url(url: &str) -> Result<(String, Vec<(String, String)>)> {
    let parsed = url::Url::parse(url).map_err(|e| Error::MalformedLaunch(format!("bad launch url: {e}")))?;
    let host = parsed
        .host_str()
        .ok_or_else(|| Error::MalformedLaunch("launch url has no host".into()))?;
    let mut base = format!("{}://{}", parsed.scheme(), host.to_lowercase());
    if let Some(port) = parsed.port() {
        base.push_str(&format!(":{port}"));
    }
    base.push_str(parsed.path());
    let query = parsed.query_pairs().map(|(k, v)| (k.into_owned(), v.into_owned())).collect();
    Ok((base, query))
}

/// `METHOD&enc(base_url)&enc(sorted params)`, `oauth_signature` excluded.
pub fn signature_base_string(method: &str, url: &str, params: &[(String, String)]) -> Result<String> {
    let (base_url, query) = normalize_url(url)?;
    let mut encoded: Vec<(String, String)> = params
        .iter()
        .chain(query.iter())
        .filter(|(k, _)| k != "oauth_signature")
        .map(|(k, v)| (percent_encode(k), percent_encode(v)))
        .collect();
    encoded.sort();
    let param_string = encoded
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("&");
    Ok(format!(
        "{}&{}&{}",
        method.to_uppercase(),
        percent_encode(&base_url),
        percent_encode(&param_string)
    ))
}

fn signing_key(consumer_secret: &str) -> hmac::Key {
    // no token secret in LTI launches, hence the bare trailing '&'
    let key = format!("{}&", percent_encode(consumer_secret));
    hmac::Key::new(hmac::HMAC_SHA1_FOR_LEGACY_USE_ONLY, key.as_bytes())
}

pub fn sign(base_string: &str, consumer_secret: &str) -> String {
    let tag = hmac::sign(&signing_key(consumer_secret), base_string.as_bytes());
    STANDARD.encode(tag.as_ref())
}

/// Constant-time check of a base64 signature.
pub fn verify(base_string: &str, consumer_secret: &str, signature: &str) -> bool {
    let Ok(provided) = STANDARD.decode(signature.trim()) else {
        return false;
    };
    hmac::verify(&signing_key(consumer_secret), base_string.as_bytes(), &provided).is_ok()
}

pub fn body_hash(body: &[u8]) -> String {
    STANDARD.encode(digest::digest(&digest::SHA1_FOR_LEGACY_USE_ONLY, body).as_ref())
}

/// Builds an `Authorization: OAuth ...` header for a POST with a body hash
/// (the LTI 1.1 outcomes convention).
pub fn authorization_header(
    url: &str,
    consumer_key: &str,
    consumer_secret: &str,
    body: &[u8],
    nonce: &str,
    timestamp: i64,
) -> Result<String> {
    let mut params = vec![
        ("oauth_body_hash".to_owned(), body_hash(body)),
        ("oauth_consumer_key".to_owned(), consumer_key.to_owned()),
        ("oauth_nonce".to_owned(), nonce.to_owned()),
        ("oauth_signature_method".to_owned(), "HMAC-SHA1".to_owned()),
        ("oauth_timestamp".to_owned(), timestamp.to_string()),
        ("oauth_version".to_owned(), "1.0".to_owned()),
    ];
    let base = signature_base_string("POST", url, &params)?;
    params.push(("oauth_signature".to_owned(), sign(&base, consumer_secret)));
    let fields = params
        .iter()
        .map(|(k, v)| format!("{}=\"{}\"", percent_encode(k), percent_encode(v)))
        .collect::<Vec<_>>()
        .join(",");
    Ok(format!("OAuth realm=\"\",{fields}"))
}

/// Parses an `OAuth k="v",...` header back into decoded pairs.
pub fn parse_authorization_header(header: &str) -> Option<Vec<(String, String)>> {
    let rest = header.trim().strip_prefix("OAuth ")?;
    rest.split(',')
        .map(|field| {
            let (k, v) = field.trim().split_once('=')?;
            let v = v.trim().strip_prefix('"')?.strip_suffix('"')?;
            let decode = |s: &str| percent_encoding::percent_decode_str(s).decode_utf8().ok().map(|c| c.into_owned());
            Some((decode(k)?, decode(v)?))
        })
        .collect()
}
