//! Learner contributions, sharing levels and viewer-dependent identity.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use ring::hmac;
use serde::de::Deserializer;
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ActivityId, ContributionId, PerspectiveId, UserId};
use crate::model::{ItemKind, PerspectiveSpec};

pub const MAX_TAGS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Sharing {
    Private,
    Anonymous,
    Named,
}

impl Sharing {
    pub const ALL: [Sharing; 3] = [Sharing::Private, Sharing::Anonymous, Sharing::Named];

    pub fn is_shared(self) -> bool {
        self != Sharing::Private
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContributionItem {
    pub kind: ItemKind,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl ContributionItem {
    pub fn text(body: impl Into<String>) -> Self {
        Self {
            kind: ItemKind::Text,
            body: body.into(),
            caption: None,
        }
    }

    pub fn link(url: impl Into<String>) -> Self {
        Self {
            kind: ItemKind::Link,
            body: url.into(),
            caption: None,
        }
    }

    pub fn media(asset: impl Into<String>, caption: Option<String>) -> Self {
        Self {
            kind: ItemKind::Media,
            body: asset.into(),
            caption,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub id: ContributionId,
    pub activity_id: ActivityId,
    pub learner_id: UserId,
    pub perspective_id: PerspectiveId,
    pub items: Vec<ContributionItem>,
    pub tags: BTreeSet<String>,
    pub sharing: Sharing,
    pub submitted_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Contribution {
    /// First TEXT body, or the first caption, trimmed to `max_chars`.
    pub fn excerpt(&self, max_chars: usize) -> Option<String> {
        let text = self
            .items
            .iter()
            .find(|i| i.kind == ItemKind::Text)
            .map(|i| i.body.as_str())
            .or_else(|| self.items.iter().find_map(|i| i.caption.as_deref()))?;
        let mut out: String = text.chars().take(max_chars).collect();
        if text.chars().count() > max_chars {
            out.push('…');
        }
        Some(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Learner,
    Moderator,
    Instructor,
}

impl Role {
    pub fn is_staff(self) -> bool {
        matches!(self, Role::Moderator | Role::Instructor)
    }
}

/// Who is looking at (or acting on) something.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Viewer {
    pub user_id: UserId,
    pub role: Role,
}

impl Viewer {
    pub fn learner(id: impl Into<UserId>) -> Self {
        Self { user_id: id.into(), role: Role::Learner }
    }

    pub fn moderator(id: impl Into<UserId>) -> Self {
        Self { user_id: id.into(), role: Role::Moderator }
    }

    pub fn instructor(id: impl Into<UserId>) -> Self {
        Self { user_id: id.into(), role: Role::Instructor }
    }

    pub fn is_staff(&self) -> bool {
        self.role.is_staff()
    }

    pub fn require_staff(&self) -> Result<()> {
        if self.is_staff() {
            Ok(())
        } else {
            Err(Error::Forbidden)
        }
    }
}

/// The visibility rule as a function of its three inputs.
pub fn visible(sharing: Sharing, is_author: bool, role: Role) -> bool {
    is_author || role.is_staff() || sharing.is_shared()
}

pub fn visible_to(contribution: &Contribution, viewer: &Viewer) -> bool {
    visible(
        contribution.sharing,
        contribution.learner_id == viewer.user_id,
        viewer.role,
    )
}

/// How an author is shown to a particular viewer.
///
/// Serializes as `{"label":"You","is_author":true}`, `{"name":..,"is_author":false}`
/// or `{"pseudonym":..,"is_author":false}`. The pseudonymous form carries no
/// learner id and no name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DisplayIdentity {
    You,
    Named(String),
    Pseudonym(String),
}

impl DisplayIdentity {
    pub fn label(&self) -> &str {
        match self {
            DisplayIdentity::You => "You",
            DisplayIdentity::Named(s) | DisplayIdentity::Pseudonym(s) => s,
        }
    }

    pub fn is_author(&self) -> bool {
        matches!(self, DisplayIdentity::You)
    }
}

impl Serialize for DisplayIdentity {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        match self {
            DisplayIdentity::You => map.serialize_entry("label", "You")?,
            DisplayIdentity::Named(name) => map.serialize_entry("name", name)?,
            DisplayIdentity::Pseudonym(p) => map.serialize_entry("pseudonym", p)?,
        }
        map.serialize_entry("is_author", &self.is_author())?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for DisplayIdentity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            label: Option<String>,
            name: Option<String>,
            pseudonym: Option<String>,
            #[serde(default)]
            is_author: bool,
        }
        let raw = Raw::deserialize(deserializer)?;
        match (raw.is_author, raw.name, raw.pseudonym, raw.label) {
            (true, _, _, _) => Ok(DisplayIdentity::You),
            (_, Some(name), None, _) => Ok(DisplayIdentity::Named(name)),
            (_, None, Some(p), _) => Ok(DisplayIdentity::Pseudonym(p)),
            _ => Err(serde::de::Error::custom("unrecognised author identity")),
        }
    }
}

const ADJECTIVES: [&str; 64] = [
    "amber", "brave", "calm", "clever", "cosmic", "crimson", "curious", "daring", "dusky",
    "eager", "electric", "fancy", "fearless", "frosty", "gentle", "gilded", "golden", "happy",
    "hidden", "humble", "icy", "jolly", "keen", "lively", "lucky", "lunar", "mellow", "misty",
    "nimble", "noble", "olive", "patient", "plucky", "polar", "quiet", "quick", "rapid", "rosy",
    "rustic", "sandy", "scarlet", "serene", "shy", "silent", "silver", "sleek", "snowy", "solar",
    "spry", "stellar", "stormy", "sunny", "swift", "tawny", "tidy", "twilight", "vivid", "wandering",
    "warm", "whimsical", "wild", "windy", "wise", "zesty",
];

const NOUNS: [&str; 64] = [
    "albatross", "badger", "beacon", "bison", "canyon", "cedar", "comet", "condor", "coral",
    "cricket", "delta", "dolphin", "ember", "falcon", "fern", "finch", "fjord", "fox", "gecko",
    "glacier", "harbor", "hazel", "heron", "ibis", "island", "jaguar", "kestrel", "koala", "lagoon",
    "lantern", "lark", "lynx", "maple", "meadow", "meteor", "moth", "nebula", "newt", "oak",
    "orchid", "osprey", "otter", "owl", "panda", "pebble", "pine", "quail", "raven", "reef",
    "river", "robin", "sparrow", "spruce", "summit", "tiger", "tundra", "valley", "walrus",
    "willow", "wombat", "wren", "yak", "zebra", "zephyr",
];

/// Derives stable, unlinkable pseudonyms from a server secret.
///
/// The handle is `adjective-noun-NNN` chosen from HMAC-SHA256 over
/// `activity_id 0x00 learner_id`, so the same learner gets one handle per
/// activity and different handles across activities. Nothing is stored.
#[derive(Clone)]
pub struct PseudonymKey(hmac::Key);

impl PseudonymKey {
    pub fn new(secret: &[u8]) -> Self {
        Self(hmac::Key::new(hmac::HMAC_SHA256, secret))
    }

    pub fn pseudonym(&self, learner: &UserId, activity: &ActivityId) -> String {
        let mut ctx = hmac::Context::with_key(&self.0);
        ctx.update(activity.as_str().as_bytes());
        ctx.update(&[0]);
        ctx.update(learner.as_str().as_bytes());
        let tag = ctx.sign();
        let b = tag.as_ref();
        let adjective = ADJECTIVES[b[0] as usize % ADJECTIVES.len()];
        let noun = NOUNS[b[1] as usize % NOUNS.len()];
        let number = u16::from_be_bytes([b[2], b[3]]) % 1000;
        format!("{adjective}-{noun}-{number:03}")
    }
}

impl std::fmt::Debug for PseudonymKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PseudonymKey(..)")
    }
}

/// Resolves the author label for `viewer`.
///
/// `display_name` is the author's real name, used only for NAMED
/// contributions and for staff looking at PRIVATE ones.
pub fn resolve_identity(
    contribution: &Contribution,
    viewer: &Viewer,
    display_name: &str,
    key: &PseudonymKey,
) -> Result<DisplayIdentity> {
    if !visible_to(contribution, viewer) {
        return Err(Error::NotVisible);
    }
    if contribution.learner_id == viewer.user_id {
        return Ok(DisplayIdentity::You);
    }
    Ok(match contribution.sharing {
        Sharing::Anonymous => DisplayIdentity::Pseudonym(
            key.pseudonym(&contribution.learner_id, &contribution.activity_id),
        ),
        Sharing::Named | Sharing::Private => DisplayIdentity::Named(display_name.to_owned()),
    })
}

/// Lowercases, trims and deduplicates tags; empty tags are dropped.
pub fn normalize_tags<I, S>(tags: I) -> Result<BTreeSet<String>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let set: BTreeSet<String> = tags
        .into_iter()
        .map(|t| t.as_ref().trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    if set.len() > MAX_TAGS {
        return Err(Error::TooManyTags(MAX_TAGS));
    }
    Ok(set)
}

/// Checks items against the perspective's allowed kinds and the per-kind
/// body rules. `media_exists` reports whether a MEDIA asset reference
/// resolves in the blob store.
pub fn validate_items(
    items: &[ContributionItem],
    perspective: &PerspectiveSpec,
    media_exists: &dyn Fn(&str) -> bool,
) -> Result<()> {
    if items.is_empty() {
        return Err(Error::EmptyItems);
    }
    for item in items {
        if !perspective.item_kinds_allowed.contains(&item.kind) {
            return Err(Error::KindNotAllowed(item.kind.as_str().into()));
        }
        if item.body.trim().is_empty() {
            return Err(Error::InvalidItem("item body is empty".into()));
        }
        match item.kind {
            ItemKind::Text => {}
            ItemKind::Link => {
                let url = url::Url::parse(item.body.trim())
                    .map_err(|e| Error::InvalidItem(format!("link is not an absolute URL: {e}")))?;
                if url.cannot_be_a_base() {
                    return Err(Error::InvalidItem("link is not an absolute URL".into()));
                }
            }
            ItemKind::Media => {
                if !media_exists(item.body.trim()) {
                    return Err(Error::InvalidItem(format!(
                        "unknown media asset `{}`",
                        item.body.trim()
                    )));
                }
            }
        }
    }
    Ok(())
}
