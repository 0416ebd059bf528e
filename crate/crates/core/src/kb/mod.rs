//! Lineage-wide knowledge base: shared contributions from every run of an
//! activity, searchable by free text and tags.
//!
//! Matching is boolean (AND over text tokens, AND over tags) and results are
//! ordered highlighted-first, then newest-first. There is no relevance
//! ranking.

mod index;
mod tokenizer;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use index::{build_postings, IndexPosting, InvertedIndex, PostingField};
pub use tokenizer::Tokenizer;

use crate::error::{Error, Result};
use crate::ids::{ContributionId, CourseRunId, LineageKey, PerspectiveId};
use crate::store::Database;
use crate::submissions::{resolve_identity, visible_to, Contribution, ContributionItem, DisplayIdentity, PseudonymKey, Viewer};

pub const MAX_PAGE: usize = 100;
pub const RELATED_CAP: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbEntry {
    pub contribution_id: ContributionId,
    pub lineage_key: LineageKey,
    pub course_run_id: CourseRunId,
    pub perspective_id: PerspectiveId,
    pub perspective_name: String,
    pub author: DisplayIdentity,
    pub items: Vec<ContributionItem>,
    pub tags: BTreeSet<String>,
    pub highlighted: bool,
    pub dominant_topic: Option<usize>,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbQuery {
    pub lineage_key: LineageKey,
    pub viewer: Viewer,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub tags: Option<BTreeSet<String>>,
    #[serde(default)]
    pub perspective_id: Option<PerspectiveId>,
    #[serde(default)]
    pub highlighted_only: bool,
    #[serde(default)]
    pub topic_id: Option<usize>,
    #[serde(default)]
    pub offset: usize,
    #[serde(default = "default_limit")]
    pub limit: usize,
}

fn default_limit() -> usize {
    20
}

impl KbQuery {
    pub fn new(lineage_key: LineageKey, viewer: Viewer) -> Self {
        Self {
            lineage_key,
            viewer,
            text: None,
            tags: None,
            perspective_id: None,
            highlighted_only: false,
            topic_id: None,
            offset: 0,
            limit: default_limit(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbPage {
    pub entries: Vec<KbEntry>,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Related {
    pub similar: Vec<KbEntry>,
    pub opposing: Vec<KbEntry>,
}

/// Per-query lookup state shared by entry construction.
pub struct KbView<'a> {
    db: &'a Database,
    pseudonyms: &'a PseudonymKey,
    topics: BTreeMap<ContributionId, usize>,
}

impl<'a> KbView<'a> {
    pub fn new(db: &'a Database, pseudonyms: &'a PseudonymKey, lineage: &LineageKey) -> Self {
        let topics = db.latest_model(lineage).map(|m| m.dominant_topics()).unwrap_or_default();
        Self { db, pseudonyms, topics }
    }

    pub fn dominant_topic(&self, id: &ContributionId) -> Option<usize> {
        self.topics.get(id).copied()
    }

    pub fn has_model(&self) -> bool {
        !self.topics.is_empty()
    }

    pub fn is_highlighted(&self, id: &ContributionId) -> bool {
        self.db.highlights.contains_key(id)
    }

    pub fn entry(&self, c: &Contribution, viewer: &Viewer) -> Result<KbEntry> {
        let (activity, template) = self.db.activity_template(&c.activity_id)?;
        let author = resolve_identity(c, viewer, &self.db.display_name(&c.learner_id), self.pseudonyms)?;
        Ok(KbEntry {
            contribution_id: c.id.clone(),
            lineage_key: activity.lineage_key.clone(),
            course_run_id: activity.course_run_id.clone(),
            perspective_id: c.perspective_id.clone(),
            perspective_name: template
                .perspective(&c.perspective_id)
                .map(|p| p.name.clone())
                .unwrap_or_default(),
            author,
            items: c.items.clone(),
            tags: c.tags.clone(),
            highlighted: self.is_highlighted(&c.id),
            dominant_topic: self.dominant_topic(&c.id),
            submitted_at: c.submitted_at,
        })
    }

    fn order(&self, list: &mut [&Contribution]) {
        list.sort_by(|a, b| {
            self.is_highlighted(&b.id)
                .cmp(&self.is_highlighted(&a.id))
                .then(b.submitted_at.cmp(&a.submitted_at))
                .then(a.id.cmp(&b.id))
        });
    }
}

/// The contributions matching every filter, unpaged and unordered. Only
/// shared contributions are ever considered.
pub fn matching<'a>(db: &'a Database, tokenizer: &Tokenizer, view: &KbView<'_>, q: &KbQuery) -> Vec<&'a Contribution> {
    let mut candidates: Option<BTreeSet<ContributionId>> = None;
    if let Some(text) = &q.text {
        let tokens: Vec<String> = tokenizer.tokens(text).into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if !tokens.is_empty() {
            candidates = Some(db.index.match_text(&tokens));
        }
    }
    if let Some(tags) = &q.tags {
        let tags: BTreeSet<String> = tags
            .iter()
            .map(|t| t.trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        if !tags.is_empty() {
            let by_tag = db.index.match_tags(&tags);
            candidates = Some(match candidates {
                Some(c) => c.intersection(&by_tag).cloned().collect(),
                None => by_tag,
            });
        }
    }
    let pool: Box<dyn Iterator<Item = &Contribution>> = match candidates {
        Some(ids) => Box::new(ids.into_iter().filter_map(|id| db.contributions.get(&id)).collect::<Vec<_>>().into_iter()),
        None => Box::new(db.lineage_contributions(&q.lineage_key)),
    };
    pool.filter(|c| c.sharing.is_shared())
        .filter(|c| db.lineage_of(c) == Some(&q.lineage_key))
        .filter(|c| visible_to(c, &q.viewer))
        .filter(|c| q.perspective_id.as_ref().is_none_or(|p| &c.perspective_id == p))
        .filter(|c| !q.highlighted_only || view.is_highlighted(&c.id))
        .filter(|c| q.topic_id.is_none_or(|t| view.dominant_topic(&c.id) == Some(t)))
        .collect()
}

pub fn query(db: &Database, tokenizer: &Tokenizer, pseudonyms: &PseudonymKey, q: &KbQuery) -> Result<KbPage> {
    if !(1..=MAX_PAGE).contains(&q.limit) {
        return Err(Error::BadPage(q.limit));
    }
    let view = KbView::new(db, pseudonyms, &q.lineage_key);
    let mut hits = matching(db, tokenizer, &view, q);
    view.order(&mut hits);
    let total = hits.len();
    let entries = hits
        .into_iter()
        .skip(q.offset)
        .take(q.limit)
        .map(|c| view.entry(c, &q.viewer))
        .collect::<Result<Vec<_>>>()?;
    Ok(KbPage {
        entries,
        total,
        offset: q.offset,
        limit: q.limit,
    })
}

/// Similar and opposing views for one contribution.
///
/// Similar: same perspective and, in order of availability, the same
/// dominant topic, at least one shared tag, or nothing further. Opposing:
/// the template-declared opposite perspective. Both newest first, capped.
pub fn related(db: &Database, pseudonyms: &PseudonymKey, id: &ContributionId, viewer: &Viewer) -> Result<Related> {
    let source = db.contribution(id)?;
    if !visible_to(source, viewer) {
        return Err(Error::NotVisible);
    }
    let (activity, template) = db.activity_template(&source.activity_id)?;
    let lineage = activity.lineage_key.clone();
    let view = KbView::new(db, pseudonyms, &lineage);
    let opposing_id = template.opposing(&source.perspective_id).map(|p| p.id.clone());
    let source_topic = view.dominant_topic(&source.id);

    let peers: Vec<&Contribution> = db
        .lineage_contributions(&lineage)
        .filter(|c| c.id != source.id && c.sharing.is_shared() && visible_to(c, viewer))
        .collect();

    let mut similar: Vec<&Contribution> = peers
        .iter()
        .copied()
        .filter(|c| c.perspective_id == source.perspective_id)
        .filter(|c| match source_topic {
            Some(topic) => view.dominant_topic(&c.id) == Some(topic),
            None if !source.tags.is_empty() => !c.tags.is_disjoint(&source.tags),
            None => true,
        })
        .collect();
    let mut opposing: Vec<&Contribution> = match &opposing_id {
        Some(o) => peers.iter().copied().filter(|c| &c.perspective_id == o).collect(),
        None => Vec::new(),
    };
    let newest = |list: &mut Vec<&Contribution>| {
        list.sort_by(|a, b| b.submitted_at.cmp(&a.submitted_at).then(a.id.cmp(&b.id)));
        list.truncate(RELATED_CAP);
    };
    newest(&mut similar);
    newest(&mut opposing);
    Ok(Related {
        similar: similar.into_iter().map(|c| view.entry(c, viewer)).collect::<Result<_>>()?,
        opposing: opposing.into_iter().map(|c| view.entry(c, viewer)).collect::<Result<_>>()?,
    })
}

/// Staff view of every shared entry in a lineage, oldest first.
pub fn export_entries(db: &Database, pseudonyms: &PseudonymKey, lineage: &LineageKey, staff: &Viewer) -> Result<Vec<KbEntry>> {
    staff.require_staff()?;
    if !db.lineage_exists(lineage) {
        return Err(Error::UnknownLineage(lineage.to_string()));
    }
    let view = KbView::new(db, pseudonyms, lineage);
    let mut shared: Vec<&Contribution> = db.lineage_contributions(lineage).filter(|c| c.sharing.is_shared()).collect();
    shared.sort_by(|a, b| a.submitted_at.cmp(&b.submitted_at).then(a.id.cmp(&b.id)));
    shared.into_iter().map(|c| view.entry(c, staff)).collect()
}
