//! Postings table and the inverted index built over it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tokenizer::Tokenizer;
use crate::ids::ContributionId;
use crate::model::ItemKind;
use crate::submissions::Contribution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PostingField {
    Body,
    Caption,
    Tag,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexPosting {
    pub token: String,
    pub contribution_id: ContributionId,
    pub field: PostingField,
    pub positions: Vec<u32>,
}

/// Postings for one contribution. TEXT and LINK bodies go to BODY, captions
/// to CAPTION, tags verbatim to TAG. Offsets run across items within a
/// field. PRIVATE contributions produce nothing.
pub fn build_postings(tokenizer: &Tokenizer, contribution: &Contribution) -> Vec<IndexPosting> {
    if !contribution.sharing.is_shared() {
        return Vec::new();
    }
    let mut grouped: BTreeMap<(PostingField, String), Vec<u32>> = BTreeMap::new();
    let mut body_offset = 0u32;
    let mut caption_offset = 0u32;
    for item in &contribution.items {
        if matches!(item.kind, ItemKind::Text | ItemKind::Link) {
            for (pos, token) in tokenizer.positioned(&item.body) {
                grouped.entry((PostingField::Body, token)).or_default().push(body_offset + pos);
            }
            body_offset += tokenizer.split(&item.body).count() as u32;
        }
        if let Some(caption) = &item.caption {
            for (pos, token) in tokenizer.positioned(caption) {
                grouped
                    .entry((PostingField::Caption, token))
                    .or_default()
                    .push(caption_offset + pos);
            }
            caption_offset += tokenizer.split(caption).count() as u32;
        }
    }
    for tag in &contribution.tags {
        grouped.entry((PostingField::Tag, tag.clone())).or_default();
    }
    grouped
        .into_iter()
        .map(|((field, token), positions)| IndexPosting {
            token,
            contribution_id: contribution.id.clone(),
            field,
            positions,
        })
        .collect()
}

type TermKey = (PostingField, String);

/// Term → contribution → positions, plus the reverse map for removal.
///
/// Serializes as the flat postings table; the lookup maps are rebuilt on
/// load.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InvertedIndex {
    terms: BTreeMap<TermKey, BTreeMap<ContributionId, Vec<u32>>>,
    docs: BTreeMap<ContributionId, Vec<TermKey>>,
}

impl InvertedIndex {
    /// Replaces every posting of `id` with `postings`; returns how many were
    /// written.
    pub fn replace(&mut self, id: &ContributionId, postings: Vec<IndexPosting>) -> usize {
        self.remove(id);
        let written = postings.len();
        let mut keys = Vec::with_capacity(written);
        for p in postings {
            debug_assert_eq!(&p.contribution_id, id);
            let key = (p.field, p.token);
            self.terms
                .entry(key.clone())
                .or_default()
                .insert(p.contribution_id, p.positions);
            keys.push(key);
        }
        if !keys.is_empty() {
            keys.sort();
            self.docs.insert(id.clone(), keys);
        }
        written
    }

    pub fn remove(&mut self, id: &ContributionId) {
        let Some(keys) = self.docs.remove(id) else {
            return;
        };
        for key in keys {
            if let Some(posting) = self.terms.get_mut(&key) {
                posting.remove(id);
                if posting.is_empty() {
                    self.terms.remove(&key);
                }
            }
        }
    }

    pub fn postings_for(&self, id: &ContributionId) -> Vec<IndexPosting> {
        let mut out: Vec<IndexPosting> = self
            .docs
            .get(id)
            .into_iter()
            .flatten()
            .map(|key| IndexPosting {
                token: key.1.clone(),
                contribution_id: id.clone(),
                field: key.0,
                positions: self.terms[key][id].clone(),
            })
            .collect();
        out.sort();
        out
    }

    pub fn len(&self) -> usize {
        self.terms.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn ids_for(&self, field: PostingField, token: &str) -> impl Iterator<Item = &ContributionId> {
        self.terms
            .get(&(field, token.to_owned()))
            .into_iter()
            .flat_map(BTreeMap::keys)
    }

    /// Contributions whose BODY or CAPTION contains every token.
    pub fn match_text(&self, tokens: &[String]) -> BTreeSet<ContributionId> {
        self.intersect(tokens.iter().map(|t| {
            self.ids_for(PostingField::Body, t)
                .chain(self.ids_for(PostingField::Caption, t))
                .cloned()
                .collect()
        }))
    }

    /// Contributions carrying every tag.
    pub fn match_tags<'a>(&self, tags: impl IntoIterator<Item = &'a String>) -> BTreeSet<ContributionId> {
        self.intersect(
            tags.into_iter()
                .map(|t| self.ids_for(PostingField::Tag, t).cloned().collect()),
        )
    }

    fn intersect(&self, sets: impl Iterator<Item = BTreeSet<ContributionId>>) -> BTreeSet<ContributionId> {
        let mut sets: Vec<BTreeSet<ContributionId>> = sets.collect();
        sets.sort_by_key(BTreeSet::len);
        let mut iter = sets.into_iter();
        let Some(mut acc) = iter.next() else {
            return BTreeSet::new();
        };
        for set in iter {
            acc.retain(|id| set.contains(id));
            if acc.is_empty() {
                break;
            }
        }
        acc
    }

    pub fn all_postings(&self) -> Vec<IndexPosting> {
        self.docs.keys().flat_map(|id| self.postings_for(id)).collect()
    }
}

impl Serialize for InvertedIndex {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.all_postings().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for InvertedIndex {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<IndexPosting>::deserialize(deserializer)?;
        let mut by_doc: BTreeMap<ContributionId, Vec<IndexPosting>> = BTreeMap::new();
        for row in rows {
            by_doc.entry(row.contribution_id.clone()).or_default().push(row);
        }
        let mut index = InvertedIndex::default();
        for (id, postings) in by_doc {
            index.replace(&id, postings);
        }
        Ok(index)
    }
}
