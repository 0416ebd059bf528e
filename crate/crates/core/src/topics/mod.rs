//! Topic clustering of shared contributions for scalable moderator feedback.

pub mod gibbs;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use gibbs::{complete_log_likelihood, CountMatrices, GibbsSampler};

use crate::error::{Error, Result};
use crate::ids::{ContributionId, FeedbackId, LineageKey, ModelId, UserId};
use crate::kb::Tokenizer;
use crate::model::ItemKind;
use crate::submissions::Contribution;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub contribution_id: ContributionId,
    pub tokens: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub docs: Vec<TokenizedDoc>,
    pub vocabulary: Vec<String>,
}

/// Tokenizes TEXT bodies and captions of shared contributions. The
/// vocabulary is sorted lexicographically and documents left empty after
/// stopword removal are dropped.
pub fn tokenize_corpus<'a>(
    tokenizer: &Tokenizer,
    contributions: impl IntoIterator<Item = &'a Contribution>,
) -> Result<Corpus> {
    let mut raw: Vec<(ContributionId, Vec<String>)> = Vec::new();
    for c in contributions {
        if !c.sharing.is_shared() {
            continue;
        }
        let mut tokens = Vec::new();
        for item in &c.items {
            if item.kind == ItemKind::Text {
                tokens.extend(tokenizer.tokens(&item.body));
            }
            if let Some(caption) = &item.caption {
                tokens.extend(tokenizer.tokens(caption));
            }
        }
        if !tokens.is_empty() {
            raw.push((c.id.clone(), tokens));
        }
    }
    if raw.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocabulary: Vec<String> = raw
        .iter()
        .flat_map(|(_, t)| t.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let lookup: BTreeMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let docs = raw
        .iter()
        .map(|(id, tokens)| TokenizedDoc {
            contribution_id: id.clone(),
            tokens: tokens.iter().map(|t| lookup[t.as_str()]).collect(),
        })
        .collect();
    Ok(Corpus { docs, vocabulary })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Service-level defaults for training runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaDefaults {
    pub k_cap: usize,
    /// `None` means 50/K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub min_docs: usize,
}

impl Default for LdaDefaults {
    fn default() -> Self {
        Self {
            k_cap: 20,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            min_docs: 10,
        }
    }
}

impl LdaDefaults {
    /// K = max(2, round(D/20)) capped at `k_cap`.
    pub fn topics_for(&self, docs: usize) -> usize {
        let k = ((docs as f64) / 20.0).round() as usize;
        k.max(2).min(self.k_cap.max(1))
    }

    pub fn params(&self, docs: usize, topics: Option<usize>, iterations: Option<usize>, seed: u64) -> TrainParams {
        let topics = topics.unwrap_or_else(|| self.topics_for(docs));
        TrainParams {
            topics,
            alpha: self.alpha.unwrap_or(50.0 / topics as f64),
            beta: self.beta,
            iterations: iterations.unwrap_or(self.iterations),
            seed,
        }
    }
}

/// An immutable trained model snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub model_id: ModelId,
    pub lineage_key: LineageKey,
    #[serde(rename = "K")]
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocabulary: Vec<String>,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub doc_ids: Vec<ContributionId>,
    pub iterations: usize,
    pub seed: u64,
    pub trained_at: DateTime<Utc>,
}

impl TopicModel {
    /// argmax of the document's θ row, ties to the lowest topic id.
    pub fn dominant_topic(&self, doc: usize) -> usize {
        argmax(&self.theta[doc])
    }

    pub fn dominant_topics(&self) -> BTreeMap<ContributionId, usize> {
        self.doc_ids
            .iter()
            .enumerate()
            .map(|(d, id)| (id.clone(), self.dominant_topic(d)))
            .collect()
    }

    pub fn dominant_topic_of(&self, id: &ContributionId) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == id).map(|d| self.dominant_topic(d))
    }

    pub fn rows_normalized(&self, tolerance: f64) -> bool {
        self.phi
            .iter()
            .chain(self.theta.iter())
            .all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= tolerance && row.iter().all(|&p| p > 0.0))
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = k;
        }
    }
    best
}

fn check_params(docs: usize, params: &TrainParams) -> Result<()> {
    if params.topics < 1 {
        return Err(Error::BadHyperparameter("K must be at least 1".into()));
    }
    if docs < params.topics {
        return Err(Error::TooFewDocs { needed: params.topics, have: docs });
    }
    if params.iterations < 1 {
        return Err(Error::BadHyperparameter("iterations must be at least 1".into()));
    }
    for (name, value) in [("alpha", params.alpha), ("beta", params.beta)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::BadHyperparameter(format!("{name} must be positive, got {value}")));
        }
    }
    Ok(())
}

/// Trains a model over `docs`; the returned model carries a fresh id and an
/// empty lineage for the caller to fill in.
pub fn train(docs: &[TokenizedDoc], vocabulary: &[String], params: &TrainParams) -> Result<TopicModel> {
    check_params(docs.len(), params)?;
    let token_lists: Vec<Vec<usize>> = docs.iter().map(|d| d.tokens.clone()).collect();
    if let Some(bad) = token_lists.iter().flatten().find(|&&w| w >= vocabulary.len()) {
        return Err(Error::InvalidInput(format!("token index {bad} outside vocabulary")));
    }
    let mut sampler = GibbsSampler::new(
        &token_lists,
        vocabulary.len(),
        params.topics,
        params.alpha,
        params.beta,
        params.seed,
    );
    for _ in 0..params.iterations {
        sampler.sweep();
    }
    let model = TopicModel {
        model_id: ModelId::generate(),
        lineage_key: LineageKey::new(""),
        topics: params.topics,
        alpha: params.alpha,
        beta: params.beta,
        vocabulary: vocabulary.to_vec(),
        phi: sampler.phi(),
        theta: sampler.theta(),
        doc_ids: docs.iter().map(|d| d.contribution_id.clone()).collect(),
        iterations: params.iterations,
        seed: params.seed,
        trained_at: Utc::now(),
    };
    assert!(model.rows_normalized(1e-9), "phi/theta rows must sum to one");
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermWeight {
    pub term: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic_id: usize,
    pub top_terms: Vec<TermWeight>,
    pub doc_count: usize,
    pub sample_excerpts: Vec<String>,
}

/// Per-topic top terms, member counts and up to three excerpts.
/// `excerpt` returns the opening snippet of a member document, or `None`
/// if it should not be shown (e.g. it has since been made private).
pub fn summarize(
    model: &TopicModel,
    top_n: usize,
    excerpt: impl Fn(&ContributionId) -> Option<String>,
) -> Result<Vec<TopicSummary>> {
    if top_n < 1 || top_n > model.vocabulary.len() {
        return Err(Error::BadTopN(model.vocabulary.len()));
    }
    let mut members: Vec<Vec<&ContributionId>> = vec![Vec::new(); model.topics];
    for (d, id) in model.doc_ids.iter().enumerate() {
        members[model.dominant_topic(d)].push(id);
    }
    Ok((0..model.topics)
        .map(|k| {
            let mut order: Vec<usize> = (0..model.vocabulary.len()).collect();
            // stable: equal probabilities keep vocabulary order
            order.sort_by(|&a, &b| model.phi[k][b].total_cmp(&model.phi[k][a]));
            TopicSummary {
                topic_id: k,
                top_terms: order
                    .into_iter()
                    .take(top_n)
                    .map(|w| TermWeight {
                        term: model.vocabulary[w].clone(),
                        probability: model.phi[k][w],
                    })
                    .collect(),
                doc_count: members[k].len(),
                sample_excerpts: members[k].iter().filter_map(|id| excerpt(id)).take(3).collect(),
            }
        })
        .collect())
}

/// Staff feedback delivered to every learner in one topic cluster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    pub id: FeedbackId,
    pub lineage_key: LineageKey,
    pub model_id: ModelId,
    pub topic_id: usize,
    pub message: String,
    pub sender_id: UserId,
    pub created_at: DateTime<Utc>,
    pub recipients: Vec<UserId>,
    pub contribution_ids: Vec<ContributionId>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ActivityId, PerspectiveId};
    use crate::submissions::{ContributionItem, Sharing};

    fn contribution(id: &str, text: &str, sharing: Sharing) -> Contribution {
        Contribution {
            id: ContributionId::new(id),
            activity_id: ActivityId::new("a"),
            learner_id: UserId::new("l"),
            perspective_id: PerspectiveId::new("p"),
            items: vec![ContributionItem::text(text)],
            tags: Default::default(),
            sharing,
            submitted_at: Utc::now(),
            updated_at: Utc::now(),
        }
    }

    fn model_with_phi(vocab: &[&str], phi: Vec<f64>) -> TopicModel {
        TopicModel {
            model_id: ModelId::new("m"),
            lineage_key: LineageKey::new("l"),
            topics: 1,
            alpha: 1.0,
            beta: 0.01,
            vocabulary: vocab.iter().map(|s| s.to_string()).collect(),
            phi: vec![phi],
            theta: vec![vec![1.0]],
            doc_ids: vec![ContributionId::new("c")],
            iterations: 1,
            seed: 0,
            trained_at: Utc::now(),
        }
    }

    #[test]
    fn tokenize_single_document() {
        let docs = [contribution("c", "solar solar wind", Sharing::Named)];
        let corpus = tokenize_corpus(&Tokenizer::default(), &docs).unwrap();
        assert_eq!(corpus.vocabulary, ["solar", "wind"]);
        assert_eq!(corpus.docs[0].tokens, [0, 0, 1]);
    }

    #[test]
    fn tokenize_skips_private_and_empty_docs() {
        let docs = [
            contribution("a", "solar power", Sharing::Named),
            contribution("b", "hidden idea", Sharing::Private),
            contribution("c", "the and of", Sharing::Anonymous),
        ];
        let corpus = tokenize_corpus(&Tokenizer::default(), &docs).unwrap();
        let ids: Vec<_> = corpus.docs.iter().map(|d| d.contribution_id.as_str()).collect();
        assert_eq!(ids, ["a"]);
        assert_eq!(corpus.vocabulary, ["power", "solar"]);

        let none = [contribution("b", "hidden", Sharing::Private)];
        assert_eq!(tokenize_corpus(&Tokenizer::default(), &none), Err(Error::EmptyCorpus));
    }

    #[test]
    fn train_rejects_bad_input() {
        let p = |topics, alpha, iterations| TrainParams { topics, alpha, beta: 0.01, iterations, seed: 0 };
        assert!(matches!(train(&[], &[], &p(1, 1.0, 10)), Err(Error::TooFewDocs { .. })));
        let docs = vec![TokenizedDoc { contribution_id: ContributionId::new("a"), tokens: vec![0] }];
        let vocab = vec!["x".to_string()];
        assert!(matches!(train(&docs, &vocab, &p(2, 1.0, 10)), Err(Error::TooFewDocs { .. })));
        assert!(matches!(train(&docs, &vocab, &p(1, 0.0, 10)), Err(Error::BadHyperparameter(_))));
        assert!(matches!(train(&docs, &vocab, &p(1, 1.0, 0)), Err(Error::BadHyperparameter(_))));
        assert!(matches!(train(&docs, &vocab, &p(0, 1.0, 1)), Err(Error::BadHyperparameter(_))));
    }

    #[test]
    fn single_topic_model_orders_by_frequency() {
        let docs = [contribution("c", "solar solar wind", Sharing::Named)];
        let corpus = tokenize_corpus(&Tokenizer::default(), &docs).unwrap();
        let params = TrainParams { topics: 1, alpha: 0.5, beta: 0.01, iterations: 5, seed: 3 };
        let model = train(&corpus.docs, &corpus.vocabulary, &params).unwrap();
        let summary = summarize(&model, 2, |_| Some("solar solar wind".into())).unwrap();
        let terms: Vec<_> = summary[0].top_terms.iter().map(|t| t.term.as_str()).collect();
        assert_eq!(terms, ["solar", "wind"]);
        assert!(summary[0].top_terms[0].probability > summary[0].top_terms[1].probability);
        assert_eq!(summary[0].doc_count, 1);
        assert_eq!(summary[0].sample_excerpts, ["solar solar wind"]);
    }

    #[test]
    fn summary_orders_by_phi_with_vocabulary_tiebreak() {
        let model = model_with_phi(&["apple", "bee", "cat"], vec![0.5, 0.3, 0.2]);
        let terms: Vec<_> = summarize(&model, 2, |_| None).unwrap()[0]
            .top_terms
            .iter()
            .map(|t| t.term.clone())
            .collect();
        assert_eq!(terms, ["apple", "bee"]);

        let tied = model_with_phi(&["apple", "bee", "cat"], vec![0.2, 0.4, 0.4]);
        let terms: Vec<_> = summarize(&tied, 3, |_| None).unwrap()[0]
            .top_terms
            .iter()
            .map(|t| t.term.clone())
            .collect();
        assert_eq!(terms, ["bee", "cat", "apple"]);

        assert_eq!(summarize(&model, 0, |_| None), Err(Error::BadTopN(3)));
        assert_eq!(summarize(&model, 4, |_| None), Err(Error::BadTopN(3)));
    }

    #[test]
    fn default_topic_count() {
        let d = LdaDefaults::default();
        assert_eq!(d.topics_for(10), 2);
        assert_eq!(d.topics_for(70), 4);
        assert_eq!(d.topics_for(1000), 20);
        let p = d.params(70, None, None, 1);
        assert_eq!(p.alpha, 12.5);
        assert_eq!(p.beta, 0.01);
        assert_eq!(p.iterations, 1000);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.25, 0.5, 0.25]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
