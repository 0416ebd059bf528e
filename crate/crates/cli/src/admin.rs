//! Operational commands that work on the store directly, without a session.

use std::io::Write;

use anyhow::Context;
use perspectivesx_core::service::{ConsumerSummary, TrainRequest};
use perspectivesx_core::*;

/// Acting identity for admin commands that need a staff viewer.
pub fn operator() -> Viewer {
    Viewer::instructor("admin-cli")
}

/// Registers a consumer. Without `secret` a random one is generated; the
/// caller is responsible for handing it to the LMS administrator once.
pub fn add_consumer(service: &Service, key: &str, label: &str, secret: Option<String>) -> anyhow::Result<(ConsumerSummary, String)> {
    let secret = match secret {
        Some(s) if s.trim().is_empty() => anyhow::bail!("consumer secret is empty"),
        Some(s) => s.trim().to_owned(),
        None => generate_secret(),
    };
    let summary = service.add_consumer(key, &secret, label)?;
    Ok((summary, secret))
}

fn generate_secret() -> String {
    let bytes: [u8; 24] = rand::random();
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn train_topics(service: &Service, lineage: &str, request: &TrainRequest, top_n: usize, out: &mut dyn Write) -> anyhow::Result<TopicModel> {
    let lineage = LineageKey::new(lineage);
    let model = service.train_topics(&operator(), &lineage, request)?;
    writeln!(out, "model {} K={} docs={} seed={}", model.model_id, model.topics, model.doc_ids.len(), model.seed)?;
    if let Some(overview) = service.topic_overview(&operator(), &lineage, top_n.min(model.vocabulary.len()).max(1))? {
        for s in overview.summaries {
            let terms: Vec<&str> = s.top_terms.iter().map(|t| t.term.as_str()).collect();
            writeln!(out, "topic {} ({} docs): {}", s.topic_id, s.doc_count, terms.join(" "))?;
        }
    }
    Ok(model)
}

pub fn export_kb(service: &Service, lineage: &str, out: &mut dyn Write) -> anyhow::Result<usize> {
    let n = service
        .export_knowledge_base(&LineageKey::new(lineage), &operator(), out)
        .with_context(|| format!("exporting lineage `{lineage}`"))?;
    out.flush()?;
    Ok(n)
}
