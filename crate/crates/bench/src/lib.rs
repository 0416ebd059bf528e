//! Workload generators shared by the benchmarks.

use perspectivesx_core::lti::oauth;
use perspectivesx_core::topics::TokenizedDoc;
use perspectivesx_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAUNCH_URL: &str = "https://px.example.org/lti/launch";

const WORDS: &[&str] = &[
    "price", "brand", "market", "supply", "customer", "loyalty", "risk", "growth", "channel", "margin", "design",
    "service", "quality", "export", "tariff", "partner", "digital", "platform", "retail", "cost", "trust", "story",
    "rival", "demand", "niche", "scale", "talent", "patent", "funding", "region",
];

/// `docs` documents of `len` tokens drawn from `vocabulary` word ids, each
/// document biased towards one of `clusters` disjoint slices of the vocabulary.
pub fn token_corpus(docs: usize, len: usize, vocabulary: usize, clusters: usize, seed: u64) -> (Vec<TokenizedDoc>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slice = vocabulary / clusters;
    let docs = (0..docs)
        .map(|d| {
            let base = (d % clusters) * slice;
            let tokens = (0..len)
                .map(|_| {
                    if rng.random_bool(0.8) {
                        base + rng.random_range(0..slice)
                    } else {
                        rng.random_range(0..vocabulary)
                    }
                })
                .collect();
            TokenizedDoc {
                contribution_id: ContributionId::new(format!("doc-{d}")),
                tokens,
            }
        })
        .collect();
    (docs, (0..vocabulary).map(|w| format!("w{w:04}")).collect())
}

/// A service holding one SELECT activity with `contributions` shared
/// contributions spread over the SWOT perspectives.
pub fn populated_service(contributions: usize, seed: u64) -> (Service, ActivityId, LineageKey) {
    let service = Service::open(ServiceOptions::in_memory(&[1u8; 32], LAUNCH_URL)).unwrap();
    let run = CourseRunId::new("run-bench");
    service
        .upsert_course(CourseContext {
            course_run_id: run.clone(),
            lti_context_id: "bench".into(),
            title: "Bench".into(),
            mode: CourseMode::SelfPaced,
        })
        .unwrap();
    let template = service.template(&TemplateId::new("builtin-swot")).unwrap();
    let activity = service
        .create_activity(&template.id, ActivityConfig::default(), &run, Some(LineageKey::new("bench")))
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..contributions {
        let learner = UserId::new(format!("learner-{i}"));
        let perspective = &template.perspectives[i % template.perspectives.len()].id;
        service.assign(&activity.id, &learner, Some(perspective)).unwrap();
        let text: Vec<&str> = (0..20).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
        let tags = vec![WORDS[rng.random_range(0..5)].to_owned()];
        let sharing = if rng.random_bool(0.5) { Sharing::Named } else { Sharing::Anonymous };
        service
            .submit(&activity.id, &learner, perspective, vec![ContributionItem::text(text.join(" "))], tags, sharing)
            .unwrap();
    }
    (service, activity.id, activity.lineage_key)
}

pub fn signed_launch(consumer: &str, secret: &str, nonce: &str, timestamp: i64) -> LaunchRequest {
    let mut params: Vec<(String, String)> = [
        ("lti_message_type", "basic-lti-launch-request"),
        ("lti_version", "LTI-1p0"),
        ("oauth_consumer_key", consumer),
        ("oauth_nonce", nonce),
        ("oauth_signature_method", "HMAC-SHA1"),
        ("oauth_version", "1.0"),
        ("resource_link_id", "rl-1"),
        ("context_id", "ctx-1"),
        ("user_id", "u-1"),
        ("roles", "Learner"),
        ("lis_person_name_full", "Ada Lovelace"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    params.push(("oauth_timestamp".into(), timestamp.to_string()));
    let base = oauth::signature_base_string("POST", LAUNCH_URL, &params).unwrap();
    params.push(("oauth_signature".into(), oauth::sign(&base, secret)));
    LaunchRequest {
        http_method: "POST".into(),
        launch_url: LAUNCH_URL.into(),
        form_params: params,
    }
}
