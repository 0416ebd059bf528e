#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use perspectivesx_core::lti::oauth;
use perspectivesx_core::passback::TransportError;
use perspectivesx_core::topics::TokenizedDoc;
use perspectivesx_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const START: i64 = 1_700_000_000;
pub const SECRET: &[u8] = b"test-server-secret-0123456789abcdef";
pub const LAUNCH_URL: &str = "https://tool.example.edu/lti/launch";

pub struct World {
    pub service: Service,
    pub clock: ManualClock,
    pub run: CourseRunId,
}

impl World {
    pub fn new() -> Self {
        Self::with_options(ServiceOptions::in_memory(SECRET, LAUNCH_URL))
    }

    pub fn with_options(options: ServiceOptions) -> Self {
        let clock = ManualClock::at_unix(START);
        let service = Service::with_clock(options, Arc::new(clock.clone())).unwrap();
        let run = add_run(&service, "run-1");
        Self { service, clock, run }
    }

    pub fn tick(&self) {
        self.clock.advance(chrono::Duration::seconds(1));
    }

    pub fn activity(&self, policy: ContributionPolicy, curation: bool) -> Activity {
        let config = ActivityConfig {
            contribution_policy: policy,
            curation_enabled: curation,
            ..ActivityConfig::default()
        };
        self.service
            .create_activity(&TemplateId::new("builtin-swot"), config, &self.run, None)
            .unwrap()
    }
}

pub fn add_run(service: &Service, id: &str) -> CourseRunId {
    let run = CourseRunId::new(id);
    service
        .upsert_course(CourseContext {
            course_run_id: run.clone(),
            lti_context_id: format!("ctx-{id}"),
            title: format!("Course {id}"),
            mode: CourseMode::Paced,
        })
        .unwrap();
    run
}

pub fn text(body: &str) -> Vec<ContributionItem> {
    vec![ContributionItem::text(body)]
}

pub fn p(id: &str) -> PerspectiveId {
    PerspectiveId::new(id)
}

pub const SWOT: [&str; 4] = ["swot-strengths", "swot-weaknesses", "swot-opportunities", "swot-threats"];

// ---- visibility oracle ---------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Who {
    Author,
    OtherLearner,
    Moderator,
    Instructor,
}

pub const WHO: [Who; 4] = [Who::Author, Who::OtherLearner, Who::Moderator, Who::Instructor];

/// The documented rule written out row by row.
pub fn expected_visibility(sharing: Sharing, who: Who) -> bool {
    match (sharing, who) {
        (Sharing::Private, Who::Author) => true,
        (Sharing::Private, Who::OtherLearner) => false,
        (Sharing::Private, Who::Moderator) => true,
        (Sharing::Private, Who::Instructor) => true,
        (Sharing::Anonymous, _) => true,
        (Sharing::Named, _) => true,
    }
}

// ---- search oracle -------------------------------------------------------

/// Stopwords read straight from the shipped list file.
pub fn oracle_stopwords() -> BTreeSet<String> {
    include_str!("../../src/kb/stopwords.txt")
        .lines()
        .map(|l| l.split('#').next().unwrap().trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn oracle_tokens(text: &str, stopwords: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut current = String::new();
    for ch in text.chars().chain(std::iter::once(' ')) {
        if ch.is_alphanumeric() {
            current.push(ch);
        } else if !current.is_empty() {
            let token = current.to_lowercase();
            if !stopwords.contains(&token) {
                out.insert(token);
            }
            current.clear();
        }
    }
    out
}

/// Everything a linear scan needs, copied out of the store.
pub struct ScanData {
    pub contributions: Vec<Contribution>,
    pub lineage_of_activity: BTreeMap<ActivityId, LineageKey>,
    pub highlighted: BTreeSet<ContributionId>,
    pub topics: BTreeMap<LineageKey, BTreeMap<ContributionId, usize>>,
}

impl ScanData {
    pub fn capture(service: &Service) -> Self {
        service.with_db(|db| ScanData {
            contributions: db.contributions.values().cloned().collect(),
            lineage_of_activity: db
                .activities
                .values()
                .map(|a| (a.id.clone(), a.lineage_key.clone()))
                .collect(),
            highlighted: db.highlights.keys().cloned().collect(),
            topics: db
                .published_models
                .iter()
                .map(|(l, m)| (l.clone(), db.models[m].dominant_topics()))
                .collect(),
        })
    }
}

pub fn oracle_visible(c: &Contribution, viewer: &Viewer) -> bool {
    let who = if c.learner_id == viewer.user_id {
        Who::Author
    } else {
        match viewer.role {
            Role::Learner => Who::OtherLearner,
            Role::Moderator => Who::Moderator,
            Role::Instructor => Who::Instructor,
        }
    };
    expected_visibility(c.sharing, who)
}

pub fn oracle_search(data: &ScanData, q: &KbQuery, stopwords: &BTreeSet<String>) -> BTreeSet<ContributionId> {
    let wanted_text = q.text.as_deref().map(|t| oracle_tokens(t, stopwords)).unwrap_or_default();
    let wanted_tags: BTreeSet<String> = q
        .tags
        .iter()
        .flatten()
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    let topics = data.topics.get(&q.lineage_key);
    data.contributions
        .iter()
        .filter(|c| data.lineage_of_activity.get(&c.activity_id) == Some(&q.lineage_key))
        .filter(|c| c.sharing != Sharing::Private)
        .filter(|c| oracle_visible(c, &q.viewer))
        .filter(|c| {
            let mut have = BTreeSet::new();
            for item in &c.items {
                if item.kind != ItemKind::Media {
                    have.extend(oracle_tokens(&item.body, stopwords));
                }
                if let Some(caption) = &item.caption {
                    have.extend(oracle_tokens(caption, stopwords));
                }
            }
            wanted_text.is_subset(&have)
        })
        .filter(|c| wanted_tags.is_subset(&c.tags))
        .filter(|c| q.perspective_id.as_ref().is_none_or(|p| &c.perspective_id == p))
        .filter(|c| !q.highlighted_only || data.highlighted.contains(&c.id))
        .filter(|c| match q.topic_id {
            None => true,
            Some(t) => topics.and_then(|m| m.get(&c.id)) == Some(&t),
        })
        .map(|c| c.id.clone())
        .collect()
}

/// Pages through a query and returns every entry in service order.
pub fn query_all(service: &Service, q: &KbQuery) -> Vec<KbEntry> {
    let mut out = Vec::new();
    let mut q = q.clone();
    q.limit = 100;
    q.offset = 0;
    loop {
        let page = service.query(&q).unwrap();
        let n = page.entries.len();
        out.extend(page.entries);
        if n == 0 || out.len() >= page.total {
            break;
        }
        q.offset += n;
    }
    out
}

// ---- topic model fixtures ------------------------------------------------

/// Two disjoint vocabularies; document d draws only from vocabulary d % 2.
/// Returns docs, the vocabulary, and each doc's generating vocabulary.
pub fn two_vocab_corpus(docs: usize, len: usize, seed: u64) -> (Vec<TokenizedDoc>, Vec<String>, Vec<usize>) {
    let half = 10;
    let vocabulary: Vec<String> = (0..half)
        .map(|i| format!("alpha{i}"))
        .chain((0..half).map(|i| format!("beta{i}")))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut labels = Vec::new();
    for d in 0..docs {
        let label = d % 2;
        let tokens = (0..len).map(|_| label * half + rng.random_range(0..half)).collect();
        out.push(TokenizedDoc {
            contribution_id: ContributionId::new(format!("d{d:03}")),
            tokens,
        });
        labels.push(label);
    }
    (out, vocabulary, labels)
}

/// Fraction of documents whose dominant topic agrees with the majority
/// topic of their true class.
pub fn purity(model: &TopicModel, labels: &[usize]) -> f64 {
    let mut tallies: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (d, &label) in labels.iter().enumerate() {
        *tallies.entry((label, model.dominant_topic(d))).or_default() += 1;
    }
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    let agreeing: usize = classes
        .iter()
        .map(|&c| tallies.iter().filter(|((l, _), _)| *l == c).map(|(_, n)| *n).max().unwrap_or(0))
        .sum();
    agreeing as f64 / labels.len() as f64
}

// ---- LTI helpers ---------------------------------------------------------

/// Signs a launch with the crate's own signer (for scenario tests; the
/// conformance test uses the Python-signed fixture instead).
pub fn signed_launch(consumer: &str, secret: &str, nonce: &str, timestamp: i64, extra: &[(&str, &str)]) -> LaunchRequest {
    let mut params: Vec<(String, String)> = vec![
        ("lti_message_type".into(), "basic-lti-launch-request".into()),
        ("lti_version".into(), "LTI-1p0".into()),
        ("oauth_consumer_key".into(), consumer.into()),
        ("oauth_nonce".into(), nonce.into()),
        ("oauth_signature_method".into(), "HMAC-SHA1".into()),
        ("oauth_timestamp".into(), timestamp.to_string()),
        ("oauth_version".into(), "1.0".into()),
    ];
    params.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    let base = oauth::signature_base_string("POST", LAUNCH_URL, &params).unwrap();
    params.push(("oauth_signature".into(), oauth::sign(&base, secret)));
    LaunchRequest {
        http_method: "POST".into(),
        launch_url: LAUNCH_URL.into(),
        form_params: params,
    }
}

#[derive(Clone, Debug)]
pub struct Sent {
    pub url: String,
    pub authorization: String,
    pub body: Vec<u8>,
}

/// An LMS outcome endpoint that records requests and answers with a
/// scripted sequence of successes and failures (then succeeds).
#[derive(Clone, Default)]
pub struct MockLms {
    pub sent: Arc<Mutex<Vec<Sent>>>,
    pub failures: Arc<Mutex<Vec<bool>>>,
}

impl MockLms {
    pub fn failing_first(n: usize) -> Self {
        let lms = Self::default();
        *lms.failures.lock().unwrap() = vec![true; n];
        lms
    }

    pub fn scores(&self) -> Vec<(String, f64)> {
        self.sent
            .lock()
            .unwrap()
            .iter()
            .map(|s| lti::outcomes::parse_replace_result(&s.body).unwrap())
            .collect()
    }
}

pub const SUCCESS_RESPONSE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<imsx_POXEnvelopeResponse xmlns="http://www.imsglobal.org/services/ltiv1p1/xsd/imsoms_v1p0">
  <imsx_POXHeader><imsx_POXResponseHeaderInfo><imsx_version>V1.0</imsx_version>
    <imsx_messageIdentifier>r1</imsx_messageIdentifier>
    <imsx_statusInfo><imsx_codeMajor>success</imsx_codeMajor><imsx_severity>status</imsx_severity></imsx_statusInfo>
  </imsx_POXResponseHeaderInfo></imsx_POXHeader>
  <imsx_POXBody><replaceResultResponse/></imsx_POXBody>
</imsx_POXEnvelopeResponse>"#;

impl OutcomeTransport for MockLms {
    fn post(&self, url: &str, authorization: &str, _content_type: &str, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        let fail = {
            let mut f = self.failures.lock().unwrap();
            if f.is_empty() {
                false
            } else {
                f.remove(0)
            }
        };
        if fail {
            return Err(TransportError("connection refused".into()));
        }
        self.sent.lock().unwrap().push(Sent {
            url: url.to_owned(),
            authorization: authorization.to_owned(),
            body: body.to_vec(),
        });
        Ok(SUCCESS_RESPONSE.as_bytes().to_vec())
    }
}
