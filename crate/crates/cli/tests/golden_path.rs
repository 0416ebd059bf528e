mod common;

use std::collections::{BTreeMap, BTreeSet};

use axum::http::StatusCode;
use common::*;
use perspectivesx_core::*;
use serde_json::{json, Value};

const PRICE: &[&str] = &["price", "discount", "cost", "budget", "margin", "cheap", "tariff", "expense"];
const BRAND: &[&str] = &["brand", "story", "loyalty", "emotion", "identity", "trust", "design", "heritage"];

fn sentence(words: &[&str], shift: usize) -> String {
    (0..12).map(|i| words[(i * 3 + shift) % words.len()]).collect::<Vec<_>>().join(" ")
}

async fn score_of(app: &TestApp, cookie: &str, activity: &str, learner: &str) -> f64 {
    let r = app.get(&format!("/api/scores/{activity}/{learner}"), cookie).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    r.body["score"].as_f64().unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn launch_to_passback_over_http() {
    let app = TestApp::new();
    let teacher = app.login("teacher", INSTRUCTOR).await;
    let moderator = app.login("ta", MODERATOR).await;

    let r = app
        .post(
            "/api/activities",
            &teacher,
            json!({"template_id": "builtin-swot", "lineage_key": "strategy-101", "config": {
                "contribution_policy": "RANDOM", "curation_enabled": true, "min_curated_per_perspective": 1,
                "kb_sharing_default": "ANONYMOUS", "allow_private": false, "grade_passback_enabled": true}}),
        )
        .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    let activity = r.body["id"].as_str().unwrap().to_owned();
    let lineage = "strategy-101";

    // learners launch through the bound resource link with an outcome service
    let mut learners = Vec::new();
    for i in 0..12 {
        let user = format!("learner-{i}");
        let sourcedid = format!("src-{i}");
        let params = app.launch_params(
            &user,
            LEARNER,
            "course-1",
            &[
                ("lis_outcome_service_url", "https://lms.example.org/outcomes"),
                ("lis_result_sourcedid", sourcedid.as_str()),
            ],
        );
        let r = app.post_launch(&params).await;
        assert_eq!(r.status, StatusCode::SEE_OTHER);
        let cookie = cookie_of(&r);
        let session = app.get("/api/session", &cookie).await.body;
        assert_eq!(session["activity_id"], json!(activity));
        assert_eq!(session["grade_passback"], json!(true));
        learners.push((cookie, session["user_id"].as_str().unwrap().to_owned()));
    }

    // random assignment, balanced over the four perspectives
    let mut assigned = Vec::new();
    for (cookie, id) in &learners {
        let r = app.post(&format!("/api/activities/{activity}/assignment"), cookie, json!({})).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.body);
        assigned.push(r.body["required_perspectives"][0].as_str().unwrap().to_owned());
        assert_eq!(score_of(&app, cookie, &activity, id).await, 0.0);
    }
    let mut per_perspective: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &assigned {
        *per_perspective.entry(p).or_default() += 1;
    }
    assert_eq!(per_perspective.values().copied().collect::<Vec<_>>(), vec![3; 4]);

    // submit
    let mut contributions = Vec::new();
    for (i, ((cookie, id), perspective)) in learners.iter().zip(&assigned).enumerate() {
        let words = if i % 2 == 0 { PRICE } else { BRAND };
        let r = app
            .post(
                &format!("/api/activities/{activity}/contributions"),
                cookie,
                json!({"perspective_id": perspective, "items": [{"kind": "TEXT", "body": sentence(words, i)}], "tags": ["market"]}),
            )
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
        assert_eq!(r.body["sharing"], json!("ANONYMOUS"));
        contributions.push(r.body["id"].as_str().unwrap().to_owned());
        assert_eq!(score_of(&app, cookie, &activity, id).await, 0.5);
    }

    // peer curation to completion
    for ((cookie, id), own) in learners.iter().zip(&assigned) {
        let status = app.get(&format!("/api/curation/{activity}"), cookie).await.body;
        let todo: Vec<String> = serde_json::from_value(status["task"]["perspectives_to_curate"].clone()).unwrap();
        assert_eq!(todo.len(), 3);
        assert!(!todo.contains(own));
        for p in todo {
            let page = app.get(&format!("/api/kb/{lineage}/search?perspective_id={p}"), cookie).await.body;
            let source = page["entries"][0]["contribution_id"].clone();
            let r = app.post(&format!("/api/curation/{activity}"), cookie, json!({"source_contribution_id": source})).await;
            assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
        }
        let status = app.get(&format!("/api/curation/{activity}"), cookie).await.body;
        assert_eq!(status["complete"], json!(true));
        assert_eq!(status["collection"].as_array().unwrap().len(), 3);
        assert_eq!(score_of(&app, cookie, &activity, id).await, 1.0);
    }

    // highlight
    let r = app
        .post("/api/moderation/highlights", &moderator, json!({"contribution_id": contributions[3], "note": "good example"}))
        .await;
    assert_eq!(r.status, StatusCode::CREATED);
    let page = app.get(&format!("/api/kb/{lineage}/search?highlighted_only=true"), &learners[0].0).await.body;
    assert_eq!(page["total"], json!(1));
    assert_eq!(page["entries"][0]["contribution_id"], json!(contributions[3]));

    // train topics in the background and wait for the model
    let r = app
        .post(&format!("/api/topics/{lineage}/train"), &teacher, json!({"topics": 2, "iterations": 200, "seed": 7}))
        .await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    let overview = loop {
        let r = app.get(&format!("/api/topics/{lineage}?top_n=4"), &moderator).await.body;
        match r["training"]["state"].as_str() {
            Some("running") => tokio::time::sleep(std::time::Duration::from_millis(20)).await,
            Some("done") => break r["model"].clone(),
            other => panic!("training ended with {other:?}: {r}"),
        }
    };
    assert_eq!(overview["topics"], json!(2));
    let model = app.get(&format!("/api/topics/{lineage}/model"), &moderator).await.body;
    assert_eq!(model["K"], json!(2));
    assert_eq!(model["doc_ids"].as_array().unwrap().len(), 12);

    // broadcast to topic 0; the recipients are the authors whose document has topic 0 as argmax
    let authors: BTreeMap<String, String> = app.service.with_db(|db| {
        db.contributions
            .values()
            .map(|c| (c.id.to_string(), c.learner_id.to_string()))
            .collect()
    });
    let expected: BTreeSet<String> = model["doc_ids"]
        .as_array()
        .unwrap()
        .iter()
        .zip(model["theta"].as_array().unwrap())
        .filter(|(_, row)| dominant(row) == 0)
        .map(|(doc, _)| authors[doc.as_str().unwrap()].clone())
        .collect();
    let model_id = model["model_id"].clone();
    let r = app
        .post(
            &format!("/api/topics/{lineage}/broadcast"),
            &teacher,
            json!({"model_id": model_id, "topic_id": 0, "message": "compare your view with a brand lens"}),
        )
        .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["recipients"], json!(expected.len()));
    assert!(!expected.is_empty() && expected.len() < 12);
    for (cookie, id) in &learners {
        let inbox = app.get("/api/feedback", cookie).await.body;
        assert_eq!(inbox.as_array().unwrap().len(), usize::from(expected.contains(id)), "{id}");
    }

    // one passback per distinct score, in order, per learner
    let lms = RecordingLms::default();
    for _ in 0..5 {
        app.service.dispatch_due_passbacks(&lms).unwrap();
    }
    let mut sent: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (sourcedid, score) in lms.scores() {
        sent.entry(sourcedid).or_default().push(score);
    }
    assert_eq!(sent.len(), 12);
    assert!(sent.values().all(|scores| scores == &[0.0, 0.5, 1.0]), "{sent:?}");
    assert!(app.service.passback_jobs().iter().all(|j| j.status == PassbackStatus::Delivered));
}

fn dominant(row: &Value) -> usize {
    let row: Vec<f64> = serde_json::from_value(row.clone()).unwrap();
    topics_argmax(&row)
}

fn topics_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, p) in row.iter().enumerate() {
        if *p > row[best] {
            best = k;
        }
    }
    best
}
