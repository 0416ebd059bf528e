use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use perspectivesx_core::*;

const SERVER_SECRET: &str = "0123456789abcdef0123456789abcdef-server";

fn setup(secret: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("blobs")).unwrap();
    let config = dir.path().join("px.toml");
    std::fs::write(
        &config,
        format!(
            "bind_address = \"127.0.0.1:0\"\nbase_url = \"https://px.example.org\"\n\
             database_path = \"px.json\"\nserver_secret = \"{secret}\"\nblob_store_root = \"blobs\"\n"
        ),
    )
    .unwrap();
    (dir, config)
}

fn run(config: &Path, args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_perspectivesx"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove("PX_SERVER_SECRET")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut input = child.stdin.take().unwrap();
    if let Some(text) = stdin {
        input.write_all(text.as_bytes()).unwrap();
    }
    drop(input);
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn consumer_management() {
    let (dir, config) = setup(SERVER_SECRET);
    let added = run(&config, &["consumer", "add", "--key", "campus", "--label", "Campus LMS"], None);
    assert!(added.status.success(), "{}", stderr(&added));
    let out = stdout(&added);
    let secret = out.lines().find_map(|l| l.strip_prefix("secret: ")).unwrap().to_owned();
    assert_eq!(secret.len(), 48);

    let piped = run(&config, &["consumer", "add", "--key", "other", "--secret-stdin"], Some("piped-secret-value\n"));
    assert!(piped.status.success(), "{}", stderr(&piped));
    assert!(!stdout(&piped).contains("piped-secret-value"));

    let dup = run(&config, &["consumer", "add", "--key", "campus"], None);
    assert!(!dup.status.success());
    assert!(stderr(&dup).contains("already exists"));

    let list = stdout(&run(&config, &["consumer", "list"], None));
    assert_eq!(list, "campus\tCampus LMS\nother\t\n");

    let db = std::fs::read_to_string(dir.path().join("px.json")).unwrap();
    assert!(!db.contains(&secret) && !db.contains("piped-secret-value"));

    assert!(run(&config, &["consumer", "revoke", "--key", "campus"], None).status.success());
    assert!(!run(&config, &["consumer", "revoke", "--key", "campus"], None).status.success());
    assert_eq!(stdout(&run(&config, &["consumer", "list"], None)), "other\t\n");
}

fn populate(config: &Path, docs: usize) -> (ActivityId, LineageKey) {
    let service = Service::open(ServiceOptions::from_config(&load_config(config).unwrap()).unwrap()).unwrap();
    let run = CourseRunId::new("run-1");
    service
        .upsert_course(CourseContext {
            course_run_id: run.clone(),
            lti_context_id: "ctx".into(),
            title: "Strategy".into(),
            mode: CourseMode::Paced,
        })
        .unwrap();
    let activity = service
        .create_activity(&TemplateId::new("builtin-swot"), ActivityConfig::default(), &run, Some(LineageKey::new("strategy")))
        .unwrap();
    let words = [["price", "cost", "margin"], ["brand", "story", "trust"]];
    let perspective = PerspectiveId::new("swot-strengths");
    for i in 0..docs {
        let learner = UserId::new(format!("learner-{i}"));
        service.assign(&activity.id, &learner, Some(&perspective)).unwrap();
        let text = words[i % 2].iter().cycle().take(9).copied().collect::<Vec<_>>().join(" ");
        let sharing = if i == 0 { Sharing::Private } else { Sharing::Named };
        service
            .submit(&activity.id, &learner, &perspective, vec![ContributionItem::text(text)], vec![], sharing)
            .unwrap();
    }
    (activity.id, activity.lineage_key)
}

#[test]
fn export_train_and_recompute() {
    let (dir, config) = setup(SERVER_SECRET);
    let (activity, lineage) = populate(&config, 13);

    let missing = run(&config, &["export-kb", "--lineage", "nowhere"], None);
    assert!(!missing.status.success());
    assert!(stderr(&missing).contains("unknown lineage"), "{}", stderr(&missing));

    let first = dir.path().join("kb1.ndjson");
    let second = dir.path().join("kb2.ndjson");
    for path in [&first, &second] {
        let out = run(&config, &["export-kb", "--lineage", lineage.as_str(), "--output", path.to_str().unwrap()], None);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stderr(&out).contains("12 records exported"));
    }
    let bytes = std::fs::read(&first).unwrap();
    assert_eq!(bytes, std::fs::read(&second).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text.lines().count(), 12);
    for line in text.lines() {
        let entry: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_ne!(entry["author"]["name"], serde_json::json!("learner-0"));
    }
    let stdout_export = run(&config, &["export-kb", "--lineage", lineage.as_str()], None);
    assert_eq!(stdout(&stdout_export), text);

    let trained = run(
        &config,
        &["train-topics", "--lineage", lineage.as_str(), "--k", "2", "--seed", "3", "--iterations", "50", "--top-n", "3"],
        None,
    );
    assert!(trained.status.success(), "{}", stderr(&trained));
    let out = stdout(&trained);
    assert!(out.starts_with("model ") && out.contains("K=2 docs=12 seed=3"), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("topic ")).count(), 2);

    let recomputed = run(&config, &["recompute-scores", "--activity", activity.as_str()], None);
    assert!(recomputed.status.success(), "{}", stderr(&recomputed));
    assert_eq!(stdout(&recomputed), "0 scores changed\n");
    assert!(!run(&config, &["recompute-scores", "--activity", "nope"], None).status.success());
}

#[test]
fn configuration_errors_name_the_key() {
    let (_dir, config) = setup("too-short");
    let out = run(&config, &["consumer", "list"], None);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("server_secret") && !err.contains("too-short"), "{err}");
}
