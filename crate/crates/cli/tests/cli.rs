use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvp-shapley"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a synthetic league into `dir/league` and returns that directory.
fn synth(dir: &Path, seed: u64, teams: usize, games: usize) -> PathBuf {
    let out = dir.join("league");
    ok(&[
        "synth",
        "--out",
        s(&out),
        "--seed",
        &seed.to_string(),
        "--teams",
        &teams.to_string(),
        "--games",
        &games.to_string(),
    ]);
    out
}

fn train(league: &Path, model: &Path, seed: &str) -> String {
    ok(&[
        "train",
        "--data",
        s(&league.join("box_scores.csv")),
        "--schema",
        s(&league.join("schema.json")),
        "--model",
        s(model),
        "--seed",
        seed,
    ])
}

// ---- ingest ----

#[test]
fn ingest_reports_counts() {
    let out = ok(&[
        "ingest",
        "--data",
        s(&fixture("two_games.csv")),
        "--schema",
        s(&fixture("schema.json")),
    ]);
    assert!(out.starts_with("games: 2, players: 8"), "{out}");
}

#[test]
fn ingest_missing_file_fails() {
    let out = run(&["ingest", "--data", "no/such/file.csv", "--schema", s(&fixture("schema.json"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no/such/file.csv"));
    assert!(out.stdout.is_empty());
}

#[test]
fn ingest_bad_header_names_column() {
    let out = run(&[
        "ingest",
        "--data",
        s(&fixture("bad_header.csv")),
        "--schema",
        s(&fixture("schema.json")),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("ast"), "{}", stderr(&out));
}

// ---- train ----

#[test]
fn train_prints_accuracy_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let league = synth(dir.path(), 5, 10, 200);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let line = train(&league, &a, "9");
    train(&league, &b, "9");
    let acc: f64 = line
        .strip_prefix("held-out accuracy: ")
        .and_then(|r| r.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no accuracy in `{line}`"));
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn train_rejects_full_ratio_and_missing_seed() {
    let dir = TempDir::new().unwrap();
    let league = synth(dir.path(), 5, 6, 30);
    let data = league.join("box_scores.csv");
    let schema = league.join("schema.json");
    let model = dir.path().join("m.json");
    let full = run(&[
        "train", "--data", s(&data), "--schema", s(&schema), "--model", s(&model), "--seed", "1",
        "--ratio", "1.0",
    ]);
    assert!(!full.status.success());
    assert!(stderr(&full).contains("ratio"));
    let unseeded = run(&["train", "--data", s(&data), "--schema", s(&schema), "--model", s(&model)]);
    assert!(!unseeded.status.success());
    assert!(stderr(&unseeded).contains("seed"));
    assert!(!model.exists());
}

// ---- rank ----

#[test]
fn rank_rejects_unknown_method() {
    let out = run(&["rank", "--method", "best"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown method"));
}

#[test]
fn single_on_one_game_gives_one_line() {
    let dir = TempDir::new().unwrap();
    let league = synth(dir.path(), 2, 6, 60);
    let model = dir.path().join("m.json");
    train(&league, &model, "1");

    // keep only the first game's rows
    let text = fs::read_to_string(league.join("box_scores.csv")).unwrap();
    let one: String = text
        .lines()
        .filter(|l| l.starts_with("game_id") || l.starts_with("g00001,"))
        .map(|l| format!("{l}\n"))
        .collect();
    let data = dir.path().join("one.csv");
    fs::write(&data, one).unwrap();
    let out = dir.path().join("single.csv");
    ok(&[
        "rank", "--data", s(&data), "--schema", s(&league.join("schema.json")), "--model", s(&model),
        "--method", "single", "--out", s(&out),
    ]);
    let lines: Vec<String> = fs::read_to_string(&out).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 2, "{lines:?}");
    assert_eq!(lines[0], "game_id,rank,player_id,score,games,method");
    assert!(lines[1].starts_with("g00001,1,"));
}

#[test]
fn m3_finds_planted_player_in_most_seeds() {
    let seeds = [0u64, 1, 2, 3, 4];
    let mut hits = 0;
    for seed in seeds {
        let dir = TempDir::new().unwrap();
        let league = synth(dir.path(), seed, 30, 1230);
        let model = dir.path().join("m.json");
        train(&league, &model, "1");
        let ranking = dir.path().join("m3.csv");
        ok(&[
            "rank", "--data", s(&league.join("box_scores.csv")), "--schema", s(&league.join("schema.json")),
            "--model", s(&model), "--method", "m3", "--out", s(&ranking),
        ]);
        let top = fs::read_to_string(&ranking).unwrap().lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
        let planted = fs::read_to_string(league.join("truth.csv")).unwrap().lines().nth(1).unwrap().split(',').nth(3).unwrap().to_string();
        hits += usize::from(top == planted);
    }
    assert!(hits * 2 > seeds.len(), "planted player first in {hits}/{} seeds", seeds.len());
}

#[test]
fn baseline_needs_weights_and_ranks_without_model() {
    let dir = TempDir::new().unwrap();
    let weights = dir.path().join("w.json");
    fs::write(&weights, r#"{"weights": {"pts": 1.0, "reb": 0.5}}"#).unwrap();
    let out = dir.path().join("base.csv");
    let data = fixture("two_games.csv");
    let schema = fixture("schema.json");
    let missing = run(&["rank", "--data", s(&data), "--schema", s(&schema), "--method", "baseline", "--out", s(&out)]);
    assert!(!missing.status.success());
    assert!(stderr(&missing).contains("--weights"));
    ok(&[
        "rank", "--data", s(&data), "--schema", s(&schema), "--method", "baseline", "--out", s(&out),
        "--weights", s(&weights),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 9);
    // fay has the most points and rebounds
    assert!(text.lines().nth(1).unwrap().starts_with("1,fay,"), "{text}");
}

// ---- refine ----

#[test]
fn subset_with_three_groups_lists_seven_candidates() {
    let dir = TempDir::new().unwrap();
    let league = synth(dir.path(), 4, 10, 200);
    let out = dir.path().join("refine");
    ok(&[
        "refine", "subset", "--data", s(&league.join("box_scores.csv")), "--schema",
        s(&league.join("schema.json")), "--truth", s(&league.join("truth.csv")), "--seed", "1",
        "--groups", "3", "--num-trees", "20", "--out", s(&out),
    ]);
    let report = fs::read_to_string(out.join("refinement.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("candidate,included_groups,metric,score,rank"));
    assert_eq!(lines.count(), 7);
    assert!(out.join("importance.csv").is_file());
    assert!(out.join("schema.json").is_file());
}

#[test]
fn one_bin_removes_the_stat() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bins");
    ok(&[
        "refine", "bins", "--data", s(&fixture("two_games.csv")), "--schema", s(&fixture("schema.json")),
        "--seed", "1", "--bins", "reb=1", "--out", s(&out),
    ]);
    let schema: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("schema.json")).unwrap()).unwrap();
    assert_eq!(schema["removed"], serde_json::json!(["reb"]));
    let spec: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("binning.json")).unwrap()).unwrap();
    assert_eq!(spec["t"], 1);
    assert_eq!(spec["boundaries"], serde_json::json!([]));
}

#[test]
fn plus_minus_preset_uses_three_bins() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("game_id,season,team_side,player_id,pts,+/-\n");
    for g in 0..6 {
        for (side, sign) in [("home", 1), ("away", -1)] {
            for i in 0..2 {
                let pm = sign * (g + i);
                writeln!(csv, "g{g},2023,{side},{side}{i},{},{pm}", 10 + g * 2 + i).unwrap();
            }
        }
        writeln!(csv, "g{g},2023,result,home_win,{}", g % 2).unwrap();
    }
    let data = dir.path().join("pm.csv");
    let schema = dir.path().join("schema.json");
    fs::write(&data, csv).unwrap();
    fs::write(&schema, r#"["pts", "+/-"]"#).unwrap();
    let out = dir.path().join("bins");
    let line = ok(&[
        "refine", "bins", "--data", s(&data), "--schema", s(&schema), "--seed", "1", "--bins", "+/-",
        "--out", s(&out),
    ]);
    assert!(line.contains("t = 3"), "{line}");
    let spec: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("binning.json")).unwrap()).unwrap();
    assert_eq!(spec["stat"], "+/-");
    assert_eq!(spec["t"], 3);
    let schema: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("schema.json")).unwrap()).unwrap();
    assert_eq!(schema["fuzzified"], serde_json::json!(["+/-"]));
    // binned box scores still ingest under the refined schema
    ok(&["ingest", "--data", s(&out.join("box_scores.csv")), "--schema", s(&out.join("schema.json"))]);
}

// ---- evaluate ----

#[test]
fn identical_ranking_scores_perfectly() {
    let dir = TempDir::new().unwrap();
    let ranking = dir.path().join("r.csv");
    fs::write(&ranking, "rank,player_id,score,games,method\n1,a,3,5,m3\n2,b,2,5,m3\n3,c,1,5,m3\n").unwrap();
    let truth = dir.path().join("t.csv");
    fs::write(&truth, "scope,key,rank,player_id\nseason,2023,1,a\nseason,2023,2,b\nseason,2023,3,c\n").unwrap();
    let report = dir.path().join("report.csv");
    ok(&["evaluate", "--ranking", s(&ranking), "--truth", s(&truth), "--out", s(&report)]);
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(
        text,
        "metric,value,method,scope\nard,0,m3,season\nsrcc,1,m3,season\nrecall,1,m3,season\n"
    );
}

#[test]
fn per_game_truth_reports_accuracy() {
    let dir = TempDir::new().unwrap();
    let mvps = dir.path().join("single.csv");
    fs::write(
        &mvps,
        "game_id,rank,player_id,score,games,method\ng1,1,a,0.5,1,single\ng2,1,b,0.2,1,single\n",
    )
    .unwrap();
    let truth = dir.path().join("t.csv");
    fs::write(&truth, "scope,key,rank,player_id\nper_game,g1,1,a\nper_game,g2,1,c\n").unwrap();
    let out = ok(&["evaluate", "--ranking", s(&mvps), "--truth", s(&truth)]);
    assert_eq!(out, "metric,value,method,scope\nacc,0.5,single,per_game\n");
}

#[test]
fn evaluate_missing_truth_fails() {
    let dir = TempDir::new().unwrap();
    let ranking = dir.path().join("r.csv");
    fs::write(&ranking, "rank,player_id,score,games,method\n1,a,3,5,m3\n").unwrap();
    let out = run(&["evaluate", "--ranking", s(&ranking), "--truth", s(&dir.path().join("none.csv"))]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    let no_flag = run(&["evaluate", "--ranking", s(&ranking)]);
    assert!(!no_flag.status.success());
    assert!(stderr(&no_flag).contains("--truth"));
}

// ---- synth ----

#[test]
fn synth_is_reproducible_and_ingestible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let la = synth(a.path(), 11, 8, 40);
    let lb = synth(b.path(), 11, 8, 40);
    for file in ["box_scores.csv", "skills.csv", "schema.json", "truth.csv"] {
        assert_eq!(fs::read(la.join(file)).unwrap(), fs::read(lb.join(file)).unwrap(), "{file}");
    }
    let out = ok(&["ingest", "--data", s(&la.join("box_scores.csv")), "--schema", s(&la.join("schema.json"))]);
    assert!(out.starts_with("games: 40, players: 40"), "{out}");

    let skills = fs::read_to_string(la.join("skills.csv")).unwrap();
    let header: Vec<&str> = skills.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[..3], ["player_id", "team", "true_value"]);
    assert_eq!(skills.lines().count(), 41);
    for line in skills.lines().skip(1) {
        assert!(line.split(',').nth(2).unwrap().parse::<f64>().is_ok());
    }
}

// ---- config ----

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.json");
    let from_file = dir.path().join("from_file");
    fs::write(
        &config,
        serde_json::json!({
            "out": from_file,
            "seed": 3,
            "league": { "teams": 6, "games": 12 }
        })
        .to_string(),
    )
    .unwrap();
    let line = ok(&["synth", "--config", s(&config)]);
    assert!(line.starts_with("games: 12, players: 30"), "{line}");
    assert!(from_file.join("box_scores.csv").is_file());

    let from_flag = dir.path().join("from_flag");
    let line = ok(&["synth", "--config", s(&config), "--out", s(&from_flag), "--games", "6"]);
    assert!(line.starts_with("games: 6,"), "{line}");
    assert!(from_flag.join("box_scores.csv").is_file());

    fs::write(&config, r#"{"sede": 3}"#).unwrap();
    let typo = run(&["synth", "--config", s(&config)]);
    assert!(!typo.status.success());
    assert!(stderr(&typo).contains("sede"));
}
