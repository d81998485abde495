mod common;

use std::sync::Arc;

use serde_json::{json, Value};
use uisim::annotation::{agreement, router, serve, Annotation, AnnotationStore, AppState, Scores, Statistic, BOOLEAN_DIMENSIONS};
use uisim_core::rollout::Site;
use uisim_core::wrapper::TrajectoryRecord;

fn spawn(app: Arc<AppState>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            serve(listener, router(app, None)).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn get(url: &str) -> Value {
    ureq::get(url).call().unwrap().body_mut().read_json().unwrap()
}

fn post(url: &str, body: &Value) -> Result<Value, u16> {
    match ureq::post(url).send_json(body) {
        Ok(mut r) => Ok(r.body_mut().read_json().unwrap()),
        Err(ureq::Error::StatusCode(c)) => Err(c),
        Err(e) => panic!("{e}"),
    }
}

/// `n` copies of one scripted trajectory under distinct ids.
fn records(n: usize) -> Vec<TrajectoryRecord> {
    let dir = tempfile::tempdir().unwrap();
    let run = common::scripted_run(dir.path(), Site::Shopping, 2, 3);
    let base = common::dataset(&run).remove(0);
    (0..n)
        .map(|i| {
            let mut r = base.clone();
            r.id = format!("t{i:02}");
            r
        })
        .collect()
}

fn scores(b: [bool; 7], irrelevant: u32) -> Scores {
    Scores {
        realism: b[0],
        state_reasonability: b[1],
        action_validity: b[2],
        logical_consistency: b[3],
        task_completion: b[4],
        trajectory_consistency: b[5],
        topic_abstraction: b[6],
        irrelevant_steps: irrelevant,
    }
}

/// Three annotators over 30 items. Against a shared baseline, A alone flips
/// 22 judgments, B alone 4 and C alone 1, so the pairs disagree on 26, 23
/// and 5 of 210 judgments.
fn fixture() -> Vec<Annotation> {
    let baseline = |pos: usize| pos % 3 != 0;
    let flips = |who: usize, pos: usize| match who {
        0 => pos < 22,
        1 => (100..104).contains(&pos),
        _ => pos == 200,
    };
    let mut out = Vec::new();
    for (who, name) in ["ann-a", "ann-b", "ann-c"].iter().enumerate() {
        for item in 0..30 {
            let mut b = [false; 7];
            for (k, v) in b.iter_mut().enumerate() {
                let pos = item * 7 + k;
                *v = baseline(pos) ^ flips(who, pos);
            }
            out.push(Annotation { trajectory_id: format!("t{item:02}"), annotator_id: name.to_string(), scores: scores(b, (item % 3) as u32) });
        }
    }
    out
}

/// Independent Cohen's kappa over two flat judgment lists.
fn kappa_oracle(x: &[bool], y: &[bool]) -> f64 {
    let n = x.len() as f64;
    let mut table = [[0.0f64; 2]; 2];
    for (a, b) in x.iter().zip(y) {
        table[*a as usize][*b as usize] += 1.0;
    }
    let po = (table[0][0] + table[1][1]) / n;
    let row = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let col = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let pe = (row[0] * col[0] + row[1] * col[1]) / (n * n);
    (po - pe) / (1.0 - pe)
}

#[test]
fn agreement_fixture_proportions() {
    let report = agreement(&fixture(), Statistic::Proportion);
    let got: Vec<f64> = report.pairs.iter().map(|p| p.agreement).collect();
    let want = [184.0 / 210.0, 187.0 / 210.0, 205.0 / 210.0];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-12);
    }
    for (g, w) in got.iter().zip([0.876, 0.890, 0.976]) {
        assert!((g - w).abs() < 1e-3, "{g} vs {w}");
    }
    assert!(report.pairs.iter().all(|p| p.items == 30 && p.judgments == 210));
}

#[test]
fn kappa_matches_oracle() {
    let anns = fixture();
    let flat = |who: &str| -> Vec<bool> {
        anns.iter().filter(|a| a.annotator_id == who).flat_map(|a| a.scores.booleans()).collect()
    };
    let report = agreement(&anns, Statistic::Kappa);
    let names = [("ann-a", "ann-b"), ("ann-a", "ann-c"), ("ann-b", "ann-c")];
    for (p, (a, b)) in report.pairs.iter().zip(names) {
        assert_eq!(p.annotators, [a.to_string(), b.to_string()]);
        assert!((p.agreement - kappa_oracle(&flat(a), &flat(b))).abs() < 1e-12);
    }
}

#[test]
fn http_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("annotations.jsonl");
    let app = AppState::new(records(30), AnnotationStore::open(Some(journal.clone())).unwrap());
    let base = spawn(app);

    let list = get(&format!("{base}/api/trajectories"));
    assert_eq!(list.as_array().unwrap().len(), 30);
    assert_eq!(list[0]["id"], "t00");
    assert_eq!(list[0]["domain"], "web");

    let detail = get(&format!("{base}/api/trajectories/t05"));
    assert_eq!(detail["id"], "t05");
    assert!(detail.get("trace").is_none());
    assert!(!detail["steps"].as_array().unwrap().is_empty());
    assert!(matches!(ureq::get(&format!("{base}/api/trajectories/nope")).call(), Err(ureq::Error::StatusCode(404))));

    for a in fixture() {
        post(&format!("{base}/api/annotations"), &serde_json::to_value(&a).unwrap()).unwrap();
    }
    let report = get(&format!("{base}/api/agreement"));
    assert_eq!(report["statistic"], "proportion");
    let got: Vec<f64> = report["pairs"].as_array().unwrap().iter().map(|p| p["agreement"].as_f64().unwrap()).collect();
    for (g, w) in got.iter().zip([0.876, 0.890, 0.976]) {
        assert!((g - w).abs() < 1e-3);
    }
    let kappa = get(&format!("{base}/api/agreement?statistic=kappa"));
    assert_eq!(kappa["statistic"], "kappa");

    // resubmission replaces the earlier judgment
    let mut a = fixture().remove(0);
    a.scores.irrelevant_steps = 9;
    post(&format!("{base}/api/annotations"), &serde_json::to_value(&a).unwrap()).unwrap();
    let mine = get(&format!("{base}/api/annotations?trajectory_id=t00&annotator_id=ann-a"));
    assert_eq!(mine.as_array().unwrap().len(), 1);
    assert_eq!(mine[0]["scores"]["irrelevant_steps"], 9);
    assert_eq!(get(&format!("{base}/api/annotations")).as_array().unwrap().len(), 90);
    let listed = get(&format!("{base}/api/trajectories"));
    assert_eq!(listed[0]["annotated_by"], json!(["ann-a", "ann-b", "ann-c"]));

    let summary = get(&format!("{base}/api/summary"));
    assert_eq!(summary["annotations"], 90);
    assert_eq!(summary["trajectories_annotated"], 30);
    assert_eq!(summary["dimensions"].as_object().unwrap().len(), BOOLEAN_DIMENSIONS.len());
    // per-item means are item % 3, except t00 where A now says 9
    let want = (10 * 3) as f64 / 30.0 + 3.0 / 30.0;
    assert!((summary["irrelevant_steps_mean"].as_f64().unwrap() - want).abs() < 1e-12);

    // the journal survives a restart with last-write-wins intact
    let reopened = AnnotationStore::open(Some(journal)).unwrap().all();
    assert_eq!(reopened.len(), 90);
    assert!(reopened.iter().any(|x| x.annotator_id == "ann-a" && x.trajectory_id == "t00" && x.scores.irrelevant_steps == 9));
}

#[test]
fn rejects_bad_submissions() {
    let base = spawn(AppState::new(records(2), AnnotationStore::default()));
    let mut a = serde_json::to_value(&fixture()[0]).unwrap();
    a["trajectory_id"] = json!("missing");
    assert_eq!(post(&format!("{base}/api/annotations"), &a), Err(404));
    a["trajectory_id"] = json!("t00");
    a["annotator_id"] = json!("  ");
    assert_eq!(post(&format!("{base}/api/annotations"), &a), Err(422));
    a["annotator_id"] = json!("x");
    a["scores"]["realism"] = json!("yes");
    let code = post(&format!("{base}/api/annotations"), &a).unwrap_err();
    assert!((400..500).contains(&code));
    let empty = get(&format!("{base}/api/agreement"));
    assert!(empty["mean"].is_null());
}
