//! HTTP backend for human review of wrapped trajectories.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use uisim_core::wrapper::TrajectoryRecord;

use crate::io::{read_jsonl, IoError};

pub const BOOLEAN_DIMENSIONS: [&str; 7] = [
    "realism",
    "state_reasonability",
    "action_validity",
    "logical_consistency",
    "task_completion",
    "trajectory_consistency",
    "topic_abstraction",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scores {
    pub realism: bool,
    pub state_reasonability: bool,
    pub action_validity: bool,
    pub logical_consistency: bool,
    pub task_completion: bool,
    pub trajectory_consistency: bool,
    pub topic_abstraction: bool,
    pub irrelevant_steps: u32,
}

impl Scores {
    /// In [`BOOLEAN_DIMENSIONS`] order.
    pub fn booleans(&self) -> [bool; 7] {
        [
            self.realism,
            self.state_reasonability,
            self.action_validity,
            self.logical_consistency,
            self.task_completion,
            self.trajectory_consistency,
            self.topic_abstraction,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub trajectory_id: String,
    pub annotator_id: String,
    pub scores: Scores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    #[default]
    Proportion,
    Kappa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub annotators: [String; 2],
    /// Trajectories both annotated.
    pub items: usize,
    /// Boolean judgments compared (`7 * items`).
    pub judgments: usize,
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub statistic: Statistic,
    pub pairs: Vec<PairAgreement>,
    /// Mean over pairs with at least one shared item.
    pub mean: Option<f64>,
}

/// Pairwise agreement over the boolean dimensions of shared items.
pub fn agreement(annotations: &[Annotation], statistic: Statistic) -> AgreementReport {
    let mut by_annotator: BTreeMap<&str, BTreeMap<&str, [bool; 7]>> = BTreeMap::new();
    for a in annotations {
        by_annotator.entry(&a.annotator_id).or_default().insert(&a.trajectory_id, a.scores.booleans());
    }
    let names: Vec<&str> = by_annotator.keys().copied().collect();
    let mut pairs = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let (la, lb) = (&by_annotator[a], &by_annotator[b]);
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (t, va) in la {
                if let Some(vb) = lb.get(t) {
                    x.extend_from_slice(va);
                    y.extend_from_slice(vb);
                }
            }
            if x.is_empty() {
                continue;
            }
            let n = x.len() as f64;
            let po = x.iter().zip(&y).filter(|(p, q)| p == q).count() as f64 / n;
            let value = match statistic {
                Statistic::Proportion => po,
                Statistic::Kappa => {
                    let pa = x.iter().filter(|v| **v).count() as f64 / n;
                    let pb = y.iter().filter(|v| **v).count() as f64 / n;
                    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
                    if (1.0 - pe).abs() < 1e-12 {
                        1.0
                    } else {
                        (po - pe) / (1.0 - pe)
                    }
                }
            };
            pairs.push(PairAgreement { annotators: [a.to_string(), b.to_string()], items: x.len() / 7, judgments: x.len(), agreement: value });
        }
    }
    let mean = (!pairs.is_empty()).then(|| pairs.iter().map(|p| p.agreement).sum::<f64>() / pairs.len() as f64);
    AgreementReport { statistic, pairs, mean }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub annotations: usize,
    pub trajectories_annotated: usize,
    /// Share of `true` judgments per boolean dimension.
    pub dimensions: BTreeMap<String, f64>,
    /// Mean over annotated trajectories of the per-trajectory mean count.
    pub irrelevant_steps_mean: Option<f64>,
}

pub fn summary(annotations: &[Annotation]) -> Summary {
    let n = annotations.len();
    let mut dimensions = BTreeMap::new();
    for (k, name) in BOOLEAN_DIMENSIONS.iter().enumerate() {
        if n > 0 {
            let yes = annotations.iter().filter(|a| a.scores.booleans()[k]).count();
            dimensions.insert(name.to_string(), yes as f64 / n as f64);
        }
    }
    let mut per_traj: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for a in annotations {
        per_traj.entry(&a.trajectory_id).or_default().push(a.scores.irrelevant_steps);
    }
    let means: Vec<f64> = per_traj.values().map(|v| v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len() as f64).collect();
    let irrelevant_steps_mean = (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64);
    Summary { annotations: n, trajectories_annotated: per_traj.len(), dimensions, irrelevant_steps_mean }
}

/// Latest annotation per (trajectory, annotator), optionally journaled to a
/// JSON-lines file that is replayed on start.
#[derive(Debug, Default)]
pub struct AnnotationStore {
    latest: BTreeMap<(String, String), Scores>,
    journal: Option<PathBuf>,
}

impl AnnotationStore {
    pub fn open(journal: Option<PathBuf>) -> Result<Self, IoError> {
        let mut store = Self { latest: BTreeMap::new(), journal: None };
        if let Some(p) = &journal {
            if p.exists() {
                for a in read_jsonl::<Annotation>(p)? {
                    store.apply(a);
                }
            }
        }
        store.journal = journal;
        Ok(store)
    }

    fn apply(&mut self, a: Annotation) {
        self.latest.insert((a.trajectory_id, a.annotator_id), a.scores);
    }

    pub fn put(&mut self, a: Annotation) -> std::io::Result<()> {
        if let Some(p) = &self.journal {
            let mut f = OpenOptions::new().create(true).append(true).open(p)?;
            let line = serde_json::to_string(&a).map_err(std::io::Error::other)?;
            writeln!(f, "{line}")?;
        }
        self.apply(a);
        Ok(())
    }

    pub fn all(&self) -> Vec<Annotation> {
        self.latest
            .iter()
            .map(|((t, a), s)| Annotation { trajectory_id: t.clone(), annotator_id: a.clone(), scores: *s })
            .collect()
    }
}

pub struct AppState {
    records: Vec<TrajectoryRecord>,
    index: BTreeMap<String, usize>,
    store: Mutex<AnnotationStore>,
}

impl AppState {
    pub fn new(records: Vec<TrajectoryRecord>, store: AnnotationStore) -> Arc<Self> {
        let index = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        Arc::new(Self { records, index, store: Mutex::new(store) })
    }

    pub fn load(dataset: &Path, journal: Option<PathBuf>) -> Result<Arc<Self>, IoError> {
        Ok(Self::new(read_jsonl(dataset)?, AnnotationStore::open(journal)?))
    }

    fn annotations(&self) -> Vec<Annotation> {
        self.store.lock().expect("annotation store lock").all()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryListing {
    pub id: String,
    pub instruction: String,
    pub domain: String,
    pub step_count: usize,
    pub annotated_by: Vec<String>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

async fn list_trajectories(State(app): State<Arc<AppState>>) -> Json<Vec<TrajectoryListing>> {
    let mut by: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for a in app.annotations() {
        by.entry(a.trajectory_id).or_default().insert(a.annotator_id);
    }
    Json(
        app.records
            .iter()
            .map(|r| TrajectoryListing {
                id: r.id.clone(),
                instruction: r.instruction.clone(),
                domain: r.domain.as_str().to_owned(),
                step_count: r.steps.len(),
                annotated_by: by.get(&r.id).map(|s| s.iter().cloned().collect()).unwrap_or_default(),
            })
            .collect(),
    )
}

async fn get_trajectory(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    match app.index.get(&id) {
        Some(&i) => {
            let mut r = app.records[i].clone();
            r.trace.clear();
            Json(r).into_response()
        }
        None => error(StatusCode::NOT_FOUND, format!("no trajectory {id}")),
    }
}

#[derive(Debug, Default, Deserialize)]
struct AnnotationFilter {
    trajectory_id: Option<String>,
    annotator_id: Option<String>,
}

async fn list_annotations(State(app): State<Arc<AppState>>, Query(f): Query<AnnotationFilter>) -> Json<Vec<Annotation>> {
    Json(
        app.annotations()
            .into_iter()
            .filter(|a| f.trajectory_id.as_ref().is_none_or(|t| *t == a.trajectory_id))
            .filter(|a| f.annotator_id.as_ref().is_none_or(|t| *t == a.annotator_id))
            .collect(),
    )
}

async fn post_annotation(State(app): State<Arc<AppState>>, Json(a): Json<Annotation>) -> Response {
    if !app.index.contains_key(&a.trajectory_id) {
        return error(StatusCode::NOT_FOUND, format!("no trajectory {}", a.trajectory_id));
    }
    if a.annotator_id.trim().is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "annotator_id must be non-empty");
    }
    let mut store = app.store.lock().expect("annotation store lock");
    match store.put(a.clone()) {
        Ok(()) => (StatusCode::OK, Json(a)).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("saving annotation: {e}")),
    }
}

#[derive(Debug, Default, Deserialize)]
struct AgreementQuery {
    #[serde(default)]
    statistic: Statistic,
}

async fn get_agreement(State(app): State<Arc<AppState>>, Query(q): Query<AgreementQuery>) -> Json<AgreementReport> {
    Json(agreement(&app.annotations(), q.statistic))
}

async fn get_summary(State(app): State<Arc<AppState>>) -> Json<Summary> {
    Json(summary(&app.annotations()))
}

pub fn router(app: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/trajectories", get(list_trajectories))
        .route("/api/trajectories/{id}", get(get_trajectory))
        .route("/api/annotations", get(list_annotations).post(post_annotation))
        .route("/api/agreement", get(get_agreement))
        .route("/api/summary", get(get_summary))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(t: &str, who: &str, bits: [bool; 7]) -> Annotation {
        let [realism, state_reasonability, action_validity, logical_consistency, task_completion, trajectory_consistency, topic_abstraction] =
            bits;
        Annotation {
            trajectory_id: t.into(),
            annotator_id: who.into(),
            scores: Scores {
                realism,
                state_reasonability,
                action_validity,
                logical_consistency,
                task_completion,
                trajectory_consistency,
                topic_abstraction,
                irrelevant_steps: 0,
            },
        }
    }

    #[test]
    fn kappa_by_hand() {
        // 14 judgments, 12 agree; a says yes 7 times, b says yes 7 times
        let a = [ann("t1", "a", [true, true, true, true, false, false, false]), ann("t2", "a", [true, true, true, false, false, false, false])];
        let b = [ann("t1", "b", [true, true, true, true, false, false, true]), ann("t2", "b", [true, true, false, false, false, false, false])];
        let all: Vec<Annotation> = a.into_iter().chain(b).collect();
        let p = agreement(&all, Statistic::Proportion);
        assert!((p.pairs[0].agreement - 12.0 / 14.0).abs() < 1e-12);
        let k = agreement(&all, Statistic::Kappa);
        let pe = 0.5 * 0.5 + 0.5 * 0.5;
        assert!((k.pairs[0].agreement - (12.0 / 14.0 - pe) / (1.0 - pe)).abs() < 1e-12);
    }

    #[test]
    fn disjoint_annotators_have_no_pair() {
        let all = vec![ann("t1", "a", [true; 7]), ann("t2", "b", [true; 7])];
        let r = agreement(&all, Statistic::Proportion);
        assert!(r.pairs.is_empty());
        assert_eq!(r.mean, None);
    }

    #[test]
    fn last_write_wins() {
        let mut s = AnnotationStore::default();
        s.put(ann("t1", "a", [true; 7])).unwrap();
        s.put(ann("t1", "a", [false; 7])).unwrap();
        assert_eq!(s.all(), vec![ann("t1", "a", [false; 7])]);
        let sum = summary(&s.all());
        assert_eq!(sum.dimensions["realism"], 0.0);
        assert_eq!(sum.irrelevant_steps_mean, Some(0.0));
    }
}
