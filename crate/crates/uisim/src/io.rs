//! On-disk formats: JSON lines for rollouts, datasets and corpora, pretty
//! JSON for reports and manifests, CSV for loss tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use uisim_core::grow::TaskLoss;
use uisim_core::rollout::{RawRollout, Site};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_owned(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let mut w = create(path)?;
    for (i, item) in items.iter().enumerate() {
        serde_json::to_writer(&mut w, item).map_err(|source| IoError::Json { path: path.to_owned(), line: i + 1, source })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| IoError::Json { path: path.to_owned(), line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json { path: path.to_owned(), line: 0, source })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_owned(), line: 0, source })
}

/// One line of `rollouts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutLine {
    pub id: String,
    pub site: Site,
    pub seed: u64,
    pub rollout: RawRollout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub task_id: String,
    pub mean_loss: f64,
    pub step_count: usize,
}

pub fn write_loss_csv(path: &Path, losses: &[TaskLoss]) -> Result<(), IoError> {
    let csv_err = |source| IoError::Csv { path: path.to_owned(), source };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(["task_id", "mean_loss", "step_count"]).map_err(csv_err)?;
    for l in losses {
        w.serialize(LossRow { task_id: l.task_id.clone(), mean_loss: l.mean_loss, step_count: l.per_step_losses.len() })
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRow>, IoError> {
    let csv_err = |source| IoError::Csv { path: path.to_owned(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_table_round_trip_and_empty_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        let rows = vec![TaskLoss { task_id: "a,b".into(), per_step_losses: vec![0.5, 0.25], mean_loss: 0.375 }];
        write_loss_csv(&p, &rows).unwrap();
        assert_eq!(read_loss_csv(&p).unwrap(), [LossRow { task_id: "a,b".into(), mean_loss: 0.375, step_count: 2 }]);
        write_loss_csv(&p, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "task_id,mean_loss,step_count\n");
        assert!(read_loss_csv(&p).unwrap().is_empty());
    }
}
