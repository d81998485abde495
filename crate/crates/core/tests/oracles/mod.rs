//! Independent reference implementations shared by the property suites and
//! the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uisim_core::axtree::{ElementId, UiState};
use uisim_core::grow::TaskLoss;
use uisim_core::transition::Viewport;

/// Visible set by definition: a boxed element is visible when its closed box
/// overlaps the closed window; a box-less element is visible when any boxed
/// ancestor or descendant is.
pub fn oracle_visible(state: &UiState, vp: &Viewport) -> Vec<ElementId> {
    let (x0, y0) = (vp.x_offset as i128, vp.y_offset as i128);
    let (x1, y1) = (x0 + vp.width as i128, y0 + vp.height as i128);
    let boxed_hit = |id: ElementId| match state.get(id).unwrap().bbox {
        Some(b) => !((b.x_max as i128) < x0 || (b.x_min as i128) > x1 || (b.y_max as i128) < y0 || (b.y_min as i128) > y1),
        None => false,
    };
    let mut parent: BTreeMap<ElementId, ElementId> = BTreeMap::new();
    for e in state.elements() {
        for c in &e.children {
            parent.insert(*c, e.id);
        }
    }
    fn any_desc(state: &UiState, id: ElementId, hit: &dyn Fn(ElementId) -> bool) -> bool {
        state.get(id).unwrap().children.iter().any(|c| hit(*c) || any_desc(state, *c, hit))
    }
    let mut order = Vec::new();
    fn pre(state: &UiState, id: ElementId, out: &mut Vec<ElementId>) {
        out.push(id);
        for c in &state.get(id).unwrap().children {
            pre(state, *c, out);
        }
    }
    pre(state, state.root_id(), &mut order);
    order
        .into_iter()
        .filter(|&id| {
            if state.get(id).unwrap().bbox.is_some() {
                return boxed_hit(id);
            }
            let mut a = parent.get(&id).copied();
            while let Some(p) = a {
                if boxed_hit(p) {
                    return true;
                }
                a = parent.get(&p).copied();
            }
            any_desc(state, id, &boxed_hit)
        })
        .collect()
}

pub fn toks(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Okapi BM25 straight from the definition, k1 = 1.2, b = 0.75, idf floored at 0.
pub fn bm25_oracle(docs: &[String], query: &str) -> Vec<f64> {
    let tokd: Vec<Vec<String>> = docs.iter().map(|d| toks(d)).collect();
    let n = docs.len() as f64;
    let avg = tokd.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut q = toks(query);
    q.sort();
    q.dedup();
    tokd.iter()
        .map(|d| {
            q.iter()
                .map(|t| {
                    let df = tokd.iter().filter(|x| x.contains(t)).count() as f64;
                    let idf = ((n - df + 0.5) / (df + 0.5)).ln().max(0.0);
                    let tf = d.iter().filter(|x| *x == t).count() as f64;
                    let norm = if avg > 0.0 { d.len() as f64 / avg } else { 1.0 };
                    idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * norm))
                })
                .sum()
        })
        .collect()
}

/// Ranks by brute force: a task's rank is the number of tasks that sort
/// strictly before it.
pub fn rank_band_oracle(losses: &[TaskLoss]) -> Vec<String> {
    let n = losses.len();
    let before = |a: &TaskLoss, b: &TaskLoss| a.mean_loss < b.mean_loss || (a.mean_loss == b.mean_loss && a.task_id < b.task_id);
    let mut picked: Vec<(usize, String)> = losses
        .iter()
        .map(|t| (losses.iter().filter(|o| before(o, t)).count(), t.task_id.clone()))
        .filter(|(r, _)| n < 4 || (n <= 4 * r && 4 * (r + 1) <= 3 * n))
        .collect();
    picked.sort();
    picked.into_iter().map(|(_, id)| id).collect()
}

/// Dimension from nalgebra's full spectrum of the centered covariance.
pub fn spectrum_oracle(rows: &[Vec<f64>], threshold: f64) -> usize {
    let (n, d) = (rows.len(), rows[0].len());
    let m = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = m.row_mean();
    let c = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    let cov = c.transpose() * &c;
    let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = eig.iter().sum();
    let mut acc = 0.0;
    for (k, v) in eig.iter().enumerate() {
        acc += v;
        if acc >= threshold * total * (1.0 - 1e-12) {
            return k + 1;
        }
    }
    eig.len()
}

pub fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn cloud(rng: &mut ChaCha8Rng, rank: usize, n: usize, d: usize) -> Vec<Vec<f64>> {
    let basis: Vec<Vec<f64>> = (0..rank).map(|_| unit(rng, d)).collect();
    (0..n)
        .map(|i| {
            let mut p = vec![0.0; d];
            for (k, b) in basis.iter().enumerate() {
                // rank 1 alternates sign so normalized points do not collapse
                let c = if rank == 1 { if i % 2 == 0 { 1.0 } else { -2.0 } } else { rng.random_range(-1.0..1.0) + if k == 0 { 0.1 } else { 0.0 } };
                for (x, y) in p.iter_mut().zip(b) {
                    *x += c * y;
                }
            }
            p
        })
        .collect()
}
