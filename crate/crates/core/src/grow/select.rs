//! Target, validation and replay selection.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GrowError, TaskLoss};
use crate::client::{dot, EmbeddingMatrix};

/// Tasks of middling difficulty: zero-based ranks `r` (ascending loss, ties
/// by task id) with `ceil(0.25 N) <= r < floor(0.75 N)`. Fewer than four
/// tasks are all returned.
pub fn select_targets(losses: &[TaskLoss]) -> Vec<String> {
    let mut ranked: Vec<&TaskLoss> = losses.iter().collect();
    ranked.sort_by(|a, b| a.mean_loss.total_cmp(&b.mean_loss).then_with(|| a.task_id.cmp(&b.task_id)));
    let n = ranked.len();
    let (lo, hi) = if n < 4 { (0, n) } else { (n.div_ceil(4), 3 * n / 4) };
    ranked[lo..hi].iter().map(|t| t.task_id.clone()).collect()
}

/// Splits `fresh` into `(train, validation)`.
///
/// The first iteration validates on a separately synthesized batch, so all of
/// `fresh` trains. Later iterations hold out `round(fraction * n)` records,
/// clamped to `[1, n - 1]`, drawn with a seeded shuffle. Both halves keep the
/// input order.
pub fn rotate_validation<T>(iteration: usize, fresh: Vec<T>, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), GrowError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(GrowError::InvalidConfig("validation fraction must lie in (0, 1)".into()));
    }
    if iteration <= 1 {
        return Ok((fresh, Vec::new()));
    }
    let n = fresh.len();
    if n < 2 {
        return Err(GrowError::TooFewRecords { needed: 2, got: n });
    }
    let take = (libm::round(fraction * n as f64) as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    let mut held = alloc::vec![false; n];
    for &i in &order[..take] {
        held[i] = true;
    }
    let (mut train, mut val) = (Vec::with_capacity(n - take), Vec::with_capacity(take));
    for (i, item) in fresh.into_iter().enumerate() {
        if held[i] {
            val.push(item);
        } else {
            train.push(item);
        }
    }
    Ok((train, val))
}

/// Row sums of the cosine matrix `M Mᵀ`, computed as `Mᵀ·1` dotted with each
/// row.
pub fn similarity_row_sums(m: &EmbeddingMatrix) -> Vec<f64> {
    let mut total = alloc::vec![0.0; m.dim()];
    for r in m.rows() {
        for (t, v) in total.iter_mut().zip(r) {
            *t += v;
        }
    }
    m.rows().iter().map(|r| dot(r, &total)).collect()
}

/// Indices of the `k` largest row sums, ties by ascending index.
pub fn top_row_sums(m: &EmbeddingMatrix, k: usize) -> Result<Vec<usize>, GrowError> {
    if k > m.len() {
        return Err(GrowError::TooFewRecords { needed: k, got: m.len() });
    }
    let sums = similarity_row_sums(m);
    let mut idx: Vec<usize> = (0..sums.len()).collect();
    idx.sort_by(|&a, &b| sums[b].total_cmp(&sums[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn loss(id: &str, v: f64) -> TaskLoss {
        TaskLoss { task_id: id.to_string(), per_step_losses: vec![v], mean_loss: v }
    }

    #[test]
    fn eight_tasks_keep_middle_four() {
        let l: Vec<TaskLoss> = (1..=8).rev().map(|i| loss(&alloc::format!("t{i}"), i as f64)).collect();
        assert_eq!(select_targets(&l), ["t3", "t4", "t5", "t6"]);
    }

    #[test]
    fn rotation_is_reproducible_and_disjoint() {
        let items: Vec<u32> = (0..100).collect();
        let (t, v) = rotate_validation(2, items.clone(), 0.2, 9).unwrap();
        assert_eq!((t.len(), v.len()), (80, 20));
        assert_eq!(rotate_validation(2, items.clone(), 0.2, 9).unwrap().1, v);
        let mut all: Vec<u32> = t.into_iter().chain(v).collect();
        all.sort();
        assert_eq!(all, items);
        assert!(rotate_validation(2, items, 0.0, 9).is_err());
    }
}
