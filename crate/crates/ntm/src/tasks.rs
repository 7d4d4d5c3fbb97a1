//! Synthetic copy and associative-recall sequences.
//!
//! Tokens are `(n+1) x (n+1)`: the top-left `n x n` block is content, the
//! last row carries one-hot channel flags, the last column stays zero.

use matcap_core::{Mat, SeededRng};
use serde::{Deserialize, Serialize};

use crate::model::{FLAG_EOF, FLAG_QUERY, FLAG_SOF};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Copy,
    Recall,
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "recall" => Ok(TaskKind::Recall),
            other => Err(format!("unknown task {other:?} (expected copy or recall)")),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Copy => "copy",
            TaskKind::Recall => "recall",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum TaskMeta {
    Copy { len: usize },
    /// `query` is 1-based; the target is item `query + 1`.
    Recall { items: usize, item_len: usize, query: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSample {
    pub inputs: Vec<Mat>,
    pub targets: Vec<Mat>,
    pub meta: TaskMeta,
}

/// Length ranges for the two generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub n: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub item_len: usize,
    pub items_min: usize,
    pub items_max: usize,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            n: 5,
            len_min: 1,
            len_max: 20,
            item_len: 2,
            items_min: 2,
            items_max: 10,
        }
    }
}

pub fn flag_token(n: usize, flag: usize) -> Mat {
    let mut t = Mat::zeros(n + 1, n + 1);
    t[(n, flag)] = 1.0;
    t
}

pub fn content_token(content: &Mat) -> Mat {
    let n = content.rows();
    Mat::from_fn(n + 1, n + 1, |r, c| if r < n && c < n { content[(r, c)] } else { 0.0 })
}

pub fn random_bits(n: usize, rng: &mut SeededRng) -> Mat {
    Mat::from_fn(n, n, |_, _| if rng.bernoulli(0.5) { 1.0 } else { 0.0 })
}

/// Copy sequence with a fixed length.
pub fn copy_of_len(n: usize, len: usize, rng: &mut SeededRng) -> TaskSample {
    let targets: Vec<Mat> = (0..len).map(|_| random_bits(n, rng)).collect();
    let mut inputs = Vec::with_capacity(len + 2);
    inputs.push(flag_token(n, FLAG_SOF));
    inputs.extend(targets.iter().map(content_token));
    inputs.push(flag_token(n, FLAG_EOF));
    TaskSample {
        inputs,
        targets,
        meta: TaskMeta::Copy { len },
    }
}

/// `sof, X_1..X_l, eof` with `l` uniform in `l_min..=l_max`; targets are the
/// `X_i`.
pub fn gen_copy_task(n: usize, l_min: usize, l_max: usize, rng: &mut SeededRng) -> TaskSample {
    assert!(1 <= l_min && l_min <= l_max, "bad copy length range {l_min}..={l_max}");
    let len = rng.int_inclusive(l_min, l_max);
    copy_of_len(n, len, rng)
}

/// Recall sequence with fixed item count; the query index is drawn.
pub fn recall_of_size(n: usize, item_len: usize, items: usize, rng: &mut SeededRng) -> TaskSample {
    assert!(items >= 2, "recall needs at least two items");
    let all: Vec<Vec<Mat>> = (0..items)
        .map(|_| (0..item_len).map(|_| random_bits(n, rng)).collect())
        .collect();
    let query = rng.int_inclusive(1, items - 1);
    let mut inputs = Vec::with_capacity(items * (item_len + 2) + 1 + item_len);
    for item in &all {
        inputs.push(flag_token(n, FLAG_SOF));
        inputs.extend(item.iter().map(content_token));
        inputs.push(flag_token(n, FLAG_EOF));
    }
    inputs.push(flag_token(n, FLAG_QUERY));
    inputs.extend(all[query - 1].iter().map(content_token));
    TaskSample {
        inputs,
        targets: all[query].clone(),
        meta: TaskMeta::Recall {
            items,
            item_len,
            query,
        },
    }
}

/// `k` items of `item_len` tokens, each wrapped in `sof`/`eof`, then the query
/// delimiter and the content of item `c`; the target is item `c + 1`.
pub fn gen_assoc_recall(n: usize, item_len: usize, k_min: usize, k_max: usize, rng: &mut SeededRng) -> TaskSample {
    assert!(2 <= k_min && k_min <= k_max, "bad item count range {k_min}..={k_max}");
    let items = rng.int_inclusive(k_min, k_max);
    recall_of_size(n, item_len, items, rng)
}

pub fn generate(kind: TaskKind, p: &TaskParams, rng: &mut SeededRng) -> TaskSample {
    match kind {
        TaskKind::Copy => gen_copy_task(p.n, p.len_min, p.len_max, rng),
        TaskKind::Recall => gen_assoc_recall(p.n, p.item_len, p.items_min, p.items_max, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_is_seed_deterministic() {
        let a = gen_copy_task(5, 1, 20, &mut SeededRng::new(4));
        let b = gen_copy_task(5, 1, 20, &mut SeededRng::new(4));
        assert_eq!(a, b);
    }

    #[test]
    fn copy_structure() {
        let mut rng = SeededRng::new(1);
        for _ in 0..200 {
            let s = gen_copy_task(5, 1, 20, &mut rng);
            let TaskMeta::Copy { len } = s.meta else { panic!() };
            assert!((1..=20).contains(&len));
            assert_eq!(s.inputs.len(), len + 2);
            assert_eq!(s.inputs[0], flag_token(5, FLAG_SOF));
            assert_eq!(s.inputs[len + 1], flag_token(5, FLAG_EOF));
            for (x, t) in s.inputs[1..=len].iter().zip(&s.targets) {
                assert_eq!(x, &content_token(t));
                assert!(t.data().iter().all(|b| *b == 0.0 || *b == 1.0));
            }
        }
    }

    #[test]
    fn content_bits_are_fair() {
        let mut rng = SeededRng::new(2);
        let (mut ones, mut total) = (0.0, 0.0);
        for _ in 0..10_000 {
            let s = gen_copy_task(5, 1, 20, &mut rng);
            for t in &s.targets {
                ones += t.sum();
                total += t.len() as f64;
            }
        }
        assert!((ones / total - 0.5).abs() < 0.015);
    }

    #[test]
    fn two_items_forces_first_query() {
        let mut rng = SeededRng::new(8);
        for _ in 0..20 {
            let s = gen_assoc_recall(5, 2, 2, 2, &mut rng);
            assert_eq!(s.meta, TaskMeta::Recall { items: 2, item_len: 2, query: 1 });
            // second item occupies tokens 5..7 (sof at 4)
            assert_eq!(s.inputs[5], content_token(&s.targets[0]));
            assert_eq!(s.inputs[6], content_token(&s.targets[1]));
        }
    }

    #[test]
    fn recall_target_follows_query() {
        let mut rng = SeededRng::new(3);
        for _ in 0..1000 {
            let s = gen_assoc_recall(5, 2, 2, 10, &mut rng);
            let TaskMeta::Recall { items, item_len, query } = s.meta else { panic!() };
            let stride = item_len + 2;
            assert_eq!(s.inputs.len(), items * stride + 1 + item_len);
            let q0 = items * stride + 1;
            assert_eq!(s.inputs[q0 - 1], flag_token(5, FLAG_QUERY));
            for j in 0..item_len {
                assert_eq!(s.inputs[q0 + j], s.inputs[(query - 1) * stride + 1 + j]);
                assert_eq!(content_token(&s.targets[j]), s.inputs[query * stride + 1 + j]);
            }
        }
    }

    #[test]
    fn recall_is_seed_deterministic() {
        let p = TaskParams::default();
        let a = generate(TaskKind::Recall, &p, &mut SeededRng::new(6));
        let b = generate(TaskKind::Recall, &p, &mut SeededRng::new(6));
        assert_eq!(a, b);
    }

    #[test]
    fn flags_are_one_hot_in_last_row() {
        for f in [FLAG_SOF, FLAG_EOF, FLAG_QUERY] {
            let t = flag_token(5, f);
            assert_eq!(t.sum(), 1.0);
            assert_eq!(t[(5, f)], 1.0);
        }
    }
}
