use matcap_core::{Mat, SeededRng};
use matcap_ntm::model::{address, FLAG_EOF};
use matcap_ntm::tasks::{gen_assoc_recall, gen_copy_task, TaskMeta};
use matcap_ntm::Tape;
use proptest::prelude::*;

fn random_mat(rows: usize, cols: usize, rng: &mut SeededRng, scale: f64) -> Mat {
    let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
    Mat::from_vec(rows, cols, data).unwrap()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn addressing_is_a_distribution(seed in any::<u64>(), slots in 2usize..12, d in 1usize..4,
                                    beta in 0.0f64..20.0, g in 0.0f64..1.0, gamma in 1.0f64..5.0) {
        let mut rng = SeededRng::new(seed);
        let mut tape = Tape::new();
        let mem = tape.leaf(random_mat(slots, d * d, &mut rng, 1.0));
        let prev: Vec<f64> = softmax(&(0..slots).map(|_| rng.normal()).collect::<Vec<_>>());
        let prev = tape.leaf(Mat::from_vec(1, slots, prev).unwrap());
        let key = tape.leaf(random_mat(1, d * d, &mut rng, 1.0));
        let beta = tape.leaf(Mat::scalar(beta));
        let g = tape.leaf(Mat::scalar(g));
        let s = softmax(&[rng.normal(), rng.normal(), rng.normal()]);
        let s = tape.leaf(Mat::from_vec(1, 3, s).unwrap());
        let gamma = tape.leaf(Mat::scalar(gamma));
        let a = address(&mut tape, mem, prev, key, beta, g, s, gamma).unwrap();
        for node in [a.content, a.gated, a.shifted, a.weights] {
            let w = tape.value(node).data();
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_write_leaves_memory(seed in any::<u64>(), slots in 1usize..10, width in 1usize..10) {
        let mut rng = SeededRng::new(seed);
        let mut tape = Tape::new();
        let m0 = random_mat(slots, width, &mut rng, 1.0);
        let m = tape.leaf(m0.clone());
        let w = tape.leaf(Mat::zeros(1, slots));
        let e = tape.leaf(random_mat(1, width, &mut rng, 1.0));
        let a = tape.leaf(random_mat(1, width, &mut rng, 1.0));
        let out = tape.mem_write(m, w, e, a).unwrap();
        prop_assert_eq!(tape.value(out).data(), m0.data());
    }

    #[test]
    fn copy_targets_echo_contents(seed in any::<u64>(), n in 2usize..7, lo in 1usize..6, extra in 0usize..10) {
        let mut rng = SeededRng::new(seed);
        let s = gen_copy_task(n, lo, lo + extra, &mut rng);
        let len = s.targets.len();
        prop_assert!((lo..=lo + extra).contains(&len));
        prop_assert_eq!(s.inputs.len(), len + 2);
        for (i, t) in s.targets.iter().enumerate() {
            let x = &s.inputs[i + 1];
            for r in 0..n {
                for c in 0..n {
                    prop_assert_eq!(x[(r, c)], t[(r, c)]);
                }
            }
            prop_assert!((0..=n).all(|c| x[(n, c)] == 0.0));
        }
        prop_assert_eq!(s.inputs[len + 1][(n, FLAG_EOF)], 1.0);
    }

    #[test]
    fn recall_target_is_item_after_query(seed in any::<u64>(), n in 2usize..5, item_len in 1usize..4, k in 2usize..7) {
        let mut rng = SeededRng::new(seed);
        let s = gen_assoc_recall(n, item_len, k, k, &mut rng);
        prop_assert_eq!(s.targets.len(), item_len);
        let TaskMeta::Recall { query, .. } = s.meta else { panic!("not a recall sample") };
        // item `query + 1` (1-based) starts after `query` wrapped items and its own sof
        let start = query * (item_len + 2) + 1;
        for (j, t) in s.targets.iter().enumerate() {
            let x = &s.inputs[start + j];
            for r in 0..n {
                for c in 0..n {
                    prop_assert_eq!(x[(r, c)], t[(r, c)]);
                }
            }
        }
        prop_assert_eq!(s.inputs.len(), k * (item_len + 2) + 1 + item_len);
    }
}
