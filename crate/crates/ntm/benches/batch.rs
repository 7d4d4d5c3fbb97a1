use criterion::{criterion_group, criterion_main, Criterion};
use matcap_core::{par, SeededRng};
use matcap_ntm::tasks::{generate, TaskParams};
use matcap_ntm::{Model, ModelConfig, ModelKind, TaskKind};

fn bench_batch(c: &mut Criterion) {
    let mut g = c.benchmark_group("copy_batch_grads");
    g.sample_size(10);
    for kind in [ModelKind::MatNtm, ModelKind::MatRnn] {
        let model = Model::new(ModelConfig::copy(kind), 1);
        let mut rng = SeededRng::new(5);
        let params = TaskParams {
            len_max: 10,
            ..TaskParams::default()
        };
        let batch: Vec<_> = (0..16).map(|_| generate(TaskKind::Copy, &params, &mut rng)).collect();
        let pass = |i: usize| model.loss_and_grads(&batch[i].inputs, &batch[i].targets).unwrap().0;
        g.bench_function(format!("{kind}/parallel"), |b| b.iter(|| par::map_indexed(16, pass)));
        g.bench_function(format!("{kind}/sequential"), |b| b.iter(|| par::map_indexed_seq(16, pass)));
    }
    g.finish();
}

criterion_group!(benches, bench_batch);
criterion_main!(benches);
