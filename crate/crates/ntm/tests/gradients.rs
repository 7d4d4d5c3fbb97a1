use matcap_core::SeededRng;
use matcap_ntm::gradcheck::{grad_check, GradCheckSetup};
use matcap_ntm::tasks::{content_token, random_bits};
use matcap_ntm::{Model, ModelConfig, ModelKind};

#[test]
fn default_checks_pass() {
    let reports = GradCheckSetup::default().run().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0].steps, 1);
    assert_eq!(reports[1].steps, 4);
    for r in &reports {
        assert!(r.checked >= 200);
        assert!(r.passed, "{r:?}");
    }
}

#[test]
fn matrnn_unroll_checks() {
    let s = GradCheckSetup {
        kind: ModelKind::MatRnn,
        ..GradCheckSetup::default()
    };
    for r in s.run().unwrap() {
        assert!(r.passed, "{r:?}");
    }
}

#[test]
fn longer_unroll_every_coordinate() {
    let config = ModelConfig::tiny(ModelKind::MatNtm);
    let model = Model::new(config.clone(), 9);
    let mut rng = SeededRng::new(10);
    let inputs: Vec<_> = (0..4).map(|_| content_token(&random_bits(2, &mut rng))).collect();
    let targets: Vec<_> = (0..4).map(|_| random_bits(2, &mut rng)).collect();
    let r = grad_check(&model, &inputs, &targets, usize::MAX, 1e-4, 1e-6, 1e-4, 1).unwrap();
    assert_eq!(r.checked, model.param_count());
    assert!(r.passed, "{r:?}");
}
