//! Reverse-mode gradients against central differences.

mod common;

use common::{check_primitive, max_rel_err, numeric_grad, primitives, random_encoder, random_ids};
use ligas::label::Label;
use ligas::model::TargetSpace;
use ligas::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: u64 = 100;

#[test]
fn every_primitive_matches_finite_differences() {
    for p in primitives() {
        let mut worst: f64 = 0.0;
        for case in 0..CASES {
            let mut rng = ChaCha8Rng::seed_from_u64(case);
            worst = worst.max(check_primitive(&p, &mut rng));
        }
        assert!(worst <= 1e-4, "{}: max relative error {worst:e}", p.name);
    }
}

#[test]
fn encoder_embedding_gradient() {
    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let model = random_encoder(&mut rng);
        let ids = random_ids(&mut rng, model.config().vocab_size, model.config().max_seq_len);
        let e = model.embed(&ids).unwrap();
        let class = rng.gen_range(0..2);
        let space = if case % 2 == 0 {
            TargetSpace::Logit
        } else {
            TargetSpace::Probability
        };
        let (_, analytic) = model.target_value_and_grad(&e, class, space).unwrap();
        let f = |x: &Tensor| model.target_value(x, class, space).unwrap();
        worst = worst.max(max_rel_err(&analytic, &numeric_grad(&f, &e)));
    }
    assert!(worst <= 1e-3, "max relative error {worst:e}");
}

#[test]
fn encoder_parameter_gradient() {
    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + case);
        let model = random_encoder(&mut rng);
        let (v, m) = (model.config().vocab_size, model.config().max_seq_len);
        let a = random_ids(&mut rng, v, m);
        let b = random_ids(&mut rng, v, m);
        let batch = [(a.as_slice(), Label::LA), (b.as_slice(), Label::LUA)];
        let (_, grads) = model.loss_and_grads(&batch).unwrap();
        for (k, (_, value)) in model.named_tensors().enumerate() {
            let f = |probe: &Tensor| {
                let mut m = model.clone();
                m.param_data_mut(k).copy_from_slice(probe.data());
                m.loss_and_grads(&batch).unwrap().0
            };
            worst = worst.max(max_rel_err(&grads[k], &numeric_grad(&f, value)));
        }
    }
    assert!(worst <= 1e-3, "max relative error {worst:e}");
}
