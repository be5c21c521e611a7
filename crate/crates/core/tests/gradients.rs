//! Central-difference checks of the reverse-mode tape.

use finrot::mvnet::{Model, ModelConfig, SupportSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use finrot::tape::Tape;
use finrot::tensor::Tensor;

const STEP: f64 = 1e-5;
const RTOL: f64 = 1e-5;
// central-difference noise floor for O(1) losses at this step
const ATOL: f64 = 1e-8;

fn loss_of(model: &Model, views: &Tensor, batch: usize, labels: &[usize], training: bool) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let f = if training {
        model.forward_train(&mut tape, views, batch, None).unwrap()
    } else {
        model.forward(&mut tape, views, batch, None).unwrap()
    };
    let loss = tape.cross_entropy(f.logits, labels).unwrap();
    let value = tape.value(loss).item();
    let grads = tape.backward(loss).unwrap();
    (value, f.params.iter().map(|p| grads.wrt(*p)).collect())
}

fn tiny_model(head: Vec<usize>, views: &str) -> Model {
    let cfg = ModelConfig {
        views: views.into(),
        image_size: 16,
        encoder_widths: vec![3, 4],
        encoder_strides: vec![2, 2],
        proj_dim: 8,
        head_widths: head,
        support: SupportSpec::Greedy(4),
        classes: 2,
        ..Default::default()
    };
    let mut m = Model::new(cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in m.params.iter_mut().filter(|p| p.name.ends_with(".b") || p.is_buffer()) {
        for v in p.value.data_mut() {
            *v = if p.name.ends_with(".var") { rng.gen_range(0.5..2.0) } else { rng.gen_range(-0.1..0.1) };
        }
    }
    m
}

// Continuous random views keep pre-activations off the ReLU kinks; rendered
// depth maps have large constant regions that can sit within a step of one.
fn check(model: &mut Model, training: bool) {
    let v = model.camera().len();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let views = Tensor::from_vec(&[2 * v, 16, 16, 1], (0..2 * v * 256).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let labels = [0, 1];
    let (_, grads) = loss_of(model, &views, 2, &labels, training);
    let mut worst = (0.0f64, String::new());
    for p in 0..model.params.len() {
        let n = model.params[p].value.len();
        // a spread of coordinates per tensor keeps the check fast
        let picks: Vec<usize> = if n <= 24 { (0..n).collect() } else { (0..24).map(|i| i * n / 24).collect() };
        if model.params[p].is_buffer() {
            continue;
        }
        for i in picks {
            let orig = model.params[p].value.data()[i];
            let mut at = |x: f64| {
                model.params[p].value.data_mut()[i] = x;
                let l = loss_of(model, &views, 2, &labels, training).0;
                model.params[p].value.data_mut()[i] = orig;
                l
            };
            let (up, down) = (at(orig + STEP), at(orig - STEP));
            let analytic = grads[p].data()[i];
            let rel_err = |numeric: f64| ((numeric - analytic).abs() - ATOL).max(0.0) / numeric.abs().max(analytic.abs()).max(1e-300);
            let mut numeric = (up - down) / (2.0 * STEP);
            if rel_err(numeric) >= RTOL {
                // a central difference that moves when the step shrinks means a
                // ReLU kink lies within the step; the loss is smooth only closer in
                let mut central = |h: f64| (at(orig + h) - at(orig - h)) / (2.0 * h);
                let finer = central(STEP / 10.0);
                if (finer - numeric).abs() > RTOL * finer.abs().max(numeric.abs()) + ATOL {
                    numeric = central(STEP / 100.0);
                }
            }
            let rel = rel_err(numeric);
            if rel > worst.0 {
                worst = (rel, format!("{}[{i}] numeric {numeric:e} analytic {analytic:e}", model.params[p].name));
            }
        }
    }
    assert!(worst.0 < RTOL, "worst relative error {:e} at {}", worst.0, worst.1);
}

#[test]
fn end_to_end_two_gconv_layers() {
    check(&mut tiny_model(vec![8, 8], "60x1"), false);
    check(&mut tiny_model(vec![8, 8], "60x1"), true);
}

#[test]
fn end_to_end_mean_pooling_baseline() {
    check(&mut tiny_model(vec![], "60x1"), true);
}

#[test]
fn end_to_end_hcorr_lift() {
    check(&mut tiny_model(vec![6, 5], "aligned12"), false);
}

