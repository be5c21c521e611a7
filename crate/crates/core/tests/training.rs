//! End-to-end training behaviour on small synthetic problems.

use std::sync::OnceLock;

use finrot::experiment::rotation_invariance;
use finrot::mvnet::train::{run_experiment, DataConfig, ExperimentConfig, TrainOutcome};
use finrot::mvnet::{train, Model, ModelConfig, TrainConfig};
use finrot::synth::{make_dataset, render_views, Dataset, DatasetMode, RenderSpec};
use finrot::tape::Tape;
use finrot::tensor::Tensor;
use nalgebra::{DMatrix, DVector};

fn two_class_config() -> ExperimentConfig {
    ExperimentConfig {
        data: DataConfig { classes: 2, n_train: 40, n_test: 6, mode: DatasetMode::RotatedSO3, seed: 3 },
        model: ModelConfig {
            encoder_widths: vec![8, 16, 16],
            encoder_strides: vec![2, 2, 2],
            proj_dim: 16,
            head_widths: vec![16, 16],
            classes: 2,
            ..Default::default()
        },
        train: TrainConfig { epochs: 5, seed: 3, ..Default::default() },
        ..Default::default()
    }
}

fn smoke() -> &'static (TrainOutcome, Dataset) {
    static RUN: OnceLock<(TrainOutcome, Dataset)> = OnceLock::new();
    RUN.get_or_init(|| {
        let (outcome, data, _) = run_experiment(&two_class_config()).unwrap();
        (outcome, data)
    })
}

#[test]
fn two_classes_are_learned() {
    let (outcome, _) = smoke();
    let last = outcome.log.iter().filter(|e| e.split == "train").last().unwrap();
    assert!(last.acc >= 0.95, "final train accuracy {}", last.acc);
    assert!(last.loss < outcome.log[0].loss);
}

#[test]
fn trained_descriptor_is_rotation_invariant() {
    let (outcome, data) = smoke();
    let worst = rotation_invariance(&outcome.model, &data.test[..2], &RenderSpec::default()).unwrap();
    assert!(worst < 1e-9, "descriptor moved by {worst}");
}

#[test]
fn training_is_bitwise_deterministic() {
    let mut cfg = two_class_config();
    cfg.data.n_train = 4;
    cfg.train.epochs = 2;
    cfg.train.view_dropout = Some((5, 60));
    let a = run_experiment(&cfg).unwrap().0.model;
    let b = run_experiment(&cfg).unwrap().0.model;
    for (p, q) in a.params.iter().zip(&b.params) {
        assert_eq!(p.name, q.name);
        assert!(p.value.data().iter().zip(q.value.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", p.name);
    }
}

fn views_of(model: &Model, data: &Dataset, i: usize) -> Tensor {
    render_views(&data.test[i].shape().unwrap(), model.camera().poses(), &RenderSpec::default()).unwrap()
}

fn keep(views: &Tensor, present: &[bool]) -> Tensor {
    let px = views.len() / views.dim(0);
    let mut shape = views.shape().to_vec();
    shape[0] = present.iter().filter(|p| **p).count();
    let data = present.iter().enumerate().filter(|(_, p)| **p).flat_map(|(i, _)| views.data()[i * px..(i + 1) * px].to_vec()).collect();
    Tensor::from_vec(&shape, data).unwrap()
}

#[test]
fn missing_views_stay_finite() {
    let data = make_dataset(2, 0, 2, DatasetMode::RotatedSO3, 1).unwrap();
    for spec in ["12x5", "20x3"] {
        let model = Model::new(ModelConfig { views: spec.into(), classes: 2, ..Default::default() }, 1).unwrap();
        let families = model.camera().in_plane_families().unwrap();
        let mut present = vec![true; model.camera().len()];
        for &i in &families[0].1 {
            present[i] = false;
        }
        let views = keep(&views_of(&model, &data, 0), &present);
        let (d, l) = model.infer(&views, 1, Some(&present)).unwrap();
        assert!(d.is_finite() && l.is_finite(), "{spec}");
    }
    let model = Model::new(ModelConfig { classes: 2, ..Default::default() }, 1).unwrap();
    let mut present = vec![false; 60];
    present[17] = true;
    let (d, l) = model.infer(&keep(&views_of(&model, &data, 1), &present), 1, Some(&present)).unwrap();
    assert!(d.is_finite() && l.is_finite());
}

#[test]
fn zero_views_reach_the_classifier_as_its_bias() {
    let cfg = ModelConfig { descriptor_norm: false, classes: 3, ..Default::default() };
    let mut model = Model::new(cfg, 4).unwrap();
    model.param_mut("classifier.b").unwrap().data_mut().copy_from_slice(&[0.25, -1.5, 0.75]);
    let views = Tensor::zeros(&[60, 16, 16, 1]);
    let mut tape = Tape::new();
    let f = model.forward(&mut tape, &views, 1, None).unwrap();
    assert!(tape.value(f.descriptor).data().iter().all(|&x| x == 0.0));
    assert_eq!(tape.value(f.logits).data(), &[0.25, -1.5, 0.75]);
}

#[test]
fn short_training_reduces_the_loss_on_aligned_data() {
    let data = make_dataset(2, 6, 0, DatasetMode::Aligned, 8).unwrap();
    let cfg = ModelConfig { views: "12x5".into(), classes: 2, head_widths: vec![8], proj_dim: 8, ..Default::default() };
    let model = Model::new(cfg, 8).unwrap();
    let out = train(model, &data, &RenderSpec::default(), &TrainConfig { epochs: 4, batch_size: 4, ..Default::default() }).unwrap();
    assert!(out.log.last().unwrap().loss < out.log[0].loss);
}

/// Mean over all 60 views of each pixel: a crude, nearly pose-free feature.
fn pooled_pixels(data: &[finrot::synth::Instance], model: &Model) -> (DMatrix<f64>, Vec<usize>) {
    let spec = RenderSpec::default();
    let px = spec.size * spec.size;
    let mut rows = Vec::new();
    for inst in data {
        let v = render_views(&inst.shape().unwrap(), model.camera().poses(), &spec).unwrap();
        let n = v.dim(0);
        let mut mean = vec![0.0; px + 1];
        for i in 0..n {
            for (m, x) in mean.iter_mut().zip(&v.data()[i * px..(i + 1) * px]) {
                *m += x / n as f64;
            }
        }
        mean[px] = 1.0;
        rows.push(mean);
    }
    let labels = data.iter().map(|i| i.class_id).collect();
    (DMatrix::from_fn(rows.len(), px + 1, |i, j| rows[i][j]), labels)
}

#[test]
fn classes_are_separable_by_a_linear_probe() {
    // dumbbell vs mushroom: not a mirror pair, so silhouettes alone differ
    let data = make_dataset(2, 100, 0, DatasetMode::RotatedSO3, 21).unwrap();
    let model = Model::new(ModelConfig { classes: 2, ..Default::default() }, 0).unwrap();
    let (x, labels) = pooled_pixels(&data.train, &model);
    let split = 150;
    let fit = x.rows(0, split).into_owned();
    let y = DVector::from_iterator(split, labels[..split].iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }));
    let gram = fit.transpose() * &fit + DMatrix::identity(x.ncols(), x.ncols()) * 1e-2;
    let w = gram.cholesky().unwrap().solve(&(fit.transpose() * y));
    let held = x.rows(split, x.nrows() - split) * w;
    let correct = held.iter().zip(&labels[split..]).filter(|(s, &l)| (**s > 0.0) == (l == 1)).count();
    let acc = correct as f64 / held.len() as f64;
    assert!(acc > 0.8, "probe accuracy {acc}");
}
