//! Training loop, evaluation, pose-jitter evaluation and checkpoints.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::io::{config_hash, read_tensors, write_tensors, DType};
use crate::mvnet::loss::ClassCache;
use crate::mvnet::model::{Model, ModelConfig, Param};
use crate::mvnet::retrieval::{leave_one_out, RetrievalMetrics};
use crate::synth::{jitter_rotation, make_dataset, render_views, Dataset, DatasetMode, Instance, RenderSpec};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::views::CameraPose;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Margin of the auxiliary triplet loss; `None` trains with cross-entropy only.
    pub triplet_margin: Option<f64>,
    /// Inclusive range of views kept per mini-batch; `None` keeps all.
    pub view_dropout: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            batch_size: 8,
            base_lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            triplet_margin: None,
            view_dropout: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 2 {
            return Err(param_err!("training needs at least 2 epochs (1 warmup + decay)"));
        }
        if self.batch_size == 0 || !(self.base_lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(param_err!("batch size, learning rate and momentum out of range"));
        }
        if let Some((lo, hi)) = self.view_dropout {
            if lo == 0 || lo > hi {
                return Err(param_err!("view dropout range must satisfy 1 ≤ lo ≤ hi"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub mode: DatasetMode,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { classes: 8, n_train: 100, n_test: 30, mode: DatasetMode::RotatedSO3, seed: 0 }
    }
}

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub render: RenderSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Linear warmup over the first epoch, then a cosine quarter-cycle to zero.
/// `t` is measured in optimizer steps and may be fractional.
pub fn lr_schedule(t: f64, steps_per_epoch: usize, total_steps: usize, base_lr: f64) -> f64 {
    let warm = steps_per_epoch as f64;
    let total = total_steps as f64;
    let t = t.clamp(0.0, total);
    if t <= warm {
        base_lr * t / warm
    } else {
        let progress = (t - warm) / (total - warm);
        base_lr * (0.5 * std::f64::consts::PI * progress).cos()
    }
}

/// Worker count from `FINROT_THREADS`, else the available parallelism.
pub fn threads() -> usize {
    std::env::var("FINROT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Views of one instance, optionally with every camera perturbed by an
/// independent random rotation about the object center.
pub fn instance_views(inst: &Instance, poses: &[CameraPose], spec: &RenderSpec, jitter: Option<(f64, u64)>) -> Result<Tensor> {
    let shape = inst.shape()?;
    match jitter {
        None => render_views(&shape, poses, spec),
        Some((sigma, seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let moved: Vec<CameraPose> = poses.iter().map(|p| p.rotated(&jitter_rotation(&mut rng, sigma))).collect();
            render_views(&shape, &moved, spec)
        }
    }
}

fn select_views(all: &Tensor, views_per_sample: usize, present: &[bool]) -> Result<Tensor> {
    let px = all.len() / all.dim(0);
    let mut data = Vec::new();
    for (i, _) in present.iter().enumerate().filter(|(_, p)| **p) {
        data.extend_from_slice(&all.data()[i * px..(i + 1) * px]);
    }
    let mut shape = all.shape().to_vec();
    shape[0] = present.iter().filter(|p| **p).count();
    debug_assert_eq!(all.dim(0) % views_per_sample, 0);
    Tensor::from_vec(&shape, data)
}

fn stack(views: &[Tensor]) -> Result<Tensor> {
    let mut shape = views[0].shape().to_vec();
    shape[0] = views.iter().map(|v| v.dim(0)).sum();
    let mut data = Vec::with_capacity(views.iter().map(|v| v.len()).sum());
    for v in views {
        data.extend_from_slice(v.data());
    }
    Tensor::from_vec(&shape, data)
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub acc: f64,
    pub map: Option<f64>,
}

pub fn metrics_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,split,loss,acc,mAP\n");
    for e in log {
        let map = e.map.map(|m| format!("{m:.6}")).unwrap_or_default();
        let _ = writeln!(s, "{},{},{:.6},{:.6},{}", e.epoch, e.split, e.loss, e.acc, map);
    }
    s
}

struct Sgd {
    velocity: Vec<Tensor>,
    momentum: f64,
    weight_decay: f64,
}

impl Sgd {
    fn new(params: &[Param], momentum: f64, weight_decay: f64) -> Self {
        Sgd { velocity: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(), momentum, weight_decay }
    }

    /// Nesterov momentum: `v ← μv + g`, `p ← p − lr·(g + μv)`.
    fn step(&mut self, params: &mut [Param], grads: &[Tensor], lr: f64) {
        for ((p, g), v) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            if p.is_buffer() {
                continue;
            }
            let decay = if p.name.ends_with(".b") { 0.0 } else { self.weight_decay };
            let pd = p.value.data_mut();
            for ((w, gi), vi) in pd.iter_mut().zip(g.data()).zip(v.data_mut()) {
                let grad = gi + decay * *w;
                *vi = self.momentum * *vi + grad;
                *w -= lr * (grad + self.momentum * *vi);
            }
        }
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
}

/// Trains on `data.train` with views rendered on the fly. Deterministic in
/// `cfg.seed`. A non-finite loss aborts with the offending step.
pub fn train(model: Model, data: &Dataset, render: &RenderSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = model;
    let poses = model.camera().poses().to_vec();
    let v = poses.len();
    let steps_per_epoch = data.train.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut opt = Sgd::new(&model.params, cfg.momentum, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00);
    let mut cache = ClassCache::new(model.cfg.classes);
    let mut log = Vec::new();
    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len();
            let kept: Vec<bool> = match cfg.view_dropout {
                None => vec![true; v],
                Some((lo, hi)) => {
                    let m = rng.gen_range(lo.min(v)..=hi.min(v));
                    let mut keep = vec![false; v];
                    for i in sample(&mut rng, v, m) {
                        keep[i] = true;
                    }
                    keep
                }
            };
            let present: Vec<bool> = (0..b).flat_map(|_| kept.iter().copied()).collect();
            let rendered = batch
                .iter()
                .map(|&i| instance_views(&data.train[i], &poses, render, None))
                .collect::<Result<Vec<_>>>()?;
            let views = select_views(&stack(&rendered)?, v, &present)?;
            let labels: Vec<usize> = batch.iter().map(|&i| data.train[i].class_id).collect();
            let mut tape = Tape::new();
            let f = model.forward_train(&mut tape, &views, b, Some(&present))?;
            let mut loss = tape.cross_entropy(f.logits, &labels)?;
            if let Some(alpha) = cfg.triplet_margin {
                let desc = tape.value(f.embedding).clone();
                let d = desc.dim(1);
                let pairs = (0..b).map(|r| cache.pair(&desc.data()[r * d..(r + 1) * d], labels[r])).collect();
                let t = tape.triplet(f.embedding, pairs, alpha)?;
                loss = tape.add_scaled(loss, t, 1.0)?;
                for (r, &l) in labels.iter().enumerate() {
                    cache.update(l, &desc.data()[r * d..(r + 1) * d]);
                }
            }
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::Numeric(format!("loss became {lv} at epoch {epoch}, step {step}")));
            }
            let logits = tape.value(f.logits).clone();
            let k = logits.dim(1);
            correct += (0..b).filter(|&r| argmax(&logits.data()[r * k..(r + 1) * k]) == labels[r]).count();
            loss_sum += lv * b as f64;
            seen += b;
            let grads = tape.backward(loss)?;
            let gs: Vec<Tensor> = f.params.iter().map(|p| grads.wrt(*p)).collect();
            if gs.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient at epoch {epoch}, step {step}")));
            }
            let lr = lr_schedule(step as f64 + 0.5, steps_per_epoch, total, cfg.base_lr);
            opt.step(&mut model.params, &gs, lr);
            if let Some((mean, var)) = &f.batch_stats {
                model.update_running_stats(mean, var);
            }
            step += 1;
        }
        let entry = EpochLog { epoch, split: "train".into(), loss: loss_sum / seen as f64, acc: correct as f64 / seen as f64, map: None };
        log::info!("epoch {epoch}: loss {:.4} acc {:.3}", entry.loss, entry.acc);
        log.push(entry);
    }
    Ok(TrainOutcome { model, log })
}

/// Which views are used at test time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ViewSubset {
    All,
    /// `m` views chosen at random per instance.
    Random { count: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub views: ViewSubset,
    /// `(σ in degrees, seed)` for camera pose perturbation.
    pub jitter: Option<(f64, u64)>,
    pub rerank: bool,
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { views: ViewSubset::All, jitter: None, rerank: false, batch_size: 8 }
    }
}

#[derive(Clone, Debug)]
pub struct EvalResult {
    pub loss: f64,
    pub accuracy: f64,
    pub retrieval: RetrievalMetrics,
    pub descriptors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub predicted: Vec<usize>,
}

fn instance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(index as u64)
}

fn eval_chunk(
    model: &Model,
    items: &[(usize, &Instance)],
    render: &RenderSpec,
    opts: &EvalOptions,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let poses = model.camera().poses();
    let v = poses.len();
    let mut out = Vec::with_capacity(items.len());
    for batch in items.chunks(opts.batch_size.max(1)) {
        let mut rendered = Vec::with_capacity(batch.len());
        let mut present = Vec::with_capacity(batch.len() * v);
        for &(idx, inst) in batch {
            let jitter = opts.jitter.map(|(s, seed)| (s, instance_seed(seed, idx)));
            rendered.push(instance_views(inst, poses, render, jitter)?);
            match opts.views {
                ViewSubset::All => present.extend(std::iter::repeat(true).take(v)),
                ViewSubset::Random { count, seed } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(seed ^ 0x5649_4557, idx));
                    let mut keep = vec![false; v];
                    for i in sample(&mut rng, v, count.clamp(1, v)) {
                        keep[i] = true;
                    }
                    present.extend(keep);
                }
            }
        }
        let views = select_views(&stack(&rendered)?, v, &present)?;
        let (d, l) = model.infer(&views, batch.len(), Some(&present))?;
        let (dd, kk) = (d.dim(1), l.dim(1));
        for r in 0..batch.len() {
            out.push((d.data()[r * dd..(r + 1) * dd].to_vec(), l.data()[r * kk..(r + 1) * kk].to_vec()));
        }
    }
    Ok(out)
}

/// Classification and leave-one-out retrieval over `instances`.
pub fn evaluate(model: &Model, instances: &[Instance], render: &RenderSpec, opts: &EvalOptions) -> Result<EvalResult> {
    if instances.is_empty() {
        return Err(param_err!("nothing to evaluate"));
    }
    let items: Vec<(usize, &Instance)> = instances.iter().enumerate().collect();
    let workers = threads().min(items.len()).max(1);
    let per = items.len().div_ceil(workers);
    let outputs: Vec<(Vec<f64>, Vec<f64>)> = if workers == 1 {
        eval_chunk(model, &items, render, opts)?
    } else {
        let parts: Vec<Result<Vec<_>>> = std::thread::scope(|s| {
            let handles: Vec<_> =
                items.chunks(per).map(|chunk| s.spawn(move || eval_chunk(model, chunk, render, opts))).collect();
            handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
        });
        let mut all = Vec::with_capacity(items.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };
    let labels: Vec<usize> = instances.iter().map(|i| i.class_id).collect();
    let mut loss = 0.0;
    let mut predicted = Vec::with_capacity(labels.len());
    let mut descriptors = Vec::with_capacity(labels.len());
    for ((d, logits), &y) in outputs.into_iter().zip(&labels) {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
        loss += -(logits[y] - m - z.ln());
        predicted.push(argmax(&logits));
        descriptors.push(d);
    }
    let n = labels.len() as f64;
    let accuracy = predicted.iter().zip(&labels).filter(|(p, y)| p == y).count() as f64 / n;
    // all-zero descriptors (dead ReLUs) cannot be ranked by cosine distance
    let safe: Vec<Vec<f64>> = descriptors
        .iter()
        .map(|d| if d.iter().any(|v| *v != 0.0) { d.clone() } else { vec![1e-12; d.len()] })
        .collect();
    let retrieval = leave_one_out(&safe, &labels, &predicted, opts.rerank)?;
    Ok(EvalResult { loss: loss / n, accuracy, retrieval, descriptors, labels, predicted })
}

/// Accuracy and mAP at each perturbation level; the same random axes and
/// unit-normal angles are reused across levels.
pub fn pose_jitter_eval(
    model: &Model,
    instances: &[Instance],
    render: &RenderSpec,
    sigmas: &[f64],
    seed: u64,
) -> Result<Vec<(f64, EvalResult)>> {
    sigmas
        .iter()
        .map(|&s| {
            let jitter = if s == 0.0 { None } else { Some((s, seed)) };
            let opts = EvalOptions { jitter, ..Default::default() };
            Ok((s, evaluate(model, instances, render, &opts)?))
        })
        .collect()
}

/// Builds the dataset, trains, evaluates on the test split and returns the
/// trained model with its log (the test row carries mAP).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(TrainOutcome, Dataset, EvalResult)> {
    let d = &cfg.data;
    let data = make_dataset(d.classes, d.n_train, d.n_test, d.mode, d.seed)?;
    let mut mcfg = cfg.model.clone();
    mcfg.image_size = cfg.render.size;
    mcfg.classes = d.classes;
    let model = Model::new(mcfg, cfg.train.seed)?;
    let mut outcome = train(model, &data, &cfg.render, &cfg.train)?;
    let test = evaluate(&outcome.model, &data.test, &cfg.render, &EvalOptions::default())?;
    outcome.log.push(EpochLog {
        epoch: cfg.train.epochs,
        split: "test".into(),
        loss: test.loss,
        acc: test.accuracy,
        map: Some(test.retrieval.map_micro),
    });
    Ok((outcome, data, test))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckpointManifest {
    pub model: ModelConfig,
    pub group_hash: String,
    pub config_hash: String,
    pub experiment: Option<ExperimentConfig>,
    pub tensors: String,
}

/// Writes `<dir>/model.tensor` and `<dir>/checkpoint.json`.
pub fn save_checkpoint(dir: &Path, model: &Model, experiment: Option<&ExperimentConfig>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let named: Vec<(&str, &Tensor)> = model.params.iter().map(|p| (p.name.as_str(), &p.value)).collect();
    write_tensors(&dir.join("model.tensor"), &named, DType::F64)?;
    let manifest = CheckpointManifest {
        model: model.cfg.clone(),
        group_hash: model.group().hash(),
        config_hash: config_hash(model.camera()),
        experiment: experiment.cloned(),
        tensors: "model.tensor".into(),
    };
    std::fs::write(dir.join("checkpoint.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointManifest)> {
    let manifest: CheckpointManifest = serde_json::from_slice(&std::fs::read(dir.join("checkpoint.json"))?)?;
    let tensors = read_tensors(&dir.join(&manifest.tensors))?;
    let params = tensors.into_iter().map(|(name, value)| Param { name, value }).collect();
    let model = Model::from_params(manifest.model.clone(), params)?;
    if model.group().hash() != manifest.group_hash || config_hash(model.camera()) != manifest.config_hash {
        return Err(Error::Verification("checkpoint was written for a different group or camera configuration".into()));
    }
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let (spe, total, base) = (10, 50, 0.1);
        assert_eq!(lr_schedule(0.0, spe, total, base), 0.0);
        assert!((lr_schedule(10.0, spe, total, base) - base).abs() < 1e-15);
        assert!(lr_schedule(50.0, spe, total, base).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for t in 10..=50 {
            let lr = lr_schedule(t as f64, spe, total, base);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn csv_has_header() {
        let log = vec![EpochLog { epoch: 1, split: "train".into(), loss: 0.5, acc: 0.25, map: None }];
        assert_eq!(metrics_csv(&log), "epoch,split,loss,acc,mAP\n1,train,0.500000,0.250000,\n");
    }

    #[test]
    fn rejects_single_epoch() {
        let cfg = TrainConfig { epochs: 1, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
