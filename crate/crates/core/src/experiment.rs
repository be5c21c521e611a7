//! Multi-seed benchmark runs: G-CNN against the mean-pooling baseline,
//! filter-support and view-count ablations, and pose-jitter curves.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::mvnet::model::{Model, SupportSpec};
use crate::mvnet::train::{evaluate, pose_jitter_eval, run_experiment, EvalOptions, ExperimentConfig, ViewSubset};
use crate::synth::{render_views, Dataset, Instance, RenderSpec};

/// Outcome of one seeded training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub accuracy: f64,
    pub map: f64,
    pub seconds: f64,
}

/// A trained model together with the data it was trained and tested on.
pub struct Trained {
    pub run: SeedRun,
    pub model: Model,
    pub data: Dataset,
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// `base` with data, initialization and shuffling all driven by `seed`.
pub fn seeded(base: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.data.seed = seed;
    cfg.train.seed = seed;
    cfg
}

/// The mean-pooling MVCNN baseline: no G-Conv layers, everything else equal.
pub fn baseline_of(base: &ExperimentConfig) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.model.head_widths.clear();
    cfg
}

pub fn train_seeds(base: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<Trained>> {
    seeds
        .iter()
        .map(|&seed| {
            let start = Instant::now();
            let (outcome, data, test) = run_experiment(&seeded(base, seed))?;
            let run = SeedRun {
                seed,
                accuracy: test.accuracy,
                map: test.retrieval.map_micro,
                seconds: start.elapsed().as_secs_f64(),
            };
            log::info!("seed {seed}: acc {:.4} mAP {:.4} ({:.1}s)", run.accuracy, run.map, run.seconds);
            Ok(Trained { run, model: outcome.model, data })
        })
        .collect()
}

/// Largest deviation of the classifier input when the object is rotated by
/// each element of the camera group before rendering. Only meaningful for
/// grouped configurations, where such a rotation permutes the views.
pub fn rotation_invariance(model: &Model, instances: &[Instance], render: &RenderSpec) -> Result<f64> {
    let camera = model.camera();
    if !camera.kind().is_grouped() {
        return Err(param_err!("rotation invariance needs a grouped view configuration"));
    }
    let group = camera.group().clone();
    let mut worst = 0.0f64;
    for inst in instances {
        let shape = inst.shape()?;
        let (base, _) = model.infer(&render_views(&shape, camera.poses(), render)?, 1, None)?;
        for k in 0..group.order() {
            let moved = shape.rotated(group.element(k));
            let (d, _) = model.infer(&render_views(&moved, camera.poses(), render)?, 1, None)?;
            worst = worst.max(d.max_abs_diff(&base));
        }
    }
    Ok(worst)
}

/// Mean test accuracy per support size.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupportAblation {
    pub sizes: Vec<usize>,
    pub runs: Vec<Vec<SeedRun>>,
}

impl SupportAblation {
    pub fn mean_accuracy(&self) -> Vec<f64> {
        self.runs.iter().map(|r| mean(r.iter().map(|x| x.accuracy))).collect()
    }
}

pub fn support_ablation(base: &ExperimentConfig, sizes: &[usize], seeds: &[u64]) -> Result<SupportAblation> {
    let mut runs = Vec::new();
    for &n in sizes {
        let mut cfg = base.clone();
        cfg.model.support = SupportSpec::Greedy(n);
        log::info!("support {n}");
        runs.push(train_seeds(&cfg, seeds)?.into_iter().map(|t| t.run).collect());
    }
    Ok(SupportAblation { sizes: sizes.to_vec(), runs })
}

/// Test accuracy of each trained model when only `count` random views per
/// instance are available, averaged over the models.
pub fn view_ablation(models: &[Trained], render: &RenderSpec, counts: &[usize], seed: u64) -> Result<Vec<(usize, f64)>> {
    counts
        .iter()
        .map(|&count| {
            let accs = models
                .iter()
                .map(|t| {
                    let views = if count >= t.model.camera().len() {
                        ViewSubset::All
                    } else {
                        ViewSubset::Random { count, seed }
                    };
                    Ok(evaluate(&t.model, &t.data.test, render, &EvalOptions { views, ..Default::default() })?.accuracy)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((count, mean(accs)))
        })
        .collect()
}

/// Accuracy and mAP at each σ (degrees), averaged over models and jitter seeds.
pub fn jitter_curve(models: &[Trained], render: &RenderSpec, sigmas: &[f64], seeds: &[u64]) -> Result<Vec<(f64, f64, f64)>> {
    let mut acc = vec![Vec::new(); sigmas.len()];
    let mut map = vec![Vec::new(); sigmas.len()];
    for t in models {
        for &seed in seeds {
            for (i, (_, r)) in pose_jitter_eval(&t.model, &t.data.test, render, sigmas, seed)?.into_iter().enumerate() {
                acc[i].push(r.accuracy);
                map[i].push(r.retrieval.map_micro);
            }
        }
    }
    Ok(sigmas.iter().enumerate().map(|(i, &s)| (s, mean(acc[i].iter().copied()), mean(map[i].iter().copied()))).collect())
}

/// Whether `values` never increase by more than `slack` from one entry to the next.
pub fn non_increasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_helper() {
        assert!(non_increasing(&[0.9, 0.9, 0.8], 0.0));
        assert!(!non_increasing(&[0.8, 0.81], 0.0));
        assert!(non_increasing(&[0.8, 0.805], 0.01));
        assert_eq!(mean([1.0, 2.0, 3.0]), 2.0);
    }
}
