//! Network definition: view encoder, assembly onto the group or space, the
//! G-CNN head and the classifier.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv2d::{Conv2dSpec, WidthPadding};
use crate::error::{param_err, Error, Result};
use crate::group::{FiniteGroup, GroupName};
use crate::hspace::{shared_hspace, HSpace, HSpaceKind};
use crate::polar::{image_center, log_polar, PolarSpec};
use crate::signal::{gconv_table, hcorr_table, GatherTable};
use crate::tape::{Pool, Tape, Var};
use crate::tensor::Tensor;
use crate::views::{gen_config, CameraConfig, ConfigKind, ViewSpace};

/// Filter support of the G-Conv layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupportSpec {
    /// Identity plus `n − 1` smallest rotations chosen greedily for coverage.
    Greedy(usize),
    /// Explicit element indices.
    Explicit(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub views: String,
    pub image_size: usize,
    /// Encode log-polar images `(R, Θ)` instead of the raw views.
    pub polar: Option<(usize, usize)>,
    pub encoder_widths: Vec<usize>,
    /// Stride along the image rows (the radial axis in polar mode).
    pub encoder_strides: Vec<usize>,
    /// Standardize each encoder feature map per view and channel over its
    /// spatial positions before the ReLU.
    pub encoder_norm: bool,
    /// Width of the projected per-view descriptor.
    pub proj_dim: usize,
    /// Output channels of each G-Conv layer; empty gives mean/max pooling of
    /// view descriptors (the MVCNN baseline).
    pub head_widths: Vec<usize>,
    pub support: SupportSpec,
    pub pool: Pool,
    /// Standardize each G-Conv output over the group rows, per sample and
    /// channel, before its ReLU (all layers but the last).
    pub group_norm: bool,
    /// Standardize the pooled descriptor per channel before the classifier:
    /// batch statistics while training, running statistics otherwise.
    pub descriptor_norm: bool,
    pub bias: bool,
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            views: "60x1".into(),
            image_size: 16,
            polar: None,
            encoder_widths: vec![8, 16, 32, 32],
            encoder_strides: vec![2, 2, 2, 1],
            encoder_norm: true,
            proj_dim: 32,
            head_widths: vec![32, 32, 32],
            support: SupportSpec::Greedy(9),
            pool: Pool::Mean,
            group_norm: true,
            descriptor_norm: true,
            bias: true,
            classes: 8,
        }
    }
}

/// Number of layers after which `support^L` covers the whole group, if ever.
pub fn layers_to_cover(group: &FiniteGroup, support: &[usize], max_layers: usize) -> Option<usize> {
    let mut reach = support.to_vec();
    reach.sort();
    reach.dedup();
    for l in 1..=max_layers {
        if reach.len() == group.order() {
            return Some(l);
        }
        reach = group.product_set(&reach, support);
    }
    None
}

/// Identity plus `size − 1` of the smallest nontrivial rotations, added one
/// at a time to minimize the depth needed to cover the group, then to
/// maximize the two-layer reach. Ties go to the lower element index.
pub fn greedy_support(group: &FiniteGroup, size: usize) -> Result<Vec<usize>> {
    let rotations = group.smallest_rotations();
    let Some(&(_, smallest)) = rotations.first() else {
        return Err(param_err!("the trivial group has no rotations to add"));
    };
    let candidates: Vec<usize> =
        rotations.into_iter().filter(|&(_, a)| (a - smallest).abs() < 1e-9).map(|(i, _)| i).collect();
    if size == 1 {
        return Ok(vec![0]);
    }
    if size == 0 || size > candidates.len() + 1 {
        return Err(param_err!("support size must be in 1..={}", candidates.len() + 1));
    }
    let mut support = vec![0];
    while support.len() < size {
        let best = candidates
            .iter()
            .filter(|c| !support.contains(c))
            .map(|&c| {
                let mut s = support.clone();
                s.push(c);
                let depth = layers_to_cover(group, &s, 12).unwrap_or(usize::MAX);
                let two = group.product_set(&s, &s).len();
                (c, depth, two)
            })
            .min_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)))
            .expect("candidates remain");
        support.push(best.0);
    }
    Ok(support)
}

/// One stored tensor: a learnable weight or a running-statistics buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    /// Buffers are updated from batch statistics, not by the optimizer.
    pub fn is_buffer(&self) -> bool {
        self.name.ends_with(".mean") || self.name.ends_with(".var")
    }
}

/// Momentum of the running descriptor statistics.
pub const NORM_MOMENTUM: f64 = 0.1;
const NORM_EPS: f64 = 1e-5;

/// How the per-view descriptors become the head's input rows.
#[derive(Clone, Debug)]
enum Layout {
    /// One view per group element.
    Group(Arc<FiniteGroup>),
    /// Views averaged per space point, lifted by an H-Corr first layer.
    Space(Arc<HSpace>),
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: Vec<Param>,
    camera: CameraConfig,
    layout: Layout,
    /// Signal row (or rows, with weights) fed by each view.
    view_rows: Vec<Vec<(usize, f64)>>,
    support: Vec<usize>,
    tables: Vec<Arc<GatherTable>>,
}

/// Values produced by one forward pass.
pub struct Forward {
    /// Per-view projected descriptors `[B·V, C₀]` (only present views).
    pub view_features: Var,
    /// Assembled head input `[B, N, C₀]`.
    pub assembled: Var,
    /// Output of each head layer, `[B, |G|, C]`.
    pub layers: Vec<Var>,
    /// Pooled invariant descriptor `[B, D]`.
    pub descriptor: Var,
    /// Classifier input: the descriptor after normalization (the descriptor
    /// itself when normalization is off). Used for retrieval.
    pub embedding: Var,
    pub logits: Var,
    pub params: Vec<Var>,
    /// Per-channel `(mean, biased variance)` of the descriptor over the
    /// batch when it was normalized with batch statistics.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

fn fan_in_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, gain: f64) -> Tensor {
    let bound = gain * (3.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect()).expect("shape matches")
}

impl Model {
    /// Builds a model with fan-in-scaled uniform weights and zero biases.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let camera = gen_config(cfg.views.parse()?, 3.0)?;
        let skeleton = Model::skeleton(cfg, camera)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let relu_gain = 2f64.sqrt();
        let params = skeleton
            .param_shapes()
            .into_iter()
            .map(|(name, shape, fan_in, is_bias)| {
                let value = if name.ends_with(".var") {
                    Tensor::full(&shape, 1.0)
                } else if is_bias {
                    Tensor::zeros(&shape)
                } else {
                    let gain = if name == "classifier.w" { 1.0 } else { relu_gain };
                    fan_in_uniform(&mut rng, &shape, fan_in, gain)
                };
                Param { name, value }
            })
            .collect();
        Ok(Model { params, ..skeleton })
    }

    /// Rebuilds a model from a configuration and stored parameters.
    pub fn from_params(cfg: ModelConfig, params: Vec<Param>) -> Result<Self> {
        let camera = gen_config(cfg.views.parse()?, 3.0)?;
        let skeleton = Model::skeleton(cfg, camera)?;
        let expected = skeleton.param_shapes();
        if expected.len() != params.len() {
            return Err(param_err!("checkpoint has {} tensors, architecture needs {}", params.len(), expected.len()));
        }
        for ((name, shape, _, _), p) in expected.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(param_err!("checkpoint tensor {} {:?} does not match {name} {shape:?}", p.name, p.value.shape()));
            }
        }
        Ok(Model { params, ..skeleton })
    }

    fn skeleton(cfg: ModelConfig, camera: CameraConfig) -> Result<Self> {
        if cfg.encoder_widths.is_empty() || cfg.encoder_widths.len() != cfg.encoder_strides.len() {
            return Err(param_err!("encoder widths and strides must be non-empty and of equal length"));
        }
        if cfg.proj_dim == 0 || cfg.encoder_widths.contains(&0) || cfg.head_widths.contains(&0) {
            return Err(param_err!("channel widths must be positive"));
        }
        if cfg.classes < 2 {
            return Err(param_err!("need at least two classes"));
        }
        let kind = camera.kind();
        let polar_families = cfg.polar.is_some() && matches!(kind, ConfigKind::V12x5 | ConfigKind::V20x3);
        let (layout, view_rows) = match camera.space() {
            ViewSpace::HSpace(h) => {
                (Layout::Space(h.clone()), camera.assignment().iter().map(|&x| vec![(x, 1.0)]).collect())
            }
            ViewSpace::Group(g) if polar_families => {
                // in-plane families collapse onto one space point each
                let hkind = if kind == ConfigKind::V12x5 { HSpaceKind::Vertices12 } else { HSpaceKind::Faces20 };
                let hs = shared_hspace(GroupName::Icosahedral, hkind)?;
                let per = g.order() / hs.len();
                let rows = camera.assignment().iter().map(|&e| vec![(hs.act_unchecked(e, hs.eta()), 1.0 / per as f64)]).collect();
                (Layout::Space(hs), rows)
            }
            ViewSpace::Group(g) => (Layout::Group(g.clone()), camera.assignment().iter().map(|&e| vec![(e, 1.0)]).collect()),
        };
        let group = match &layout {
            Layout::Group(g) => g.clone(),
            Layout::Space(h) => h.group().clone(),
        };
        if matches!(layout, Layout::Space(_)) && cfg.head_widths.is_empty() {
            return Err(param_err!("space-valued inputs need at least one (H-Corr) head layer"));
        }
        let support = match &cfg.support {
            SupportSpec::Greedy(n) => greedy_support(&group, *n)?,
            SupportSpec::Explicit(s) => s.clone(),
        };
        let mut tables = Vec::new();
        for l in 0..cfg.head_widths.len() {
            let t = match (&layout, l) {
                (Layout::Space(h), 0) => hcorr_table(h, &(0..h.len()).collect::<Vec<_>>())?,
                _ => gconv_table(&group, &support)?,
            };
            tables.push(t);
        }
        if !cfg.head_widths.is_empty() && group.generated_closure(&support)?.len() != group.order() {
            log::warn!("filter support does not generate the group; the receptive field stays in a subgroup");
        }
        Ok(Model { cfg, params: Vec::new(), camera, layout, view_rows, support, tables })
    }

    /// `(name, shape, fan_in, is_bias)` in storage order.
    fn param_shapes(&self) -> Vec<(String, Vec<usize>, usize, bool)> {
        let cfg = &self.cfg;
        let mut out = Vec::new();
        let mut cin = 1;
        for (i, &w) in cfg.encoder_widths.iter().enumerate() {
            out.push((format!("enc{i}.w"), vec![w, 3, 3, cin], 9 * cin, false));
            out.push((format!("enc{i}.b"), vec![w], 1, true));
            cin = w;
        }
        out.push(("proj.w".into(), vec![cfg.proj_dim, cin], cin, false));
        out.push(("proj.b".into(), vec![cfg.proj_dim], 1, true));
        let mut cin = cfg.proj_dim;
        for (l, &w) in cfg.head_widths.iter().enumerate() {
            let s = self.tables[l].support_len();
            out.push((format!("head{l}.w"), vec![w, cin, s], cin * s, false));
            if cfg.bias {
                out.push((format!("head{l}.b"), vec![w], 1, true));
            }
            cin = w;
        }
        if cfg.descriptor_norm {
            out.push(("norm.mean".into(), vec![cin], 1, true));
            out.push(("norm.var".into(), vec![cin], 1, true));
        }
        out.push(("classifier.w".into(), vec![cfg.classes, cin], cin, false));
        out.push(("classifier.b".into(), vec![cfg.classes], 1, true));
        out
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn camera(&self) -> &CameraConfig {
        &self.camera
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        self.camera.group()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Rows of the head's input signal.
    pub fn input_rows(&self) -> usize {
        match &self.layout {
            Layout::Group(g) => g.order(),
            Layout::Space(h) => h.len(),
        }
    }

    pub fn descriptor_dim(&self) -> usize {
        self.cfg.head_widths.last().copied().unwrap_or(self.cfg.proj_dim)
    }

    /// Converts rendered views `[M, H, W, 1]` into encoder inputs.
    pub fn prepare_views(&self, views: &Tensor) -> Result<Tensor> {
        let Some((r, t)) = self.cfg.polar else { return Ok(views.clone()) };
        let (m, h, w) = (views.dim(0), views.dim(1), views.dim(2));
        let spec = PolarSpec { radial: r, angular: t, r_range: Some((1.0, 0.5 * ((h * h + w * w) as f64).sqrt())) };
        let mut data = Vec::with_capacity(m * r * t);
        for i in 0..m {
            let img = Tensor::from_vec(&[h, w, 1], views.data()[i * h * w..(i + 1) * h * w].to_vec())?;
            data.extend_from_slice(log_polar(&img, image_center(&img), &spec)?.data.data());
        }
        Tensor::from_vec(&[m, r, t, 1], data)
    }

    fn conv_spec(&self, layer: usize) -> Conv2dSpec {
        let stride = self.cfg.encoder_strides[layer];
        match self.cfg.polar {
            Some(_) => Conv2dSpec { kernel: 3, stride_h: stride, stride_w: 1, pad: 1, width_padding: WidthPadding::Circular },
            None => Conv2dSpec { kernel: 3, stride_h: stride, stride_w: stride, pad: 1, width_padding: WidthPadding::Zero },
        }
    }

    /// Per-view descriptors `[M, C₀]` for encoder inputs `[M, H, W, 1]`.
    pub fn encode(&self, tape: &mut Tape, inputs: Var, params: &[Var]) -> Result<Var> {
        let mut x = inputs;
        for i in 0..self.cfg.encoder_widths.len() {
            x = tape.conv2d(x, params[2 * i], params[2 * i + 1], self.conv_spec(i))?;
            if self.cfg.encoder_norm {
                let shape = tape.value(x).shape().to_vec();
                let flat = tape.reshape(x, &[shape[0], shape[1] * shape[2], shape[3]])?;
                let normed = tape.group_norm(flat, 1e-5)?;
                x = tape.reshape(normed, &shape)?;
            }
            x = tape.relu(x);
        }
        x = tape.spatial_mean(x)?;
        let p = 2 * self.cfg.encoder_widths.len();
        tape.linear(x, params[p], params[p + 1])
    }

    /// Inference-mode forward pass. `views: [B·V, H, W, 1]` holds the present
    /// views of each sample in order; `present[b·V + i]` says whether view `i`
    /// of sample `b` is among them (all present when `None`).
    pub fn forward(&self, tape: &mut Tape, views: &Tensor, batch: usize, present: Option<&[bool]>) -> Result<Forward> {
        self.forward_mode(tape, views, batch, present, false)
    }

    /// Training-mode forward pass: the descriptor is normalized with the
    /// statistics of this batch (when the batch has more than one sample).
    pub fn forward_train(&self, tape: &mut Tape, views: &Tensor, batch: usize, present: Option<&[bool]>) -> Result<Forward> {
        self.forward_mode(tape, views, batch, present, true)
    }

    fn forward_mode(
        &self,
        tape: &mut Tape,
        views: &Tensor,
        batch: usize,
        present: Option<&[bool]>,
        training: bool,
    ) -> Result<Forward> {
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let v = self.camera.len();
        let all = vec![true; batch * v];
        let present = present.unwrap_or(&all);
        if present.len() != batch * v {
            return Err(param_err!("view mask has {} entries, expected {}", present.len(), batch * v));
        }
        let count = present.iter().filter(|p| **p).count();
        if views.shape().len() != 4 || views.dim(0) != count || count == 0 {
            return Err(param_err!("expected {count} present views as [M, H, W, 1], got {:?}", views.shape()));
        }
        let inputs = tape.constant(self.prepare_views(views)?);
        let feats = self.encode(tape, inputs, &params)?;
        let n = self.input_rows();
        let mut sources = vec![Vec::new(); batch * n];
        let mut row_present = vec![false; batch * n];
        let mut m = 0;
        for b in 0..batch {
            for i in 0..v {
                if present[b * v + i] {
                    for &(row, w) in &self.view_rows[i] {
                        sources[b * n + row].push((m, w));
                        row_present[b * n + row] = true;
                    }
                    m += 1;
                }
            }
        }
        // families with missing members are averaged over the present ones
        for srcs in sources.iter_mut() {
            let total: f64 = srcs.iter().map(|s| s.1).sum();
            if total > 0.0 {
                srcs.iter_mut().for_each(|s| s.1 /= total);
            }
        }
        // a missing view is stood in for by the mean feature of the sample's
        // present views; it commutes with the group action and keeps the
        // head's input statistics close to those seen with all views
        if matches!(self.layout, Layout::Group(_)) {
            let mut m0 = 0;
            for b in 0..batch {
                let here: Vec<usize> = (0..v).filter(|&i| present[b * v + i]).collect();
                let fill: Vec<(usize, f64)> = (0..here.len()).map(|j| (m0 + j, 1.0 / here.len() as f64)).collect();
                for r in 0..n {
                    if sources[b * n + r].is_empty() {
                        sources[b * n + r] = fill.clone();
                    }
                }
                m0 += here.len();
            }
        }
        let assembled = tape.assemble(feats, batch, n, sources)?;
        let (descriptor, layers) = self.head(tape, assembled, &params, Some(row_present))?;
        let (embedding, batch_stats) = self.normalize(tape, descriptor, training)?;
        let c = params.len();
        let logits = tape.linear(embedding, params[c - 2], params[c - 1])?;
        Ok(Forward { view_features: feats, assembled, layers, descriptor, embedding, logits, params, batch_stats })
    }

    fn normalize(&self, tape: &mut Tape, descriptor: Var, training: bool) -> Result<(Var, Option<(Vec<f64>, Vec<f64>)>)> {
        if !self.cfg.descriptor_norm {
            return Ok((descriptor, None));
        }
        let d = tape.value(descriptor).shape().to_vec();
        let (b, c) = (d[0], d[1]);
        if training && b > 1 {
            let v = tape.value(descriptor).data();
            let mean: Vec<f64> = (0..c).map(|j| (0..b).map(|i| v[i * c + j]).sum::<f64>() / b as f64).collect();
            let var: Vec<f64> =
                (0..c).map(|j| (0..b).map(|i| (v[i * c + j] - mean[j]).powi(2)).sum::<f64>() / b as f64).collect();
            let rows = tape.reshape(descriptor, &[1, b, c])?;
            let normed = tape.group_norm(rows, NORM_EPS)?;
            return Ok((tape.reshape(normed, &d)?, Some((mean, var))));
        }
        let mean = self.param("norm.mean").ok_or_else(|| Error::State("missing norm.mean".into()))?;
        let var = self.param("norm.var").ok_or_else(|| Error::State("missing norm.var".into()))?;
        let scale: Vec<f64> = var.data().iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        let shift: Vec<f64> = mean.data().iter().zip(&scale).map(|(m, s)| -m * s).collect();
        Ok((tape.affine_channels(descriptor, scale, &shift)?, None))
    }

    /// Folds batch statistics into the running buffers.
    pub fn update_running_stats(&mut self, mean: &[f64], var: &[f64]) {
        for (name, batch) in [("norm.mean", mean), ("norm.var", var)] {
            if let Some(t) = self.param_mut(name) {
                for (r, b) in t.data_mut().iter_mut().zip(batch) {
                    *r = (1.0 - NORM_MOMENTUM) * *r + NORM_MOMENTUM * b;
                }
            }
        }
    }

    /// G-CNN head on an assembled signal; returns the pooled descriptor and
    /// each layer's output. `row_mask` marks rows backed by a present view;
    /// for group-valued inputs the others are left out of the pooling.
    pub fn head(
        &self,
        tape: &mut Tape,
        signal: Var,
        params: &[Var],
        row_mask: Option<Vec<bool>>,
    ) -> Result<(Var, Vec<Var>)> {
        let mut x = signal;
        let mut layers = Vec::new();
        let mut p = 2 * self.cfg.encoder_widths.len() + 2;
        let depth = self.tables.len();
        for (l, table) in self.tables.iter().enumerate() {
            let w = params[p];
            let b = if self.cfg.bias { Some(params[p + 1]) } else { None };
            p += 1 + usize::from(self.cfg.bias);
            x = tape.gather(x, w, b, table.clone())?;
            // the last layer is left unnormalized: standardizing over G right
            // before the pooling would erase each channel's overall level
            if self.cfg.group_norm && l + 1 < depth {
                x = tape.group_norm(x, 1e-5)?;
            }
            x = tape.relu(x);
            layers.push(x);
        }
        let mask = match &self.layout {
            Layout::Group(_) => row_mask.filter(|m| m.iter().any(|v| !v)),
            Layout::Space(_) => None,
        };
        let descriptor = tape.pool_rows(x, mask, self.cfg.pool)?;
        Ok((descriptor, layers))
    }

    /// Descriptor and head activations for an assembled input `[B, N, C₀]`.
    pub fn head_only(&self, signal: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.constant(p.value.clone())).collect();
        let s = tape.constant(signal.clone());
        let (d, layers) = self.head(&mut tape, s, &params, None)?;
        Ok((tape.value(d).clone(), layers.iter().map(|l| tape.value(*l).clone()).collect()))
    }

    /// Inference: `(embeddings [B, D], logits [B, K])`.
    pub fn infer(&self, views: &Tensor, batch: usize, present: Option<&[bool]>) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, views, batch, present)?;
        let (d, l) = (tape.value(f.embedding).clone(), tape.value(f.logits).clone());
        if !d.is_finite() || !l.is_finite() {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        Ok((d, l))
    }
}
