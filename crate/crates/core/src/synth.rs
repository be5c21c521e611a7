//! Procedural asymmetric shape classes and an orthographic point-splat depth
//! renderer.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::group::Rotation;
use crate::tensor::Tensor;
use crate::views::{CameraConfig, CameraPose};

/// Classes 2..8 come in mirror-image pairs (reflection `y → −y`), so telling
/// them apart needs handedness cues.
pub const CLASS_NAMES: [&str; 8] =
    ["dumbbell", "mushroom", "helix_left", "helix_right", "l_knob_left", "l_knob_right", "tripod_left", "tripod_right"];

pub const POINTS_PER_SHAPE: usize = 640;

#[derive(Clone, Debug)]
pub struct Shape {
    pub class_id: usize,
    pub seed: u64,
    /// Centered at the origin with maximum radius 1.
    pub points: Vec<Vector3<f64>>,
}

impl Shape {
    pub fn rotated(&self, r: &Rotation) -> Shape {
        Shape { class_id: self.class_id, seed: self.seed, points: self.points.iter().map(|p| r.apply(p)).collect() }
    }
}

fn uniform_dir(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if v.norm() > 1e-9 {
            return v.normalize();
        }
    }
}

fn segment(rng: &mut ChaCha8Rng, a: Vector3<f64>, b: Vector3<f64>, thickness: f64) -> Vector3<f64> {
    let t: f64 = rng.gen();
    a + (b - a) * t + uniform_dir(rng) * thickness * rng.gen::<f64>().sqrt()
}

fn ball(rng: &mut ChaCha8Rng, c: Vector3<f64>, r: f64) -> Vector3<f64> {
    c + uniform_dir(rng) * r * rng.gen::<f64>().cbrt()
}

/// Point cloud of class `class_id`; knobs vary with `seed`. The two members
/// of a mirror pair with the same seed are exact reflections of each other.
pub fn make_shape(class_id: usize, seed: u64) -> Result<Shape> {
    if class_id >= CLASS_NAMES.len() {
        return Err(param_err!("unknown shape class {class_id} (have {})", CLASS_NAMES.len()));
    }
    let (base, mirrored) = if class_id < 2 { (class_id, false) } else { (class_id & !1, class_id % 2 == 1) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((base as u64 + 1) << 48));
    let knobs: Vec<f64> = (0..6).map(|_| rng.gen_range(0.75..1.25)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ base as u64);
    let m = POINTS_PER_SHAPE;
    let k = &knobs;
    let mut pts = Vec::with_capacity(m);
    for i in 0..m {
        let u = i as f64 / m as f64;
        let p = match base {
            0 => {
                let a = Vector3::new(-0.8 * k[0], 0.0, 0.0);
                let b = Vector3::new(0.8, 0.0, 0.0);
                match i % 7 {
                    0..=2 => ball(&mut rng, a, 0.38 * k[1]),
                    3 => ball(&mut rng, b, 0.2 * k[2]),
                    4 | 5 => segment(&mut rng, a, b, 0.05),
                    _ => segment(&mut rng, Vector3::new(0.2, 0.0, 0.0), Vector3::new(0.2, 0.0, 0.55 * k[3]), 0.04),
                }
            }
            1 => {
                if i % 3 == 0 {
                    segment(&mut rng, Vector3::new(0.15, 0.0, -0.9 * k[0]), Vector3::new(0.0, 0.0, 0.1), 0.08)
                } else {
                    // cap: upper hemisphere shell, flattened and offset along x
                    let mut d = uniform_dir(&mut rng);
                    d.z = d.z.abs() * 0.5 * k[1];
                    Vector3::new(d.x * 0.8 * k[2] + 0.15, d.y * 0.65, d.z + 0.1)
                }
            }
            2 => {
                let turns = 2.2 * k[0];
                let t = u * turns * 2.0 * PI;
                let r = 0.45 * k[1] * (0.6 + 0.4 * u);
                let c = Vector3::new(r * t.cos(), r * t.sin(), (u - 0.5) * 2.0 * k[2]);
                c + uniform_dir(&mut rng) * 0.07
            }
            4 => {
                let a = Vector3::new(0.0, 0.0, 1.0 * k[0]);
                let b = Vector3::zeros();
                let c = Vector3::new(0.7 * k[1], 0.0, 0.0);
                match i % 5 {
                    0 | 1 => segment(&mut rng, a, b, 0.08),
                    2 | 3 => segment(&mut rng, b, c, 0.08),
                    _ => ball(&mut rng, c + Vector3::new(0.0, 0.25 * k[2], 0.0), 0.22),
                }
            }
            _ => {
                let legs = [
                    Vector3::new(1.0 * k[0], 0.0, -0.3),
                    Vector3::new(-0.4, 0.7 * k[1], -0.3),
                    Vector3::new(-0.3, -0.5, -0.6 * k[2]),
                    Vector3::new(0.1, 0.1, 0.9 * k[3]),
                ];
                segment(&mut rng, Vector3::zeros(), legs[i % 4], 0.06)
            }
        };
        pts.push(if mirrored { Vector3::new(p.x, -p.y, p.z) } else { p });
    }
    normalize_points(&mut pts)?;
    Ok(Shape { class_id, seed, points: pts })
}

/// Centers at the centroid and scales the farthest point to radius 1.
pub fn normalize_points(points: &mut [Vector3<f64>]) -> Result<()> {
    if points.is_empty() {
        return Err(param_err!("empty point set"));
    }
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    points.iter_mut().for_each(|p| *p -= c);
    let r = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if r == 0.0 {
        return Err(Error::Numeric("degenerate point set".into()));
    }
    points.iter_mut().for_each(|p| *p /= r);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub size: usize,
    pub splat_radius: f64,
    /// World half-width covered by the image.
    pub extent: f64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec { size: 16, splat_radius: 1.2, extent: 1.1 }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 16 || !(self.splat_radius > 0.0) || !(self.extent > 0.0) {
            return Err(param_err!("render spec needs size ≥ 16 and positive splat radius and extent: {self:?}"));
        }
        Ok(())
    }
}

const DEPTH_LEVELS: f64 = 65536.0;

/// Depth image `[H, W, 1]`: nearer surfaces are brighter (1 at the near end
/// of the unit sphere, 0.1 at the far end), background 0. Values are
/// quantized so that tiny coordinate round-off cannot change a pixel except
/// at a quantization boundary.
pub fn render_view(shape: &Shape, pose: &CameraPose, spec: &RenderSpec) -> Result<Tensor> {
    spec.validate()?;
    let n = spec.size;
    let mut img = vec![0.0f64; n * n];
    let (right, up, fwd) = (pose.right(), pose.up, pose.optical_axis);
    let half = n as f64 / 2.0;
    let scale = half / spec.extent;
    let r = spec.splat_radius;
    let r2 = r * r;
    for p in &shape.points {
        let px = half + right.dot(p) * scale;
        let py = half - up.dot(p) * scale;
        let value = ((1.0 - 0.45 * (fwd.dot(p) + 1.0)) * DEPTH_LEVELS).floor() / DEPTH_LEVELS;
        let x0 = (px - r - 0.5).ceil().max(0.0) as usize;
        let x1 = ((px + r - 0.5).floor()).min(n as f64 - 1.0);
        let y0 = (py - r - 0.5).ceil().max(0.0) as usize;
        let y1 = ((py + r - 0.5).floor()).min(n as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for y in y0..=y1 as usize {
            let dy = y as f64 + 0.5 - py;
            for x in x0..=x1 as usize {
                let dx = x as f64 + 0.5 - px;
                if dx * dx + dy * dy <= r2 {
                    let slot = &mut img[y * n + x];
                    *slot = slot.max(value);
                }
            }
        }
    }
    Tensor::from_vec(&[n, n, 1], img)
}

/// All views of `shape` in configuration order: `[V, H, W, 1]`.
pub fn render_views(shape: &Shape, poses: &[CameraPose], spec: &RenderSpec) -> Result<Tensor> {
    let n = spec.size;
    let mut data = Vec::with_capacity(poses.len() * n * n);
    for p in poses {
        data.extend_from_slice(render_view(shape, p, spec)?.data());
    }
    Tensor::from_vec(&[poses.len(), n, n, 1], data)
}

/// Uniform random rotation from a normalized 4D Gaussian quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> Rotation {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if q.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
            return Rotation::from_quaternion(q);
        }
    }
}

/// Rotation about a uniformly random axis by an angle drawn from `N(0, σ)`.
pub fn jitter_rotation(rng: &mut impl Rng, sigma_deg: f64) -> Rotation {
    let axis: Vector3<f64> = loop {
        let v = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if v.norm() > 1e-9 {
            break v;
        }
    };
    let angle: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_deg.to_radians();
    Rotation::from_axis_angle(axis, angle)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetMode {
    Aligned,
    RotatedSO3,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub class_id: usize,
    pub shape_seed: u64,
    pub rotation: Rotation,
}

impl Instance {
    /// The shape in its dataset orientation.
    pub fn shape(&self) -> Result<Shape> {
        Ok(make_shape(self.class_id, self.shape_seed)?.rotated(&self.rotation))
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub classes: usize,
    pub mode: DatasetMode,
    pub seed: u64,
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
}

/// Instances are drawn deterministically from `seed`; train and test shapes
/// never share a shape seed.
pub fn make_dataset(classes: usize, n_train: usize, n_test: usize, mode: DatasetMode, seed: u64) -> Result<Dataset> {
    if classes == 0 || classes > CLASS_NAMES.len() {
        return Err(param_err!("class count must be in 1..={}", CLASS_NAMES.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize, split: u64| -> Vec<Instance> {
        let mut out = Vec::with_capacity(n * classes);
        for i in 0..n {
            for c in 0..classes {
                let rotation = match mode {
                    DatasetMode::Aligned => Rotation::identity(),
                    DatasetMode::RotatedSO3 => random_rotation(&mut rng),
                };
                let shape_seed = seed.wrapping_mul(1_000_003).wrapping_add(split * 10_000_000 + i as u64);
                out.push(Instance { class_id: c, shape_seed, rotation });
            }
        }
        out
    };
    let train = draw(n_train, 1);
    let test = draw(n_test, 2);
    Ok(Dataset { classes, mode, seed, train, test })
}

#[derive(Serialize, Deserialize)]
pub struct InstanceSidecar {
    pub class_id: usize,
    pub class_name: String,
    pub shape_seed: u64,
    pub rotation_quaternion: [f64; 4],
    pub config_hash: String,
    pub render: RenderSpec,
}

/// Writes `<dir>/<split>/<index>/{views.tensor, meta.json}` and
/// `<dir>/manifest.csv`.
pub fn write_dataset(dir: &Path, ds: &Dataset, cfg: &CameraConfig, spec: &RenderSpec) -> Result<()> {
    let cfg_hash = crate::io::config_hash(cfg);
    let mut manifest = String::from("split,index,class_id,class_name,path\n");
    for (split, items) in [("train", &ds.train), ("test", &ds.test)] {
        for (i, inst) in items.iter().enumerate() {
            let rel = format!("{split}/{i:05}");
            let sub = dir.join(&rel);
            std::fs::create_dir_all(&sub)?;
            let views = render_views(&inst.shape()?, cfg.poses(), spec)?;
            crate::io::write_tensors(&sub.join("views.tensor"), &[("views", &views)], crate::io::DType::F32)?;
            let meta = InstanceSidecar {
                class_id: inst.class_id,
                class_name: CLASS_NAMES[inst.class_id].into(),
                shape_seed: inst.shape_seed,
                rotation_quaternion: inst.rotation.quaternion(),
                config_hash: cfg_hash.clone(),
                render: *spec,
            };
            std::fs::write(sub.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
            manifest.push_str(&format!("{split},{i},{},{},{rel}\n", inst.class_id, CLASS_NAMES[inst.class_id]));
        }
    }
    std::fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_deterministic_and_normalized() {
        for c in 0..CLASS_NAMES.len() {
            let a = make_shape(c, 9).unwrap();
            let b = make_shape(c, 9).unwrap();
            assert_eq!(a.points, b.points);
            assert!(a.points.len() >= 64);
            let centroid = a.points.iter().sum::<Vector3<f64>>() / a.points.len() as f64;
            assert!(centroid.norm() < 1e-9);
            let r = a.points.iter().map(|p| p.norm()).fold(0.0, f64::max);
            assert!((r - 1.0).abs() < 1e-9);
        }
        assert!(make_shape(99, 0).is_err());
    }

    #[test]
    fn single_point_splats_at_center() {
        let shape = Shape { class_id: 0, seed: 0, points: vec![Vector3::zeros()] };
        let pose = CameraPose::looking_at_origin(&Vector3::z(), 2.0, &Vector3::x()).unwrap();
        let spec = RenderSpec { size: 16, splat_radius: 1.0, extent: 1.0 };
        let img = render_view(&shape, &pose, &spec).unwrap();
        let lit: Vec<usize> = (0..256).filter(|&i| img.data()[i] > 0.0).collect();
        assert_eq!(lit, vec![7 * 16 + 7, 7 * 16 + 8, 8 * 16 + 7, 8 * 16 + 8]);
    }

    #[test]
    fn render_never_blank() {
        let cfg = crate::views::gen_config(crate::views::ConfigKind::V12x5, 3.0).unwrap();
        let s = make_shape(3, 1).unwrap();
        for p in cfg.poses() {
            let img = render_view(&s, p, &RenderSpec::default()).unwrap();
            assert!(img.data().iter().any(|v| *v > 0.0));
        }
    }

    #[test]
    fn dataset_is_deterministic() {
        let a = make_dataset(3, 2, 1, DatasetMode::RotatedSO3, 5).unwrap();
        let b = make_dataset(3, 2, 1, DatasetMode::RotatedSO3, 5).unwrap();
        assert_eq!(a.train.len(), 6);
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x.rotation.quaternion(), y.rotation.quaternion());
            assert_eq!(x.shape_seed, y.shape_seed);
        }
    }

    #[test]
    fn rotate_then_render_permutes_views() {
        use crate::views::{gen_config, ConfigKind};
        let spec = RenderSpec::default();
        for kind in [ConfigKind::V60x1, ConfigKind::V12x5, ConfigKind::V20x3] {
            let cfg = gen_config(kind, 3.0).unwrap();
            let shape = make_shape(4, 17).unwrap();
            let base = render_views(&shape, cfg.poses(), &spec).unwrap();
            let px = spec.size * spec.size;
            for k in [1, 13, 59] {
                let perm = cfg.permutation_under_rotation(k).unwrap();
                let moved = render_views(&shape.rotated(cfg.group().element(k)), cfg.poses(), &spec).unwrap();
                for (i, &j) in perm.iter().enumerate() {
                    assert_eq!(&moved.data()[j * px..(j + 1) * px], &base.data()[i * px..(i + 1) * px]);
                }
            }
        }
    }
}
