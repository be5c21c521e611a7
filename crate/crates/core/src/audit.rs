//! Self-audit: every structural invariant of the library, grouped into
//! suites and checked against brute-force oracles. `finrot check` runs it.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conv2d::{Conv2dSpec, WidthPadding};
use crate::error::{param_err, Result};
use crate::group::{shared_group, FiniteGroup, GroupName};
use crate::hspace::{shared_hspace, HSpace, HSpaceKind};
use crate::mvnet::loss::triplet_value;
use crate::mvnet::model::{greedy_support, layers_to_cover, Model, ModelConfig, SupportSpec};
use crate::mvnet::retrieval::{evaluate_retrieval, Query, RetrievalIndex};
use crate::mvnet::train::lr_schedule;
use crate::polar::{log_polar, PolarSpec};
use crate::signal::{
    apply_action, apply_action_hspace, gconv, gconv_table, global_pool, hconv, hconv_table, hcorr, hcorr_table,
    receptive_field, relu, GroupSignal, HSpaceSignal, LocalizedFilter,
};
use crate::synth::{make_shape, random_rotation, render_views, RenderSpec};
use crate::tape::{Pool, Tape, Var};
use crate::tensor::Tensor;
use crate::views::{gen_config, ConfigKind, ViewSpace};
use crate::viz::{pca_rgb, pentakis_mesh, ply_string};

/// One named pass/fail result.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
    /// Wall time per suite, in run order.
    pub seconds: Vec<(String, f64)>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Pass/fail matrix with one row per suite, followed by the failures.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<18} {:>7} {:>8}  status", "suite", "checks", "time");
        for (suite, secs) in &self.seconds {
            let rows: Vec<&Check> = self.checks.iter().filter(|c| &c.suite == suite).collect();
            let ok = rows.iter().filter(|c| c.passed).count();
            let status = if ok == rows.len() { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{suite:<18} {:>7} {:>7.1}s  {status}", format!("{ok}/{}", rows.len()), secs);
        }
        let failed: Vec<&Check> = self.checks.iter().filter(|c| !c.passed).collect();
        if failed.is_empty() {
            let _ = writeln!(s, "all {} checks passed", self.checks.len());
        } else {
            let _ = writeln!(s, "{} of {} checks failed:", failed.len(), self.checks.len());
            for c in failed {
                let _ = writeln!(s, "  [{}] {}: {}", c.suite, c.name, c.detail);
            }
        }
        s
    }

    /// Every check on its own line.
    pub fn render_verbose(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.suite, c.name, c.detail);
        }
        s
    }
}

pub const SUITES: [&str; 13] = [
    "groups",
    "hspaces",
    "equivariance",
    "oracles",
    "mvcnn",
    "receptive-field",
    "gradients",
    "views",
    "rendering",
    "log-polar",
    "retrieval",
    "descriptor",
    "visualization",
];

/// Runs the named suites (all of [`SUITES`] when empty).
pub fn run(suites: &[String], seed: u64) -> Result<Report> {
    let names: Vec<&str> = if suites.is_empty() { SUITES.to_vec() } else { suites.iter().map(|s| s.as_str()).collect() };
    if let Some(bad) = names.iter().find(|n| !SUITES.contains(n)) {
        return Err(param_err!("unknown suite '{bad}' (known: {})", SUITES.join(", ")));
    }
    let mut report = Report::default();
    for (i, name) in names.iter().enumerate() {
        let start = Instant::now();
        let mut s = Suite { name, rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64)), out: &mut report.checks };
        match *name {
            "groups" => groups(&mut s),
            "hspaces" => hspaces(&mut s),
            "equivariance" => equivariance(&mut s),
            "oracles" => oracles(&mut s),
            "mvcnn" => mvcnn(&mut s),
            "receptive-field" => receptive(&mut s),
            "gradients" => gradients(&mut s),
            "views" => views(&mut s),
            "rendering" => rendering(&mut s),
            "log-polar" => polar(&mut s),
            "retrieval" => retrieval(&mut s),
            "descriptor" => descriptor(&mut s),
            "visualization" => visualization(&mut s),
            _ => unreachable!(),
        }
        log::info!("suite {name} done in {:.1}s", start.elapsed().as_secs_f64());
        report.seconds.push((name.to_string(), start.elapsed().as_secs_f64()));
    }
    Ok(report)
}

struct Suite<'a> {
    name: &'a str,
    rng: ChaCha8Rng,
    out: &'a mut Vec<Check>,
}

impl Suite<'_> {
    fn check(&mut self, name: impl Into<String>, f: impl FnOnce(&mut ChaCha8Rng) -> Result<(bool, String)>) {
        let (passed, detail) = f(&mut self.rng).unwrap_or_else(|e| (false, e.to_string()));
        self.out.push(Check { suite: self.name.into(), name: name.into(), passed, detail });
    }
}

fn within(dev: f64, tol: f64) -> (bool, String) {
    (dev < tol, format!("max deviation {dev:.2e} (tolerance {tol:.0e})"))
}

fn exact(ok: bool, what: &str) -> (bool, String) {
    (ok, if ok { format!("{what}: exact") } else { format!("{what}: mismatch") })
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches")
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<usize> {
    let k = rng.gen_range(1..=max.min(n));
    sample(rng, n, k).into_vec()
}

pub const AUDIT_GROUPS: [GroupName; 5] = [
    GroupName::Cyclic(12),
    GroupName::Dihedral(6),
    GroupName::Tetrahedral,
    GroupName::Octahedral,
    GroupName::Icosahedral,
];

fn ico() -> Result<Arc<FiniteGroup>> {
    shared_group(GroupName::Icosahedral)
}

fn groups(s: &mut Suite) {
    for name in AUDIT_GROUPS {
        s.check(format!("{name}: axioms and matrix consistency"), |_| {
            let g = shared_group(name)?;
            g.verify()?;
            Ok((g.order() == name.order(), format!("order {}", g.order())))
        });
        s.check(format!("{name}: conjugation preserves angle"), |_| {
            let g = shared_group(name)?;
            let n = g.order();
            let mut worst = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let c = g.mul(g.mul(i, j), g.inv(i));
                    worst = worst.max((g.element(c).angle() - g.element(j).angle()).abs());
                }
            }
            Ok(within(worst, 1e-9))
        });
        s.check(format!("{name}: nearest_element inverts enumeration"), |_| {
            let g = shared_group(name)?;
            let mut worst = 0.0f64;
            let mut ok = true;
            for i in 0..g.order() {
                let m = g.nearest_element(g.element(i).matrix(), 1e-6);
                ok &= m.index == i && m.exact;
                worst = worst.max(m.residual);
            }
            Ok((ok && worst < 1e-12, format!("max residual {worst:.2e}")))
        });
    }
    s.check("abelian structure", |_| {
        let c12 = shared_group(GroupName::Cyclic(12))?;
        let d3 = shared_group(GroupName::Dihedral(3))?;
        let i = ico()?;
        let ok = c12.is_abelian() && !d3.is_abelian() && !i.is_abelian();
        Ok((ok, "c12 abelian, d3 and ico non-abelian".into()))
    });
    s.check("ico: twelve smallest rotations at 72°", |_| {
        let r = ico()?.smallest_rotations();
        let at72 = r.iter().filter(|(_, a)| (a.to_degrees() - 72.0).abs() < 1e-9).count();
        let min = r[0].1.to_degrees();
        Ok((at72 == 12 && (min - 72.0).abs() < 1e-9, format!("minimum {min:.6}°, {at72} elements at 72°")))
    });
    s.check("oct: six smallest rotations at 90°", |_| {
        let r = shared_group(GroupName::Octahedral)?.smallest_rotations();
        let at90 = r.iter().filter(|(_, a)| (a.to_degrees() - 90.0).abs() < 1e-9).count();
        Ok((at90 == 6 && (r[0].1.to_degrees() - 90.0).abs() < 1e-9, format!("{at90} elements at 90°")))
    });
    s.check("ico: 36° rotation about a 5-fold axis is not an element", |_| {
        let g = ico()?;
        let r = crate::group::Rotation::from_axis_angle(Vector3::z(), 36f64.to_radians());
        let m = g.nearest_element(r.matrix(), 1e-6);
        let d = g.element(m.index).geodesic_distance(&r).to_degrees();
        Ok((!m.exact && (d - 36.0).abs() < 1e-9, format!("nearest at {d:.6}°")))
    });
}

fn hspaces(s: &mut Suite) {
    for (kind, n, stab) in [(HSpaceKind::Vertices12, 12, 5), (HSpaceKind::Faces20, 20, 3)] {
        s.check(format!("ico/{kind}: action table invariants"), |_| {
            let h = shared_hspace(GroupName::Icosahedral, kind)?;
            h.verify()?;
            Ok((h.len() == n && h.stabilizer_order() == stab, format!("{} points, |Stab| = {}", h.len(), h.stabilizer_order())))
        });
        s.check(format!("ico/{kind}: stabilizers are subgroups of order {stab}"), |_| {
            let h = shared_hspace(GroupName::Icosahedral, kind)?;
            let mut ok = true;
            for x in 0..h.len() {
                let st = h.stabilizer(x)?;
                ok &= st.len() == stab && h.group().generated_closure(&st)? == st;
            }
            Ok(exact(ok, "stabilizer sizes and closure"))
        });
    }
    for name in AUDIT_GROUPS {
        s.check(format!("{name}/group: left action, free"), |_| {
            let h = shared_hspace(name, HSpaceKind::Group)?;
            h.verify()?;
            let g = h.group();
            let ok = (0..g.order()).all(|i| (0..g.order()).all(|x| h.act_unchecked(i, x) == g.mul(i, x)))
                && (0..h.len()).all(|x| h.stabilizer(x).map(|s| s == vec![0]).unwrap_or(false));
            Ok(exact(ok, "action equals the Cayley table"))
        });
    }
    s.check("faces are dual to vertices", |_| {
        let v = shared_hspace(GroupName::Icosahedral, HSpaceKind::Vertices12)?;
        let f = shared_hspace(GroupName::Icosahedral, HSpaceKind::Faces20)?;
        let mut worst = 0.0f64;
        let mut ok = true;
        for p in f.points() {
            let mut d: Vec<(f64, usize)> = v.points().iter().enumerate().map(|(i, q)| ((p - q).norm(), i)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0));
            worst = worst.max((d[0].0 - d[2].0).abs());
            ok &= d[3].0 - d[2].0 > 1e-3;
            let centroid = (v.points()[d[0].1] + v.points()[d[1].1] + v.points()[d[2].1]).normalize();
            worst = worst.max((centroid - p).norm());
        }
        let (pass, detail) = within(worst, 1e-9);
        Ok((pass && ok, detail))
    });
}

fn random_filter(rng: &mut ChaCha8Rng, domain: usize, max_support: usize, cin: usize, with_bias: bool) -> Result<LocalizedFilter> {
    let support = random_subset(rng, domain, max_support);
    let cout = rng.gen_range(1..=3);
    let h = LocalizedFilter::new(support.clone(), random_tensor(rng, &[cout, cin, support.len()]))?;
    if with_bias {
        h.with_bias((0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect())
    } else {
        Ok(h)
    }
}

const EQUIVARIANCE_TRIALS: usize = 100;

/// Worst `|gconv(T_k f, h) − T_k gconv(f, h)|` over random pairs and all `k`.
pub fn gconv_equivariance(group: &Arc<FiniteGroup>, batch: usize, trials: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = group.order();
    let mut worst = 0.0f64;
    for t in 0..trials {
        let cin = rng.gen_range(1..=3);
        let f = GroupSignal::new(group.clone(), random_tensor(rng, &[batch, n, cin]))?;
        let h = random_filter(rng, n, 9, cin, t % 2 == 1)?;
        let out = gconv(&f, &h)?;
        for k in 0..n {
            let lhs = gconv(&apply_action(k, &f)?, &h)?;
            worst = worst.max(lhs.data().max_abs_diff(apply_action(k, &out)?.data()));
        }
    }
    Ok(worst)
}

/// Same for H-Conv (`lift = false`, output on X) or H-Corr (`lift = true`,
/// output on G acted on by left multiplication).
pub fn hspace_equivariance(hs: &Arc<HSpace>, lift: bool, batch: usize, trials: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = hs.len();
    let mut worst = 0.0f64;
    for t in 0..trials {
        let cin = rng.gen_range(1..=3);
        let f = HSpaceSignal::new(hs.clone(), random_tensor(rng, &[batch, n, cin]))?;
        let h = random_filter(rng, n, 6, cin, t % 2 == 1)?;
        for k in 0..hs.group().order() {
            let moved = apply_action_hspace(k, &f)?;
            let dev = if lift {
                hcorr(&moved, &h)?.data().max_abs_diff(apply_action(k, &hcorr(&f, &h)?)?.data())
            } else {
                hconv(&moved, &h)?.data().max_abs_diff(apply_action_hspace(k, &hconv(&f, &h)?)?.data())
            };
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}

fn equivariance(s: &mut Suite) {
    for name in AUDIT_GROUPS {
        for batch in [1, 4] {
            s.check(format!("gconv on {name}, B={batch}"), |rng| {
                Ok(within(gconv_equivariance(&shared_group(name)?, batch, EQUIVARIANCE_TRIALS, rng)?, 1e-10))
            });
        }
    }
    for kind in [HSpaceKind::Vertices12, HSpaceKind::Faces20] {
        for batch in [1, 4] {
            for lift in [false, true] {
                let op = if lift { "hcorr" } else { "hconv" };
                s.check(format!("{op} on {kind}, B={batch}"), |rng| {
                    let hs = shared_hspace(GroupName::Icosahedral, kind)?;
                    Ok(within(hspace_equivariance(&hs, lift, batch, EQUIVARIANCE_TRIALS, rng)?, 1e-10))
                });
            }
        }
    }
    s.check("apply_action is a homomorphism", |rng| {
        let g = ico()?;
        let f = GroupSignal::new(g.clone(), random_tensor(rng, &[2, 60, 2]))?;
        let h = HSpaceSignal::new(shared_hspace(GroupName::Icosahedral, HSpaceKind::Vertices12)?, random_tensor(rng, &[2, 12, 2]))?;
        let mut ok = apply_action(0, &f)?.data() == f.data();
        for k in 0..60 {
            let tk = apply_action(k, &f)?;
            let hk = apply_action_hspace(k, &h)?;
            for k2 in 0..60 {
                ok &= apply_action(k2, &tk)?.data() == apply_action(g.mul(k2, k), &f)?.data();
                ok &= apply_action_hspace(k2, &hk)?.data() == apply_action_hspace(g.mul(k2, k), &h)?.data();
            }
        }
        Ok(exact(ok, "T_k' T_k = T_(k'k) on G and on X"))
    });
    s.check("relu commutes with the action, pooling is invariant", |rng| {
        let g = ico()?;
        let f = GroupSignal::new(g.clone(), random_tensor(rng, &[3, 60, 4]))?;
        let mut ok = true;
        let mut worst = 0.0f64;
        for k in 0..60 {
            let tk = apply_action(k, &f)?;
            ok &= relu(tk.data()) == *apply_action(k, &GroupSignal::new(g.clone(), relu(f.data()))?)?.data();
            worst = worst.max(global_pool(tk.data()).max_abs_diff(&global_pool(f.data())));
        }
        let (pass, detail) = within(worst, 1e-14);
        Ok((ok && pass, format!("relu exact; pooling {detail}")))
    });
}

/// Literal G-Conv over the whole group: `out(y) = Σ_g Σ_i f_i(g) h_ij(g⁻¹y)`
/// with `h` zero off its support.
pub fn gconv_oracle(g: &FiniteGroup, f: &Tensor, support: &[usize], w: &Tensor) -> Tensor {
    let (b, n, cin, cout) = (f.dim(0), f.dim(1), f.dim(2), w.dim(0));
    let s_len = support.len();
    let mut out = Tensor::zeros(&[b, n, cout]);
    for bi in 0..b {
        for y in 0..n {
            for gi in 0..n {
                let u = g.mul(g.inv(gi), y);
                let Some(s) = support.iter().position(|&x| x == u) else { continue };
                for o in 0..cout {
                    for i in 0..cin {
                        out.data_mut()[(bi * n + y) * cout + o] +=
                            f.data()[(bi * n + gi) * cin + i] * w.data()[(o * cin + i) * s_len + s];
                    }
                }
            }
        }
    }
    out
}

/// Literal H-Corr: `out(g) = Σ_{x∈X} Σ_i f_i(g·x) h_ij(x)`.
pub fn hcorr_oracle(hs: &HSpace, f: &Tensor, support: &[usize], w: &Tensor) -> Tensor {
    let (b, nx, cin, cout) = (f.dim(0), f.dim(1), f.dim(2), w.dim(0));
    let ng = hs.group().order();
    let s_len = support.len();
    let mut out = Tensor::zeros(&[b, ng, cout]);
    for bi in 0..b {
        for gi in 0..ng {
            for x in 0..nx {
                let Some(s) = support.iter().position(|&p| p == x) else { continue };
                let src = hs.act_unchecked(gi, x);
                for o in 0..cout {
                    for i in 0..cin {
                        out.data_mut()[(bi * ng + gi) * cout + o] +=
                            f.data()[(bi * nx + src) * cin + i] * w.data()[(o * cin + i) * s_len + s];
                    }
                }
            }
        }
    }
    out
}

/// Literal H-Conv: `out(y) = Σ_{g∈G} Σ_i f_i(g·η) h_ij(g⁻¹·y)`.
pub fn hconv_oracle(hs: &HSpace, f: &Tensor, support: &[usize], w: &Tensor) -> Tensor {
    let (b, nx, cin, cout) = (f.dim(0), f.dim(1), f.dim(2), w.dim(0));
    let g = hs.group();
    let s_len = support.len();
    let mut out = Tensor::zeros(&[b, nx, cout]);
    for bi in 0..b {
        for y in 0..nx {
            for gi in 0..g.order() {
                let u = hs.act_unchecked(g.inv(gi), y);
                let Some(s) = support.iter().position(|&p| p == u) else { continue };
                let src = hs.act_unchecked(gi, hs.eta());
                for o in 0..cout {
                    for i in 0..cin {
                        out.data_mut()[(bi * nx + y) * cout + o] +=
                            f.data()[(bi * nx + src) * cin + i] * w.data()[(o * cin + i) * s_len + s];
                    }
                }
            }
        }
    }
    out
}

const ORACLE_INSTANCES: usize = 50;

fn oracles(s: &mut Suite) {
    s.check("gconv on c4 with weight on the identity copies the input", |_| {
        let g = shared_group(GroupName::Cyclic(4))?;
        let f = GroupSignal::new(g, Tensor::from_vec(&[4, 1], vec![1., 2., 3., 4.])?)?;
        let h = LocalizedFilter::new(vec![0, 1, 2, 3], Tensor::from_vec(&[1, 1, 4], vec![1., 0., 0., 0.])?)?;
        Ok(exact(gconv(&f, &h)?.data().data() == [1., 2., 3., 4.], "output equals input"))
    });
    for name in [GroupName::Octahedral, GroupName::Icosahedral] {
        s.check(format!("gconv on {name} matches the full-group sum"), |rng| {
            let g = shared_group(name)?;
            let mut worst = 0.0f64;
            for _ in 0..ORACLE_INSTANCES {
                let cin = rng.gen_range(1..=3);
                let f = GroupSignal::new(g.clone(), random_tensor(rng, &[2, g.order(), cin]))?;
                let h = random_filter(rng, g.order(), g.order(), cin, false)?;
                let fast = gconv(&f, &h)?;
                worst = worst.max(fast.data().max_abs_diff(&gconv_oracle(&g, f.data(), h.support(), h.weights())));
            }
            Ok(within(worst, 1e-12))
        });
    }
    for kind in [HSpaceKind::Vertices12, HSpaceKind::Faces20] {
        s.check(format!("hcorr on {kind} matches the literal sum"), |rng| {
            let hs = shared_hspace(GroupName::Icosahedral, kind)?;
            let mut worst = 0.0f64;
            for _ in 0..ORACLE_INSTANCES {
                let cin = rng.gen_range(1..=3);
                let f = HSpaceSignal::new(hs.clone(), random_tensor(rng, &[2, hs.len(), cin]))?;
                let h = random_filter(rng, hs.len(), hs.len(), cin, false)?;
                worst = worst.max(hcorr(&f, &h)?.data().max_abs_diff(&hcorr_oracle(&hs, f.data(), h.support(), h.weights())));
            }
            Ok(within(worst, 1e-12))
        });
        s.check(format!("hconv on {kind} matches the literal sum"), |rng| {
            let hs = shared_hspace(GroupName::Icosahedral, kind)?;
            let mut worst = 0.0f64;
            for _ in 0..ORACLE_INSTANCES {
                let cin = rng.gen_range(1..=3);
                let f = HSpaceSignal::new(hs.clone(), random_tensor(rng, &[2, hs.len(), cin]))?;
                let h = random_filter(rng, hs.len(), hs.len(), cin, false)?;
                worst = worst.max(hconv(&f, &h)?.data().max_abs_diff(&hconv_oracle(&hs, f.data(), h.support(), h.weights())));
            }
            Ok(within(worst, 1e-12))
        });
    }
}

fn small_config(views: &str, head: Vec<usize>) -> ModelConfig {
    ModelConfig {
        views: views.into(),
        image_size: 16,
        encoder_widths: vec![4, 6],
        encoder_strides: vec![2, 2],
        proj_dim: 6,
        head_widths: head,
        support: SupportSpec::Greedy(9),
        classes: 3,
        ..Default::default()
    }
}

fn small_model(views: &str, head: Vec<usize>, seed: u64) -> Result<Model> {
    Model::new(small_config(views, head), seed)
}

/// Head without biases or normalization layers.
fn plain_model(views: &str, head: Vec<usize>, seed: u64) -> Result<Model> {
    let cfg = ModelConfig { group_norm: false, bias: false, descriptor_norm: false, ..small_config(views, head) };
    Model::new(cfg, seed)
}

/// A head whose every layer copies its input: only the identity slot of
/// each filter is set, to the identity across channels.
fn delta_model(seed: u64) -> Result<Model> {
    let c = 6;
    let mut m = plain_model("60x1", vec![c; 3], seed)?;
    let id_slot = m.support().iter().position(|&e| e == 0).expect("greedy support holds the identity");
    for l in 0..3 {
        let w = m.param_mut(&format!("head{l}.w")).expect("head weight");
        let s_len = w.dim(2);
        w.data_mut().iter_mut().for_each(|v| *v = 0.0);
        for o in 0..c {
            w.data_mut()[(o * c + o) * s_len + id_slot] = 1.0;
        }
    }
    Ok(m)
}

fn random_views(rng: &mut ChaCha8Rng, count: usize, size: usize) -> Tensor {
    let n = count * size * size;
    Tensor::from_vec(&[count, size, size, 1], (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).expect("view shape")
}

fn mvcnn(s: &mut Suite) {
    s.check("three delta layers copy a non-negative signal", |rng| {
        let m = delta_model(1)?;
        let mut sig = random_tensor(rng, &[2, 60, 6]);
        sig.data_mut().iter_mut().for_each(|v| *v = v.abs());
        let (d, layers) = m.head_only(&sig)?;
        let worst = layers.iter().map(|l| l.max_abs_diff(&sig)).fold(0.0, f64::max);
        Ok(within(worst.max(d.max_abs_diff(&global_pool(&sig))), 1e-12))
    });
    s.check("delta-filter network equals mean of per-view descriptors", |rng| {
        let m = delta_model(2)?;
        let views = random_views(rng, 2 * 60, 16);
        let mut tape = Tape::new();
        let f = m.forward(&mut tape, &views, 2, None)?;
        let per_view = relu(tape.value(f.view_features));
        let c = per_view.dim(1);
        let mut mean = vec![0.0; 2 * c];
        for b in 0..2 {
            for v in 0..60 {
                for j in 0..c {
                    mean[b * c + j] += per_view.data()[(b * 60 + v) * c + j] / 60.0;
                }
            }
        }
        Ok(within(tape.value(f.descriptor).max_abs_diff(&Tensor::from_vec(&[2, c], mean)?), 1e-12))
    });
    s.check("no head layers gives mean pooling of view descriptors", |rng| {
        let m = small_model("60x1", vec![], 3)?;
        let views = random_views(rng, 60, 16);
        let mut tape = Tape::new();
        let f = m.forward(&mut tape, &views, 1, None)?;
        let per_view = tape.value(f.view_features).clone();
        let pooled = global_pool(&per_view.reshape(&[1, 60, m.cfg.proj_dim])?);
        Ok(within(tape.value(f.descriptor).max_abs_diff(&pooled), 1e-12))
    });
}

/// Inputs that influence output `y` after `layers` linear G-Convs with
/// positive weights on `support`, read off the Jacobian column by column.
fn jacobian_field(g: &Arc<FiniteGroup>, support: &[usize], layers: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let n = g.order();
    let filters: Vec<LocalizedFilter> = (0..layers)
        .map(|_| {
            let w = (0..support.len()).map(|_| rng.gen_range(0.5..1.5)).collect();
            LocalizedFilter::new(support.to_vec(), Tensor::from_vec(&[1, 1, support.len()], w)?)
        })
        .collect::<Result<_>>()?;
    let mut deps = vec![Vec::new(); n];
    for u in 0..n {
        let mut x = Tensor::zeros(&[1, n, 1]);
        x.data_mut()[u] = 1.0;
        let mut sig = GroupSignal::new(g.clone(), x)?;
        for h in &filters {
            sig = gconv(&sig, h)?;
        }
        for (y, d) in deps.iter_mut().enumerate() {
            if sig.data().data()[y] != 0.0 {
                d.push(u);
            }
        }
    }
    Ok(deps)
}

/// `y · (S⁻¹)^L` by direct enumeration.
fn product_field(g: &FiniteGroup, support: &[usize], layers: usize, y: usize) -> Vec<usize> {
    let mut set = std::collections::BTreeSet::from([y]);
    for _ in 0..layers {
        set = set.iter().flat_map(|&a| support.iter().map(move |&s| g.mul(a, g.inv(s)))).collect();
    }
    set.into_iter().collect()
}

/// A 72° rotation and the cyclic subgroup it generates.
pub fn five_fold_subgroup(g: &FiniteGroup) -> Result<(usize, Vec<usize>)> {
    let (a, _) = g.smallest_rotations()[0];
    Ok((a, g.generated_closure(&[a])?))
}

/// Identity plus two 72° rotations about different axes, choosing the pair
/// whose powers cover the group in the fewest layers.
pub fn best_two_axis_support(g: &FiniteGroup) -> (Vec<usize>, Option<usize>) {
    let rots: Vec<usize> = g.smallest_rotations().into_iter().take(12).map(|(i, _)| i).collect();
    let mut best: (Vec<usize>, Option<usize>) = (Vec::new(), None);
    for (ai, &a) in rots.iter().enumerate() {
        for &b in &rots[ai + 1..] {
            let (xa, xb) = (g.element(a).axis(), g.element(b).axis());
            if let (Some(xa), Some(xb)) = (xa, xb) {
                if xa.cross(&xb).norm() < 1e-9 {
                    continue;
                }
            }
            let s = vec![0, a, b];
            let depth = layers_to_cover(g, &s, 20);
            let better = match (depth, best.1) {
                (Some(d), Some(e)) => d < e,
                (Some(_), None) => true,
                _ => best.0.is_empty(),
            };
            if better {
                best = (s, depth);
            }
        }
    }
    best
}

fn receptive(s: &mut Suite) {
    for (label, size) in [("greedy 9", 9), ("greedy 4", 4)] {
        s.check(format!("Jacobian sparsity equals the product set ({label})"), |rng| {
            let g = ico()?;
            let support = greedy_support(&g, size)?;
            let mut ok = true;
            for layers in 1..=3 {
                let deps = jacobian_field(&g, &support, layers, rng)?;
                for (y, d) in deps.iter().enumerate() {
                    let expect = product_field(&g, &support, layers, y);
                    ok &= *d == expect && receptive_field(&g, &support, layers, y) == expect;
                }
            }
            Ok(exact(ok, "layers 1..=3, all outputs"))
        });
    }
    s.check("random supports: sparsity equals the product set", |rng| {
        let g = shared_group(GroupName::Octahedral)?;
        let mut ok = true;
        for _ in 0..5 {
            let support = random_subset(rng, g.order(), 4);
            let deps = jacobian_field(&g, &support, 2, rng)?;
            ok &= deps.iter().enumerate().all(|(y, d)| *d == product_field(&g, &support, 2, y));
        }
        Ok(exact(ok, "5 random supports on oct, 2 layers"))
    });
    s.check("support inside a cyclic subgroup stays in its coset", |rng| {
        let g = ico()?;
        let (_, c5) = five_fold_subgroup(&g)?;
        let mut ok = c5.len() == 5;
        let h = LocalizedFilter::new(c5.clone(), Tensor::zeros(&[1, 1, 5]))?;
        ok &= !h.spans_group(&g)?;
        for layers in 1..=6 {
            let deps = jacobian_field(&g, &c5, layers, rng)?;
            for (y, d) in deps.iter().enumerate() {
                let coset: Vec<usize> = {
                    let mut c: Vec<usize> = c5.iter().map(|&e| g.mul(y, e)).collect();
                    c.sort();
                    c
                };
                ok &= *d == coset;
            }
        }
        Ok(exact(ok, "depth 1..=6, field = y·C5"))
    });
    s.check("two 72° rotations about different axes generate ico", |_| {
        let g = ico()?;
        let (support, depth) = best_two_axis_support(&g);
        let closure = g.generated_closure(&support)?.len();
        let depth = depth.map(|d| d.to_string()).unwrap_or_else(|| "never".into());
        Ok((closure == 60, format!("closure {closure}; best pair covers the group after {depth} layers")))
    });
    s.check("closure orders divide 60", |rng| {
        let g = ico()?;
        let mut ok = true;
        for _ in 0..50 {
            let sub = random_subset(rng, 60, 3);
            ok &= 60 % g.generated_closure(&sub)?.len() == 0;
        }
        Ok(exact(ok, "Lagrange on 50 random generating sets"))
    });
}

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_RTOL: f64 = 1e-5;
/// Central-difference noise floor for O(1) losses at this step. Parameters
/// that a normalization makes irrelevant have a zero gradient, and their
/// difference quotients are pure roundoff of about 2e-8.
pub const GRAD_ATOL: f64 = 1e-7;

/// Relative error of a gradient entry against its finite difference, after
/// discounting the absolute noise floor.
pub fn grad_rel_error(numeric: f64, analytic: f64) -> f64 {
    ((numeric - analytic).abs() - GRAD_ATOL).max(0.0) / numeric.abs().max(analytic.abs()).max(1e-300)
}

/// Relative error of `analytic` against central differences of `f` around
/// `x`. A ReLU kink within `GRAD_STEP` spoils the first difference, so a miss
/// is retried at `GRAD_STEP / 10` and `/ 100`, keeping the best agreement.
/// Roundoff grows as the step shrinks, which is why the large step comes first.
pub fn central_difference_error(f: &mut dyn FnMut(f64) -> Result<f64>, x: f64, analytic: f64) -> Result<f64> {
    let mut best = f64::INFINITY;
    for h in [GRAD_STEP, GRAD_STEP / 10.0, GRAD_STEP / 100.0] {
        let numeric = (f(x + h)? - f(x - h)?) / (2.0 * h);
        best = best.min(grad_rel_error(numeric, analytic));
        if best < GRAD_RTOL {
            break;
        }
    }
    Ok(best)
}

type Build<'a> = &'a dyn Fn(&mut Tape, &[Var]) -> Result<Var>;

fn probe_loss(tape: &mut Tape, out: Var, probe: &Tensor) -> Result<Var> {
    let n = tape.value(out).len();
    let flat = tape.reshape(out, &[1, n])?;
    let w = tape.constant(probe.clone());
    let b = tape.constant(Tensor::zeros(&[1]));
    tape.linear(flat, w, b)
}

/// Worst relative error over (a spread of) input coordinates for the
/// scalar `⟨probe, build(inputs)⟩`.
pub fn op_gradient_error(inputs: &[Tensor], build: Build, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n_out = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        tape.value(out).len()
    };
    let probe = random_tensor(rng, &[1, n_out]);
    let value = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.constant(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        let loss = probe_loss(&mut tape, out, &probe)?;
        Ok(tape.value(loss).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let loss = probe_loss(&mut tape, out, &probe)?;
    let grads = tape.backward(loss)?;
    let mut worst = 0.0f64;
    let mut vals = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v);
        let n = vals[k].len();
        let picks: Vec<usize> = if n <= 40 { (0..n).collect() } else { (0..40).map(|i| i * n / 40).collect() };
        for i in picks {
            let orig = vals[k].data()[i];
            let mut at = |x: f64| -> Result<f64> {
                vals[k].data_mut()[i] = x;
                let l = value(&vals);
                vals[k].data_mut()[i] = orig;
                l
            };
            worst = worst.max(central_difference_error(&mut at, orig, analytic.data()[i])?);
        }
    }
    Ok(worst)
}

/// Worst relative error over the parameters of `model` for the
/// cross-entropy of random continuous views.
pub fn model_gradient_error(model: &mut Model, training: bool, present: Option<&[bool]>, rng: &mut ChaCha8Rng) -> Result<f64> {
    let v = model.camera().len();
    let size = model.cfg.image_size;
    let count = present.map(|p| p.iter().filter(|x| **x).count()).unwrap_or(2 * v);
    let views = random_views(rng, count, size);
    let labels = [0, 1];
    let eval = |m: &Model| -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let f = if training { m.forward_train(&mut tape, &views, 2, present)? } else { m.forward(&mut tape, &views, 2, present)? };
        let loss = tape.cross_entropy(f.logits, &labels)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        Ok((value, f.params.iter().map(|p| grads.wrt(*p)).collect()))
    };
    let (_, grads) = eval(model)?;
    let mut worst = 0.0f64;
    for p in 0..model.params.len() {
        if model.params[p].is_buffer() {
            continue;
        }
        let n = model.params[p].value.len();
        let picks: Vec<usize> = if n <= 12 { (0..n).collect() } else { (0..12).map(|i| i * n / 12).collect() };
        for i in picks {
            let orig = model.params[p].value.data()[i];
            let mut at = |x: f64| -> Result<f64> {
                model.params[p].value.data_mut()[i] = x;
                let l = eval(model).map(|r| r.0);
                model.params[p].value.data_mut()[i] = orig;
                l
            };
            worst = worst.max(central_difference_error(&mut at, orig, grads[p].data()[i])?);
        }
    }
    Ok(worst)
}

/// A tiny network with random biases and normalization buffers so that no
/// parameter sits at a special value.
pub fn tiny_gradient_model(views: &str, head: Vec<usize>, seed: u64) -> Result<Model> {
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
    let mut m = Model::new(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1A5);
    for p in m.params.iter_mut().filter(|p| p.name.ends_with(".b") || p.is_buffer()) {
        for v in p.value.data_mut() {
            *v = if p.name.ends_with(".var") { rng.gen_range(0.5..2.0) } else { rng.gen_range(-0.1..0.1) };
        }
    }
    Ok(m)
}

fn gradients(s: &mut Suite) {
    let check_op = |s: &mut Suite, name: &str, shapes: &[&[usize]], build: Build| {
        s.check(name.to_string(), |rng| {
            let inputs: Vec<Tensor> = shapes.iter().map(|sh| random_tensor(rng, sh)).collect();
            Ok(within(op_gradient_error(&inputs, build, rng)?, GRAD_RTOL))
        });
    };
    let ico_group = match ico() {
        Ok(g) => g,
        Err(e) => {
            s.check("group construction", |_| Err(e));
            return;
        }
    };
    let support = greedy_support(&ico_group, 4).unwrap_or_else(|_| vec![0]);
    let gconv_t = gconv_table(&ico_group, &support);
    let v12 = shared_hspace(GroupName::Icosahedral, HSpaceKind::Vertices12);
    let f20 = shared_hspace(GroupName::Icosahedral, HSpaceKind::Faces20);
    let (Ok(gconv_t), Ok(v12), Ok(f20)) = (gconv_t, v12, f20) else {
        s.check("gather tables", |_| Ok((false, "could not build tables".into())));
        return;
    };
    let s_len = support.len();
    let build_g = move |t: &mut Tape, v: &[Var]| t.gather(v[0], v[1], Some(v[2]), gconv_t.clone());
    check_op(s, "gather (G-Conv)", &[&[2, 60, 3], &[2, 3, s_len], &[2]], &build_g);
    let hc = hcorr_table(&v12, &[0, 3, 7]);
    let hv = hconv_table(&f20, &[1, 4]);
    if let (Ok(hc), Ok(hv)) = (hc, hv) {
        let build_c = move |t: &mut Tape, v: &[Var]| t.gather(v[0], v[1], Some(v[2]), hc.clone());
        check_op(s, "gather (H-Corr)", &[&[2, 12, 3], &[2, 3, 3], &[2]], &build_c);
        let build_v = move |t: &mut Tape, v: &[Var]| t.gather(v[0], v[1], None, hv.clone());
        check_op(s, "gather (H-Conv)", &[&[2, 20, 2], &[3, 2, 2]], &build_v);
    }
    for (label, spec) in [
        ("conv2d (zero padding, stride 2)", Conv2dSpec { kernel: 3, stride_h: 2, stride_w: 2, pad: 1, width_padding: WidthPadding::Zero }),
        ("conv2d (circular width, stride 2×1)", Conv2dSpec { kernel: 3, stride_h: 2, stride_w: 1, pad: 1, width_padding: WidthPadding::Circular }),
    ] {
        let build = move |t: &mut Tape, v: &[Var]| t.conv2d(v[0], v[1], v[2], spec);
        check_op(s, label, &[&[2, 6, 6, 2], &[3, 3, 3, 2], &[3]], &build);
    }
    check_op(s, "relu", &[&[2, 5, 3]], &|t: &mut Tape, v: &[Var]| Ok(t.relu(v[0])));
    check_op(s, "spatial mean", &[&[2, 3, 3, 2]], &|t: &mut Tape, v: &[Var]| t.spatial_mean(v[0]));
    check_op(s, "linear", &[&[3, 4], &[2, 4], &[2]], &|t: &mut Tape, v: &[Var]| t.linear(v[0], v[1], v[2]));
    check_op(s, "assemble", &[&[5, 3]], &|t: &mut Tape, v: &[Var]| {
        let sources = vec![vec![(0, 1.0)], vec![(1, 0.5), (2, 0.5)], vec![], vec![(3, 1.0)], vec![(4, 0.3), (0, 0.7)], vec![], vec![(2, 1.0)], vec![(1, 1.0)]];
        t.assemble(v[0], 2, 4, sources)
    });
    check_op(s, "masked mean pooling", &[&[2, 5, 3]], &|t: &mut Tape, v: &[Var]| {
        t.pool_rows(v[0], Some(vec![true, false, true, true, false, true, true, true, true, false]), Pool::Mean)
    });
    check_op(s, "max pooling", &[&[2, 5, 3]], &|t: &mut Tape, v: &[Var]| t.pool_rows(v[0], None, Pool::Max));
    check_op(s, "reshape", &[&[2, 6]], &|t: &mut Tape, v: &[Var]| t.reshape(v[0], &[3, 4]));
    check_op(s, "affine channels", &[&[4, 3]], &|t: &mut Tape, v: &[Var]| t.affine_channels(v[0], vec![0.5, -2.0, 1.5], &[0.1, 0.0, -0.3]));
    check_op(s, "group norm", &[&[2, 5, 3]], &|t: &mut Tape, v: &[Var]| t.group_norm(v[0], 1e-5));
    check_op(s, "cross-entropy", &[&[3, 4]], &|t: &mut Tape, v: &[Var]| t.cross_entropy(v[0], &[0, 3, 1]));
    check_op(s, "triplet (active hinge)", &[&[2, 4]], &|t: &mut Tape, v: &[Var]| {
        let pairs = vec![
            Some((vec![1.0, 0.2, -0.3, 0.5], vec![-0.4, 0.9, 0.1, 0.2])),
            Some((vec![0.3, -0.8, 0.6, 0.1], vec![0.5, 0.5, -0.5, 0.5])),
        ];
        t.triplet(v[0], pairs, 3.0)
    });
    check_op(s, "add scaled", &[&[2, 3], &[2, 3]], &|t: &mut Tape, v: &[Var]| t.add_scaled(v[0], v[1], -0.7));
    let missing: Vec<bool> = (0..120).map(|i| i % 7 != 3 && i % 11 != 5).collect();
    for (label, views, head, training, present) in [
        ("end-to-end: 2 G-Conv layers", "60x1", vec![8, 8], false, None),
        ("end-to-end: 2 G-Conv layers, batch statistics", "60x1", vec![8, 8], true, None),
        ("end-to-end: 2 G-Conv layers, missing views", "60x1", vec![8, 8], true, Some(missing.as_slice())),
        ("end-to-end: H-Corr lift on aligned12", "aligned12", vec![6, 5], false, None),
    ] {
        s.check(label, |rng| {
            let mut m = tiny_gradient_model(views, head, 11)?;
            Ok(within(model_gradient_error(&mut m, training, present, rng)?, GRAD_RTOL))
        });
    }
}

fn views(s: &mut Suite) {
    for kind in [ConfigKind::V60x1, ConfigKind::V12x5, ConfigKind::V20x3] {
        s.check(format!("{kind}: 60 valid poses, bijective assignment"), |_| {
            let cfg = gen_config(kind, 3.0)?;
            let mut seen = vec![false; 60];
            cfg.assignment().iter().for_each(|&a| seen[a] = true);
            for p in cfg.poses() {
                p.check(3.0)?;
            }
            Ok(exact(cfg.len() == 60 && seen.iter().all(|s| *s), "assignment onto ico"))
        });
        s.check(format!("{kind}: geometric and Cayley permutations agree for every k"), |_| {
            gen_config(kind, 3.0)?.check_equivariance()?;
            Ok((true, "60 rotations".into()))
        });
        s.check(format!("{kind}: permutations compose like the group"), |_| {
            let cfg = gen_config(kind, 3.0)?;
            let g = cfg.group().clone();
            let perms: Vec<Vec<usize>> = (0..60).map(|k| cfg.permutation_under_rotation(k)).collect::<Result<_>>()?;
            let ok = (0..60).all(|k| {
                (0..60).all(|k2| (0..60).all(|i| perms[k][perms[k2][i]] == perms[g.mul(k, k2)][i]))
            });
            Ok(exact(ok, "π(k)∘π(k') = π(k·k')"))
        });
    }
    s.check("60x1: a 72° rotation permutes views in twelve 5-cycles", |_| {
        let cfg = gen_config(ConfigKind::V60x1, 3.0)?;
        let (a, _) = five_fold_subgroup(cfg.group())?;
        let perm = cfg.permutation_under_rotation(a)?;
        let mut seen = vec![false; 60];
        let mut cycles = Vec::new();
        for start in 0..60 {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = perm[i];
                len += 1;
            }
            cycles.push(len);
        }
        Ok((cycles.len() == 12 && cycles.iter().all(|&l| l == 5), format!("cycle lengths {cycles:?}")))
    });
    s.check("60x1: no two views share an optical axis", |_| {
        let cfg = gen_config(ConfigKind::V60x1, 3.0)?;
        let mut min = f64::INFINITY;
        for (i, p) in cfg.poses().iter().enumerate() {
            for q in &cfg.poses()[i + 1..] {
                min = min.min(p.optical_axis.dot(&q.optical_axis).clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        Ok((min > 1.0, format!("minimum pairwise axis angle {min:.3}°")))
    });
    for (kind, families, per, angle) in [(ConfigKind::V12x5, 12, 5, 72.0), (ConfigKind::V20x3, 20, 3, 120.0)] {
        s.check(format!("{kind}: {families} in-plane families of {per}"), |_| {
            let cfg = gen_config(kind, 3.0)?;
            let fam = cfg.in_plane_families()?;
            let mut ok = fam.len() == families;
            let mut worst = 0.0f64;
            for (_, members) in &fam {
                ok &= members.len() == per;
                let p0 = &cfg.poses()[members[0]];
                for w in members.windows(2) {
                    let (a, b) = (&cfg.poses()[w[0]], &cfg.poses()[w[1]]);
                    ok &= a.optical_axis.dot(&b.optical_axis) > 1.0 - 1e-12;
                    let turn = a.up.dot(&b.up).clamp(-1.0, 1.0).acos().to_degrees();
                    worst = worst.max((turn - angle).abs());
                }
                ok &= members.iter().all(|&m| cfg.poses()[m].optical_axis.dot(&p0.optical_axis) > 1.0 - 1e-12);
            }
            Ok((ok && worst < 1e-9, format!("up rotation error {worst:.1e}°")))
        });
    }
    for (kind, n) in [(ConfigKind::Aligned12, 12), (ConfigKind::Aligned20, 20)] {
        s.check(format!("{kind}: one view per point"), |_| {
            let cfg = gen_config(kind, 3.0)?;
            let mut a = cfg.assignment().to_vec();
            a.sort();
            for p in cfg.poses() {
                p.check(3.0)?;
            }
            Ok(exact(cfg.len() == n && a == (0..n).collect::<Vec<_>>(), "bijection onto X"))
        });
    }
    s.check("panorama8: cyclic permutation equivariance", |_| {
        gen_config(ConfigKind::CyclicPanorama(8), 3.0)?.check_equivariance()?;
        Ok((true, "8 rotations".into()))
    });
}

const RENDER_SHAPES: usize = 20;

/// Rotate-then-render against render-then-permute for `shapes` random
/// shapes and every `k`; returns the number of mismatching pixels.
pub fn rendering_mismatches(kind: ConfigKind, shapes: usize, spec: &RenderSpec, rng: &mut ChaCha8Rng) -> Result<usize> {
    let cfg = gen_config(kind, 3.0)?;
    let perms: Vec<Vec<usize>> = (0..60).map(|k| cfg.permutation_under_rotation(k)).collect::<Result<_>>()?;
    let px = spec.size * spec.size;
    let mut bad = 0;
    for i in 0..shapes {
        let shape = make_shape(i % crate::synth::CLASS_NAMES.len(), rng.gen())?.rotated(&random_rotation(rng));
        let base = render_views(&shape, cfg.poses(), spec)?;
        for (k, perm) in perms.iter().enumerate() {
            let moved = render_views(&shape.rotated(cfg.group().element(k)), cfg.poses(), spec)?;
            for (v, &j) in perm.iter().enumerate() {
                let a = &moved.data()[j * px..(j + 1) * px];
                let b = &base.data()[v * px..(v + 1) * px];
                bad += a.iter().zip(b).filter(|(x, y)| x != y).count();
            }
        }
    }
    Ok(bad)
}

fn rendering(s: &mut Suite) {
    for kind in [ConfigKind::V60x1, ConfigKind::V12x5, ConfigKind::V20x3] {
        s.check(format!("{kind}: rotate-then-render = render-then-permute"), |rng| {
            let bad = rendering_mismatches(kind, RENDER_SHAPES, &RenderSpec::default(), rng)?;
            Ok((bad == 0, format!("{RENDER_SHAPES} shapes × 60 rotations, {bad} differing pixels")))
        });
    }
    s.check("assembled signal of a rotated object is the acted signal", |rng| {
        let m = small_model("60x1", vec![6], 4)?;
        let spec = RenderSpec::default();
        let shape = make_shape(2, rng.gen())?.rotated(&random_rotation(rng));
        let assembled = |views: &Tensor| -> Result<Tensor> {
            let mut tape = Tape::new();
            let f = m.forward(&mut tape, views, 1, None)?;
            Ok(tape.value(f.assembled).clone())
        };
        let base = GroupSignal::new(m.group().clone(), assembled(&render_views(&shape, m.camera().poses(), &spec)?)?)?;
        let mut worst = 0.0f64;
        for k in 0..60 {
            let moved = assembled(&render_views(&shape.rotated(m.group().element(k)), m.camera().poses(), &spec)?)?;
            worst = worst.max(moved.max_abs_diff(apply_action(k, &base)?.data()));
        }
        Ok(within(worst, 1e-6))
    });
    s.check("uniform rotations average to the zero matrix", |rng| {
        let mut sum = nalgebra::Matrix3::<f64>::zeros();
        let n = 10_000;
        for _ in 0..n {
            sum += random_rotation(rng).matrix();
        }
        Ok(within((sum / n as f64).amax(), 0.05))
    });
}

/// Smooth test image: a Gaussian envelope times a low-order polynomial.
pub fn smooth_image(size: usize, sigma: f64, rotate: f64, scale: f64) -> Tensor {
    let c = (size as f64 - 1.0) / 2.0;
    let (sn, cs) = rotate.sin_cos();
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            // sample the source at R(−α)·p / scale
            let u = (cs * dx + sn * dy) / (scale * sigma);
            let v = (-sn * dx + cs * dy) / (scale * sigma);
            data.push((-(u * u + v * v) / 2.0).exp() * (1.0 + 0.6 * u - 0.4 * v + 0.5 * u * v + 0.3 * v * v));
        }
    }
    Tensor::from_vec(&[size, size, 1], data).expect("image shape")
}

pub const POLAR_SPEC: PolarSpec = PolarSpec { radial: 32, angular: 64, r_range: Some((1.0, 40.0)) };

fn polar(s: &mut Suite) {
    s.check("rotation by 2πm/Θ is an m-step angular shift", |_| {
        let (size, sigma) = (128, 18.0);
        let base = smooth_image(size, sigma, 0.0, 1.0);
        let c = (size as f64 - 1.0) / 2.0;
        let p0 = log_polar(&base, [c, c], &POLAR_SPEC)?;
        let t = POLAR_SPEC.angular;
        let mut worst = 0.0f64;
        for m in 0..t {
            let img = smooth_image(size, sigma, 2.0 * std::f64::consts::PI * m as f64 / t as f64, 1.0);
            let p = log_polar(&img, [c, c], &POLAR_SPEC)?;
            worst = worst.max(p.data.max_abs_diff(&p0.shift_angle(m as isize).data));
        }
        Ok(within(worst, 1e-3))
    });
    s.check("scaling by one log step is a radial shift", |_| {
        let (size, sigma) = (128, 18.0);
        let c = (size as f64 - 1.0) / 2.0;
        let p0 = log_polar(&smooth_image(size, sigma, 0.0, 1.0), [c, c], &POLAR_SPEC)?;
        let p1 = log_polar(&smooth_image(size, sigma, 0.0, p0.log_step().exp()), [c, c], &POLAR_SPEC)?;
        let (r, t) = (p0.radial_bins(), p0.angular_bins());
        let mut worst = 0.0f64;
        for i in 1..r {
            for j in 0..t {
                worst = worst.max((p1.data.data()[i * t + j] - p0.data.data()[(i - 1) * t + j]).abs());
            }
        }
        Ok(within(worst, 1e-3))
    });
    s.check("polar encoder is invariant to angular shifts", |rng| {
        let cfg = ModelConfig {
            views: "12x5".into(),
            polar: Some((16, 16)),
            encoder_widths: vec![4, 6],
            encoder_strides: vec![2, 1],
            proj_dim: 5,
            head_widths: vec![4],
            ..Default::default()
        };
        let m = Model::new(cfg, 9)?;
        let inputs = random_views(rng, 3, 16);
        let encode = |x: &Tensor| -> Result<Tensor> {
            let mut tape = Tape::new();
            let params: Vec<Var> = m.params.iter().map(|p| tape.constant(p.value.clone())).collect();
            let v = tape.constant(x.clone());
            let out = m.encode(&mut tape, v, &params)?;
            Ok(tape.value(out).clone())
        };
        let base = encode(&inputs)?;
        let mut worst = 0.0f64;
        for shift in 1..16 {
            let mut shifted = Tensor::zeros(inputs.shape());
            for i in 0..3 * 16 {
                for j in 0..16 {
                    shifted.data_mut()[i * 16 + (j + shift) % 16] = inputs.data()[i * 16 + j];
                }
            }
            worst = worst.max(encode(&shifted)?.max_abs_diff(&base));
        }
        Ok(within(worst, 1e-6))
    });
    s.check("constant image stays constant inside the radius range", |_| {
        let img = Tensor::full(&[64, 64, 1], 0.37);
        let spec = PolarSpec { radial: 16, angular: 32, r_range: Some((1.0, 30.0)) };
        let p = log_polar(&img, [31.5, 31.5], &spec)?;
        Ok(within(p.data.data().iter().map(|v| (v - 0.37).abs()).fold(0.0, f64::max), 1e-12))
    });
}

/// AP, P@N, R@N and F1@N of one query by exhaustive position counting.
pub fn brute_force_scores(descs: &[Vec<f64>], labels: &[usize], predicted: &[usize], q: &Query, rerank: bool) -> [f64; 4] {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(&q.descriptor);
    let dist: Vec<f64> = descs
        .iter()
        .map(|d| {
            let dn = norm(d);
            1.0 - d.iter().zip(&q.descriptor).map(|(a, b)| (a / dn) * (b / qn)).sum::<f64>()
        })
        .collect();
    let items: Vec<usize> = (0..descs.len()).filter(|&i| Some(i) != q.exclude).collect();
    let key = |i: usize| (rerank && predicted[i] != q.predicted, dist[i], i);
    let before = |a: usize, b: usize| {
        let (ka, kb) = (key(a), key(b));
        (ka.0, ka.1, ka.2).partial_cmp(&(kb.0, kb.1, kb.2)) == Some(std::cmp::Ordering::Less)
    };
    let mut at = vec![usize::MAX; descs.len()];
    for &i in &items {
        at[i] = items.iter().filter(|&&j| before(j, i)).count();
    }
    let relevant: Vec<usize> = items.iter().copied().filter(|&i| labels[i] == q.label).collect();
    let mut positions: Vec<usize> = relevant.iter().map(|&i| at[i]).collect();
    positions.sort();
    let mut ap = 0.0;
    for (h, &pos) in positions.iter().enumerate() {
        ap += (h + 1) as f64 / (pos + 1) as f64;
    }
    let ap = if relevant.is_empty() { 0.0 } else { ap / relevant.len() as f64 };
    let n = items.iter().filter(|&&i| predicted[i] == q.predicted).count();
    let hits = positions.iter().filter(|&&p| p < n).count() as f64;
    let p = if n > 0 { hits / n as f64 } else { 0.0 };
    let r = if relevant.is_empty() { 0.0 } else { hits / relevant.len() as f64 };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    [ap, p, r, f1]
}

fn random_gallery(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>, Vec<usize>) {
    let n = rng.gen_range(5..=30);
    let classes = rng.gen_range(1..=4);
    let descs = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let predicted = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    (descs, labels, predicted)
}

fn retrieval(s: &mut Suite) {
    s.check("metrics match the brute-force oracle on 20 galleries", |rng| {
        let mut ok = true;
        for _ in 0..20 {
            let (descs, labels, predicted) = random_gallery(rng);
            let index = RetrievalIndex::new(&descs, labels.clone(), predicted.clone())?;
            for rerank in [false, true] {
                let queries: Vec<Query> = (0..descs.len())
                    .map(|i| Query { descriptor: descs[i].clone(), label: labels[i], predicted: predicted[i], exclude: Some(i) })
                    .collect();
                let mut sums = [0.0; 4];
                let mut per_class = std::collections::BTreeMap::<usize, (f64, usize)>::new();
                for q in &queries {
                    let want = brute_force_scores(&descs, &labels, &predicted, q, rerank);
                    ok &= index.query_scores(q, rerank)? == want;
                    for (s, v) in sums.iter_mut().zip(want) {
                        *s += v;
                    }
                    let e = per_class.entry(q.label).or_default();
                    e.0 += want[0];
                    e.1 += 1;
                }
                let got = evaluate_retrieval(&index, &queries, rerank)?;
                let nq = queries.len() as f64;
                let macro_ = per_class.values().map(|(s, c)| s / *c as f64).sum::<f64>() / per_class.len() as f64;
                ok &= got.map_micro == sums[0] / nq && got.map_macro == macro_ && got.p_at_n == sums[1] / nq;
                ok &= got.r_at_n == sums[2] / nq && got.f1_at_n == sums[3] / nq;
            }
        }
        Ok(exact(ok, "AP, mAP micro/macro, P/R/F1@N"))
    });
    s.check("reranking is a stable partition", |rng| {
        let mut ok = true;
        for _ in 0..50 {
            let (descs, labels, predicted) = random_gallery(rng);
            let index = RetrievalIndex::new(&descs, labels.clone(), predicted.clone())?;
            let q = Query { descriptor: descs[0].clone(), label: labels[0], predicted: predicted[0], exclude: Some(0) };
            let plain = index.rank(&q, false)?;
            let mut expect: Vec<usize> = plain.iter().copied().filter(|&i| predicted[i] == q.predicted).collect();
            expect.extend(plain.iter().copied().filter(|&i| predicted[i] != q.predicted));
            ok &= index.rank(&q, true)? == expect;
        }
        Ok(exact(ok, "50 random galleries"))
    });
    s.check("worked AP values", |_| {
        let index = RetrievalIndex::new(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![1, 0], vec![0, 0])?;
        let q = Query { descriptor: vec![1.0, 0.1], label: 0, predicted: 0, exclude: None };
        let second = index.query_scores(&q, false)?[0];
        let index = RetrievalIndex::new(&[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]], vec![0, 0, 1], vec![0, 0, 1])?;
        let first = index.query_scores(&Query { descriptor: vec![1.0, 0.0], label: 0, predicted: 0, exclude: None }, false)?[0];
        Ok((second == 0.5 && first == 1.0, format!("2nd of 2: {second}, all nearest: {first}")))
    });
}

/// Worst change of the head descriptor when the assembled input is acted
/// on by every group element.
pub fn head_invariance(model: &Model, rng: &mut ChaCha8Rng) -> Result<f64> {
    let rows = model.input_rows();
    let sig = random_tensor(rng, &[2, rows, model.cfg.proj_dim]);
    let (base, _) = model.head_only(&sig)?;
    let mut worst = 0.0f64;
    for k in 0..model.group().order() {
        let moved = match model.camera().space() {
            ViewSpace::Group(g) if rows == g.order() => apply_action(k, &GroupSignal::new(g.clone(), sig.clone())?)?.into_data(),
            ViewSpace::HSpace(h) => apply_action_hspace(k, &HSpaceSignal::new(h.clone(), sig.clone())?)?.into_data(),
            _ => return Err(param_err!("head invariance needs group- or space-valued inputs")),
        };
        worst = worst.max(model.head_only(&moved)?.0.max_abs_diff(&base));
    }
    Ok(worst)
}

fn descriptor(s: &mut Suite) {
    for (views, head) in [("60x1", vec![6, 6, 6]), ("12x5", vec![5, 5]), ("20x3", vec![5]), ("aligned12", vec![5, 5]), ("aligned20", vec![4])] {
        s.check(format!("{views}: random network descriptor is invariant"), |rng| {
            let mut m = small_model(views, head, rng.gen())?;
            for p in m.params.iter_mut().filter(|p| p.name.ends_with(".b")) {
                p.value = random_tensor(rng, p.value.shape());
            }
            Ok(within(head_invariance(&m, rng)?, 1e-8))
        });
    }
    s.check("60x1: rotating the object leaves the embedding unchanged", |rng| {
        let m = small_model("60x1", vec![6, 6], 5)?;
        let spec = RenderSpec::default();
        let inst = crate::synth::Instance { class_id: 3, shape_seed: rng.gen(), rotation: random_rotation(rng) };
        Ok(within(crate::experiment::rotation_invariance(&m, &[inst], &spec)?, 1e-8))
    });
    s.check("zero signal gives a zero descriptor without biases", |_| {
        let m = plain_model("60x1", vec![6, 6], 6)?;
        let (d, _) = m.head_only(&Tensor::zeros(&[1, 60, 6]))?;
        Ok(exact(d.data().iter().all(|v| *v == 0.0), "descriptor"))
    });
    s.check("dropping a whole in-plane family keeps outputs finite", |rng| {
        let m = small_model("12x5", vec![5], 7)?;
        let fam = m.camera().in_plane_families()?;
        let mut present = vec![true; 60];
        for &i in &fam[0].1 {
            present[i] = false;
        }
        let views = random_views(rng, 55, 16);
        let (d, l) = m.infer(&views, 1, Some(&present))?;
        Ok(exact(d.is_finite() && l.is_finite(), "finite outputs"))
    });
    s.check("learning-rate schedule endpoints", |_| {
        let (spe, total, base) = (7, 35, 0.05);
        let a = lr_schedule(0.0, spe, total, base);
        let b = lr_schedule(spe as f64, spe, total, base);
        let c = lr_schedule(total as f64, spe, total, base);
        Ok((a == 0.0 && (b - base).abs() < 1e-15 && c.abs() < 1e-12, format!("lr(0)={a}, lr(epoch 1)={b}, lr(T)={c:.1e}")))
    });
    s.check("triplet loss worked values", |_| {
        let zero = triplet_value(&[1.0, 0.0], &[1.0, 0.0], &[-1.0, 0.0], 0.2)?;
        let full = triplet_value(&[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0], 0.2)?;
        Ok((zero == 0.0 && (full - 1.2).abs() < 1e-15, format!("{zero}, {full}")))
    });
}

fn visualization(s: &mut Suite) {
    s.check("constant features map to mid grey", |_| {
        let colors = pca_rgb(&Tensor::full(&[60, 4], 2.0), 0..4)?;
        Ok(exact(colors.iter().all(|c| *c == [0.5; 3]), "all (0.5, 0.5, 0.5)"))
    });
    s.check("pentakis mesh has one face per element, in element order", |_| {
        let g = ico()?;
        let mesh = pentakis_mesh(&g)?;
        let p0 = crate::hspace::group_reference_point(GroupName::Icosahedral);
        let ok = mesh.faces.len() == 60
            && mesh.faces.iter().enumerate().all(|(i, f)| {
                let c = f.iter().map(|&v| mesh.vertices[v]).sum::<Vector3<f64>>().normalize();
                c.dot(&g.element(i).apply(&p0)) > 0.99
            });
        let ply = ply_string(&mesh, &vec![[0.5; 3]; 60])?;
        Ok(exact(ok && ply.contains("element face 60"), "60 faces"))
    });
}
