//! Property tests against oracles written out literally here, independent
//! of the gather tables and rank sorting used by the library.

use std::sync::Arc;

use finrot::group::{shared_group, FiniteGroup, GroupName, Rotation};
use finrot::hspace::{shared_hspace, HSpace, HSpaceKind};
use finrot::io::{decode_tensors, encode_tensors, DType};
use finrot::mvnet::loss::triplet_value;
use finrot::mvnet::retrieval::{Query, RetrievalIndex};
use finrot::mvnet::train::lr_schedule;
use finrot::signal::{apply_action, apply_action_hspace, gconv, hconv, hcorr, GroupSignal, HSpaceSignal, LocalizedFilter};
use finrot::tensor::Tensor;
use finrot::viz::pca_rgb;
use nalgebra::{DMatrix, Vector3};
use proptest::prelude::*;

const GROUPS: [GroupName; 5] = [
    GroupName::Cyclic(12),
    GroupName::Dihedral(6),
    GroupName::Tetrahedral,
    GroupName::Octahedral,
    GroupName::Icosahedral,
];

fn tensor(shape: &[usize], values: &[f64]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, values.iter().cycle().take(n).copied().collect()).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 7..64)
}

/// Support as a non-empty, duplicate-free subset of `0..n`.
fn subset(n: usize, seeds: &[usize]) -> Vec<usize> {
    let mut s: Vec<usize> = Vec::new();
    for &x in seeds {
        if !s.contains(&(x % n)) {
            s.push(x % n);
        }
    }
    s
}

/// Σ_{g∈G} f(g) h(g⁻¹y) with h taken from the support list, found by
/// comparing rotation matrices rather than table lookups.
fn gconv_by_matrices(g: &FiniteGroup, f: &Tensor, support: &[usize], w: &Tensor) -> Tensor {
    let n = g.order();
    let (cin, cout) = (f.dim(1), w.dim(0));
    let index_of = |m: &nalgebra::Matrix3<f64>| (0..n).find(|&i| (g.element(i).matrix() - m).amax() < 1e-9).unwrap();
    let mut out = Tensor::zeros(&[1, n, cout]);
    for y in 0..n {
        for gi in 0..n {
            let u = index_of(&(g.element(gi).matrix().transpose() * g.element(y).matrix()));
            let Some(s) = support.iter().position(|&e| e == u) else { continue };
            for o in 0..cout {
                for i in 0..cin {
                    out.data_mut()[y * cout + o] += f.data()[gi * cin + i] * w.data()[(o * cin + i) * support.len() + s];
                }
            }
        }
    }
    out
}

fn point_index(h: &HSpace, p: &Vector3<f64>) -> usize {
    h.points().iter().position(|q| (q - p).norm() < 1e-9).unwrap()
}

/// Σ_{g∈G} f(g·η) h(g⁻¹·y), acting with matrices on the point coordinates.
fn hconv_by_points(h: &HSpace, f: &Tensor, support: &[usize], w: &Tensor) -> Tensor {
    let g = h.group();
    let (nx, cin, cout) = (h.len(), f.dim(1), w.dim(0));
    let eta = h.points()[h.eta()];
    let mut out = Tensor::zeros(&[1, nx, cout]);
    for y in 0..nx {
        for gi in 0..g.order() {
            let r = g.element(gi);
            let u = point_index(h, &r.inverse().apply(&h.points()[y]));
            let Some(s) = support.iter().position(|&e| e == u) else { continue };
            let src = point_index(h, &r.apply(&eta));
            for o in 0..cout {
                for i in 0..cin {
                    out.data_mut()[y * cout + o] += f.data()[src * cin + i] * w.data()[(o * cin + i) * support.len() + s];
                }
            }
        }
    }
    out
}

/// Σ_{x∈X} f(g·x) h(x).
fn hcorr_by_points(h: &HSpace, f: &Tensor, support: &[usize], w: &Tensor) -> Tensor {
    let g = h.group();
    let (cin, cout) = (f.dim(1), w.dim(0));
    let mut out = Tensor::zeros(&[1, g.order(), cout]);
    for gi in 0..g.order() {
        for (s, &x) in support.iter().enumerate() {
            let src = point_index(h, &g.element(gi).apply(&h.points()[x]));
            for o in 0..cout {
                for i in 0..cin {
                    out.data_mut()[gi * cout + o] += f.data()[src * cin + i] * w.data()[(o * cin + i) * support.len() + s];
                }
            }
        }
    }
    out
}

fn space(kind_is_faces: bool) -> Arc<HSpace> {
    let kind = if kind_is_faces { HSpaceKind::Faces20 } else { HSpaceKind::Vertices12 };
    shared_hspace(GroupName::Icosahedral, kind).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gconv_matches_matrix_oracle(gi in 0usize..5, cin in 1usize..3, cout in 1usize..3, seeds in prop::collection::vec(0usize..60, 1..10), vals in values()) {
        let g = shared_group(GROUPS[gi]).unwrap();
        let support = subset(g.order(), &seeds);
        let f = tensor(&[g.order(), cin], &vals);
        let w = tensor(&[cout, cin, support.len()], &vals[3..]);
        let fast = gconv(&GroupSignal::new(g.clone(), f.clone()).unwrap(), &LocalizedFilter::new(support.clone(), w.clone()).unwrap()).unwrap();
        prop_assert!(fast.data().max_abs_diff(&gconv_by_matrices(&g, &f, &support, &w)) < 1e-12);
    }

    #[test]
    fn hspace_ops_match_point_oracles(faces: bool, cin in 1usize..3, cout in 1usize..3, seeds in prop::collection::vec(0usize..20, 1..8), vals in values()) {
        let h = space(faces);
        let support = subset(h.len(), &seeds);
        let f = tensor(&[h.len(), cin], &vals);
        let w = tensor(&[cout, cin, support.len()], &vals[2..]);
        let sig = HSpaceSignal::new(h.clone(), f.clone()).unwrap();
        let filt = LocalizedFilter::new(support.clone(), w.clone()).unwrap();
        prop_assert!(hconv(&sig, &filt).unwrap().data().max_abs_diff(&hconv_by_points(&h, &f, &support, &w)) < 1e-12);
        prop_assert!(hcorr(&sig, &filt).unwrap().data().max_abs_diff(&hcorr_by_points(&h, &f, &support, &w)) < 1e-12);
    }

    #[test]
    fn convolutions_are_equivariant(gi in 0usize..5, k in 0usize..60, seeds in prop::collection::vec(0usize..60, 1..10), vals in values()) {
        let g = shared_group(GROUPS[gi]).unwrap();
        let k = k % g.order();
        let support = subset(g.order(), &seeds);
        let f = GroupSignal::new(g.clone(), tensor(&[2, g.order(), 2], &vals)).unwrap();
        let h = LocalizedFilter::new(support.clone(), tensor(&[3, 2, support.len()], &vals[1..])).unwrap();
        let lhs = gconv(&apply_action(k, &f).unwrap(), &h).unwrap();
        let rhs = apply_action(k, &gconv(&f, &h).unwrap()).unwrap();
        prop_assert!(lhs.data().max_abs_diff(rhs.data()) < 1e-10);
    }

    #[test]
    fn hspace_convolutions_are_equivariant(faces: bool, k in 0usize..60, seeds in prop::collection::vec(0usize..20, 1..8), vals in values()) {
        let h = space(faces);
        let support = subset(h.len(), &seeds);
        let f = HSpaceSignal::new(h.clone(), tensor(&[h.len(), 2], &vals)).unwrap();
        let filt = LocalizedFilter::new(support.clone(), tensor(&[2, 2, support.len()], &vals[4..])).unwrap();
        let moved = apply_action_hspace(k, &f).unwrap();
        let a = hconv(&moved, &filt).unwrap();
        let b = apply_action_hspace(k, &hconv(&f, &filt).unwrap()).unwrap();
        prop_assert!(a.data().max_abs_diff(b.data()) < 1e-10);
        let a = hcorr(&moved, &filt).unwrap();
        let b = apply_action(k, &hcorr(&f, &filt).unwrap()).unwrap();
        prop_assert!(a.data().max_abs_diff(b.data()) < 1e-10);
    }

    #[test]
    fn action_is_a_homomorphism(gi in 0usize..5, k in 0usize..60, k2 in 0usize..60, vals in values()) {
        let g = shared_group(GROUPS[gi]).unwrap();
        let (k, k2) = (k % g.order(), k2 % g.order());
        let f = GroupSignal::new(g.clone(), tensor(&[g.order(), 3], &vals)).unwrap();
        let two = apply_action(k2, &apply_action(k, &f).unwrap()).unwrap();
        let once = apply_action(g.mul(k2, k), &f).unwrap();
        prop_assert_eq!(two.data(), once.data());
        let id = apply_action(0, &f).unwrap();
        prop_assert_eq!(id.data(), f.data());
    }

    #[test]
    fn space_action_inverts(faces: bool, k in 0usize..60, x in 0usize..20) {
        let h = space(faces);
        let x = x % h.len();
        prop_assert_eq!(h.act(k, h.act(h.group().inv(k), x).unwrap()).unwrap(), x);
        let p = h.group().element(k).apply(&h.points()[x]);
        prop_assert_eq!(point_index(&h, &p), h.act(k, x).unwrap());
    }

    #[test]
    fn nearest_element_is_stable_under_small_perturbations(i in 0usize..60, ax in -1.0f64..1.0, ay in -1.0f64..1.0, angle in 1e-9f64..1e-7) {
        let g = shared_group(GroupName::Icosahedral).unwrap();
        let axis = Vector3::new(ax, ay, 0.5).normalize();
        let r = g.element(i).compose(&Rotation::from_axis_angle(axis, angle));
        let m = g.nearest_element(r.matrix(), 1e-6);
        prop_assert_eq!(m.index, i);
        prop_assert!(m.exact);
    }

    #[test]
    fn container_roundtrip(shape in prop::collection::vec(1usize..5, 1..4), vals in values()) {
        let t = tensor(&shape, &vals);
        let back = decode_tensors(&encode_tensors(&[("t", &t)], DType::F64).unwrap()).unwrap();
        prop_assert_eq!(&back[0].1, &t);
        let back32 = decode_tensors(&encode_tensors(&[("t", &t)], DType::F32).unwrap()).unwrap();
        prop_assert!(back32[0].1.max_abs_diff(&t) < 1e-7);
    }

    #[test]
    fn schedule_is_bounded_and_continuous(spe in 1usize..20, epochs in 2usize..10, t in 0.0f64..1.0) {
        let total = spe * epochs;
        let at = t * total as f64;
        let lr = lr_schedule(at, spe, total, 0.1);
        prop_assert!((0.0..=0.1 + 1e-15).contains(&lr));
        let near = lr_schedule(at + 1e-9, spe, total, 0.1);
        prop_assert!((near - lr).abs() < 1e-6);
    }

    #[test]
    fn triplet_matches_formula(z in prop::collection::vec(-1.0f64..1.0, 4), p in prop::collection::vec(-1.0f64..1.0, 4), n in prop::collection::vec(-1.0f64..1.0, 4), alpha in 0.0f64..1.0) {
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
        };
        prop_assume!(z.iter().any(|v| v.abs() > 1e-3) && p.iter().any(|v| v.abs() > 1e-3) && n.iter().any(|v| v.abs() > 1e-3));
        let expect = ((1.0 - cos(&z, &p)) - (1.0 - cos(&z, &n)) + alpha).max(0.0);
        prop_assert!((triplet_value(&z, &p, &n, alpha).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn retrieval_matches_exhaustive_scan(
        descs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 2..50),
        labels in prop::collection::vec(0usize..4, 50),
        predicted in prop::collection::vec(0usize..4, 50),
        rerank: bool,
    ) {
        prop_assume!(descs.iter().all(|d| d.iter().any(|v| v.abs() > 1e-3)));
        let n = descs.len();
        let (labels, predicted) = (labels[..n].to_vec(), predicted[..n].to_vec());
        let index = RetrievalIndex::new(&descs, labels.clone(), predicted.clone()).unwrap();
        for qi in 0..n.min(5) {
            let q = Query { descriptor: descs[qi].clone(), label: labels[qi], predicted: predicted[qi], exclude: Some(qi) };
            let got = index.query_scores(&q, rerank).unwrap();
            let want = scan_scores(&descs, &labels, &predicted, qi, rerank);
            for (a, b) in got.iter().zip(want) {
                prop_assert!((a - b).abs() < 1e-12, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn pca_colors_follow_the_top_eigenvectors(vals in prop::collection::vec(-1.0f64..1.0, 60 * 6)) {
        let t = Tensor::from_vec(&[60, 6], vals.clone()).unwrap();
        let colors = pca_rgb(&t, 0..6).unwrap();
        let x = DMatrix::from_row_slice(60, 6, &vals);
        let mean = x.row_mean();
        let c = DMatrix::from_fn(60, 6, |i, j| x[(i, j)] - mean[j]);
        let eig = (c.transpose() * &c).symmetric_eigen();
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for (slot, &k) in order.iter().take(3).enumerate() {
            let proj = &c * eig.eigenvectors.column(k);
            let (lo, hi) = proj.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &p| (l.min(p), h.max(p)));
            // the library fixes the sign; compare up to a flip
            let direct: Vec<f64> = proj.iter().map(|p| (p - lo) / (hi - lo)).collect();
            let same = direct.iter().zip(&colors).all(|(d, col)| (d - col[slot]).abs() < 1e-9);
            let flipped = direct.iter().zip(&colors).all(|(d, col)| (1.0 - d - col[slot]).abs() < 1e-9);
            prop_assert!(same || flipped);
        }
    }
}

/// AP, P@N, R@N and F1@N by walking every item and counting how many others
/// outrank it.
fn scan_scores(descs: &[Vec<f64>], labels: &[usize], predicted: &[usize], q: usize, rerank: bool) -> [f64; 4] {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dist = |i: usize| {
        1.0 - descs[i].iter().zip(&descs[q]).map(|(a, b)| a * b).sum::<f64>() / (norm(&descs[i]) * norm(&descs[q]))
    };
    let others: Vec<usize> = (0..descs.len()).filter(|&i| i != q).collect();
    let tier = |i: usize| usize::from(rerank && predicted[i] != predicted[q]);
    let outranks = |j: usize, i: usize| (tier(j), dist(j), j) < (tier(i), dist(i), i);
    let rank = |i: usize| others.iter().filter(|&&j| j != i && outranks(j, i)).count();
    let relevant: Vec<usize> = others.iter().copied().filter(|&i| labels[i] == labels[q]).collect();
    let mut ap = 0.0;
    for &i in &relevant {
        let above = relevant.iter().filter(|&&j| j != i && outranks(j, i)).count();
        ap += (above + 1) as f64 / (rank(i) + 1) as f64;
    }
    let ap = if relevant.is_empty() { 0.0 } else { ap / relevant.len() as f64 };
    let n = others.iter().filter(|&&i| predicted[i] == predicted[q]).count();
    let hits = relevant.iter().filter(|&&i| rank(i) < n).count() as f64;
    let p = if n == 0 { 0.0 } else { hits / n as f64 };
    let r = if relevant.is_empty() { 0.0 } else { hits / relevant.len() as f64 };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    [ap, p, r, f1]
}
