//! Feature-map visualization: PCA colors per group element or space point,
//! exported as colored PLY polyhedra.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen, Vector3};

use crate::error::{param_err, Result};
use crate::group::{icosahedron_face_centers, icosahedron_vertices, FiniteGroup, GroupName};
use crate::hspace::{group_reference_point, HSpaceKind};
use crate::tensor::Tensor;

/// Projects the rows of `features: [N, C]` (channels `channels`) onto the
/// top three principal components and rescales each to `[0, 1]`. Missing or
/// constant components are filled with 0.5.
pub fn pca_rgb(features: &Tensor, channels: std::ops::Range<usize>) -> Result<Vec<[f64; 3]>> {
    if features.shape().len() != 2 {
        return Err(param_err!("pca_rgb expects [N, C], got {:?}", features.shape()));
    }
    let (n, c_all) = (features.dim(0), features.dim(1));
    if channels.end > c_all || channels.len() < 3 {
        return Err(param_err!("pca_rgb needs at least 3 channels inside 0..{c_all}, got {channels:?}"));
    }
    let c = channels.len();
    let x = DMatrix::from_fn(n, c, |i, j| features.data()[i * c_all + channels.start + j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, c, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / n.max(1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut colors = vec![[0.5; 3]; n];
    for (slot, &k) in order.iter().take(3).enumerate() {
        let lambda = eig.eigenvalues[k];
        if !(lambda > 1e-12 * top.max(1e-300)) || lambda <= 1e-300 {
            continue;
        }
        let mut v = eig.eigenvectors.column(k).into_owned();
        let lead = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
        if lead < 0.0 {
            v = -v;
        }
        let proj = &centered * v;
        let (lo, hi) = proj.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &p| (l.min(p), h.max(p)));
        if hi - lo < 1e-12 {
            continue;
        }
        for (i, col) in colors.iter_mut().enumerate() {
            col[slot] = (proj[i] - lo) / (hi - lo);
        }
    }
    Ok(colors)
}

/// A polygon mesh with one face per signal row.
#[derive(Clone, Debug)]
pub struct FaceMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<Vec<usize>>,
}

fn nearest(points: &[Vector3<f64>], p: &Vector3<f64>) -> usize {
    (0..points.len()).min_by(|&a, &b| (points[a] - p).norm().total_cmp(&(points[b] - p).norm())).unwrap()
}

/// Orders the corners of a convex face counter-clockwise seen from outside.
fn wind(vertices: &[Vector3<f64>], mut idx: Vec<usize>) -> Vec<usize> {
    let c = idx.iter().map(|&i| vertices[i]).sum::<Vector3<f64>>() / idx.len() as f64;
    let n = c.normalize();
    let a = (vertices[idx[0]] - c).normalize();
    let b = n.cross(&a);
    idx.sort_by(|&i, &j| {
        let ang = |k: usize| {
            let d = vertices[k] - c;
            d.dot(&b).atan2(d.dot(&a))
        };
        ang(i).total_cmp(&ang(j))
    });
    idx
}

const PENTAKIS_APEX: f64 = 1.07;

/// Pentakis dodecahedron whose face `g` contains the direction `g · p₀`.
pub fn pentakis_mesh(group: &FiniteGroup) -> Result<FaceMesh> {
    if group.name() != GroupName::Icosahedral {
        return Err(param_err!("the pentakis mesh is indexed by the icosahedral group"));
    }
    let iv = icosahedron_vertices();
    let fc = icosahedron_face_centers();
    let mut vertices: Vec<Vector3<f64>> = iv.iter().map(|v| v * PENTAKIS_APEX).collect();
    vertices.extend(fc.iter().copied());
    // the two faces sharing the edge v0–v1, which p₀ trisects
    let edge_faces: Vec<usize> = (0..fc.len()).filter(|&f| iv[0].dot(&fc[f]) > 0.7 && iv[1].dot(&fc[f]) > 0.7).collect();
    let base = [vertices[0], fc[edge_faces[0]], fc[edge_faces[1]]];
    let p0 = group_reference_point(GroupName::Icosahedral);
    let mut faces = Vec::with_capacity(group.order());
    for g in group.elements() {
        let idx: Vec<usize> = base.iter().map(|v| nearest(&vertices, &g.apply(v))).collect();
        faces.push(wind(&vertices, idx));
        debug_assert!(g.apply(&p0).dot(&g.apply(&base.iter().sum::<Vector3<f64>>()).normalize()) > 0.99);
    }
    Ok(FaceMesh { vertices, faces })
}

/// Dodecahedron (one face per icosahedron vertex) or icosahedron (one face
/// per icosahedron face), faces in the space's point order.
pub fn hspace_mesh(kind: HSpaceKind) -> Result<FaceMesh> {
    let iv = icosahedron_vertices();
    let fc = icosahedron_face_centers();
    let (centers, vertices, per_face) = match kind {
        HSpaceKind::Vertices12 => (iv, fc, 5),
        HSpaceKind::Faces20 => (fc, iv, 3),
        HSpaceKind::Group => return Err(param_err!("use pentakis_mesh for group signals")),
    };
    let faces = centers
        .iter()
        .map(|c| {
            let mut idx: Vec<usize> = (0..vertices.len()).collect();
            idx.sort_by(|&a, &b| vertices[b].dot(c).total_cmp(&vertices[a].dot(c)));
            idx.truncate(per_face);
            wind(&vertices, idx)
        })
        .collect();
    Ok(FaceMesh { vertices, faces })
}

/// ASCII PLY with per-face RGB.
pub fn ply_string(mesh: &FaceMesh, colors: &[[f64; 3]]) -> Result<String> {
    if colors.len() != mesh.faces.len() {
        return Err(param_err!("{} colors for {} faces", colors.len(), mesh.faces.len()));
    }
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertices.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    let _ = writeln!(s, "element face {}", mesh.faces.len());
    s.push_str("property list uchar int vertex_indices\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n");
    s.push_str("end_header\n");
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:.6} {:.6} {:.6}", v.x, v.y, v.z);
    }
    for (f, c) in mesh.faces.iter().zip(colors) {
        let _ = write!(s, "{}", f.len());
        for i in f {
            let _ = write!(s, " {i}");
        }
        let byte = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
        let _ = writeln!(s, " {} {} {}", byte(c[0]), byte(c[1]), byte(c[2]));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::build_group;

    #[test]
    fn constant_signal_is_grey() {
        let t = Tensor::full(&[60, 8], 2.0);
        assert!(pca_rgb(&t, 0..8).unwrap().iter().all(|c| *c == [0.5; 3]));
    }

    #[test]
    fn basis_channels_are_reproduced() {
        let mut t = Tensor::zeros(&[5, 4]);
        // zero-mean, mutually orthogonal, distinct variances
        let cols = [[3.0, -3.0, 0.0, 0.0, 0.0], [0.0, 0.0, 2.0, -2.0, 0.0], [0.2, 0.2, 0.2, 0.2, -0.8]];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..5 {
                t.data_mut()[i * 4 + j] = col[i];
            }
        }
        let rgb = pca_rgb(&t, 0..4).unwrap();
        for (j, col) in cols.iter().enumerate() {
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
            for i in 0..5 {
                assert!((rgb[i][j] - (col[i] - lo) / (hi - lo)).abs() < 1e-9, "{j} {i}");
            }
        }
    }

    #[test]
    fn meshes_have_expected_faces() {
        let g = build_group(GroupName::Icosahedral).unwrap();
        let m = pentakis_mesh(&g).unwrap();
        assert_eq!(m.faces.len(), 60);
        let mut seen = std::collections::HashSet::new();
        for f in &m.faces {
            let mut k = f.clone();
            k.sort();
            assert!(seen.insert(k));
        }
        assert_eq!(hspace_mesh(HSpaceKind::Vertices12).unwrap().faces.len(), 12);
        assert_eq!(hspace_mesh(HSpaceKind::Faces20).unwrap().faces.len(), 20);
        let ply = ply_string(&m, &vec![[1.0, 0.0, 0.5]; 60]).unwrap();
        assert!(ply.contains("element face 60"));
        assert!(ply.trim_end().ends_with("3 255 0 128") || ply.lines().last().unwrap().ends_with("255 0 128"));
    }
}
