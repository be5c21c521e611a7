//! Camera configurations on the viewing sphere and their group structure.
//!
//! Grouped configurations are orbits of one reference pose, so rotating the
//! scene by a group element permutes the poses exactly. Each pose is assigned
//! the group element that carries the reference pose onto it.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::group::{icosahedron_face_centers, icosahedron_vertices, shared_group, FiniteGroup, GroupName, Rotation};
use crate::hspace::{group_reference_point, shared_hspace, HSpace, HSpaceKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    pub position: Vector3<f64>,
    /// Unit viewing direction, pointing at the origin.
    pub optical_axis: Vector3<f64>,
    /// Unit image-vertical direction, orthogonal to the optical axis.
    pub up: Vector3<f64>,
}

impl CameraPose {
    /// Camera at `radius · direction` looking at the origin. `up_hint` is
    /// projected onto the image plane.
    pub fn looking_at_origin(direction: &Vector3<f64>, radius: f64, up_hint: &Vector3<f64>) -> Result<Self> {
        let d = direction.normalize();
        let f = -d;
        let up = up_hint - f * up_hint.dot(&f);
        if up.norm() < 1e-9 {
            return Err(param_err!("up hint is parallel to the optical axis"));
        }
        Ok(CameraPose { position: d * radius, optical_axis: f, up: up.normalize() })
    }

    pub fn right(&self) -> Vector3<f64> {
        self.optical_axis.cross(&self.up)
    }

    /// Camera-to-world rotation with columns (right, up, −optical_axis).
    pub fn frame(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.right(), self.up, -self.optical_axis])
    }

    /// The pose moved rigidly with the scene by `r` about the origin.
    pub fn rotated(&self, r: &Rotation) -> CameraPose {
        CameraPose { position: r.apply(&self.position), optical_axis: r.apply(&self.optical_axis), up: r.apply(&self.up) }
    }

    /// Validates unit lengths, orthogonality and `position = −radius · axis`.
    pub fn check(&self, radius: f64) -> Result<()> {
        let err = [
            (self.optical_axis.norm() - 1.0).abs(),
            (self.up.norm() - 1.0).abs(),
            self.optical_axis.dot(&self.up).abs(),
            (self.position + self.optical_axis * radius).norm() / radius,
        ];
        if err.iter().any(|e| !(*e < 1e-10)) {
            return Err(Error::Consistency(format!("malformed camera pose (deviations {err:?})")));
        }
        Ok(())
    }

    fn distance(&self, other: &CameraPose, radius: f64) -> f64 {
        (self.position - other.position).norm() / radius + (self.up - other.up).norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConfigKind {
    /// 12 icosahedron vertices × 5 in-plane rotations.
    V12x5,
    /// 20 face centers × 3 in-plane rotations.
    V20x3,
    /// 60 truncated-icosahedron vertices, one view each.
    V60x1,
    /// One north-up view per icosahedron vertex.
    Aligned12,
    /// One north-up view per icosahedron face.
    Aligned20,
    /// `k` north-up views on a 30° elevation ring, acted on by `C_k`.
    CyclicPanorama(usize),
}

impl ConfigKind {
    pub fn is_grouped(&self) -> bool {
        !matches!(self, ConfigKind::Aligned12 | ConfigKind::Aligned20)
    }

    pub fn group_name(&self) -> GroupName {
        match self {
            ConfigKind::CyclicPanorama(k) => GroupName::Cyclic(*k),
            _ => GroupName::Icosahedral,
        }
    }

    pub fn view_count(&self) -> usize {
        match self {
            ConfigKind::Aligned12 => 12,
            ConfigKind::Aligned20 => 20,
            ConfigKind::CyclicPanorama(k) => *k,
            _ => 60,
        }
    }
}

impl fmt::Display for ConfigKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigKind::V12x5 => f.write_str("12x5"),
            ConfigKind::V20x3 => f.write_str("20x3"),
            ConfigKind::V60x1 => f.write_str("60x1"),
            ConfigKind::Aligned12 => f.write_str("aligned12"),
            ConfigKind::Aligned20 => f.write_str("aligned20"),
            ConfigKind::CyclicPanorama(k) => write!(f, "panorama{k}"),
        }
    }
}

impl FromStr for ConfigKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        Ok(match s.trim_start_matches('v') {
            "12x5" => ConfigKind::V12x5,
            "20x3" => ConfigKind::V20x3,
            "60x1" => ConfigKind::V60x1,
            "aligned12" => ConfigKind::Aligned12,
            "aligned20" => ConfigKind::Aligned20,
            other => match other.strip_prefix("panorama").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 => ConfigKind::CyclicPanorama(k),
                _ => return Err(param_err!("unknown view configuration {s:?}")),
            },
        })
    }
}

/// What the assembled signal lives on.
#[derive(Clone, Debug)]
pub enum ViewSpace {
    Group(Arc<FiniteGroup>),
    HSpace(Arc<HSpace>),
}

impl ViewSpace {
    pub fn group(&self) -> &Arc<FiniteGroup> {
        match self {
            ViewSpace::Group(g) => g,
            ViewSpace::HSpace(h) => h.group(),
        }
    }

    /// Number of signal rows.
    pub fn len(&self) -> usize {
        match self {
            ViewSpace::Group(g) => g.order(),
            ViewSpace::HSpace(h) => h.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct CameraConfig {
    kind: ConfigKind,
    radius: f64,
    poses: Vec<CameraPose>,
    assignment: Vec<usize>,
    space: ViewSpace,
}

const PANORAMA_ELEVATION_DEG: f64 = 30.0;

fn north_up_hint(direction: &Vector3<f64>) -> Vector3<f64> {
    // at the poles the meridian is undefined; fall back to +x
    if direction.normalize().z.abs() > 1.0 - 1e-9 {
        Vector3::x()
    } else {
        Vector3::z()
    }
}

fn viewpoint_key(p: &CameraPose) -> (i64, i64, i64) {
    let q = |v: f64| (v * 1e8).round() as i64;
    let d = p.position.normalize();
    (-q(d.z), -q(d.y), -q(d.x))
}

/// Generates a configuration at the given camera distance.
pub fn gen_config(kind: ConfigKind, radius: f64) -> Result<CameraConfig> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(param_err!("radius must be positive, got {radius}"));
    }
    let group = shared_group(kind.group_name())?;
    let (poses, space) = match kind {
        ConfigKind::Aligned12 | ConfigKind::Aligned20 => {
            let hkind = if kind == ConfigKind::Aligned12 { HSpaceKind::Vertices12 } else { HSpaceKind::Faces20 };
            let hs = shared_hspace(GroupName::Icosahedral, hkind)?;
            let poses = hs
                .points()
                .iter()
                .map(|p| CameraPose::looking_at_origin(p, radius, &north_up_hint(p)))
                .collect::<Result<Vec<_>>>()?;
            (poses, ViewSpace::HSpace(hs))
        }
        _ => {
            let reference = reference_pose(kind, radius)?;
            let orbit: Vec<CameraPose> = group.elements().iter().map(|g| reference.rotated(g)).collect();
            (order_orbit(kind, &group, orbit, radius)?, ViewSpace::Group(group.clone()))
        }
    };
    let mut cfg = CameraConfig { kind, radius, poses, assignment: Vec::new(), space };
    cfg.assignment = cfg.compute_assignment()?;
    Ok(cfg)
}

fn reference_pose(kind: ConfigKind, radius: f64) -> Result<CameraPose> {
    let dir = match kind {
        ConfigKind::V12x5 => icosahedron_vertices()[0],
        ConfigKind::V20x3 => icosahedron_face_centers()[0],
        ConfigKind::V60x1 => group_reference_point(GroupName::Icosahedral),
        ConfigKind::CyclicPanorama(_) => {
            let e = PANORAMA_ELEVATION_DEG.to_radians();
            Vector3::new(e.cos(), 0.0, e.sin())
        }
        _ => unreachable!("aligned configurations have no reference pose"),
    };
    CameraPose::looking_at_origin(&dir, radius, &north_up_hint(&dir))
}

/// Sorts by viewpoint; poses sharing a viewpoint are chained by the in-plane
/// stabilizer rotation, starting from the lowest group element.
fn order_orbit(kind: ConfigKind, group: &FiniteGroup, orbit: Vec<CameraPose>, radius: f64) -> Result<Vec<CameraPose>> {
    let mut idx: Vec<usize> = (0..orbit.len()).collect();
    idx.sort_by_key(|&i| (viewpoint_key(&orbit[i]), i));
    let per_view = match kind {
        ConfigKind::V12x5 => 5,
        ConfigKind::V20x3 => 3,
        _ => 1,
    };
    let mut out = Vec::with_capacity(orbit.len());
    for family in idx.chunks(per_view) {
        let first = orbit[family[0]];
        let step = Rotation::from_axis_angle(first.position, 2.0 * std::f64::consts::PI / per_view as f64);
        let mut pose = first;
        for _ in 0..per_view {
            let found = family.iter().find(|&&j| orbit[j].distance(&pose, radius) < 1e-9);
            let Some(&j) = found else {
                return Err(Error::Consistency(format!("{kind} family is not closed under in-plane rotation")));
            };
            out.push(orbit[j]);
            pose = pose.rotated(&step);
        }
    }
    debug_assert_eq!(out.len(), group.order());
    Ok(out)
}

impl CameraConfig {
    pub fn kind(&self) -> ConfigKind {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn poses(&self) -> &[CameraPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// `assignment[i]` is the signal row (group element or space point) of pose `i`.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn space(&self) -> &ViewSpace {
        &self.space
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        self.space.group()
    }

    fn compute_assignment(&self) -> Result<Vec<usize>> {
        for p in &self.poses {
            p.check(self.radius)?;
        }
        let assignment: Vec<usize> = match &self.space {
            ViewSpace::Group(g) => {
                let reference = reference_pose(self.kind, self.radius)?;
                let ref_inv = reference.frame().transpose();
                self.poses
                    .iter()
                    .map(|p| {
                        let m = g.nearest_element(&(p.frame() * ref_inv), 1e-6);
                        if m.exact {
                            Ok(m.index)
                        } else {
                            Err(Error::Consistency(format!("pose is not in the orbit (residual {:.2e})", m.residual)))
                        }
                    })
                    .collect::<Result<_>>()?
            }
            ViewSpace::HSpace(h) => self
                .poses
                .iter()
                .map(|p| {
                    let (i, d) = h.nearest_point(&p.position.normalize());
                    if d < 1e-6 {
                        Ok(i)
                    } else {
                        Err(Error::Consistency(format!("viewpoint matches no space point ({d:.2e})")))
                    }
                })
                .collect::<Result<_>>()?,
        };
        let mut seen = vec![false; self.space.len()];
        for &a in &assignment {
            if std::mem::replace(&mut seen[a], true) {
                return Err(Error::Consistency(format!("assignment is not a bijection (row {a} repeated)")));
            }
        }
        if assignment.len() != self.space.len() {
            return Err(Error::Consistency("assignment does not cover the space".into()));
        }
        Ok(assignment)
    }

    /// Pose index assigned to each signal row.
    pub fn inverse_assignment(&self) -> Vec<usize> {
        let mut inv = vec![0; self.assignment.len()];
        for (i, &a) in self.assignment.iter().enumerate() {
            inv[a] = i;
        }
        inv
    }

    /// `π` with `pose[π(i)] = k · pose[i]`, found by geometric matching and
    /// checked against `assignment⁻¹(k · assignment(i))`.
    pub fn permutation_under_rotation(&self, k: usize) -> Result<Vec<usize>> {
        let ViewSpace::Group(g) = &self.space else {
            return Err(param_err!("{} is not a grouped configuration", self.kind));
        };
        if k >= g.order() {
            return Err(param_err!("element {k} out of range for {}", g.name()));
        }
        let rk = g.element(k);
        let inv = self.inverse_assignment();
        let mut perm = Vec::with_capacity(self.len());
        for (i, p) in self.poses.iter().enumerate() {
            let moved = p.rotated(rk);
            let (j, d) = self
                .poses
                .iter()
                .enumerate()
                .map(|(j, q)| (j, q.distance(&moved, self.radius)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            if d > 1e-6 {
                return Err(Error::Consistency(format!("rotated pose {i} matches no pose (residual {d:.2e})")));
            }
            let predicted = inv[g.mul(k, self.assignment[i])];
            if predicted != j {
                return Err(Error::Consistency(format!(
                    "pose {i}: geometry gives {j}, Cayley table predicts {predicted}"
                )));
            }
            perm.push(j);
        }
        Ok(perm)
    }

    /// Checks every group element's permutation.
    pub fn check_equivariance(&self) -> Result<()> {
        for k in 0..self.group().order() {
            self.permutation_under_rotation(k)?;
        }
        Ok(())
    }

    /// Families of poses sharing a viewpoint, each ordered by in-plane rotation.
    pub fn in_plane_families(&self) -> Result<Vec<(Vector3<f64>, Vec<usize>)>> {
        let per_view = match self.kind {
            ConfigKind::V12x5 => 5,
            ConfigKind::V20x3 => 3,
            _ => return Err(param_err!("{} has no in-plane families", self.kind)),
        };
        Ok((0..self.len() / per_view)
            .map(|f| {
                let members: Vec<usize> = (f * per_view..(f + 1) * per_view).collect();
                (self.poses[members[0]].position.normalize(), members)
            })
            .collect())
    }

    pub fn to_file(&self) -> ConfigFile {
        ConfigFile {
            kind: self.kind.to_string(),
            radius: self.radius,
            poses: self
                .poses
                .iter()
                .map(|p| PoseFile { position: p.position.into(), optical_axis: p.optical_axis.into(), up: p.up.into() })
                .collect(),
            assignment: self.assignment.clone(),
            group_hash: self.group().hash(),
        }
    }

    /// Loads a configuration file, checking it against the generator.
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let kind: ConfigKind = file.kind.parse()?;
        let expected = gen_config(kind, file.radius)?;
        if file.group_hash != expected.group().hash() {
            return Err(Error::Verification("group hash does not match the group this build generates".into()));
        }
        if file.poses.len() != expected.len() {
            return Err(Error::Verification(format!("{} poses, {kind} has {}", file.poses.len(), expected.len())));
        }
        for (i, (p, q)) in file.poses.iter().zip(&expected.poses).enumerate() {
            let pose = CameraPose {
                position: p.position.into(),
                optical_axis: p.optical_axis.into(),
                up: p.up.into(),
            };
            pose.check(file.radius).map_err(|e| Error::Verification(format!("pose {i}: {e}")))?;
            if pose.distance(q, file.radius) > 1e-9 {
                return Err(Error::Verification(format!("pose {i} differs from the generated configuration")));
            }
        }
        if file.assignment != expected.assignment {
            return Err(Error::Verification("assignment differs from the generated configuration".into()));
        }
        Ok(expected)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PoseFile {
    pub position: [f64; 3],
    pub optical_axis: [f64; 3],
    pub up: [f64; 3],
}

/// JSON form of a camera configuration.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConfigFile {
    pub kind: String,
    pub radius: f64,
    pub poses: Vec<PoseFile>,
    pub assignment: Vec<usize>,
    pub group_hash: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn distinct_axes(cfg: &CameraConfig) -> usize {
        let mut axes: Vec<Vector3<f64>> = Vec::new();
        for p in cfg.poses() {
            if !axes.iter().any(|a| a.dot(&p.optical_axis) > 1.0 - 1e-12) {
                axes.push(p.optical_axis);
            }
        }
        axes.len()
    }

    #[test]
    fn view_counts() {
        let c = gen_config(ConfigKind::V60x1, 2.0).unwrap();
        assert_eq!((c.len(), distinct_axes(&c)), (60, 60));
        let c = gen_config(ConfigKind::V12x5, 2.0).unwrap();
        assert_eq!((c.len(), distinct_axes(&c)), (60, 12));
        let c = gen_config(ConfigKind::V20x3, 2.0).unwrap();
        assert_eq!((c.len(), distinct_axes(&c)), (60, 20));
        assert_eq!(gen_config(ConfigKind::Aligned20, 2.0).unwrap().len(), 20);
        assert_eq!(gen_config(ConfigKind::Aligned12, 2.0).unwrap().len(), 12);
        assert_eq!(gen_config(ConfigKind::CyclicPanorama(12), 2.0).unwrap().len(), 12);
    }

    #[test]
    fn identity_permutation() {
        let c = gen_config(ConfigKind::V12x5, 1.5).unwrap();
        assert_eq!(c.permutation_under_rotation(0).unwrap(), (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn permutations_compose() {
        let c = gen_config(ConfigKind::V20x3, 1.5).unwrap();
        let g = c.group().clone();
        let (a, b) = (7, 33);
        let pa = c.permutation_under_rotation(a).unwrap();
        let pb = c.permutation_under_rotation(b).unwrap();
        let pab = c.permutation_under_rotation(g.mul(a, b)).unwrap();
        for i in 0..60 {
            assert_eq!(pa[pb[i]], pab[i]);
        }
    }

    #[test]
    fn families_share_axes_and_step_in_plane() {
        for (kind, n, per) in [(ConfigKind::V12x5, 12, 5), (ConfigKind::V20x3, 20, 3)] {
            let c = gen_config(kind, 1.0).unwrap();
            let fams = c.in_plane_families().unwrap();
            assert_eq!(fams.len(), n);
            let step = 2.0 * std::f64::consts::PI / per as f64;
            for (_, members) in fams {
                assert_eq!(members.len(), per);
                for w in members.windows(2) {
                    let (p, q) = (c.poses()[w[0]], c.poses()[w[1]]);
                    assert!(p.optical_axis.dot(&q.optical_axis) > 1.0 - 1e-12);
                    assert!((p.up.dot(&q.up) - step.cos()).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn aligned_ups_point_north() {
        let c = gen_config(ConfigKind::Aligned20, 1.0).unwrap();
        for p in c.poses() {
            assert!(p.up.z > 0.0);
            assert!(p.up.cross(&Vector3::z()).dot(&p.optical_axis).abs() < 1e-9);
        }
        assert!(c.permutation_under_rotation(1).is_err());
    }

    #[test]
    fn file_roundtrip_and_tamper() {
        let c = gen_config(ConfigKind::V60x1, 3.0).unwrap();
        let f = c.to_file();
        let back = CameraConfig::from_file(&f).unwrap();
        assert_eq!(back.assignment(), c.assignment());
        let mut bad = f.clone();
        bad.assignment.swap(0, 1);
        assert!(matches!(CameraConfig::from_file(&bad), Err(Error::Verification(_))));
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in [
            ConfigKind::V12x5,
            ConfigKind::V20x3,
            ConfigKind::V60x1,
            ConfigKind::Aligned12,
            ConfigKind::Aligned20,
            ConfigKind::CyclicPanorama(8),
        ] {
            assert_eq!(k.to_string().parse::<ConfigKind>().unwrap(), k);
        }
        assert!("7x7".parse::<ConfigKind>().is_err());
    }
}
