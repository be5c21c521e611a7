//! Homogeneous spaces of a finite group with explicit action tables.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::group::{icosahedron_face_centers, icosahedron_vertices, FiniteGroup, GroupName};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HSpaceKind {
    /// The 12 icosahedron vertices (equivalently, dodecahedron faces).
    Vertices12,
    /// The 20 icosahedron faces (equivalently, dodecahedron vertices).
    Faces20,
    /// The group acting on itself by left multiplication.
    Group,
}

impl fmt::Display for HSpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HSpaceKind::Vertices12 => "v12",
            HSpaceKind::Faces20 => "f20",
            HSpaceKind::Group => "group",
        })
    }
}

impl FromStr for HSpaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v12" | "vertices12" => Ok(HSpaceKind::Vertices12),
            "f20" | "faces20" => Ok(HSpaceKind::Faces20),
            "group" | "g" => Ok(HSpaceKind::Group),
            other => Err(param_err!("unknown homogeneous space kind {other:?}")),
        }
    }
}

/// A homogeneous space `X` of `G`.
///
/// `action[g][x]` is the index of `g·x`; the canonical point η is index 0.
#[derive(Clone, Debug)]
pub struct HSpace {
    group: Arc<FiniteGroup>,
    kind: HSpaceKind,
    points: Vec<Vector3<f64>>,
    action: Vec<Vec<usize>>,
}

/// Reference point whose orbit labels the elements of `G` geometrically.
///
/// For the icosahedral group it is the edge-trisection point of the
/// icosahedron next to the north pole, so the orbit is the 60 vertices of the
/// truncated icosahedron. Other groups use a generic direction with trivial
/// stabilizer.
pub fn group_reference_point(name: GroupName) -> Vector3<f64> {
    match name {
        GroupName::Icosahedral => {
            let v = icosahedron_vertices();
            // v[1] is an upper-ring neighbour of the pole
            ((2.0 * v[0] + v[1]) / 3.0).normalize()
        }
        _ => Vector3::new(0.31, 0.17, 0.93).normalize(),
    }
}

impl HSpace {
    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    pub fn kind(&self) -> HSpaceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn action_table(&self) -> &[Vec<usize>] {
        &self.action
    }

    /// Canonical element η.
    pub fn eta(&self) -> usize {
        0
    }

    pub fn stabilizer_order(&self) -> usize {
        self.group.order() / self.points.len()
    }

    /// Index of `g·x`.
    pub fn act(&self, g: usize, x: usize) -> Result<usize> {
        if g >= self.group.order() || x >= self.len() {
            return Err(param_err!("act({g}, {x}) out of range"));
        }
        Ok(self.action[g][x])
    }

    #[inline]
    pub fn act_unchecked(&self, g: usize, x: usize) -> usize {
        self.action[g][x]
    }

    /// `{g : g·x = x}`, sorted.
    pub fn stabilizer(&self, x: usize) -> Result<Vec<usize>> {
        if x >= self.len() {
            return Err(param_err!("point {x} out of range"));
        }
        Ok((0..self.group.order()).filter(|&g| self.action[g][x] == x).collect())
    }

    /// Index of the point closest to `p`.
    pub fn nearest_point(&self, p: &Vector3<f64>) -> (usize, f64) {
        self.points
            .iter()
            .enumerate()
            .map(|(i, q)| (i, (q - p).norm()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }

    /// Checks identity, homomorphism, transitivity, orbit-stabilizer and the
    /// geometric consistency of the table.
    pub fn verify(&self) -> Result<()> {
        let g = &self.group;
        let (ng, nx) = (g.order(), self.len());
        let fail = |s: String| Err(Error::Verification(s));
        if self.action.len() != ng || self.action.iter().any(|r| r.len() != nx) {
            return fail("shape: action table is not |G|×|X|".into());
        }
        if (0..nx).any(|x| self.action[0][x] != x) {
            return fail("identity: identity does not fix every point".into());
        }
        for i in 0..ng {
            for j in 0..ng {
                for x in 0..nx {
                    if self.action[g.mul(i, j)][x] != self.action[i][self.action[j][x]] {
                        return fail(format!("homomorphism: ({i}·{j})·{x}"));
                    }
                }
            }
        }
        for x in 0..nx {
            let mut hit = vec![false; nx];
            for gi in 0..ng {
                hit[self.action[gi][x]] = true;
            }
            if hit.iter().any(|h| !h) {
                return fail(format!("transitivity: orbit of {x} is not all of X"));
            }
            let stab = (0..ng).filter(|&gi| self.action[gi][x] == x).count();
            if stab * nx != ng {
                return fail(format!("orbit-stabilizer: |Stab({x})| = {stab}"));
            }
        }
        for gi in 0..ng {
            for x in 0..nx {
                let moved = g.element(gi).apply(&self.points[x]);
                let d = (moved - self.points[self.action[gi][x]]).norm();
                if d >= 1e-9 {
                    return fail(format!("geometry: g{gi}·p{x} is {d:.3e} from its table entry"));
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> HSpaceFile {
        HSpaceFile {
            kind: self.kind.to_string(),
            group: self.group.name().to_string(),
            group_hash: self.group.hash(),
            points: self.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            action: self.action.clone(),
            stabilizer_order: self.stabilizer_order(),
        }
    }

    /// Loads a stored space against `group`; the stored table is kept as-is.
    pub fn from_file(file: &HSpaceFile, group: Arc<FiniteGroup>) -> Result<Self> {
        if file.group_hash != group.hash() {
            return Err(Error::Verification("group hash does not match".into()));
        }
        let hs = HSpace {
            group,
            kind: file.kind.parse()?,
            points: file.points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect(),
            action: file.action.clone(),
        };
        if hs.stabilizer_order() * hs.len() != hs.group.order()
            || hs.stabilizer_order() != file.stabilizer_order
        {
            return Err(Error::Verification("stabilizer order inconsistent".into()));
        }
        Ok(hs)
    }
}

/// Process-wide shared space over the shared group instance.
pub fn shared_hspace(name: GroupName, kind: HSpaceKind) -> Result<Arc<HSpace>> {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<(GroupName, HSpaceKind), Arc<HSpace>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(h) = cache.lock().expect("hspace cache poisoned").get(&(name, kind)) {
        return Ok(h.clone());
    }
    let h = Arc::new(build_hspace(crate::group::shared_group(name)?, kind)?);
    cache.lock().expect("hspace cache poisoned").insert((name, kind), h.clone());
    Ok(h)
}

/// Builds the space and its action table by matching rotated points.
pub fn build_hspace(group: Arc<FiniteGroup>, kind: HSpaceKind) -> Result<HSpace> {
    let points = match kind {
        HSpaceKind::Vertices12 | HSpaceKind::Faces20 => {
            if group.name() != GroupName::Icosahedral {
                return Err(param_err!("{kind} is only defined for the icosahedral group"));
            }
            if kind == HSpaceKind::Vertices12 {
                icosahedron_vertices()
            } else {
                icosahedron_face_centers()
            }
        }
        HSpaceKind::Group => {
            let p0 = group_reference_point(group.name());
            group.elements().iter().map(|e| e.apply(&p0)).collect()
        }
    };
    let action = match kind {
        HSpaceKind::Group => group.cayley().to_vec(),
        _ => {
            let mut table = vec![vec![0; points.len()]; group.order()];
            for (gi, row) in table.iter_mut().enumerate() {
                for (x, slot) in row.iter_mut().enumerate() {
                    let moved = group.element(gi).apply(&points[x]);
                    let (best, d) = points
                        .iter()
                        .enumerate()
                        .map(|(i, q)| (i, (q - moved).norm()))
                        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                    if d > 1e-9 {
                        return Err(Error::Consistency(format!("g{gi}·p{x} matches no point ({d:.3e})")));
                    }
                    *slot = best;
                }
            }
            table
        }
    };
    let hs = HSpace { group, kind, points, action };
    if hs.group.order() % hs.len() != 0 {
        return Err(Error::Consistency("|X| does not divide |G|".into()));
    }
    Ok(hs)
}

/// JSON form of a homogeneous space; refers to its group by name and hash.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HSpaceFile {
    pub kind: String,
    pub group: String,
    pub group_hash: String,
    pub points: Vec<[f64; 3]>,
    pub action: Vec<Vec<usize>>,
    pub stabilizer_order: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::build_group;

    fn ico() -> Arc<FiniteGroup> {
        Arc::new(build_group(GroupName::Icosahedral).unwrap())
    }

    #[test]
    fn sizes_and_stabilizers() {
        let g = ico();
        let h12 = build_hspace(g.clone(), HSpaceKind::Vertices12).unwrap();
        assert_eq!((h12.len(), h12.stabilizer_order()), (12, 5));
        assert!((0..12).all(|x| h12.stabilizer(x).unwrap().len() == 5));
        h12.verify().unwrap();

        let h20 = build_hspace(g.clone(), HSpaceKind::Faces20).unwrap();
        assert_eq!(h20.len(), 20);
        // brute-force fixed-point count per point
        for x in 0..20 {
            let fixed = (0..60)
                .filter(|&gi| (g.element(gi).apply(&h20.points()[x]) - h20.points()[x]).norm() < 1e-9)
                .count();
            assert_eq!(fixed, 3);
        }
        h20.verify().unwrap();

        let hg = build_hspace(g.clone(), HSpaceKind::Group).unwrap();
        assert_eq!((hg.len(), hg.stabilizer_order()), (60, 1));
        assert_eq!(hg.action_table(), g.cayley());
        assert!((0..60).all(|x| hg.stabilizer(x).unwrap() == vec![0]));
        hg.verify().unwrap();
    }

    #[test]
    fn stabilizers_are_subgroups() {
        let g = ico();
        for kind in [HSpaceKind::Vertices12, HSpaceKind::Faces20] {
            let h = build_hspace(g.clone(), kind).unwrap();
            for x in 0..h.len() {
                let s = h.stabilizer(x).unwrap();
                assert_eq!(g.generated_closure(&s).unwrap(), s);
            }
        }
    }

    #[test]
    fn act_examples() {
        let g = ico();
        let h = build_hspace(g.clone(), HSpaceKind::Vertices12).unwrap();
        assert_eq!(h.act(0, 7).unwrap(), 7);
        for gi in 0..60 {
            for x in 0..12 {
                assert_eq!(h.act(gi, h.act(g.inv(gi), x).unwrap()).unwrap(), x);
            }
        }
        // a 72° rotation fixes the vertex on its axis
        let (r, _) = g.smallest_rotations()[0];
        let axis = g.element(r).axis().unwrap();
        let (vx, d) = h.nearest_point(&axis);
        let (vx, _) = if d < 1e-9 { (vx, d) } else { h.nearest_point(&-axis) };
        assert_eq!(h.act(r, vx).unwrap(), vx);
        assert!(h.act(60, 0).is_err());
    }

    #[test]
    fn faces_are_dual_to_vertices() {
        let g = ico();
        let v = build_hspace(g.clone(), HSpaceKind::Vertices12).unwrap();
        let f = build_hspace(g, HSpaceKind::Faces20).unwrap();
        assert_eq!(v.points()[0], Vector3::z());
        for p in f.points() {
            let mut d: Vec<f64> = v.points().iter().map(|q| (q - p).norm()).collect();
            d.sort_by(f64::total_cmp);
            assert!((d[0] - d[2]).abs() < 1e-9 && d[3] - d[2] > 1e-3);
        }
    }

    #[test]
    fn non_icosahedral_quotients_are_rejected() {
        let c = Arc::new(build_group(GroupName::Cyclic(5)).unwrap());
        assert!(build_hspace(c.clone(), HSpaceKind::Vertices12).is_err());
        build_hspace(c, HSpaceKind::Group).unwrap().verify().unwrap();
    }
}
