//! Finite subgroups of SO(3) as explicit rotation sets.
//!
//! Every group is stored as an ordered list of rotations together with its
//! Cayley (multiplication) table and inverse table. Index 0 is always the
//! identity. Ordering rules:
//!
//! * `Cyclic(k)`: element `m` is the rotation by `2πm/k` about `+z`, so
//!   composition is addition mod `k`.
//! * `Dihedral(k)`: elements `0..k` are the cyclic part about `+z`; element
//!   `k + m` is the half turn about the in-plane axis at azimuth `πm/k`.
//! * `Tetrahedral`, `Octahedral`, `Icosahedral`: generated by closure and
//!   sorted by (rotation angle ascending, axis z, axis y, axis x descending).
//!
//! The icosahedral group is the symmetry group of the icosahedron with one
//! vertex on `+z` (see [`icosahedron_vertices`]).

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{param_err, Error, Result};

/// Golden ratio.
pub const PHI: f64 = 1.618_033_988_749_895;

const MATCH_TOL: f64 = 1e-6;
const BEST_MATCH_MAX: f64 = 1e-9;
const SECOND_MATCH_MIN: f64 = 0.1;

/// A rotation stored both as a matrix and as a canonical unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    matrix: Matrix3<f64>,
    quat: [f64; 4],
}

impl Rotation {
    pub fn identity() -> Self {
        Self::from_quaternion([1.0, 0.0, 0.0, 0.0])
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let q = UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self::from_unit_quaternion(q)
    }

    /// Builds from a (w, x, y, z) quaternion; it is normalized and canonicalized.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let uq = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        Self::from_unit_quaternion(uq)
    }

    /// Builds from a rotation matrix. The input is assumed orthonormal.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
        Self::from_unit_quaternion(uq)
    }

    fn from_unit_quaternion(uq: UnitQuaternion<f64>) -> Self {
        let q = canonical_quaternion([uq.w, uq.i, uq.j, uq.k]);
        let uq = UnitQuaternion::new_unchecked(Quaternion::new(q[0], q[1], q[2], q[3]));
        Rotation { matrix: *uq.to_rotation_matrix().matrix(), quat: q }
    }

    fn unit_quaternion(&self) -> UnitQuaternion<f64> {
        let q = self.quat;
        UnitQuaternion::new_unchecked(Quaternion::new(q[0], q[1], q[2], q[3]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// Canonical quaternion `(w, x, y, z)` with `w ≥ 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        self.quat
    }

    /// `self · other` (apply `other` first).
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self::from_unit_quaternion(self.unit_quaternion() * other.unit_quaternion())
    }

    pub fn inverse(&self) -> Rotation {
        Self::from_unit_quaternion(self.unit_quaternion().inverse())
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * v
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let [w, x, y, z] = self.quat;
        2.0 * (x * x + y * y + z * z).sqrt().atan2(w.abs())
    }

    /// Unit rotation axis, `None` for the identity. Half turns get the axis
    /// sign fixed by the first nonzero of (z, y, x) being positive.
    pub fn axis(&self) -> Option<Vector3<f64>> {
        let v = Vector3::new(self.quat[1], self.quat[2], self.quat[3]);
        let n = v.norm();
        if n < 1e-12 {
            return None;
        }
        let mut a = v / n;
        if self.quat[0].abs() < 1e-9 {
            let flip = if a.z.abs() > 1e-9 {
                a.z < 0.0
            } else if a.y.abs() > 1e-9 {
                a.y < 0.0
            } else {
                a.x < 0.0
            };
            if flip {
                a = -a;
            }
        }
        Some(a)
    }

    /// Frobenius distance between the matrices.
    pub fn frobenius_distance(&self, other: &Matrix3<f64>) -> f64 {
        (self.matrix - other).norm()
    }

    /// Geodesic angle between two rotations.
    pub fn geodesic_distance(&self, other: &Rotation) -> f64 {
        self.inverse().compose(other).angle()
    }
}

/// `w ≥ 0`; when `w == 0` the first nonzero of (x, y, z) is positive.
pub fn canonical_quaternion(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut q = q.map(|v| if (v / n).abs() > 1e-15 { v / n } else { 0.0 });
    let lead = q.iter().copied().find(|v| v.abs() > 1e-15).unwrap_or(1.0);
    let flip = if q[0].abs() > 1e-15 { q[0] < 0.0 } else { lead < 0.0 };
    if flip {
        q = q.map(|v| -v);
    }
    q
}

/// Which finite rotation group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupName {
    Cyclic(usize),
    Dihedral(usize),
    Tetrahedral,
    Octahedral,
    Icosahedral,
}

impl GroupName {
    pub fn order(&self) -> usize {
        match *self {
            GroupName::Cyclic(k) => k,
            GroupName::Dihedral(k) => 2 * k,
            GroupName::Tetrahedral => 12,
            GroupName::Octahedral => 24,
            GroupName::Icosahedral => 60,
        }
    }
}

impl fmt::Display for GroupName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupName::Cyclic(k) => write!(f, "c{k}"),
            GroupName::Dihedral(k) => write!(f, "d{k}"),
            GroupName::Tetrahedral => write!(f, "tet"),
            GroupName::Octahedral => write!(f, "oct"),
            GroupName::Icosahedral => write!(f, "ico"),
        }
    }
}

impl FromStr for GroupName {
    type Err = Error;

    /// Accepts `ico`, `oct`, `tet`, `cK`, `dK` and the long names.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "ico" | "icosahedral" | "i" => return Ok(GroupName::Icosahedral),
            "oct" | "octahedral" | "o" => return Ok(GroupName::Octahedral),
            "tet" | "tetrahedral" | "t" => return Ok(GroupName::Tetrahedral),
            _ => {}
        }
        let parse_k = |rest: &str| {
            rest.trim_start_matches([':', '_'])
                .parse::<usize>()
                .map_err(|_| param_err!("bad group order in {s:?}"))
        };
        if let Some(rest) = s.strip_prefix("cyclic").or_else(|| s.strip_prefix('c')) {
            return Ok(GroupName::Cyclic(parse_k(rest)?));
        }
        if let Some(rest) = s.strip_prefix("dihedral").or_else(|| s.strip_prefix('d')) {
            return Ok(GroupName::Dihedral(parse_k(rest)?));
        }
        Err(param_err!("unknown group name {s:?}"))
    }
}

/// Result of matching an arbitrary rotation against the group elements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestMatch {
    pub index: usize,
    /// Frobenius residual to the chosen element.
    pub residual: f64,
    /// `residual < tol`.
    pub exact: bool,
}

/// A finite rotation group with its multiplication and inverse tables.
#[derive(Clone, Debug)]
pub struct FiniteGroup {
    name: GroupName,
    elements: Vec<Rotation>,
    cayley: Vec<Vec<usize>>,
    inverse: Vec<usize>,
}

/// Constructs the named group. `k ≥ 1` for cyclic and dihedral groups.
pub fn build_group(name: GroupName) -> Result<FiniteGroup> {
    let z = Vector3::z();
    let elements = match name {
        GroupName::Cyclic(k) | GroupName::Dihedral(k) if k == 0 => {
            return Err(param_err!("{name:?}: k must be at least 1"));
        }
        GroupName::Cyclic(k) => cyclic_elements(k),
        GroupName::Dihedral(k) => {
            let mut els = cyclic_elements(k);
            for m in 0..k {
                let phi = PI * m as f64 / k as f64;
                els.push(Rotation::from_axis_angle(Vector3::new(phi.cos(), phi.sin(), 0.0), PI));
            }
            els
        }
        GroupName::Tetrahedral => canonical_sort(closure_of(&[
            Rotation::from_axis_angle(Vector3::new(1.0, 1.0, 1.0), 2.0 * PI / 3.0),
            Rotation::from_axis_angle(z, PI),
        ])),
        GroupName::Octahedral => canonical_sort(closure_of(&[
            Rotation::from_axis_angle(z, PI / 2.0),
            Rotation::from_axis_angle(Vector3::new(1.0, 1.0, 1.0), 2.0 * PI / 3.0),
        ])),
        GroupName::Icosahedral => {
            let v = icosahedron_vertices_raw();
            // face spanned by the north pole and the first two upper-ring vertices
            let face = v[0] + v[1] + v[2];
            canonical_sort(closure_of(&[
                Rotation::from_axis_angle(z, 2.0 * PI / 5.0),
                Rotation::from_axis_angle(face, 2.0 * PI / 3.0),
            ]))
        }
    };
    if elements.len() != name.order() {
        return Err(Error::Consistency(format!(
            "{name}: closure produced {} elements, expected {}",
            elements.len(),
            name.order()
        )));
    }
    FiniteGroup::from_elements(name, elements)
}

fn cyclic_elements(k: usize) -> Vec<Rotation> {
    (0..k)
        .map(|m| Rotation::from_axis_angle(Vector3::z(), 2.0 * PI * m as f64 / k as f64))
        .collect()
}

fn quat_distance(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let d1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x + y).powi(2)).sum();
    d1.min(d2).sqrt()
}

/// Breadth-first closure of the generators under multiplication.
fn closure_of(generators: &[Rotation]) -> Vec<Rotation> {
    let mut elements = vec![Rotation::identity()];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for g in generators {
            let candidate = elements[i].compose(g);
            let seen = elements
                .iter()
                .any(|e| quat_distance(&e.quat, &candidate.quat) < MATCH_TOL);
            if !seen {
                elements.push(candidate);
                queue.push_back(elements.len() - 1);
            }
            // 60 is the largest order we build; anything past 120 means a bad generator
            assert!(elements.len() <= 120, "closure did not terminate");
        }
    }
    elements
}

fn quantize(x: f64) -> i64 {
    (x * 1e8).round() as i64
}

fn canonical_sort(mut elements: Vec<Rotation>) -> Vec<Rotation> {
    let key = |r: &Rotation| {
        let a = r.axis().unwrap_or_else(Vector3::zeros);
        (quantize(r.angle()), -quantize(a.z), -quantize(a.y), -quantize(a.x))
    };
    elements.sort_by_key(key);
    elements
}

/// The 12 icosahedron vertices with a vertex on `+z`: the poles plus two
/// rings of five at height `±1/√5`, the lower ring offset by 36°.
fn icosahedron_vertices_raw() -> Vec<Vector3<f64>> {
    let h = 1.0 / 5f64.sqrt();
    let r = 2.0 * h;
    let mut v = vec![Vector3::new(0.0, 0.0, 1.0)];
    for m in 0..5 {
        let phi = 2.0 * PI * m as f64 / 5.0;
        v.push(Vector3::new(r * phi.cos(), r * phi.sin(), h));
    }
    for m in 0..5 {
        let phi = 2.0 * PI * m as f64 / 5.0 + PI / 5.0;
        v.push(Vector3::new(r * phi.cos(), r * phi.sin(), -h));
    }
    v.push(Vector3::new(0.0, 0.0, -1.0));
    v
}

/// Sorts unit vectors by (z, y, x) descending, comparing quantized values.
pub fn sort_points_desc(points: &mut [Vector3<f64>]) {
    points.sort_by_key(|p| (-quantize(p.z), -quantize(p.y), -quantize(p.x)));
}

/// Process-wide shared instance of a named group, built on first use.
pub fn shared_group(name: GroupName) -> Result<std::sync::Arc<FiniteGroup>> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<GroupName, Arc<FiniteGroup>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(g) = cache.lock().expect("group cache poisoned").get(&name) {
        return Ok(g.clone());
    }
    let g = Arc::new(build_group(name)?);
    cache.lock().expect("group cache poisoned").insert(name, g.clone());
    Ok(g)
}

/// Unit icosahedron vertices (vertex 0 is `+z`), sorted by (z, y, x) descending.
pub fn icosahedron_vertices() -> Vec<Vector3<f64>> {
    let mut v = icosahedron_vertices_raw();
    sort_points_desc(&mut v);
    v
}

/// The 20 unit face directions of the icosahedron (dodecahedron vertices),
/// sorted by (z, y, x) descending.
pub fn icosahedron_face_centers() -> Vec<Vector3<f64>> {
    let v = icosahedron_vertices();
    let edge = (v[0] - v[1]).norm().min((v[0] - v[2]).norm());
    let adjacent = |a: usize, b: usize| ((v[a] - v[b]).norm() - edge).abs() < 1e-9;
    let mut faces = Vec::new();
    for a in 0..12 {
        for b in a + 1..12 {
            for c in b + 1..12 {
                if adjacent(a, b) && adjacent(b, c) && adjacent(a, c) {
                    faces.push((v[a] + v[b] + v[c]).normalize());
                }
            }
        }
    }
    sort_points_desc(&mut faces);
    faces
}

impl FiniteGroup {
    /// Computes the Cayley and inverse tables for an ordered element list
    /// whose first entry is the identity.
    pub fn from_elements(name: GroupName, elements: Vec<Rotation>) -> Result<Self> {
        let n = elements.len();
        if n == 0 || elements[0].angle() > 1e-9 {
            return Err(Error::Consistency("element 0 must be the identity".into()));
        }
        let mut g = FiniteGroup { name, elements, cayley: vec![vec![0; n]; n], inverse: vec![0; n] };
        for i in 0..n {
            for j in 0..n {
                let prod = g.elements[i].matrix * g.elements[j].matrix;
                let (best, second) = g.two_nearest(&prod);
                if best.1 > BEST_MATCH_MAX || (n > 1 && second < SECOND_MATCH_MIN) {
                    return Err(Error::Consistency(format!(
                        "product {i}·{j} is not cleanly matched (best {:.3e}, second {:.3e})",
                        best.1, second
                    )));
                }
                g.cayley[i][j] = best.0;
            }
        }
        for i in 0..n {
            g.inverse[i] = (0..n).find(|&j| g.cayley[i][j] == 0).ok_or_else(|| {
                Error::Consistency(format!("element {i} has no inverse"))
            })?;
        }
        Ok(g)
    }

    fn two_nearest(&self, m: &Matrix3<f64>) -> ((usize, f64), f64) {
        let mut best = (0, f64::INFINITY);
        let mut second = f64::INFINITY;
        for (i, e) in self.elements.iter().enumerate() {
            let d = e.frobenius_distance(m);
            if d < best.1 {
                second = best.1;
                best = (i, d);
            } else if d < second {
                second = d;
            }
        }
        (best, second)
    }

    pub fn name(&self) -> GroupName {
        self.name
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Rotation] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &Rotation {
        &self.elements[i]
    }

    pub fn cayley(&self) -> &[Vec<usize>] {
        &self.cayley
    }

    pub fn inverse_table(&self) -> &[usize] {
        &self.inverse
    }

    /// Index of `gᵢ·gⱼ`.
    pub fn compose(&self, i: usize, j: usize) -> Result<usize> {
        let n = self.order();
        if i >= n || j >= n {
            return Err(param_err!("element index ({i}, {j}) out of range for order {n}"));
        }
        Ok(self.cayley[i][j])
    }

    /// Unchecked composition for hot loops.
    #[inline]
    pub fn mul(&self, i: usize, j: usize) -> usize {
        self.cayley[i][j]
    }

    #[inline]
    pub fn inv(&self, i: usize) -> usize {
        self.inverse[i]
    }

    /// Closest element in Frobenius norm; `exact` when the residual is below `tol`.
    pub fn nearest_element(&self, r: &Matrix3<f64>, tol: f64) -> NearestMatch {
        let ((index, residual), _) = self.two_nearest(r);
        NearestMatch { index, residual, exact: residual < tol }
    }

    /// The subgroup generated by `support`, as sorted element indices.
    pub fn generated_closure(&self, support: &[usize]) -> Result<Vec<usize>> {
        if support.is_empty() {
            return Err(param_err!("generated_closure needs a non-empty set"));
        }
        if let Some(&bad) = support.iter().find(|&&s| s >= self.order()) {
            return Err(param_err!("element index {bad} out of range"));
        }
        let mut set: BTreeSet<usize> = support.iter().copied().collect();
        set.insert(0);
        let mut queue: VecDeque<usize> = set.iter().copied().collect();
        while let Some(a) = queue.pop_front() {
            for &s in support {
                let p = self.cayley[a][s];
                if set.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        let out: Vec<usize> = set.into_iter().collect();
        assert_eq!(self.order() % out.len(), 0, "subgroup order must divide the group order");
        Ok(out)
    }

    /// Product set `{a·b : a ∈ lhs, b ∈ rhs}`, sorted.
    pub fn product_set(&self, lhs: &[usize], rhs: &[usize]) -> Vec<usize> {
        let set: BTreeSet<usize> =
            lhs.iter().flat_map(|&a| rhs.iter().map(move |&b| self.cayley[a][b])).collect();
        set.into_iter().collect()
    }

    /// Non-identity elements with their rotation angles, sorted by angle
    /// (ties keep index order).
    pub fn smallest_rotations(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> =
            (1..self.order()).map(|i| (i, self.elements[i].angle())).collect();
        out.sort_by_key(|&(i, a)| (quantize(a), i));
        out
    }

    pub fn is_abelian(&self) -> bool {
        let n = self.order();
        (0..n).all(|i| (i + 1..n).all(|j| self.cayley[i][j] == self.cayley[j][i]))
    }

    /// Checks every group axiom and the matrix/quaternion consistency. The
    /// error names the first axiom that fails.
    pub fn verify(&self) -> Result<()> {
        verify_tables(&self.cayley, &self.inverse)?;
        let n = self.order();
        for (i, e) in self.elements.iter().enumerate() {
            let m = e.matrix;
            if (m.transpose() * m - Matrix3::identity()).amax() > 1e-12 {
                return Err(Error::Verification(format!("orthogonality: element {i}")));
            }
            if (m.determinant() - 1.0).abs() > 1e-12 {
                return Err(Error::Verification(format!("determinant: element {i}")));
            }
        }
        for i in 0..n {
            for j in 0..n {
                let prod = self.elements[i].matrix * self.elements[j].matrix;
                let d = self.elements[self.cayley[i][j]].frobenius_distance(&prod);
                if d >= 1e-9 {
                    return Err(Error::Verification(format!(
                        "matrix consistency: M{i}·M{j} differs from M{} by {d:.3e}",
                        self.cayley[i][j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over the name and tables; identifies a group in other files.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.to_string().as_bytes());
        for row in &self.cayley {
            for &v in row {
                h.update((v as u32).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_file(&self) -> GroupFile {
        GroupFile {
            name: self.name.to_string(),
            order: self.order(),
            elements: self.elements.iter().map(|e| e.quat).collect(),
            cayley: self.cayley.clone(),
            inverse: self.inverse.clone(),
        }
    }

    /// Loads a group file as stored; nothing is recomputed, so [`verify`]
    /// checks the file's own tables.
    ///
    /// [`verify`]: FiniteGroup::verify
    pub fn from_file(file: &GroupFile) -> Result<Self> {
        let name: GroupName = file.name.parse()?;
        let n = file.elements.len();
        if file.order != n || file.cayley.len() != n || file.inverse.len() != n {
            return Err(Error::Verification(format!(
                "shape: order {} with {} elements, {} cayley rows, {} inverses",
                file.order,
                n,
                file.cayley.len(),
                file.inverse.len()
            )));
        }
        if file.cayley.iter().any(|r| r.len() != n) {
            return Err(Error::Verification("shape: ragged cayley table".into()));
        }
        let elements = file
            .elements
            .iter()
            .map(|q| {
                let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-12 {
                    Err(Error::Verification(format!("quaternion norm {norm}")))
                } else {
                    Ok(Rotation::from_quaternion(*q))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FiniteGroup { name, elements, cayley: file.cayley.clone(), inverse: file.inverse.clone() })
    }
}

/// Pure table checks: identity row/column, Latin square, inverses, associativity.
pub fn verify_tables(cayley: &[Vec<usize>], inverse: &[usize]) -> Result<()> {
    let n = cayley.len();
    let fail = |what: String| Err(Error::Verification(what));
    if inverse.len() != n || cayley.iter().any(|r| r.len() != n) {
        return fail("shape: tables are not |G|×|G| and |G|".into());
    }
    if cayley.iter().flatten().chain(inverse).any(|&v| v >= n) {
        return fail("range: table entry out of range".into());
    }
    for j in 0..n {
        if cayley[0][j] != j || cayley[j][0] != j {
            return fail(format!("identity: row/column 0 broken at {j}"));
        }
    }
    for i in 0..n {
        let mut row = vec![false; n];
        let mut col = vec![false; n];
        for j in 0..n {
            row[cayley[i][j]] = true;
            col[cayley[j][i]] = true;
        }
        if row.iter().any(|s| !s) {
            return fail(format!("latin square: row {i} is not a permutation"));
        }
        if col.iter().any(|s| !s) {
            return fail(format!("latin square: column {i} is not a permutation"));
        }
    }
    for i in 0..n {
        if cayley[i][inverse[i]] != 0 || cayley[inverse[i]][i] != 0 {
            return fail(format!("inverse: element {i}"));
        }
    }
    for i in 0..n {
        for j in 0..n {
            let ij = cayley[i][j];
            for k in 0..n {
                if cayley[ij][k] != cayley[i][cayley[j][k]] {
                    return fail(format!("associativity: ({i}·{j})·{k}"));
                }
            }
        }
    }
    Ok(())
}

/// JSON form of a group.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GroupFile {
    pub name: String,
    pub order: usize,
    /// Canonical quaternions `(w, x, y, z)`.
    pub elements: Vec<[f64; 4]>,
    pub cayley: Vec<Vec<usize>>,
    pub inverse: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(a: f64) -> f64 {
        a.to_radians()
    }

    #[test]
    fn orders_match_the_classification() {
        for (name, n) in [
            (GroupName::Cyclic(1), 1),
            (GroupName::Cyclic(12), 12),
            (GroupName::Dihedral(6), 12),
            (GroupName::Tetrahedral, 12),
            (GroupName::Octahedral, 24),
            (GroupName::Icosahedral, 60),
        ] {
            let g = build_group(name).unwrap();
            assert_eq!(g.order(), n, "{name}");
            g.verify().unwrap();
        }
    }

    #[test]
    fn trivial_group() {
        let g = build_group(GroupName::Cyclic(1)).unwrap();
        assert_eq!(g.cayley(), &[vec![0]]);
    }

    #[test]
    fn zero_k_is_rejected() {
        assert!(matches!(build_group(GroupName::Cyclic(0)), Err(Error::Parameter(_))));
        assert!(matches!(build_group(GroupName::Dihedral(0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn cyclic_composition_is_addition() {
        let g = build_group(GroupName::Cyclic(12)).unwrap();
        assert_eq!(g.compose(3, 5).unwrap(), 8);
        assert_eq!(g.compose(7, 9).unwrap(), 4);
        assert!(g.compose(12, 0).is_err());
    }

    #[test]
    fn ico_identity_row_and_inverses() {
        let g = build_group(GroupName::Icosahedral).unwrap();
        assert_eq!(g.compose(0, 17).unwrap(), 17);
        for i in 0..60 {
            assert_eq!(g.compose(i, g.inv(i)).unwrap(), 0);
        }
    }

    #[test]
    fn abelian_flags() {
        assert!(build_group(GroupName::Cyclic(12)).unwrap().is_abelian());
        assert!(!build_group(GroupName::Icosahedral).unwrap().is_abelian());
        assert!(!build_group(GroupName::Dihedral(3)).unwrap().is_abelian());
        assert!(build_group(GroupName::Dihedral(1)).unwrap().is_abelian());
    }

    #[test]
    fn smallest_rotation_angles() {
        let ico = build_group(GroupName::Icosahedral).unwrap();
        let s = ico.smallest_rotations();
        assert!(s[..12].iter().all(|&(_, a)| (a - deg(72.0)).abs() < 1e-9));
        assert!(s[12].1 > deg(72.0) + 1e-3);

        let c4 = build_group(GroupName::Cyclic(4)).unwrap();
        let angles: Vec<f64> = c4.smallest_rotations().iter().map(|p| p.1).collect();
        // angles live in [0, π]; 270° is the 90° turn the other way
        assert_eq!(angles.len(), 3);
        assert!((angles[0] - deg(90.0)).abs() < 1e-12 && (angles[1] - deg(90.0)).abs() < 1e-12);
        assert!((angles[2] - deg(180.0)).abs() < 1e-12);

        let oct = build_group(GroupName::Octahedral).unwrap();
        let s = oct.smallest_rotations();
        assert!((s[0].1 - deg(90.0)).abs() < 1e-9);
        assert_eq!(s.iter().filter(|p| (p.1 - deg(90.0)).abs() < 1e-9).count(), 6);
    }

    #[test]
    fn nearest_element_cases() {
        let g = build_group(GroupName::Icosahedral).unwrap();
        let m = g.nearest_element(&Matrix3::identity(), 1e-6);
        assert_eq!((m.index, m.exact), (0, true));
        assert!(m.residual < 1e-15);

        let tiny = Rotation::from_axis_angle(Vector3::new(0.3, -0.2, 0.9), 1e-8);
        let r = g.element(23).compose(&tiny);
        assert_eq!(g.nearest_element(r.matrix(), 1e-6).index, 23);

        // halfway between two elements on the 5-fold polar axis
        let half = Rotation::from_axis_angle(Vector3::z(), deg(36.0));
        let m = g.nearest_element(half.matrix(), 1e-6);
        assert!(!m.exact);
        let d = g.element(m.index).geodesic_distance(&half);
        assert!((d - deg(36.0)).abs() < 1e-9, "geodesic {d}");
    }

    #[test]
    fn closure_examples() {
        let g = build_group(GroupName::Icosahedral).unwrap();
        assert_eq!(g.generated_closure(&[0]).unwrap(), vec![0]);
        let s = g.smallest_rotations();
        let a = s[0].0;
        assert_eq!(g.generated_closure(&[0, a]).unwrap().len(), 5);
        let axis_a = g.element(a).axis().unwrap();
        let b = s[..12]
            .iter()
            .map(|p| p.0)
            .find(|&b| g.element(b).axis().unwrap().cross(&axis_a).norm() > 1e-6)
            .unwrap();
        assert_eq!(g.generated_closure(&[0, a, b]).unwrap().len(), 60);
    }

    #[test]
    fn quaternions_are_canonical() {
        let g = build_group(GroupName::Icosahedral).unwrap();
        for e in g.elements() {
            let q = e.quaternion();
            assert!(q[0] >= 0.0);
            let n: f64 = q.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn file_roundtrip_and_corruption() {
        let g = build_group(GroupName::Icosahedral).unwrap();
        let json = serde_json::to_string(&g.to_file()).unwrap();
        let file: GroupFile = serde_json::from_str(&json).unwrap();
        let back = FiniteGroup::from_file(&file).unwrap();
        back.verify().unwrap();
        assert_eq!(back.hash(), g.hash());

        let mut bad = file.clone();
        bad.cayley[3].swap(4, 5);
        let err = FiniteGroup::from_file(&bad).unwrap().verify().unwrap_err().to_string();
        assert!(err.contains("latin square") || err.contains("associativity"), "{err}");
    }

    #[test]
    fn group_names_parse() {
        assert_eq!("ico".parse::<GroupName>().unwrap(), GroupName::Icosahedral);
        assert_eq!("c12".parse::<GroupName>().unwrap(), GroupName::Cyclic(12));
        assert_eq!("d6".parse::<GroupName>().unwrap(), GroupName::Dihedral(6));
        assert!("x".parse::<GroupName>().is_err());
    }
}
