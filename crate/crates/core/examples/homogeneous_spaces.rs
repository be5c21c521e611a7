//! Icosahedron vertices and faces as homogeneous spaces of the icosahedral
//! group, with their stabilizers.

use finrot::group::GroupName;
use finrot::hspace::{shared_hspace, HSpaceKind};

fn main() -> finrot::Result<()> {
    for kind in [HSpaceKind::Vertices12, HSpaceKind::Faces20, HSpaceKind::Group] {
        let h = shared_hspace(GroupName::Icosahedral, kind)?;
        h.verify()?;
        let stab = h.stabilizer(h.eta())?;
        println!("{kind}: {} points, reference point {}, stabilizer {:?}", h.len(), h.eta(), stab);
        assert_eq!(h.len() * stab.len(), h.group().order());
    }

    let v = shared_hspace(GroupName::Icosahedral, HSpaceKind::Vertices12)?;
    let (a, _) = v.group().smallest_rotations()[0];
    let orbit: Vec<usize> = (0..v.len()).map(|x| v.act_unchecked(a, x)).collect();
    println!("a 72° rotation permutes the vertices as {orbit:?}");
    Ok(())
}
