//! Builds the icosahedral group, checks its axioms and prints the structure
//! the network relies on.

use finrot::group::{shared_group, GroupName};

fn main() -> finrot::Result<()> {
    let g = shared_group(GroupName::Icosahedral)?;
    g.verify()?;
    println!("{} elements, abelian: {}, table hash {}", g.order(), g.is_abelian(), &g.hash()[..16]);

    let mut by_angle = std::collections::BTreeMap::<i64, usize>::new();
    for e in g.elements() {
        *by_angle.entry(e.angle().to_degrees().round() as i64).or_default() += 1;
    }
    for (deg, count) in by_angle {
        println!("  {count:>2} rotations by {deg:>3}°");
    }

    let (a, _) = g.smallest_rotations()[0];
    let cyclic = g.generated_closure(&[a])?;
    println!("element {a} generates a cyclic subgroup of order {}", cyclic.len());
    let b = g.smallest_rotations().into_iter().map(|(i, _)| i).find(|&i| !cyclic.contains(&i)).expect("second axis");
    println!("adding element {b} generates {} elements", g.generated_closure(&[a, b])?.len());

    for name in [GroupName::Cyclic(12), GroupName::Dihedral(6), GroupName::Tetrahedral, GroupName::Octahedral] {
        let h = shared_group(name)?;
        h.verify()?;
        println!("{name}: order {}", h.order());
    }
    Ok(())
}
