//! Camera configurations indexed by the group or a homogeneous space, and
//! the view permutation induced by rotating the object.

use finrot::views::{gen_config, ConfigKind};

fn main() -> finrot::Result<()> {
    for kind in [ConfigKind::V60x1, ConfigKind::V12x5, ConfigKind::V20x3, ConfigKind::Aligned12, ConfigKind::Aligned20] {
        let cfg = gen_config(kind, 3.0)?;
        if kind.is_grouped() {
            cfg.check_equivariance()?;
        }
        // 60x1 has one camera per viewpoint, so no in-plane families
        let families = cfg.in_plane_families().map(|f| f.len()).unwrap_or(cfg.len());
        println!("{kind:>9}: {} views on {} viewpoints", cfg.len(), families);
    }

    let cfg = gen_config(ConfigKind::V12x5, 3.0)?;
    let (a, _) = cfg.group().smallest_rotations()[0];
    let perm = cfg.permutation_under_rotation(a)?;
    println!("rotating the object by element {a} sends view i to view π(i):");
    println!("{:?}", &perm[..15]);
    Ok(())
}
