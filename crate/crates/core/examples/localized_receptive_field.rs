//! How far a localized filter reaches after stacking layers, and why the
//! support has to generate the group.

use finrot::audit::{best_two_axis_support, five_fold_subgroup};
use finrot::group::{shared_group, GroupName};
use finrot::mvnet::model::{greedy_support, layers_to_cover};
use finrot::signal::receptive_field;

fn main() -> finrot::Result<()> {
    let g = shared_group(GroupName::Icosahedral)?;
    for size in [9, 6, 3] {
        let s = greedy_support(&g, size)?;
        let sizes: Vec<usize> = (1..=4).map(|l| receptive_field(&g, &s, l, 0).len()).collect();
        let depth = layers_to_cover(&g, &s, 20).map_or("never".to_string(), |d| d.to_string());
        println!("greedy support of {size}: field sizes by depth {sizes:?}, full after {depth} layers");
    }

    let (_, c5) = five_fold_subgroup(&g)?;
    let stuck: Vec<usize> = (1..=6).map(|l| receptive_field(&g, &c5, l, 0).len()).collect();
    println!("support inside a cyclic subgroup: field sizes {stuck:?} (never leaves the coset)");

    let (pair, depth) = best_two_axis_support(&g);
    let depth = depth.map_or("never".to_string(), |d| d.to_string());
    println!("identity + two 72° rotations {pair:?}: closure {}, full after {depth} layers", g.generated_closure(&pair)?.len());
    Ok(())
}
