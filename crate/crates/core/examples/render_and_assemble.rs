//! Renders a synthetic object from the 60 group-indexed cameras and shows
//! that rotating the object by a group element only permutes the views.

use finrot::synth::{make_shape, random_rotation, render_views, RenderSpec, CLASS_NAMES};
use finrot::views::{gen_config, ConfigKind};
use rand::SeedableRng;

fn main() -> finrot::Result<()> {
    let cfg = gen_config(ConfigKind::V60x1, 3.0)?;
    let spec = RenderSpec::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let shape = make_shape(2, 42)?.rotated(&random_rotation(&mut rng));
    println!("class '{}', {} points", CLASS_NAMES[2], shape.points.len());

    let views = render_views(&shape, cfg.poses(), &spec)?;
    let px = spec.size * spec.size;
    let coverage: Vec<usize> = (0..5).map(|v| views.data()[v * px..(v + 1) * px].iter().filter(|p| **p > 0.0).count()).collect();
    println!("views {:?}, lit pixels in the first five: {coverage:?}", views.shape());

    let k = 7;
    let moved = render_views(&shape.rotated(cfg.group().element(k)), cfg.poses(), &spec)?;
    let perm = cfg.permutation_under_rotation(k)?;
    let same = perm.iter().enumerate().all(|(i, &j)| moved.data()[j * px..(j + 1) * px] == views.data()[i * px..(i + 1) * px]);
    println!("rotated object renders the same views in permuted order: {same}");

    for row in 0..spec.size {
        let line: String = (0..spec.size).map(|c| if views.data()[row * spec.size + c] > 0.0 { '#' } else { '.' }).collect();
        println!("  {line}");
    }
    Ok(())
}
