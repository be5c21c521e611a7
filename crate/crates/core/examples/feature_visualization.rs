//! Colors the 60 faces of a pentakis dodecahedron by the principal
//! components of a group-valued feature map and writes a PLY file.
//!
//! `cargo run --example feature_visualization -- out.ply`

use finrot::group::{shared_group, GroupName};
use finrot::mvnet::model::{Model, ModelConfig};
use finrot::synth::{make_shape, render_views, RenderSpec};
use finrot::tape::Tape;
use finrot::viz::{pca_rgb, pentakis_mesh, ply_string};

fn main() -> finrot::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "features.ply".into());
    let model = Model::new(ModelConfig::default(), 0)?;
    let shape = make_shape(4, 9)?;
    let views = render_views(&shape, model.camera().poses(), &RenderSpec::default())?;

    let mut tape = Tape::new();
    let f = model.forward(&mut tape, &views, 1, None)?;
    let layer = tape.value(f.layers[0]);
    let c = layer.dim(2);
    let colors = pca_rgb(&layer.clone().reshape(&[60, c])?, 0..c)?;

    let ico = shared_group(GroupName::Icosahedral)?;
    let mesh = pentakis_mesh(&ico)?;
    std::fs::write(&out, ply_string(&mesh, &colors)?)?;
    println!("wrote {out}: {} faces colored by the first head layer", mesh.faces.len());
    Ok(())
}
