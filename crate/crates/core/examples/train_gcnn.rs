//! Trains the G-CNN head on a small synthetic rotated dataset and compares
//! it with mean pooling of the same per-view features.
//!
//! `cargo run --release --example train_gcnn`

use finrot::experiment::{baseline_of, rotation_invariance};
use finrot::mvnet::train::{run_experiment, ExperimentConfig};

fn main() -> finrot::Result<()> {
    env_logger::Builder::new().filter_level(log::LevelFilter::Info).init();
    let mut cfg = ExperimentConfig::default();
    cfg.data.classes = 4;
    cfg.data.n_train = 40;
    cfg.data.n_test = 15;

    let (gcnn, data, test) = run_experiment(&cfg)?;
    println!("G-CNN:        accuracy {:.3}  mAP {:.3}", test.accuracy, test.retrieval.map_micro);
    let err = rotation_invariance(&gcnn.model, &data.test[..2], &cfg.render)?;
    println!("embedding change under the 60 rotations: {err:.1e}");

    let (_, _, base) = run_experiment(&baseline_of(&cfg))?;
    println!("mean pooling: accuracy {:.3}  mAP {:.3}", base.accuracy, base.retrieval.map_micro);
    Ok(())
}
