//! Group convolution on the icosahedral group: rotating the input signal
//! rotates the output, and global pooling is invariant.

use finrot::group::{shared_group, GroupName};
use finrot::signal::{apply_action, gconv, global_pool, GroupSignal, LocalizedFilter};
use finrot::tensor::Tensor;
use rand::{Rng, SeedableRng};

fn main() -> finrot::Result<()> {
    let g = shared_group(GroupName::Icosahedral)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut random = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };

    let f = GroupSignal::new(g.clone(), random(&[60, 4])?)?;
    let support = finrot::mvnet::greedy_support(&g, 9)?;
    let h = LocalizedFilter::new(support.clone(), random(&[8, 4, support.len()])?)?;
    println!("support {support:?}");

    let out = gconv(&f, &h)?;
    let mut worst = 0.0f64;
    for k in 0..g.order() {
        let lhs = gconv(&apply_action(k, &f)?, &h)?;
        worst = worst.max(lhs.data().max_abs_diff(apply_action(k, &out)?.data()));
    }
    println!("max equivariance error over 60 rotations: {worst:.2e}");

    let pooled = global_pool(out.data());
    let moved = global_pool(apply_action(17, &out)?.data());
    println!("pooled descriptor change under rotation: {:.2e}", pooled.max_abs_diff(&moved));
    Ok(())
}
