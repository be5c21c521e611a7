//! Log-polar resampling turns in-plane rotations of a view into circular
//! shifts along the angle axis.

use finrot::audit::{smooth_image, POLAR_SPEC};
use finrot::polar::log_polar;

fn main() -> finrot::Result<()> {
    let size = 128;
    let c = (size as f64 - 1.0) / 2.0;
    let base = log_polar(&smooth_image(size, 18.0, 0.0, 1.0), [c, c], &POLAR_SPEC)?;
    println!("polar grid {:?}, log-radius step {:.4}", base.data.shape(), base.log_step());
    for m in [1, 8, 16, 32] {
        let angle = 2.0 * std::f64::consts::PI * m as f64 / POLAR_SPEC.angular as f64;
        let rotated = log_polar(&smooth_image(size, 18.0, angle, 1.0), [c, c], &POLAR_SPEC)?;
        let err = rotated.data.max_abs_diff(&base.shift_angle(m as isize).data);
        println!("rotation by {:>6.2}°: differs from a {m}-bin shift by {err:.1e}", angle.to_degrees());
    }
    Ok(())
}
