//! Log-polar resampling: in-plane rotations about the center become circular
//! shifts along the angular axis, and dilations become shifts along the
//! radial axis.

use std::f64::consts::PI;

use crate::error::{param_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct PolarImage {
    /// `[R, Θ, C]`; the Θ axis is circular.
    pub data: Tensor,
    pub log_r_min: f64,
    pub log_r_max: f64,
    /// `(x, y)` in pixel coordinates (pixel centers at integers).
    pub center: [f64; 2],
}

impl PolarImage {
    pub fn radial_bins(&self) -> usize {
        self.data.dim(0)
    }

    pub fn angular_bins(&self) -> usize {
        self.data.dim(1)
    }

    /// Log-radius step between consecutive radial bins.
    pub fn log_step(&self) -> f64 {
        (self.log_r_max - self.log_r_min) / (self.radial_bins() - 1) as f64
    }

    /// Circular shift by `m` bins along Θ: output column `θ + m` takes input column `θ`.
    pub fn shift_angle(&self, m: isize) -> PolarImage {
        let (r, t, c) = (self.data.dim(0), self.data.dim(1), self.data.dim(2));
        let mut out = Tensor::zeros(self.data.shape());
        for i in 0..r {
            for j in 0..t {
                let dst = (j as isize + m).rem_euclid(t as isize) as usize;
                for k in 0..c {
                    out.data_mut()[(i * t + dst) * c + k] = self.data.data()[(i * t + j) * c + k];
                }
            }
        }
        PolarImage { data: out, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarSpec {
    pub radial: usize,
    pub angular: usize,
    /// `(r_min, r_max)` in pixels; `None` means `[2, half diagonal]`.
    pub r_range: Option<(f64, f64)>,
}

impl Default for PolarSpec {
    fn default() -> Self {
        PolarSpec { radial: 64, angular: 64, r_range: None }
    }
}

/// Bilinear sample of channel-interleaved `[H, W, C]` data at `(x, y)`; zero
/// outside the pixel grid.
pub fn bilinear(image: &Tensor, x: f64, y: f64, out: &mut [f64]) {
    let (h, w, c) = (image.dim(0), image.dim(1), image.dim(2));
    out.iter_mut().for_each(|v| *v = 0.0);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (xi, yi) = (x0 as isize + dx, y0 as isize + dy);
            if xi < 0 || yi < 0 || xi >= w as isize || yi >= h as isize || wx * wy == 0.0 {
                continue;
            }
            let base = (yi as usize * w + xi as usize) * c;
            for k in 0..c {
                out[k] += wx * wy * image.data()[base + k];
            }
        }
    }
}

/// Samples `image: [H, W, C]` on a log-polar grid around `center`.
pub fn log_polar(image: &Tensor, center: [f64; 2], spec: &PolarSpec) -> Result<PolarImage> {
    if image.shape().len() != 3 {
        return Err(param_err!("log_polar expects [H, W, C], got {:?}", image.shape()));
    }
    if spec.radial < 2 || spec.angular < 2 {
        return Err(param_err!("log_polar needs at least 2 radial and 2 angular bins"));
    }
    let (h, w, c) = (image.dim(0), image.dim(1), image.dim(2));
    let [cx, cy] = center;
    if !(cx >= 0.0 && cy >= 0.0 && cx <= (w - 1) as f64 && cy <= (h - 1) as f64) {
        return Err(param_err!("center ({cx}, {cy}) lies outside the {w}×{h} image"));
    }
    let (r_min, r_max) = spec.r_range.unwrap_or((2.0, 0.5 * ((h * h + w * w) as f64).sqrt()));
    if !(r_min > 0.0 && r_max > r_min) {
        return Err(param_err!("radius range must satisfy 0 < r_min < r_max"));
    }
    let (lo, hi) = (r_min.ln(), r_max.ln());
    let step = (hi - lo) / (spec.radial - 1) as f64;
    let mut data = vec![0.0; spec.radial * spec.angular * c];
    for r in 0..spec.radial {
        let rho = (lo + r as f64 * step).exp();
        for t in 0..spec.angular {
            let phi = 2.0 * PI * t as f64 / spec.angular as f64;
            let at = (r * spec.angular + t) * c;
            bilinear(image, cx + rho * phi.cos(), cy + rho * phi.sin(), &mut data[at..at + c]);
        }
    }
    Ok(PolarImage {
        data: Tensor::from_vec(&[spec.radial, spec.angular, c], data)?,
        log_r_min: lo,
        log_r_max: hi,
        center,
    })
}

/// Image center in pixel coordinates.
pub fn image_center(image: &Tensor) -> [f64; 2] {
    [(image.dim(1) as f64 - 1.0) / 2.0, (image.dim(0) as f64 - 1.0) / 2.0]
}
