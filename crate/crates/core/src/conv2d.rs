//! Planar convolution (NHWC) via im2col + GEMM, with zero or circular
//! padding along the width axis.
//!
//! Circular width padding is what polar images need: their width is the
//! angular axis, so a shift along it must commute with the convolution.

use crate::error::{param_err, Result};
use crate::tensor::{gemm, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WidthPadding {
    Zero,
    Circular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Conv2dSpec {
    pub kernel: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    /// Symmetric padding on both axes.
    pub pad: usize,
    pub width_padding: WidthPadding,
}

impl Conv2dSpec {
    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.pad - self.kernel) / self.stride_h + 1;
        let ow = match self.width_padding {
            // wrap-around needs no extra columns; keep stride semantics
            WidthPadding::Circular => w.div_ceil(self.stride_w),
            WidthPadding::Zero => (w + 2 * self.pad - self.kernel) / self.stride_w + 1,
        };
        (oh, ow)
    }
}

/// Source pixel for output `(oy, ox)` and kernel tap `(ky, kx)`, if inside.
#[inline]
fn source(spec: &Conv2dSpec, h: usize, w: usize, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
    let iy = (oy * spec.stride_h + ky) as isize - spec.pad as isize;
    if iy < 0 || iy >= h as isize {
        return None;
    }
    let ix = (ox * spec.stride_w + kx) as isize - spec.pad as isize;
    let ix = match spec.width_padding {
        WidthPadding::Circular => ix.rem_euclid(w as isize),
        WidthPadding::Zero => {
            if ix < 0 || ix >= w as isize {
                return None;
            }
            ix
        }
    };
    Some((iy as usize, ix as usize))
}

fn im2col(spec: &Conv2dSpec, x: &Tensor) -> (Vec<f64>, usize, usize) {
    let (n, h, w, c) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (oh, ow) = spec.out_size(h, w);
    let k = spec.kernel;
    let cols_w = k * k * c;
    let mut cols = vec![0.0; n * oh * ow * cols_w];
    let xd = x.data();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((b * oh + oy) * ow + ox) * cols_w;
                for ky in 0..k {
                    for kx in 0..k {
                        if let Some((iy, ix)) = source(spec, h, w, oy, ox, ky, kx) {
                            let src = ((b * h + iy) * w + ix) * c;
                            let dst = row + (ky * k + kx) * c;
                            cols[dst..dst + c].copy_from_slice(&xd[src..src + c]);
                        }
                    }
                }
            }
        }
    }
    (cols, oh, ow)
}

fn check(spec: &Conv2dSpec, x: &Tensor, weight: &Tensor) -> Result<()> {
    if x.shape().len() != 4 {
        return Err(param_err!("conv2d input must be [N, H, W, C], got {:?}", x.shape()));
    }
    let k = spec.kernel;
    if weight.shape() != [weight.dim(0), k, k, x.dim(3)] {
        return Err(param_err!("conv2d weight {:?} does not match kernel {k} and C_in {}", weight.shape(), x.dim(3)));
    }
    if x.dim(1) + 2 * spec.pad < k || (spec.width_padding == WidthPadding::Zero && x.dim(2) + 2 * spec.pad < k) {
        return Err(param_err!("conv2d input {:?} smaller than kernel {k}", x.shape()));
    }
    if spec.stride_h == 0 || spec.stride_w == 0 {
        return Err(param_err!("conv2d stride must be positive"));
    }
    Ok(())
}

/// `x: [N, H, W, C_in]`, `weight: [C_out, k, k, C_in]`, `bias: [C_out]`.
pub fn conv2d_forward(spec: &Conv2dSpec, x: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    check(spec, x, weight)?;
    let (cols, oh, ow) = im2col(spec, x);
    let cout = weight.dim(0);
    let kdim = weight.len() / cout;
    let rows = x.dim(0) * oh * ow;
    let mut out = vec![0.0; rows * cout];
    gemm(rows, kdim, cout, &cols, false, weight.data(), true, &mut out, false);
    for r in 0..rows {
        for (o, b) in bias.iter().enumerate() {
            out[r * cout + o] += b;
        }
    }
    Tensor::from_vec(&[x.dim(0), oh, ow, cout], out)
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub fn conv2d_backward(
    spec: &Conv2dSpec,
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Vec<f64>)> {
    check(spec, x, weight)?;
    let (n, h, w, c) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (cols, oh, ow) = im2col(spec, x);
    let cout = weight.dim(0);
    let kdim = weight.len() / cout;
    let rows = n * oh * ow;
    let g = grad_out.data();
    let mut gw = vec![0.0; cout * kdim];
    gemm(cout, rows, kdim, g, true, &cols, false, &mut gw, false);
    let mut gb = vec![0.0; cout];
    for r in 0..rows {
        for (o, acc) in gb.iter_mut().enumerate() {
            *acc += g[r * cout + o];
        }
    }
    let mut gcols = vec![0.0; rows * kdim];
    gemm(rows, cout, kdim, g, false, weight.data(), false, &mut gcols, false);
    let k = spec.kernel;
    let mut gx = vec![0.0; x.len()];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((b * oh + oy) * ow + ox) * kdim;
                for ky in 0..k {
                    for kx in 0..k {
                        if let Some((iy, ix)) = source(spec, h, w, oy, ox, ky, kx) {
                            let dst = ((b * h + iy) * w + ix) * c;
                            let src = row + (ky * k + kx) * c;
                            for (d, v) in gx[dst..dst + c].iter_mut().zip(&gcols[src..src + c]) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((Tensor::from_vec(x.shape(), gx)?, Tensor::from_vec(weight.shape(), gw)?, gb))
}

#[cfg(test)]
mod grad_tests {
    use super::*;

    fn filled(shape: &[usize], seed: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| ((i as f64 + seed) * 0.731).sin()).collect()).unwrap()
    }

    #[test]
    fn backward_matches_central_differences() {
        for wp in [WidthPadding::Zero, WidthPadding::Circular] {
            let spec = Conv2dSpec { kernel: 3, stride_h: 2, stride_w: 2, pad: 1, width_padding: wp };
            let x = filled(&[2, 7, 6, 3], 0.0);
            let w = filled(&[4, 3, 3, 3], 1.0);
            let b = [0.1, -0.2, 0.3, 0.0];
            let out = conv2d_forward(&spec, &x, &w, &b).unwrap();
            let go = filled(out.shape(), 5.0);
            let loss = |x: &Tensor, w: &Tensor, b: &[f64]| -> f64 {
                conv2d_forward(&spec, x, w, b).unwrap().data().iter().zip(go.data()).map(|(a, g)| a * g).sum()
            };
            let (gx, gw, gb) = conv2d_backward(&spec, &x, &w, &go).unwrap();
            let h = 1e-6;
            for i in 0..x.len() {
                let (mut p, mut m) = (x.clone(), x.clone());
                p.data_mut()[i] += h;
                m.data_mut()[i] -= h;
                let num = (loss(&p, &w, &b) - loss(&m, &w, &b)) / (2.0 * h);
                assert!((num - gx.data()[i]).abs() < 1e-7, "x[{i}] {num} {}", gx.data()[i]);
            }
            for i in 0..w.len() {
                let (mut p, mut m) = (w.clone(), w.clone());
                p.data_mut()[i] += h;
                m.data_mut()[i] -= h;
                let num = (loss(&x, &p, &b) - loss(&x, &m, &b)) / (2.0 * h);
                assert!((num - gw.data()[i]).abs() < 1e-7, "w[{i}]");
            }
            for i in 0..4 {
                let (mut p, mut m) = (b, b);
                p[i] += h;
                m[i] -= h;
                let num = (loss(&x, &w, &p) - loss(&x, &w, &m)) / (2.0 * h);
                assert!((num - gb[i]).abs() < 1e-7, "b[{i}]");
            }
        }
    }
}
