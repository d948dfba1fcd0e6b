use rayon::prelude::*;

use super::Tensor;
use crate::{Error, Result};

pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

struct ConvGeometry {
    batch: usize,
    in_channels: usize,
    height: usize,
    width: usize,
    out_channels: usize,
    kernel: usize,
    out_h: usize,
    out_w: usize,
}

fn geometry(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<ConvGeometry> {
    let (batch, in_channels, height, width) = input.dims4()?;
    let (out_channels, k_in, kh, kw) = kernel.dims4()?;
    if k_in != in_channels {
        return Err(Error::shape(
            "conv2d",
            format!("input has {in_channels} channels but kernel expects {k_in}"),
        ));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape("conv2d", format!("kernel must be square and odd, got {kh}x{kw}")));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
    }
    if height + 2 * padding < kh || width + 2 * padding < kw {
        return Err(Error::shape(
            "conv2d",
            format!("{height}x{width} input with padding {padding} is smaller than kernel {kh}"),
        ));
    }
    Ok(ConvGeometry {
        batch,
        in_channels,
        height,
        width,
        out_channels,
        kernel: kh,
        out_h: conv_output_extent(height, kh, stride, padding),
        out_w: conv_output_extent(width, kw, stride, padding),
    })
}

/// Zero-padded 2-D cross-correlation (no kernel flip).
///
/// Lowered to im2col + `dgemm` per sample; samples run in parallel and each
/// one's arithmetic is independent of scheduling.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = geometry(input, kernel, stride, padding)?;
    let k = g.kernel;
    let patch = g.in_channels * k * k;
    let spatial = g.out_h * g.out_w;
    let in_plane = g.height * g.width;
    let in_sample = g.in_channels * in_plane;
    let out_sample = g.out_channels * spatial;
    let pointwise = k == 1 && stride == 1 && padding == 0;

    let mut out = vec![0.0; g.batch * out_sample];
    out.par_chunks_mut(out_sample).enumerate().for_each(|(b, out_b)| {
        let x = &input.data()[b * in_sample..(b + 1) * in_sample];
        let owned;
        let cols: &[f64] = if pointwise {
            x
        } else {
            let mut buf = vec![0.0; patch * spatial];
            for ci in 0..g.in_channels {
                let plane = &x[ci * in_plane..(ci + 1) * in_plane];
                for ki in 0..k {
                    for kj in 0..k {
                        let row = (ci * k + ki) * k + kj;
                        let dst = &mut buf[row * spatial..(row + 1) * spatial];
                        for oh in 0..g.out_h {
                            let ih = (oh * stride + ki) as isize - padding as isize;
                            if ih < 0 || ih >= g.height as isize {
                                continue;
                            }
                            let src = &plane[ih as usize * g.width..(ih as usize + 1) * g.width];
                            for ow in 0..g.out_w {
                                let iw = (ow * stride + kj) as isize - padding as isize;
                                if iw >= 0 && iw < g.width as isize {
                                    dst[oh * g.out_w + ow] = src[iw as usize];
                                }
                            }
                        }
                    }
                }
            }
            owned = buf;
            &owned
        };
        // SAFETY: all three buffers are dense row-major matrices whose sizes
        // match (m, k, n) = (out_channels, patch, spatial).
        unsafe {
            matrixmultiply::dgemm(
                g.out_channels,
                patch,
                spatial,
                1.0,
                kernel.data().as_ptr(),
                patch as isize,
                1,
                cols.as_ptr(),
                spatial as isize,
                1,
                0.0,
                out_b.as_mut_ptr(),
                spatial as isize,
                1,
            );
        }
    });
    Tensor::new(vec![g.batch, g.out_channels, g.out_h, g.out_w], out)
}

/// Direct six-loop cross-correlation. Slow; kept as the reference the fast
/// path is checked against.
pub fn conv2d_naive(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = geometry(input, kernel, stride, padding)?;
    let k = g.kernel;
    let x = input.data();
    let w = kernel.data();
    let mut out = vec![0.0; g.batch * g.out_channels * g.out_h * g.out_w];
    for b in 0..g.batch {
        for co in 0..g.out_channels {
            for oh in 0..g.out_h {
                for ow in 0..g.out_w {
                    let mut acc = 0.0;
                    for ci in 0..g.in_channels {
                        for ki in 0..k {
                            for kj in 0..k {
                                let ih = (oh * stride + ki) as isize - padding as isize;
                                let iw = (ow * stride + kj) as isize - padding as isize;
                                if ih < 0 || iw < 0 || ih >= g.height as isize || iw >= g.width as isize {
                                    continue;
                                }
                                let xi = ((b * g.in_channels + ci) * g.height + ih as usize) * g.width
                                    + iw as usize;
                                let wi = ((co * g.in_channels + ci) * k + ki) * k + kj;
                                acc += x[xi] * w[wi];
                            }
                        }
                    }
                    out[((b * g.out_channels + co) * g.out_h + oh) * g.out_w + ow] = acc;
                }
            }
        }
    }
    Tensor::new(vec![g.batch, g.out_channels, g.out_h, g.out_w], out)
}
