//! Stride-1 "same" convolution via im2col and GEMM.
//!
//! For a kernel of size `k` the input is padded by `(k - 1) / 2` before and
//! `k / 2` after, so even kernels pad more at the bottom/right.

use super::{matmul, NnError, Real, Tensor};

/// Spatial configuration of one convolution over a single sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
}

impl ConvGeometry {
    pub fn pad_top(&self) -> usize {
        (self.kernel_h - 1) / 2
    }

    pub fn pad_left(&self) -> usize {
        (self.kernel_w - 1) / 2
    }

    /// Rows of the column matrix: `channels * kernel_h * kernel_w`.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    /// Valid output columns `[lo, hi)` for kernel column offset `kj`.
    #[inline]
    fn x_range(&self, kj: usize) -> (usize, usize) {
        let shift = kj as isize - self.pad_left() as isize;
        let lo = (-shift).max(0) as usize;
        let hi = (self.width as isize - shift).clamp(0, self.width as isize) as usize;
        (lo, hi.max(lo))
    }
}

/// Unfolds one sample `[channels, h, w]` into `[patch_len, h*w]`.
pub fn im2col<T: Real>(x: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let (h, w) = (g.height, g.width);
    let hw = h * w;
    debug_assert_eq!(x.len(), g.channels * hw);
    debug_assert_eq!(cols.len(), g.patch_len() * hw);
    let (pt, pl) = (g.pad_top() as isize, g.pad_left() as isize);
    for c in 0..g.channels {
        let plane = &x[c * hw..(c + 1) * hw];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let (lo, hi) = g.x_range(kj);
                for oy in 0..h {
                    let iy = oy as isize + ki as isize - pt;
                    let out = &mut dst[oy * w..(oy + 1) * w];
                    if iy < 0 || iy >= h as isize || lo >= hi {
                        out.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    out[..lo].fill(T::zero());
                    out[hi..].fill(T::zero());
                    let off = lo as isize + kj as isize - pl;
                    out[lo..hi].copy_from_slice(&src_row[off as usize..off as usize + (hi - lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into `gx`.
pub fn col2im_add<T: Real>(cols: &[T], g: &ConvGeometry, gx: &mut [T]) {
    let (h, w) = (g.height, g.width);
    let hw = h * w;
    let (pt, pl) = (g.pad_top() as isize, g.pad_left() as isize);
    for c in 0..g.channels {
        let plane = &mut gx[c * hw..(c + 1) * hw];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                let (lo, hi) = g.x_range(kj);
                if lo >= hi {
                    continue;
                }
                for oy in 0..h {
                    let iy = oy as isize + ki as isize - pt;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let off = (lo as isize + kj as isize - pl) as usize;
                    let dst = &mut plane[iy as usize * w + off..iy as usize * w + off + (hi - lo)];
                    for (d, s) in dst.iter_mut().zip(&src[oy * w + lo..oy * w + hi]) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

fn geometry<T: Real>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, ConvGeometry), NnError> {
    let (b, c, h, wd) = x.dims4()?;
    let (f, wc, kh, kw) = w.dims4()?;
    if wc != c {
        return Err(NnError::Shape(format!(
            "convolution weights expect {wc} input channels, input has {c}"
        )));
    }
    Ok((
        b,
        f,
        ConvGeometry {
            channels: c,
            height: h,
            width: wd,
            kernel_h: kh,
            kernel_w: kw,
        },
    ))
}

/// `x [B, C, H, W]`, `weights [F, C, kh, kw]`, `bias [F]` → `[B, F, H, W]`.
pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let (b, f, g) = geometry(x, weights)?;
    if bias.len() != f {
        return Err(NnError::Shape(format!("bias has {} entries for {f} filters", bias.len())));
    }
    let hw = g.spatial();
    let k = g.patch_len();
    let mut y = Tensor::zeros(&[b, f, g.height, g.width]);
    let mut cols = vec![T::zero(); k * hw];
    let in_len = g.channels * hw;
    for s in 0..b {
        im2col(&x.data()[s * in_len..(s + 1) * in_len], &g, &mut cols);
        let out = &mut y.data_mut()[s * f * hw..(s + 1) * f * hw];
        for (fi, chunk) in out.chunks_mut(hw).enumerate() {
            chunk.fill(bias.data()[fi]);
        }
        matmul(f, k, hw, weights.data(), false, &cols, false, T::one(), out);
    }
    Ok(y)
}

/// Gradients `(dx, dweights, dbias)` of [`conv2d_forward`].
pub fn conv2d_backward<T: Real>(
    grad_y: &Tensor<T>,
    x: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
    let (b, f, g) = geometry(x, weights)?;
    if grad_y.shape() != [b, f, g.height, g.width] {
        return Err(NnError::Shape(format!(
            "output gradient {:?} does not match convolution output",
            grad_y.shape()
        )));
    }
    let hw = g.spatial();
    let k = g.patch_len();
    let in_len = g.channels * hw;
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(weights.shape());
    let mut gb = Tensor::zeros(&[f]);
    let mut cols = vec![T::zero(); k * hw];
    let mut gcols = vec![T::zero(); k * hw];
    for s in 0..b {
        let gy = &grad_y.data()[s * f * hw..(s + 1) * f * hw];
        for (fi, chunk) in gy.chunks(hw).enumerate() {
            gb.data_mut()[fi] += chunk.iter().copied().sum::<T>();
        }
        im2col(&x.data()[s * in_len..(s + 1) * in_len], &g, &mut cols);
        matmul(f, hw, k, gy, false, &cols, true, T::one(), gw.data_mut());
        matmul(k, f, hw, weights.data(), true, gy, false, T::zero(), &mut gcols);
        col2im_add(&gcols, &g, &mut gx.data_mut()[s * in_len..(s + 1) * in_len]);
    }
    Ok((gx, gw, gb))
}
