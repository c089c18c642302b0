use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::{gemm_acc, gemm_tn_acc, Tensor};

/// Parameters of a 2-D convolution (cross-correlation).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    /// `[filters, in_channels, kh, kw]`
    pub kernels: Tensor<T>,
    /// `[filters]`
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> ConvParams<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        let [f, _, _, _] = kernels.dims4()?;
        if bias.shape() != [f] {
            bail!(Shape, "bias shape {:?} does not match {} filters", bias.shape(), f);
        }
        if stride == 0 {
            bail!(Param, "stride must be positive");
        }
        Ok(ConvParams { kernels, bias, stride, padding })
    }

    /// Output extent for an input extent along one axis.
    pub fn output_extent(&self, extent: usize, kernel: usize) -> Result<usize> {
        let padded = extent + 2 * self.padding;
        if padded < kernel {
            bail!(Shape, "input extent {} (padding {}) is smaller than kernel {}", extent, self.padding, kernel);
        }
        if !(padded - kernel).is_multiple_of(self.stride) {
            bail!(
                Shape,
                "extent {} with kernel {}, padding {}, stride {} gives a non-integral output",
                extent, kernel, self.padding, self.stride
            );
        }
        Ok((padded - kernel) / self.stride + 1)
    }
}

#[derive(Debug, Clone)]
pub struct ConvCache<T = f32> {
    input_shape: [usize; 4],
    out_hw: [usize; 2],
    /// im2col matrices, one `[C·kh·kw × H'·W']` block per image.
    cols: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Valid cross-correlation of `[N, C, H, W]` input with `[F, C, kh, kw]` kernels.
///
/// Each output element sums its products in `(c, ky, kx)` order starting from
/// zero, then adds the bias.
pub fn conv2d<T: Real>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
    let [n, c, h, w] = input.dims4()?;
    let [f, kc, kh, kw] = params.kernels.dims4()?;
    if c != kc {
        bail!(Shape, "input has {} channels but kernels expect {}", c, kc);
    }
    let ho = params.output_extent(h, kh)?;
    let wo = params.output_extent(w, kw)?;
    let rows = c * kh * kw;
    let plane = ho * wo;

    let mut cols = vec![T::zero(); n * rows * plane];
    let mut out = vec![T::zero(); n * f * plane];
    for i in 0..n {
        let col = &mut cols[i * rows * plane..(i + 1) * rows * plane];
        im2col(input.outer(i), [c, h, w], [kh, kw], params.stride, params.padding, [ho, wo], col);
        let dst = &mut out[i * f * plane..(i + 1) * f * plane];
        gemm_acc(params.kernels.data(), col, dst, f, rows, plane);
        for (fi, &b) in params.bias.data().iter().enumerate() {
            for v in &mut dst[fi * plane..(fi + 1) * plane] {
                *v += b;
            }
        }
    }
    let output = Tensor::new(&[n, f, ho, wo], out)?;
    Ok((output, ConvCache { input_shape: [n, c, h, w], out_hw: [ho, wo], cols }))
}

/// Gradients of [`conv2d`] with respect to its input, kernels and bias.
pub fn conv2d_grad<T: Real>(
    cache: &ConvCache<T>,
    grad_out: &Tensor<T>,
    params: &ConvParams<T>,
) -> Result<ConvGrads<T>> {
    let (input, kernels, bias) = conv2d_backward(cache, grad_out, params, true)?;
    Ok(ConvGrads { input: input.expect("input gradient requested"), kernels, bias })
}

/// Input, kernel and bias gradients.
pub(crate) type BackwardGrads<T> = (Option<Tensor<T>>, Tensor<T>, Tensor<T>);

/// Backward pass; the input gradient is skipped when `want_input` is false
/// (first layer of a network).
pub(crate) fn conv2d_backward<T: Real>(
    cache: &ConvCache<T>,
    grad_out: &Tensor<T>,
    params: &ConvParams<T>,
    want_input: bool,
) -> Result<BackwardGrads<T>> {
    let [n, c, h, w] = cache.input_shape;
    let [f, _, kh, kw] = params.kernels.dims4()?;
    let [ho, wo] = cache.out_hw;
    if grad_out.shape() != [n, f, ho, wo] {
        bail!(Shape, "conv grad {:?} does not match forward output {:?}", grad_out.shape(), [n, f, ho, wo]);
    }
    let rows = c * kh * kw;
    let plane = ho * wo;

    let mut g_kernels = vec![T::zero(); f * rows];
    let mut g_bias = vec![T::zero(); f];
    let mut g_input = if want_input { vec![T::zero(); n * c * h * w] } else { Vec::new() };
    let mut col_t = vec![T::zero(); plane * rows];
    let mut g_col = vec![T::zero(); rows * plane];

    for i in 0..n {
        let g = &grad_out.data()[i * f * plane..(i + 1) * f * plane];
        let col = &cache.cols[i * rows * plane..(i + 1) * rows * plane];
        for (fi, gb) in g_bias.iter_mut().enumerate() {
            for &v in &g[fi * plane..(fi + 1) * plane] {
                *gb += v;
            }
        }
        for r in 0..rows {
            for p in 0..plane {
                col_t[p * rows + r] = col[r * plane + p];
            }
        }
        gemm_acc(g, &col_t, &mut g_kernels, f, plane, rows);
        if want_input {
            g_col.iter_mut().for_each(|v| *v = T::zero());
            gemm_tn_acc(params.kernels.data(), g, &mut g_col, rows, f, plane);
            let dst = &mut g_input[i * c * h * w..(i + 1) * c * h * w];
            col2im(&g_col, [c, h, w], [kh, kw], params.stride, params.padding, [ho, wo], dst);
        }
    }
    let g_input = if want_input { Some(Tensor::new(&[n, c, h, w], g_input)?) } else { None };
    Ok((g_input, Tensor::new(params.kernels.shape(), g_kernels)?, Tensor::new(&[f], g_bias)?))
}

fn im2col<T: Real>(
    image: &[T],
    [c, h, w]: [usize; 3],
    [kh, kw]: [usize; 2],
    stride: usize,
    pad: usize,
    [ho, wo]: [usize; 2],
    col: &mut [T],
) {
    let plane = ho * wo;
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &mut col[((ci * kh + ky) * kw + kx) * plane..][..plane];
                for oy in 0..ho {
                    let y = (oy * stride + ky) as isize - pad as isize;
                    for ox in 0..wo {
                        let x = (ox * stride + kx) as isize - pad as isize;
                        row[oy * wo + ox] = if y >= 0 && (y as usize) < h && x >= 0 && (x as usize) < w {
                            image[(ci * h + y as usize) * w + x as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(
    col: &[T],
    [c, h, w]: [usize; 3],
    [kh, kw]: [usize; 2],
    stride: usize,
    pad: usize,
    [ho, wo]: [usize; 2],
    image: &mut [T],
) {
    let plane = ho * wo;
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &col[((ci * kh + ky) * kw + kx) * plane..][..plane];
                for oy in 0..ho {
                    let y = (oy * stride + ky) as isize - pad as isize;
                    if y < 0 || y as usize >= h {
                        continue;
                    }
                    for ox in 0..wo {
                        let x = (ox * stride + kx) as isize - pad as isize;
                        if x >= 0 && (x as usize) < w {
                            image[(ci * h + y as usize) * w + x as usize] += row[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}
