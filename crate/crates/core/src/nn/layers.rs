//! Parameterized layers: convolution, transposed convolution, instance norm.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::geometry::{col2im, conv_out_dim, im2col};
use super::{Feat, Scalar};
use crate::error::{Error, Result};

/// Standard deviation of the Gaussian weight initialization.
const INIT_STD: f64 = 0.02;

fn sample_normal<S: Scalar>(rng: &mut impl Rng, n: usize) -> Vec<S> {
    let dist = Normal::new(0.0f64, INIT_STD).expect("valid normal");
    (0..n).map(|_| S::from_f64c(dist.sample(rng))).collect()
}

/// Zero-padded strided 2D convolution with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<S> {
    /// `(OC, IC, KH, KW)`.
    pub weight: Array4<S>,
    pub bias: Array1<S>,
    pub grad_weight: Array4<S>,
    pub grad_bias: Array1<S>,
    pub stride: usize,
    pub pad: usize,
}

impl<S: Scalar> Conv2d<S> {
    pub fn new(ic: usize, oc: usize, k: usize, stride: usize, pad: usize, rng: &mut impl Rng) -> Self {
        let weight = Array4::from_shape_vec((oc, ic, k, k), sample_normal(rng, oc * ic * k * k))
            .expect("shape matches sample count");
        Conv2d {
            grad_weight: Array4::zeros(weight.raw_dim()),
            weight,
            bias: Array1::zeros(oc),
            grad_bias: Array1::zeros(oc),
            stride,
            pad,
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let (oc, ic, kh, kw) = self.weight.dim();
        (oc, ic, kh, kw)
    }

    pub fn out_hw(&self, in_hw: (usize, usize)) -> Result<(usize, usize)> {
        let (_, _, kh, kw) = self.dims();
        let oh = conv_out_dim(in_hw.0, kh, self.stride, self.pad);
        let ow = conv_out_dim(in_hw.1, kw, self.stride, self.pad);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::Net(format!(
                "conv kernel {kh}x{kw} (pad {}) larger than input {}x{}",
                self.pad, in_hw.1, in_hw.0
            ))),
        }
    }

    pub fn forward(&self, x: &Feat<S>) -> Result<Feat<S>> {
        let (n, c, h, w) = x.dim();
        let (oc, ic, kh, kw) = self.dims();
        if c != ic {
            return Err(Error::Net(format!("conv expects {ic} channels, got {c}")));
        }
        let (oh, ow) = self.out_hw((h, w))?;
        let w_mat = self
            .weight
            .view()
            .into_shape_with_order((oc, ic * kh * kw))
            .expect("weights are standard layout");
        let mut y = Array4::zeros((n, oc, oh, ow));
        for b in 0..n {
            let cols = im2col(&x.index_axis(Axis(0), b), kh, kw, self.stride, self.pad, (oh, ow));
            let mut y_mat = Array2::zeros((oc, oh * ow));
            general_mat_mul(S::one(), &w_mat, &cols.view(), S::zero(), &mut y_mat);
            for o in 0..oc {
                let bias = self.bias[o];
                y_mat.row_mut(o).mapv_inplace(|t| t + bias);
            }
            y.index_axis_mut(Axis(0), b).assign(
                &y_mat
                    .into_shape_with_order((oc, oh, ow))
                    .expect("row count matches"),
            );
        }
        Ok(y)
    }

    /// Propagates `gy` back to the input; accumulates parameter gradients
    /// when `accumulate` is set.
    pub fn backward(&mut self, x: &Feat<S>, gy: &Feat<S>, accumulate: bool) -> Result<Feat<S>> {
        let (n, _, h, w) = x.dim();
        let (oc, ic, kh, kw) = self.dims();
        let (oh, ow) = self.out_hw((h, w))?;
        let w_mat = self
            .weight
            .view()
            .into_shape_with_order((oc, ic * kh * kw))
            .expect("weights are standard layout");
        let mut gx = Array4::zeros(x.raw_dim());
        for b in 0..n {
            let gy_mat = gy
                .index_axis(Axis(0), b)
                .into_shape_with_order((oc, oh * ow))
                .expect("contiguous");
            if accumulate {
                let cols =
                    im2col(&x.index_axis(Axis(0), b), kh, kw, self.stride, self.pad, (oh, ow));
                let mut gw_mat = self
                    .grad_weight
                    .view_mut()
                    .into_shape_with_order((oc, ic * kh * kw))
                    .expect("standard layout");
                general_mat_mul(S::one(), &gy_mat, &cols.t(), S::one(), &mut gw_mat);
                for o in 0..oc {
                    self.grad_bias[o] += gy_mat.row(o).sum();
                }
            }
            let mut gcols = Array2::zeros((ic * kh * kw, oh * ow));
            general_mat_mul(S::one(), &w_mat.t(), &gy_mat, S::zero(), &mut gcols);
            gx.index_axis_mut(Axis(0), b).assign(&col2im(
                &gcols.view(),
                kh,
                kw,
                self.stride,
                self.pad,
                (h, w),
                (oh, ow),
            ));
        }
        Ok(gx)
    }
}

/// Strided transposed convolution (fractionally strided upsampling).
///
/// Output extent per axis: `(in - 1)*stride - 2*pad + k + output_pad`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<S> {
    /// `(IC, OC, KH, KW)`.
    pub weight: Array4<S>,
    pub bias: Array1<S>,
    pub grad_weight: Array4<S>,
    pub grad_bias: Array1<S>,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
}

impl<S: Scalar> ConvTranspose2d<S> {
    pub fn new(
        ic: usize,
        oc: usize,
        k: usize,
        stride: usize,
        pad: usize,
        output_pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(output_pad < stride, "output_pad must be below stride");
        let weight = Array4::from_shape_vec((ic, oc, k, k), sample_normal(rng, ic * oc * k * k))
            .expect("shape matches sample count");
        ConvTranspose2d {
            grad_weight: Array4::zeros(weight.raw_dim()),
            weight,
            bias: Array1::zeros(oc),
            grad_bias: Array1::zeros(oc),
            stride,
            pad,
            output_pad,
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let (ic, oc, kh, kw) = self.weight.dim();
        (ic, oc, kh, kw)
    }

    pub fn out_hw(&self, in_hw: (usize, usize)) -> Result<(usize, usize)> {
        let (_, _, kh, kw) = self.dims();
        let ext = |n: usize, k: usize| {
            ((n - 1) * self.stride + k + self.output_pad).checked_sub(2 * self.pad)
        };
        match (ext(in_hw.0, kh), ext(in_hw.1, kw)) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((oh, ow)),
            _ => Err(Error::Net(format!(
                "transposed conv with pad {} collapses input {}x{}",
                self.pad, in_hw.1, in_hw.0
            ))),
        }
    }

    pub fn forward(&self, x: &Feat<S>) -> Result<Feat<S>> {
        let (n, c, h, w) = x.dim();
        let (ic, oc, kh, kw) = self.dims();
        if c != ic {
            return Err(Error::Net(format!(
                "transposed conv expects {ic} channels, got {c}"
            )));
        }
        let (oh, ow) = self.out_hw((h, w))?;
        let w_mat = self
            .weight
            .view()
            .into_shape_with_order((ic, oc * kh * kw))
            .expect("weights are standard layout");
        let mut y = Array4::zeros((n, oc, oh, ow));
        for b in 0..n {
            let x_mat = x
                .index_axis(Axis(0), b)
                .into_shape_with_order((ic, h * w))
                .expect("contiguous");
            let mut cols = Array2::zeros((oc * kh * kw, h * w));
            general_mat_mul(S::one(), &w_mat.t(), &x_mat, S::zero(), &mut cols);
            let mut out = col2im(&cols.view(), kh, kw, self.stride, self.pad, (oh, ow), (h, w));
            for o in 0..oc {
                let bias = self.bias[o];
                out.index_axis_mut(Axis(0), o).mapv_inplace(|t| t + bias);
            }
            y.index_axis_mut(Axis(0), b).assign(&out);
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &Feat<S>, gy: &Feat<S>, accumulate: bool) -> Result<Feat<S>> {
        let (n, _, h, w) = x.dim();
        let (ic, oc, kh, kw) = self.dims();
        let w_mat = self
            .weight
            .view()
            .into_shape_with_order((ic, oc * kh * kw))
            .expect("weights are standard layout");
        let mut gx = Array4::zeros(x.raw_dim());
        for b in 0..n {
            // The mirror convolution maps the output grid back onto the
            // input grid, so unfolding gy with the same geometry yields
            // columns indexed by input positions.
            let gy_cols = im2col(
                &gy.index_axis(Axis(0), b),
                kh,
                kw,
                self.stride,
                self.pad,
                (h, w),
            );
            if accumulate {
                let x_mat = x
                    .index_axis(Axis(0), b)
                    .into_shape_with_order((ic, h * w))
                    .expect("contiguous");
                let mut gw_mat = self
                    .grad_weight
                    .view_mut()
                    .into_shape_with_order((ic, oc * kh * kw))
                    .expect("standard layout");
                general_mat_mul(S::one(), &x_mat, &gy_cols.t(), S::one(), &mut gw_mat);
                for o in 0..oc {
                    self.grad_bias[o] += gy.index_axis(Axis(0), b).index_axis(Axis(0), o).sum();
                }
            }
            let mut gx_mat = Array2::zeros((ic, h * w));
            general_mat_mul(S::one(), &w_mat, &gy_cols.view(), S::zero(), &mut gx_mat);
            gx.index_axis_mut(Axis(0), b).assign(
                &gx_mat
                    .into_shape_with_order((ic, h, w))
                    .expect("row count matches"),
            );
        }
        Ok(gx)
    }
}

/// Instance normalization without affine parameters: each `(sample,
/// channel)` plane is standardized by its own biased statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNorm<S> {
    pub eps: S,
}

impl<S: Scalar> Default for InstanceNorm<S> {
    fn default() -> Self {
        InstanceNorm {
            eps: S::from_f64c(1e-5),
        }
    }
}

impl<S: Scalar> InstanceNorm<S> {
    /// Returns the normalized output and the per-plane `1/sqrt(var + eps)`.
    pub fn forward(&self, x: &Feat<S>) -> (Feat<S>, Array2<S>) {
        let (n, c, h, w) = x.dim();
        let count = S::from_f64c((h * w) as f64);
        let mut y = x.clone();
        let mut inv = Array2::zeros((n, c));
        for b in 0..n {
            for ch in 0..c {
                let mut plane = y.slice_mut(ndarray::s![b, ch, .., ..]);
                let mean = plane.sum() / count;
                let var = plane.fold(S::zero(), |acc, &v| {
                    let d = v - mean;
                    acc + d * d
                }) / count;
                let scale = S::one() / (var + self.eps).sqrt();
                inv[(b, ch)] = scale;
                plane.mapv_inplace(|v| (v - mean) * scale);
            }
        }
        (y, inv)
    }

    /// `xhat` is the forward output, `inv` the saved scales.
    pub fn backward(&self, xhat: &Feat<S>, inv: &Array2<S>, gy: &Feat<S>) -> Feat<S> {
        let (n, c, h, w) = gy.dim();
        let count = S::from_f64c((h * w) as f64);
        let mut gx = gy.clone();
        for b in 0..n {
            for ch in 0..c {
                let xh = xhat.slice(ndarray::s![b, ch, .., ..]);
                let mut g = gx.slice_mut(ndarray::s![b, ch, .., ..]);
                let mean_g = g.sum() / count;
                let mean_gx = g
                    .iter()
                    .zip(xh.iter())
                    .fold(S::zero(), |acc, (&gv, &xv)| acc + gv * xv)
                    / count;
                let scale = inv[(b, ch)];
                ndarray::Zip::from(&mut g).and(&xh).for_each(|gv, &xv| {
                    *gv = scale * (*gv - mean_g - xv * mean_gx);
                });
            }
        }
        gx
    }
}
