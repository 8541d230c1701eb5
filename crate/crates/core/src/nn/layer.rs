//! Layer set: 1D/2D (dilated) convolutions, per-frame linear, activations,
//! global average pooling and TDNN frame splicing. Each layer owns its
//! parameters and a forward cache consumed by backward.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    SameZero,
    Valid,
}

/// Declarative layer description, the unit of graph construction and the
/// textual header stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        dilation: (usize, usize),
        padding: Padding,
    },
    Linear {
        in_dim: usize,
        out_dim: usize,
    },
    Relu,
    Sigmoid,
    GlobalAvgPool,
    TdnnSplice {
        offsets: Vec<i64>,
    },
}

impl LayerSpec {
    fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::Conv1d { kernel, stride, .. } => {
                if *kernel == 0 || *stride == 0 {
                    return Err(Error::InvalidArgument(
                        "conv1d kernel and stride must be >= 1".into(),
                    ));
                }
            }
            LayerSpec::Conv2d {
                kernel, dilation, ..
            } => {
                if kernel.0 == 0 || kernel.1 == 0 || dilation.0 == 0 || dilation.1 == 0 {
                    return Err(Error::InvalidArgument(
                        "conv2d kernel and dilation must be >= 1".into(),
                    ));
                }
            }
            LayerSpec::TdnnSplice { offsets } => {
                if offsets.is_empty() {
                    return Err(Error::InvalidArgument(
                        "tdnn splice needs at least one offset".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Cumulative receptive field (context) of a stack of 2D convolutions,
/// starting from 1x1 and growing by (kernel-1)*dilation per layer and axis.
/// Non-convolutional specs contribute nothing.
pub fn receptive_field(specs: &[LayerSpec]) -> (usize, usize) {
    let mut ctx = (1usize, 1usize);
    for s in specs {
        match s {
            LayerSpec::Conv2d {
                kernel, dilation, ..
            } => {
                ctx.0 += (kernel.0 - 1) * dilation.0;
                ctx.1 += (kernel.1 - 1) * dilation.1;
            }
            LayerSpec::Conv1d { kernel, .. } => {
                // 1D convs act along the time axis only.
                ctx.1 += kernel - 1;
            }
            LayerSpec::TdnnSplice { offsets } => {
                // Splicing widens time context by the offset span.
                let lo = offsets.iter().copied().min().unwrap_or(0);
                let hi = offsets.iter().copied().max().unwrap_or(0);
                ctx.1 += (hi - lo) as usize;
            }
            _ => {}
        }
    }
    ctx
}

pub struct Layer {
    pub name: String,
    pub spec: LayerSpec,
    pub params: Vec<Param>,
    cache: Option<Cache>,
}

enum Cache {
    Conv1d {
        padded: Vec<f64>,
        in_ch: usize,
        padded_len: usize,
        in_len: usize,
        pad_left: usize,
        out_len: usize,
    },
    Conv2d {
        padded: Vec<f64>,
        in_ch: usize,
        ph: usize,
        pw: usize,
        h: usize,
        w: usize,
        pad_top: usize,
        pad_left: usize,
    },
    Linear {
        input: Tensor,
    },
    Relu {
        input: Tensor,
    },
    Sigmoid {
        output: Tensor,
    },
    GlobalAvgPool {
        channels: usize,
        frames: usize,
    },
    TdnnSplice {
        channels: usize,
        frames: usize,
    },
}

impl Layer {
    pub fn build(
        name: impl Into<String>,
        spec: LayerSpec,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let name = name.into();
        let params = match &spec {
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => {
                let fan_in = in_ch * kernel;
                vec![
                    Param::new(
                        format!("{}.w", name),
                        Tensor::uniform_fan_in(&[*out_ch, *in_ch, *kernel], fan_in, rng),
                    ),
                    Param::new(
                        format!("{}.b", name),
                        Tensor::uniform_fan_in(&[*out_ch], fan_in, rng),
                    ),
                ]
            }
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => {
                let fan_in = in_ch * kernel.0 * kernel.1;
                vec![
                    Param::new(
                        format!("{}.w", name),
                        Tensor::uniform_fan_in(
                            &[*out_ch, *in_ch, kernel.0, kernel.1],
                            fan_in,
                            rng,
                        ),
                    ),
                    Param::new(
                        format!("{}.b", name),
                        Tensor::uniform_fan_in(&[*out_ch], fan_in, rng),
                    ),
                ]
            }
            LayerSpec::Linear { in_dim, out_dim } => vec![
                Param::new(
                    format!("{}.w", name),
                    Tensor::uniform_fan_in(&[*out_dim, *in_dim], *in_dim, rng),
                ),
                Param::new(
                    format!("{}.b", name),
                    Tensor::uniform_fan_in(&[*out_dim], *in_dim, rng),
                ),
            ],
            _ => vec![],
        };
        Ok(Layer {
            name,
            spec,
            params,
            cache: None,
        })
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    fn shape_err(&self, expected: impl Into<String>, actual: impl Into<String>) -> Error {
        Error::shape(format!("layer {}", self.name), expected, actual)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        match &self.spec {
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => self.forward_conv1d(input, *in_ch, *out_ch, *kernel, *stride, *padding),
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                dilation,
                padding,
            } => self.forward_conv2d(input, *in_ch, *out_ch, *kernel, *dilation, *padding),
            LayerSpec::Linear { in_dim, out_dim } => {
                self.forward_linear(input, *in_dim, *out_dim)
            }
            LayerSpec::Relu => {
                let mut out = input.clone();
                for v in &mut out.data {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                self.cache = Some(Cache::Relu {
                    input: input.clone(),
                });
                Ok(out)
            }
            LayerSpec::Sigmoid => {
                let mut out = input.clone();
                for v in &mut out.data {
                    *v = 1.0 / (1.0 + (-*v).exp());
                }
                self.cache = Some(Cache::Sigmoid { output: out.clone() });
                Ok(out)
            }
            LayerSpec::GlobalAvgPool => {
                if input.shape.len() != 2 {
                    return Err(self.shape_err("[C, T]", format!("{:?}", input.shape)));
                }
                let (c, t) = (input.shape[0], input.shape[1]);
                let mut out = Tensor::zeros(&[c]);
                for ch in 0..c {
                    let row = &input.data[ch * t..(ch + 1) * t];
                    out.data[ch] = row.iter().sum::<f64>() / t as f64;
                }
                self.cache = Some(Cache::GlobalAvgPool {
                    channels: c,
                    frames: t,
                });
                Ok(out)
            }
            LayerSpec::TdnnSplice { offsets } => {
                if input.shape.len() != 2 {
                    return Err(self.shape_err("[C, T]", format!("{:?}", input.shape)));
                }
                let (c, t) = (input.shape[0], input.shape[1]);
                let n_off = offsets.len();
                let mut out = Tensor::zeros(&[c * n_off, t]);
                for (j, &off) in offsets.iter().enumerate() {
                    for ch in 0..c {
                        let dst = (j * c + ch) * t;
                        for frame in 0..t {
                            let src = (frame as i64 + off).clamp(0, t as i64 - 1) as usize;
                            out.data[dst + frame] = input.data[ch * t + src];
                        }
                    }
                }
                self.cache = Some(Cache::TdnnSplice {
                    channels: c,
                    frames: t,
                });
                Ok(out)
            }
        }
    }

    /// Propagate `grad_out` back through the cached forward pass,
    /// accumulating parameter gradients; returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "backward before forward in layer {}",
                self.name
            ))
        })?;
        match (&self.spec, cache) {
            (
                LayerSpec::Conv1d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    ..
                },
                Cache::Conv1d {
                    padded,
                    in_ch: cin,
                    padded_len,
                    in_len,
                    pad_left,
                    out_len,
                },
            ) => {
                debug_assert_eq!(*in_ch, cin);
                self.backward_conv1d(
                    grad_out, &padded, *in_ch, *out_ch, *kernel, *stride, padded_len,
                    in_len, pad_left, out_len,
                )
            }
            (
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    dilation,
                    ..
                },
                Cache::Conv2d {
                    padded,
                    in_ch: cin,
                    ph,
                    pw,
                    h,
                    w,
                    pad_top,
                    pad_left,
                },
            ) => {
                debug_assert_eq!(*in_ch, cin);
                self.backward_conv2d(
                    grad_out, &padded, *in_ch, *out_ch, *kernel, *dilation, ph, pw, h, w,
                    pad_top, pad_left,
                )
            }
            (LayerSpec::Linear { in_dim, out_dim }, Cache::Linear { input }) => {
                let (wp, bp) = self.params.split_at_mut(1);
                let wp = &mut wp[0];
                let bp = &mut bp[0];
                let mut grad_in = Tensor::zeros(&[*in_dim]);
                for o in 0..*out_dim {
                    let g = grad_out.data[o];
                    bp.grad.data[o] += g;
                    let wrow = &wp.value.data[o * in_dim..(o + 1) * in_dim];
                    for i in 0..*in_dim {
                        grad_in.data[i] += g * wrow[i];
                    }
                    let grow = &mut wp.grad.data[o * in_dim..(o + 1) * in_dim];
                    for i in 0..*in_dim {
                        grow[i] += g * input.data[i];
                    }
                }
                Ok(grad_in)
            }
            (LayerSpec::Relu, Cache::Relu { input }) => {
                let mut grad_in = grad_out.clone();
                for (g, &x) in grad_in.data.iter_mut().zip(input.data.iter()) {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                }
                Ok(grad_in)
            }
            (LayerSpec::Sigmoid, Cache::Sigmoid { output }) => {
                let mut grad_in = grad_out.clone();
                for (g, &s) in grad_in.data.iter_mut().zip(output.data.iter()) {
                    *g *= s * (1.0 - s);
                }
                Ok(grad_in)
            }
            (LayerSpec::GlobalAvgPool, Cache::GlobalAvgPool { channels, frames }) => {
                let mut grad_in = Tensor::zeros(&[channels, frames]);
                for c in 0..channels {
                    let g = grad_out.data[c] / frames as f64;
                    for t in 0..frames {
                        grad_in.data[c * frames + t] = g;
                    }
                }
                Ok(grad_in)
            }
            (LayerSpec::TdnnSplice { offsets }, Cache::TdnnSplice { channels, frames }) => {
                let mut grad_in = Tensor::zeros(&[channels, frames]);
                for (j, &off) in offsets.iter().enumerate() {
                    for c in 0..channels {
                        let src = (j * channels + c) * frames;
                        for t in 0..frames {
                            let idx =
                                (t as i64 + off).clamp(0, frames as i64 - 1) as usize;
                            grad_in.data[c * frames + idx] += grad_out.data[src + t];
                        }
                    }
                }
                Ok(grad_in)
            }
            _ => Err(Error::InvalidArgument(format!(
                "cache/spec mismatch in layer {}",
                self.name
            ))),
        }
    }

    fn forward_conv1d(
        &mut self,
        input: &Tensor,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Tensor> {
        if input.shape.len() != 2 || input.shape[0] != in_ch {
            return Err(self.shape_err(
                format!("[{}, T]", in_ch),
                format!("{:?}", input.shape),
            ));
        }
        let in_len = input.shape[1];
        let (pad_left, pad_right) = match padding {
            Padding::Valid => (0, 0),
            Padding::SameZero => {
                let total = kernel - 1;
                (total / 2, total - total / 2)
            }
        };
        let padded_len = in_len + pad_left + pad_right;
        if padded_len < kernel {
            return Err(self.shape_err(
                format!("T >= {}", kernel),
                format!("T = {}", in_len),
            ));
        }
        let out_len = (padded_len - kernel) / stride + 1;

        let mut padded = vec![0.0f64; in_ch * padded_len];
        for c in 0..in_ch {
            padded[c * padded_len + pad_left..c * padded_len + pad_left + in_len]
                .copy_from_slice(&input.data[c * in_len..(c + 1) * in_len]);
        }

        let w = &self.params[0].value.data;
        let b = &self.params[1].value.data;
        let mut out = Tensor::zeros(&[out_ch, out_len]);
        out.data
            .par_chunks_mut(out_len)
            .enumerate()
            .for_each(|(co, orow)| {
                orow.iter_mut().for_each(|v| *v = b[co]);
                for ci in 0..in_ch {
                    let irow = &padded[ci * padded_len..(ci + 1) * padded_len];
                    let wrow = &w[(co * in_ch + ci) * kernel..(co * in_ch + ci + 1) * kernel];
                    for (k, &wk) in wrow.iter().enumerate() {
                        if wk == 0.0 {
                            continue;
                        }
                        for (t, o) in orow.iter_mut().enumerate() {
                            *o += wk * irow[t * stride + k];
                        }
                    }
                }
            });

        self.cache = Some(Cache::Conv1d {
            padded,
            in_ch,
            padded_len,
            in_len,
            pad_left,
            out_len,
        });
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_conv1d(
        &mut self,
        grad_out: &Tensor,
        padded: &[f64],
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padded_len: usize,
        in_len: usize,
        pad_left: usize,
        out_len: usize,
    ) -> Result<Tensor> {
        if grad_out.shape != vec![out_ch, out_len] {
            return Err(self.shape_err(
                format!("[{}, {}]", out_ch, out_len),
                format!("{:?}", grad_out.shape),
            ));
        }
        // Bias and weight gradients, parallel over output channels.
        let gw = &mut self.params[0].grad.data;
        gw.par_chunks_mut(in_ch * kernel)
            .enumerate()
            .for_each(|(co, gwc)| {
                let gout = &grad_out.data[co * out_len..(co + 1) * out_len];
                for ci in 0..in_ch {
                    let irow = &padded[ci * padded_len..(ci + 1) * padded_len];
                    for k in 0..kernel {
                        let mut acc = 0.0;
                        for (t, &g) in gout.iter().enumerate() {
                            acc += g * irow[t * stride + k];
                        }
                        gwc[ci * kernel + k] += acc;
                    }
                }
            });
        for co in 0..out_ch {
            let gout = &grad_out.data[co * out_len..(co + 1) * out_len];
            self.params[1].grad.data[co] += gout.iter().sum::<f64>();
        }

        // Input gradient, parallel over input channels.
        let w = &self.params[0].value.data;
        let mut grad_padded = vec![0.0f64; in_ch * padded_len];
        grad_padded
            .par_chunks_mut(padded_len)
            .enumerate()
            .for_each(|(ci, gp)| {
                for co in 0..out_ch {
                    let gout = &grad_out.data[co * out_len..(co + 1) * out_len];
                    let wrow = &w[(co * in_ch + ci) * kernel..(co * in_ch + ci + 1) * kernel];
                    for (k, &wk) in wrow.iter().enumerate() {
                        if wk == 0.0 {
                            continue;
                        }
                        for (t, &g) in gout.iter().enumerate() {
                            gp[t * stride + k] += wk * g;
                        }
                    }
                }
            });

        let mut grad_in = Tensor::zeros(&[in_ch, in_len]);
        for c in 0..in_ch {
            grad_in.data[c * in_len..(c + 1) * in_len].copy_from_slice(
                &grad_padded[c * padded_len + pad_left..c * padded_len + pad_left + in_len],
            );
        }
        Ok(grad_in)
    }

    fn forward_conv2d(
        &mut self,
        input: &Tensor,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        dilation: (usize, usize),
        padding: Padding,
    ) -> Result<Tensor> {
        if input.shape.len() != 3 || input.shape[0] != in_ch {
            return Err(self.shape_err(
                format!("[{}, H, W]", in_ch),
                format!("{:?}", input.shape),
            ));
        }
        let (h, w) = (input.shape[1], input.shape[2]);
        let span_h = (kernel.0 - 1) * dilation.0;
        let span_w = (kernel.1 - 1) * dilation.1;
        let (pad_top, pad_bot, pad_left, pad_right) = match padding {
            Padding::Valid => (0, 0, 0, 0),
            Padding::SameZero => (span_h / 2, span_h - span_h / 2, span_w / 2, span_w - span_w / 2),
        };
        let ph = h + pad_top + pad_bot;
        let pw = w + pad_left + pad_right;
        if ph < span_h + 1 || pw < span_w + 1 {
            return Err(self.shape_err(
                format!("H >= {}, W >= {}", span_h + 1, span_w + 1),
                format!("H = {}, W = {}", h, w),
            ));
        }
        let oh = ph - span_h;
        let ow = pw - span_w;

        let mut padded = vec![0.0f64; in_ch * ph * pw];
        for c in 0..in_ch {
            for y in 0..h {
                let src = (c * h + y) * w;
                let dst = (c * ph + y + pad_top) * pw + pad_left;
                padded[dst..dst + w].copy_from_slice(&input.data[src..src + w]);
            }
        }

        let wt = &self.params[0].value.data;
        let b = &self.params[1].value.data;
        let mut out = Tensor::zeros(&[out_ch, oh, ow]);
        out.data
            .par_chunks_mut(oh * ow)
            .enumerate()
            .for_each(|(co, oplane)| {
                oplane.iter_mut().for_each(|v| *v = b[co]);
                for ci in 0..in_ch {
                    let iplane = &padded[ci * ph * pw..(ci + 1) * ph * pw];
                    let wbase = ((co * in_ch) + ci) * kernel.0 * kernel.1;
                    for ky in 0..kernel.0 {
                        for kx in 0..kernel.1 {
                            let wk = wt[wbase + ky * kernel.1 + kx];
                            if wk == 0.0 {
                                continue;
                            }
                            let yoff = ky * dilation.0;
                            let xoff = kx * dilation.1;
                            for y in 0..oh {
                                let irow = &iplane[(y + yoff) * pw + xoff..];
                                let orow = &mut oplane[y * ow..(y + 1) * ow];
                                for (o, &iv) in orow.iter_mut().zip(irow.iter()) {
                                    *o += wk * iv;
                                }
                            }
                        }
                    }
                }
            });

        self.cache = Some(Cache::Conv2d {
            padded,
            in_ch,
            ph,
            pw,
            h,
            w,
            pad_top,
            pad_left,
        });
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_conv2d(
        &mut self,
        grad_out: &Tensor,
        padded: &[f64],
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        dilation: (usize, usize),
        ph: usize,
        pw: usize,
        h: usize,
        w: usize,
        pad_top: usize,
        pad_left: usize,
    ) -> Result<Tensor> {
        let span_h = (kernel.0 - 1) * dilation.0;
        let span_w = (kernel.1 - 1) * dilation.1;
        let oh = ph - span_h;
        let ow = pw - span_w;
        if grad_out.shape != vec![out_ch, oh, ow] {
            return Err(self.shape_err(
                format!("[{}, {}, {}]", out_ch, oh, ow),
                format!("{:?}", grad_out.shape),
            ));
        }

        let gw = &mut self.params[0].grad.data;
        gw.par_chunks_mut(in_ch * kernel.0 * kernel.1)
            .enumerate()
            .for_each(|(co, gwc)| {
                let gplane = &grad_out.data[co * oh * ow..(co + 1) * oh * ow];
                for ci in 0..in_ch {
                    let iplane = &padded[ci * ph * pw..(ci + 1) * ph * pw];
                    for ky in 0..kernel.0 {
                        for kx in 0..kernel.1 {
                            let yoff = ky * dilation.0;
                            let xoff = kx * dilation.1;
                            let mut acc = 0.0;
                            for y in 0..oh {
                                let irow = &iplane[(y + yoff) * pw + xoff..];
                                let grow = &gplane[y * ow..(y + 1) * ow];
                                for (&g, &iv) in grow.iter().zip(irow.iter()) {
                                    acc += g * iv;
                                }
                            }
                            gwc[ci * kernel.0 * kernel.1 + ky * kernel.1 + kx] += acc;
                        }
                    }
                }
            });
        for co in 0..out_ch {
            let gplane = &grad_out.data[co * oh * ow..(co + 1) * oh * ow];
            self.params[1].grad.data[co] += gplane.iter().sum::<f64>();
        }

        let wt = &self.params[0].value.data;
        let mut grad_padded = vec![0.0f64; in_ch * ph * pw];
        grad_padded
            .par_chunks_mut(ph * pw)
            .enumerate()
            .for_each(|(ci, gp)| {
                for co in 0..out_ch {
                    let gplane = &grad_out.data[co * oh * ow..(co + 1) * oh * ow];
                    let wbase = ((co * in_ch) + ci) * kernel.0 * kernel.1;
                    for ky in 0..kernel.0 {
                        for kx in 0..kernel.1 {
                            let wk = wt[wbase + ky * kernel.1 + kx];
                            if wk == 0.0 {
                                continue;
                            }
                            let yoff = ky * dilation.0;
                            let xoff = kx * dilation.1;
                            for y in 0..oh {
                                let grow = &gplane[y * ow..(y + 1) * ow];
                                let prow = &mut gp[(y + yoff) * pw + xoff..(y + yoff) * pw + xoff + ow];
                                for (p, &g) in prow.iter_mut().zip(grow.iter()) {
                                    *p += wk * g;
                                }
                            }
                        }
                    }
                }
            });

        let mut grad_in = Tensor::zeros(&[in_ch, h, w]);
        for c in 0..in_ch {
            for y in 0..h {
                let src = (c * ph + y + pad_top) * pw + pad_left;
                let dst = (c * h + y) * w;
                grad_in.data[dst..dst + w].copy_from_slice(&grad_padded[src..src + w]);
            }
        }
        Ok(grad_in)
    }

    fn forward_linear(&mut self, input: &Tensor, in_dim: usize, out_dim: usize) -> Result<Tensor> {
        if input.numel() != in_dim {
            return Err(self.shape_err(
                format!("[{}]", in_dim),
                format!("{:?}", input.shape),
            ));
        }
        let w = &self.params[0].value.data;
        let b = &self.params[1].value.data;
        let mut out = Tensor::zeros(&[out_dim]);
        for o in 0..out_dim {
            let wrow = &w[o * in_dim..(o + 1) * in_dim];
            let mut acc = b[o];
            for (wv, iv) in wrow.iter().zip(input.data.iter()) {
                acc += wv * iv;
            }
            out.data[o] = acc;
        }
        self.cache = Some(Cache::Linear {
            input: input.clone(),
        });
        Ok(out)
    }
}
