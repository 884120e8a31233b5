//! 2-D convolution (cross-correlation) and its transpose.
//!
//! `conv2d` follows the deep-learning convention (no kernel flip).
//! `conv2d_transpose` is the exact linear adjoint of the `conv2d` that maps
//! `[H·s, W·s, Cout] -> [H, W, Cin]` with the same weights, which is what
//! the inner-product test in the suite verifies.

use crate::error::{Error, Result};

use super::DiffTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-filled so the output spatial size is `ceil(input / stride)`.
    Same,
    /// No padding; output is `floor((input - kernel) / stride) + 1`.
    Valid,
}

/// Geometry of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn same(kernel: usize, stride: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding: Padding::Same,
            in_channels,
            out_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h % 2 == 0 || self.kernel_w % 2 == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::Config(format!(
                "kernel dims must be odd and positive, got {}x{}",
                self.kernel_h, self.kernel_w
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Output size and leading pad for one spatial axis under this spec.
    fn out_and_pad(&self, input: usize, kernel: usize) -> (usize, usize) {
        match self.padding {
            Padding::Same => {
                let out = input.div_ceil(self.stride);
                let total = ((out - 1) * self.stride + kernel).saturating_sub(input);
                (out, total / 2)
            }
            Padding::Valid => {
                let out = (input - kernel) / self.stride + 1;
                (out, 0)
            }
        }
    }
}

fn image_dims(op: &str, t: &DiffTensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [h, w, c] => Ok((*h, *w, *c)),
        other => Err(Error::Dimension(format!("{op}: expected [H,W,C], got {other:?}"))),
    }
}

/// Strided cross-correlation of `input: [H,W,Cin]` with
/// `weights: [kh,kw,Cin,Cout]` plus `bias: [Cout]`.
pub fn conv2d(
    input: &DiffTensor,
    weights: &DiffTensor,
    bias: &DiffTensor,
    spec: &ConvSpec,
) -> Result<DiffTensor> {
    spec.validate()?;
    let (h, w, cin) = image_dims("conv2d input", input)?;
    let expect_w = [spec.kernel_h, spec.kernel_w, spec.in_channels, spec.out_channels];
    if weights.shape() != expect_w {
        return Err(Error::Dimension(format!(
            "conv2d weights shape {:?}, spec needs {:?}",
            weights.shape(),
            expect_w
        )));
    }
    if cin != spec.in_channels {
        return Err(Error::Dimension(format!(
            "conv2d input has {cin} channels, spec says {}",
            spec.in_channels
        )));
    }
    if bias.shape() != [spec.out_channels] {
        return Err(Error::Dimension(format!(
            "conv2d bias shape {:?}, expected [{}]",
            bias.shape(),
            spec.out_channels
        )));
    }
    if spec.padding == Padding::Valid && (h < spec.kernel_h || w < spec.kernel_w) {
        return Err(Error::Dimension(format!(
            "valid conv: kernel {}x{} exceeds input {h}x{w}",
            spec.kernel_h, spec.kernel_w
        )));
    }
    let (oh, pad_y) = spec.out_and_pad(h, spec.kernel_h);
    let (ow, pad_x) = spec.out_and_pad(w, spec.kernel_w);
    let cout = spec.out_channels;
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let stride = spec.stride;

    let mut values = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let out_base = (oy * ow + ox) * cout;
            values[out_base..out_base + cout].copy_from_slice(bias.values());
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad_y as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad_x as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let in_base = (iy as usize * w + ix as usize) * cin;
                    let w_base = (ky * kw + kx) * cin * cout;
                    for ci in 0..cin {
                        let x = input.values()[in_base + ci];
                        if x == 0.0 {
                            continue;
                        }
                        let w_row = &weights.values()[w_base + ci * cout..w_base + (ci + 1) * cout];
                        let out = &mut values[out_base..out_base + cout];
                        for (o, wv) in out.iter_mut().zip(w_row) {
                            *o += x * wv;
                        }
                    }
                }
            }
        }
    }

    let (pi, pw, pb) = (input.clone(), weights.clone(), bias.clone());
    Ok(DiffTensor::from_op(
        vec![oh, ow, cout],
        values,
        vec![input.clone(), weights.clone(), bias.clone()],
        move |up| {
            pb.accumulate_grad(|g| {
                for o in 0..oh * ow {
                    for co in 0..cout {
                        g[co] += up[o * cout + co];
                    }
                }
            });
            pi.accumulate_grad(|gi| {
                pw.accumulate_grad(|gw| {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let u = &up[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - pad_y as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * stride + kx) as isize - pad_x as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let in_base = (iy as usize * w + ix as usize) * cin;
                                    let w_base = (ky * kw + kx) * cin * cout;
                                    for ci in 0..cin {
                                        let x = pi.values()[in_base + ci];
                                        let w_row =
                                            &pw.values()[w_base + ci * cout..w_base + (ci + 1) * cout];
                                        let mut acc = 0.0;
                                        for (co, (uv, wv)) in u.iter().zip(w_row).enumerate() {
                                            acc += uv * wv;
                                            gw[w_base + ci * cout + co] += uv * x;
                                        }
                                        gi[in_base + ci] += acc;
                                    }
                                }
                            }
                        }
                    }
                });
            });
        },
    ))
}

/// Transposed convolution: maps `[H,W,Cin] -> [H·s, W·s, Cout]` with
/// `weights: [kh,kw,Cout,Cin]` plus `bias: [Cout]`. Ignoring bias, this is
/// the adjoint of [`conv2d`] with the same weight array, the roles of
/// in/out channels swapped, and `same` padding.
pub fn conv2d_transpose(
    input: &DiffTensor,
    weights: &DiffTensor,
    bias: &DiffTensor,
    spec: &ConvSpec,
) -> Result<DiffTensor> {
    spec.validate()?;
    if spec.padding != Padding::Same {
        return Err(Error::Config("conv2d_transpose supports same padding only".into()));
    }
    let (h, w, cin) = image_dims("conv2d_transpose input", input)?;
    let expect_w = [spec.kernel_h, spec.kernel_w, spec.out_channels, spec.in_channels];
    if weights.shape() != expect_w {
        return Err(Error::Dimension(format!(
            "conv2d_transpose weights shape {:?}, spec needs {:?}",
            weights.shape(),
            expect_w
        )));
    }
    if cin != spec.in_channels {
        return Err(Error::Dimension(format!(
            "conv2d_transpose input has {cin} channels, spec says {}",
            spec.in_channels
        )));
    }
    if bias.shape() != [spec.out_channels] {
        return Err(Error::Dimension(format!(
            "conv2d_transpose bias shape {:?}, expected [{}]",
            bias.shape(),
            spec.out_channels
        )));
    }
    let stride = spec.stride;
    let (oh, ow) = (h * stride, w * stride);
    let cout = spec.out_channels;
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    // Padding of the adjoint conv (the one mapping [oh,ow] -> [h,w]).
    let pad_y = (((h - 1) * stride + kh).saturating_sub(oh)) / 2;
    let pad_x = (((w - 1) * stride + kw).saturating_sub(ow)) / 2;

    let mut values = vec![0.0; oh * ow * cout];
    for chunk in values.chunks_exact_mut(cout) {
        chunk.copy_from_slice(bias.values());
    }
    for ty in 0..h {
        for tx in 0..w {
            let in_base = (ty * w + tx) * cin;
            for ky in 0..kh {
                let iy = (ty * stride + ky) as isize - pad_y as isize;
                if iy < 0 || iy >= oh as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (tx * stride + kx) as isize - pad_x as isize;
                    if ix < 0 || ix >= ow as isize {
                        continue;
                    }
                    let out_base = (iy as usize * ow + ix as usize) * cout;
                    let w_base = (ky * kw + kx) * cout * cin;
                    for co in 0..cout {
                        let w_row = &weights.values()[w_base + co * cin..w_base + (co + 1) * cin];
                        let x_row = &input.values()[in_base..in_base + cin];
                        let mut acc = 0.0;
                        for (xv, wv) in x_row.iter().zip(w_row) {
                            acc += xv * wv;
                        }
                        values[out_base + co] += acc;
                    }
                }
            }
        }
    }

    let (pi, pw, pb) = (input.clone(), weights.clone(), bias.clone());
    Ok(DiffTensor::from_op(
        vec![oh, ow, cout],
        values,
        vec![input.clone(), weights.clone(), bias.clone()],
        move |up| {
            pb.accumulate_grad(|g| {
                for o in 0..oh * ow {
                    for co in 0..cout {
                        g[co] += up[o * cout + co];
                    }
                }
            });
            pi.accumulate_grad(|gi| {
                pw.accumulate_grad(|gw| {
                    for ty in 0..h {
                        for tx in 0..w {
                            let in_base = (ty * w + tx) * cin;
                            for ky in 0..kh {
                                let iy = (ty * stride + ky) as isize - pad_y as isize;
                                if iy < 0 || iy >= oh as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (tx * stride + kx) as isize - pad_x as isize;
                                    if ix < 0 || ix >= ow as isize {
                                        continue;
                                    }
                                    let out_base = (iy as usize * ow + ix as usize) * cout;
                                    let w_base = (ky * kw + kx) * cout * cin;
                                    for co in 0..cout {
                                        let u = up[out_base + co];
                                        if u == 0.0 {
                                            continue;
                                        }
                                        let w_row =
                                            &pw.values()[w_base + co * cin..w_base + (co + 1) * cin];
                                        for ci in 0..cin {
                                            gi[in_base + ci] += u * w_row[ci];
                                            gw[w_base + co * cin + ci] +=
                                                u * pi.values()[in_base + ci];
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
            });
        },
    ))
}
