//! Elementwise, linear-algebra, and attention operations.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{check_same_shape, numel, DiffTensor};

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

impl DiffTensor {
    pub fn add(&self, other: &DiffTensor) -> Result<DiffTensor> {
        check_same_shape("add", self, other)?;
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| a + b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(DiffTensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone(), other.clone()],
            move |up| {
                pa.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
                pb.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
            },
        ))
    }

    pub fn sub(&self, other: &DiffTensor) -> Result<DiffTensor> {
        check_same_shape("sub", self, other)?;
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| a - b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(DiffTensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone(), other.clone()],
            move |up| {
                pa.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
                pb.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g -= u));
            },
        ))
    }

    pub fn mul(&self, other: &DiffTensor) -> Result<DiffTensor> {
        check_same_shape("multiply", self, other)?;
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| a * b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(DiffTensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone(), other.clone()],
            move |up| {
                pa.accumulate_grad(|g| {
                    for ((g, u), b) in g.iter_mut().zip(up).zip(pb.values()) {
                        *g += u * b;
                    }
                });
                pb.accumulate_grad(|g| {
                    for ((g, u), a) in g.iter_mut().zip(up).zip(pa.values()) {
                        *g += u * a;
                    }
                });
            },
        ))
    }

    /// Elementwise quotient; the denominator must be bounded away from zero.
    pub fn div(&self, other: &DiffTensor) -> Result<DiffTensor> {
        check_same_shape("divide", self, other)?;
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| a / b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(DiffTensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone(), other.clone()],
            move |up| {
                pa.accumulate_grad(|g| {
                    for ((g, u), b) in g.iter_mut().zip(up).zip(pb.values()) {
                        *g += u / b;
                    }
                });
                pb.accumulate_grad(|g| {
                    for (i, (g, u)) in g.iter_mut().zip(up).enumerate() {
                        let b = pb.values()[i];
                        *g -= u * pa.values()[i] / (b * b);
                    }
                });
            },
        ))
    }

    pub fn add_scalar(&self, c: f64) -> DiffTensor {
        let values = self.values().iter().map(|v| v + c).collect();
        let p = self.clone();
        DiffTensor::from_op(self.shape().to_vec(), values, vec![self.clone()], move |up| {
            p.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
        })
    }

    pub fn scale(&self, c: f64) -> DiffTensor {
        let values = self.values().iter().map(|v| v * c).collect();
        let p = self.clone();
        DiffTensor::from_op(self.shape().to_vec(), values, vec![self.clone()], move |up| {
            p.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u * c));
        })
    }

    pub fn relu(&self) -> DiffTensor {
        let values = self.values().iter().map(|v| v.max(0.0)).collect();
        let p = self.clone();
        DiffTensor::from_op(self.shape().to_vec(), values, vec![self.clone()], move |up| {
            p.accumulate_grad(|g| {
                for ((g, u), &x) in g.iter_mut().zip(up).zip(p.values()) {
                    if x > 0.0 {
                        *g += u;
                    }
                }
            });
        })
    }

    pub fn sigmoid(&self) -> DiffTensor {
        let values: Vec<f64> = self
            .values()
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let out_vals = values.clone();
        let p = self.clone();
        DiffTensor::from_op(self.shape().to_vec(), values, vec![self.clone()], move |up| {
            p.accumulate_grad(|g| {
                for ((g, u), &s) in g.iter_mut().zip(up).zip(&out_vals) {
                    *g += u * s * (1.0 - s);
                }
            });
        })
    }

    pub fn abs(&self) -> DiffTensor {
        let values = self.values().iter().map(|v| v.abs()).collect();
        let p = self.clone();
        DiffTensor::from_op(self.shape().to_vec(), values, vec![self.clone()], move |up| {
            p.accumulate_grad(|g| {
                for ((g, u), &x) in g.iter_mut().zip(up).zip(p.values()) {
                    *g += u * x.signum() * if x == 0.0 { 0.0 } else { 1.0 };
                }
            });
        })
    }

    pub fn sum(&self) -> DiffTensor {
        let total: f64 = self.values().iter().sum();
        let p = self.clone();
        DiffTensor::from_op(vec![1], vec![total], vec![self.clone()], move |up| {
            let u = up[0];
            p.accumulate_grad(|g| g.iter_mut().for_each(|g| *g += u));
        })
    }

    pub fn mean(&self) -> DiffTensor {
        let n = self.numel() as f64;
        let total: f64 = self.values().iter().sum::<f64>() / n;
        let p = self.clone();
        DiffTensor::from_op(vec![1], vec![total], vec![self.clone()], move |up| {
            let u = up[0] / n;
            p.accumulate_grad(|g| g.iter_mut().for_each(|g| *g += u));
        })
    }

    /// View with a new shape holding the same elements.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<DiffTensor> {
        if numel(&shape) != self.numel() {
            return Err(Error::Dimension(format!(
                "reshape: {:?} has {} elements, target {:?} needs {}",
                self.shape(),
                self.numel(),
                shape,
                numel(&shape)
            )));
        }
        let p = self.clone();
        Ok(DiffTensor::from_op(
            shape,
            self.values().to_vec(),
            vec![self.clone()],
            move |up| {
                p.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
            },
        ))
    }

    /// Inverted dropout driven by an explicit seed: in training mode kept
    /// activations are scaled by `1/(1-rate)`; in inference mode this is the
    /// identity.
    pub fn dropout(&self, rate: f64, seed: u64, training: bool) -> Result<DiffTensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!(
                "dropout rate must be in [0,1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(self.clone());
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask: Vec<f64> = (0..self.numel())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let values = self
            .values()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let p = self.clone();
        Ok(DiffTensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone()],
            move |up| {
                p.accumulate_grad(|g| {
                    for ((g, u), m) in g.iter_mut().zip(up).zip(&mask) {
                        *g += u * m;
                    }
                });
            },
        ))
    }
}

// ---------------------------------------------------------------------------
// Concatenation and slicing along the last axis
// ---------------------------------------------------------------------------

/// Concatenate along the last axis; all leading dimensions must agree.
/// For H×W×C inputs this is channel concatenation.
pub fn concat_last_axis(parts: &[&DiffTensor]) -> Result<DiffTensor> {
    if parts.is_empty() {
        return Err(Error::Parameter("concat of zero tensors".into()));
    }
    let rank = parts[0].shape().len();
    let lead = &parts[0].shape()[..rank - 1];
    for p in parts {
        if p.shape().len() != rank || &p.shape()[..rank - 1] != lead {
            return Err(Error::Dimension(format!(
                "concat: leading dims differ ({:?} vs {:?})",
                parts[0].shape(),
                p.shape()
            )));
        }
    }
    let widths: Vec<usize> = parts.iter().map(|p| *p.shape().last().unwrap()).collect();
    let out_w: usize = widths.iter().sum();
    let rows: usize = lead.iter().product();
    let mut values = Vec::with_capacity(rows * out_w);
    for r in 0..rows {
        for (p, &w) in parts.iter().zip(&widths) {
            values.extend_from_slice(&p.values()[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(out_w);
    let owned: Vec<DiffTensor> = parts.iter().map(|p| (*p).clone()).collect();
    let caps = owned.clone();
    let widths_c = widths.clone();
    Ok(DiffTensor::from_op(shape, values, owned, move |up| {
        for r in 0..rows {
            let mut off = 0;
            for (p, &w) in caps.iter().zip(&widths_c) {
                let src = &up[r * out_w + off..r * out_w + off + w];
                p.accumulate_grad(|g| {
                    g[r * w..(r + 1) * w]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(g, u)| *g += u);
                });
                off += w;
            }
        }
    }))
}

impl DiffTensor {
    /// Contiguous slice `[start, start+len)` of the last axis.
    pub fn slice_last_axis(&self, start: usize, len: usize) -> Result<DiffTensor> {
        let rank = self.shape().len();
        let width = *self.shape().last().ok_or_else(|| {
            Error::Dimension("slice_last_axis needs rank >= 1".into())
        })?;
        if start + len > width || len == 0 {
            return Err(Error::Dimension(format!(
                "slice [{start}, {}) exceeds last axis of {width}",
                start + len
            )));
        }
        let rows: usize = self.shape()[..rank - 1].iter().product();
        let mut values = Vec::with_capacity(rows * len);
        for r in 0..rows {
            values.extend_from_slice(&self.values()[r * width + start..r * width + start + len]);
        }
        let mut shape = self.shape()[..rank - 1].to_vec();
        shape.push(len);
        let p = self.clone();
        Ok(DiffTensor::from_op(shape, values, vec![self.clone()], move |up| {
            p.accumulate_grad(|g| {
                for r in 0..rows {
                    for j in 0..len {
                        g[r * width + start + j] += up[r * len + j];
                    }
                }
            });
        }))
    }
}

// ---------------------------------------------------------------------------
// Matrix products and row softmax
// ---------------------------------------------------------------------------

fn matrix_dims(op: &str, t: &DiffTensor) -> Result<(usize, usize)> {
    match t.shape() {
        [n, m] => Ok((*n, *m)),
        other => Err(Error::Dimension(format!("{op}: expected rank-2, got {other:?}"))),
    }
}

impl DiffTensor {
    /// `[n,k] · [k,m] -> [n,m]`.
    pub fn matmul(&self, rhs: &DiffTensor) -> Result<DiffTensor> {
        let (n, k) = matrix_dims("matmul lhs", self)?;
        let (k2, m) = matrix_dims("matmul rhs", rhs)?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul: inner dims {k} and {k2} differ"
            )));
        }
        let mut values = vec![0.0; n * m];
        for i in 0..n {
            for t in 0..k {
                let a = self.values()[i * k + t];
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.values()[t * m..(t + 1) * m];
                let out = &mut values[i * m..(i + 1) * m];
                for (o, b) in out.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        let (pa, pb) = (self.clone(), rhs.clone());
        Ok(DiffTensor::from_op(
            vec![n, m],
            values,
            vec![self.clone(), rhs.clone()],
            move |up| {
                // dA = U · Bᵀ
                pa.accumulate_grad(|g| {
                    for i in 0..n {
                        for t in 0..k {
                            let mut acc = 0.0;
                            let b_row = &pb.values()[t * m..(t + 1) * m];
                            let u_row = &up[i * m..(i + 1) * m];
                            for (u, b) in u_row.iter().zip(b_row) {
                                acc += u * b;
                            }
                            g[i * k + t] += acc;
                        }
                    }
                });
                // dB = Aᵀ · U
                pb.accumulate_grad(|g| {
                    for t in 0..k {
                        for i in 0..n {
                            let a = pa.values()[i * k + t];
                            if a == 0.0 {
                                continue;
                            }
                            let u_row = &up[i * m..(i + 1) * m];
                            let g_row = &mut g[t * m..(t + 1) * m];
                            for (gv, u) in g_row.iter_mut().zip(u_row) {
                                *gv += a * u;
                            }
                        }
                    }
                });
            },
        ))
    }

    /// `[n,k] · [m,k]ᵀ -> [n,m]` (used for Q·Kᵀ).
    pub fn matmul_nt(&self, rhs: &DiffTensor) -> Result<DiffTensor> {
        let (n, k) = matrix_dims("matmul_nt lhs", self)?;
        let (m, k2) = matrix_dims("matmul_nt rhs", rhs)?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul_nt: inner dims {k} and {k2} differ"
            )));
        }
        let mut values = vec![0.0; n * m];
        for i in 0..n {
            let a_row = &self.values()[i * k..(i + 1) * k];
            for j in 0..m {
                let b_row = &rhs.values()[j * k..(j + 1) * k];
                values[i * m + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        let (pa, pb) = (self.clone(), rhs.clone());
        Ok(DiffTensor::from_op(
            vec![n, m],
            values,
            vec![self.clone(), rhs.clone()],
            move |up| {
                // dA = U · B
                pa.accumulate_grad(|g| {
                    for i in 0..n {
                        for j in 0..m {
                            let u = up[i * m + j];
                            if u == 0.0 {
                                continue;
                            }
                            let b_row = &pb.values()[j * k..(j + 1) * k];
                            let g_row = &mut g[i * k..(i + 1) * k];
                            for (gv, b) in g_row.iter_mut().zip(b_row) {
                                *gv += u * b;
                            }
                        }
                    }
                });
                // dB = Uᵀ · A
                pb.accumulate_grad(|g| {
                    for j in 0..m {
                        for i in 0..n {
                            let u = up[i * m + j];
                            if u == 0.0 {
                                continue;
                            }
                            let a_row = &pa.values()[i * k..(i + 1) * k];
                            let g_row = &mut g[j * k..(j + 1) * k];
                            for (gv, a) in g_row.iter_mut().zip(a_row) {
                                *gv += u * a;
                            }
                        }
                    }
                });
            },
        ))
    }

    /// `x · W + b` for `x: [n,d]`, `W: [d,m]`, `b: [m]`.
    pub fn linear(&self, weight: &DiffTensor, bias: &DiffTensor) -> Result<DiffTensor> {
        let (_, m) = matrix_dims("linear weight", weight)?;
        if bias.shape() != [m] {
            return Err(Error::Dimension(format!(
                "linear bias shape {:?}, expected [{m}]",
                bias.shape()
            )));
        }
        let y = self.matmul(weight)?;
        let (n, _) = matrix_dims("linear input", self)?;
        // Broadcast-add the bias across rows.
        let mut values = y.values().to_vec();
        for r in 0..n {
            for j in 0..m {
                values[r * m + j] += bias.values()[j];
            }
        }
        let (py, pbias) = (y.clone(), bias.clone());
        Ok(DiffTensor::from_op(
            vec![n, m],
            values,
            vec![y, bias.clone()],
            move |up| {
                py.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
                pbias.accumulate_grad(|g| {
                    for r in 0..n {
                        for j in 0..m {
                            g[j] += up[r * m + j];
                        }
                    }
                });
            },
        ))
    }

    /// Numerically stable softmax over the last axis of a rank-2 tensor;
    /// every output row sums to 1.
    pub fn softmax_rows(&self) -> Result<DiffTensor> {
        let (n, m) = matrix_dims("softmax_rows", self)?;
        let mut values = vec![0.0; n * m];
        for i in 0..n {
            let row = &self.values()[i * m..(i + 1) * m];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                values[i * m + j] = e;
                denom += e;
            }
            for v in &mut values[i * m..(i + 1) * m] {
                *v /= denom;
            }
        }
        let soft = values.clone();
        let p = self.clone();
        Ok(DiffTensor::from_op(
            vec![n, m],
            values,
            vec![self.clone()],
            move |up| {
                p.accumulate_grad(|g| {
                    for i in 0..n {
                        let s = &soft[i * m..(i + 1) * m];
                        let u = &up[i * m..(i + 1) * m];
                        let dot: f64 = s.iter().zip(u).map(|(s, u)| s * u).sum();
                        for j in 0..m {
                            g[i * m + j] += s[j] * (u[j] - dot);
                        }
                    }
                });
            },
        ))
    }

    /// Normalize the last axis to zero mean / unit variance, then apply a
    /// learnable affine transform.
    pub fn layer_norm(&self, gamma: &DiffTensor, beta: &DiffTensor, eps: f64) -> Result<DiffTensor> {
        let d = *self
            .shape()
            .last()
            .ok_or_else(|| Error::Dimension("layer_norm needs rank >= 1".into()))?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::Dimension(format!(
                "layer_norm affine shapes {:?}/{:?}, expected [{d}]",
                gamma.shape(),
                beta.shape()
            )));
        }
        let rows = self.numel() / d;
        let mut values = vec![0.0; self.numel()];
        let mut xhat = vec![0.0; self.numel()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let x = &self.values()[r * d..(r + 1) * d];
            let mu = x.iter().sum::<f64>() / d as f64;
            let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..d {
                let h = (x[j] - mu) * inv;
                xhat[r * d + j] = h;
                values[r * d + j] = gamma.values()[j] * h + beta.values()[j];
            }
        }
        let (px, pg, pb) = (self.clone(), gamma.clone(), beta.clone());
        Ok(DiffTensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |up| {
                pb.accumulate_grad(|g| {
                    for r in 0..rows {
                        for j in 0..d {
                            g[j] += up[r * d + j];
                        }
                    }
                });
                pg.accumulate_grad(|g| {
                    for r in 0..rows {
                        for j in 0..d {
                            g[j] += up[r * d + j] * xhat[r * d + j];
                        }
                    }
                });
                px.accumulate_grad(|g| {
                    for r in 0..rows {
                        let mut mean_dh = 0.0;
                        let mut mean_dh_xhat = 0.0;
                        for j in 0..d {
                            let dh = up[r * d + j] * pg.values()[j];
                            mean_dh += dh;
                            mean_dh_xhat += dh * xhat[r * d + j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_xhat /= d as f64;
                        for j in 0..d {
                            let dh = up[r * d + j] * pg.values()[j];
                            g[r * d + j] +=
                                inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_xhat);
                        }
                    }
                });
            },
        ))
    }
}

// ---------------------------------------------------------------------------
// Patch extraction (token <-> feature-map layout)
// ---------------------------------------------------------------------------

impl DiffTensor {
    /// Split an `[H,W,C]` map into non-overlapping `patch×patch` blocks and
    /// flatten each to a row: output `[ (H/p)(W/p), p·p·C ]`, tokens in
    /// row-major grid order.
    pub fn patchify(&self, patch: usize) -> Result<DiffTensor> {
        let (h, w, c) = match self.shape() {
            [h, w, c] => (*h, *w, *c),
            other => {
                return Err(Error::Dimension(format!(
                    "patchify expects [H,W,C], got {other:?}"
                )))
            }
        };
        if patch == 0 || h % patch != 0 || w % patch != 0 {
            return Err(Error::Dimension(format!(
                "patch {patch} must divide spatial dims {h}x{w}"
            )));
        }
        let (gh, gw) = (h / patch, w / patch);
        let token_dim = patch * patch * c;
        let mut perm = Vec::with_capacity(self.numel());
        for gy in 0..gh {
            for gx in 0..gw {
                for py in 0..patch {
                    for px in 0..patch {
                        let base = ((gy * patch + py) * w + gx * patch + px) * c;
                        for ch in 0..c {
                            perm.push(base + ch);
                        }
                    }
                }
            }
        }
        self.gather(vec![gh * gw, token_dim], perm)
    }

    /// Inverse of [`DiffTensor::patchify`]: rows of `[N, p·p·C]` become an
    /// `[gh·p, gw·p, C]` map.
    pub fn unpatchify(&self, grid_h: usize, grid_w: usize, patch: usize, channels: usize) -> Result<DiffTensor> {
        let (n, d) = matrix_dims("unpatchify", self)?;
        if n != grid_h * grid_w || d != patch * patch * channels {
            return Err(Error::Dimension(format!(
                "unpatchify: tokens {:?} inconsistent with grid {grid_h}x{grid_w}, patch {patch}, channels {channels}",
                self.shape()
            )));
        }
        let (h, w) = (grid_h * patch, grid_w * patch);
        let mut perm = vec![0usize; self.numel()];
        for gy in 0..grid_h {
            for gx in 0..grid_w {
                let t = gy * grid_w + gx;
                for py in 0..patch {
                    for px in 0..patch {
                        for ch in 0..channels {
                            let src = t * d + (py * patch + px) * channels + ch;
                            let dst = ((gy * patch + py) * w + gx * patch + px) * channels + ch;
                            perm[dst] = src;
                        }
                    }
                }
            }
        }
        self.gather(vec![h, w, channels], perm)
    }

    /// out[i] = self[perm[i]]; `perm` must be a bijection.
    fn gather(&self, shape: Vec<usize>, perm: Vec<usize>) -> Result<DiffTensor> {
        debug_assert_eq!(perm.len(), self.numel());
        let values = perm.iter().map(|&i| self.values()[i]).collect();
        let p = self.clone();
        Ok(DiffTensor::from_op(shape, values, vec![self.clone()], move |up| {
            p.accumulate_grad(|g| {
                for (o, &src) in perm.iter().enumerate() {
                    g[src] += up[o];
                }
            });
        }))
    }
}

// ---------------------------------------------------------------------------
// Multi-head self-attention
// ---------------------------------------------------------------------------

/// Head layout for multi-head self-attention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionSpec {
    pub embed_dim: usize,
    pub num_heads: usize,
    pub dropout_rate: f64,
}

impl AttentionSpec {
    pub fn new(embed_dim: usize, num_heads: usize, dropout_rate: f64) -> Result<Self> {
        let spec = Self {
            embed_dim,
            num_heads,
            dropout_rate,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_heads == 0 {
            return Err(Error::Config("attention dims must be positive".into()));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0,1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}

/// Projection weights for one attention block.
#[derive(Clone)]
pub struct AttentionParams {
    pub wq: DiffTensor,
    pub bq: DiffTensor,
    pub wk: DiffTensor,
    pub bk: DiffTensor,
    pub wv: DiffTensor,
    pub bv: DiffTensor,
    pub wo: DiffTensor,
    pub bo: DiffTensor,
}

/// Scaled dot-product self-attention over `[N, D]` token rows: per head,
/// `softmax(QKᵀ/√head_dim)·V`, heads concatenated, output projection applied.
/// `dropout` is `(seed, training)`; the configured rate applies after the
/// output projection.
pub fn multi_head_attention(
    tokens: &DiffTensor,
    spec: &AttentionSpec,
    params: &AttentionParams,
    dropout: Option<(u64, bool)>,
) -> Result<DiffTensor> {
    spec.validate()?;
    let (_, d) = matrix_dims("attention tokens", tokens)?;
    if d != spec.embed_dim {
        return Err(Error::Config(format!(
            "token dim {d} does not match embed_dim {}",
            spec.embed_dim
        )));
    }
    let q = tokens.linear(&params.wq, &params.bq)?;
    let k = tokens.linear(&params.wk, &params.bk)?;
    let v = tokens.linear(&params.wv, &params.bv)?;
    let hd = spec.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut heads = Vec::with_capacity(spec.num_heads);
    for h in 0..spec.num_heads {
        let qh = q.slice_last_axis(h * hd, hd)?;
        let kh = k.slice_last_axis(h * hd, hd)?;
        let vh = v.slice_last_axis(h * hd, hd)?;
        let attn = qh.matmul_nt(&kh)?.scale(scale).softmax_rows()?;
        heads.push(attn.matmul(&vh)?);
    }
    let head_refs: Vec<&DiffTensor> = heads.iter().collect();
    let concat = concat_last_axis(&head_refs)?;
    let out = concat.linear(&params.wo, &params.bo)?;
    match dropout {
        Some((seed, training)) => out.dropout(spec.dropout_rate, seed, training),
        None => Ok(out),
    }
}
