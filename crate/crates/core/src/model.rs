//! Hybrid CNN-ViT restoration network: a strided convolutional encoder, a
//! transformer bottleneck over patch tokens, and a transpose-convolution
//! decoder with skip concatenations, closed by a sigmoid output head.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::seeds::derive_seed;
use crate::tensor::{
    conv2d, conv2d_transpose, concat_last_axis, multi_head_attention, AttentionParams,
    AttentionSpec, ConvSpec, DiffTensor,
};

pub use crate::tensor::Padding;

/// Forward-pass mode; dropout is active only in [`Mode::Train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

fn default_skips() -> Vec<String> {
    vec!["enc_conv3".to_string(), "enc_conv1".to_string()]
}

/// Architecture hyperparameters. `patch_px` is measured in input pixels;
/// on the 4×-downsampled feature map the effective patch is `patch_px / 4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub img_size: (usize, usize),
    pub patch_px: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub mlp_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub encoder_channels: Vec<usize>,
    pub encoder_strides: Vec<usize>,
    /// Channel width of the 1×1 projection in front of the patch embedding.
    /// Keeps the token dimension (and the embedding matrix) small enough to
    /// stay near the reference parameter budget.
    pub vit_in_channels: usize,
    pub decoder_channels: Vec<usize>,
    #[serde(default = "default_skips")]
    pub skip_sources: Vec<String>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            img_size: (256, 256),
            patch_px: 32,
            embed_dim: 256,
            num_heads: 4,
            mlp_dim: 1024,
            num_layers: 2,
            dropout: 0.1,
            encoder_channels: vec![32, 64, 64, 128, 128],
            encoder_strides: vec![2, 2, 1, 1, 1],
            vit_in_channels: 32,
            decoder_channels: vec![128, 64, 32],
            skip_sources: default_skips(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Tiny 32×32 variant exercising every layer family; used by the
    /// gradient-check suite.
    pub fn reduced(seed: u64) -> Self {
        Self {
            img_size: (32, 32),
            patch_px: 8,
            embed_dim: 16,
            num_heads: 2,
            mlp_dim: 32,
            num_layers: 1,
            dropout: 0.1,
            encoder_channels: vec![4, 8, 8, 12, 12],
            encoder_strides: vec![2, 2, 1, 1, 1],
            vit_in_channels: 4,
            decoder_channels: vec![8, 6, 4],
            skip_sources: default_skips(),
            seed,
        }
    }

    /// Small 64×64 variant that trains in minutes on a CPU.
    pub fn toy(seed: u64) -> Self {
        Self {
            img_size: (64, 64),
            patch_px: 16,
            embed_dim: 64,
            num_heads: 4,
            mlp_dim: 128,
            num_layers: 2,
            dropout: 0.1,
            encoder_channels: vec![8, 16, 16, 32, 32],
            encoder_strides: vec![2, 2, 1, 1, 1],
            vit_in_channels: 8,
            decoder_channels: vec![32, 16, 8],
            skip_sources: default_skips(),
            seed,
        }
    }

    pub fn downsample(&self) -> usize {
        self.encoder_strides.iter().product()
    }

    /// Spatial size of the encoder output.
    pub fn feature_size(&self) -> (usize, usize) {
        let d = self.downsample();
        (self.img_size.0 / d, self.img_size.1 / d)
    }

    /// Patch edge on the feature map (input-pixel patch over downsampling).
    pub fn feature_patch(&self) -> usize {
        self.patch_px / self.downsample()
    }

    pub fn token_grid(&self) -> (usize, usize) {
        (
            self.img_size.0 / self.patch_px,
            self.img_size.1 / self.patch_px,
        )
    }

    pub fn num_patches(&self) -> usize {
        let (gh, gw) = self.token_grid();
        gh * gw
    }

    pub fn token_dim(&self) -> usize {
        let fp = self.feature_patch();
        fp * fp * self.vit_in_channels
    }

    /// Channels of the bottleneck output map after token reshape.
    pub fn vit_out_channels(&self) -> usize {
        let fp = self.feature_patch();
        self.embed_dim / (fp * fp)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.img_size;
        if h == 0 || w == 0 {
            return Err(Error::Config("img_size must be positive".into()));
        }
        if self.encoder_channels.is_empty()
            || self.encoder_channels.len() != self.encoder_strides.len()
        {
            return Err(Error::Config(
                "encoder_channels and encoder_strides must be non-empty and equally long".into(),
            ));
        }
        if self.downsample() != 4 {
            return Err(Error::Config(format!(
                "encoder strides must downsample by exactly 4 (decoder upsamples 2×2), got {}",
                self.downsample()
            )));
        }
        if self.patch_px == 0 || h % self.patch_px != 0 || w % self.patch_px != 0 {
            return Err(Error::Config(format!(
                "img_size {h}x{w} must be divisible by patch_px {}",
                self.patch_px
            )));
        }
        if self.patch_px % self.downsample() != 0 {
            return Err(Error::Config(format!(
                "patch_px {} must be divisible by the encoder downsampling {}",
                self.patch_px,
                self.downsample()
            )));
        }
        if self.embed_dim == 0 || self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} must be a positive multiple of num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        let fp = self.feature_patch();
        if fp == 0 {
            return Err(Error::Config("feature-space patch collapsed to zero".into()));
        }
        if self.embed_dim % (fp * fp) != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} must be divisible by feature patch area {} to reshape tokens back to a map",
                self.embed_dim,
                fp * fp
            )));
        }
        if self.num_layers == 0 || self.mlp_dim == 0 || self.vit_in_channels == 0 {
            return Err(Error::Config("transformer dims must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if self.decoder_channels.len() != 3 {
            return Err(Error::Config(format!(
                "decoder needs exactly 3 stages, got {}",
                self.decoder_channels.len()
            )));
        }
        if self.skip_sources.len() != 2 {
            return Err(Error::Config("exactly two skip sources are required".into()));
        }
        let (fh, _) = self.feature_size();
        for (i, name) in self.skip_sources.iter().enumerate() {
            let stage = self.encoder_stage_index(name)?;
            let res = self.encoder_stage_resolution(stage);
            let need = fh * (1 << i);
            if res != need {
                return Err(Error::Config(format!(
                    "skip source {name} has resolution {res}, decoder stage {} needs {need}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    fn encoder_stage_index(&self, name: &str) -> Result<usize> {
        name.strip_prefix("enc_conv")
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&i| i >= 1 && i <= self.encoder_channels.len())
            .map(|i| i - 1)
            .ok_or_else(|| Error::Config(format!("unknown skip source '{name}'")))
    }

    /// Height of stage `i`'s output (square inputs assumed for skips).
    fn encoder_stage_resolution(&self, stage: usize) -> usize {
        let mut res = self.img_size.0;
        for &s in &self.encoder_strides[..=stage] {
            res /= s;
        }
        res
    }
}

/// ViT token count for a config; `(img / patch_px)²` on square inputs.
pub fn count_receptive_tokens(config: &ModelConfig) -> usize {
    config.num_patches()
}

/// Named parameter set of one model instance.
#[derive(Clone)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: BTreeMap<String, DiffTensor>,
}

impl ModelParams {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &BTreeMap<String, DiffTensor> {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut BTreeMap<String, DiffTensor> {
        &mut self.tensors
    }

    pub fn from_parts(config: ModelConfig, tensors: BTreeMap<String, DiffTensor>) -> Self {
        Self { config, tensors }
    }

    pub fn get(&self, name: &str) -> Result<&DiffTensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("model parameter '{name}' is missing")))
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    /// Drop gradient buffers on every parameter.
    pub fn clear_grads(&self) {
        for t in self.tensors.values() {
            t.clear_grad();
        }
    }
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// He-uniform draw for convolution kernels.
    fn conv(&mut self, kh: usize, kw: usize, cin: usize, cout: usize) -> Result<DiffTensor> {
        let limit = (6.0 / (kh * kw * cin) as f64).sqrt();
        let vals = (0..kh * kw * cin * cout)
            .map(|_| self.rng.random_range(-limit..limit))
            .collect();
        DiffTensor::parameter(vec![kh, kw, cin, cout], vals)
    }

    /// He-uniform draw for transpose-convolution kernels ([kh,kw,cout,cin]).
    fn tconv(&mut self, kh: usize, kw: usize, cout: usize, cin: usize) -> Result<DiffTensor> {
        let limit = (6.0 / (kh * kw * cin) as f64).sqrt();
        let vals = (0..kh * kw * cout * cin)
            .map(|_| self.rng.random_range(-limit..limit))
            .collect();
        DiffTensor::parameter(vec![kh, kw, cout, cin], vals)
    }

    /// N(0, 0.02) draw for transformer and linear weights.
    fn normal(&mut self, shape: Vec<usize>) -> Result<DiffTensor> {
        let n: usize = shape.iter().product();
        let vals = (0..n).map(|_| 0.02 * self.gaussian()).collect();
        DiffTensor::parameter(shape, vals)
    }

    fn zeros(&mut self, n: usize) -> Result<DiffTensor> {
        DiffTensor::parameter(vec![n], vec![0.0; n])
    }

    fn ones(&mut self, n: usize) -> Result<DiffTensor> {
        DiffTensor::parameter(vec![n], vec![1.0; n])
    }

    fn gaussian(&mut self) -> f64 {
        let u1: f64 = loop {
            let u: f64 = self.rng.random();
            if u > f64::MIN_POSITIVE {
                break u;
            }
        };
        let u2: f64 = self.rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Initialize every layer of the architecture, deterministically in
/// `config.seed`.
pub fn build_model(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut init = Init::new(config.seed);
    let mut t = BTreeMap::new();

    let mut cin = 3usize;
    for (i, &cout) in config.encoder_channels.iter().enumerate() {
        t.insert(format!("enc_conv{}.weight", i + 1), init.conv(3, 3, cin, cout)?);
        t.insert(format!("enc_conv{}.bias", i + 1), init.zeros(cout)?);
        cin = cout;
    }

    t.insert(
        "vit_reduce.weight".into(),
        init.conv(1, 1, cin, config.vit_in_channels)?,
    );
    t.insert("vit_reduce.bias".into(), init.zeros(config.vit_in_channels)?);
    t.insert(
        "vit_patch.weight".into(),
        init.normal(vec![config.token_dim(), config.embed_dim])?,
    );
    t.insert("vit_patch.bias".into(), init.zeros(config.embed_dim)?);
    t.insert(
        "vit_pos".into(),
        init.normal(vec![config.num_patches(), config.embed_dim])?,
    );

    let e = config.embed_dim;
    for l in 0..config.num_layers {
        let p = |suffix: &str| format!("vit_l{l}_{suffix}");
        t.insert(p("ln1.gamma"), init.ones(e)?);
        t.insert(p("ln1.beta"), init.zeros(e)?);
        for proj in ["wq", "wk", "wv", "wo"] {
            t.insert(p(&format!("attn.{proj}")), init.normal(vec![e, e])?);
        }
        for bias in ["bq", "bk", "bv", "bo"] {
            t.insert(p(&format!("attn.{bias}")), init.zeros(e)?);
        }
        t.insert(p("ln2.gamma"), init.ones(e)?);
        t.insert(p("ln2.beta"), init.zeros(e)?);
        t.insert(p("mlp.w1"), init.normal(vec![e, config.mlp_dim])?);
        t.insert(p("mlp.b1"), init.zeros(config.mlp_dim)?);
        t.insert(p("mlp.w2"), init.normal(vec![config.mlp_dim, e])?);
        t.insert(p("mlp.b2"), init.zeros(e)?);
    }

    let skip_ch = |name: &str| -> Result<usize> {
        Ok(config.encoder_channels[config.encoder_stage_index(name)?])
    };
    let dec = &config.decoder_channels;
    let d1_in = config.vit_out_channels() + skip_ch(&config.skip_sources[0])?;
    let d2_in = dec[0] + skip_ch(&config.skip_sources[1])?;
    t.insert("dec_tconv1.weight".into(), init.tconv(3, 3, dec[0], d1_in)?);
    t.insert("dec_tconv1.bias".into(), init.zeros(dec[0])?);
    t.insert("dec_tconv2.weight".into(), init.tconv(3, 3, dec[1], d2_in)?);
    t.insert("dec_tconv2.bias".into(), init.zeros(dec[1])?);
    t.insert("dec_tconv3.weight".into(), init.tconv(3, 3, dec[2], dec[1])?);
    t.insert("dec_tconv3.bias".into(), init.zeros(dec[2])?);
    t.insert("final_conv.weight".into(), init.conv(3, 3, dec[2], 3)?);
    t.insert("final_conv.bias".into(), init.zeros(3)?);

    Ok(ModelParams { config: config.clone(), tensors: t })
}

fn expect_shape(stage: &str, t: &DiffTensor, shape: &[usize]) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Dimension(format!(
            "{stage}: produced {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Full forward pass: encoder → patch tokens → transformer bottleneck →
/// decoder with skip concatenations → sigmoid RGB output. `dropout_seed`
/// makes training-mode dropout replayable; it is unused in inference mode.
pub fn forward(
    params: &ModelParams,
    input: &ImageTensor,
    mode: Mode,
    dropout_seed: u64,
) -> Result<DiffTensor> {
    let config = &params.config;
    let (h, w) = config.img_size;
    if input.height() != h || input.width() != w || input.channels() != 3 {
        return Err(Error::Dimension(format!(
            "input is {}x{}x{}, model expects {h}x{w}x3",
            input.height(),
            input.width(),
            input.channels()
        )));
    }
    if input.min() < 0.0 || input.max() > 1.0 {
        return Err(Error::Parameter("input intensities must lie in [0,1]".into()));
    }
    let training = mode == Mode::Train;

    let mut x = DiffTensor::constant(vec![h, w, 3], input.data().to_vec())?;
    let mut stages: BTreeMap<String, DiffTensor> = BTreeMap::new();
    let mut cin = 3usize;
    for (i, (&cout, &stride)) in config
        .encoder_channels
        .iter()
        .zip(&config.encoder_strides)
        .enumerate()
    {
        let name = format!("enc_conv{}", i + 1);
        let spec = ConvSpec::same(3, stride, cin, cout);
        x = conv2d(
            &x,
            params.get(&format!("{name}.weight"))?,
            params.get(&format!("{name}.bias"))?,
            &spec,
        )?
        .relu();
        stages.insert(name, x.clone());
        cin = cout;
    }
    let (fh, fw) = config.feature_size();
    expect_shape("encoder output", &x, &[fh, fw, cin])?;

    // Patch embedding: 1×1 channel reduction, patch flatten, linear
    // projection, learned positional offsets.
    let reduced = conv2d(
        &x,
        params.get("vit_reduce.weight")?,
        params.get("vit_reduce.bias")?,
        &ConvSpec::same(1, 1, cin, config.vit_in_channels),
    )?;
    let fp = config.feature_patch();
    let tokens = reduced.patchify(fp)?;
    expect_shape("patchify", &tokens, &[config.num_patches(), config.token_dim()])?;
    let mut tokens = tokens
        .linear(params.get("vit_patch.weight")?, params.get("vit_patch.bias")?)?
        .add(params.get("vit_pos")?)?;

    let attn_spec = AttentionSpec::new(config.embed_dim, config.num_heads, config.dropout)?;
    for l in 0..config.num_layers {
        let p = |suffix: &str| format!("vit_l{l}_{suffix}");
        let normed = tokens.layer_norm(
            params.get(&p("ln1.gamma"))?,
            params.get(&p("ln1.beta"))?,
            1e-5,
        )?;
        let attn_params = AttentionParams {
            wq: params.get(&p("attn.wq"))?.clone(),
            bq: params.get(&p("attn.bq"))?.clone(),
            wk: params.get(&p("attn.wk"))?.clone(),
            bk: params.get(&p("attn.bk"))?.clone(),
            wv: params.get(&p("attn.wv"))?.clone(),
            bv: params.get(&p("attn.bv"))?.clone(),
            wo: params.get(&p("attn.wo"))?.clone(),
            bo: params.get(&p("attn.bo"))?.clone(),
        };
        let attn_out = multi_head_attention(
            &normed,
            &attn_spec,
            &attn_params,
            Some((derive_seed(dropout_seed, l as u64, 0), training)),
        )?;
        tokens = tokens.add(&attn_out)?;
        let normed = tokens.layer_norm(
            params.get(&p("ln2.gamma"))?,
            params.get(&p("ln2.beta"))?,
            1e-5,
        )?;
        let mlp = normed
            .linear(params.get(&p("mlp.w1"))?, params.get(&p("mlp.b1"))?)?
            .relu()
            .linear(params.get(&p("mlp.w2"))?, params.get(&p("mlp.b2"))?)?
            .dropout(config.dropout, derive_seed(dropout_seed, l as u64, 1), training)?;
        tokens = tokens.add(&mlp)?;
    }

    // Tokens back to a spatial map; the bottleneck output replaces the CNN
    // features on the decoder path (skips reinject encoder detail).
    let (gh, gw) = config.token_grid();
    let vit_map = tokens.unpatchify(gh, gw, fp, config.vit_out_channels())?;
    expect_shape("bottleneck map", &vit_map, &[fh, fw, config.vit_out_channels()])?;

    let dec = &config.decoder_channels;
    let skip0 = stages
        .get(&config.skip_sources[0])
        .ok_or_else(|| Error::Config(format!("missing stage {}", config.skip_sources[0])))?;
    let skip1 = stages
        .get(&config.skip_sources[1])
        .ok_or_else(|| Error::Config(format!("missing stage {}", config.skip_sources[1])))?;

    let d1_in = concat_last_axis(&[&vit_map, skip0])?;
    let d1 = conv2d_transpose(
        &d1_in,
        params.get("dec_tconv1.weight")?,
        params.get("dec_tconv1.bias")?,
        &ConvSpec::same(3, 2, *d1_in.shape().last().unwrap(), dec[0]),
    )?
    .relu();
    expect_shape("decoder stage 1", &d1, &[fh * 2, fw * 2, dec[0]])?;

    let d2_in = concat_last_axis(&[&d1, skip1])?;
    let d2 = conv2d_transpose(
        &d2_in,
        params.get("dec_tconv2.weight")?,
        params.get("dec_tconv2.bias")?,
        &ConvSpec::same(3, 2, *d2_in.shape().last().unwrap(), dec[1]),
    )?
    .relu();
    expect_shape("decoder stage 2", &d2, &[h, w, dec[1]])?;

    let d3 = conv2d_transpose(
        &d2,
        params.get("dec_tconv3.weight")?,
        params.get("dec_tconv3.bias")?,
        &ConvSpec::same(3, 1, dec[1], dec[2]),
    )?
    .relu();
    expect_shape("decoder stage 3", &d3, &[h, w, dec[2]])?;

    let out = conv2d(
        &d3,
        params.get("final_conv.weight")?,
        params.get("final_conv.bias")?,
        &ConvSpec::same(3, 1, dec[2], 3),
    )?
    .sigmoid();
    expect_shape("output head", &out, &[h, w, 3])?;
    Ok(out)
}

/// Inference forward returning a plain image.
pub fn restore(params: &ModelParams, input: &ImageTensor) -> Result<ImageTensor> {
    let out = forward(params, input, Mode::Infer, 0)?;
    let (h, w) = params.config.img_size;
    ImageTensor::new(h, w, 3, out.values().to_vec())
}
