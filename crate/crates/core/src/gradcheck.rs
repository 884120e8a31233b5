//! Finite-difference verification of every differentiable operation.
//!
//! The oracle is independent of the backward pass by construction: it only
//! ever evaluates forward passes, comparing `(f(x+ε) - f(x-ε)) / 2ε`
//! against the gradients the tape produces. Cases use fixed seeds so a
//! passing suite is reproducible bit-for-bit.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fixtures::text_like_image;
use crate::loss::{composite_loss, perceptual_loss, ssim_differentiable, LossWeights, PerceptualExtractor};
use crate::model::{build_model, forward, Mode, ModelConfig};
use crate::tensor::{
    concat_last_axis, conv2d, conv2d_transpose, multi_head_attention, AttentionParams,
    AttentionSpec, ConvSpec, DiffTensor, Padding,
};

/// Maximum relative error tolerated for individual tensor ops.
pub const OP_TOLERANCE: f64 = 1e-4;
/// Maximum relative error tolerated for the end-to-end model check.
pub const END_TO_END_TOLERANCE: f64 = 1e-3;
/// Central-difference step.
pub const FD_EPSILON: f64 = 1e-5;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub checks: usize,
}

/// `|a - n| / max(|a|, |n|, 1)`: relative for O(1)+ gradients, absolute for
/// vanishing ones.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

pub fn worst(reports: &[CheckReport]) -> f64 {
    reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max)
}

/// Deterministic probe bounded away from zero, alternating in sign, used to
/// collapse tensor outputs into a scalar that exercises the full Jacobian.
fn probe(t: &DiffTensor) -> DiffTensor {
    let weights: Vec<f64> = (0..t.numel())
        .map(|i| {
            let frac = ((i as f64 + 1.0) * 12.9898).sin().abs().fract();
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (0.25 + 0.75 * frac)
        })
        .collect();
    let w = DiffTensor::constant(vec![t.numel()], weights).expect("probe shape");
    t.reshape(vec![t.numel()])
        .expect("flatten")
        .mul(&w)
        .expect("probe mul")
        .sum()
}

/// Uniform draw with |v| in [0.1, 1.5]: keeps relu/abs inputs away from
/// their kinks at the finite-difference scale.
fn sample_signed(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.random_range(0.1..1.5);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Uniform draw in [0.15, 0.85] for image-like inputs.
fn sample_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.15..0.85)).collect()
}

struct Case {
    name: &'static str,
    seeds: u64,
    build: Box<dyn Fn(&mut ChaCha8Rng) -> Vec<(Vec<usize>, Vec<f64>)>>,
    loss: Box<dyn Fn(&[DiffTensor]) -> DiffTensor>,
}

fn run_case(case: &Case) -> CheckReport {
    let mut max_rel = 0.0f64;
    let mut checks = 0usize;
    for seed in 0..case.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ seed);
        let inputs = (case.build)(&mut rng);
        let params: Vec<DiffTensor> = inputs
            .iter()
            .map(|(shape, vals)| DiffTensor::parameter(shape.clone(), vals.clone()).unwrap())
            .collect();
        let loss = (case.loss)(&params);
        loss.backward().expect("gradcheck backward");
        let grads: Vec<Vec<f64>> = params
            .iter()
            .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
            .collect();
        for (pi, (_, vals)) in inputs.iter().enumerate() {
            for j in 0..vals.len() {
                let eval = |delta: f64| -> f64 {
                    let tensors: Vec<DiffTensor> = inputs
                        .iter()
                        .enumerate()
                        .map(|(qi, (s, v))| {
                            let mut v = v.clone();
                            if qi == pi {
                                v[j] += delta;
                            }
                            DiffTensor::parameter(s.clone(), v).unwrap()
                        })
                        .collect();
                    (case.loss)(&tensors).item().expect("scalar loss")
                };
                let numeric = (eval(FD_EPSILON) - eval(-FD_EPSILON)) / (2.0 * FD_EPSILON);
                max_rel = max_rel.max(relative_error(grads[pi][j], numeric));
                checks += 1;
            }
        }
    }
    CheckReport {
        name: case.name.to_string(),
        max_rel_err: max_rel,
        checks,
    }
}

fn unary_case(
    name: &'static str,
    seeds: u64,
    shape: Vec<usize>,
    f: fn(&DiffTensor) -> DiffTensor,
) -> Case {
    let shape2 = shape.clone();
    Case {
        name,
        seeds,
        build: Box::new(move |rng| vec![(shape.clone(), sample_signed(rng, shape.iter().product()))]),
        loss: Box::new(move |t| {
            let _ = &shape2;
            probe(&f(&t[0]))
        }),
    }
}

fn binary_case(
    name: &'static str,
    seeds: u64,
    shape: Vec<usize>,
    f: fn(&DiffTensor, &DiffTensor) -> DiffTensor,
) -> Case {
    let n: usize = shape.iter().product();
    let shape_b = shape.clone();
    Case {
        name,
        seeds,
        build: Box::new(move |rng| {
            vec![
                (shape_b.clone(), sample_signed(rng, n)),
                (shape_b.clone(), sample_signed(rng, n)),
            ]
        }),
        loss: Box::new(move |t| probe(&f(&t[0], &t[1]))),
    }
}

fn all_cases() -> Vec<Case> {
    let mut cases = vec![
        unary_case("relu", 20, vec![3, 4], |x| x.relu()),
        unary_case("sigmoid", 20, vec![3, 4], |x| x.sigmoid()),
        unary_case("abs", 20, vec![3, 4], |x| x.abs()),
        unary_case("sum", 20, vec![2, 5], |x| x.sum()),
        unary_case("mean", 20, vec![2, 5], |x| x.mean()),
        unary_case("scale_add_scalar", 20, vec![3, 3], |x| {
            x.scale(-1.7).add_scalar(0.4)
        }),
        unary_case("softmax_rows", 20, vec![4, 6], |x| x.softmax_rows().unwrap()),
        unary_case("reshape", 20, vec![3, 4], |x| x.reshape(vec![2, 6]).unwrap()),
        unary_case("slice_last_axis", 20, vec![3, 6], |x| {
            x.slice_last_axis(1, 3).unwrap()
        }),
        unary_case("patchify_unpatchify", 20, vec![4, 4, 2], |x| {
            x.patchify(2).unwrap().unpatchify(2, 2, 2, 2).unwrap()
        }),
        binary_case("add", 20, vec![2, 3, 2], |a, b| a.add(b).unwrap()),
        binary_case("sub", 20, vec![2, 3, 2], |a, b| a.sub(b).unwrap()),
        binary_case("multiply", 20, vec![2, 3, 2], |a, b| a.mul(b).unwrap()),
    ];

    cases.push(Case {
        name: "divide",
        seeds: 20,
        build: Box::new(|rng| {
            let num = sample_signed(rng, 12);
            let den: Vec<f64> = (0..12)
                .map(|_| {
                    let mag = rng.random_range(0.5..1.5);
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            vec![(vec![3, 4], num), (vec![3, 4], den)]
        }),
        loss: Box::new(|t| probe(&t[0].div(&t[1]).unwrap())),
    });

    cases.push(Case {
        name: "concat_channels",
        seeds: 20,
        build: Box::new(|rng| {
            vec![
                (vec![3, 2, 2], sample_signed(rng, 12)),
                (vec![3, 2, 1], sample_signed(rng, 6)),
                (vec![3, 2, 3], sample_signed(rng, 18)),
            ]
        }),
        loss: Box::new(|t| {
            let refs: Vec<&DiffTensor> = t.iter().collect();
            probe(&concat_last_axis(&refs).unwrap())
        }),
    });

    cases.push(Case {
        name: "linear",
        seeds: 20,
        build: Box::new(|rng| {
            vec![
                (vec![4, 3], sample_signed(rng, 12)),
                (vec![3, 5], sample_signed(rng, 15)),
                (vec![5], sample_signed(rng, 5)),
            ]
        }),
        loss: Box::new(|t| probe(&t[0].linear(&t[1], &t[2]).unwrap())),
    });

    cases.push(Case {
        name: "matmul",
        seeds: 20,
        build: Box::new(|rng| {
            vec![
                (vec![3, 4], sample_signed(rng, 12)),
                (vec![4, 2], sample_signed(rng, 8)),
            ]
        }),
        loss: Box::new(|t| probe(&t[0].matmul(&t[1]).unwrap())),
    });

    cases.push(Case {
        name: "matmul_nt",
        seeds: 20,
        build: Box::new(|rng| {
            vec![
                (vec![3, 4], sample_signed(rng, 12)),
                (vec![5, 4], sample_signed(rng, 20)),
            ]
        }),
        loss: Box::new(|t| probe(&t[0].matmul_nt(&t[1]).unwrap())),
    });

    cases.push(Case {
        name: "layer_norm",
        seeds: 20,
        build: Box::new(|rng| {
            let gamma: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..1.5)).collect();
            vec![
                (vec![3, 5], sample_signed(rng, 15)),
                (vec![5], gamma),
                (vec![5], sample_signed(rng, 5)),
            ]
        }),
        loss: Box::new(|t| probe(&t[0].layer_norm(&t[1], &t[2], 1e-5).unwrap())),
    });

    cases.push(Case {
        name: "dropout_train",
        seeds: 20,
        build: Box::new(|rng| vec![(vec![4, 5], sample_signed(rng, 20))]),
        loss: Box::new(|t| probe(&t[0].dropout(0.3, 0xD20, true).unwrap())),
    });

    for (name, stride, padding, hw) in [
        ("conv2d_same_s1", 1usize, Padding::Same, (5usize, 4usize)),
        ("conv2d_same_s2", 2, Padding::Same, (6, 6)),
        ("conv2d_valid", 1, Padding::Valid, (6, 5)),
    ] {
        let (h, w) = hw;
        cases.push(Case {
            name,
            seeds: 20,
            build: Box::new(move |rng| {
                vec![
                    (vec![h, w, 2], sample_signed(rng, h * w * 2)),
                    (vec![3, 3, 2, 3], sample_signed(rng, 54)),
                    (vec![3], sample_signed(rng, 3)),
                ]
            }),
            loss: Box::new(move |t| {
                let spec = ConvSpec {
                    kernel_h: 3,
                    kernel_w: 3,
                    stride,
                    padding,
                    in_channels: 2,
                    out_channels: 3,
                };
                probe(&conv2d(&t[0], &t[1], &t[2], &spec).unwrap())
            }),
        });
    }

    for (name, stride) in [("conv2d_transpose_s1", 1usize), ("conv2d_transpose_s2", 2)] {
        cases.push(Case {
            name,
            seeds: 20,
            build: Box::new(|rng| {
                vec![
                    (vec![3, 3, 2], sample_signed(rng, 18)),
                    (vec![3, 3, 3, 2], sample_signed(rng, 54)),
                    (vec![3], sample_signed(rng, 3)),
                ]
            }),
            loss: Box::new(move |t| {
                let spec = ConvSpec::same(3, stride, 2, 3);
                probe(&conv2d_transpose(&t[0], &t[1], &t[2], &spec).unwrap())
            }),
        });
    }

    for (name, dropout) in [
        ("multi_head_attention", None),
        ("multi_head_attention_dropout", Some((0xA77u64, true))),
    ] {
        cases.push(Case {
            name,
            seeds: 20,
            build: Box::new(|rng| {
                let d = 8;
                let mut inputs = vec![(vec![5, d], sample_signed(rng, 5 * d))];
                for _ in 0..4 {
                    inputs.push((vec![d, d], sample_signed(rng, d * d)));
                    inputs.push((vec![d], sample_signed(rng, d)));
                }
                inputs
            }),
            loss: Box::new(move |t| {
                let spec = AttentionSpec::new(8, 2, 0.25).unwrap();
                let params = AttentionParams {
                    wq: t[1].clone(),
                    bq: t[2].clone(),
                    wk: t[3].clone(),
                    bk: t[4].clone(),
                    wv: t[5].clone(),
                    bv: t[6].clone(),
                    wo: t[7].clone(),
                    bo: t[8].clone(),
                };
                probe(&multi_head_attention(&t[0], &spec, &params, dropout).unwrap())
            }),
        });
    }

    cases.push(Case {
        name: "ssim_differentiable",
        seeds: 4,
        build: Box::new(|rng| vec![(vec![12, 12, 3], sample_unit(rng, 12 * 12 * 3))]),
        loss: Box::new(|t| {
            let target = text_like_image(71, 12, 12, 3);
            ssim_differentiable(&t[0], &target, 1.0).unwrap()
        }),
    });

    cases.push(Case {
        name: "perceptual_loss",
        seeds: 4,
        build: Box::new(|rng| vec![(vec![12, 12, 3], sample_unit(rng, 12 * 12 * 3))]),
        loss: Box::new(|t| {
            let target = text_like_image(72, 12, 12, 3);
            let extractor = PerceptualExtractor::new();
            perceptual_loss(&t[0], &target, &extractor).unwrap()
        }),
    });

    cases.push(Case {
        name: "composite_loss",
        seeds: 3,
        build: Box::new(|rng| vec![(vec![16, 16, 3], sample_unit(rng, 16 * 16 * 3))]),
        loss: Box::new(|t| {
            let target = text_like_image(73, 16, 16, 3);
            let extractor = PerceptualExtractor::new();
            composite_loss(&t[0], &target, &LossWeights::default(), &extractor).unwrap()
        }),
    });

    cases
}

/// Check every differentiable op against central finite differences.
pub fn op_suite() -> Vec<CheckReport> {
    all_cases().iter().map(run_case).collect()
}

/// End-to-end check on the reduced 32×32 model: gradients of the composite
/// loss with respect to `per_family` randomly chosen parameters from every
/// layer family.
pub fn end_to_end(seed: u64, per_family: usize) -> Result<CheckReport> {
    let config = ModelConfig::reduced(seed);
    let params = build_model(&config)?;
    let input = text_like_image(seed ^ 0x11, 32, 32, 3);
    let target = text_like_image(seed ^ 0x22, 32, 32, 3);
    let extractor = PerceptualExtractor::new();
    let weights = LossWeights::default();
    let dropout_seed = 0xE2E;

    let loss = composite_loss(
        &forward(&params, &input, Mode::Train, dropout_seed)?,
        &target,
        &weights,
        &extractor,
    )?;
    loss.backward()?;

    let families = [
        "enc_conv", "vit_reduce", "vit_patch", "vit_pos", "ln", "attn", "mlp", "dec_tconv",
        "final_conv",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xFA111E5);
    let mut max_rel = 0.0f64;
    let mut checks = 0usize;
    for family in families {
        let members: Vec<String> = params
            .tensors()
            .keys()
            .filter(|n| n.contains(family))
            .cloned()
            .collect();
        assert!(!members.is_empty(), "family {family} has no parameters");
        for _ in 0..per_family {
            let name = &members[rng.random_range(0..members.len())];
            let tensor = params.get(name)?;
            let j = rng.random_range(0..tensor.numel());
            let analytic = tensor.grad().map_or(0.0, |g| g[j]);
            let eval = |delta: f64| -> Result<f64> {
                let mut perturbed = params.clone();
                let t = perturbed.get(name)?;
                let mut vals = t.values().to_vec();
                vals[j] += delta;
                let fresh = DiffTensor::parameter(t.shape().to_vec(), vals)?;
                perturbed.tensors_mut().insert(name.clone(), fresh);
                composite_loss(
                    &forward(&perturbed, &input, Mode::Train, dropout_seed)?,
                    &target,
                    &weights,
                    &extractor,
                )?
                .item()
            };
            let numeric = (eval(FD_EPSILON)? - eval(-FD_EPSILON)?) / (2.0 * FD_EPSILON);
            max_rel = max_rel.max(relative_error(analytic, numeric));
            checks += 1;
        }
    }
    Ok(CheckReport {
        name: "model_end_to_end".to_string(),
        max_rel_err: max_rel,
        checks,
    })
}
