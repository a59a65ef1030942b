//! Gradient verification entry points: one check per differentiable tensor
//! operation, plus a full-pipeline check that finite-differences every
//! parameter of a toy episode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{backward, Tape, Var};
use crate::encoding::{kernel_tracked, KernelConfig};
use crate::error::Result;
use crate::fewshot::pn_episode;
use crate::gradcheck::{finite_diff, grad_rel_err, DEFAULT_H};
use crate::optim::ParamRegistry;
use crate::segnet::PnModel;
use crate::tensor::Tensor;

use super::config::TrainConfig;
use super::episode::{sample_episode, SplitConfig};
use super::synth::{standard_spec, synth_dataset};

/// Acceptance tolerance for all gradient checks.
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Debug)]
pub struct OpCheck {
    pub name: String,
    pub rel_err: f64,
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Random values bounded away from zero, for ops with kinks at the origin.
fn rand_tensor_offset(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        sign * rng.gen_range(0.2..1.0)
    })
}

/// Check d(sum(weight * op(x)))/dx against central differences.
fn check_op(
    name: &str,
    x: Tensor<f64>,
    op: impl Fn(&Var<f64>) -> Var<f64>,
) -> OpCheck {
    let out_shape = {
        let tape = Tape::new();
        op(&tape.leaf(x.clone(), true)).shape()
    };
    let mut wrng = ChaCha8Rng::seed_from_u64(0xBEEF);
    let weight = rand_tensor(&mut wrng, &out_shape);
    let loss = |x: &Tensor<f64>| -> (Tape<f64>, Var<f64>, Var<f64>) {
        let tape = Tape::new();
        let v = tape.leaf(x.clone(), true);
        let w = tape.constant(weight.clone());
        let l = op(&v).mul(&w).unwrap().sum();
        (tape, v, l)
    };
    let (_tape, v, l) = loss(&x);
    let grads = backward(&l).unwrap();
    let analytic = grads.get(&v);
    let fd = finite_diff(
        |x| {
            let (_t, _v, l) = loss(x);
            l.value().at(0, 0)
        },
        &x,
        DEFAULT_H,
    );
    OpCheck {
        name: name.into(),
        rel_err: grad_rel_err(&analytic, &fd),
    }
}

/// One finite-difference check per differentiable tensor operation.
pub fn check_ops() -> Vec<OpCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut out = Vec::new();
    let a = rand_tensor(&mut rng, &[4, 3]);
    let b = rand_tensor(&mut rng, &[4, 3]);
    let row = rand_tensor(&mut rng, &[1, 3]);
    let pos = Tensor::from_fn(&[4, 3], |i| 0.3 + 0.1 * (i as f64));
    let off = rand_tensor_offset(&mut rng, &[4, 3]);

    {
        let b = b.clone();
        out.push(check_op("add", a.clone(), move |v| {
            v.add(&v.tape().constant(b.clone())).unwrap()
        }));
    }
    {
        let b = b.clone();
        out.push(check_op("sub", a.clone(), move |v| {
            v.tape().constant(b.clone()).sub(v).unwrap()
        }));
    }
    {
        let b = b.clone();
        out.push(check_op("mul", a.clone(), move |v| {
            v.mul(&v.tape().constant(b.clone())).unwrap()
        }));
    }
    {
        let row = row.clone();
        out.push(check_op("mul_row_broadcast", a.clone(), move |v| {
            v.mul(&v.tape().constant(row.clone())).unwrap()
        }));
    }
    {
        let a2 = a.clone();
        out.push(check_op("mul_row_broadcast_grad", row.clone(), move |v| {
            v.tape().constant(a2.clone()).mul(v).unwrap()
        }));
    }
    out.push(check_op("scale", a.clone(), |v| v.scale(1.7)));
    out.push(check_op("neg", a.clone(), |v| v.neg()));
    {
        let m = rand_tensor(&mut rng, &[3, 5]);
        out.push(check_op("matmul_lhs", a.clone(), move |v| {
            v.matmul(&v.tape().constant(m.clone())).unwrap()
        }));
    }
    {
        let m = rand_tensor(&mut rng, &[5, 4]);
        out.push(check_op("matmul_rhs", a.clone(), move |v| {
            v.tape().constant(m.clone()).matmul(v).unwrap()
        }));
    }
    out.push(check_op("transpose", a.clone(), |v| v.transpose().unwrap()));
    out.push(check_op("abs", off.clone(), |v| v.abs()));
    out.push(check_op("relu", off.clone(), |v| v.relu()));
    out.push(check_op("exp", a.clone(), |v| v.exp()));
    out.push(check_op("ln", pos.clone(), |v| v.ln()));
    out.push(check_op("sin", a.clone(), |v| v.sin()));
    out.push(check_op("cos", a.clone(), |v| v.cos()));
    out.push(check_op("sigmoid", a.clone(), |v| v.sigmoid()));
    out.push(check_op("powi_abs", off.clone(), |v| v.powi_abs(3)));
    out.push(check_op("softmax_rows", a.clone(), |v| v.softmax_rows()));
    {
        let gamma = rand_tensor(&mut rng, &[1, 3]);
        let beta = rand_tensor(&mut rng, &[1, 3]);
        let (g2, b2) = (gamma.clone(), beta.clone());
        out.push(check_op("layer_norm_x", a.clone(), move |v| {
            let t = v.tape();
            v.layer_norm(&t.constant(g2.clone()), &t.constant(b2.clone()), 1e-5)
                .unwrap()
        }));
        let a2 = a.clone();
        let b3 = beta.clone();
        out.push(check_op("layer_norm_gamma", gamma.clone(), move |v| {
            let t = v.tape();
            t.constant(a2.clone())
                .layer_norm(v, &t.constant(b3.clone()), 1e-5)
                .unwrap()
        }));
        let a3 = a.clone();
        let g3 = gamma.clone();
        out.push(check_op("layer_norm_beta", beta, move |v| {
            let t = v.tape();
            t.constant(a3.clone())
                .layer_norm(&t.constant(g3.clone()), v, 1e-5)
                .unwrap()
        }));
    }
    {
        let x = rand_tensor(&mut rng, &[8, 3]);
        out.push(check_op("max_pool_stride", x, |v| {
            v.max_pool_stride(3).unwrap()
        }));
    }
    out.push(check_op("gather_rows", a.clone(), |v| {
        v.gather_rows(&[2, 0, 0, 3, 1]).unwrap()
    }));
    out.push(check_op("weighted_gather_rows", a.clone(), |v| {
        v.weighted_gather_rows(&[0, 1, 2, 3, 1, 2], &[0.5, 0.3, 0.2, 0.7, 0.2, 0.1], 3)
            .unwrap()
    }));
    out.push(check_op("repeat_rows_interleave", a.clone(), |v| {
        v.repeat_rows_interleave(3)
    }));
    out.push(check_op("row_l2_normalize", off.clone(), |v| {
        v.row_l2_normalize(1e-8)
    }));
    out.push(check_op("concat_rows", a.clone(), |v| {
        let c = v.tape().constant(Tensor::ones(&[2, 3]));
        Var::concat_rows(&[v.clone(), c]).unwrap()
    }));
    out.push(check_op("concat_cols", a.clone(), |v| {
        let c = v.tape().constant(Tensor::ones(&[4, 2]));
        Var::concat_cols(&[c, v.clone()]).unwrap()
    }));
    {
        // sum already produces a scalar; wrap it through mul with a 1x1 weight.
        out.push(check_op("sum", a.clone(), |v| v.sum()));
    }
    {
        let labels = vec![0usize, 2, 1, 2];
        out.push(check_op("cross_entropy_mean", a.clone(), move |v| {
            v.cross_entropy_mean(&labels).unwrap()
        }));
    }
    {
        // Learnable-exponent kernel: both the input and the exponent.
        let cfg = KernelConfig::default();
        let cfg2 = cfg.clone();
        out.push(check_op("kernel_learnable_z", off.clone(), move |v| {
            let p = v.tape().leaf(Tensor::scalar(1.3), true);
            kernel_tracked(v, &cfg2, Some(&p)).unwrap()
        }));
        let z = off.clone();
        out.push(check_op("kernel_learnable_p", Tensor::scalar(1.3), move |v| {
            let zt = v.tape().leaf(z.clone(), true);
            kernel_tracked(&zt, &cfg, Some(v)).unwrap()
        }));
    }
    out
}

/// The toy episode setup shared by the full-pipeline check.
pub fn toy_pipeline() -> Result<(TrainConfig, PnModel<f64>, crate::fewshot::Episode<f64>)> {
    let tcfg = TrainConfig {
        n_query: 1,
        encoder_layers: 2,
        channels: vec![6, 8],
        k_neighbors: 4,
        pool_stride: 8,
        ..TrainConfig::default()
    };
    let net = tcfg.network()?;
    let mut model = PnModel::<f64>::init(net, 12345)?;
    // w5 initializes to zero, which would make the upstream app gradients
    // trivially zero; fill it so the check exercises every path.
    let w5 = model.params.get_mut("app.w5").unwrap();
    let shape = w5.shape().to_vec();
    let filled: Vec<f64> = (0..w5.len())
        .map(|i| 0.05 + 0.01 * (i % 7) as f64)
        .collect();
    *w5 = Tensor::new(shape, filled)?;
    let ds = synth_dataset(&standard_spec(64, 0.01), 5, 777)?;
    let ep = sample_episode(&ds, &SplitConfig::standard().seen, 2, 1, 1, 31)?;
    Ok((tcfg, model, ep))
}

fn pipeline_loss(
    params: &ParamRegistry<f64>,
    tcfg: &TrainConfig,
    ep: &crate::fewshot::Episode<f64>,
) -> Result<f64> {
    let net = tcfg.network()?;
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let out = pn_episode(&tape, &bound, &net, ep, true)?;
    Ok(out.loss.value().at(0, 0))
}

/// Finite-difference every parameter of the full pipeline (backbone +
/// push-pull + cross entropy) on a 64-point 2-way 1-shot toy episode.
pub fn check_full_pipeline() -> Result<Vec<OpCheck>> {
    let (tcfg, model, ep) = toy_pipeline()?;
    let net = tcfg.network()?;

    let tape = Tape::new();
    let bound = model.params.bind(&tape);
    let out = pn_episode(&tape, &bound, &net, &ep, true)?;
    let grads = backward(&out.loss)?;
    let named = bound.gradients(&grads);

    let mut checks = Vec::new();
    for (name, value) in model.params.iter() {
        let fd = finite_diff(
            |x| {
                let mut p = model.params.clone();
                *p.get_mut(name).unwrap() = x.clone();
                pipeline_loss(&p, &tcfg, &ep).unwrap()
            },
            value,
            DEFAULT_H,
        );
        checks.push(OpCheck {
            name: name.clone(),
            rel_err: grad_rel_err(&named[name], &fd),
        });
    }
    Ok(checks)
}
