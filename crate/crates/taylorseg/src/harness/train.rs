//! Episodic training with alternating optimization: backbone parameters on
//! even iterations, push-pull parameters on odd ones (or everything jointly).

use serde::Serialize;

use crate::autodiff::{backward, Tape};
use crate::error::{Error, Result};
use crate::fewshot::pn_episode;
use crate::optim::{lr_schedule, AdamW};
use crate::segnet::{is_app_param, PnModel};

use super::config::{Alternation, TrainConfig};
use super::derive_seed;
use super::episode::{sample_episode, SplitConfig};
use super::synth::Dataset;

#[derive(Debug, Serialize)]
struct TrainLogLine<'a> {
    iter: u64,
    loss: f64,
    lr: f64,
    mode: &'a str,
}

pub struct TrainResult {
    pub model: PnModel<f64>,
    /// One JSON object per iteration.
    pub log: Vec<String>,
}

pub fn train_pn(
    dataset: &Dataset,
    split: &SplitConfig,
    tcfg: &TrainConfig,
) -> Result<TrainResult> {
    tcfg.validate()?;
    split.validate()?;
    let net = tcfg.network()?;
    let mut model = PnModel::<f64>::init(net.clone(), tcfg.seed)?;
    let mut opt_backbone = AdamW::new(tcfg.weight_decay);
    let mut opt_app = AdamW::new(tcfg.weight_decay);
    let mut log = Vec::with_capacity(tcfg.iterations as usize);

    for iter in 0..tcfg.iterations {
        let ep_seed = derive_seed(tcfg.seed, iter);
        let ep = sample_episode(
            dataset,
            &split.seen,
            tcfg.n_way,
            tcfg.k_shot,
            tcfg.n_query,
            ep_seed,
        )?;
        let tape = Tape::new();
        let bound = model.params.bind(&tape);
        let outcome = pn_episode(&tape, &bound, &net, &ep, true)?;
        let loss = outcome.loss.value().at(0, 0);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "loss diverged at iteration {iter}: {loss}"
            )));
        }
        let grads = backward(&outcome.loss)?;
        let named = bound.gradients(&grads);
        let lr = lr_schedule(iter, tcfg.lr, tcfg.half_every);
        let mode = match tcfg.alternation {
            Alternation::Joint => {
                opt_backbone.step(&mut model.params, &named, lr, |_| true)?;
                "joint"
            }
            Alternation::PerIter => {
                if iter % 2 == 0 {
                    opt_backbone.step(&mut model.params, &named, lr, |n| !is_app_param(n))?;
                    "backbone"
                } else {
                    opt_app.step(&mut model.params, &named, lr, is_app_param)?;
                    "app"
                }
            }
        };
        let line = TrainLogLine {
            iter,
            loss,
            lr,
            mode,
        };
        log.push(serde_json::to_string(&line).expect("log serialization"));
    }
    Ok(TrainResult { model, log })
}
