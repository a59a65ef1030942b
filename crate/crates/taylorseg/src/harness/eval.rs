//! Evaluation runner: seeded episodes on a class split, per-episode JSON
//! metrics, and aggregate mean/std mIoU.

use serde::Serialize;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::fewshot::{miou, nn_episode, pn_episode};
use crate::optim::ParamRegistry;
use crate::segnet::{NetworkConfig, PnModel};

use super::derive_seed;
use super::episode::sample_episode;
use super::synth::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Nn,
    Pn,
    PnNoApp,
}

impl EvalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalMode::Nn => "nn",
            EvalMode::Pn => "pn",
            EvalMode::PnNoApp => "pn-no-app",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EpisodeMetrics {
    pub episode_id: u64,
    pub n_way: usize,
    pub k_shot: usize,
    pub seed: u64,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

#[derive(Debug)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeMetrics>,
    /// One JSON object per episode, in order.
    pub lines: Vec<String>,
    pub mean_miou: f64,
    pub std_miou: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    mode: EvalMode,
    dataset: &Dataset,
    classes: &[u32],
    net: &NetworkConfig,
    params: Option<&ParamRegistry<f64>>,
    n_episodes: usize,
    n_way: usize,
    k_shot: usize,
    n_query: usize,
    seed: u64,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::Config("n_episodes must be >= 1".into()));
    }
    let model = match mode {
        EvalMode::Nn => {
            if params.map(|p| !p.is_empty()).unwrap_or(false) {
                return Err(Error::Config(
                    "nn mode is parameter-free but parameters were supplied".into(),
                ));
            }
            None
        }
        EvalMode::Pn | EvalMode::PnNoApp => {
            let p = params.ok_or_else(|| {
                Error::Config("pn modes require checkpoint parameters".into())
            })?;
            Some(PnModel {
                cfg: net.clone(),
                params: p.clone(),
            })
        }
    };

    let mut episodes = Vec::with_capacity(n_episodes);
    let mut lines = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let ep_seed = derive_seed(seed, i as u64);
        let ep = sample_episode(dataset, classes, n_way, k_shot, n_query, ep_seed)?;
        let (pred, gt, loss) = match (&model, mode) {
            (None, _) => {
                let (pred, gt, _) = nn_episode(net, &ep)?;
                (pred, gt, None)
            }
            (Some(m), mode) => {
                let tape = Tape::new();
                let bound = m.params.bind(&tape);
                let use_app = mode == EvalMode::Pn;
                let out = pn_episode(&tape, &bound, net, &ep, use_app)?;
                let loss = out.loss.value().at(0, 0);
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "loss diverged in evaluation episode {i}"
                    )));
                }
                (out.pred, out.gt, Some(loss))
            }
        };
        let (per_class_iou, mean) = miou(&pred, &gt, n_way + 1)?;
        let metrics = EpisodeMetrics {
            episode_id: i as u64,
            n_way,
            k_shot,
            seed: ep_seed,
            per_class_iou,
            miou: mean,
            loss,
        };
        lines.push(serde_json::to_string(&metrics).expect("metrics serialization"));
        episodes.push(metrics);
    }

    let n = episodes.len() as f64;
    let mean_miou = episodes.iter().map(|e| e.miou).sum::<f64>() / n;
    let var = episodes
        .iter()
        .map(|e| (e.miou - mean_miou).powi(2))
        .sum::<f64>()
        / n;
    Ok(EvalReport {
        episodes,
        lines,
        mean_miou,
        std_miou: var.sqrt(),
    })
}
