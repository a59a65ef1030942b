//! Training configuration: plain key=value text in, validated struct out.

use indexmap::IndexMap;

use crate::encoding::{KernelConfig, PEConfig};
use crate::error::{Error, Result};
use crate::segnet::NetworkConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternation {
    /// Backbone on even iterations, push-pull on odd ones.
    PerIter,
    /// Every parameter every iteration (ablation).
    Joint,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub n_query: usize,
    pub iterations: u64,
    pub lr: f64,
    pub half_every: u64,
    pub weight_decay: f64,
    pub alternation: Alternation,
    pub seed: u64,
    /// Kernel choice: "learnable", "abf", or "rbf".
    pub kernel: String,
    pub encoder_layers: usize,
    pub channels: Vec<usize>,
    pub k_neighbors: usize,
    pub downsample_ratio: f64,
    pub pool_stride: usize,
    pub tau: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_way: 2,
            k_shot: 1,
            n_query: 2,
            iterations: 500,
            lr: 5e-4,
            half_every: 100,
            weight_decay: 0.01,
            alternation: Alternation::PerIter,
            seed: 0,
            kernel: "learnable".into(),
            encoder_layers: 3,
            channels: vec![32, 64, 96],
            k_neighbors: 16,
            downsample_ratio: 0.25,
            pool_stride: 32,
            tau: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn kernel_config(&self) -> Result<KernelConfig> {
        match self.kernel.as_str() {
            "learnable" => Ok(KernelConfig::default()),
            "abf" => Ok(KernelConfig::abf()),
            "rbf" => Ok(KernelConfig::rbf()),
            other => Err(Error::Config(format!(
                "unknown kernel '{other}' (expected learnable, abf, or rbf)"
            ))),
        }
    }

    pub fn network(&self) -> Result<NetworkConfig> {
        let cfg = NetworkConfig {
            encoder_layers: self.encoder_layers,
            downsample_ratio: self.downsample_ratio,
            k_neighbors: self.k_neighbors,
            channels: self.channels.clone(),
            kernel: self.kernel_config()?,
            pe: PEConfig::default(),
            pool_stride: self.pool_stride,
            tau: self.tau,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 1 || self.k_shot < 1 || self.n_query < 1 {
            return Err(Error::Config("n_way, k_shot, n_query must be >= 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.half_every < 1 {
            return Err(Error::Config("half_every must be >= 1".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        self.network().map(|_| ())
    }

    pub fn from_kv(kv: &IndexMap<String, String>) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (k, v) in kv {
            let bad = |what: &str| Error::Config(format!("bad value '{v}' for '{k}' ({what})"));
            match k.as_str() {
                "n_way" => cfg.n_way = v.parse().map_err(|_| bad("usize"))?,
                "k_shot" => cfg.k_shot = v.parse().map_err(|_| bad("usize"))?,
                "n_query" => cfg.n_query = v.parse().map_err(|_| bad("usize"))?,
                "iterations" => cfg.iterations = v.parse().map_err(|_| bad("u64"))?,
                "lr" => cfg.lr = v.parse().map_err(|_| bad("f64"))?,
                "half_every" => cfg.half_every = v.parse().map_err(|_| bad("u64"))?,
                "weight_decay" => cfg.weight_decay = v.parse().map_err(|_| bad("f64"))?,
                "alternation" => {
                    cfg.alternation = match v.as_str() {
                        "per-iter" => Alternation::PerIter,
                        "joint" => Alternation::Joint,
                        _ => return Err(bad("per-iter or joint")),
                    }
                }
                "seed" => cfg.seed = v.parse().map_err(|_| bad("u64"))?,
                "kernel" => cfg.kernel = v.clone(),
                "encoder_layers" => cfg.encoder_layers = v.parse().map_err(|_| bad("usize"))?,
                "channels" => {
                    cfg.channels = v
                        .split(',')
                        .map(|s| s.trim().parse::<usize>().map_err(|_| bad("usize list")))
                        .collect::<Result<_>>()?
                }
                "k_neighbors" => cfg.k_neighbors = v.parse().map_err(|_| bad("usize"))?,
                "downsample_ratio" => {
                    cfg.downsample_ratio = v.parse().map_err(|_| bad("f64"))?
                }
                "pool_stride" => cfg.pool_stride = v.parse().map_err(|_| bad("usize"))?,
                "tau" => cfg.tau = v.parse().map_err(|_| bad("f64"))?,
                _ => return Err(Error::Config(format!("unknown config key '{k}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical key=value form; also the text that gets hashed into
    /// checkpoints.
    pub fn to_kv(&self) -> String {
        let channels = self
            .channels
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let alternation = match self.alternation {
            Alternation::PerIter => "per-iter",
            Alternation::Joint => "joint",
        };
        format!(
            "n_way={}\nk_shot={}\nn_query={}\niterations={}\nlr={}\nhalf_every={}\n\
             weight_decay={}\nalternation={}\nseed={}\nkernel={}\nencoder_layers={}\n\
             channels={}\nk_neighbors={}\ndownsample_ratio={}\npool_stride={}\ntau={}\n",
            self.n_way,
            self.k_shot,
            self.n_query,
            self.iterations,
            self.lr,
            self.half_every,
            self.weight_decay,
            alternation,
            self.seed,
            self.kernel,
            self.encoder_layers,
            channels,
            self.k_neighbors,
            self.downsample_ratio,
            self.pool_stride,
            self.tau,
        )
    }
}
