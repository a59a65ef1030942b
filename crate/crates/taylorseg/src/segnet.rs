//! The U-shaped segmentation backbone: Taylor blocks (FPS + TaylorConv) on the
//! way down, inverse-distance upsampling with skip connections on the way up.
//!
//! The NN variant is pure tensor math with zero learnable parameters; the PN
//! variant records every operation on a tape so the whole pipeline is
//! differentiable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{Tape, Var};
use crate::encoding::{
    geo_matrix, kernel_tracked, trig_pe_rows, trig_pe_rows_target, KernelConfig, PEConfig, PMode,
};
use crate::error::{Error, Result};
use crate::geometry::{
    farthest_point_sample, interpolate_up, interpolation_weights, knn, PointCloud,
};
use crate::optim::{BoundParams, ParamRegistry};
use crate::scalar::{real, Real};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize)]
pub struct NetworkConfig {
    pub encoder_layers: usize,
    pub downsample_ratio: f64,
    pub k_neighbors: usize,
    /// Output width per encoder stage. Ignored by the NN variant, whose width
    /// is fixed at `2 * 3 * pe.bands` everywhere.
    pub channels: Vec<usize>,
    pub kernel: KernelConfig,
    pub pe: PEConfig,
    /// Max pooling stride inside the prototype alignment module.
    pub pool_stride: usize,
    /// Cosine similarity temperature for query classification.
    pub tau: f64,
}

impl NetworkConfig {
    pub fn default_nn() -> Self {
        let pe = PEConfig::default();
        let c = pe.out_dim(3);
        NetworkConfig {
            encoder_layers: 3,
            downsample_ratio: 0.25,
            k_neighbors: 16,
            channels: vec![c; 3],
            kernel: KernelConfig::default(),
            pe,
            pool_stride: 32,
            tau: 0.1,
        }
    }

    pub fn default_pn() -> Self {
        NetworkConfig {
            encoder_layers: 3,
            downsample_ratio: 0.25,
            k_neighbors: 16,
            channels: vec![64, 128, 256],
            kernel: KernelConfig::default(),
            pe: PEConfig::default(),
            pool_stride: 32,
            tau: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_layers < 1 {
            return Err(Error::Config("encoder_layers must be >= 1".into()));
        }
        if !(self.downsample_ratio > 0.0 && self.downsample_ratio <= 1.0) {
            return Err(Error::Config("downsample_ratio must be in (0, 1]".into()));
        }
        if self.channels.len() != self.encoder_layers {
            return Err(Error::Config(
                "channels length must equal encoder_layers".into(),
            ));
        }
        if self.k_neighbors < 1 {
            return Err(Error::Config("k_neighbors must be >= 1".into()));
        }
        if self.pool_stride < 1 {
            return Err(Error::Config("pool_stride must be >= 1".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("tau must be positive".into()));
        }
        self.pe.validate()?;
        self.kernel.validate()
    }

    /// Channel width of the NN variant at every stage.
    pub fn nn_width(&self) -> usize {
        self.pe.out_dim(3)
    }

    /// Final per-point feature width of the NN forward pass (identity-concat
    /// decoding accumulates one skip per level).
    pub fn nn_out_dim(&self) -> usize {
        self.nn_width() * (self.encoder_layers + 1)
    }

    /// Final per-point feature width of the PN forward pass.
    pub fn pn_out_dim(&self) -> usize {
        self.channels[0]
    }

    /// Feature width at level `t` (0 = input resolution) in PN mode.
    fn pn_level_width(&self, t: usize) -> usize {
        if t == 0 {
            self.channels[0]
        } else {
            self.channels[t - 1]
        }
    }
}

/// Point counts per level for an n-point input: `ceil(M * ratio)` per block.
pub fn encoder_level_sizes(n: usize, cfg: &NetworkConfig) -> Vec<usize> {
    let mut sizes = vec![n];
    let mut m = n;
    for _ in 0..cfg.encoder_layers {
        m = ((m as f64) * cfg.downsample_ratio).ceil() as usize;
        m = m.max(1);
        sizes.push(m);
    }
    sizes
}

fn downsample_count(m: usize, ratio: f64) -> usize {
    (((m as f64) * ratio).ceil() as usize).max(1)
}

// ---------------------------------------------------------------------------
// NN variant
// ---------------------------------------------------------------------------

/// One encoder resolution: coordinates, colors carried along for the blended
/// encoding, and the per-point feature matrix.
#[derive(Debug, Clone)]
pub struct NnLevel<R: Real> {
    pub coords: Tensor<R>,
    pub colors: Tensor<R>,
    pub feats: Tensor<R>,
}

/// Level-0 features: mean of the coordinate and color encodings.
pub fn nn_input_level<R: Real>(cloud: &PointCloud<R>, cfg: &NetworkConfig) -> NnLevel<R> {
    let ep = trig_pe_rows(&cloud.coords, &cfg.pe);
    let ec = trig_pe_rows(&cloud.colors, &cfg.pe);
    let feats = ep.add(&ec).unwrap().scale(real::<R>(0.5));
    NnLevel {
        coords: cloud.coords.clone(),
        colors: cloud.colors.clone(),
        feats,
    }
}

/// One Taylor block in NN mode: FPS centers, k-NN neighborhoods over the
/// previous level, blended encodings, cosine geometric weights, and the
/// two-term max aggregation.
pub fn nn_block<R: Real>(level: &NnLevel<R>, cfg: &NetworkConfig) -> Result<NnLevel<R>> {
    let m = level.coords.rows();
    let k = cfg.k_neighbors;
    if k > m {
        return Err(Error::Shape(format!(
            "k_neighbors={k} exceeds level size {m}"
        )));
    }
    let n_centers = downsample_count(m, cfg.downsample_ratio);
    let centers = farthest_point_sample(&level.coords, n_centers, 0)?;
    let center_coords = level.coords.gather_rows(&centers)?;
    let neighbors = knn(&center_coords, &level.coords, k)?;

    let c = cfg.nn_width();
    let ep = trig_pe_rows(&level.coords, &cfg.pe);
    let ec = trig_pe_rows(&level.colors, &cfg.pe);
    let blend = ep
        .add(&ec)?
        .add(&level.feats)?
        .scale(real::<R>(1.0 / 3.0));
    let gathered = blend.gather_rows(&neighbors)?;
    let (lo, _) = gathered.max_pool_stride(k)?;

    let geo = geo_matrix(&level.coords, &centers, &neighbors, k);
    let two_pi = real::<R>(2.0 * std::f64::consts::PI);
    let w = trig_pe_rows_target(&geo, cfg.pe.theta, c)?.scale(two_pi).cos();
    let (hi, _) = w.mul(&gathered)?.max_pool_stride(k)?;

    Ok(NnLevel {
        coords: center_coords,
        colors: level.colors.gather_rows(&centers)?,
        feats: lo.add(&hi)?,
    })
}

/// Identity-concat decoding: upsample the coarsest features level by level and
/// concatenate each level's own features as the skip connection.
pub fn nn_decode<R: Real>(levels: &[NnLevel<R>]) -> Result<Tensor<R>> {
    let last = levels
        .last()
        .ok_or_else(|| Error::Shape("nn_decode: no levels".into()))?;
    let mut acc = last.feats.clone();
    for t in (0..levels.len() - 1).rev() {
        let up = interpolate_up(&levels[t + 1].coords, &acc, &levels[t].coords, 3)?;
        acc = Tensor::concat_cols(&[&up, &levels[t].feats])?;
    }
    Ok(acc)
}

/// Parameter-free forward pass: per-point features at input resolution.
pub fn forward_nn<R: Real>(cloud: &PointCloud<R>, cfg: &NetworkConfig) -> Result<Tensor<R>> {
    cfg.validate()?;
    if cloud.len() < cfg.k_neighbors {
        return Err(Error::Shape(format!(
            "cloud has {} points but k_neighbors={}",
            cloud.len(),
            cfg.k_neighbors
        )));
    }
    let mut levels = vec![nn_input_level(cloud, cfg)];
    for _ in 0..cfg.encoder_layers {
        let next = nn_block(levels.last().unwrap(), cfg)?;
        levels.push(next);
    }
    nn_decode(&levels)
}

/// The zero-parameter model: the registry exists only to make the
/// zero-parameter claim checkable, it is always empty.
#[derive(Debug, Clone)]
pub struct NnModel<R: Real> {
    pub cfg: NetworkConfig,
    pub params: ParamRegistry<R>,
}

impl<R: Real> NnModel<R> {
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(NnModel {
            cfg,
            params: ParamRegistry::new(),
        })
    }

    pub fn forward(&self, cloud: &PointCloud<R>) -> Result<Tensor<R>> {
        forward_nn(cloud, &self.cfg)
    }
}

// ---------------------------------------------------------------------------
// PN variant
// ---------------------------------------------------------------------------

pub fn is_app_param(name: &str) -> bool {
    name.starts_with("app.")
}

fn xavier<R: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<R> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(&[rows, cols], |_| real::<R>(rng.gen_range(-limit..limit)))
}

/// Trainable model: backbone (embedding, per-block phi and HiConv MLPs,
/// decoder projections, optional learnable exponent) plus the prototype
/// alignment weights under the `app.` prefix.
#[derive(Debug, Clone)]
pub struct PnModel<R: Real> {
    pub cfg: NetworkConfig,
    pub params: ParamRegistry<R>,
}

impl<R: Real> PnModel<R> {
    pub fn init(cfg: NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamRegistry::new();
        let c0 = cfg.channels[0];
        params.insert("embed.w", xavier(&mut rng, 6, c0));
        let mut prev = c0;
        for (i, &ci) in cfg.channels.iter().enumerate() {
            let hidden = (ci / 2).max(1);
            params.insert(&format!("block{i}.phi.w"), xavier(&mut rng, prev, ci));
            params.insert(&format!("block{i}.hi.w1"), xavier(&mut rng, 9, hidden));
            params.insert(&format!("block{i}.hi.w2"), xavier(&mut rng, hidden, ci));
            prev = ci;
        }
        if cfg.kernel.p == PMode::Learnable {
            params.insert("kernel.p", Tensor::scalar(R::one()));
        }
        for t in (0..cfg.encoder_layers).rev() {
            let cin = cfg.pn_level_width(t + 1) + cfg.pn_level_width(t);
            let cout = cfg.pn_level_width(t);
            params.insert(&format!("decode{t}.w"), xavier(&mut rng, cin, cout));
        }
        let c = cfg.pn_out_dim();
        params.insert("app.w1", xavier(&mut rng, c, c));
        params.insert("app.w2", xavier(&mut rng, c, c));
        params.insert("app.w3", xavier(&mut rng, 1, c));
        params.insert("app.w4", xavier(&mut rng, c, c));
        // The output projection starts at zero so the push-pull begins as the
        // pure residual path and only grows corrections the loss asks for.
        params.insert("app.w5", Tensor::zeros(&[c, c]));
        params.insert("app.ln1.gamma", Tensor::ones(&[1, c]));
        params.insert("app.ln1.beta", Tensor::zeros(&[1, c]));
        params.insert("app.ln2.gamma", Tensor::ones(&[1, c]));
        params.insert("app.ln2.beta", Tensor::zeros(&[1, c]));
        Ok(PnModel { cfg, params })
    }
}

/// One encoder resolution in PN mode; coordinates are constants, features are
/// tracked.
pub struct PnLevel<R: Real> {
    pub coords: Tensor<R>,
    pub feats: Var<R>,
}

/// One Taylor block in PN mode. Features are first mapped by the block's phi
/// (linear + relu); both the low term and the high-order kernel operate in the
/// mapped space so a single channel width closes the block.
pub fn pn_block<R: Real>(
    level: &PnLevel<R>,
    cfg: &NetworkConfig,
    bound: &BoundParams<R>,
    block_idx: usize,
) -> Result<PnLevel<R>> {
    let m = level.coords.rows();
    let k = cfg.k_neighbors;
    if k > m {
        return Err(Error::Shape(format!(
            "k_neighbors={k} exceeds level size {m}"
        )));
    }
    let n_centers = downsample_count(m, cfg.downsample_ratio);
    let centers = farthest_point_sample(&level.coords, n_centers, 0)?;
    let center_coords = level.coords.gather_rows(&centers)?;
    let neighbors = knn(&center_coords, &level.coords, k)?;

    let phi = bound.get(&format!("block{block_idx}.phi.w"))?;
    let mapped = level.feats.matmul(phi)?.relu();
    let gathered = mapped.gather_rows(&neighbors)?;
    let lo = gathered.max_pool_stride(k)?;

    let center_mapped = mapped.gather_rows(&centers)?;
    let delta = gathered.sub(&center_mapped.repeat_rows_interleave(k))?;
    let geo = geo_matrix(&level.coords, &centers, &neighbors, k);
    let tape = level.feats.tape();
    let geo = tape.constant(geo);
    let w1 = bound.get(&format!("block{block_idx}.hi.w1"))?;
    let w2 = bound.get(&format!("block{block_idx}.hi.w2"))?;
    let w = geo.matmul(w1)?.relu().matmul(w2)?;
    let z = w.mul(&delta)?;
    let p_var = if cfg.kernel.p == PMode::Learnable {
        Some(bound.get("kernel.p")?)
    } else {
        None
    };
    let t = kernel_tracked(&z, &cfg.kernel, p_var)?;
    let hi = t.max_pool_stride(k)?;

    Ok(PnLevel {
        coords: center_coords,
        feats: lo.add(&hi)?,
    })
}

/// Concat-then-project decoding with relu projections per level.
pub fn pn_decode<R: Real>(levels: &[PnLevel<R>], bound: &BoundParams<R>) -> Result<Var<R>> {
    let last = levels
        .last()
        .ok_or_else(|| Error::Shape("pn_decode: no levels".into()))?;
    let mut acc = last.feats.clone();
    for t in (0..levels.len() - 1).rev() {
        let (idx, weights, kw) =
            interpolation_weights(&levels[t + 1].coords, &levels[t].coords, 3)?;
        let up = acc.weighted_gather_rows(&idx, &weights, kw)?;
        let cat = Var::concat_cols(&[up, levels[t].feats.clone()])?;
        let proj = bound.get(&format!("decode{t}.w"))?;
        acc = cat.matmul(proj)?.relu();
    }
    Ok(acc)
}

/// Trainable forward pass: linear embedding of raw xyz+rgb, Taylor blocks,
/// decode. Returns tracked per-point features at input resolution.
pub fn forward_pn<R: Real>(
    tape: &Tape<R>,
    bound: &BoundParams<R>,
    cfg: &NetworkConfig,
    cloud: &PointCloud<R>,
) -> Result<Var<R>> {
    if cloud.len() < cfg.k_neighbors {
        return Err(Error::Shape(format!(
            "cloud has {} points but k_neighbors={}",
            cloud.len(),
            cfg.k_neighbors
        )));
    }
    let x0 = Tensor::concat_cols(&[&cloud.coords, &cloud.colors])?;
    let x0 = tape.constant(x0);
    let embed = bound.get("embed.w")?;
    let feats = x0.matmul(embed)?.relu();
    let mut levels = vec![PnLevel {
        coords: cloud.coords.clone(),
        feats,
    }];
    for i in 0..cfg.encoder_layers {
        let next = pn_block(levels.last().unwrap(), cfg, bound, i)?;
        levels.push(next);
    }
    pn_decode(&levels, bound)
}
