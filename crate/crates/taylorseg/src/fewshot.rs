//! Episodic data model, prototype extraction, the adaptive push-pull module
//! (channel-attention push + cross-attention pull), similarity classification,
//! loss, and mIoU.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::optim::BoundParams;
use crate::scalar::{real, Real};
use crate::segnet::{forward_nn, forward_pn, NetworkConfig};
use crate::tensor::Tensor;

/// Cosine similarity guard.
pub const COS_EPS: f64 = 1e-8;
/// Layer norm variance guard.
pub const LN_EPS: f64 = 1e-5;

fn div_ceil(a: usize, b: usize) -> usize {
    (a + b - 1) / b
}

/// One annotated support exemplar: a cloud plus the binary foreground mask of
/// the class it supports.
#[derive(Debug, Clone)]
pub struct SupportShot<R: Real> {
    pub cloud: PointCloud<R>,
    pub mask: Vec<bool>,
}

/// One N-way K-shot task instance. Query ground truth uses episode labels:
/// 0 = background, 1..=n_way = the sampled classes in `class_ids` order.
#[derive(Debug, Clone)]
pub struct Episode<R: Real> {
    pub n_way: usize,
    pub k_shot: usize,
    /// Global dataset labels of the sampled classes.
    pub class_ids: Vec<u32>,
    /// support[c][s] is shot s for episode class c+1.
    pub support: Vec<Vec<SupportShot<R>>>,
    pub queries: Vec<PointCloud<R>>,
    pub query_gt: Vec<Vec<usize>>,
}

impl<R: Real> Episode<R> {
    pub fn validate(&self) -> Result<()> {
        if self.n_way < 1 || self.k_shot < 1 {
            return Err(Error::Config("n_way and k_shot must be >= 1".into()));
        }
        if self.support.len() != self.n_way || self.class_ids.len() != self.n_way {
            return Err(Error::Shape("support/class_ids length != n_way".into()));
        }
        for shots in &self.support {
            if shots.len() != self.k_shot {
                return Err(Error::Shape("shot count != k_shot".into()));
            }
            for shot in shots {
                if shot.mask.len() != shot.cloud.len() {
                    return Err(Error::Shape("mask length != cloud size".into()));
                }
                if !shot.mask.iter().any(|&m| m) {
                    return Err(Error::Data("support mask has no positive point".into()));
                }
            }
        }
        if self.queries.len() != self.query_gt.len() {
            return Err(Error::Shape("query/query_gt length mismatch".into()));
        }
        for (q, gt) in self.queries.iter().zip(&self.query_gt) {
            if gt.len() != q.len() {
                return Err(Error::Shape("query_gt length != cloud size".into()));
            }
            if gt.iter().any(|&l| l > self.n_way) {
                return Err(Error::Data("query label out of range".into()));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Prototypes
// ---------------------------------------------------------------------------

/// Mean of the feature rows selected by the mask: [N, C] -> [1, C].
pub fn masked_avg_prototype<R: Real>(feats: &Tensor<R>, mask: &[bool]) -> Result<Tensor<R>> {
    if mask.len() != feats.rows() {
        return Err(Error::Shape("mask length != feature rows".into()));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Data("all-zero prototype mask".into()));
    }
    let c = feats.cols();
    let mut out = vec![R::zero(); c];
    for (i, &m) in mask.iter().enumerate() {
        if m {
            for j in 0..c {
                out[j] = out[j] + feats.at(i, j);
            }
        }
    }
    let inv = R::one() / real::<R>(count as f64);
    Ok(Tensor::new(vec![1, c], out)?.scale(inv))
}

/// Tracked masked average: a constant weight row times the feature matrix, so
/// gradients flow into the features only.
pub fn masked_avg_prototype_tracked<R: Real>(
    feats: &Var<R>,
    mask: &[bool],
) -> Result<Var<R>> {
    let n = feats.shape()[0];
    if mask.len() != n {
        return Err(Error::Shape("mask length != feature rows".into()));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Data("all-zero prototype mask".into()));
    }
    let inv = R::one() / real::<R>(count as f64);
    let row = Tensor::from_fn(&[1, n], |i| if mask[i] { inv } else { R::zero() });
    feats.tape().constant(row).matmul(feats)
}

/// Background prototype: mean feature over the complement of the foreground
/// masks across all support shots. Returns the zero vector plus a flag when no
/// background point exists.
pub fn background_prototype<R: Real>(
    shot_feats: &[Tensor<R>],
    masks: &[Vec<bool>],
) -> Result<(Tensor<R>, bool)> {
    if shot_feats.is_empty() || shot_feats.len() != masks.len() {
        return Err(Error::Shape("shot/mask count mismatch".into()));
    }
    let c = shot_feats[0].cols();
    let mut sum = vec![R::zero(); c];
    let mut count = 0usize;
    for (f, m) in shot_feats.iter().zip(masks) {
        if m.len() != f.rows() {
            return Err(Error::Shape("mask length != feature rows".into()));
        }
        for (i, &fg) in m.iter().enumerate() {
            if !fg {
                count += 1;
                for j in 0..c {
                    sum[j] = sum[j] + f.at(i, j);
                }
            }
        }
    }
    if count == 0 {
        return Ok((Tensor::zeros(&[1, c]), true));
    }
    let inv = R::one() / real::<R>(count as f64);
    Ok((Tensor::new(vec![1, c], sum)?.scale(inv), false))
}

/// Tracked global background prototype over several support feature matrices.
pub fn background_prototype_tracked<R: Real>(
    tape: &Tape<R>,
    shot_feats: &[Var<R>],
    masks: &[Vec<bool>],
) -> Result<(Var<R>, bool)> {
    if shot_feats.is_empty() || shot_feats.len() != masks.len() {
        return Err(Error::Shape("shot/mask count mismatch".into()));
    }
    let c = shot_feats[0].shape()[1];
    let total: usize = masks.iter().map(|m| m.iter().filter(|&&x| !x).count()).sum();
    if total == 0 {
        return Ok((tape.constant(Tensor::zeros(&[1, c])), true));
    }
    let inv = R::one() / real::<R>(total as f64);
    let mut acc: Option<Var<R>> = None;
    for (f, m) in shot_feats.iter().zip(masks) {
        let n = f.shape()[0];
        if m.len() != n {
            return Err(Error::Shape("mask length != feature rows".into()));
        }
        if m.iter().all(|&fg| fg) {
            continue;
        }
        let row = Tensor::from_fn(&[1, n], |i| if m[i] { R::zero() } else { inv });
        let part = tape.constant(row).matmul(f)?;
        acc = Some(match acc {
            None => part,
            Some(a) => a.add(&part)?,
        });
    }
    Ok((acc.unwrap(), false))
}

/// Arithmetic mean over K shot prototypes, each [1, C].
pub fn aggregate_shots<R: Real>(shot_prototypes: &[Var<R>]) -> Result<Var<R>> {
    if shot_prototypes.is_empty() {
        return Err(Error::Shape("aggregate_shots: no shots".into()));
    }
    let mut acc = shot_prototypes[0].clone();
    for p in &shot_prototypes[1..] {
        acc = acc.add(p)?;
    }
    Ok(acc.scale(R::one() / real::<R>(shot_prototypes.len() as f64)))
}

// ---------------------------------------------------------------------------
// Adaptive push-pull
// ---------------------------------------------------------------------------

/// Handles to the push-pull parameters bound on the current tape.
pub struct AppVars<'a, R: Real> {
    pub w1: &'a Var<R>,
    pub w2: &'a Var<R>,
    pub w3: &'a Var<R>,
    pub w4: &'a Var<R>,
    pub w5: &'a Var<R>,
    pub ln1_gamma: &'a Var<R>,
    pub ln1_beta: &'a Var<R>,
    pub ln2_gamma: &'a Var<R>,
    pub ln2_beta: &'a Var<R>,
}

impl<'a, R: Real> AppVars<'a, R> {
    pub fn from_bound(bound: &'a BoundParams<R>) -> Result<Self> {
        Ok(AppVars {
            w1: bound.get("app.w1")?,
            w2: bound.get("app.w2")?,
            w3: bound.get("app.w3")?,
            w4: bound.get("app.w4")?,
            w5: bound.get("app.w5")?,
            ln1_gamma: bound.get("app.ln1.gamma")?,
            ln1_beta: bound.get("app.ln1.beta")?,
            ln2_gamma: bound.get("app.ln2.gamma")?,
            ln2_beta: bound.get("app.ln2.beta")?,
        })
    }
}

/// Channel-attention push: Gram statistics of the pooled support and query
/// features gate the projected prototype, then a projection and layer norm.
pub fn acp<R: Real>(
    fs_pooled: &Var<R>,
    fq_pooled: &Var<R>,
    fp_bar: &Var<R>,
    vars: &AppVars<R>,
) -> Result<Var<R>> {
    let gs = fs_pooled.transpose()?.matmul(fs_pooled)?;
    let gq = fq_pooled.transpose()?.matmul(fq_pooled)?;
    let a_s = vars.w3.matmul(&gs)?.sigmoid();
    let a_q = vars.w3.matmul(&gq)?.sigmoid();
    let pushed = fp_bar.mul(&a_s)?.add(&fp_bar.mul(&a_q)?)?;
    pushed
        .matmul(vars.w4)?
        .layer_norm(vars.ln1_gamma, vars.ln1_beta, real::<R>(LN_EPS))
}

/// Cross-attention pull: channel attention between the two pooled domains,
/// softmaxed per row, pulls the prototype toward shared channels.
pub fn cap<R: Real>(fs_pooled: &Var<R>, fq_pooled: &Var<R>, fp: &Var<R>) -> Result<Var<R>> {
    let a_cross = fq_pooled.transpose()?.matmul(fs_pooled)?;
    a_cross
        .softmax_rows()
        .matmul(&fp.transpose()?)?
        .transpose()
}

/// Full push-pull refinement of one shot prototype. Support and query features
/// are pooled to matching row counts (the query stride scales with the size
/// ratio so the cross attention is well-formed for any query count).
pub fn app<R: Real>(
    support_feats: &Var<R>,
    query_feats: &Var<R>,
    shot_prototype: &Var<R>,
    vars: &AppVars<R>,
    pool_stride: usize,
) -> Result<Var<R>> {
    let ms = support_feats.shape()[0];
    let mq = query_feats.shape()[0];
    let s_stride = pool_stride.min(ms);
    let s_rows = div_ceil(ms, s_stride);
    let q_stride = div_ceil(mq, s_rows);
    let fs_pooled = support_feats.max_pool_stride(s_stride)?.matmul(vars.w1)?;
    let fq_pooled = query_feats.max_pool_stride(q_stride)?.matmul(vars.w1)?;
    if fs_pooled.shape()[0] != fq_pooled.shape()[0] {
        return Err(Error::Shape(format!(
            "pooled support ({}) and query ({}) row counts differ",
            fs_pooled.shape()[0],
            fq_pooled.shape()[0]
        )));
    }
    let fp_bar = shot_prototype.matmul(vars.w2)?;
    let f_acp = acp(&fs_pooled, &fq_pooled, &fp_bar, vars)?;
    let f_cap = cap(&fs_pooled, &fq_pooled, shot_prototype)?;
    f_acp
        .add(&f_cap)?
        .matmul(vars.w5)?
        .add(shot_prototype)?
        .layer_norm(vars.ln2_gamma, vars.ln2_beta, real::<R>(LN_EPS))
}

// ---------------------------------------------------------------------------
// Classification, loss, metric
// ---------------------------------------------------------------------------

/// Temperature-scaled cosine similarity logits: [N, C] x [P, C] -> [N, P].
pub fn cosine_logits<R: Real>(
    query_feats: &Tensor<R>,
    prototypes: &Tensor<R>,
    tau: f64,
) -> Result<Tensor<R>> {
    let eps = real::<R>(COS_EPS);
    let q = query_feats.row_l2_normalize(eps);
    let p = prototypes.row_l2_normalize(eps);
    Ok(q.matmul(&p.transpose()?)?.scale(real::<R>(1.0 / tau)))
}

/// Tracked version of `cosine_logits`.
pub fn cosine_logits_tracked<R: Real>(
    query_feats: &Var<R>,
    prototypes: &Var<R>,
    tau: f64,
) -> Result<Var<R>> {
    let eps = real::<R>(COS_EPS);
    let q = query_feats.row_l2_normalize(eps);
    let p = prototypes.row_l2_normalize(eps);
    Ok(q.matmul(&p.transpose()?)?.scale(real::<R>(1.0 / tau)))
}

/// Per-row argmax with ties to the lowest index.
pub fn argmax_rows<R: Real>(logits: &Tensor<R>) -> Vec<usize> {
    let mut out = Vec::with_capacity(logits.rows());
    for i in 0..logits.rows() {
        let mut best = 0;
        for j in 1..logits.cols() {
            if logits.at(i, j) > logits.at(i, best) {
                best = j;
            }
        }
        out.push(best);
    }
    out
}

/// Labels plus logits, the non-parametric classification head.
pub fn classify_query<R: Real>(
    query_feats: &Tensor<R>,
    prototypes: &Tensor<R>,
    tau: f64,
) -> Result<(Vec<usize>, Tensor<R>)> {
    let logits = cosine_logits(query_feats, prototypes, tau)?;
    let labels = argmax_rows(&logits);
    Ok((labels, logits))
}

/// Mean cross entropy over query points; tracked.
pub fn episode_loss<R: Real>(logits: &Var<R>, gt: &[usize]) -> Result<Var<R>> {
    logits.cross_entropy_mean(gt)
}

/// Intersection over union per class and the mean over foreground classes.
/// Background (class 0) and classes absent from both pred and gt are excluded
/// from the mean and reported as None.
pub fn miou(pred: &[usize], gt: &[usize], n_classes: usize) -> Result<(Vec<Option<f64>>, f64)> {
    if pred.len() != gt.len() {
        return Err(Error::Shape("pred/gt length mismatch".into()));
    }
    if pred.iter().chain(gt).any(|&l| l >= n_classes) {
        return Err(Error::Data("label out of range for miou".into()));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fnn = vec![0usize; n_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fnn[g] += 1;
        }
    }
    let mut per_class = vec![None; n_classes];
    let mut sum = 0.0;
    let mut n = 0usize;
    for c in 0..n_classes {
        let denom = tp[c] + fp[c] + fnn[c];
        if denom == 0 {
            continue;
        }
        let iou = tp[c] as f64 / denom as f64;
        per_class[c] = Some(iou);
        if c != 0 {
            sum += iou;
            n += 1;
        }
    }
    let mean = if n == 0 { 0.0 } else { sum / n as f64 };
    Ok((per_class, mean))
}

// ---------------------------------------------------------------------------
// Episode runners
// ---------------------------------------------------------------------------

/// What one episode produced: a tracked loss, concatenated query predictions
/// and ground truth, and whether the background prototype degenerated.
pub struct EpisodeOutcome<R: Real> {
    pub loss: Var<R>,
    pub pred: Vec<usize>,
    pub gt: Vec<usize>,
    pub background_flagged: bool,
}

/// Trainable episode: PN forward on every cloud, prototypes, optional
/// push-pull refinement, cosine classification, cross entropy.
pub fn pn_episode<R: Real>(
    tape: &Tape<R>,
    bound: &BoundParams<R>,
    cfg: &NetworkConfig,
    ep: &Episode<R>,
    use_app: bool,
) -> Result<EpisodeOutcome<R>> {
    ep.validate()?;
    let mut support_feats: Vec<Vec<Var<R>>> = Vec::with_capacity(ep.n_way);
    for shots in &ep.support {
        let mut per_class = Vec::with_capacity(ep.k_shot);
        for shot in shots {
            per_class.push(forward_pn(tape, bound, cfg, &shot.cloud)?);
        }
        support_feats.push(per_class);
    }
    let query_feats: Vec<Var<R>> = ep
        .queries
        .iter()
        .map(|q| forward_pn(tape, bound, cfg, q))
        .collect::<Result<_>>()?;
    let query_cat = Var::concat_rows(&query_feats)?;

    let flat_feats: Vec<Var<R>> = support_feats.iter().flatten().cloned().collect();
    let flat_masks: Vec<Vec<bool>> = ep
        .support
        .iter()
        .flatten()
        .map(|s| s.mask.clone())
        .collect();

    let vars = if use_app {
        Some(AppVars::from_bound(bound)?)
    } else {
        None
    };

    // Background stays a plain masked average over the complement of the
    // foreground masks; only foreground prototypes go through the push-pull.
    let (background, flagged) = background_prototype_tracked(tape, &flat_feats, &flat_masks)?;

    let mut proto_rows = vec![background];
    for (c, shots) in ep.support.iter().enumerate() {
        let mut per_shot = Vec::with_capacity(ep.k_shot);
        for (s, shot) in shots.iter().enumerate() {
            let proto = masked_avg_prototype_tracked(&support_feats[c][s], &shot.mask)?;
            let proto = match &vars {
                Some(vars) => app(
                    &support_feats[c][s],
                    &query_cat,
                    &proto,
                    vars,
                    cfg.pool_stride,
                )?,
                None => proto,
            };
            per_shot.push(proto);
        }
        proto_rows.push(aggregate_shots(&per_shot)?);
    }
    let prototypes = Var::concat_rows(&proto_rows)?;

    let logits = cosine_logits_tracked(&query_cat, &prototypes, cfg.tau)?;
    let gt: Vec<usize> = ep.query_gt.iter().flatten().copied().collect();
    let loss = episode_loss(&logits, &gt)?;
    let pred = argmax_rows(&logits.value());
    Ok(EpisodeOutcome {
        loss,
        pred,
        gt,
        background_flagged: flagged,
    })
}

/// Parameter-free episode: NN forward, masked average prototypes, cosine
/// classification. Returns concatenated predictions and ground truth.
pub fn nn_episode<R: Real>(
    cfg: &NetworkConfig,
    ep: &Episode<R>,
) -> Result<(Vec<usize>, Vec<usize>, bool)> {
    ep.validate()?;
    let mut flat_feats = Vec::new();
    let mut flat_masks = Vec::new();
    let mut proto_rows: Vec<Tensor<R>> = Vec::new();
    for shots in &ep.support {
        let mut acc: Option<Tensor<R>> = None;
        for shot in shots {
            let feats = forward_nn(&shot.cloud, cfg)?;
            let proto = masked_avg_prototype(&feats, &shot.mask)?;
            acc = Some(match acc {
                None => proto,
                Some(a) => a.add(&proto)?,
            });
            flat_feats.push(feats);
            flat_masks.push(shot.mask.clone());
        }
        proto_rows.push(acc.unwrap().scale(R::one() / real::<R>(shots.len() as f64)));
    }
    let (background, flagged) = background_prototype(&flat_feats, &flat_masks)?;
    let mut rows: Vec<&Tensor<R>> = vec![&background];
    rows.extend(proto_rows.iter());
    let prototypes = Tensor::concat_rows(&rows)?;

    let mut pred = Vec::new();
    let mut gt = Vec::new();
    for (q, g) in ep.queries.iter().zip(&ep.query_gt) {
        let feats = forward_nn(q, cfg)?;
        let (labels, _) = classify_query(&feats, &prototypes, cfg.tau)?;
        pred.extend(labels);
        gt.extend(g.iter().copied());
    }
    Ok((pred, gt, flagged))
}
