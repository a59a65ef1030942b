//! Episodic sampling with disjoint seen/unseen class splits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fewshot::{Episode, SupportShot};

use super::io::parse_kv_str;
use super::synth::Dataset;

#[derive(Debug, Clone)]
pub struct SplitConfig {
    pub seen: Vec<u32>,
    pub unseen: Vec<u32>,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seen.is_empty() || self.unseen.is_empty() {
            return Err(Error::Config("both split sides must be non-empty".into()));
        }
        if self.seen.iter().any(|c| self.unseen.contains(c)) {
            return Err(Error::Config("seen and unseen classes overlap".into()));
        }
        Ok(())
    }

    pub fn standard() -> Self {
        SplitConfig {
            seen: vec![0, 1, 2, 3],
            unseen: vec![4, 5],
        }
    }

    /// Parse from key=value text with comma-separated class lists.
    pub fn from_kv(text: &str) -> Result<Self> {
        let kv = parse_kv_str(text)?;
        let parse_list = |key: &str| -> Result<Vec<u32>> {
            let raw = kv
                .get(key)
                .ok_or_else(|| Error::Data(format!("split file missing key '{key}'")))?;
            raw.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::Data(format!("bad class id '{s}' in '{key}'")))
                })
                .collect()
        };
        let split = SplitConfig {
            seen: parse_list("seen")?,
            unseen: parse_list("unseen")?,
        };
        split.validate()?;
        Ok(split)
    }

    pub fn to_kv(&self) -> String {
        let join = |v: &[u32]| {
            v.iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("seen={}\nunseen={}\n", join(&self.seen), join(&self.unseen))
    }
}

fn sample_without_replacement(
    rng: &mut ChaCha8Rng,
    pool: &[usize],
    n: usize,
) -> Option<Vec<usize>> {
    if pool.len() < n {
        return None;
    }
    let mut pool = pool.to_vec();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(i));
    }
    Some(out)
}

/// Draw one episode: n_way classes from the candidate pool, k_shot support
/// scenes per class with binary foreground masks, and n_query query scenes
/// relabeled into episode space (0 = background). Deterministic per seed.
pub fn sample_episode(
    dataset: &Dataset,
    classes: &[u32],
    n_way: usize,
    k_shot: usize,
    n_query: usize,
    seed: u64,
) -> Result<Episode<f64>> {
    if classes.len() < n_way {
        return Err(Error::Data(format!(
            "split has {} classes but n_way={n_way}",
            classes.len()
        )));
    }
    if n_way < 1 || k_shot < 1 || n_query < 1 {
        return Err(Error::Config("n_way, k_shot, n_query must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let class_pool: Vec<usize> = (0..classes.len()).collect();
    let picked = sample_without_replacement(&mut rng, &class_pool, n_way).unwrap();
    let class_ids: Vec<u32> = picked.iter().map(|&i| classes[i]).collect();

    let mut used: Vec<usize> = Vec::new();
    let mut support = Vec::with_capacity(n_way);
    for &class in &class_ids {
        let eligible = dataset.scenes_with_class(class);
        let fresh: Vec<usize> = eligible
            .iter()
            .copied()
            .filter(|i| !used.contains(i))
            .collect();
        let chosen = sample_without_replacement(&mut rng, &fresh, k_shot)
            .or_else(|| sample_without_replacement(&mut rng, &eligible, k_shot))
            .ok_or_else(|| {
                Error::Data(format!(
                    "not enough scenes containing class {class} for k_shot={k_shot}"
                ))
            })?;
        let mut shots = Vec::with_capacity(k_shot);
        for idx in chosen {
            used.push(idx);
            let cloud = dataset.scenes[idx].clone();
            let labels = cloud
                .labels
                .as_ref()
                .ok_or_else(|| Error::Data("support scene has no labels".into()))?;
            let mask: Vec<bool> = labels.iter().map(|&l| l == class).collect();
            shots.push(SupportShot { cloud, mask });
        }
        support.push(shots);
    }

    let eligible_q: Vec<usize> = dataset
        .scenes
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s.labels
                .as_ref()
                .map(|ls| ls.iter().any(|l| class_ids.contains(l)))
                .unwrap_or(false)
        })
        .map(|(i, _)| i)
        .collect();
    let fresh_q: Vec<usize> = eligible_q
        .iter()
        .copied()
        .filter(|i| !used.contains(i))
        .collect();
    let chosen_q = sample_without_replacement(&mut rng, &fresh_q, n_query)
        .or_else(|| sample_without_replacement(&mut rng, &eligible_q, n_query))
        .ok_or_else(|| {
            Error::Data(format!(
                "not enough scenes containing sampled classes for n_query={n_query}"
            ))
        })?;

    let mut queries = Vec::with_capacity(n_query);
    let mut query_gt = Vec::with_capacity(n_query);
    for idx in chosen_q {
        let cloud = dataset.scenes[idx].clone();
        let labels = cloud
            .labels
            .as_ref()
            .ok_or_else(|| Error::Data("query scene has no labels".into()))?;
        let gt: Vec<usize> = labels
            .iter()
            .map(|l| {
                class_ids
                    .iter()
                    .position(|c| c == l)
                    .map(|p| p + 1)
                    .unwrap_or(0)
            })
            .collect();
        queries.push(cloud);
        query_gt.push(gt);
    }

    let ep = Episode {
        n_way,
        k_shot,
        class_ids,
        support,
        queries,
        query_gt,
    };
    ep.validate()?;
    Ok(ep)
}
