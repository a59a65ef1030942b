//! Deterministic point-set algorithms: farthest point sampling, k-nearest
//! neighbors, feature grouping, and inverse-distance upsampling.
//!
//! Distances are Euclidean over xyz only; all ties resolve to the lowest
//! index, so identical inputs produce bit-identical outputs.

use crate::error::{Error, Result};
use crate::scalar::{real, Real};
use crate::tensor::Tensor;

/// A raw scene sample: coordinates in meters, colors in [0, 1], and optional
/// per-point class labels.
#[derive(Debug, Clone)]
pub struct PointCloud<R: Real> {
    pub coords: Tensor<R>,
    pub colors: Tensor<R>,
    pub labels: Option<Vec<u32>>,
}

impl<R: Real> PointCloud<R> {
    pub fn new(coords: Tensor<R>, colors: Tensor<R>, labels: Option<Vec<u32>>) -> Result<Self> {
        if coords.shape().len() != 2 || coords.cols() != 3 {
            return Err(Error::Shape("coords must be N x 3".into()));
        }
        if colors.shape() != coords.shape() {
            return Err(Error::Shape("colors must match coords shape".into()));
        }
        if let Some(l) = &labels {
            if l.len() != coords.rows() {
                return Err(Error::Shape("labels length must equal point count".into()));
            }
        }
        if !coords.is_finite() || !colors.is_finite() {
            return Err(Error::Numeric("non-finite point cloud values".into()));
        }
        Ok(PointCloud {
            coords,
            colors,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Neighborhood structure: `centers[i]` is the index of the i-th center in the
/// reference set, `neighbors` holds k reference indices per center, row-major.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    pub centers: Vec<usize>,
    pub neighbors: Vec<usize>,
    pub k: usize,
}

fn sq_dist<R: Real>(a: &[R], b: &[R]) -> R {
    let mut s = R::zero();
    for i in 0..3 {
        let d = a[i] - b[i];
        s = s + d * d;
    }
    s
}

fn point<R: Real>(coords: &Tensor<R>, i: usize) -> &[R] {
    &coords.data()[i * 3..(i + 1) * 3]
}

/// Greedy max-min farthest point sampling. The first selected index is
/// `start`; each following pick maximizes the distance to the selected set,
/// ties broken by lowest index.
pub fn farthest_point_sample<R: Real>(
    coords: &Tensor<R>,
    m: usize,
    start: usize,
) -> Result<Vec<usize>> {
    let n = coords.rows();
    if m == 0 || m > n {
        return Err(Error::Shape(format!(
            "farthest_point_sample: m={m} out of range for {n} points"
        )));
    }
    if start >= n {
        return Err(Error::Shape(format!(
            "farthest_point_sample: start={start} out of range"
        )));
    }
    let mut selected = Vec::with_capacity(m);
    let mut min_dist = vec![R::infinity(); n];
    let mut last = start;
    selected.push(start);
    for _ in 1..m {
        let lp = point(coords, last);
        let mut best = R::neg_infinity();
        let mut best_i = 0usize;
        for i in 0..n {
            let d = sq_dist(point(coords, i), lp);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > best {
                best = min_dist[i];
                best_i = i;
            }
        }
        selected.push(best_i);
        last = best_i;
    }
    Ok(selected)
}

/// Per query, the indices of the k nearest reference points, sorted by
/// (distance, index) ascending.
pub fn knn<R: Real>(queries: &Tensor<R>, refs: &Tensor<R>, k: usize) -> Result<Vec<usize>> {
    let n = refs.rows();
    if k == 0 || k > n {
        return Err(Error::Shape(format!(
            "knn: k={k} out of range for {n} reference points"
        )));
    }
    let m = queries.rows();
    let mut out = Vec::with_capacity(m * k);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for q in 0..m {
        let qp = point(queries, q);
        let dists: Vec<R> = (0..n).map(|i| sq_dist(point(refs, i), qp)).collect();
        order.clear();
        order.extend(0..n);
        order.sort_by(|&a, &b| {
            dists[a]
                .partial_cmp(&dists[b])
                .expect("finite distances")
                .then(a.cmp(&b))
        });
        out.extend_from_slice(&order[..k]);
    }
    Ok(out)
}

pub fn neighbor_index<R: Real>(
    center_coords: &Tensor<R>,
    refs: &Tensor<R>,
    centers: Vec<usize>,
    k: usize,
) -> Result<NeighborIndex> {
    let neighbors = knn(center_coords, refs, k)?;
    Ok(NeighborIndex {
        centers,
        neighbors,
        k,
    })
}

/// Gather neighbor features: [N, C] + M x k indices -> [M*k, C], center-major.
pub fn group<R: Real>(features: &Tensor<R>, idx: &NeighborIndex) -> Result<Tensor<R>> {
    features.gather_rows(&idx.neighbors)
}

/// Inverse-squared-distance weights over the k nearest coarse points per fine
/// point. Weights are normalized to sum to 1; an exact coordinate match
/// dominates through the epsilon guard. Returns (indices, weights), each of
/// length `fine_count * k`.
pub fn interpolation_weights<R: Real>(
    coarse_coords: &Tensor<R>,
    fine_coords: &Tensor<R>,
    k: usize,
) -> Result<(Vec<usize>, Vec<R>, usize)> {
    let m = coarse_coords.rows();
    if m == 0 {
        return Err(Error::Shape("interpolation_weights: empty coarse set".into()));
    }
    let k = k.min(m);
    let idx = knn(fine_coords, coarse_coords, k)?;
    let n = fine_coords.rows();
    let eps = real::<R>(1e-8);
    let mut weights = vec![R::zero(); n * k];
    for i in 0..n {
        let fp = point(fine_coords, i);
        let mut wsum = R::zero();
        for j in 0..k {
            let ci = idx[i * k + j];
            let w = R::one() / (sq_dist(point(coarse_coords, ci), fp) + eps);
            weights[i * k + j] = w;
            wsum = wsum + w;
        }
        for j in 0..k {
            weights[i * k + j] = weights[i * k + j] / wsum;
        }
    }
    Ok((idx, weights, k))
}

/// Inverse-squared-distance interpolation of coarse features onto fine
/// coordinates using the k nearest coarse points.
pub fn interpolate_up<R: Real>(
    coarse_coords: &Tensor<R>,
    coarse_feats: &Tensor<R>,
    fine_coords: &Tensor<R>,
    k: usize,
) -> Result<Tensor<R>> {
    if coarse_feats.rows() != coarse_coords.rows() {
        return Err(Error::Shape(
            "interpolate_up: coarse features do not match coarse coords".into(),
        ));
    }
    let (idx, weights, k) = interpolation_weights(coarse_coords, fine_coords, k)?;
    let n = fine_coords.rows();
    let c = coarse_feats.cols();
    let mut out = vec![R::zero(); n * c];
    for i in 0..n {
        for j in 0..k {
            let src = idx[i * k + j];
            let w = weights[i * k + j];
            for ch in 0..c {
                out[i * c + ch] = out[i * c + ch] + w * coarse_feats.data()[src * c + ch];
            }
        }
    }
    Tensor::new(vec![n, c], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coords(rows: &[[f64; 3]]) -> Tensor<f64> {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_coords(rng: &mut ChaCha8Rng, n: usize) -> Tensor<f64> {
        Tensor::from_fn(&[n, 3], |_| rng.gen_range(-1.0..1.0))
    }

    /// O(N^2 * m) brute-force max-min selection used as the FPS oracle.
    fn fps_oracle(c: &Tensor<f64>, m: usize, start: usize) -> Vec<usize> {
        let n = c.rows();
        let mut sel = vec![start];
        while sel.len() < m {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = usize::MAX;
            for i in 0..n {
                let dmin = sel
                    .iter()
                    .map(|&s| sq_dist(point(c, i), point(c, s)))
                    .fold(f64::INFINITY, f64::min);
                if dmin > best {
                    best = dmin;
                    best_i = i;
                }
            }
            sel.push(best_i);
        }
        sel
    }

    #[test]
    fn fps_exhaustive_when_m_equals_n() {
        let c = coords(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        let a = farthest_point_sample(&c, 3, 0).unwrap();
        let b = farthest_point_sample(&c, 3, 0).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn fps_colinear_endpoints() {
        let c = coords(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
        ]);
        let s = farthest_point_sample(&c, 2, 0).unwrap();
        assert_eq!(s, vec![0, 3]);
    }

    #[test]
    fn fps_rejects_m_too_large() {
        let c = coords(&[[0.0, 0.0, 0.0]]);
        assert!(farthest_point_sample(&c, 2, 0).is_err());
    }

    #[test]
    fn fps_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..50 {
            let n = 4 + (trial % 61);
            let c = random_coords(&mut rng, n);
            let m = 1 + trial % n;
            let got = farthest_point_sample(&c, m, 0).unwrap();
            assert_eq!(got, fps_oracle(&c, m, 0), "trial {trial}");
        }
    }

    #[test]
    fn fps_prefix_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_coords(&mut rng, 40);
        let full = farthest_point_sample(&c, 30, 0).unwrap();
        for m in 1..30 {
            assert_eq!(farthest_point_sample(&c, m, 0).unwrap(), full[..m]);
        }
    }

    #[test]
    fn knn_self_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_coords(&mut rng, 20);
        let idx = knn(&c, &c, 1).unwrap();
        assert_eq!(idx, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn knn_simple_case() {
        let q = coords(&[[0.0, 0.0, 0.0]]);
        let r = coords(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        assert_eq!(knn(&q, &r, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn knn_rejects_k_too_large() {
        let q = coords(&[[0.0, 0.0, 0.0]]);
        assert!(knn(&q, &q, 2).is_err());
    }

    /// Full-sort oracle over all reference points.
    fn knn_oracle(q: &Tensor<f64>, r: &Tensor<f64>, k: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..q.rows() {
            let mut pairs: Vec<(f64, usize)> = (0..r.rows())
                .map(|j| (sq_dist(point(r, j), point(q, i)), j))
                .collect();
            pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.extend(pairs[..k].iter().map(|p| p.1));
        }
        out
    }

    #[test]
    fn knn_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..30 {
            let n = 16 + trial * 3 % 113;
            let r = random_coords(&mut rng, n);
            let q = random_coords(&mut rng, 10);
            let k = 16.min(n);
            assert_eq!(knn(&q, &r, k).unwrap(), knn_oracle(&q, &r, k));
        }
    }

    #[test]
    fn knn_permutation_same_neighbor_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = random_coords(&mut rng, 30);
        let q = random_coords(&mut rng, 5);
        let base = knn(&q, &r, 4).unwrap();
        // Reverse reference storage order and map indices back.
        let n = r.rows();
        let perm: Vec<usize> = (0..n).rev().collect();
        let rp = r.gather_rows(&perm).unwrap();
        let permuted = knn(&q, &rp, 4).unwrap();
        for qi in 0..q.rows() {
            let mut a: Vec<usize> = base[qi * 4..(qi + 1) * 4].to_vec();
            let mut b: Vec<usize> = permuted[qi * 4..(qi + 1) * 4]
                .iter()
                .map(|&i| perm[i])
                .collect();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn group_identity_rows() {
        let f = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let idx = NeighborIndex {
            centers: vec![0, 1],
            neighbors: vec![0, 0, 1, 1],
            k: 2,
        };
        let g = group(&f, &idx).unwrap();
        assert_eq!(
            g,
            Tensor::from_rows(&[
                vec![1.0, 2.0],
                vec![1.0, 2.0],
                vec![3.0, 4.0],
                vec![3.0, 4.0]
            ])
            .unwrap()
        );
    }

    #[test]
    fn group_self_indices_k1() {
        let f = Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let idx = NeighborIndex {
            centers: vec![0, 1, 2],
            neighbors: vec![0, 1, 2],
            k: 1,
        };
        assert_eq!(group(&f, &idx).unwrap().data(), f.data());
    }

    #[test]
    fn group_out_of_range() {
        let f = Tensor::<f64>::zeros(&[2, 2]);
        let idx = NeighborIndex {
            centers: vec![0],
            neighbors: vec![5],
            k: 1,
        };
        assert!(group(&f, &idx).is_err());
    }

    #[test]
    fn group_matches_naive_gather() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = Tensor::from_fn(&[12, 5], |_| rng.gen_range(-1.0..1.0));
        let nbrs: Vec<usize> = (0..24).map(|_| rng.gen_range(0..12)).collect();
        let idx = NeighborIndex {
            centers: (0..6).collect(),
            neighbors: nbrs.clone(),
            k: 4,
        };
        let g = group(&f, &idx).unwrap();
        for (r, &src) in nbrs.iter().enumerate() {
            for c in 0..5 {
                assert_eq!(g.at(r, c), f.at(src, c));
            }
        }
    }

    #[test]
    fn interpolate_coincident_point() {
        let cc = coords(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let cf = Tensor::from_rows(&[vec![5.0], vec![9.0]]).unwrap();
        let fine = coords(&[[0.0, 0.0, 0.0]]);
        let out = interpolate_up(&cc, &cf, &fine, 2).unwrap();
        assert!((out.data()[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn interpolate_equidistant_average() {
        let cc = coords(&[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let cf = Tensor::from_rows(&[vec![2.0], vec![6.0]]).unwrap();
        let fine = coords(&[[0.0, 0.0, 0.0]]);
        let out = interpolate_up(&cc, &cf, &fine, 2).unwrap();
        assert!((out.data()[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn interpolate_matches_naive_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cc = random_coords(&mut rng, 15);
        let cf = Tensor::from_fn(&[15, 4], |_| rng.gen_range(-1.0..1.0));
        let fine = random_coords(&mut rng, 25);
        let out = interpolate_up(&cc, &cf, &fine, 3).unwrap();
        // Independent naive version: full sort, explicit weight normalization.
        for i in 0..25 {
            let fp = point(&fine, i);
            let mut pairs: Vec<(f64, usize)> = (0..15)
                .map(|j| (sq_dist(point(&cc, j), fp), j))
                .collect();
            pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let w: Vec<f64> = pairs[..3].iter().map(|p| 1.0 / (p.0 + 1e-8)).collect();
            let ws: f64 = w.iter().sum();
            for c in 0..4 {
                let expect: f64 = pairs[..3]
                    .iter()
                    .zip(w.iter())
                    .map(|(&(_, j), &wi)| wi / ws * cf.at(j, c))
                    .sum();
                assert!((out.at(i, c) - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn interpolate_constant_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let cc = random_coords(&mut rng, 10);
        let cf = Tensor::full(&[10, 3], 2.5);
        let fine = random_coords(&mut rng, 12);
        let out = interpolate_up(&cc, &cf, &fine, 3).unwrap();
        for &v in out.data() {
            assert!((v - 2.5).abs() < 1e-9);
        }
    }
}
