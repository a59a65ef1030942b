//! Synthetic labeled scenes: geometric primitives with class-correlated
//! colors, placed without overlap inside the unit cube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::tensor::Tensor;

use super::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimitiveKind {
    Plane,
    Sphere,
    Box,
    Cylinder,
}

#[derive(Debug, Clone)]
pub struct ClassSpec {
    pub kind: PrimitiveKind,
    /// Mean RGB in [0,1].
    pub color: [f64; 3],
    /// Canonical region center, jittered slightly per scene. Classes without
    /// an anchor are placed by rejection sampling. Anchors make absolute
    /// position a class signal, the way floor/ceiling height is in real
    /// indoor scans.
    pub anchor: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub classes: Vec<ClassSpec>,
    pub points: usize,
    /// Gaussian coordinate noise sigma.
    pub noise: f64,
    /// Uniform per-channel color jitter half-width.
    pub color_jitter: f64,
    /// Side length of each primitive's exclusive region.
    pub region_side: f64,
    /// Per-scene jitter half-width applied to anchored region centers.
    pub anchor_jitter: f64,
}

/// The six-class corpus used throughout the tests: four seen shapes and two
/// unseen ones that reuse seen geometry with different colors.
pub fn standard_classes() -> Vec<ClassSpec> {
    vec![
        ClassSpec {
            kind: PrimitiveKind::Plane,
            color: [0.9, 0.1, 0.1],
            anchor: Some([0.25, 0.25, 0.3]),
        },
        ClassSpec {
            kind: PrimitiveKind::Sphere,
            color: [0.1, 0.9, 0.1],
            anchor: Some([0.75, 0.25, 0.7]),
        },
        ClassSpec {
            kind: PrimitiveKind::Box,
            color: [0.1, 0.1, 0.9],
            anchor: Some([0.25, 0.75, 0.7]),
        },
        ClassSpec {
            kind: PrimitiveKind::Cylinder,
            color: [0.9, 0.9, 0.1],
            anchor: Some([0.75, 0.75, 0.3]),
        },
        ClassSpec {
            kind: PrimitiveKind::Sphere,
            color: [0.9, 0.1, 0.9],
            anchor: Some([0.25, 0.25, 0.7]),
        },
        ClassSpec {
            kind: PrimitiveKind::Box,
            color: [0.1, 0.9, 0.9],
            anchor: Some([0.75, 0.75, 0.7]),
        },
    ]
}

pub fn standard_spec(points: usize, noise: f64) -> SceneSpec {
    SceneSpec {
        classes: standard_classes(),
        points,
        noise,
        color_jitter: 0.15,
        region_side: 0.24,
        anchor_jitter: 0.03,
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("scene needs at least 2 classes".into()));
        }
        if self.points < 2 * self.classes.len() {
            return Err(Error::Config("too few points for the class count".into()));
        }
        if self.noise < 0.0 || self.color_jitter < 0.0 || self.anchor_jitter < 0.0 {
            return Err(Error::Config("noise and jitter must be non-negative".into()));
        }
        if !(self.region_side > 0.0 && self.region_side <= 1.0) {
            return Err(Error::Config("region_side must be in (0, 1]".into()));
        }
        for c in &self.classes {
            if c.color.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Config("class color outside [0,1]".into()));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 bounded away from 0.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Non-overlapping region centers. Anchored classes sit at their anchor plus
/// a small jitter; the rest are placed by rejection sampling with a retry
/// budget, avoiding every region placed so far.
fn place_regions(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> Result<Vec<[f64; 3]>> {
    let side = spec.region_side;
    let half = side / 2.0;
    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(spec.classes.len());
    for class in &spec.classes {
        if let Some(a) = class.anchor {
            let mut c = [0.0; 3];
            for d in 0..3 {
                c[d] = (a[d] + rng.gen_range(-spec.anchor_jitter..=spec.anchor_jitter))
                    .clamp(half, 1.0 - half);
            }
            centers.push(c);
            continue;
        }
        let mut placed = false;
        for _ in 0..=100 {
            let c = [
                rng.gen_range(half..1.0 - half),
                rng.gen_range(half..1.0 - half),
                rng.gen_range(half..1.0 - half),
            ];
            let ok = centers.iter().all(|o| {
                (0..3).any(|d| (c[d] - o[d]).abs() >= side)
            });
            if ok {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Data(
                "could not place primitives without overlap after 100 retries".into(),
            ));
        }
    }
    Ok(centers)
}

fn surface_point(
    rng: &mut ChaCha8Rng,
    kind: PrimitiveKind,
    center: &[f64; 3],
    half: f64,
) -> [f64; 3] {
    match kind {
        PrimitiveKind::Plane => [
            center[0] + rng.gen_range(-half..half),
            center[1] + rng.gen_range(-half..half),
            center[2],
        ],
        PrimitiveKind::Sphere => {
            let r = half * 0.8;
            loop {
                let d = [gaussian(rng), gaussian(rng), gaussian(rng)];
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if n > 1e-9 {
                    return [
                        center[0] + r * d[0] / n,
                        center[1] + r * d[1] / n,
                        center[2] + r * d[2] / n,
                    ];
                }
            }
        }
        PrimitiveKind::Box => {
            let h = half * 0.7;
            let axis = rng.gen_range(0..3usize);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let mut p = [
                center[0] + rng.gen_range(-h..h),
                center[1] + rng.gen_range(-h..h),
                center[2] + rng.gen_range(-h..h),
            ];
            p[axis] = center[axis] + sign * h;
            p
        }
        PrimitiveKind::Cylinder => {
            let r = half * 0.5;
            let hh = half * 0.8;
            let a = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            [
                center[0] + r * a.cos(),
                center[1] + r * a.sin(),
                center[2] + rng.gen_range(-hh..hh),
            ]
        }
    }
}

/// Deterministic proportional point allocation: the remainder goes to the
/// lowest class indices.
pub fn allocate_points(total: usize, n_classes: usize) -> Vec<usize> {
    let base = total / n_classes;
    let rem = total % n_classes;
    (0..n_classes)
        .map(|i| base + usize::from(i < rem))
        .collect()
}

/// One labeled scene. Per-point label is the class index within the spec.
pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<PointCloud<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = place_regions(&mut rng, spec)?;
    let counts = allocate_points(spec.points, spec.classes.len());
    let half = spec.region_side / 2.0 * 0.9;

    let mut coords = Vec::with_capacity(spec.points * 3);
    let mut colors = Vec::with_capacity(spec.points * 3);
    let mut labels = Vec::with_capacity(spec.points);
    for (ci, (class, &count)) in spec.classes.iter().zip(&counts).enumerate() {
        for _ in 0..count {
            let mut p = surface_point(&mut rng, class.kind, &centers[ci], half);
            for v in &mut p {
                *v += spec.noise * gaussian(&mut rng);
            }
            coords.extend_from_slice(&p);
            for ch in 0..3 {
                let c = class.color[ch] + rng.gen_range(-spec.color_jitter..=spec.color_jitter);
                colors.push(c.clamp(0.0, 1.0));
            }
            labels.push(ci as u32);
        }
    }
    PointCloud::new(
        Tensor::new(vec![spec.points, 3], coords)?,
        Tensor::new(vec![spec.points, 3], colors)?,
        Some(labels),
    )
}

/// An in-memory collection of labeled scenes.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scenes: Vec<PointCloud<f64>>,
}

impl Dataset {
    pub fn scenes_with_class(&self, class: u32) -> Vec<usize> {
        self.scenes
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                s.labels
                    .as_ref()
                    .map(|l| l.contains(&class))
                    .unwrap_or(false)
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Generate `n_scenes` scenes with per-scene seeds derived from the base seed.
pub fn synth_dataset(spec: &SceneSpec, n_scenes: usize, base_seed: u64) -> Result<Dataset> {
    let scenes = (0..n_scenes)
        .map(|i| synth_scene(spec, derive_seed(base_seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { scenes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_deterministic_per_seed() {
        let spec = standard_spec(256, 0.01);
        let a = synth_scene(&spec, 5).unwrap();
        let b = synth_scene(&spec, 5).unwrap();
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.colors, b.colors);
        assert_eq!(a.labels, b.labels);
        let c = synth_scene(&spec, 6).unwrap();
        assert_ne!(a.coords, c.coords);
    }

    #[test]
    fn noiseless_plane_points_satisfy_plane_equation() {
        let mut spec = standard_spec(120, 0.0);
        spec.classes.truncate(2);
        let cloud = synth_scene(&spec, 3).unwrap();
        let labels = cloud.labels.as_ref().unwrap();
        let zs: Vec<f64> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 0)
            .map(|(i, _)| cloud.coords.at(i, 2))
            .collect();
        assert!(!zs.is_empty());
        for &z in &zs {
            assert!((z - zs[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn label_histogram_matches_allocation() {
        let spec = standard_spec(2048, 0.01);
        let cloud = synth_scene(&spec, 11).unwrap();
        let labels = cloud.labels.as_ref().unwrap();
        let counts = allocate_points(2048, 6);
        for (c, &expect) in counts.iter().enumerate() {
            let got = labels.iter().filter(|&&l| l == c as u32).count();
            assert_eq!(got, expect);
            // Within 5% of the uniform target.
            let target = 2048.0 / 6.0;
            assert!((got as f64 - target).abs() / target < 0.05);
        }
    }

    #[test]
    fn allocation_sums_to_total() {
        for total in [7, 100, 2048] {
            for n in 1..7 {
                let a = allocate_points(total, n);
                assert_eq!(a.iter().sum::<usize>(), total);
            }
        }
    }

    #[test]
    fn overlap_exhaustion_is_a_data_error() {
        let mut spec = standard_spec(64, 0.0);
        spec.region_side = 0.9;
        for c in &mut spec.classes {
            c.anchor = None;
        }
        match synth_scene(&spec, 1) {
            Err(Error::Data(_)) => {}
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn colors_in_unit_range_and_class_correlated() {
        let spec = standard_spec(512, 0.01);
        let cloud = synth_scene(&spec, 4).unwrap();
        assert!(cloud.colors.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let labels = cloud.labels.as_ref().unwrap();
        // Class 0 is red-dominant.
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 {
                assert!(cloud.colors.at(i, 0) > cloud.colors.at(i, 1));
            }
        }
    }

    #[test]
    fn anchored_regions_stay_near_their_anchor() {
        let spec = standard_spec(600, 0.0);
        for seed in 0..20 {
            let cloud = synth_scene(&spec, seed).unwrap();
            let labels = cloud.labels.as_ref().unwrap();
            for (i, &l) in labels.iter().enumerate() {
                let a = spec.classes[l as usize].anchor.unwrap();
                for d in 0..3 {
                    let bound = spec.region_side / 2.0 + spec.anchor_jitter + 1e-9;
                    assert!((cloud.coords.at(i, d) - a[d]).abs() <= bound);
                }
            }
        }
    }

    #[test]
    fn dataset_class_index() {
        let spec = standard_spec(128, 0.01);
        let ds = synth_dataset(&spec, 3, 9).unwrap();
        assert_eq!(ds.scenes.len(), 3);
        for c in 0..6 {
            assert_eq!(ds.scenes_with_class(c).len(), 3);
        }
    }
}
