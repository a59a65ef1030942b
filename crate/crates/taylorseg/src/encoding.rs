//! Trigonometric positional encodings, the high-order kernel function, and the
//! low/high-order convolution pair behind both TaylorConv variants.

use serde::Serialize;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::scalar::{real, Real};
use crate::tensor::Tensor;

/// Frequency schedule for the trigonometric positional encodings:
/// `u_i = theta^(i / bands)` for band i in [0, bands).
#[derive(Debug, Clone, Serialize)]
pub struct PEConfig {
    pub bands: usize,
    pub theta: f64,
}

impl Default for PEConfig {
    fn default() -> Self {
        PEConfig {
            bands: 20,
            theta: 30.0,
        }
    }
}

impl PEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bands < 1 {
            return Err(Error::Config("PE bands must be >= 1".into()));
        }
        if self.theta <= 1.0 {
            return Err(Error::Config("PE theta must be > 1".into()));
        }
        Ok(())
    }

    /// Output width for a d-dimensional input.
    pub fn out_dim(&self, d: usize) -> usize {
        2 * d * self.bands
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.bands)
            .map(|i| self.theta.powf(i as f64 / self.bands as f64))
            .collect()
    }
}

/// Exponent of the high-order kernel: a fixed integer or a learnable real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PMode {
    Fixed(i32),
    Learnable,
}

/// High-order kernel configuration: T = sign(w * delta)^s * |w * delta|^p.
/// (s=1, p=1) is the affine basis function, (s=0, p=2) the radial one.
#[derive(Debug, Clone, Serialize)]
pub struct KernelConfig {
    pub s: u8,
    pub p: PMode,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            s: 1,
            p: PMode::Learnable,
        }
    }
}

impl KernelConfig {
    pub fn abf() -> Self {
        KernelConfig {
            s: 1,
            p: PMode::Fixed(1),
        }
    }

    pub fn rbf() -> Self {
        KernelConfig {
            s: 0,
            p: PMode::Fixed(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s > 1 {
            return Err(Error::Config("kernel s must be 0 or 1".into()));
        }
        if let PMode::Fixed(p) = self.p {
            if p < 1 {
                return Err(Error::Config("fixed kernel exponent must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Epsilon guard inside `exp(p * ln(|x| + eps))` for the learnable exponent.
pub const POW_EPS: f64 = 1e-8;

/// Trigonometric positional encoding of a d-dimensional point: all sin entries
/// over (dimension, band), then all cos entries, length `2 * d * bands`.
pub fn trig_pe<R: Real>(x: &[R], cfg: &PEConfig) -> Vec<R> {
    let freqs = cfg.frequencies();
    let two_pi = real::<R>(2.0 * std::f64::consts::PI);
    let mut out = Vec::with_capacity(2 * x.len() * cfg.bands);
    for &xi in x {
        for &u in &freqs {
            out.push((two_pi * real::<R>(u) * xi).sin());
        }
    }
    for &xi in x {
        for &u in &freqs {
            out.push((two_pi * real::<R>(u) * xi).cos());
        }
    }
    out
}

/// Row-wise `trig_pe`: [N, d] -> [N, 2*d*bands].
pub fn trig_pe_rows<R: Real>(m: &Tensor<R>, cfg: &PEConfig) -> Tensor<R> {
    let d = m.cols();
    let c = cfg.out_dim(d);
    let mut data = Vec::with_capacity(m.rows() * c);
    for i in 0..m.rows() {
        data.extend(trig_pe(&m.data()[i * d..(i + 1) * d], cfg));
    }
    Tensor::new(vec![m.rows(), c], data).unwrap()
}

/// Row-wise encoding padded to an exact target width: bands are derived as
/// `target / (2 * d)` and the remainder is filled with cos(0) = 1.
pub fn trig_pe_rows_target<R: Real>(m: &Tensor<R>, theta: f64, target: usize) -> Result<Tensor<R>> {
    let d = m.cols();
    if target < 2 * d {
        return Err(Error::Config(format!(
            "target width {target} cannot encode {d}-dimensional input"
        )));
    }
    let cfg = PEConfig {
        bands: target / (2 * d),
        theta,
    };
    let base = trig_pe_rows(m, &cfg);
    let pad = target - base.cols();
    if pad == 0 {
        return Ok(base);
    }
    let ones = Tensor::ones(&[m.rows(), pad]);
    Tensor::concat_cols(&[&base, &ones])
}

/// T = sign(w * delta)^s * |w * delta|^p, elementwise. `p_value` supplies the
/// current exponent when the config is in learnable mode.
pub fn high_order_kernel<R: Real>(
    delta: &Tensor<R>,
    w: &Tensor<R>,
    cfg: &KernelConfig,
    p_value: Option<f64>,
) -> Result<Tensor<R>> {
    cfg.validate()?;
    let z = w.mul(delta)?;
    let mag = match cfg.p {
        PMode::Fixed(p) => z.powi_abs(p),
        PMode::Learnable => {
            let p = p_value
                .ok_or_else(|| Error::Config("learnable kernel requires a p value".into()))?;
            z.pow_scalar(real::<R>(p), real::<R>(POW_EPS))
        }
    };
    if cfg.s == 1 {
        mag.mul(&z.signum0())
    } else {
        Ok(mag)
    }
}

/// Low-order term: channel-wise max over the (already mapped) neighbor
/// features, [k, C] -> [1, C].
pub fn loconv<R: Real>(neighbor_feats: &Tensor<R>) -> Result<Tensor<R>> {
    let (out, _) = neighbor_feats.max_pool_stride(neighbor_feats.rows())?;
    Ok(out)
}

/// High-order term: channel-wise max over the kernel responses of the relative
/// features, [k, C] each -> [1, C].
pub fn hiconv<R: Real>(
    center_feat: &Tensor<R>,
    neighbor_feats: &Tensor<R>,
    weights: &Tensor<R>,
    cfg: &KernelConfig,
    p_value: Option<f64>,
) -> Result<Tensor<R>> {
    let delta = neighbor_feats.sub(center_feat)?;
    let t = high_order_kernel(&delta, weights, cfg, p_value)?;
    loconv(&t)
}

/// Geometric input rows `[p_i, p_j, p_j - p_i]` for every (center, neighbor)
/// pair, center-major: [M*k, 9].
pub fn geo_matrix<R: Real>(
    coords: &Tensor<R>,
    centers: &[usize],
    neighbors: &[usize],
    k: usize,
) -> Tensor<R> {
    let mut data = Vec::with_capacity(centers.len() * k * 9);
    for (ci, &c) in centers.iter().enumerate() {
        let pc = &coords.data()[c * 3..(c + 1) * 3];
        for &j in &neighbors[ci * k..(ci + 1) * k] {
            let pj = &coords.data()[j * 3..(j + 1) * 3];
            data.extend_from_slice(pc);
            data.extend_from_slice(pj);
            for d in 0..3 {
                data.push(pj[d] - pc[d]);
            }
        }
    }
    Tensor::new(vec![centers.len() * k, 9], data).unwrap()
}

/// Parameter-free TaylorConv over one neighborhood (the Eq.-style two-term
/// form): blends coordinate/color encodings with the incoming feature, weights
/// the high term with a cosine geometric encoding, and max-aggregates both.
pub fn taylorconv_nn<R: Real>(
    center_coord: &[R],
    neighbor_coords: &Tensor<R>,
    neighbor_colors: &Tensor<R>,
    neighbor_feats: &Tensor<R>,
    pe: &PEConfig,
) -> Result<Tensor<R>> {
    let c = pe.out_dim(3);
    if c < 18 {
        return Err(Error::Config(
            "NN feature width below 18 cannot host the geometric encoding".into(),
        ));
    }
    if neighbor_feats.cols() != c {
        return Err(Error::Shape(format!(
            "neighbor features must have {c} channels"
        )));
    }
    let k = neighbor_coords.rows();
    let ep = trig_pe_rows(neighbor_coords, pe);
    let ec = trig_pe_rows(neighbor_colors, pe);
    let third = real::<R>(1.0 / 3.0);
    let blend = ep.add(&ec)?.add(neighbor_feats)?.scale(third);
    let centers = vec![0usize];
    let nbr_ids: Vec<usize> = (0..k).collect();
    let mut coords_all = vec![R::zero(); (k + 1) * 3];
    coords_all[..3].copy_from_slice(center_coord);
    coords_all[3..].copy_from_slice(neighbor_coords.data());
    let coords_all = Tensor::new(vec![k + 1, 3], coords_all)?;
    let nbr_shift: Vec<usize> = nbr_ids.iter().map(|&j| j + 1).collect();
    let geo = geo_matrix(&coords_all, &centers, &nbr_shift, k);
    let two_pi = real::<R>(2.0 * std::f64::consts::PI);
    let w = trig_pe_rows_target(&geo, pe.theta, c)?.scale(two_pi).cos();
    let lo = loconv(&blend)?;
    let hi = loconv(&w.mul(&blend)?)?;
    lo.add(&hi)
}

/// Tracked high-order kernel on an elementwise product `z = w * delta`.
/// `p_var` is the learnable exponent leaf when the config is learnable.
pub fn kernel_tracked<R: Real>(
    z: &Var<R>,
    cfg: &KernelConfig,
    p_var: Option<&Var<R>>,
) -> Result<Var<R>> {
    cfg.validate()?;
    let mag = match cfg.p {
        PMode::Fixed(p) => z.powi_abs(p),
        PMode::Learnable => {
            let p = p_var
                .ok_or_else(|| Error::Config("learnable kernel requires a p variable".into()))?;
            z.abs().add_const_scalar(real::<R>(POW_EPS)).ln().mul(p)?.exp()
        }
    };
    if cfg.s == 1 {
        mag.mul(&z.sign())
    } else {
        Ok(mag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trig_pe_of_zero() {
        let cfg = PEConfig::default();
        let out = trig_pe::<f64>(&[0.0, 0.0, 0.0], &cfg);
        assert_eq!(out.len(), 120);
        let (sins, coss) = out.split_at(60);
        assert!(sins.iter().all(|&v| v == 0.0));
        assert!(coss.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn trig_pe_quarter_period() {
        let cfg = PEConfig {
            bands: 1,
            theta: 7.0,
        };
        let out = trig_pe::<f64>(&[0.25], &cfg);
        assert!((out[0] - 1.0).abs() < 1e-12);
        assert!(out[1].abs() < 1e-12);
    }

    #[test]
    fn trig_pe_full_period_shift_matches_in_band() {
        let cfg = PEConfig::default();
        let freqs = cfg.frequencies();
        let x = 0.37f64;
        let base = trig_pe::<f64>(&[x], &cfg);
        for (i, &u) in freqs.iter().enumerate() {
            let shifted = trig_pe::<f64>(&[x + 1.0 / u], &cfg);
            assert!((base[i] - shifted[i]).abs() < 1e-9, "sin band {i}");
            assert!(
                (base[cfg.bands + i] - shifted[cfg.bands + i]).abs() < 1e-9,
                "cos band {i}"
            );
        }
    }

    #[test]
    fn trig_pe_target_pads_with_ones() {
        let m = Tensor::from_rows(&[vec![0.1; 9]]).unwrap();
        let out = trig_pe_rows_target(&m, 30.0, 120).unwrap();
        assert_eq!(out.cols(), 120);
        // 2 * 9 * 6 = 108 encoded entries, 12 padded ones.
        for j in 108..120 {
            assert_eq!(out.at(0, j), 1.0);
        }
    }

    #[test]
    fn kernel_abf_degeneration() {
        // s=1, p=1 with a zero reference reproduces w * f elementwise.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let f = Tensor::<f64>::from_fn(&[1, 8], |_| rng.gen_range(-2.0..2.0));
            let w = Tensor::from_fn(&[1, 8], |_| rng.gen_range(-2.0..2.0));
            let t = high_order_kernel(&f, &w, &KernelConfig::abf(), None).unwrap();
            let expect = w.mul(&f).unwrap();
            for (a, b) in t.data().iter().zip(expect.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_rbf_degeneration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let d = Tensor::<f64>::from_fn(&[1, 8], |_| rng.gen_range(-2.0..2.0));
            let w = Tensor::from_fn(&[1, 8], |_| rng.gen_range(-2.0..2.0));
            let t = high_order_kernel(&d, &w, &KernelConfig::rbf(), None).unwrap();
            for (a, &z) in t.data().iter().zip(w.mul(&d).unwrap().data()) {
                assert!((a - z * z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_forced_value() {
        let d = Tensor::row(vec![-3.0]).unwrap();
        let w = Tensor::row(vec![2.0]).unwrap();
        let cfg = KernelConfig {
            s: 1,
            p: PMode::Fixed(2),
        };
        let t = high_order_kernel(&d, &w, &cfg, None).unwrap();
        assert_eq!(t.data()[0], -36.0);
    }

    #[test]
    fn kernel_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Tensor::<f64>::from_fn(&[1, 6], |_| rng.gen_range(-1.0..1.0));
        let w = Tensor::from_fn(&[1, 6], |_| rng.gen_range(-1.0..1.0));
        // Odd in delta for s=1 and odd p.
        let cfg = KernelConfig {
            s: 1,
            p: PMode::Fixed(3),
        };
        let tp = high_order_kernel(&d, &w, &cfg, None).unwrap();
        let tn = high_order_kernel(&d.neg(), &w, &cfg, None).unwrap();
        for (a, b) in tp.data().iter().zip(tn.data()) {
            assert!((a + b).abs() < 1e-12);
        }
        // Even for s=0.
        let tp = high_order_kernel(&d, &w, &KernelConfig::rbf(), None).unwrap();
        let tn = high_order_kernel(&d.neg(), &w, &KernelConfig::rbf(), None).unwrap();
        for (a, b) in tp.data().iter().zip(tn.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loconv_k1_is_identity() {
        let f = Tensor::row(vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(loconv(&f).unwrap(), f);
    }

    #[test]
    fn loconv_identical_neighbors() {
        let row = vec![0.3, -0.7, 2.0];
        let f = Tensor::from_rows(&[row.clone(), row.clone(), row.clone()]).unwrap();
        assert_eq!(loconv(&f).unwrap(), Tensor::row(row).unwrap());
    }

    #[test]
    fn loconv_matches_naive_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Tensor::from_fn(&[16, 8], |_| rng.gen_range(-3.0..3.0));
        let lo = loconv(&f).unwrap();
        for c in 0..8 {
            let expect = (0..16).map(|r| f.at(r, c)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(lo.at(0, c), expect);
        }
    }

    #[test]
    fn hiconv_zero_when_neighbors_equal_center() {
        let center = Tensor::row(vec![1.0, 2.0, 3.0]).unwrap();
        let nbrs = Tensor::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.0, 3.0],
        ])
        .unwrap();
        let w = Tensor::from_fn(&[2, 3], |i| i as f64 + 1.0);
        let out = hiconv(&center, &nbrs, &w, &KernelConfig::abf(), None).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hiconv_k1_reduces_to_kernel() {
        let center = Tensor::row(vec![0.5, -0.5]).unwrap();
        let nbrs = Tensor::from_rows(&[vec![2.0, 1.0]]).unwrap();
        let w = Tensor::from_rows(&[vec![-1.0, 3.0]]).unwrap();
        let cfg = KernelConfig::abf();
        let out = hiconv(&center, &nbrs, &w, &cfg, None).unwrap();
        let delta = nbrs.sub(&center).unwrap();
        let expect = high_order_kernel(&delta, &w, &cfg, None).unwrap();
        assert_eq!(out, expect);
    }

    #[test]
    fn hiconv_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let center = Tensor::<f64>::from_fn(&[1, 6], |_| rng.gen_range(-1.0..1.0));
        let nbrs = Tensor::from_fn(&[9, 6], |_| rng.gen_range(-1.0..1.0));
        let w = Tensor::from_fn(&[9, 6], |_| rng.gen_range(-1.0..1.0));
        let cfg = KernelConfig {
            s: 1,
            p: PMode::Fixed(2),
        };
        let out = hiconv(&center, &nbrs, &w, &cfg, None).unwrap();
        for c in 0..6 {
            let mut expect = f64::NEG_INFINITY;
            for r in 0..9 {
                let z = w.at(r, c) * (nbrs.at(r, c) - center.at(0, c));
                let t = z.signum() * z.abs().powi(2);
                expect = expect.max(t);
            }
            assert!((out.at(0, c) - expect).abs() < 1e-12);
        }
    }

    fn random_nn_inputs(
        rng: &mut ChaCha8Rng,
        k: usize,
        pe: &PEConfig,
    ) -> ([f64; 3], Tensor<f64>, Tensor<f64>, Tensor<f64>) {
        let c = pe.out_dim(3);
        let center = [
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
        ];
        let coords = Tensor::from_fn(&[k, 3], |_| rng.gen_range(0.0..1.0));
        let colors = Tensor::from_fn(&[k, 3], |_| rng.gen_range(0.0..1.0));
        let feats = Tensor::from_fn(&[k, c], |_| rng.gen_range(-1.0..1.0));
        (center, coords, colors, feats)
    }

    #[test]
    fn taylorconv_nn_output_bounded() {
        // With encodings and features in [-1, 1] both terms stay in [-1, 1],
        // so the sum is within [-2, 2] per channel.
        let pe = PEConfig {
            bands: 4,
            theta: 30.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let (center, coords, colors, feats) = random_nn_inputs(&mut rng, 5, &pe);
            let out = taylorconv_nn(&center, &coords, &colors, &feats, &pe).unwrap();
            for &v in out.data() {
                assert!((-2.0..=2.0).contains(&v), "out of bound: {v}");
            }
        }
    }

    #[test]
    fn taylorconv_nn_permutation_invariant() {
        let pe = PEConfig {
            bands: 4,
            theta: 30.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = 6;
        let (center, coords, colors, feats) = random_nn_inputs(&mut rng, k, &pe);
        let base = taylorconv_nn(&center, &coords, &colors, &feats, &pe).unwrap();
        for _ in 0..50 {
            let mut perm: Vec<usize> = (0..k).collect();
            for i in (1..k).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let out = taylorconv_nn(
                &center,
                &coords.gather_rows(&perm).unwrap(),
                &colors.gather_rows(&perm).unwrap(),
                &feats.gather_rows(&perm).unwrap(),
                &pe,
            )
            .unwrap();
            assert_eq!(out, base);
        }
    }

    #[test]
    fn taylorconv_nn_duplicated_neighbors_unchanged() {
        // Duplicating every neighborhood member (k even, no pre-existing
        // duplicates) leaves the output bit-identical: both terms are
        // channel-wise maxima, and duplicates contribute identical rows.
        let pe = PEConfig {
            bands: 4,
            theta: 30.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let k = 4;
            let (center, coords, colors, feats) = random_nn_inputs(&mut rng, k, &pe);
            let dup: Vec<usize> = (0..k).chain(0..k).collect();
            let base = taylorconv_nn(&center, &coords, &colors, &feats, &pe).unwrap();
            let doubled = taylorconv_nn(
                &center,
                &coords.gather_rows(&dup).unwrap(),
                &colors.gather_rows(&dup).unwrap(),
                &feats.gather_rows(&dup).unwrap(),
                &pe,
            )
            .unwrap();
            assert_eq!(base, doubled);
        }
    }

    #[test]
    fn taylorconv_nn_k1_reduction() {
        let pe = PEConfig {
            bands: 4,
            theta: 30.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (center, coords, colors, feats) = random_nn_inputs(&mut rng, 1, &pe);
        let out = taylorconv_nn(&center, &coords, &colors, &feats, &pe).unwrap();
        // k=1: out = f_1 + w_1 * f_1 with the blend and cosine weight.
        let c = pe.out_dim(3);
        let blend = trig_pe_rows(&coords, &pe)
            .add(&trig_pe_rows(&colors, &pe))
            .unwrap()
            .add(&feats)
            .unwrap()
            .scale(1.0 / 3.0);
        let mut geo = center.to_vec();
        geo.extend(coords.data());
        for d in 0..3 {
            geo.push(coords.data()[d] - center[d]);
        }
        let geo = Tensor::row(geo).unwrap();
        let w = trig_pe_rows_target(&geo, pe.theta, c)
            .unwrap()
            .scale(2.0 * std::f64::consts::PI)
            .cos();
        let expect = blend.add(&w.mul(&blend).unwrap()).unwrap();
        for (a, b) in out.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn taylorconv_nn_rejects_narrow_width() {
        let pe = PEConfig {
            bands: 2,
            theta: 30.0,
        };
        // 2*3*2 = 12 < 18
        let center = [0.0, 0.0, 0.0];
        let coords = Tensor::<f64>::zeros(&[2, 3]);
        let colors = Tensor::<f64>::zeros(&[2, 3]);
        let feats = Tensor::<f64>::zeros(&[2, 12]);
        assert!(taylorconv_nn(&center, &coords, &colors, &feats, &pe).is_err());
    }
}
