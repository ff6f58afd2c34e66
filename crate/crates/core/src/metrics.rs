//! Loss terms and error metrics for comparing corrected fields with ground truth.
//!
//! Images are handled as channel stacks (`&[Array2<f64>]`); a complex field
//! maps to the two channels `[amplitude, phase]`. Every expectation is the
//! arithmetic mean over pixels and channels of one image pair.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;

/// Parameters of the contrast-only structural similarity term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    /// Side of the uniform square window; odd and at least 3.
    pub window: usize,
    pub alpha: f64,
    /// Stabilizer added to numerator and denominator.
    pub c: f64,
}

/// Fraction of the dynamic range used for the stabilizer, `c = (K * L)^2`.
pub const SSIM_K: f64 = 0.03;

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams { window: 11, alpha: 1.0, c: SSIM_K * SSIM_K }
    }
}

impl SsimParams {
    pub fn for_dynamic_range(range: f64) -> Self {
        let l = if range > 0.0 { range } else { 1.0 };
        SsimParams { c: (SSIM_K * l).powi(2), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("ssim window must be odd and >= 3, got {}", self.window)));
        }
        if !(self.alpha > 0.0) || !(self.c > 0.0) {
            return Err(Error::Config(format!(
                "ssim alpha and c must be positive (alpha={}, c={})",
                self.alpha, self.c
            )));
        }
        Ok(())
    }
}

pub fn field_channels(field: &ComplexField) -> [Array2<f64>; 2] {
    [field.amplitude.clone(), field.phase.clone()]
}

fn check_shapes(x: &[Array2<f64>], y: &[Array2<f64>]) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} channels", x.len(), y.len())));
    }
    for (a, b) in x.iter().zip(y) {
        if a.dim() != b.dim() {
            return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
        }
    }
    Ok(())
}

/// Mean absolute difference over all pixels and channels.
pub fn loss_l1(x: &[Array2<f64>], y: &[Array2<f64>]) -> Result<f64> {
    check_shapes(x, y)?;
    let n: usize = x.iter().map(|a| a.len()).sum();
    let total: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| Zip::from(a).and(b).fold(0.0, |acc, &p, &q| acc + (q - p).abs()))
        .sum();
    Ok(total / n as f64)
}

/// Local standard deviation for every fully contained `window` x `window`
/// neighbourhood, from summed-area tables of the mean-removed image.
fn local_std(img: &Array2<f64>, window: usize) -> Array2<f64> {
    let (h, w) = img.dim();
    let mean = img.mean().unwrap_or(0.0);
    let mut s1 = Array2::<f64>::zeros((h + 1, w + 1));
    let mut s2 = Array2::<f64>::zeros((h + 1, w + 1));
    for r in 0..h {
        for c in 0..w {
            let v = img[[r, c]] - mean;
            s1[[r + 1, c + 1]] = v + s1[[r, c + 1]] + s1[[r + 1, c]] - s1[[r, c]];
            s2[[r + 1, c + 1]] = v * v + s2[[r, c + 1]] + s2[[r + 1, c]] - s2[[r, c]];
        }
    }
    let n = (window * window) as f64;
    Array2::from_shape_fn((h + 1 - window, w + 1 - window), |(r, c)| {
        let rect = |s: &Array2<f64>| {
            s[[r + window, c + window]] - s[[r, c + window]] - s[[r + window, c]] + s[[r, c]]
        };
        let m = rect(&s1) / n;
        (rect(&s2) / n - m * m).max(0.0).sqrt()
    })
}

/// Mean of `1 - SSIM_contrast` over all valid window positions and channels.
pub fn loss_ssim_contrast(x: &[Array2<f64>], y: &[Array2<f64>], params: &SsimParams) -> Result<f64> {
    check_shapes(x, y)?;
    params.validate()?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b) in x.iter().zip(y) {
        let (h, w) = a.dim();
        if h < params.window || w < params.window {
            return Err(Error::Shape(format!(
                "image {h}x{w} is smaller than the {}-pixel window",
                params.window
            )));
        }
        let sa = local_std(a, params.window);
        let sb = local_std(b, params.window);
        Zip::from(&sa).and(&sb).for_each(|&sx, &sy| {
            let ssim = ((2.0 * sx * sy + params.c) / (sx * sx + sy * sy + params.c)).powf(params.alpha);
            total += 1.0 - ssim;
        });
        count += sa.len();
    }
    Ok(total / count as f64)
}

/// SSIM loss with a per-channel stabilizer derived from the ground-truth
/// channel's dynamic range.
pub fn loss_ssim_adaptive(x: &[Array2<f64>], y: &[Array2<f64>], window: usize, alpha: f64) -> Result<f64> {
    check_shapes(x, y)?;
    let mut total = 0.0;
    for (a, b) in x.iter().zip(y) {
        let params = SsimParams { window, alpha, ..SsimParams::for_dynamic_range(dynamic_range(b)) };
        total += loss_ssim_contrast(std::slice::from_ref(a), std::slice::from_ref(b), &params)?;
    }
    Ok(total / x.len() as f64)
}

pub fn dynamic_range(img: &Array2<f64>) -> f64 {
    let (lo, hi) = img
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

pub fn loss_combined(x: &[Array2<f64>], y: &[Array2<f64>], lambda: f64, params: &SsimParams) -> Result<f64> {
    let l1 = loss_l1(x, y)?;
    if lambda == 0.0 {
        return Ok(l1);
    }
    Ok(l1 + lambda * loss_ssim_contrast(x, y, params)?)
}

/// Field cross-correlation error: one minus the normalized magnitude of the
/// complex inner product. Zero for fields equal up to a complex scalar.
pub fn fce(e_gt: &ComplexField, e_out: &ComplexField) -> Result<f64> {
    if e_gt.dim() != e_out.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", e_gt.dim(), e_out.dim())));
    }
    let mut inner = Complex64::default();
    let mut n_gt = 0.0;
    let mut n_out = 0.0;
    Zip::from(&e_gt.amplitude)
        .and(&e_gt.phase)
        .and(&e_out.amplitude)
        .and(&e_out.phase)
        .for_each(|&ag, &pg, &ao, &po| {
            inner += Complex64::from_polar(ag * ao, po - pg);
            n_gt += ag * ag;
            n_out += ao * ao;
        });
    if n_gt == 0.0 && n_out == 0.0 {
        return Err(Error::DegenerateField);
    }
    if n_gt == 0.0 || n_out == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - inner.norm() / (n_gt * n_out).sqrt()).clamp(0.0, 1.0))
}

pub fn rmse_phase(phi_gt: &Array2<f64>, phi_out: &Array2<f64>, remove_offset: bool) -> Result<f64> {
    if phi_gt.dim() != phi_out.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", phi_gt.dim(), phi_out.dim())));
    }
    let n = phi_gt.len() as f64;
    let offset = if remove_offset {
        Zip::from(phi_gt).and(phi_out).fold(0.0, |acc, &a, &b| acc + (a - b)) / n
    } else {
        0.0
    };
    let ss = Zip::from(phi_gt)
        .and(phi_out)
        .fold(0.0, |acc, &a, &b| acc + (a - b - offset).powi(2));
    Ok((ss / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    /// 101 bins over [-1, 1] rad, so zero falls in the middle of a bin.
    fn default() -> Self {
        HistogramSpec { lo: -1.0, hi: 1.0, bins: 101 }
    }
}

/// Fractional histogram; out-of-range samples are counted in the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub fractions: Vec<f64>,
}

impl Histogram {
    pub fn build<'a>(values: impl IntoIterator<Item = &'a f64>, spec: HistogramSpec) -> Result<Self> {
        if spec.bins == 0 || !(spec.hi > spec.lo) {
            return Err(Error::Config(format!("bad histogram spec {spec:?}")));
        }
        let width = (spec.hi - spec.lo) / spec.bins as f64;
        let mut counts = vec![0u64; spec.bins];
        let mut n = 0u64;
        for &v in values {
            if v.is_nan() {
                continue;
            }
            let idx = ((v - spec.lo) / width).floor();
            let idx = if idx < 0.0 { 0 } else { (idx as usize).min(spec.bins - 1) };
            counts[idx] += 1;
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Histogram {
            centers: (0..spec.bins).map(|i| spec.lo + (i as f64 + 0.5) * width).collect(),
            fractions: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center,fraction\n");
        for (c, f) in self.centers.iter().zip(&self.fractions) {
            out.push_str(&format!("{c},{f}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fce: f64,
    pub rmse_phase: f64,
    pub loss_l1: f64,
    pub loss_ssim: f64,
    pub loss_combined: f64,
    pub error_std: f64,
    pub error_histogram: Histogram,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coherent_noise_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coherent_noise_histogram: Option<Histogram>,
}

fn population_std<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Loss weight between the L1 and SSIM terms.
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Full comparison of a corrected field against ground truth. The error map
/// is `phi_gt - phi_out`; with a background mask the ground-truth phase over
/// the mask is reported as coherent noise.
pub fn error_report(
    e_gt: &ComplexField,
    e_out: &ComplexField,
    background_mask: Option<&Array2<bool>>,
    bins: HistogramSpec,
) -> Result<MetricsReport> {
    if e_gt.dim() != e_out.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", e_gt.dim(), e_out.dim())));
    }
    let error_map = &e_gt.phase - &e_out.phase;
    let gt = field_channels(e_gt);
    let out = field_channels(e_out);
    let l1 = loss_l1(&out, &gt)?;
    let window = SsimParams::default().window;
    let ssim = if e_gt.height() >= window && e_gt.width() >= window {
        loss_ssim_adaptive(&out, &gt, window, 1.0)?
    } else {
        0.0
    };
    let (coherent_noise_std, coherent_noise_histogram) = match background_mask {
        Some(mask) => {
            if mask.dim() != e_gt.dim() {
                return Err(Error::Shape(format!("mask {:?} vs field {:?}", mask.dim(), e_gt.dim())));
            }
            let noise: Vec<f64> = Zip::from(&e_gt.phase)
                .and(mask)
                .fold(Vec::new(), |mut acc, &p, &m| {
                    if m {
                        acc.push(p);
                    }
                    acc
                });
            if noise.is_empty() {
                return Err(Error::EmptyMask);
            }
            (Some(population_std(noise.iter())), Some(Histogram::build(noise.iter(), bins)?))
        }
        None => (None, None),
    };
    Ok(MetricsReport {
        fce: fce(e_gt, e_out)?,
        rmse_phase: rmse_phase(&e_gt.phase, &e_out.phase, false)?,
        loss_l1: l1,
        loss_ssim: ssim,
        loss_combined: l1 + DEFAULT_LAMBDA * ssim,
        error_std: population_std(error_map.iter()),
        error_histogram: Histogram::build(error_map.iter(), bins)?,
        coherent_noise_std,
        coherent_noise_histogram,
    })
}

/// Lower empirical quantile: the smallest sample `t` such that at least
/// `percentile` of the samples are `<= t`.
pub fn percentile_summary(values: &[f64], percentile: f64) -> Result<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if sorted.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..=1.0).contains(&percentile) {
        return Err(Error::Config(format!("percentile {percentile} outside [0, 1]")));
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Tolerance absorbs representation error in products like 0.85 * 100.
    let needed = ((percentile * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[needed.min(n) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn img(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Array2<f64> {
        Array2::from_shape_fn((h, w), |(r, c)| f(r, c))
    }

    fn field(phase: Array2<f64>) -> ComplexField {
        ComplexField::from_phase(phase, 0.1, 0.532)
    }

    /// Windowed standard deviation computed directly, for cross-checking.
    fn brute_std(a: &Array2<f64>, r: usize, c: usize, win: usize) -> f64 {
        let vals: Vec<f64> = (r..r + win).flat_map(|i| (c..c + win).map(move |j| (i, j))).map(|p| a[p]).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
    }

    #[test]
    fn l1_cases() {
        let x = [img(4, 4, |r, c| (r * c) as f64)];
        assert_eq!(loss_l1(&x, &x).unwrap(), 0.0);
        let y = [x[0].mapv(|v| v - 0.25)];
        assert!((loss_l1(&x, &y).unwrap() - 0.25).abs() < 1e-15);
        let x = [Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap()];
        let y = [Array2::from_shape_vec((1, 2), vec![2.0, 4.0]).unwrap()];
        assert_eq!(loss_l1(&x, &y).unwrap(), 1.5);
        assert!(matches!(loss_l1(&x, &[img(2, 2, |_, _| 0.0)]), Err(Error::Shape(_))));
    }

    #[test]
    fn ssim_identity_and_constant() {
        let x = [img(20, 20, |r, c| ((r * 7 + c * 3) % 5) as f64)];
        let p = SsimParams::default();
        assert!(loss_ssim_contrast(&x, &x, &p).unwrap().abs() < 1e-12);
        let a = [img(20, 20, |_, _| 3.0)];
        let b = [img(20, 20, |_, _| -1.0)];
        assert!(loss_ssim_contrast(&a, &b, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ssim_doubling_matches_closed_form() {
        // sigma_y = 2 sigma_x in every window, so each window contributes
        // (4 s^2 + c) / (5 s^2 + c) with s taken from a direct windowed sum.
        let win = 3;
        let x = img(12, 12, |r, c| if (r + c) % 2 == 0 { 1.0 } else { -1.0 });
        let y = x.mapv(|v| 2.0 * v);
        let p = SsimParams { window: win, alpha: 1.0, c: 0.01 };
        let mut expected = 0.0;
        let mut n = 0.0;
        for r in 0..=12 - win {
            for c in 0..=12 - win {
                let s = brute_std(&x, r, c, win);
                expected += 1.0 - (4.0 * s * s + p.c) / (5.0 * s * s + p.c);
                n += 1.0;
            }
        }
        let got = loss_ssim_contrast(&[x], &[y], &p).unwrap();
        assert!((got - expected / n).abs() < 1e-12, "{got} vs {}", expected / n);
    }

    #[test]
    fn local_std_matches_brute_force() {
        let a = img(9, 13, |r, c| ((r * 31 + c * 17) % 11) as f64 * 0.3 + 100.0);
        let s = local_std(&a, 5);
        for ((r, c), v) in s.indexed_iter() {
            assert!((v - brute_std(&a, r, c, 5)).abs() < 1e-9);
        }
    }

    #[test]
    fn ssim_rejects_small_images() {
        let x = [img(5, 20, |_, _| 0.0)];
        assert!(matches!(
            loss_ssim_contrast(&x, &x, &SsimParams::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn combined_loss_cases() {
        let x = [img(16, 16, |r, c| (r as f64).sin() + c as f64 * 0.1)];
        let p = SsimParams::default();
        assert_eq!(loss_combined(&x, &x, 1.0, &p).unwrap(), 0.0);
        let y = [x[0].mapv(|v| v * 1.5 + 0.2)];
        assert_eq!(loss_combined(&x, &y, 0.0, &p).unwrap(), loss_l1(&x, &y).unwrap());
        let l1 = loss_l1(&x, &y).unwrap();
        let ss = loss_ssim_contrast(&x, &y, &p).unwrap();
        assert!((loss_combined(&x, &y, 1.0, &p).unwrap() - (l1 + ss)).abs() < 1e-15);
    }

    #[test]
    fn fce_cases() {
        let a = field(img(8, 8, |r, c| 0.3 * r as f64 - 0.1 * c as f64));
        assert!(fce(&a, &a).unwrap().abs() < 1e-15);
        let rotated = field(a.phase.mapv(|p| p + 1.234));
        assert!(fce(&a, &rotated).unwrap().abs() < 1e-12);
        let w = 16;
        let e1 = field(img(4, w, |_, c| 2.0 * PI * c as f64 / w as f64));
        let e2 = field(img(4, w, |_, c| 4.0 * PI * c as f64 / w as f64));
        assert!((fce(&e1, &e2).unwrap() - 1.0).abs() < 1e-12);
        let mut z = a.clone();
        z.amplitude.fill(0.0);
        assert!(matches!(fce(&z, &z), Err(Error::DegenerateField)));
    }

    #[test]
    fn rmse_cases() {
        let a = img(2, 2, |_, _| 0.0);
        assert_eq!(rmse_phase(&a, &a, false).unwrap(), 0.0);
        let b = a.mapv(|_| 0.5);
        assert!((rmse_phase(&a, &b, false).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse_phase(&a, &b, true).unwrap().abs() < 1e-15);
        let d = Array2::from_shape_vec((1, 4), vec![0.1, -0.1, 0.1, -0.1]).unwrap();
        assert!((rmse_phase(&d, &Array2::zeros((1, 4)), false).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(rmse_phase(&a, &img(3, 2, |_, _| 0.0), false), Err(Error::Shape(_))));
    }

    #[test]
    fn report_for_perfect_prediction() {
        let f = field(img(32, 32, |r, c| ((r + c) as f64 * 0.05).sin()));
        let rep = error_report(&f, &f, None, HistogramSpec::default()).unwrap();
        assert_eq!(rep.error_std, 0.0);
        assert_eq!(rep.fce, 0.0);
        assert_eq!(rep.loss_combined, 0.0);
        let zero_bin = rep.error_histogram.centers.iter().position(|c| c.abs() < 1e-12).unwrap();
        assert_eq!(rep.error_histogram.fractions[zero_bin], 1.0);
    }

    #[test]
    fn report_symmetric_histogram() {
        let gt = field(img(10, 10, |_, _| 0.0));
        let out = field(img(10, 10, |r, c| if (r + c) % 2 == 0 { 0.37 } else { -0.37 }));
        let rep = error_report(&gt, &out, None, HistogramSpec::default()).unwrap();
        let f = &rep.error_histogram.fractions;
        for i in 0..f.len() {
            assert_eq!(f[i], f[f.len() - 1 - i]);
        }
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn report_recovers_gaussian_error_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let gt = field(img(256, 256, |r, c| (r as f64 * 0.01).sin() + c as f64 * 0.001));
        let out = field(&gt.phase + &Array2::from_shape_simple_fn((256, 256), || normal.sample(&mut rng)));
        let rep = error_report(&gt, &out, None, HistogramSpec::default()).unwrap();
        assert!((rep.error_std - 0.1).abs() < 0.005, "std {}", rep.error_std);
    }

    #[test]
    fn coherent_noise_from_mask() {
        let gt = field(img(16, 16, |r, _| if r < 8 { 0.2 } else { -0.2 }));
        let mask = Array2::from_shape_fn((16, 16), |(_, c)| c < 4);
        let rep = error_report(&gt, &gt, Some(&mask), HistogramSpec::default()).unwrap();
        assert!((rep.coherent_noise_std.unwrap() - 0.2).abs() < 1e-12);
        let empty = Array2::from_elem((16, 16), false);
        assert!(matches!(
            error_report(&gt, &gt, Some(&empty), HistogramSpec::default()),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn percentile_cases() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(percentile_summary(&v, 0.85).unwrap(), 85.0);
        assert_eq!(percentile_summary(&[0.7], 0.1).unwrap(), 0.7);
        assert_eq!(percentile_summary(&[0.7], 1.0).unwrap(), 0.7);
        assert!(matches!(percentile_summary(&[], 0.5), Err(Error::EmptyInput)));
    }

    fn brute_percentile(values: &[f64], p: f64) -> f64 {
        let mut cands = values.to_vec();
        cands.sort_by(f64::total_cmp);
        for &t in &cands {
            let k = values.iter().filter(|&&v| v <= t).count();
            if k as f64 >= p * values.len() as f64 - 1e-9 {
                return t;
            }
        }
        unreachable!()
    }

    #[test]
    fn percentile_with_ties() {
        let v = [0.1, 0.2, 0.2, 0.2, 0.5, 0.9];
        for p in [0.0, 0.2, 0.34, 0.5, 0.67, 0.68, 0.99, 1.0] {
            assert_eq!(percentile_summary(&v, p).unwrap(), brute_percentile(&v, p), "p={p}");
        }
    }

    proptest! {
        #[test]
        fn percentile_matches_brute_force(
            v in proptest::collection::vec((0i32..20).prop_map(|x| x as f64 * 0.05), 1..40),
            p in 0.0f64..=1.0,
        ) {
            prop_assert_eq!(percentile_summary(&v, p).unwrap(), brute_percentile(&v, p));
        }

        #[test]
        fn fce_symmetric_and_scale_invariant(
            phases in proptest::collection::vec(-3.0f64..3.0, 16),
            amps in proptest::collection::vec(0.1f64..2.0, 16),
            other in proptest::collection::vec(-3.0f64..3.0, 16),
            s_mag in 0.1f64..10.0,
            s_arg in -3.0f64..3.0,
        ) {
            let a = ComplexField::new(
                Array2::from_shape_vec((4, 4), amps.clone()).unwrap(),
                Array2::from_shape_vec((4, 4), phases).unwrap(), 0.1, 0.5).unwrap();
            let b = ComplexField::new(
                Array2::from_shape_vec((4, 4), amps).unwrap(),
                Array2::from_shape_vec((4, 4), other).unwrap(), 0.1, 0.5).unwrap();
            let ab = fce(&a, &b).unwrap();
            prop_assert!((ab - fce(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            let scaled = ComplexField {
                amplitude: b.amplitude.mapv(|x| x * s_mag),
                phase: b.phase.mapv(|p| p + s_arg),
                ..b.clone()
            };
            prop_assert!((fce(&a, &scaled).unwrap() - ab).abs() < 1e-9);
        }

        #[test]
        fn rmse_offset_invariance(
            a in proptest::collection::vec(-5.0f64..5.0, 9),
            b in proptest::collection::vec(-5.0f64..5.0, 9),
            k in -10.0f64..10.0,
        ) {
            let a = Array2::from_shape_vec((3, 3), a).unwrap();
            let b = Array2::from_shape_vec((3, 3), b).unwrap();
            let base = rmse_phase(&a, &b, true).unwrap();
            prop_assert!((rmse_phase(&a.mapv(|v| v + k), &b, true).unwrap() - base).abs() < 1e-9);
        }

        #[test]
        fn combined_dominates_l1(
            a in proptest::collection::vec(-1.0f64..1.0, 64),
            b in proptest::collection::vec(-1.0f64..1.0, 64),
        ) {
            let x = [Array2::from_shape_vec((8, 8), a).unwrap()];
            let y = [Array2::from_shape_vec((8, 8), b).unwrap()];
            let p = SsimParams { window: 3, ..SsimParams::default() };
            prop_assert!(loss_combined(&x, &y, 1.0, &p).unwrap() >= loss_l1(&x, &y).unwrap());
        }

        #[test]
        fn histogram_sums_to_one_and_ignores_order(
            mut v in proptest::collection::vec(-2.0f64..2.0, 1..200),
        ) {
            let h1 = Histogram::build(v.iter(), HistogramSpec::default()).unwrap();
            prop_assert!((h1.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            v.reverse();
            let h2 = Histogram::build(v.iter(), HistogramSpec::default()).unwrap();
            prop_assert_eq!(h1, h2);
        }
    }
}
