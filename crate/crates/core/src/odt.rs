//! Optical diffraction tomography under the Rytov approximation.
//!
//! For a field normalized by its illumination, `E / E_i = exp(u_R)`, with the
//! detector plane through the volume centre, the Fourier diffraction theorem
//! reads
//!
//! ```text
//! DFT2(u_R)[q] = (i d k0^2 / (2 kz)) * DFT3(chi)[K],   chi = n^2 - n_m^2
//! K = (q, kz - kz_i),   k = q + k_i,   kz = sqrt(k_m^2 - |k|^2)
//! ```
//!
//! where `d` is the sampling step and both transforms are taken with the grid
//! centre at index 0. Lateral `K` always lands on a grid bin; the axial
//! component is assigned by a [`ScatterScheme`].

use ndarray::{Array3, Zip};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::{bin_frequency, fft2, fft3, fftshift3, ifft3, ifftshift2, ifftshift3};
use crate::field::ComplexField;
use crate::phantom::{OpticsConfig, RIVolume};
use crate::registry::{Named, Registry};
use crate::unwrap::phase_jumps;

pub const DEFAULT_REGULARIZATION_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EwaldSample {
    /// `(row, col)` bin of the field spectrum.
    pub source: (usize, usize),
    /// Lateral wavevector of the scattered plane wave, rad/µm.
    pub k: (f64, f64),
    pub kz: f64,
    /// Object frequency `(Kx, Ky, Kz)`, rad/µm.
    pub big_k: [f64; 3],
    /// Maps the field spectrum value onto the object spectrum value.
    pub weight: Complex64,
}

pub fn ewald_map(angle: (f64, f64), optics: &OpticsConfig) -> Result<Vec<EwaldSample>> {
    let km = optics.k_medium();
    let (kxi, kyi) = angle;
    let kt2 = kxi * kxi + kyi * kyi;
    if !(kt2 < km * km) {
        return Err(Error::InvalidAngle { kx: kxi, ky: kyi, k_medium: km });
    }
    let kzi = (km * km - kt2).sqrt();
    let n = optics.grid;
    let d = optics.pixel_size;
    let k0 = optics.k0();
    let mut out = Vec::new();
    for qy in 0..n {
        let ky_q = 2.0 * PI * bin_frequency(qy, n) / d;
        for qx in 0..n {
            let kx_q = 2.0 * PI * bin_frequency(qx, n) / d;
            let kx = kx_q + kxi;
            let ky = ky_q + kyi;
            let lat2 = kx * kx + ky * ky;
            if lat2 >= km * km {
                continue;
            }
            let kz = (km * km - lat2).sqrt();
            out.push(EwaldSample {
                source: (qy, qx),
                k: (kx, ky),
                kz,
                big_k: [kx_q, ky_q, kz - kzi],
                weight: Complex64::new(0.0, -2.0 * kz / (d * k0 * k0)),
            });
        }
    }
    Ok(out)
}

/// How a sample at a fractional axial bin is distributed over grid bins.
pub trait ScatterScheme: Named + Send + Sync {
    /// Pushes `(bin, weight)` pairs for fractional bin `t` on an axis of length `n`.
    fn splat(&self, t: f64, n: usize, out: &mut Vec<(usize, f64)>);
}

fn wrap_bin(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

pub struct Nearest;

impl Named for Nearest {
    fn name(&self) -> &'static str {
        "nearest"
    }
}

impl ScatterScheme for Nearest {
    fn splat(&self, t: f64, n: usize, out: &mut Vec<(usize, f64)>) {
        out.push((wrap_bin(t.round() as i64, n), 1.0));
    }
}

/// Linear splatting along the axial direction; lateral positions are exact
/// bins, so this is the trilinear kernel restricted to the one fractional axis.
pub struct Trilinear;

impl Named for Trilinear {
    fn name(&self) -> &'static str {
        "trilinear"
    }
}

impl ScatterScheme for Trilinear {
    fn splat(&self, t: f64, n: usize, out: &mut Vec<(usize, f64)>) {
        let lo = t.floor();
        let frac = t - lo;
        out.push((wrap_bin(lo as i64, n), 1.0 - frac));
        if frac > 0.0 {
            out.push((wrap_bin(lo as i64 + 1, n), frac));
        }
    }
}

pub fn scatter_schemes() -> Registry<dyn ScatterScheme> {
    let mut r: Registry<dyn ScatterScheme> = Registry::default();
    r.register(Box::new(Nearest)).register(Box::new(Trilinear));
    r
}

/// Coverage-weighted sum of object-spectrum samples on an `n^3` grid indexed
/// `[kz, ky, kx]`. Every sample is mirrored to `-K` with its conjugate, so the
/// accumulated spectrum is Hermitian by construction.
#[derive(Debug, Clone)]
pub struct SpectrumAccumulator {
    pub numerator: Array3<Complex64>,
    pub hit_count: Array3<f64>,
}

impl SpectrumAccumulator {
    pub fn new(n: usize) -> Self {
        SpectrumAccumulator {
            numerator: Array3::zeros((n, n, n)),
            hit_count: Array3::zeros((n, n, n)),
        }
    }

    pub fn size(&self) -> usize {
        self.numerator.dim().0
    }

    pub fn mirror(&self, idx: (usize, usize, usize)) -> (usize, usize, usize) {
        let n = self.size();
        ((n - idx.0) % n, (n - idx.1) % n, (n - idx.2) % n)
    }

    pub fn add(&mut self, idx: (usize, usize, usize), value: Complex64, weight: f64) {
        let m = self.mirror(idx);
        self.numerator[idx] += value * weight;
        self.hit_count[idx] += weight;
        self.numerator[m] += value.conj() * weight;
        self.hit_count[m] += weight;
    }

    /// Averaged value, or `None` inside the missing cone.
    pub fn value(&self, idx: (usize, usize, usize)) -> Option<Complex64> {
        let h = self.hit_count[idx];
        (h > 0.0).then(|| self.numerator[idx] / h)
    }

    pub fn filled_count(&self) -> usize {
        self.hit_count.iter().filter(|&&h| h > 0.0).count()
    }

    /// Averaged spectrum with zeros in unfilled voxels.
    pub fn spectrum(&self) -> Array3<Complex64> {
        Zip::from(&self.numerator)
            .and(&self.hit_count)
            .map_collect(|&v, &h| if h > 0.0 { v / h } else { Complex64::default() })
    }

    /// Flat indices and values of every filled voxel.
    fn filled(&self) -> Vec<(usize, Complex64)> {
        self.numerator
            .iter()
            .zip(self.hit_count.iter())
            .enumerate()
            .filter(|(_, (_, &h))| h > 0.0)
            .map(|(i, (&v, &h))| (i, v / h))
            .collect()
    }
}

/// Maps every field onto the object spectrum.
pub fn accumulate(
    fields: &[ComplexField],
    optics: &OpticsConfig,
    scheme: &dyn ScatterScheme,
) -> Result<SpectrumAccumulator> {
    optics.validate()?;
    if fields.len() != optics.angles.len() {
        return Err(Error::AngleCountMismatch { expected: optics.angles.len(), actual: fields.len() });
    }
    let n = optics.grid;
    let axial_bin = n as f64 * optics.pixel_size / (2.0 * PI);
    let mut acc = SpectrumAccumulator::new(n);
    let mut bins = Vec::with_capacity(2);
    for (index, (field, &angle)) in fields.iter().zip(&optics.angles).enumerate() {
        if field.dim() != (n, n) {
            return Err(Error::Shape(format!("field {index} is {:?}, optics grid is {n}", field.dim())));
        }
        let jumps = phase_jumps(&field.phase);
        if jumps > 0 {
            return Err(Error::NeedsUnwrap { index, jumps });
        }
        if let Some(((r, c), a)) = field.amplitude.indexed_iter().find(|(_, &a)| !(a > 0.0)) {
            return Err(Error::InvalidField(format!(
                "field {index} has amplitude {a} at ({r}, {c}); the Rytov log needs A > 0"
            )));
        }
        let rytov = Zip::from(&field.amplitude)
            .and(&field.phase)
            .map_collect(|&a, &p| Complex64::new(a.ln(), p));
        let mut spectrum = ifftshift2(&rytov);
        fft2(&mut spectrum);
        for s in ewald_map(angle, optics)? {
            let value = spectrum[s.source] * s.weight;
            bins.clear();
            scheme.splat(s.big_k[2] * axial_bin, n, &mut bins);
            for &(kz, w) in &bins {
                acc.add((kz, s.source.0, s.source.1), value, w);
            }
        }
    }
    Ok(acc)
}

fn index_from_chi(chi: Array3<f64>, voxel_size: f64, n_medium: f64) -> RIVolume {
    let n_m2 = n_medium * n_medium;
    RIVolume { voxel_size, n_medium, values: chi.mapv(|c| (n_m2 + c).max(1.0).sqrt()) }
}

/// Inverse transform of the averaged spectrum, with the index clamped to >= 1.
pub fn invert(acc: &SpectrumAccumulator, optics: &OpticsConfig) -> RIVolume {
    let mut s = acc.spectrum();
    ifft3(&mut s);
    let chi = fftshift3(&s.mapv(|v| v.re));
    index_from_chi(chi, optics.pixel_size, optics.n_medium)
}

/// Alternates a clamp to `n >= n_medium` with restoring the measured spectrum.
/// The returned volume is the state after the final restore, so it agrees
/// with `filled` on every measured frequency.
pub fn nonneg_regularize(volume: &RIVolume, filled: &SpectrumAccumulator, iters: usize) -> RIVolume {
    if iters == 0 {
        return volume.clone();
    }
    let n_m2 = volume.n_medium * volume.n_medium;
    let known = filled.filled();
    let mut chi = ifftshift3(&volume.values.mapv(|n| Complex64::new(n * n - n_m2, 0.0)));
    for _ in 0..iters {
        chi.mapv_inplace(|c| Complex64::new(c.re.max(0.0), 0.0));
        fft3(&mut chi);
        let flat = chi.as_slice_mut().expect("standard layout");
        for &(i, v) in &known {
            flat[i] = v;
        }
        ifft3(&mut chi);
    }
    index_from_chi(fftshift3(&chi.mapv(|c| c.re)), volume.voxel_size, volume.n_medium)
}

pub fn reconstruct(fields: &[ComplexField], optics: &OpticsConfig, regularization_iters: usize) -> Result<RIVolume> {
    reconstruct_with(fields, optics, regularization_iters, &Nearest)
}

pub fn reconstruct_with(
    fields: &[ComplexField],
    optics: &OpticsConfig,
    regularization_iters: usize,
    scheme: &dyn ScatterScheme,
) -> Result<RIVolume> {
    let acc = accumulate(fields, optics, scheme)?;
    let raw = invert(&acc, optics);
    log::debug!(
        "odt: {} of {} spectrum voxels filled",
        acc.filled_count(),
        acc.numerator.len()
    );
    Ok(nonneg_regularize(&raw, &acc, regularization_iters))
}
