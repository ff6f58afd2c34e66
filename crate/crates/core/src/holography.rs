//! Off-axis hologram synthesis and Fourier-transform (sideband) retrieval.
//!
//! The hologram of an object field `E` with a tilted reference
//! `R exp(i 2 pi (fx x + fy y))` is
//!
//! ```text
//! I = |E|^2 + R^2 + R E exp(-i theta) + R E* exp(i theta)
//! ```
//!
//! so the spectrum of `R E` sits around `-(fx, fy)`. Retrieval filters that
//! sideband, moves it to the origin by the integer part of the carrier,
//! removes the fractional remainder with a spatial phase ramp and divides out
//! `R`. Pixel `(row, col)` has coordinates `x = col`, `y = row`.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::error::{Error, Result};
use crate::fft::{bin_frequency, fft2, ifft2};
use crate::field::qpif::{self, Header};
use crate::field::ComplexField;

pub const DEFAULT_FILTER_RADIUS: f64 = 0.12;
/// Width of the raised-cosine roll-off beyond the pass disc, relative to its radius.
pub const TAPER_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Carrier {
    /// Cycles per pixel along columns.
    pub fx: f64,
    /// Cycles per pixel along rows.
    pub fy: f64,
    pub reference_amplitude: f64,
}

impl Default for Carrier {
    fn default() -> Self {
        Carrier { fx: 0.25, fy: 0.25, reference_amplitude: 1.0 }
    }
}

impl Carrier {
    pub fn magnitude(&self) -> f64 {
        self.fx.hypot(self.fy)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.magnitude();
        if !(m > 0.0 && m < 0.5) {
            return Err(Error::InvalidCarrier { fx: self.fx, fy: self.fy });
        }
        if !(self.reference_amplitude > 0.0 && self.reference_amplitude.is_finite()) {
            return Err(Error::Config(format!(
                "reference amplitude must be positive, got {}",
                self.reference_amplitude
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hologram {
    pub intensity: Array2<f64>,
    pub carrier: Carrier,
    pub pixel_size: f64,
    pub wavelength: f64,
}

pub fn synth_hologram(field: &ComplexField, carrier: Carrier) -> Result<Hologram> {
    field.validate()?;
    carrier.validate()?;
    let r = carrier.reference_amplitude;
    let intensity = Array2::from_shape_fn(field.dim(), |(row, col)| {
        let object = Complex64::from_polar(field.amplitude[[row, col]], field.phase[[row, col]]);
        let theta = 2.0 * PI * (carrier.fx * col as f64 + carrier.fy * row as f64);
        (object + Complex64::from_polar(r, theta)).norm_sqr()
    });
    Ok(Hologram {
        intensity,
        carrier,
        pixel_size: field.pixel_size,
        wavelength: field.wavelength,
    })
}

/// Adds zero-mean Gaussian intensity noise, clamping at zero.
pub fn add_intensity_noise<R: Rng + ?Sized>(hologram: &mut Hologram, std: f64, rng: &mut R) {
    if std <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std).expect("positive std");
    hologram
        .intensity
        .mapv_inplace(|v| (v + normal.sample(rng)).max(0.0));
}

/// Pass weight for spectral distance `d` from the filter centre.
fn sideband_weight(d: f64, radius: f64) -> f64 {
    let edge = radius * (1.0 + TAPER_FRACTION);
    if d <= radius {
        1.0
    } else if d >= edge {
        0.0
    } else {
        let t = (d - radius) / (edge - radius);
        0.5 * (1.0 + (PI * t).cos())
    }
}

/// Distance on the periodic frequency torus [-0.5, 0.5).
fn periodic_delta(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - d.round()
}

pub fn retrieve_takeda(hologram: &Hologram, filter_radius: f64) -> Result<ComplexField> {
    let carrier = hologram.carrier;
    carrier.validate()?;
    let cm = carrier.magnitude();
    if filter_radius >= cm {
        return Err(Error::SidebandOverlap { radius: filter_radius, carrier: cm });
    }
    if !(filter_radius > 0.0) {
        return Err(Error::Config(format!("filter radius must be positive, got {filter_radius}")));
    }
    let (h, w) = hologram.intensity.dim();
    let mut spectrum = hologram.intensity.mapv(|v| Complex64::new(v, 0.0));
    fft2(&mut spectrum);

    // Integer bin offset of the object sideband at -(fx, fy).
    let shift_c = (-carrier.fx * w as f64).round() as i64;
    let shift_r = (-carrier.fy * h as f64).round() as i64;
    let mut shifted = Array2::<Complex64>::zeros((h, w));
    for ((r, c), v) in spectrum.indexed_iter() {
        let dv = periodic_delta(bin_frequency(r, h), -carrier.fy);
        let du = periodic_delta(bin_frequency(c, w), -carrier.fx);
        let weight = sideband_weight(du.hypot(dv), filter_radius);
        if weight == 0.0 {
            continue;
        }
        let tr = (r as i64 - shift_r).rem_euclid(h as i64) as usize;
        let tc = (c as i64 - shift_c).rem_euclid(w as i64) as usize;
        shifted[[tr, tc]] = *v * weight;
    }
    ifft2(&mut shifted);

    // Residual sub-bin carrier left after the integer shift.
    let frac_x = -carrier.fx - shift_c as f64 / w as f64;
    let frac_y = -carrier.fy - shift_r as f64 / h as f64;
    let inv_r = 1.0 / carrier.reference_amplitude;
    for ((r, c), v) in shifted.indexed_iter_mut() {
        let ramp = -2.0 * PI * (frac_x * c as f64 + frac_y * r as f64);
        *v *= Complex64::from_polar(inv_r, ramp);
    }
    Ok(ComplexField::from_complex(&shifted, hologram.pixel_size, hologram.wavelength))
}

/// Hard low-pass: keeps spectral components within `radius` cycles/pixel of DC.
pub fn band_limit(values: &Array2<Complex64>, radius: f64) -> Array2<Complex64> {
    let (h, w) = values.dim();
    let mut spectrum = values.clone();
    fft2(&mut spectrum);
    for ((r, c), v) in spectrum.indexed_iter_mut() {
        if bin_frequency(c, w).hypot(bin_frequency(r, h)) > radius {
            *v = Complex64::default();
        }
    }
    ifft2(&mut spectrum);
    spectrum
}

pub fn write_hologram(hologram: &Hologram, path: &Path) -> Result<()> {
    let (h, w) = hologram.intensity.dim();
    let plane: Vec<f32> = hologram.intensity.iter().map(|&v| v as f32).collect();
    if plane.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidField("hologram intensity must be finite and non-negative".into()));
    }
    let meta = json!({
        "role": "raw",
        "pixel_size": hologram.pixel_size,
        "wavelength": hologram.wavelength,
        "carrier": hologram.carrier,
    });
    qpif::write_container(
        path,
        Header { width: w as u32, height: h as u32, channels: 1 },
        &meta,
        &[plane],
    )
}

pub fn read_hologram(path: &Path) -> Result<Hologram> {
    let c = qpif::read_container(path)?;
    if c.header.channels != 1 {
        return Err(Error::Format(format!(
            "holograms carry 1 channel, found {}",
            c.header.channels
        )));
    }
    let carrier: Carrier = serde_json::from_value(c.meta["carrier"].clone())
        .map_err(|e| Error::Format(format!("hologram carrier metadata: {e}")))?;
    let num = |k: &str| {
        c.meta[k]
            .as_f64()
            .ok_or_else(|| Error::Format(format!("hologram metadata lacks {k}")))
    };
    Ok(Hologram {
        intensity: c.plane(0),
        carrier,
        pixel_size: num("pixel_size")?,
        wavelength: num("wavelength")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::fce;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_field(n: usize) -> ComplexField {
        ComplexField::unit(n, n, 0.1, 0.532)
    }

    fn bead_like(n: usize) -> ComplexField {
        let c = (n as f64 - 1.0) / 2.0;
        let raw = Array2::from_shape_fn((n, n), |(r, col)| {
            let rho2 = ((r as f64 - c).powi(2) + (col as f64 - c).powi(2)) / (n as f64 * 0.2).powi(2);
            let phase = 2.5 * (1.0 - rho2).max(0.0).sqrt() + 0.4 * (col as f64 / n as f64);
            Complex64::from_polar(1.0 - 0.1 * (1.0 - rho2).max(0.0), phase)
        });
        ComplexField::from_complex(&band_limit(&raw, 0.08), 0.1, 0.532)
    }

    #[test]
    fn zero_field_gives_reference_intensity() {
        let mut f = unit_field(16);
        f.amplitude.fill(0.0);
        let h = synth_hologram(&f, Carrier { fx: 0.2, fy: 0.1, reference_amplitude: 1.0 }).unwrap();
        assert!(h.intensity.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn unit_field_fringes() {
        let fx = 0.125;
        let h = synth_hologram(&unit_field(16), Carrier { fx, fy: 0.0, reference_amplitude: 1.0 }).unwrap();
        for ((_, c), &v) in h.intensity.indexed_iter() {
            let expected = 2.0 + 2.0 * (2.0 * PI * fx * c as f64).cos();
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_field_retrieves_zero_phase() {
        let h = synth_hologram(&unit_field(64), Carrier::default()).unwrap();
        let f = retrieve_takeda(&h, DEFAULT_FILTER_RADIUS).unwrap();
        assert!(f.phase.iter().all(|p| p.abs() < 1e-6));
        let a0 = f.amplitude[[0, 0]];
        assert!((a0 - 1.0).abs() < 1e-9);
        assert!(f.amplitude.iter().all(|a| (a - a0).abs() < 1e-9));
    }

    #[test]
    fn bead_round_trip() {
        let truth = bead_like(128);
        let h = synth_hologram(&truth, Carrier::default()).unwrap();
        let got = retrieve_takeda(&h, DEFAULT_FILTER_RADIUS).unwrap();
        let err = fce(&truth, &got).unwrap();
        assert!(err < 1e-3, "fce {err}");
        assert!(got.phase.iter().all(|&p| p > -PI && p <= PI));
    }

    #[test]
    fn non_integer_carrier_on_flat_field() {
        // 0.23 * 100 is not an integer bin.
        let c = Carrier { fx: 0.23, fy: -0.17, reference_amplitude: 2.0 };
        let h = synth_hologram(&unit_field(100), c).unwrap();
        let f = retrieve_takeda(&h, 0.1).unwrap();
        let center = f.phase[[50, 50]];
        assert!(center.abs() < 1e-6, "phase {center}");
        assert!((f.amplitude[[50, 50]] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sideband_overlap_guard() {
        let h = synth_hologram(&unit_field(16), Carrier::default()).unwrap();
        let cm = Carrier::default().magnitude();
        assert!(matches!(retrieve_takeda(&h, 1.2 * cm), Err(Error::SidebandOverlap { .. })));
    }

    #[test]
    fn invalid_carrier_guard() {
        let c = Carrier { fx: 0.4, fy: 0.4, reference_amplitude: 1.0 };
        assert!(matches!(synth_hologram(&unit_field(8), c), Err(Error::InvalidCarrier { .. })));
        let mut h = synth_hologram(&unit_field(8), Carrier::default()).unwrap();
        h.carrier.fx = 0.0;
        h.carrier.fy = 0.0;
        assert!(matches!(retrieve_takeda(&h, 0.1), Err(Error::InvalidCarrier { .. })));
    }

    #[test]
    fn retrieval_is_linear_for_band_limited_fields() {
        let e = bead_like(64);
        let scale = Complex64::from_polar(0.7, 0.9);
        let scaled = ComplexField::from_complex(&e.to_complex().mapv(|v| v * scale), 0.1, 0.532);
        let a = retrieve_takeda(&synth_hologram(&e, Carrier::default()).unwrap(), 0.12).unwrap();
        let b = retrieve_takeda(&synth_hologram(&scaled, Carrier::default()).unwrap(), 0.12).unwrap();
        let (ac, bc) = (a.to_complex(), b.to_complex());
        for (x, y) in ac.iter().zip(bc.iter()) {
            assert!((x * scale - y).norm() < 1e-9);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let base = synth_hologram(&unit_field(8), Carrier::default()).unwrap();
        let mut a = base.clone();
        let mut b = base.clone();
        add_intensity_noise(&mut a, 0.05, &mut ChaCha8Rng::seed_from_u64(3));
        add_intensity_noise(&mut b, 0.05, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_ne!(a, base);
    }

    #[test]
    fn hologram_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.qpif");
        let mut h = synth_hologram(&unit_field(8), Carrier::default()).unwrap();
        h.intensity.mapv_inplace(|v| v as f32 as f64);
        write_hologram(&h, &path).unwrap();
        assert_eq!(read_hologram(&path).unwrap(), h);
    }
}
