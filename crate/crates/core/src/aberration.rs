//! System aberration model and the two classical correctors.
//!
//! Zernike modes use Noll single indexing with RMS-unit normalization over a
//! disc inscribed in the image: centre `((W-1)/2, (H-1)/2)`, radius
//! `min(W, H)/2` pixels, `theta` measured from the +column axis towards +row.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{wrap_phase, ComplexField};
use crate::registry::{Named, Registry};

/// Converts a Noll index to radial order `n` and signed azimuthal order `m`
/// (`m > 0` cosine, `m < 0` sine).
pub fn noll_to_nm(j: u32) -> Result<(u32, i32)> {
    if j == 0 {
        return Err(Error::Domain("Noll indices start at 1".into()));
    }
    let mut n = 0u32;
    let mut j1 = j - 1;
    while j1 > n {
        n += 1;
        j1 -= n;
    }
    let magnitude = (n % 2) + 2 * ((j1 + (n + 1) % 2) / 2);
    let m = if j.is_multiple_of(2) { magnitude as i32 } else { -(magnitude as i32) };
    Ok((n, m))
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn radial(n: u32, m: u32, rho: f64) -> f64 {
    (0..=(n - m) / 2)
        .map(|s| {
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(n - s)
                / (factorial(s) * factorial((n + m) / 2 - s) * factorial((n - m) / 2 - s))
                * rho.powi((n - 2 * s) as i32)
        })
        .sum()
}

/// `Z_j(rho, theta)` without a domain check; `rho > 1` continues the polynomial.
fn zernike_value(n: u32, m: i32, rho: f64, theta: f64) -> f64 {
    let r = radial(n, m.unsigned_abs(), rho);
    if m == 0 {
        f64::from(n + 1).sqrt() * r
    } else {
        let norm = (2.0 * f64::from(n + 1)).sqrt();
        if m > 0 {
            norm * r * (f64::from(m) * theta).cos()
        } else {
            norm * r * (f64::from(-m) * theta).sin()
        }
    }
}

/// Evaluates `Z_j` at `(rho, theta)` points on the unit disc.
pub fn zernike_eval(j: u32, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    let (n, m) = noll_to_nm(j)?;
    points
        .iter()
        .map(|&(rho, theta)| {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Domain(format!("rho = {rho} outside the unit disc")));
            }
            Ok(zernike_value(n, m, rho, theta))
        })
        .collect()
}

/// Normalized polar coordinates of every pixel.
#[derive(Debug, Clone)]
pub struct DiscCoords {
    pub rho: Array2<f64>,
    pub theta: Array2<f64>,
}

impl DiscCoords {
    pub fn new(width: usize, height: usize) -> Self {
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let radius = width.min(height) as f64 / 2.0;
        DiscCoords {
            rho: Array2::from_shape_fn((height, width), |(r, c)| {
                (c as f64 - cx).hypot(r as f64 - cy) / radius
            }),
            theta: Array2::from_shape_fn((height, width), |(r, c)| {
                (r as f64 - cy).atan2(c as f64 - cx)
            }),
        }
    }

    pub fn inside(&self) -> Array2<bool> {
        self.rho.mapv(|r| r <= 1.0)
    }

    /// `Z_j` over the whole grid, continued beyond the disc.
    pub fn mode(&self, j: u32) -> Result<Array2<f64>> {
        let (n, m) = noll_to_nm(j)?;
        let mut out = Array2::zeros(self.rho.dim());
        Zip::from(&mut out)
            .and(&self.rho)
            .and(&self.theta)
            .for_each(|o, &rho, &theta| *o = zernike_value(n, m, rho, theta));
        Ok(out)
    }

    pub fn surface(&self, coeffs: &[(u32, f64)]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(self.rho.dim());
        for &(j, c) in coeffs {
            out.scaled_add(c, &self.mode(j)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fringe {
    pub amplitude: f64,
    /// Cycles per pixel along columns.
    pub fx: f64,
    /// Cycles per pixel along rows.
    pub fy: f64,
    pub phase_offset: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AberrationModel {
    pub zernike_coeffs: Vec<(u32, f64)>,
    pub fringes: Vec<Fringe>,
    /// Gaussian illumination envelope width in pixels; 0 disables it.
    pub envelope_sigma: f64,
}

impl AberrationModel {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for &(j, c) in &self.zernike_coeffs {
            if j == 0 || !seen.insert(j) {
                return Err(Error::Config(format!("Noll index {j} is zero or repeated")));
            }
            if !c.is_finite() {
                return Err(Error::Config(format!("coefficient of Z{j} is {c}")));
            }
        }
        for f in &self.fringes {
            let finite = [f.amplitude, f.fx, f.fy, f.phase_offset].iter().all(|v| v.is_finite());
            if !finite || f.amplitude < 0.0 {
                return Err(Error::Config(format!("invalid fringe {f:?}")));
            }
        }
        if !(self.envelope_sigma >= 0.0 && self.envelope_sigma.is_finite()) {
            return Err(Error::Config(format!("envelope sigma {}", self.envelope_sigma)));
        }
        Ok(())
    }
}

/// The aberration as a multiplicative field with unit sampling metadata.
pub fn synth_aberration(model: &AberrationModel, width: usize, height: usize) -> Result<ComplexField> {
    model.validate()?;
    let coords = DiscCoords::new(width, height);
    let mut phase = coords.surface(&model.zernike_coeffs)?;
    let mut ripple = Array2::from_elem((height, width), Complex64::new(1.0, 0.0));
    for f in &model.fringes {
        for ((r, c), p) in phase.indexed_iter_mut() {
            let arg = 2.0 * PI * (f.fx * c as f64 + f.fy * r as f64) + f.phase_offset;
            *p += f.amplitude * arg.sin();
            ripple[[r, c]] += Complex64::from_polar(f.amplitude, arg);
        }
    }
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let sigma = model.envelope_sigma;
    let amplitude = Array2::from_shape_fn((height, width), |(r, c)| {
        let envelope = if sigma > 0.0 {
            let d2 = (c as f64 - cx).powi(2) + (r as f64 - cy).powi(2);
            (-d2 / (2.0 * sigma * sigma)).exp()
        } else {
            1.0
        };
        envelope * ripple[[r, c]].norm()
    });
    ComplexField::new(amplitude, phase, 1.0, 1.0)
}

/// Complex division `sample / background`; the phase comes out wrapped.
pub fn correct_background(sample: &ComplexField, background: &ComplexField) -> Result<ComplexField> {
    if sample.dim() != background.dim() {
        return Err(Error::Shape(format!(
            "sample {:?} vs background {:?}",
            sample.dim(),
            background.dim()
        )));
    }
    let mean = background.amplitude.mean().unwrap_or(0.0);
    let floor = 1e-6 * mean;
    if let Some(((row, col), _)) = background.amplitude.indexed_iter().find(|(_, &a)| a <= floor) {
        return Err(Error::BadBackground { row, col });
    }
    Ok(ComplexField {
        amplitude: &sample.amplitude / &background.amplitude,
        phase: Zip::from(&sample.phase)
            .and(&background.phase)
            .map_collect(|&s, &b| wrap_phase(s - b)),
        pixel_size: sample.pixel_size,
        wavelength: sample.wavelength,
        wrapped: true,
    })
}

/// Least-squares fit of `Z_1..Z_max_noll` to the phase over the masked disc.
pub fn fit_zernike(
    phase: &Array2<f64>,
    max_noll: u32,
    mask: Option<&Array2<bool>>,
) -> Result<Vec<(u32, f64)>> {
    if max_noll == 0 {
        return Err(Error::Config("max_noll must be at least 1".into()));
    }
    let (h, w) = phase.dim();
    if let Some(m) = mask {
        if m.dim() != (h, w) {
            return Err(Error::Shape(format!("mask {:?} vs field {:?}", m.dim(), (h, w))));
        }
    }
    let coords = DiscCoords::new(w, h);
    let selected: Vec<(usize, usize)> = coords
        .rho
        .indexed_iter()
        .filter(|&(p, &rho)| rho <= 1.0 && mask.is_none_or(|m| m[p]))
        .map(|(p, _)| p)
        .collect();
    let modes = max_noll as usize;
    if selected.len() < modes {
        return Err(Error::UnderdeterminedFit { modes, pixels: selected.len() });
    }

    let basis: Vec<Array2<f64>> = (1..=max_noll).map(|j| coords.mode(j)).collect::<Result<_>>()?;
    let a = DMatrix::from_fn(selected.len(), modes, |i, k| basis[k][selected[i]]);
    let b = DVector::from_iterator(selected.len(), selected.iter().map(|&p| phase[p]));
    let ata = a.tr_mul(&a);
    let atb = a.tr_mul(&b);
    let x = match ata.clone().cholesky() {
        Some(ch) => ch.solve(&atb),
        None => ata
            .lu()
            .solve(&atb)
            .ok_or(Error::UnderdeterminedFit { modes, pixels: selected.len() })?,
    };
    Ok((1..=max_noll).zip(x.iter().copied()).collect())
}

/// Subtracts the fitted surface from the phase; amplitude is untouched.
pub fn correct_zernike_fit(
    field: &ComplexField,
    max_noll: u32,
    mask: Option<&Array2<bool>>,
) -> Result<(ComplexField, Vec<(u32, f64)>)> {
    let coeffs = fit_zernike(&field.phase, max_noll, mask)?;
    let surface = DiscCoords::new(field.width(), field.height()).surface(&coeffs)?;
    let corrected = ComplexField {
        phase: &field.phase - &surface,
        wrapped: false,
        ..field.clone()
    };
    Ok((corrected, coeffs))
}

/// Distribution of random aberration models for dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AberrationSampling {
    /// Highest Noll index drawn; piston is never drawn.
    pub max_noll: u32,
    /// `c_j ~ N(0, (sigma0 / j)^2)`.
    pub sigma0: f64,
    pub max_fringes: u32,
    pub fringe_amplitude: (f64, f64),
    /// Range of fringe spatial frequency magnitude, cycles per pixel.
    pub fringe_frequency: (f64, f64),
    pub envelope_sigma: f64,
    /// Relative spread applied around a fixed instrument model.
    pub jitter: f64,
}

impl Default for AberrationSampling {
    fn default() -> Self {
        AberrationSampling {
            max_noll: 21,
            sigma0: 2.0,
            max_fringes: 2,
            fringe_amplitude: (0.02, 0.15),
            fringe_frequency: (0.01, 0.04),
            envelope_sigma: 0.0,
            jitter: 0.1,
        }
    }
}

impl AberrationSampling {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.sigma0 < 0.0
            || !ordered(self.fringe_amplitude)
            || self.fringe_amplitude.0 < 0.0
            || !ordered(self.fringe_frequency)
            || self.jitter < 0.0
            || self.envelope_sigma < 0.0
        {
            return Err(Error::Config(format!("invalid aberration sampling {self:?}")));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AberrationModel {
        let zernike_coeffs = (2..=self.max_noll)
            .map(|j| {
                let sd = self.sigma0 / f64::from(j);
                (j, Normal::new(0.0, sd).map(|d| d.sample(rng)).unwrap_or(0.0))
            })
            .collect();
        let n_fringes = rng.random_range(0..=self.max_fringes);
        let fringes = (0..n_fringes)
            .map(|_| {
                let amplitude = uniform(self.fringe_amplitude, rng);
                let freq = uniform(self.fringe_frequency, rng);
                let dir = rng.random_range(0.0..2.0 * PI);
                Fringe {
                    amplitude,
                    fx: freq * dir.cos(),
                    fy: freq * dir.sin(),
                    phase_offset: rng.random_range(0.0..2.0 * PI),
                }
            })
            .collect();
        AberrationModel { zernike_coeffs, fringes, envelope_sigma: self.envelope_sigma }
    }

    /// Perturbs every coefficient and fringe amplitude of `base` by a relative
    /// Gaussian factor of width `jitter`.
    pub fn jitter<R: Rng + ?Sized>(&self, base: &AberrationModel, rng: &mut R) -> AberrationModel {
        let normal = Normal::new(0.0, self.jitter).unwrap_or(Normal::new(0.0, 0.0).unwrap());
        let mut out = base.clone();
        for (_, c) in &mut out.zernike_coeffs {
            *c *= 1.0 + normal.sample(rng);
        }
        for f in &mut out.fringes {
            f.amplitude = (f.amplitude * (1.0 + normal.sample(rng))).max(0.0);
            f.phase_offset += normal.sample(rng);
        }
        out
    }
}

fn uniform<R: Rng + ?Sized>((lo, hi): (f64, f64), rng: &mut R) -> f64 {
    if hi > lo {
        Uniform::new(lo, hi).map(|d| d.sample(rng)).unwrap_or(lo)
    } else {
        lo
    }
}

/// Inputs a corrector may draw on.
#[derive(Debug, Clone, Copy, Default)]
pub struct CorrectionContext<'a> {
    pub background: Option<&'a ComplexField>,
    pub mask: Option<&'a Array2<bool>>,
    pub max_noll: u32,
}

pub trait AberrationCorrector: Named + Send + Sync {
    fn correct(&self, field: &ComplexField, ctx: &CorrectionContext<'_>) -> Result<ComplexField>;
}

pub struct BackgroundDivision;

impl Named for BackgroundDivision {
    fn name(&self) -> &'static str {
        "bg"
    }
}

impl AberrationCorrector for BackgroundDivision {
    fn correct(&self, field: &ComplexField, ctx: &CorrectionContext<'_>) -> Result<ComplexField> {
        let bg = ctx
            .background
            .ok_or_else(|| Error::Config("background correction needs a background field".into()))?;
        correct_background(field, bg)
    }
}

pub struct ZernikeFit;

impl Named for ZernikeFit {
    fn name(&self) -> &'static str {
        "zernike"
    }
}

impl AberrationCorrector for ZernikeFit {
    fn correct(&self, field: &ComplexField, ctx: &CorrectionContext<'_>) -> Result<ComplexField> {
        correct_zernike_fit(field, ctx.max_noll, ctx.mask).map(|(f, _)| f)
    }
}

pub fn correctors() -> Registry<dyn AberrationCorrector> {
    let mut r: Registry<dyn AberrationCorrector> = Registry::default();
    r.register(Box::new(BackgroundDivision)).register(Box::new(ZernikeFit));
    r
}
