//! Complex optical fields, their metadata, and on-disk storage.

pub(crate) mod manifest;
pub mod qpif;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{
    assign_splits, export_pairs, export_pairs_with, resolve, split_hash, Manifest, ManifestEntry,
    PairExporter, Split, SplitRatios, MANIFEST_FILE,
};

/// Wraps an angle into (-pi, pi].
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    let y = x - 2.0 * PI * ((x - PI) / (2.0 * PI)).ceil();
    // Rounding can land exactly on -pi for inputs just above an odd multiple.
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// A sampled complex optical field `A * exp(i * phi)`.
///
/// `phase` may hold unwrapped values; `wrapped` records whether the grid is
/// known to lie in (-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub amplitude: Array2<f64>,
    pub phase: Array2<f64>,
    /// Micrometers per pixel.
    pub pixel_size: f64,
    /// Vacuum wavelength in micrometers.
    pub wavelength: f64,
    pub wrapped: bool,
}

impl ComplexField {
    pub fn new(
        amplitude: Array2<f64>,
        phase: Array2<f64>,
        pixel_size: f64,
        wavelength: f64,
    ) -> Result<Self> {
        let field = ComplexField { amplitude, phase, pixel_size, wavelength, wrapped: false };
        field.validate()?;
        Ok(field)
    }

    /// Unit amplitude, zero phase.
    pub fn unit(height: usize, width: usize, pixel_size: f64, wavelength: f64) -> Self {
        ComplexField {
            amplitude: Array2::ones((height, width)),
            phase: Array2::zeros((height, width)),
            pixel_size,
            wavelength,
            wrapped: true,
        }
    }

    /// Builds a field from complex samples; the phase comes out wrapped.
    pub fn from_complex(values: &Array2<Complex64>, pixel_size: f64, wavelength: f64) -> Self {
        ComplexField {
            amplitude: values.mapv(|v| v.norm()),
            phase: values.mapv(|v| wrap_phase(v.arg())),
            pixel_size,
            wavelength,
            wrapped: true,
        }
    }

    /// Unit-amplitude field carrying the given (possibly unwrapped) phase.
    pub fn from_phase(phase: Array2<f64>, pixel_size: f64, wavelength: f64) -> Self {
        ComplexField {
            amplitude: Array2::ones(phase.dim()),
            phase,
            pixel_size,
            wavelength,
            wrapped: false,
        }
    }

    pub fn width(&self) -> usize {
        self.amplitude.ncols()
    }

    pub fn height(&self) -> usize {
        self.amplitude.nrows()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.amplitude.dim()
    }

    pub fn to_complex(&self) -> Array2<Complex64> {
        let mut out = Array2::zeros(self.dim());
        ndarray::Zip::from(&mut out)
            .and(&self.amplitude)
            .and(&self.phase)
            .for_each(|o, &a, &p| *o = Complex64::from_polar(a, p));
        out
    }

    /// Pointwise product; phases add without re-wrapping.
    pub fn multiply(&self, other: &ComplexField) -> Result<ComplexField> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.dim(), other.dim())));
        }
        Ok(ComplexField {
            amplitude: &self.amplitude * &other.amplitude,
            phase: &self.phase + &other.phase,
            pixel_size: self.pixel_size,
            wavelength: self.wavelength,
            wrapped: false,
        })
    }

    /// Returns a copy with the phase wrapped into (-pi, pi].
    pub fn rewrapped(&self) -> ComplexField {
        ComplexField {
            phase: self.phase.mapv(wrap_phase),
            wrapped: true,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitude.dim() != self.phase.dim() {
            return Err(Error::InvalidField(format!(
                "amplitude {:?} and phase {:?} grids differ",
                self.amplitude.dim(),
                self.phase.dim()
            )));
        }
        if let Some(((r, c), a)) = self
            .amplitude
            .indexed_iter()
            .find(|(_, a)| !a.is_finite() || **a < 0.0)
        {
            return Err(Error::InvalidField(format!("amplitude {a} at ({r}, {c})")));
        }
        if let Some(((r, c), p)) = self.phase.indexed_iter().find(|(_, p)| !p.is_finite()) {
            return Err(Error::InvalidField(format!("phase {p} at ({r}, {c})")));
        }
        if self.wrapped {
            if let Some(((r, c), p)) =
                self.phase.indexed_iter().find(|(_, p)| **p <= -PI || **p > PI)
            {
                return Err(Error::InvalidField(format!(
                    "wrapped field has phase {p} outside (-pi, pi] at ({r}, {c})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Gt,
    Pred,
    Background,
    Raw,
}

/// Per-file metadata carried alongside every stored field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub role: Role,
    pub angle_index: u32,
    pub pair_id: String,
    /// Noll index and coefficient (radians) of the aberration applied in simulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aberration_truth: Option<Vec<(u32, f64)>>,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl FieldMeta {
    pub fn new(role: Role, pair_id: impl Into<String>) -> Self {
        FieldMeta {
            role,
            angle_index: 0,
            pair_id: pair_id.into(),
            aberration_truth: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_role(&self, role: Role) -> Self {
        FieldMeta { role, ..self.clone() }
    }

    pub fn extra_f64(&self, key: &str) -> Option<f64> {
        self.extra.get(key).and_then(|v| v.parse().ok())
    }
}

/// Writes `field` as a two-channel QPIF file.
pub fn write_field(field: &ComplexField, meta: &FieldMeta, path: impl AsRef<Path>) -> Result<()> {
    qpif::write_field(field, meta, path.as_ref())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<(ComplexField, FieldMeta)> {
    qpif::read_field(path.as_ref())
}

pub fn crop_center_grid<T: Clone>(grid: &Array2<T>, size: usize) -> Result<Array2<T>> {
    let (h, w) = grid.dim();
    if size == 0 || size > h.min(w) {
        return Err(Error::Crop { width: w, height: h, size });
    }
    let r0 = (h - size) / 2;
    let c0 = (w - size) / 2;
    Ok(grid.slice(s![r0..r0 + size, c0..c0 + size]).to_owned())
}

/// Central `size` x `size` window; odd remainders round the offset down.
pub fn crop_center(field: &ComplexField, size: usize) -> Result<ComplexField> {
    Ok(ComplexField {
        amplitude: crop_center_grid(&field.amplitude, size)?,
        phase: crop_center_grid(&field.phase, size)?,
        pixel_size: field.pixel_size,
        wavelength: field.wavelength,
        wrapped: field.wrapped,
    })
}
