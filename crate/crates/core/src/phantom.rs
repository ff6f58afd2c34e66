//! Ground-truth samples: beads, cell-like blobs, refractive-index volumes,
//! and the first-order (Rytov) forward model for multi-angle fields.
//!
//! Positions are in micrometres relative to the grid centre: pixel or voxel
//! `i` on an axis of length `n` sits at `(i - n/2) * spacing`.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::fft::{bin_frequency, fft2, fftshift2, ifft2, ifftshift2};
use crate::field::qpif::{self, Header};
use crate::field::ComplexField;
use crate::odt::{ewald_map, Nearest, ScatterScheme};

/// Largest relative index contrast accepted by the first-order forward model.
pub const WEAK_SCATTERING_BOUND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeadSpec {
    /// `[x, y, z]` in micrometres; `z` is ignored for projected phases.
    pub center: [f64; 3],
    pub radius: f64,
    pub delta_n: f64,
}

/// Anisotropic Gaussian bump, rotated by `angle` about the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub center: [f64; 3],
    pub sigma: [f64; 3],
    pub angle: f64,
    pub delta_n: f64,
}

impl BlobSpec {
    fn lateral_exponent(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let (s, c) = self.angle.sin_cos();
        let u = (c * dx + s * dy) / self.sigma[0];
        let v = (-s * dx + c * dy) / self.sigma[1];
        u * u + v * v
    }

    fn contrast_at(&self, x: f64, y: f64, z: f64) -> f64 {
        let w = (z - self.center[2]) / self.sigma[2];
        self.delta_n * (-0.5 * (self.lateral_exponent(x, y) + w * w)).exp()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub beads: Vec<BeadSpec>,
    pub blobs: Vec<BlobSpec>,
}

impl Phantom {
    pub fn validate(&self) -> Result<()> {
        for b in &self.beads {
            if !(b.radius > 0.0) || !b.delta_n.is_finite() {
                return Err(Error::Config(format!("invalid bead {b:?}")));
            }
        }
        for b in &self.blobs {
            if b.sigma.iter().any(|&s| !(s > 0.0)) || !b.delta_n.is_finite() {
                return Err(Error::Config(format!("invalid blob {b:?}")));
            }
        }
        Ok(())
    }

    /// Local index contrast: the maximum over components.
    pub fn contrast_at(&self, x: f64, y: f64, z: f64) -> f64 {
        let beads = self.beads.iter().filter_map(|b| {
            let d2 = (x - b.center[0]).powi(2) + (y - b.center[1]).powi(2) + (z - b.center[2]).powi(2);
            (d2 < b.radius * b.radius).then_some(b.delta_n)
        });
        let blobs = self.blobs.iter().map(|b| b.contrast_at(x, y, z));
        beads.chain(blobs).fold(0.0, f64::max)
    }

    /// Projected phase `k0 * integral(dn dz)` on a `height x width` grid.
    /// Components add in projection.
    pub fn projected_phase(&self, width: usize, height: usize, pixel_size: f64, wavelength: f64) -> Array2<f64> {
        let k0 = 2.0 * PI / wavelength;
        Array2::from_shape_fn((height, width), |(r, c)| {
            let x = position(c, width, pixel_size);
            let y = position(r, height, pixel_size);
            let beads: f64 = self
                .beads
                .iter()
                .map(|b| {
                    let rho2 = (x - b.center[0]).powi(2) + (y - b.center[1]).powi(2);
                    let chord = 2.0 * (b.radius * b.radius - rho2).max(0.0).sqrt();
                    b.delta_n * chord
                })
                .sum();
            let blobs: f64 = self
                .blobs
                .iter()
                .map(|b| {
                    b.delta_n * (2.0 * PI).sqrt() * b.sigma[2] * (-0.5 * b.lateral_exponent(x, y)).exp()
                })
                .sum();
            k0 * (beads + blobs)
        })
    }
}

pub fn position(index: usize, n: usize, spacing: f64) -> f64 {
    (index as f64 - (n / 2) as f64) * spacing
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpticsConfig {
    /// Vacuum wavelength, micrometres.
    pub wavelength: f64,
    pub n_medium: f64,
    /// Micrometres per pixel (and per voxel).
    pub pixel_size: f64,
    pub grid: usize,
    /// Illumination wavevector components `(kx, ky)` in rad/µm, in the medium.
    pub angles: Vec<(f64, f64)>,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        let mut optics = OpticsConfig {
            wavelength: 0.532,
            n_medium: 1.337,
            pixel_size: 0.1,
            grid: 128,
            angles: Vec::new(),
        };
        optics.angles = optics.cone(48, 45.0);
        optics
    }
}

impl OpticsConfig {
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn k_medium(&self) -> f64 {
        self.k0() * self.n_medium
    }

    /// Normal incidence followed by `count` directions evenly spaced on a
    /// cone of the given polar angle (degrees, in the medium).
    pub fn cone(&self, count: usize, polar_deg: f64) -> Vec<(f64, f64)> {
        let kt = self.k_medium() * polar_deg.to_radians().sin();
        std::iter::once((0.0, 0.0))
            .chain((0..count).map(|i| {
                let az = 2.0 * PI * i as f64 / count as f64;
                (kt * az.cos(), kt * az.sin())
            }))
            .collect()
    }

    pub fn normal_only(&self) -> OpticsConfig {
        OpticsConfig { angles: vec![(0.0, 0.0)], ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.wavelength) || !positive(self.n_medium) || !positive(self.pixel_size) {
            return Err(Error::Config(format!(
                "wavelength {}, n_medium {} and pixel_size {} must be positive",
                self.wavelength, self.n_medium, self.pixel_size
            )));
        }
        if self.grid == 0 || self.angles.is_empty() {
            return Err(Error::Config("optics needs a nonzero grid and at least one angle".into()));
        }
        let km = self.k_medium();
        for &(kx, ky) in &self.angles {
            if !(kx.hypot(ky) < km) {
                return Err(Error::InvalidAngle { kx, ky, k_medium: km });
            }
        }
        Ok(())
    }
}

/// Refractive index sampled on a `nz x ny x nx` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RIVolume {
    pub voxel_size: f64,
    pub n_medium: f64,
    /// Indexed `[z, y, x]`.
    pub values: Array3<f64>,
}

impl RIVolume {
    pub fn uniform(nx: usize, ny: usize, nz: usize, voxel_size: f64, n_medium: f64) -> Self {
        RIVolume { voxel_size, n_medium, values: Array3::from_elem((nz, ny, nx), n_medium) }
    }

    pub fn nx(&self) -> usize {
        self.values.dim().2
    }

    pub fn ny(&self) -> usize {
        self.values.dim().1
    }

    pub fn nz(&self) -> usize {
        self.values.dim().0
    }

    pub fn center_value(&self) -> f64 {
        self.values[[self.nz() / 2, self.ny() / 2, self.nx() / 2]]
    }

    pub fn max_relative_contrast(&self) -> f64 {
        self.values.iter().map(|&n| (n - self.n_medium).abs() / self.n_medium).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(((z, y, x), v)) = self.values.indexed_iter().find(|(_, &v)| !v.is_finite() || v < 1.0) {
            return Err(Error::InvalidField(format!("index {v} at voxel ({z}, {y}, {x})")));
        }
        Ok(())
    }

    /// Sets every voxel to `n_medium` plus the phantom's local contrast.
    pub fn paint(&mut self, phantom: &Phantom) {
        let (nz, ny, nx) = self.values.dim();
        let d = self.voxel_size;
        let n_m = self.n_medium;
        for ((z, y, x), v) in self.values.indexed_iter_mut() {
            *v = n_m + phantom.contrast_at(position(x, nx, d), position(y, ny, d), position(z, nz, d));
        }
    }
}

pub fn bead_phase(spec: &BeadSpec, optics: &OpticsConfig) -> Array2<f64> {
    Phantom { beads: vec![*spec], blobs: Vec::new() }.projected_phase(
        optics.grid,
        optics.grid,
        optics.pixel_size,
        optics.wavelength,
    )
}

/// Cubic `grid^3` volume holding the given components.
pub fn make_phantom_volume(beads: &[BeadSpec], blobs: &[BlobSpec], optics: &OpticsConfig) -> RIVolume {
    let n = optics.grid;
    let mut volume = RIVolume::uniform(n, n, n, optics.pixel_size, optics.n_medium);
    volume.paint(&Phantom { beads: beads.to_vec(), blobs: blobs.to_vec() });
    volume
}

/// Where the object spectrum is read for each point of an Ewald cap.
#[derive(Clone, Copy)]
pub enum ForwardSampling<'a> {
    /// At the exact axial frequency.
    Exact,
    /// At grid bins chosen by the same scheme the reconstructor scatters with.
    Grid(&'a dyn ScatterScheme),
}

/// One normalized field `E / E_incident = exp(u_R)` per illumination angle,
/// sampled on the same nearest-bin grid the default reconstructor uses.
/// The detector plane is the volume's central slice; the phase is left unwrapped.
pub fn forward_fields(volume: &RIVolume, optics: &OpticsConfig) -> Result<Vec<ComplexField>> {
    forward_fields_with(volume, optics, ForwardSampling::Grid(&Nearest))
}

pub fn forward_fields_with(
    volume: &RIVolume,
    optics: &OpticsConfig,
    sampling: ForwardSampling<'_>,
) -> Result<Vec<ComplexField>> {
    optics.validate()?;
    let (nz, ny, nx) = volume.values.dim();
    if nx != optics.grid || ny != optics.grid {
        return Err(Error::Shape(format!(
            "volume is {nx}x{ny} laterally but the optics grid is {}",
            optics.grid
        )));
    }
    if (volume.voxel_size - optics.pixel_size).abs() > 1e-12 * optics.pixel_size {
        return Err(Error::Shape(format!(
            "voxel size {} differs from pixel size {}",
            volume.voxel_size, optics.pixel_size
        )));
    }
    let contrast = volume.max_relative_contrast();
    if contrast > WEAK_SCATTERING_BOUND {
        return Err(Error::ScatteringBound { contrast, bound: WEAK_SCATTERING_BOUND });
    }
    let n = optics.grid;
    let n_m2 = volume.n_medium * volume.n_medium;

    // Lateral spectrum of every z-slice of n^2 - n_m^2, stored with z innermost.
    let mut by_q = vec![Complex64::default(); n * n * nz];
    for z in 0..nz {
        let slice = volume.values.index_axis(ndarray::Axis(0), z);
        let mut f = ifftshift2(&slice.mapv(|v| Complex64::new(v * v - n_m2, 0.0)));
        fft2(&mut f);
        for ((qy, qx), v) in f.indexed_iter() {
            by_q[(qy * n + qx) * nz + z] = *v;
        }
    }
    let z0 = position(0, nz, volume.voxel_size);
    let dz = volume.voxel_size;
    let axial_bin = nz as f64 * dz / (2.0 * PI);
    let z_sum = |column: &[Complex64], kz: f64| {
        let step = Complex64::from_polar(1.0, -kz * dz);
        let mut phase = Complex64::from_polar(1.0, -kz * z0);
        let mut acc = Complex64::default();
        for v in column {
            acc += v * phase;
            phase *= step;
        }
        acc
    };

    optics
        .angles
        .par_iter()
        .map(|&angle| {
            let samples = ewald_map(angle, optics)?;
            let mut spectrum = Array2::<Complex64>::zeros((n, n));
            let mut bins = Vec::with_capacity(2);
            for s in &samples {
                let (qy, qx) = s.source;
                let column = &by_q[(qy * n + qx) * nz..(qy * n + qx + 1) * nz];
                let value = match sampling {
                    ForwardSampling::Exact => z_sum(column, s.big_k[2]),
                    ForwardSampling::Grid(scheme) => {
                        bins.clear();
                        scheme.splat(s.big_k[2] * axial_bin, nz, &mut bins);
                        let total: f64 = bins.iter().map(|b| b.1).sum();
                        bins.iter()
                            .map(|&(b, w)| w * z_sum(column, 2.0 * PI * bin_frequency(b, nz) / dz))
                            .sum::<Complex64>()
                            / total
                    }
                };
                spectrum[[qy, qx]] = value / s.weight;
            }
            ifft2(&mut spectrum);
            let rytov = fftshift2(&spectrum);
            ComplexField::new(
                rytov.mapv(|u| u.re.exp()),
                rytov.mapv(|u| u.im),
                optics.pixel_size,
                optics.wavelength,
            )
        })
        .collect()
}

/// Writes a volume as QPIF-V: one channel per z-slice.
pub fn write_volume(volume: &RIVolume, path: &Path) -> Result<()> {
    volume.validate()?;
    let header = Header { width: volume.nx() as u32, height: volume.ny() as u32, channels: volume.nz() as u32 };
    let planes: Vec<Vec<f32>> = volume
        .values
        .outer_iter()
        .map(|slice| slice.iter().map(|&v| v as f32).collect())
        .collect();
    let meta = json!({
        "volume": true,
        "voxel_size": volume.voxel_size,
        "n_medium": volume.n_medium,
    });
    qpif::write_container(path, header, &meta, &planes)
}

pub fn read_volume(path: &Path) -> Result<RIVolume> {
    let c = qpif::read_container(path)?;
    if c.meta.get("volume").and_then(|v| v.as_bool()) != Some(true) {
        return Err(Error::Format(format!("{} is not a volume file", path.display())));
    }
    let number = |key: &str| {
        c.meta
            .get(key)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::Format(format!("volume metadata lacks {key}")))
    };
    let (nx, ny, nz) = (c.header.width as usize, c.header.height as usize, c.header.channels as usize);
    let values = Array3::from_shape_fn((nz, ny, nx), |(z, y, x)| c.planes[z][y * nx + x] as f64);
    let volume = RIVolume { voxel_size: number("voxel_size")?, n_medium: number("n_medium")?, values };
    volume.validate()?;
    Ok(volume)
}

/// Distribution of random scenes. Lengths in micrometres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSampling {
    pub blob_count: (u32, u32),
    pub blob_contrast: (f64, f64),
    pub blob_sigma: (f64, f64),
    /// Blob centres fall within this fraction of the half field of view.
    pub cell_extent: f64,
    pub bead_count: (u32, u32),
    pub bead_radius: (f64, f64),
    pub bead_contrast: (f64, f64),
}

impl Default for PhantomSampling {
    fn default() -> Self {
        PhantomSampling {
            blob_count: (3, 10),
            blob_contrast: (0.005, 0.04),
            blob_sigma: (0.4, 2.0),
            cell_extent: 0.5,
            bead_count: (0, 1),
            bead_radius: (1.0, 2.5),
            bead_contrast: (0.01, 0.05),
        }
    }
}

impl PhantomSampling {
    /// Draws a scene for a field of view `fov` wide and `depth` deep.
    pub fn sample<R: Rng + ?Sized>(&self, fov: f64, depth: f64, rng: &mut R) -> Phantom {
        let u = |(lo, hi): (f64, f64), rng: &mut R| {
            if hi > lo { Uniform::new(lo, hi).map(|d| d.sample(rng)).unwrap_or(lo) } else { lo }
        };
        let half = 0.5 * fov * self.cell_extent;
        let zhalf = 0.25 * depth;
        let n_blobs = rng.random_range(self.blob_count.0..=self.blob_count.1.max(self.blob_count.0));
        let blobs = (0..n_blobs)
            .map(|_| BlobSpec {
                center: [u((-half, half), rng), u((-half, half), rng), u((-zhalf, zhalf), rng)],
                sigma: [u(self.blob_sigma, rng), u(self.blob_sigma, rng), u(self.blob_sigma, rng)],
                angle: u((0.0, PI), rng),
                delta_n: u(self.blob_contrast, rng),
            })
            .collect();
        let n_beads = rng.random_range(self.bead_count.0..=self.bead_count.1.max(self.bead_count.0));
        let beads = (0..n_beads)
            .map(|_| {
                let radius = u(self.bead_radius, rng);
                let reach = (0.5 * fov - 1.5 * radius).max(0.0) * self.cell_extent;
                BeadSpec {
                    center: [u((-reach, reach), rng), u((-reach, reach), rng), 0.0],
                    radius,
                    delta_n: u(self.bead_contrast, rng),
                }
            })
            .collect();
        Phantom { beads, blobs }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok(self.blob_contrast)
            || !ok(self.blob_sigma)
            || self.blob_sigma.0 <= 0.0
            || !ok(self.bead_radius)
            || self.bead_radius.0 <= 0.0
            || !ok(self.bead_contrast)
            || self.blob_count.0 > self.blob_count.1
            || self.bead_count.0 > self.bead_count.1
        {
            return Err(Error::Config(format!("invalid phantom sampling {self:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_optics(grid: usize, angles: usize) -> OpticsConfig {
        let mut o = OpticsConfig { grid, ..Default::default() };
        o.angles = o.cone(angles, 45.0);
        o
    }

    #[test]
    fn bead_phase_closed_form() {
        let optics = OpticsConfig { grid: 64, ..Default::default() };
        let spec = BeadSpec { center: [0.0; 3], radius: 2.5, delta_n: 0.05 };
        let p = bead_phase(&spec, &optics);
        let expected = 2.0 * PI / 0.532 * 0.05 * 5.0;
        assert!((p[[32, 32]] - expected).abs() < 1e-12);
        assert!((p[[32, 32]] - 2.953).abs() < 1e-3);
        assert_eq!(p[[0, 0]], 0.0);
        let zero = bead_phase(&BeadSpec { delta_n: 0.0, ..spec }, &optics);
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bead_phase_is_radially_symmetric() {
        let optics = OpticsConfig { grid: 64, ..Default::default() };
        let p = bead_phase(&BeadSpec { center: [0.0; 3], radius: 2.0, delta_n: 0.02 }, &optics);
        for d in 1..25 {
            let v = p[[32, 32 + d]];
            assert!((p[[32, 32 - d]] - v).abs() < 1e-12);
            assert!((p[[32 + d, 32]] - v).abs() < 1e-12);
            assert!((p[[32 - d, 32]] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn default_optics_has_49_propagating_angles() {
        let o = OpticsConfig::default();
        assert_eq!(o.angles.len(), 49);
        assert_eq!(o.angles[0], (0.0, 0.0));
        o.validate().unwrap();
        let bad = OpticsConfig { angles: vec![(o.k_medium(), 0.0)], ..o };
        assert!(matches!(bad.validate(), Err(Error::InvalidAngle { .. })));
    }

    #[test]
    fn volume_rules() {
        let optics = small_optics(32, 4);
        let empty = make_phantom_volume(&[], &[], &optics);
        assert!(empty.values.iter().all(|&v| v == optics.n_medium));

        let bead = BeadSpec { center: [0.0; 3], radius: 1.0, delta_n: 0.03 };
        let v = make_phantom_volume(&[bead], &[], &optics);
        let d = optics.pixel_size;
        for ((z, y, x), &n) in v.values.indexed_iter() {
            let r = position(x, 32, d).hypot(position(y, 32, d)).hypot(position(z, 32, d));
            if r < 1.0 - 1e-9 {
                assert_eq!(n, optics.n_medium + 0.03);
            }
        }

        let a = BeadSpec { center: [-0.3, 0.0, 0.0], radius: 0.8, delta_n: 0.03 };
        let b = BeadSpec { center: [0.3, 0.0, 0.0], radius: 0.8, delta_n: 0.05 };
        let v = make_phantom_volume(&[a, b], &[], &optics);
        assert_eq!(v.center_value(), optics.n_medium + 0.05);
        // A voxel inside only `a`.
        assert_eq!(v.values[[16, 16, 16 - 9]], optics.n_medium + 0.03);
    }

    #[test]
    fn zero_contrast_gives_unit_fields() {
        let optics = small_optics(16, 3);
        let v = make_phantom_volume(&[], &[], &optics);
        let fields = forward_fields(&v, &optics).unwrap();
        assert_eq!(fields.len(), 4);
        for f in &fields {
            assert!(f.amplitude.iter().all(|&a| a == 1.0));
            assert!(f.phase.iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn strong_contrast_rejected() {
        let optics = small_optics(16, 1);
        let v = make_phantom_volume(&[BeadSpec { center: [0.0; 3], radius: 0.5, delta_n: 0.2 }], &[], &optics);
        assert!(matches!(forward_fields(&v, &optics), Err(Error::ScatteringBound { .. })));
    }

    #[test]
    fn weak_bead_matches_projection() {
        let optics = OpticsConfig { grid: 64, ..Default::default() }.normal_only();
        let spec = BeadSpec { center: [0.0; 3], radius: 1.5, delta_n: 0.01 };
        let v = make_phantom_volume(&[spec], &[], &optics);
        let field = &forward_fields(&v, &optics).unwrap()[0];
        let projected = bead_phase(&spec, &optics)[[32, 32]];
        let got = field.phase[[32, 32]];
        assert!((got - projected).abs() < 0.1 * projected, "{got} vs {projected}");
    }

    #[test]
    fn weak_contrast_is_linear() {
        let optics = small_optics(32, 2);
        let phase_for = |dn: f64| {
            let v = make_phantom_volume(&[BeadSpec { center: [0.0; 3], radius: 0.8, delta_n: dn }], &[], &optics);
            forward_fields(&v, &optics).unwrap()
        };
        let a = phase_for(0.005);
        let b = phase_for(0.01);
        for (fa, fb) in a.iter().zip(&b) {
            let (pa, pb) = (fa.phase[[16, 16]], fb.phase[[16, 16]]);
            assert!((pb - 2.0 * pa).abs() < 0.01 * pb.abs(), "{pa} {pb}");
        }
    }

    #[test]
    fn volume_file_round_trip() {
        let optics = small_optics(8, 1);
        let v = make_phantom_volume(&[BeadSpec { center: [0.0; 3], radius: 0.3, delta_n: 0.0625 }], &[], &optics);
        let v = RIVolume { values: v.values.mapv(|x| x as f32 as f64), ..v };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.qpif");
        write_volume(&v, &path).unwrap();
        assert_eq!(read_volume(&path).unwrap(), v);
        let bytes = std::fs::read(&path).unwrap();
        let c = qpif::decode(&bytes).unwrap();
        assert_eq!(c.header.channels, 8);
        assert_eq!(c.meta["volume"], true);
    }

    #[test]
    fn sampled_scenes_are_seeded() {
        let s = PhantomSampling::default();
        let a = s.sample(25.6, 6.4, &mut ChaCha8Rng::seed_from_u64(3));
        let b = s.sample(25.6, 6.4, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!((3..=10).contains(&a.blobs.len()));
        assert!(a.blobs.iter().all(|b| (0.005..0.04).contains(&b.delta_n)));
        a.validate().unwrap();
    }

    #[test]
    fn projected_blob_matches_numeric_integral() {
        let blob = BlobSpec { center: [0.2, -0.1, 0.3], sigma: [0.8, 0.5, 0.6], angle: 0.4, delta_n: 0.02 };
        let p = Phantom { beads: vec![], blobs: vec![blob] };
        let phase = p.projected_phase(16, 16, 0.1, 0.5);
        let (x, y) = (position(9, 16, 0.1), position(6, 16, 0.1));
        let dz = 0.001;
        let integral: f64 = (-6000..6000).map(|i| blob.contrast_at(x, y, i as f64 * dz) * dz).sum();
        assert!((phase[[6, 9]] - 2.0 * PI / 0.5 * integral).abs() < 1e-9);
    }
}
