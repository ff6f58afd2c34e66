//! Synthetic paired-dataset generation.
//!
//! Each scene runs phantom -> ideal field -> aberrated field -> hologram ->
//! retrieved field. The network input is the retrieved sample field, still
//! wrapped and aberrated; the ground truth is the background-corrected,
//! Goldstein-unwrapped field.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aberration::{correct_background, synth_aberration, AberrationModel, AberrationSampling};
use crate::error::{Error, Result};
use crate::field::manifest::splitmix64;
use crate::field::{crop_center, ComplexField, FieldMeta, Manifest, PairExporter, Role, SplitRatios};
use crate::holography::{add_intensity_noise, band_limit, retrieve_takeda, synth_hologram, Carrier};
use crate::phantom::{forward_fields, OpticsConfig, Phantom, PhantomSampling, RIVolume};
use crate::unwrap::unwrap_goldstein;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub count: usize,
    /// Side of the stored fields; a power of two.
    pub grid: usize,
    /// Extra pixels simulated on every side and cropped away.
    pub margin: usize,
    /// `optics.grid` is ignored; the simulation grid is `grid + 2 * margin`.
    pub optics: OpticsConfig,
    pub carrier: Carrier,
    pub filter_radius: f64,
    /// Low-pass applied to the ideal object, cycles per pixel.
    pub object_bandwidth: f64,
    pub aberration: AberrationSampling,
    pub phantom: PhantomSampling,
    /// Std of additive Gaussian intensity noise on each hologram.
    pub noise: f64,
    pub seed: u64,
    pub split_ratio: f64,
    pub test_ratio: f64,
    pub include_angles: bool,
    pub fixed_instrument: bool,
    /// Axial slices of the simulated volume when `include_angles` is set.
    pub volume_depth: usize,
    /// Largest tolerated fraction of unwrap-flagged pixels.
    pub max_flagged_fraction: f64,
    pub max_attempts: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            count: 10,
            grid: 256,
            margin: 32,
            optics: OpticsConfig::default(),
            carrier: Carrier::default(),
            filter_radius: crate::holography::DEFAULT_FILTER_RADIUS,
            object_bandwidth: 0.06,
            aberration: AberrationSampling::default(),
            phantom: PhantomSampling::default(),
            noise: 0.0,
            seed: 0,
            split_ratio: 0.8,
            test_ratio: 0.0,
            include_angles: false,
            fixed_instrument: false,
            volume_depth: 64,
            max_flagged_fraction: 0.01,
            max_attempts: 16,
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<SimConfig> {
        let config: SimConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn sim_size(&self) -> usize {
        self.grid + 2 * self.margin
    }

    /// Optics for the simulation grid.
    pub fn sim_optics(&self) -> OpticsConfig {
        let mut optics = self.optics.clone();
        optics.grid = self.sim_size();
        if !self.include_angles {
            optics.angles = vec![(0.0, 0.0)];
        }
        optics
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("count must be at least 1".into()));
        }
        if !self.grid.is_power_of_two() {
            return Err(Error::Config(format!("grid {} is not a power of two", self.grid)));
        }
        if !(self.object_bandwidth > 0.0 && self.object_bandwidth <= self.filter_radius) {
            return Err(Error::Config(format!(
                "object bandwidth {} must lie in (0, filter_radius = {}]",
                self.object_bandwidth, self.filter_radius
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise std {}", self.noise)));
        }
        if !(0.0..=1.0).contains(&self.max_flagged_fraction) || self.max_attempts == 0 {
            return Err(Error::Config("rejection limits out of range".into()));
        }
        if self.include_angles && self.volume_depth == 0 {
            return Err(Error::Config("volume_depth must be positive".into()));
        }
        SplitRatios { train: self.split_ratio, test: self.test_ratio }.validate()?;
        self.carrier.validate()?;
        self.aberration.validate()?;
        self.phantom.validate()?;
        self.sim_optics().validate()
    }
}

/// One generated pair plus the ideal object field it was derived from.
#[derive(Debug, Clone)]
pub struct ScenePair {
    pub input: ComplexField,
    pub gt: ComplexField,
    pub ideal: ComplexField,
    pub meta: FieldMeta,
}

pub fn scene_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

fn attempt_seed(scene_seed: u64, attempt: u32) -> u64 {
    if attempt == 0 {
        scene_seed
    } else {
        splitmix64(scene_seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

fn instrument_model(config: &SimConfig) -> AberrationModel {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0x1A57_0000_0000_0001));
    config.aberration.sample(&mut rng)
}

fn draw_model(config: &SimConfig, instrument: Option<&AberrationModel>, rng: &mut ChaCha8Rng) -> AberrationModel {
    match instrument {
        Some(base) => config.aberration.jitter(base, rng),
        None => config.aberration.sample(rng),
    }
}

/// The normal-incidence pair for one scene seed. Pair ids derive from the seed.
pub fn generate_pair(scene_seed: u64, config: &SimConfig) -> Result<(ComplexField, ComplexField, FieldMeta)> {
    let normal = SimConfig { include_angles: false, ..config.clone() };
    let mut pairs = generate_scene(scene_seed, &format!("scene-{scene_seed:016x}"), &normal)?;
    let p = pairs.swap_remove(0);
    Ok((p.input, p.gt, p.meta))
}

/// All pairs for one scene: one, or one per angle when `include_angles` is set.
/// Scenes whose unwrap flags too many pixels are redrawn from a derived seed.
pub fn generate_scene(scene_seed: u64, pair_prefix: &str, config: &SimConfig) -> Result<Vec<ScenePair>> {
    config.validate()?;
    let instrument = config.fixed_instrument.then(|| instrument_model(config));
    let mut last_reason = String::new();
    for attempt in 0..config.max_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed(scene_seed, attempt));
        match scene_attempt(config, instrument.as_ref(), pair_prefix, &mut rng) {
            Ok(mut pairs) => {
                if attempt > 0 {
                    log::info!("scene {pair_prefix}: accepted after {attempt} rejected draws");
                }
                for p in &mut pairs {
                    p.meta.extra.insert("rejected_draws".into(), attempt.to_string());
                }
                return Ok(pairs);
            }
            Err(Error::SceneRejected { reason, .. }) => {
                log::debug!("scene {pair_prefix} draw {attempt} rejected: {reason}");
                last_reason = reason;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::SceneRejected { scene: scene_seed, reason: last_reason })
}

fn scene_attempt(
    config: &SimConfig,
    instrument: Option<&AberrationModel>,
    pair_prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ScenePair>> {
    let optics = config.sim_optics();
    let n = optics.grid;
    let fov = n as f64 * optics.pixel_size;
    let depth = config.volume_depth as f64 * optics.pixel_size;
    let phantom = config.phantom.sample(fov, depth, rng);
    let ideals = ideal_fields(&phantom, &optics, config)?;
    let base = draw_model(config, instrument, rng);

    let mut out = Vec::with_capacity(ideals.len());
    for (index, ideal) in ideals.into_iter().enumerate() {
        let model = if index == 0 { base.clone() } else { config.aberration.jitter(&base, rng) };
        let (input, gt) = measure(&ideal, &model, config, rng)?;
        let pair_id = if config.include_angles {
            format!("{pair_prefix}_a{index:02}")
        } else {
            pair_prefix.to_string()
        };
        let mut meta = FieldMeta::new(Role::Input, pair_id);
        meta.angle_index = index as u32;
        meta.aberration_truth = Some(model.zernike_coeffs.clone());
        let (kx, ky) = optics.angles[index];
        meta.extra.insert("n_medium".into(), optics.n_medium.to_string());
        meta.extra.insert("illum_kx".into(), kx.to_string());
        meta.extra.insert("illum_ky".into(), ky.to_string());
        out.push(ScenePair { input, gt, ideal: crop_center(&ideal, config.grid)?, meta });
    }
    Ok(out)
}

/// Unit-amplitude projected phase at normal incidence; per-angle Rytov
/// fields of the painted volume otherwise. Both band-limited.
fn ideal_fields(phantom: &Phantom, optics: &OpticsConfig, config: &SimConfig) -> Result<Vec<ComplexField>> {
    let n = optics.grid;
    let limit = |log_field: Array2<Complex64>| {
        band_limit(&log_field, config.object_bandwidth).mapv(|u| u.exp())
    };
    if !config.include_angles {
        let phase = phantom.projected_phase(n, n, optics.pixel_size, optics.wavelength);
        let exp = limit(phase.mapv(|p| Complex64::new(0.0, p)));
        return Ok(vec![unwrapped_from_exp(&exp, &phase, optics)]);
    }
    let mut volume = RIVolume::uniform(n, n, config.volume_depth, optics.pixel_size, optics.n_medium);
    volume.paint(phantom);
    forward_fields(&volume, optics)?
        .into_iter()
        .map(|f| {
            let log_field = ndarray::Zip::from(&f.amplitude)
                .and(&f.phase)
                .map_collect(|&a, &p| Complex64::new(a.ln(), p));
            let exp = limit(log_field);
            Ok(unwrapped_from_exp(&exp, &f.phase, optics))
        })
        .collect()
}

/// Keeps the continuous phase of a band-limited exponential by snapping its
/// wrapped phase to the branch nearest the reference.
fn unwrapped_from_exp(exp: &Array2<Complex64>, reference: &Array2<f64>, optics: &OpticsConfig) -> ComplexField {
    let amplitude = exp.mapv(|v| v.norm());
    let phase = ndarray::Zip::from(exp).and(reference).map_collect(|v, &r| {
        let p = v.arg();
        p + 2.0 * PI * ((r - p) / (2.0 * PI)).round()
    });
    ComplexField {
        amplitude,
        phase,
        pixel_size: optics.pixel_size,
        wavelength: optics.wavelength,
        wrapped: false,
    }
}

fn measure(
    ideal: &ComplexField,
    model: &AberrationModel,
    config: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ComplexField, ComplexField)> {
    let (h, w) = ideal.dim();
    let mut multiplier = synth_aberration(model, w, h)?;
    multiplier.pixel_size = ideal.pixel_size;
    multiplier.wavelength = ideal.wavelength;
    let sample = ideal.multiply(&multiplier)?;

    let mut holo_sample = synth_hologram(&sample, config.carrier)?;
    let mut holo_bg = synth_hologram(&multiplier, config.carrier)?;
    add_intensity_noise(&mut holo_sample, config.noise, rng);
    add_intensity_noise(&mut holo_bg, config.noise, rng);
    let retrieved = retrieve_takeda(&holo_sample, config.filter_radius)?;
    let background = retrieve_takeda(&holo_bg, config.filter_radius)?;

    let corrected = crop_center(&correct_background(&retrieved, &background)?, config.grid)?;
    let unwrapped = unwrap_goldstein(&corrected.phase)?;
    let flagged = unwrapped.flagged_fraction();
    if flagged > config.max_flagged_fraction {
        return Err(Error::SceneRejected {
            scene: 0,
            reason: format!("{:.2}% of pixels flagged by unwrap", 100.0 * flagged),
        });
    }
    let mut phase = unwrapped.phase;
    let offset = 2.0 * PI * (border_mean(&phase) / (2.0 * PI)).round();
    phase.mapv_inplace(|p| p - offset);
    let gt = ComplexField { phase, wrapped: false, ..corrected };
    Ok((crop_center(&retrieved, config.grid)?, gt))
}

fn border_mean(grid: &Array2<f64>) -> f64 {
    let (h, w) = grid.dim();
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((r, c), &v) in grid.indexed_iter() {
        if r == 0 || c == 0 || r + 1 == h || c + 1 == w {
            sum += v;
            count += 1;
        }
    }
    if count == 0 { 0.0 } else { sum / count as f64 }
}

/// Generates `config.count` scenes in parallel and writes them with a manifest.
/// Angle pairs of one scene share a split.
pub fn generate_dataset(config: &SimConfig, out_dir: &Path) -> Result<Manifest> {
    config.validate()?;
    let mut exporter = PairExporter::new(out_dir)?;
    let chunk = rayon::current_num_threads().max(1) * 4;
    let indices: Vec<usize> = (0..config.count).collect();
    let mut rejected = 0u64;
    for block in indices.chunks(chunk) {
        let scenes: Vec<Result<(String, Vec<ScenePair>)>> = block
            .par_iter()
            .map(|&i| {
                let prefix = format!("scene{i:05}");
                generate_scene(scene_seed(config.seed, i as u64), &prefix, config).map(|p| (prefix, p))
            })
            .collect();
        for scene in scenes {
            let (prefix, pairs) = scene?;
            for p in &pairs {
                exporter.add(&p.input, &p.gt, &p.meta, &prefix)?;
            }
            rejected += pairs
                .first()
                .and_then(|p| p.meta.extra.get("rejected_draws"))
                .and_then(|s| s.parse::<u64>().ok())
                .unwrap_or(0);
        }
    }
    log::info!("generated {} scenes, {rejected} draws rejected", config.count);
    exporter.finish(SplitRatios { train: config.split_ratio, test: config.test_ratio }, config.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{read_field, resolve, MANIFEST_FILE};
    use crate::metrics::fce;
    use crate::unwrap::residues;

    fn small() -> SimConfig {
        SimConfig { count: 3, grid: 64, margin: 16, seed: 5, ..SimConfig::default() }
    }

    fn no_aberration(mut c: SimConfig) -> SimConfig {
        c.aberration.sigma0 = 0.0;
        c.aberration.max_fringes = 0;
        c
    }

    #[test]
    fn rejects_bad_configs() {
        for c in [
            SimConfig { count: 0, ..small() },
            SimConfig { grid: 96, ..small() },
            SimConfig { split_ratio: 1.5, ..small() },
            SimConfig { noise: -1.0, ..small() },
        ] {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
        assert!(SimConfig::from_json("{\"grid\": 64, \"margin\": 8}").is_ok());
        assert!(SimConfig::from_json("{\"count\": \"x\"}").is_err());
    }

    #[test]
    fn unaberrated_input_matches_gt() {
        let c = no_aberration(small());
        for seed in 0..3 {
            let (input, gt, _) = generate_pair(seed, &c).unwrap();
            let e = fce(&gt, &input).unwrap();
            assert!(e < 1e-3, "seed {seed}: {e}");
        }
    }

    #[test]
    fn gt_tracks_ideal_field() {
        let c = small();
        for seed in 0..4 {
            let pair = generate_scene(seed, "s", &c).unwrap().remove(0);
            let e = fce(&pair.gt, &pair.ideal).unwrap();
            assert!(e < 1e-2, "seed {seed}: {e}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let c = small();
        let a = generate_pair(42, &c).unwrap();
        let b = generate_pair(42, &c).unwrap();
        assert_eq!(a, b);
        let other = generate_pair(43, &c).unwrap();
        assert_ne!(a.0, other.0);
    }

    #[test]
    fn pairs_are_wrapped_input_and_residue_free_gt() {
        let c = small();
        for seed in 0..3 {
            let (input, gt, meta) = generate_pair(seed, &c).unwrap();
            assert!(input.wrapped && !gt.wrapped);
            assert!(input.phase.iter().all(|&p| p > -PI && p <= PI));
            assert_eq!(residues(&gt.phase).unwrap().count(), 0);
            assert_eq!(input.dim(), (64, 64));
            assert!(meta.aberration_truth.as_ref().is_some_and(|t| !t.is_empty()));
        }
    }

    #[test]
    fn default_aberrations_are_nontrivial() {
        let c = small();
        let mean: f64 = (0..6)
            .map(|s| {
                let (input, gt, _) = generate_pair(s, &c).unwrap();
                fce(&gt, &input).unwrap()
            })
            .sum::<f64>()
            / 6.0;
        assert!(mean > 0.05, "mean fce {mean}");
    }

    #[test]
    fn fixed_instrument_shares_low_order_terms() {
        let c = SimConfig { fixed_instrument: true, ..small() };
        let (_, _, a) = generate_pair(1, &c).unwrap();
        let (_, _, b) = generate_pair(2, &c).unwrap();
        let (ta, tb) = (a.aberration_truth.unwrap(), b.aberration_truth.unwrap());
        let defocus = |t: &[(u32, f64)]| t.iter().find(|e| e.0 == 4).unwrap().1;
        let rel = (defocus(&ta) - defocus(&tb)).abs() / defocus(&ta).abs();
        assert!(rel < 0.6, "defocus {} vs {}", defocus(&ta), defocus(&tb));
    }

    #[test]
    fn dataset_count_and_determinism() {
        let c = SimConfig { count: 4, ..small() };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m = generate_dataset(&c, d1.path()).unwrap();
        generate_dataset(&c, d2.path()).unwrap();
        assert_eq!(m.entries.len(), 4);
        let bytes = |d: &Path| std::fs::read(d.join(MANIFEST_FILE)).unwrap();
        assert_eq!(bytes(d1.path()), bytes(d2.path()));
        let files = std::fs::read_dir(d1.path()).unwrap().count();
        assert_eq!(files, 9);
        let e = &m.entries[2];
        let (input, meta) = read_field(resolve(&d1.path().join(MANIFEST_FILE), &e.input_path)).unwrap();
        assert_eq!(meta.role, Role::Input);
        assert_eq!(meta.pair_id, "scene00002");
        assert_eq!(input.dim(), (64, 64));
    }

    #[test]
    fn angle_datasets_emit_one_pair_per_angle() {
        let mut c = SimConfig { count: 2, grid: 32, margin: 16, volume_depth: 16, include_angles: true, ..small() };
        c.optics.angles = c.optics.cone(6, 30.0);
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&c, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 14);
        let prefixes: std::collections::BTreeSet<_> =
            m.entries.iter().map(|e| e.pair_id.split('_').next().unwrap().to_string()).collect();
        assert_eq!(prefixes.len(), 2);
        for (k, e) in m.entries[..7].iter().enumerate() {
            assert_eq!(e.angle_index, k as u32);
            assert_eq!(e.split, m.entries[0].split);
        }
        let (_, meta) = read_field(dir.path().join(&m.entries[3].gt_path)).unwrap();
        let kx = meta.extra_f64("illum_kx").unwrap();
        assert!((kx - c.optics.angles[3].0).abs() < 1e-12);
    }
}
