use std::path::PathBuf;

use clap::Args;
use qpi_core::field::{read_field, resolve, Manifest};
use qpi_core::odt::{reconstruct_with, scatter_schemes, DEFAULT_REGULARIZATION_ITERS};
use qpi_core::phantom::{write_volume, OpticsConfig};
use qpi_core::{ComplexField, Error, FieldMeta, Result};

use crate::manifest_path;

#[derive(Args, Debug)]
pub struct TomogramArgs {
    /// Multi-angle manifest or dataset directory.
    #[arg(long)]
    manifest: PathBuf,
    /// QPIF-V output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_REGULARIZATION_ITERS)]
    reg_iters: usize,
    /// Pair-id prefix of the scene to use; defaults to the first scene.
    #[arg(long)]
    scene: Option<String>,
    /// Reconstruct from the `gt` (corrected) or `input` fields.
    #[arg(long, default_value = "gt", value_parser = ["gt", "input"])]
    fields: String,
    #[arg(long, default_value = "nearest")]
    scatter: String,
}

fn scene_of(pair_id: &str) -> &str {
    pair_id.rsplit_once("_a").map_or(pair_id, |(scene, _)| scene)
}

fn number(meta: &FieldMeta, key: &str) -> Result<f64> {
    meta.extra_f64(key)
        .ok_or_else(|| Error::Format(format!("pair {} lacks numeric metadata '{key}'", meta.pair_id)))
}

pub fn run(args: &TomogramArgs) -> Result<Vec<PathBuf>> {
    let path = manifest_path(&args.manifest).unwrap_or_else(|| args.manifest.clone());
    let manifest = Manifest::read(&path)?;
    let scene = match &args.scene {
        Some(s) => s.clone(),
        None => manifest
            .entries
            .iter()
            .map(|e| scene_of(&e.pair_id))
            .min()
            .ok_or(Error::EmptyInput)?
            .to_string(),
    };
    let mut entries: Vec<_> = manifest.entries.iter().filter(|e| scene_of(&e.pair_id) == scene).collect();
    if entries.is_empty() {
        return Err(Error::Pair(format!("no pairs for scene {scene}")));
    }
    entries.sort_by_key(|e| e.angle_index);
    log::info!("tomogram of scene {scene} from {} angles", entries.len());

    let mut fields: Vec<ComplexField> = Vec::with_capacity(entries.len());
    let mut metas = Vec::with_capacity(entries.len());
    for e in &entries {
        let file = if args.fields == "gt" { &e.gt_path } else { &e.input_path };
        let (field, meta) = read_field(resolve(&path, file))?;
        fields.push(field);
        metas.push(meta);
    }
    let first = &fields[0];
    if first.width() != first.height() {
        return Err(Error::Shape(format!("tomography needs square fields, got {:?}", first.dim())));
    }
    let optics = OpticsConfig {
        wavelength: first.wavelength,
        n_medium: number(&metas[0], "n_medium")?,
        pixel_size: first.pixel_size,
        grid: first.width(),
        angles: metas
            .iter()
            .map(|m| Ok((number(m, "illum_kx")?, number(m, "illum_ky")?)))
            .collect::<Result<_>>()?,
    };
    let schemes = scatter_schemes();
    let volume = reconstruct_with(&fields, &optics, args.reg_iters, schemes.get(&args.scatter)?)?;
    write_volume(&volume, &args.out)?;
    Ok(vec![args.out.clone()])
}
