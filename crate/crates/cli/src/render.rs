use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use image::{ImageFormat, Rgb, RgbImage};
use ndarray::{Array2, Axis};
use qpi_core::field::{qpif, read_field};
use qpi_core::phantom::read_volume;
use qpi_core::{Error, Result};

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// QPIF field, hologram, mask, or QPIF-V volume.
    #[arg(long = "in")]
    input: PathBuf,
    /// PNG output; the colour scale is written next to it as `.txt`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Channel::Phase)]
    channel: Channel,
    /// Volume slice index; defaults to the central slice.
    #[arg(long)]
    slice: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Channel {
    Phase,
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scale {
    Diverging { lo: f64, hi: f64 },
    Gray { lo: f64, hi: f64 },
}

struct Image {
    data: Array2<f64>,
    quantity: &'static str,
    unit: &'static str,
    scale: Scale,
}

fn data_range(data: &Array2<f64>) -> (f64, f64) {
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn symmetric(data: &Array2<f64>) -> Scale {
    let m = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let m = if m > 0.0 { m } else { 1.0 };
    Scale::Diverging { lo: -m, hi: m }
}

fn load(args: &RenderArgs) -> Result<Image> {
    let container = qpif::read_container(&args.input)?;
    if container.meta.get("volume").and_then(|v| v.as_bool()) == Some(true) {
        let volume = read_volume(&args.input)?;
        let z = args.slice.unwrap_or(volume.nz() / 2);
        if z >= volume.nz() {
            return Err(Error::Shape(format!("slice {z} outside volume depth {}", volume.nz())));
        }
        let delta = volume.values.index_axis(Axis(0), z).mapv(|n| n - volume.n_medium);
        let scale = symmetric(&delta);
        return Ok(Image { data: delta, quantity: "refractive index minus medium", unit: "1", scale });
    }
    if container.header.channels == 1 {
        let data = container.plane(0);
        let (lo, hi) = data_range(&data);
        return Ok(Image { data, quantity: "intensity", unit: "a.u.", scale: Scale::Gray { lo, hi } });
    }
    let (field, _) = read_field(&args.input)?;
    Ok(match args.channel {
        Channel::Amplitude => {
            let (lo, hi) = data_range(&field.amplitude);
            Image { data: field.amplitude, quantity: "amplitude", unit: "a.u.", scale: Scale::Gray { lo, hi } }
        }
        Channel::Phase => {
            let scale = if field.wrapped { Scale::Diverging { lo: -PI, hi: PI } } else { symmetric(&field.phase) };
            Image { data: field.phase, quantity: "phase", unit: "rad", scale }
        }
    })
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn colour(scale: Scale, v: f64) -> Rgb<u8> {
    const BLUE: [f64; 3] = [0.230, 0.299, 0.754];
    const WHITE: [f64; 3] = [0.865, 0.865, 0.865];
    const RED: [f64; 3] = [0.706, 0.016, 0.150];
    let (lo, hi) = match scale {
        Scale::Diverging { lo, hi } | Scale::Gray { lo, hi } => (lo, hi),
    };
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    let rgb = match scale {
        Scale::Gray { .. } => [t, t, t],
        Scale::Diverging { .. } if t < 0.5 => lerp(BLUE, WHITE, 2.0 * t),
        Scale::Diverging { .. } => lerp(WHITE, RED, 2.0 * t - 1.0),
    };
    Rgb(rgb.map(|c| (c * 255.0).round() as u8))
}

fn sidecar(image: &Image, source: &Path) -> String {
    let (name, lo, hi) = match image.scale {
        Scale::Diverging { lo, hi } => ("diverging blue-white-red", lo, hi),
        Scale::Gray { lo, hi } => ("grayscale black-white", lo, hi),
    };
    let mut s = String::new();
    let _ = writeln!(s, "source: {}", source.display());
    let _ = writeln!(s, "quantity: {}", image.quantity);
    let _ = writeln!(s, "unit: {}", image.unit);
    let _ = writeln!(s, "colormap: {name}");
    let _ = writeln!(s, "range: {lo} {hi}");
    s
}

pub fn run(args: &RenderArgs) -> Result<Vec<PathBuf>> {
    let image = load(args)?;
    let (h, w) = image.data.dim();
    let png = RgbImage::from_fn(w as u32, h as u32, |x, y| colour(image.scale, image.data[[y as usize, x as usize]]));
    png.save_with_format(&args.out, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(&args.out, io),
        other => Error::Format(other.to_string()),
    })?;
    let text_path = args.out.with_extension("txt");
    fs::write(&text_path, sidecar(&image, &args.input)).map_err(|e| Error::io(&text_path, e))?;
    Ok(vec![args.out.clone(), text_path])
}
