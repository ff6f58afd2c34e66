//! `qpi` command-line front end.
//!
//! [`run`] parses an argument list, dispatches to a subcommand and reports
//! the exit code together with every file it wrote.

mod evaluate;
mod render;
mod tomogram;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use qpi_core::aberration::{correctors, CorrectionContext};
use qpi_core::dataset::{generate_dataset, SimConfig};
use qpi_core::field::{qpif, read_field, resolve, write_field, Role, MANIFEST_FILE};
use qpi_core::holography::{read_hologram, retrieve_takeda, DEFAULT_FILTER_RADIUS};
use qpi_core::unwrap::unwrap_goldstein;
use qpi_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    /// 0 success, 1 runtime failure, 2 usage error.
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
}

impl CommandOutcome {
    fn ok(artifacts: Vec<PathBuf>) -> Self {
        CommandOutcome { exit_code: 0, artifacts }
    }

    fn failed(code: i32) -> Self {
        CommandOutcome { exit_code: code, artifacts: Vec::new() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "qpi", version, about = "Quantitative phase imaging pipeline")]
struct Cli {
    /// Worker threads; 0 uses one per processor.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a paired synthetic dataset.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Off-axis retrieval of a complex field from a hologram.
    Retrieve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FILTER_RADIUS)]
        filter_radius: f64,
    },
    /// Goldstein phase unwrapping.
    Unwrap {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aberration correction.
    #[command(subcommand)]
    Correct(Correct),
    /// Diffraction tomogram from a multi-angle manifest.
    Tomogram(tomogram::TomogramArgs),
    /// Compare predictions against ground truth.
    Evaluate(evaluate::EvaluateArgs),
    /// Render a field, hologram or volume slice to PNG.
    Render(render::RenderArgs),
}

#[derive(Subcommand, Debug)]
enum Correct {
    /// Divide by a background field.
    Bg {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        background: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subtract a least-squares Zernike fit of the phase.
    Zernike(ZernikeArgs),
}

#[derive(Args, Debug)]
struct ZernikeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 21)]
    max_noll: u32,
    /// Single-channel QPIF; nonzero pixels are background used for the fit.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (without the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let args = std::iter::once(OsString::from("qpi")).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return CommandOutcome::failed(code);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return CommandOutcome::failed(1);
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(artifacts) => CommandOutcome::ok(artifacts),
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            CommandOutcome::failed(1)
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("QPI_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn dispatch(command: Command) -> Result<Vec<PathBuf>> {
    match command {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed),
        Command::Retrieve { input, out, filter_radius } => {
            let hologram = read_hologram(&input)?;
            let field = retrieve_takeda(&hologram, filter_radius)?;
            let mut meta = qpi_core::FieldMeta::new(Role::Raw, file_stem(&input));
            meta.extra.insert("filter_radius".into(), filter_radius.to_string());
            write_field(&field, &meta, &out)?;
            Ok(vec![out])
        }
        Command::Unwrap { input, out } => {
            let (field, mut meta) = read_field(&input)?;
            let result = unwrap_goldstein(&field.phase)?;
            let flagged = result.flagged_fraction();
            if flagged > 0.0 {
                log::warn!("{}: {:.3}% of pixels unwrapped across cuts", input.display(), 100.0 * flagged);
            }
            meta.extra.insert("residues".into(), result.residue_count.to_string());
            meta.extra.insert("flagged_fraction".into(), flagged.to_string());
            let unwrapped = qpi_core::ComplexField { phase: result.phase, wrapped: false, ..field };
            write_field(&unwrapped, &meta, &out)?;
            Ok(vec![out])
        }
        Command::Correct(Correct::Bg { sample, background, out }) => {
            let (field, meta) = read_field(&sample)?;
            let (bg, _) = read_field(&background)?;
            let ctx = CorrectionContext { background: Some(&bg), ..Default::default() };
            let corrected = correctors().get("bg")?.correct(&field, &ctx)?;
            write_field(&corrected, &meta, &out)?;
            Ok(vec![out])
        }
        Command::Correct(Correct::Zernike(a)) => {
            let (field, meta) = read_field(&a.input)?;
            let mask = a.mask.as_deref().map(qpif::read_mask).transpose()?;
            let ctx = CorrectionContext { mask: mask.as_ref(), max_noll: a.max_noll, ..Default::default() };
            let corrected = correctors().get("zernike")?.correct(&field, &ctx)?;
            write_field(&corrected, &meta, &a.out)?;
            Ok(vec![a.out])
        }
        Command::Tomogram(a) => tomogram::run(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::Render(a) => render::run(&a),
    }
}

fn simulate(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let mut config = SimConfig::from_json(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let manifest = generate_dataset(&config, out)?;
    let manifest_path = out.join(MANIFEST_FILE);
    let mut artifacts: Vec<PathBuf> = manifest
        .entries
        .iter()
        .flat_map(|e| [resolve(&manifest_path, &e.input_path), resolve(&manifest_path, &e.gt_path)])
        .collect();
    artifacts.push(manifest_path);
    Ok(artifacts)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// A directory stands for the manifest inside it.
fn manifest_path(path: &Path) -> Option<PathBuf> {
    if path.is_dir() {
        Some(path.join(MANIFEST_FILE))
    } else if path.extension().is_some_and(|e| e == "jsonl") {
        Some(path.to_path_buf())
    } else {
        None
    }
}
