use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use qpi_core::field::{qpif, read_field, resolve, Manifest, Split};
use qpi_core::metrics::{error_report, percentile_summary, Histogram, HistogramSpec, MetricsReport};
use qpi_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest_path;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Ground-truth QPIF file, manifest, or dataset directory.
    #[arg(long)]
    gt: PathBuf,
    /// Prediction QPIF file, manifest (matched by pair_id, `input_path`
    /// column), or directory of `<pair_id>_pred.qpif` files.
    #[arg(long)]
    pred: PathBuf,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Pooled error histogram as CSV.
    #[arg(long)]
    hist: Option<PathBuf>,
    #[arg(long, default_value_t = 0.85)]
    percentile: f64,
    /// Background mask for coherent-noise statistics.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Restrict manifest pairs to one split.
    #[arg(long, value_parser = ["train", "val", "test"])]
    split: Option<String>,
    #[arg(long, default_value_t = 101)]
    bins: usize,
    /// Histogram covers [-range, range] radians.
    #[arg(long, default_value_t = 1.0)]
    hist_range: f64,
}

#[derive(Debug, Serialize)]
struct PairReport {
    pair_id: String,
    /// Pixelwise |phi_gt - phi_out| at the requested percentile.
    abs_error_percentile: f64,
    #[serde(flatten)]
    metrics: MetricsReport,
}

#[derive(Debug, Serialize)]
struct Summary {
    pairs: usize,
    percentile: f64,
    mean_fce: f64,
    median_fce: f64,
    fce_at_percentile: f64,
    mean_rmse_phase: f64,
    median_rmse_phase: f64,
    rmse_phase_at_percentile: f64,
    abs_error_at_percentile: f64,
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    summary: Summary,
    pairs: Vec<PairReport>,
}

type PredLookup = Box<dyn Fn(&str) -> Option<PathBuf>>;

struct Job {
    pair_id: String,
    gt: PathBuf,
    pred: PathBuf,
}

pub fn run(args: &EvaluateArgs) -> Result<Vec<PathBuf>> {
    let jobs = match_pairs(args)?;
    let mask = args.mask.as_deref().map(qpif::read_mask).transpose()?;
    let spec = HistogramSpec { lo: -args.hist_range, hi: args.hist_range, bins: args.bins };
    let pairs: Vec<PairReport> = jobs
        .par_iter()
        .map(|job| {
            let (gt, _) = read_field(&job.gt)?;
            let (pred, _) = read_field(&job.pred)?;
            let metrics = error_report(&gt, &pred, mask.as_ref(), spec)?;
            let abs_err: Vec<f64> = (&gt.phase - &pred.phase).iter().map(|e| e.abs()).collect();
            Ok(PairReport {
                pair_id: job.pair_id.clone(),
                abs_error_percentile: percentile_summary(&abs_err, args.percentile)?,
                metrics,
            })
        })
        .collect::<Result<_>>()?;

    let report = EvaluationReport { summary: summarize(&pairs, args.percentile)?, pairs };
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    let mut artifacts = Vec::new();
    match &args.report {
        Some(path) => {
            fs::write(path, &text).map_err(|e| Error::io(path, e))?;
            artifacts.push(path.clone());
        }
        None => print!("{text}"),
    }
    if let Some(path) = &args.hist {
        fs::write(path, pooled_histogram(&report.pairs).to_csv()).map_err(|e| Error::io(path, e))?;
        artifacts.push(path.clone());
    }
    Ok(artifacts)
}

fn summarize(pairs: &[PairReport], p: f64) -> Result<Summary> {
    let fce: Vec<f64> = pairs.iter().map(|r| r.metrics.fce).collect();
    let rmse: Vec<f64> = pairs.iter().map(|r| r.metrics.rmse_phase).collect();
    let abs: Vec<f64> = pairs.iter().map(|r| r.abs_error_percentile).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Summary {
        pairs: pairs.len(),
        percentile: p,
        mean_fce: mean(&fce),
        median_fce: percentile_summary(&fce, 0.5)?,
        fce_at_percentile: percentile_summary(&fce, p)?,
        mean_rmse_phase: mean(&rmse),
        median_rmse_phase: percentile_summary(&rmse, 0.5)?,
        rmse_phase_at_percentile: percentile_summary(&rmse, p)?,
        abs_error_at_percentile: percentile_summary(&abs, p)?,
    })
}

/// Equal-weight pooling; every pair in a dataset has the same pixel count.
fn pooled_histogram(pairs: &[PairReport]) -> Histogram {
    let first = &pairs[0].metrics.error_histogram;
    let mut fractions = vec![0.0; first.fractions.len()];
    for r in pairs {
        for (acc, f) in fractions.iter_mut().zip(&r.metrics.error_histogram.fractions) {
            *acc += f;
        }
    }
    fractions.iter_mut().for_each(|f| *f /= pairs.len() as f64);
    Histogram { centers: first.centers.clone(), fractions }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

/// Sorted by pair_id so reports do not depend on scheduling.
fn match_pairs(args: &EvaluateArgs) -> Result<Vec<Job>> {
    let Some(gt_manifest) = manifest_path(&args.gt) else {
        if manifest_path(&args.pred).is_some() {
            return Err(Error::Config("a single gt file needs a single pred file".into()));
        }
        let (_, meta) = read_field(&args.gt)?;
        return Ok(vec![Job { pair_id: meta.pair_id, gt: args.gt.clone(), pred: args.pred.clone() }]);
    };
    let manifest = Manifest::read(&gt_manifest)?;
    let gt: BTreeMap<String, PathBuf> = manifest
        .entries
        .iter()
        .filter(|e| args.split.as_deref().is_none_or(|s| s == split_name(e.split)))
        .map(|e| (e.pair_id.clone(), resolve(&gt_manifest, &e.gt_path)))
        .collect();
    if gt.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lookup: PredLookup = match manifest_path(&args.pred) {
        Some(pm) if pm.is_file() => {
            let preds = Manifest::read(&pm)?;
            let map: BTreeMap<String, PathBuf> = preds
                .entries
                .iter()
                .map(|e| (e.pair_id.clone(), resolve(&pm, &e.input_path)))
                .collect();
            Box::new(move |id| map.get(id).cloned())
        }
        _ if args.pred.is_dir() => {
            let dir = args.pred.clone();
            Box::new(move |id| {
                [format!("{id}_pred.qpif"), format!("{id}.qpif")]
                    .into_iter()
                    .map(|name| dir.join(name))
                    .find(|p| p.is_file())
            })
        }
        _ => return Err(Error::Config(format!("{} is not a manifest or directory", args.pred.display()))),
    };
    gt.into_iter()
        .map(|(pair_id, gt)| {
            let pred = lookup(&pair_id)
                .ok_or_else(|| Error::Pair(format!("no prediction for pair {pair_id}")))?;
            Ok(Job { pair_id, gt, pred })
        })
        .collect()
}
