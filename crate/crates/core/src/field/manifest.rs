use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_field, ComplexField, FieldMeta, Role};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One line of a manifest. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub input_path: String,
    pub gt_path: String,
    pub split: Split,
    pub angle_index: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            // Field order of ManifestEntry fixes the key order on disk.
            let line = serde_json::to_string(e).expect("manifest entries serialize");
            writeln!(out, "{line}").unwrap();
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::Format(format!("manifest line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Manifest { entries })
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}

/// Resolves a manifest-relative path.
pub fn resolve(manifest_path: &Path, entry_path: &str) -> PathBuf {
    let p = Path::new(entry_path);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    manifest_path.parent().unwrap_or_else(|| Path::new(".")).join(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn train_val(train: f64) -> Self {
        SplitRatios { train, test: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| (0.0..=1.0).contains(&x);
        if !ok(self.train) || !ok(self.test) || self.train + self.test > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "split ratios train={} test={} must lie in [0, 1] and sum to at most 1",
                self.train, self.test
            )));
        }
        Ok(())
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Platform-independent hash of `(seed, pair_id)`.
pub fn split_hash(seed: u64, pair_id: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a64(pair_id.as_bytes())))
}

/// Orders ids by `split_hash` and hands out train, test and val slots in that
/// order, so each split size is the rounded configured fraction.
pub fn assign_splits(pair_ids: &[&str], ratios: SplitRatios, seed: u64) -> Result<Vec<Split>> {
    ratios.validate()?;
    let n = pair_ids.len();
    let n_train = (ratios.train * n as f64).round() as usize;
    let n_test = ((ratios.test * n as f64).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (split_hash(seed, pair_ids[i]), pair_ids[i]));
    let mut splits = vec![Split::Val; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_test {
            Split::Test
        } else {
            Split::Val
        };
    }
    Ok(splits)
}

/// Writes every pair as QPIF plus a manifest; splits are train / val only.
pub fn export_pairs(
    pairs: &[(ComplexField, ComplexField, FieldMeta)],
    split_ratio: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest> {
    export_pairs_with(pairs, SplitRatios::train_val(split_ratio), seed, out_dir)
}

pub fn export_pairs_with(
    pairs: &[(ComplexField, ComplexField, FieldMeta)],
    ratios: SplitRatios,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest> {
    ratios.validate()?;
    let mut seen = HashSet::new();
    for (input, gt, meta) in pairs {
        check_pair(input, gt, meta)?;
        if !seen.insert(meta.pair_id.as_str()) {
            return Err(Error::Pair(format!("duplicate pair_id {}", meta.pair_id)));
        }
    }
    let mut exporter = PairExporter::new(out_dir)?;
    for (input, gt, meta) in pairs {
        exporter.add(input, gt, meta, &meta.pair_id)?;
    }
    exporter.finish(ratios, seed)
}

fn check_pair(input: &ComplexField, gt: &ComplexField, meta: &FieldMeta) -> Result<()> {
    if input.dim() != gt.dim() {
        return Err(Error::Pair(format!(
            "pair {}: input {:?} vs gt {:?}",
            meta.pair_id,
            input.dim(),
            gt.dim()
        )));
    }
    Ok(())
}

struct Pending {
    entry: ManifestEntry,
    group: String,
}

/// Incremental export: files are written as pairs arrive, the manifest once
/// all are known. Pairs sharing a `group` always land in the same split.
pub struct PairExporter {
    out_dir: PathBuf,
    seen: HashSet<String>,
    pending: Vec<Pending>,
}

impl PairExporter {
    pub fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        Ok(PairExporter { out_dir: out_dir.to_path_buf(), seen: HashSet::new(), pending: Vec::new() })
    }

    pub fn add(&mut self, input: &ComplexField, gt: &ComplexField, meta: &FieldMeta, group: &str) -> Result<()> {
        check_pair(input, gt, meta)?;
        if !self.seen.insert(meta.pair_id.clone()) {
            return Err(Error::Pair(format!("duplicate pair_id {}", meta.pair_id)));
        }
        let input_name = format!("{}_input.qpif", meta.pair_id);
        let gt_name = format!("{}_gt.qpif", meta.pair_id);
        write_field(input, &meta.with_role(Role::Input), self.out_dir.join(&input_name))?;
        write_field(gt, &meta.with_role(Role::Gt), self.out_dir.join(&gt_name))?;
        self.pending.push(Pending {
            entry: ManifestEntry {
                pair_id: meta.pair_id.clone(),
                input_path: input_name,
                gt_path: gt_name,
                split: Split::Val,
                angle_index: meta.angle_index,
            },
            group: group.to_string(),
        });
        Ok(())
    }

    pub fn finish(self, ratios: SplitRatios, seed: u64) -> Result<Manifest> {
        let mut groups: Vec<&str> = self.pending.iter().map(|p| p.group.as_str()).collect();
        groups.sort_unstable();
        groups.dedup();
        let splits = assign_splits(&groups, ratios, seed)?;
        let entries = self
            .pending
            .iter()
            .map(|p| {
                let g = groups.binary_search(&p.group.as_str()).expect("group recorded");
                ManifestEntry { split: splits[g], ..p.entry.clone() }
            })
            .collect();
        let manifest = Manifest { entries };
        manifest.write(&self.out_dir.join(MANIFEST_FILE))?;
        Ok(manifest)
    }
}
