//! Dataset persistence: a JSON manifest plus raw little-endian `f32` feature
//! blobs and `i32` label blobs, and CSV ingestion for external data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::{Corruption, Domain, SyntheticDataset};
use crate::error::{Error, Result};
use crate::nn::{LabeledSet, Tensor};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub n: usize,
    pub features: String,
    pub labels: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub name: String,
    pub corruptions: Vec<Corruption>,
    #[serde(flatten)]
    pub split: SplitEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(rename = "Kc")]
    pub classes: usize,
    #[serde(rename = "C")]
    pub dim: usize,
    pub severity: f64,
    pub class_std: f64,
    pub class_means: Vec<Vec<f64>>,
    pub clean: SplitEntry,
    pub domains: Vec<DomainEntry>,
}

fn write_split(dir: &Path, stem: &str, data: &LabeledSet) -> Result<SplitEntry> {
    let features = format!("{stem}.f32");
    let labels = format!("{stem}.i32");
    let fbytes: Vec<u8> = data.features.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    let lbytes: Vec<u8> = data.labels.iter().flat_map(|&y| (y as i32).to_le_bytes()).collect();
    let fp = dir.join(&features);
    std::fs::write(&fp, fbytes).map_err(|e| Error::io(&fp, e))?;
    let lp = dir.join(&labels);
    std::fs::write(&lp, lbytes).map_err(|e| Error::io(&lp, e))?;
    Ok(SplitEntry { n: data.len(), features, labels })
}

fn read_split(dir: &Path, entry: &SplitEntry, dim: usize, classes: usize) -> Result<LabeledSet> {
    let fp = dir.join(&entry.features);
    let raw = std::fs::read(&fp).map_err(|e| Error::io(&fp, e))?;
    if raw.len() != entry.n * dim * 4 {
        return Err(Error::format(&fp, format!("expected {} bytes, found {}", entry.n * dim * 4, raw.len())));
    }
    let features: Vec<f64> =
        raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))).collect();
    let lp = dir.join(&entry.labels);
    let raw = std::fs::read(&lp).map_err(|e| Error::io(&lp, e))?;
    if raw.len() != entry.n * 4 {
        return Err(Error::format(&lp, format!("expected {} bytes, found {}", entry.n * 4, raw.len())));
    }
    let mut labels = Vec::with_capacity(entry.n);
    for c in raw.chunks_exact(4) {
        let y = i32::from_le_bytes(c.try_into().expect("4 bytes"));
        if y < 0 || y as usize >= classes {
            return Err(Error::format(&lp, format!("label {y} outside [0, {classes})")));
        }
        labels.push(y as usize);
    }
    LabeledSet::new(Tensor::matrix(entry.n, dim, features).map_err(|e| Error::format(&fp, e.to_string()))?, labels)
}

/// Writes the manifest and one feature/label blob pair per split.
pub fn write_dataset(dir: &Path, ds: &SyntheticDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let clean = write_split(dir, "clean", &ds.clean)?;
    let mut domains = Vec::with_capacity(ds.domains.len());
    for (i, d) in ds.domains.iter().enumerate() {
        domains.push(DomainEntry {
            name: d.name.clone(),
            corruptions: d.corruptions.clone(),
            split: write_split(dir, &format!("domain{i}"), &d.data)?,
        });
    }
    let manifest = Manifest {
        classes: ds.classes,
        dim: ds.dim,
        severity: ds.severity,
        class_std: ds.class_std,
        class_means: ds.class_means.clone(),
        clean,
        domains,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn read_dataset(dir: &Path) -> Result<SyntheticDataset> {
    let m = read_manifest(dir)?;
    let clean = read_split(dir, &m.clean, m.dim, m.classes)?;
    let domains = m
        .domains
        .iter()
        .map(|d| {
            Ok(Domain {
                name: d.name.clone(),
                corruptions: d.corruptions.clone(),
                data: read_split(dir, &d.split, m.dim, m.classes)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticDataset {
        classes: m.classes,
        dim: m.dim,
        severity: m.severity,
        class_means: m.class_means,
        class_std: m.class_std,
        clean,
        domains,
    })
}

/// Reads `f0,…,f{C−1},label` CSV with a header row.
pub fn read_csv(path: &Path) -> Result<LabeledSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::format(path, "missing header"))?.split(',').map(str::trim).collect();
    let dim = header.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| Error::format(path, "need at least one feature column"))?;
    let expected: Vec<String> = (0..dim).map(|i| format!("f{i}")).chain(std::iter::once("label".into())).collect();
    if header != expected {
        return Err(Error::format(path, format!("header must be {}", expected.join(","))));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(Error::format(path, format!("row {}: expected {} fields", i + 2, dim + 1)));
        }
        for f in &fields[..dim] {
            let v: f64 = f.parse().map_err(|_| Error::format(path, format!("row {}: bad number {f:?}", i + 2)))?;
            features.push(v);
        }
        let y: usize = fields[dim].parse().map_err(|_| Error::format(path, format!("row {}: bad label", i + 2)))?;
        labels.push(y);
    }
    if labels.is_empty() {
        return Err(Error::format(path, "no data rows"));
    }
    LabeledSet::new(Tensor::matrix(labels.len(), dim, features)?, labels)
}
