use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::EpisodeResult;
use crate::error::{Error, Result};
use crate::streamgen::{ProtocolConfig, Variant};
use crate::tta::{Method, TribeHyperParams};

/// One line of a results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub variant: Variant,
    pub imbalance_factor: f64,
    pub sigma: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub classes: usize,
    pub schedule: Vec<usize>,
    pub hyper: TribeHyperParams,
    pub result: EpisodeResult,
    /// Excluded from determinism comparisons.
    pub wall_ms: u64,
}

impl RunRecord {
    pub fn new(
        method: Method,
        result: EpisodeResult,
        protocol: &ProtocolConfig,
        schedule: Vec<usize>,
        hyper: &TribeHyperParams,
        wall_ms: u64,
    ) -> Self {
        RunRecord {
            method,
            variant: protocol.variant,
            imbalance_factor: protocol.imbalance_factor,
            sigma: protocol.sigma,
            seed: result.seed,
            batch_size: protocol.batch_size,
            classes: protocol.classes,
            schedule,
            hyper: hyper.clone(),
            result,
            wall_ms,
        }
    }

    pub fn instance_error(&self) -> f64 {
        self.result.instance_error
    }

    pub fn category_error(&self) -> f64 {
        self.result.category_error
    }

    /// The record with timing zeroed.
    pub fn without_timing(&self) -> RunRecord {
        RunRecord { wall_ms: 0, ..self.clone() }
    }
}

/// Appends records as JSON lines.
pub fn append_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let file =
        std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads every well-formed record; returns them with the number of skipped
/// lines.
pub fn read_records(path: &Path) -> Result<(Vec<RunRecord>, usize)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("{}:{}: skipped malformed record: {e}", path.display(), i + 1);
                skipped += 1;
            }
        }
    }
    Ok((records, skipped))
}

/// Seed-averaged errors of one method under one protocol setting.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub variant: Variant,
    pub imbalance_factor: f64,
    pub method: Method,
    pub runs: usize,
    pub instance_error: f64,
    pub category_error: f64,
}

/// Groups records by (variant, imbalance factor, method) and averages over seeds.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Variant, u64, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let method_rank = Method::ALL.iter().position(|m| *m == r.method).unwrap_or(usize::MAX);
        groups.entry((r.variant, r.imbalance_factor.to_bits(), method_rank)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let n = rs.len() as f64;
            SummaryRow {
                variant: rs[0].variant,
                imbalance_factor: rs[0].imbalance_factor,
                method: rs[0].method,
                runs: rs.len(),
                instance_error: rs.iter().map(|r| r.instance_error()).sum::<f64>() / n,
                category_error: rs.iter().map(|r| r.category_error()).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("variant,if,method,runs,inst,cat\n");
    for r in rows {
        out += &format!(
            "{},{},{},{},{:.2},{:.2}\n",
            r.variant, r.imbalance_factor, r.method, r.runs, r.instance_error, r.category_error
        );
    }
    out
}

/// Aligned text table with an `inst / cat` column.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let header = ["variant", "IF", "method", "runs", "inst / cat"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.variant.to_string(),
                r.imbalance_factor.to_string(),
                r.method.to_string(),
                r.runs.to_string(),
                format!("{:.2} / {:.2}", r.instance_error, r.category_error),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec()) + "\n";
    for row in &body {
        out += &(line(row.iter().map(String::as_str).collect()) + "\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::DomainMetrics;

    fn record(method: Method, seed: u64, inst: f64, cat: f64) -> RunRecord {
        let protocol = ProtocolConfig::new(3, 1);
        let result = EpisodeResult::new(
            seed,
            vec![DomainMetrics { domain: 0, samples: 10, instance_error: inst, category_error: cat }],
            None,
            "00".into(),
            "11".into(),
        );
        RunRecord::new(method, result, &protocol, vec![0], &TribeHyperParams::for_classes(3), 7)
    }

    #[test]
    fn jsonl_roundtrip_with_malformed_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let a = record(Method::Tribe, 0, 10.0, 20.0);
        append_records(&path, std::slice::from_ref(&a)).unwrap();
        std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{not json\n").unwrap();
        let b = record(Method::Test, 1, 30.0, 40.0);
        append_records(&path, &[b.clone()]).unwrap();
        let (records, skipped) = read_records(&path).unwrap();
        assert_eq!((records, skipped), (vec![a, b], 1));
    }

    #[test]
    fn summary_averages_seeds() {
        let rows = summarize(&[
            record(Method::Tribe, 0, 10.0, 20.0),
            record(Method::Tribe, 1, 20.0, 30.0),
            record(Method::Test, 0, 50.0, 60.0),
        ]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, Method::Test);
        assert_eq!((rows[1].runs, rows[1].instance_error, rows[1].category_error), (2, 15.0, 25.0));
        let table = summary_table(&rows);
        assert!(table.contains("15.00 / 25.00"));
        assert!(summary_csv(&rows).lines().nth(2).unwrap().ends_with(",2,15.00,25.00"));
    }
}
