use std::borrow::Cow;
use std::time::Instant;

use rayon::prelude::*;

use super::records::{summarize, RunRecord, SummaryRow};
use crate::error::{Error, Result};
use crate::nn::{LabeledSet, SourceModel};
use crate::streamgen::{batch_schedule, generate_stream, ProtocolConfig, StreamBatch};
use crate::tta::{run_episode, Method, TribeHyperParams};

/// One configuration of an experiment grid.
#[derive(Clone, Debug)]
pub struct Experiment<'a> {
    pub source: &'a SourceModel,
    pub domains: Vec<&'a LabeledSet>,
    pub protocol: ProtocolConfig,
    pub hyper: TribeHyperParams,
    /// Replayed for every seed instead of generating a stream per seed.
    pub fixed_stream: Option<Vec<StreamBatch>>,
}

impl<'a> Experiment<'a> {
    pub fn new(
        source: &'a SourceModel,
        domains: Vec<&'a LabeledSet>,
        protocol: ProtocolConfig,
        hyper: TribeHyperParams,
    ) -> Self {
        Experiment { source, domains, protocol, hyper, fixed_stream: None }
    }

    /// The batches seen under `seed` (the protocol seed is replaced).
    pub fn batches(&self, seed: u64) -> Result<Cow<'_, [StreamBatch]>> {
        if let Some(fixed) = &self.fixed_stream {
            return Ok(Cow::Borrowed(fixed));
        }
        let protocol = ProtocolConfig { seed, ..self.protocol.clone() };
        let labels: Vec<Vec<usize>> = self.domains.iter().map(|d| d.labels.clone()).collect();
        Ok(Cow::Owned(generate_stream(&protocol, &labels)?.batches))
    }

    pub fn run_cell(&self, method: Method, seed: u64, batches: &[StreamBatch]) -> Result<RunRecord> {
        let start = Instant::now();
        let result = run_episode(method, batches, &self.domains, self.source, &self.hyper, seed, false)?;
        let wall_ms = start.elapsed().as_millis() as u64;
        Ok(RunRecord::new(method, result, &self.protocol, batch_schedule(batches), &self.hyper, wall_ms))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub config: usize,
    pub method: Method,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct MatrixOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
}

impl MatrixOutcome {
    pub fn summary(&self) -> Vec<SummaryRow> {
        summarize(&self.records)
    }
}

/// Runs every `(config, seed, method)` cell on up to `jobs` threads.
/// Records come back in config-, seed-, then method-major order regardless
/// of scheduling. A failing cell is reported and the others still run.
pub fn run_matrix(configs: &[Experiment<'_>], methods: &[Method], seeds: &[u64], jobs: usize) -> Result<MatrixOutcome> {
    if configs.is_empty() || methods.is_empty() || seeds.is_empty() {
        return Err(Error::config("need at least one config, method and seed"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let outcomes: Vec<(usize, Method, u64, Result<RunRecord>)> = pool.install(|| {
        let streams: Vec<Vec<std::result::Result<Cow<'_, [StreamBatch]>, String>>> = configs
            .par_iter()
            .map(|c| seeds.par_iter().map(|&s| c.batches(s).map_err(|e| e.to_string())).collect())
            .collect();
        let cells: Vec<(usize, usize, Method)> = (0..configs.len())
            .flat_map(|c| (0..seeds.len()).flat_map(move |s| methods.iter().map(move |&m| (c, s, m))))
            .collect();
        cells
            .par_iter()
            .map(|&(c, s, m)| {
                let run = match &streams[c][s] {
                    Ok(batches) => configs[c].run_cell(m, seeds[s], batches),
                    Err(e) => Err(Error::Config(format!("stream generation: {e}"))),
                };
                (c, m, seeds[s], run)
            })
            .collect()
    });
    let mut out = MatrixOutcome::default();
    for (config, method, seed, run) in outcomes {
        match run {
            Ok(r) => out.records.push(r),
            Err(e) => {
                log::warn!("cell (config {config}, {method}, seed {seed}) failed: {e}");
                out.failures.push(CellFailure { config, method, seed, error: e.to_string() });
            }
        }
    }
    Ok(out)
}
