//! Shared fixtures for the kernel benchmarks in `benches/`.

use tribekit::harness::DeskBenchmark;
use tribekit::streamgen::SyntheticDataset;
use tribekit::{SourceModel, Tensor};

pub struct Fixture {
    pub desk: DeskBenchmark,
    pub data: SyntheticDataset,
    pub source: SourceModel,
    /// The first `batch` rows of the first corrupted domain.
    pub batch: Tensor,
    pub labels: Vec<usize>,
}

/// The desk benchmark with a briefly pretrained source model.
pub fn desk_fixture(batch: usize) -> tribekit::Result<Fixture> {
    let mut desk = DeskBenchmark::default();
    desk.pretrain.epochs = 3;
    let data = desk.dataset()?;
    let source = desk.source(&data)?;
    let ids: Vec<usize> = (0..batch).collect();
    let domain = &data.domains[0].data;
    let batch = domain.features.select_rows(&ids)?;
    let labels = ids.iter().map(|&i| domain.labels[i]).collect();
    Ok(Fixture { desk, data, source, batch, labels })
}
