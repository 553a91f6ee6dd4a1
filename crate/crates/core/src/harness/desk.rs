use crate::error::Result;
use crate::nn::{pretrain, Network, PretrainConfig, SourceModel};
use crate::rng;
use crate::streamgen::{synth_dataset, ProtocolConfig, SynthConfig, SyntheticDataset};

/// The standard small benchmark: 5 classes in 8 dimensions, 4 corruption
/// domains, a one-hidden-layer network and a GLI-TTA-F stream with
/// imbalance factor 100.
#[derive(Clone, Debug, PartialEq)]
pub struct DeskBenchmark {
    pub synth: SynthConfig,
    pub hidden: Vec<usize>,
    pub input_norm: bool,
    pub pretrain: PretrainConfig,
    pub protocol: ProtocolConfig,
}

impl Default for DeskBenchmark {
    fn default() -> Self {
        let synth = SynthConfig { severity: 1.5, ..SynthConfig::new(5, 8, 2000, 4) };
        let mut protocol = ProtocolConfig::new(5, 4);
        protocol.imbalance_factor = 100.0;
        DeskBenchmark { synth, hidden: vec![16], input_norm: true, pretrain: PretrainConfig::default(), protocol }
    }
}

impl DeskBenchmark {
    pub fn dataset(&self) -> Result<SyntheticDataset> {
        synth_dataset(&self.synth)
    }

    /// Fresh network initialized from the pretraining seed.
    pub fn network(&self) -> Result<Network> {
        let mut init = rng::child(self.pretrain.seed, "network-init");
        Network::mlp(self.synth.dim, &self.hidden, self.synth.classes, self.input_norm, &mut init)
    }

    pub fn source(&self, data: &SyntheticDataset) -> Result<SourceModel> {
        pretrain(self.network()?, &data.clean, &self.pretrain)
    }
}
