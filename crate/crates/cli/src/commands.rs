use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context as _;
use tribekit::harness::{append_records, read_records, run_matrix, summary_csv, summary_table, Experiment};
use tribekit::nn::{checkpoint, pretrain, Network, PretrainConfig};
use tribekit::norm::SharedVarianceTerm;
use tribekit::rng;
use tribekit::streamgen::io::{read_csv, read_dataset, write_dataset};
use tribekit::streamgen::{
    generate_stream, meta_path, read_order_file, synth_dataset, write_order_file, AlphaMode, SynthConfig,
};
use tribekit::tta::AugmentSpec;
use tribekit::{Method, ProtocolConfig, TribeHyperParams, Variant};

use crate::error::{CliError, CliResult};
use crate::settings::{List, Settings};
use crate::{Cli, Command, GenDataArgs, GenStreamArgs, PretrainArgs, ReportArgs, RunArgs};

#[derive(Clone, Copy, Debug)]
pub struct AlphaModeArg(AlphaMode);

impl FromStr for AlphaModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact-if" => Ok(AlphaModeArg(AlphaMode::ExactIf)),
            "one-based" => Ok(AlphaModeArg(AlphaMode::OneBased)),
            _ => Err(format!("unknown alpha mode {s:?} (exact-if, one-based)")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SharedVarianceArg(SharedVarianceTerm);

impl FromStr for SharedVarianceArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "summed-row" => Ok(SharedVarianceArg(SharedVarianceTerm::SummedRow)),
            "target-row" => Ok(SharedVarianceArg(SharedVarianceTerm::TargetRow)),
            _ => Err(format!("unknown shared variance term {s:?} (summed-row, target-row)")),
        }
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let name = match &cli.command {
        Command::GenData(_) => "gen-data",
        Command::Pretrain(_) => "pretrain",
        Command::GenStream(_) => "gen-stream",
        Command::Run(_) => "run",
        Command::Report(_) => "report",
    };
    let s = Settings::load(cli.config.as_deref(), name)?;
    match cli.command {
        Command::GenData(a) => gen_data(a, &s),
        Command::Pretrain(a) => pretrain_cmd(a, &s),
        Command::GenStream(a) => gen_stream(a, &s),
        Command::Run(a) => run(a, &s),
        Command::Report(a) => report(a, &s),
    }?;
    for key in s.unused() {
        log::warn!("config key {key} is not used by {name}");
    }
    Ok(())
}

fn existing(s: &Settings, flag: Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
    let path: PathBuf = s.require(flag, key)?;
    if !path.exists() {
        return Err(CliError::usage(format!("--{key}: {} does not exist", path.display())));
    }
    Ok(path)
}

fn dataset_dir(s: &Settings, flag: Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = existing(s, flag, "data")?;
    if !dir.is_dir() {
        return Err(CliError::usage(format!("--data: {} is not a dataset directory", dir.display())));
    }
    Ok(dir)
}

fn gen_data(a: GenDataArgs, s: &Settings) -> CliResult<()> {
    let cfg = SynthConfig {
        classes: s.or(a.kc, "kc", 5)?,
        dim: s.or(a.dim, "dim", 8)?,
        n_per_class: s.or(a.n, "n", 2000)?,
        domains: s.or(a.domains, "domains", 4)?,
        severity: s.or(a.severity, "severity", 1.5)?,
        separation: s.or(a.separation, "separation", 4.0)?,
        class_std: s.or(a.class_std, "class-std", 1.0)?,
        seed: s.seed(a.seed)?,
    };
    let out: PathBuf = s.require(a.out, "out")?;
    let ds = synth_dataset(&cfg)?;
    write_dataset(&out, &ds)?;
    println!(
        "wrote {}: {} classes, {} features, {} clean samples, {} domains",
        out.display(),
        ds.classes,
        ds.dim,
        ds.clean.len(),
        ds.domains.len()
    );
    for (i, d) in ds.domains.iter().enumerate() {
        println!("  domain {i}: {} ({} samples)", d.name, d.data.len());
    }
    Ok(())
}

fn pretrain_cmd(a: PretrainArgs, s: &Settings) -> CliResult<()> {
    let path = existing(s, a.data, "data")?;
    let (data, classes) = if path.is_dir() {
        let ds = read_dataset(&path)?;
        (ds.clean, ds.classes)
    } else {
        let set = read_csv(&path)?;
        let classes = set.labels.iter().max().map_or(0, |m| m + 1).max(2);
        (set, classes)
    };
    let hidden = s.or(a.hidden, "hidden", List(vec![16]))?.0;
    let input_norm = s.or(a.input_norm, "input-norm", true)?;
    let seed = s.seed(a.seed)?;
    let cfg = PretrainConfig {
        epochs: s.or(a.epochs, "epochs", 30)?,
        lr: s.or(a.lr, "lr", 1e-2)?,
        batch_size: s.or(a.batch, "batch", 64)?,
        seed,
    };
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(CliError::usage(format!("--lr must be positive, got {}", cfg.lr)));
    }
    let holdout = s.or(a.holdout, "holdout", 0.2)?;
    if !(0.0..1.0).contains(&holdout) || holdout == 0.0 {
        return Err(CliError::usage(format!("--holdout must be in (0, 1), got {holdout}")));
    }
    let out: PathBuf = s.require(a.out, "out")?;

    let (train, held) = data.split_holdout(holdout, &mut rng::child(seed, "pretrain/holdout"))?;
    let net = Network::mlp(data.dim(), &hidden, classes, input_norm, &mut rng::child(seed, "network-init"))?;
    let model = pretrain(net, &train, &cfg)?;
    let accuracy = model.accuracy(&held)?;
    checkpoint::save(&model, &out)?;
    println!("trained on {} samples, held-out accuracy {:.2}% ({} samples)", train.len(), 100.0 * accuracy, held.len());
    println!("wrote {}", out.display());
    Ok(())
}

fn gen_stream(a: GenStreamArgs, s: &Settings) -> CliResult<()> {
    let dir = dataset_dir(s, a.data)?;
    let ds = read_dataset(&dir)?;
    let protocol = ProtocolConfig {
        classes: ds.classes,
        domains: ds.domains.len(),
        sigma: s.or(a.sigma, "sigma", 0.1)?,
        imbalance_factor: s.or(a.imbalance, "if", 1.0)?,
        batch_size: s.or(a.batch, "batch", 64)?,
        variant: s.or(a.variant, "variant", Variant::GliF)?,
        alpha_mode: s.or(a.alpha_mode, "alpha-mode", AlphaModeArg(AlphaMode::default()))?.0,
        domain_order: s.get(a.domain_order, "domain-order")?.map(|l| l.0),
        seed: s.seed(a.seed)?,
    };
    let out: PathBuf = s.require(a.out, "out")?;
    let stream = generate_stream(&protocol, &ds.domain_labels())?;
    write_order_file(&out, &stream.batches)?;
    let meta = meta_path(&out);
    let text = serde_json::to_string_pretty(&protocol).context("serializing stream metadata")?;
    std::fs::write(&meta, text + "\n").with_context(|| format!("writing {}", meta.display()))?;

    println!(
        "wrote {} batches to {} ({} samples, variant {}, IF {}, sigma {})",
        stream.batches.len(),
        out.display(),
        stream.batches.iter().map(|b| b.sample_ids.len()).sum::<usize>(),
        protocol.variant,
        protocol.effective_imbalance(),
        protocol.sigma
    );
    for plan in &stream.plan {
        let counts = plan.pool.counts();
        let nonzero = counts.iter().copied().filter(|&c| c > 0);
        let ratio = nonzero.clone().max().unwrap_or(0) as f64 / nonzero.min().unwrap_or(1) as f64;
        println!("  domain {}: pool {:?}, max/min {:.2}", plan.domain, counts, ratio);
    }
    Ok(())
}

fn read_meta(order: &Path) -> CliResult<ProtocolConfig> {
    let meta = meta_path(order);
    if !meta.exists() {
        return Err(CliError::usage(format!("{} has no metadata sidecar {}", order.display(), meta.display())));
    }
    let text = std::fs::read_to_string(&meta).with_context(|| format!("reading {}", meta.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", meta.display()))?)
}

fn hyper_params(a: &RunArgs, s: &Settings, classes: usize) -> CliResult<TribeHyperParams> {
    let d = TribeHyperParams::for_classes(classes);
    let hp = TribeHyperParams {
        h0: s.or(a.h0, "h0", d.h0)?,
        lambda_anc: s.or(a.lambda_anc, "lambda-anc", d.lambda_anc)?,
        gamma: s.or(a.gamma, "gamma", d.gamma)?,
        eta: s.or(a.eta, "eta", d.eta)?,
        lr: s.or(a.lr, "lr", d.lr)?,
        robust_momentum: s.or(a.robust_momentum, "robust-momentum", d.robust_momentum)?,
        shared_variance: s.or(a.shared_variance, "shared-variance", SharedVarianceArg(d.shared_variance))?.0,
        augment: AugmentSpec {
            noise_std: s.or(a.noise_std, "noise-std", d.augment.noise_std)?,
            scale_jitter: s.or(a.scale_jitter, "scale-jitter", d.augment.scale_jitter)?,
            dropout: s.or(a.dropout, "dropout", d.augment.dropout)?,
        },
    };
    hp.validate()?;
    Ok(hp)
}

fn run(a: RunArgs, s: &Settings) -> CliResult<()> {
    let dir = dataset_dir(s, a.data.clone())?;
    let ckpt = existing(s, a.checkpoint.clone(), "checkpoint")?;
    let order = existing(s, a.order.clone(), "order")?;
    let results: PathBuf = s.require(a.results.clone(), "results")?;
    let methods = s.or(a.method.clone(), "method", List(vec![Method::Tribe]))?.0;
    let seed = s.seed(a.seed)?;
    let seeds = s.or(a.seeds.clone(), "seeds", List(vec![seed]))?.0;
    let jobs = s.or(a.jobs, "jobs", 1)?;
    if methods.is_empty() || seeds.is_empty() || jobs == 0 {
        return Err(CliError::usage("need at least one method, one seed and one job"));
    }

    let source = checkpoint::load(&ckpt)?;
    let protocol = read_meta(&order)?;
    let kc = source.classes();
    if protocol.classes != kc {
        return Err(CliError::usage(format!(
            "class count mismatch: stream {} has {} classes, checkpoint {} has {kc}",
            order.display(),
            protocol.classes,
            ckpt.display()
        )));
    }
    let ds = read_dataset(&dir)?;
    if ds.classes != kc || ds.dim != source.net.in_dim() || ds.domains.len() != protocol.domains {
        return Err(CliError::usage(format!(
            "dataset {} ({} classes, {} features, {} domains) does not match checkpoint ({kc} classes, {} features) \
             and stream ({} domains)",
            dir.display(),
            ds.classes,
            ds.dim,
            ds.domains.len(),
            source.net.in_dim(),
            protocol.domains
        )));
    }
    let hyper = hyper_params(&a, s, kc)?;
    let batches = read_order_file(&order)?;

    let mut exp = Experiment::new(&source, ds.domains.iter().map(|d| &d.data).collect(), protocol, hyper);
    exp.fixed_stream = Some(batches);
    let outcome = run_matrix(&[exp], &methods, &seeds, jobs)?;
    append_records(&results, &outcome.records)?;
    print!("{}", summary_table(&outcome.summary()));
    println!("appended {} record(s) to {}", outcome.records.len(), results.display());
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            eprintln!("{} (seed {}) failed: {}", f.method, f.seed, f.error);
        }
        return Err(CliError::Runtime(anyhow::anyhow!("{} cell(s) failed", outcome.failures.len())));
    }
    Ok(())
}

fn report(a: ReportArgs, s: &Settings) -> CliResult<()> {
    let path = existing(s, a.results, "results")?;
    let csv = a.csv || s.or(None, "csv", false)?;
    let (records, skipped) = read_records(&path)?;
    if skipped > 0 {
        eprintln!("skipped {skipped} malformed line(s) in {}", path.display());
    }
    if records.is_empty() {
        println!("no records in {}", path.display());
        return Ok(());
    }
    let rows = tribekit::harness::summarize(&records);
    print!("{}", if csv { summary_csv(&rows) } else { summary_table(&rows) });
    Ok(())
}
