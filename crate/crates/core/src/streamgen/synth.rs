use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LabeledSet, Tensor};
use crate::rng::{self, Rng};

/// Offset norm per unit severity.
const SHIFT_PER_SEVERITY: f64 = 2.0;
/// Half-range of the per-feature log scale factor per unit severity.
const LOG_SCALE_PER_SEVERITY: f64 = 0.6;
/// Rotation angle per unit severity.
const ANGLE_PER_SEVERITY: f64 = PI / 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    Noise,
    Scale,
    Shift,
    Rotate,
}

/// A fully parameterized feature-space corruption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Corruption {
    /// Additive `N(0, std²)` per feature.
    Noise { std: f64 },
    /// Per-feature multiplicative factors.
    Scale { factors: Vec<f64> },
    /// Constant offset.
    Shift { offset: Vec<f64> },
    /// Rotation by `angle` in the plane spanned by orthonormal `u`, `v`.
    Rotate { u: Vec<f64>, v: Vec<f64>, angle: f64 },
}

impl Corruption {
    /// Draws the parameters of a `kind` corruption at `severity`.
    pub fn sample(kind: CorruptionKind, severity: f64, dim: usize, rng: &mut Rng) -> Corruption {
        match kind {
            CorruptionKind::Noise => Corruption::Noise { std: severity },
            CorruptionKind::Scale => Corruption::Scale {
                factors: (0..dim)
                    .map(|_| (severity * LOG_SCALE_PER_SEVERITY * rng.random_range(-1.0..=1.0f64)).exp())
                    .collect(),
            },
            CorruptionKind::Shift => {
                let dir = unit_vector(dim, rng);
                Corruption::Shift { offset: dir.iter().map(|d| d * severity * SHIFT_PER_SEVERITY).collect() }
            }
            CorruptionKind::Rotate => {
                let basis = orthonormal_basis(2, dim, rng);
                Corruption::Rotate { u: basis[0].clone(), v: basis[1].clone(), angle: severity * ANGLE_PER_SEVERITY }
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Corruption::Noise { std } => *std == 0.0,
            Corruption::Scale { factors } => factors.iter().all(|&f| f == 1.0),
            Corruption::Shift { offset } => offset.iter().all(|&o| o == 0.0),
            Corruption::Rotate { angle, .. } => *angle == 0.0,
        }
    }

    /// Applies the corruption to every row of `x` in place. Identity
    /// corruptions leave `x` untouched and draw nothing from `rng`.
    pub fn apply(&self, x: &mut Tensor, rng: &mut Rng) {
        if self.is_identity() {
            return;
        }
        let dim = x.cols();
        for row in x.data_mut().chunks_exact_mut(dim) {
            match self {
                Corruption::Noise { std } => {
                    for v in row.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *v += std * z;
                    }
                }
                Corruption::Scale { factors } => row.iter_mut().zip(factors).for_each(|(v, f)| *v *= f),
                Corruption::Shift { offset } => row.iter_mut().zip(offset).for_each(|(v, o)| *v += o),
                Corruption::Rotate { u, v, angle } => {
                    let a: f64 = row.iter().zip(u).map(|(x, y)| x * y).sum();
                    let b: f64 = row.iter().zip(v).map(|(x, y)| x * y).sum();
                    let (s, c) = angle.sin_cos();
                    let du = (c - 1.0) * a - s * b;
                    let dv = s * a + (c - 1.0) * b;
                    for ((x, ui), vi) in row.iter_mut().zip(u).zip(v) {
                        *x += du * ui + dv * vi;
                    }
                }
            }
        }
    }
}

/// A corrupted copy of the test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub name: String,
    pub corruptions: Vec<Corruption>,
    pub data: LabeledSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub classes: usize,
    pub dim: usize,
    pub severity: f64,
    pub class_means: Vec<Vec<f64>>,
    pub class_std: f64,
    /// Clean labeled source split.
    pub clean: LabeledSet,
    pub domains: Vec<Domain>,
}

impl SyntheticDataset {
    pub fn domain_labels(&self) -> Vec<Vec<usize>> {
        self.domains.iter().map(|d| d.data.labels.clone()).collect()
    }
}

/// Corruption recipe of the `index`-th default domain: `(kind, severity multiplier)`.
pub fn default_domain_recipe(index: usize) -> Vec<(CorruptionKind, f64)> {
    use CorruptionKind::*;
    match index % 4 {
        0 => vec![(Shift, 1.0), (Noise, 0.3)],
        1 => vec![(Scale, 1.0), (Shift, 1.0)],
        2 => vec![(Rotate, 1.0), (Shift, 1.0)],
        _ => vec![(Scale, 1.0), (Noise, 0.3), (Shift, 0.5)],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    pub domains: usize,
    pub severity: f64,
    /// Distance of every class mean from the origin.
    pub separation: f64,
    pub class_std: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(classes: usize, dim: usize, n_per_class: usize, domains: usize) -> Self {
        SynthConfig { classes, dim, n_per_class, domains, severity: 1.0, separation: 4.0, class_std: 1.0, seed: 0 }
    }
}

/// Gaussian class clusters plus one corrupted copy of a held-back test split
/// per domain. Values are rounded to `f32` precision so the on-disk blobs
/// reproduce the in-memory dataset exactly.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    if cfg.classes < 2 || cfg.dim < 2 {
        return Err(Error::config("synthetic data needs at least 2 classes and 2 features"));
    }
    if cfg.n_per_class == 0 || cfg.domains == 0 {
        return Err(Error::config("n_per_class and domains must be positive"));
    }
    let mut geo_rng = rng::child(cfg.seed, "synth/means");
    let class_means: Vec<Vec<f64>> = if cfg.classes <= cfg.dim {
        orthonormal_basis(cfg.classes, cfg.dim, &mut geo_rng)
    } else {
        (0..cfg.classes).map(|_| unit_vector(cfg.dim, &mut geo_rng)).collect()
    }
    .into_iter()
    .map(|m| m.into_iter().map(|v| v * cfg.separation).collect())
    .collect();

    let mut sample_rng = rng::child(cfg.seed, "synth/samples");
    let clean = draw_split(&class_means, cfg, &mut sample_rng)?;
    let test = draw_split(&class_means, cfg, &mut sample_rng)?;

    let mut corr_rng = rng::child(cfg.seed, "synth/corruptions");
    let mut domains = Vec::with_capacity(cfg.domains);
    for d in 0..cfg.domains {
        let recipe = default_domain_recipe(d);
        let corruptions: Vec<Corruption> = recipe
            .iter()
            .map(|&(kind, mult)| Corruption::sample(kind, cfg.severity * mult, cfg.dim, &mut corr_rng))
            .collect();
        let mut features = test.features.clone();
        for c in &corruptions {
            c.apply(&mut features, &mut corr_rng);
        }
        quantize(&mut features);
        let name = recipe
            .iter()
            .map(|(k, _)| serde_json::to_value(k).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default())
            .collect::<Vec<_>>()
            .join("+");
        domains.push(Domain { name, corruptions, data: LabeledSet::new(features, test.labels.clone())? });
    }
    Ok(SyntheticDataset {
        classes: cfg.classes,
        dim: cfg.dim,
        severity: cfg.severity,
        class_means,
        class_std: cfg.class_std,
        clean,
        domains,
    })
}

fn draw_split(means: &[Vec<f64>], cfg: &SynthConfig, rng: &mut Rng) -> Result<LabeledSet> {
    let n = cfg.classes * cfg.n_per_class;
    let mut data = Vec::with_capacity(n * cfg.dim);
    let mut labels = Vec::with_capacity(n);
    for (k, mean) in means.iter().enumerate() {
        for _ in 0..cfg.n_per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(rng);
                data.push(m + cfg.class_std * z);
            }
            labels.push(k);
        }
    }
    let mut features = Tensor::matrix(n, cfg.dim, data)?;
    quantize(&mut features);
    LabeledSet::new(features, labels)
}

fn quantize(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| *v = f64::from(*v as f32));
}

fn unit_vector(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `count` random orthonormal vectors (Gram–Schmidt), `count ≤ dim`.
fn orthonormal_basis(count: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = unit_vector(dim, rng);
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}
