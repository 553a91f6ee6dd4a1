#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use tribekit::nn::{Layer, Network, SourceModel, Tensor};
use tribekit::norm::{Affine, ChannelStats};
use tribekit::rng::{seeded, Rng};

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| scale * normal(rng)).collect()).unwrap()
}

/// Random MLP with non-trivial affines and source statistics.
pub fn random_model(seed: u64) -> SourceModel {
    let mut rng = seeded(seed);
    let in_dim = rng.random_range(2..=5);
    let out_dim = rng.random_range(2..=4);
    let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=6)).collect();
    let mut net = Network::mlp(in_dim, &hidden, out_dim, rng.random_bool(0.5), &mut rng).unwrap();
    for a in net.affines_mut() {
        a.scale.iter_mut().for_each(|s| *s = rng.random_range(0.5..1.5));
        a.shift.iter_mut().for_each(|s| *s = rng.random_range(-0.5..0.5));
    }
    let stats = net
        .norm_channels()
        .into_iter()
        .map(|c| {
            ChannelStats::new(
                (0..c).map(|_| 0.5 * normal(&mut rng)).collect(),
                (0..c).map(|_| rng.random_range(0.5..2.0)).collect(),
            )
            .unwrap()
        })
        .collect();
    SourceModel::new(net, stats).unwrap()
}

/// Plain-loop evaluation of `net` with fixed per-slot statistics and the
/// given affines.
pub fn oracle_logits(net: &Network, affines: &[Affine], stats: &[ChannelStats], eps: f64, x: &Tensor) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let mut h: Vec<f64> = x.row(r).to_vec();
        let mut slot = 0;
        for layer in net.layers() {
            h = match layer {
                Layer::Dense(d) => (0..d.out_dim())
                    .map(|j| d.bias[j] + (0..d.in_dim()).map(|i| d.weights.row(j)[i] * h[i]).sum::<f64>())
                    .collect(),
                Layer::Relu => h.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect(),
                Layer::Norm(_) => {
                    let (s, a) = (&stats[slot], &affines[slot]);
                    slot += 1;
                    h.iter()
                        .enumerate()
                        .map(|(c, v)| a.scale[c] * (v - s.mean[c]) / (s.var[c] + eps).sqrt() + a.shift[c])
                        .collect()
                }
            };
        }
        out.push(h);
    }
    out
}

pub fn oracle_softmax(z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    z.iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Central finite differences of `f` over every affine parameter, in the
/// slot order (scale then shift per slot).
pub fn finite_difference_affines(affines: &[Affine], h: f64, f: impl Fn(&[Affine]) -> f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for slot in 0..affines.len() {
        for part in 0..2 {
            let n = affines[slot].scale.len();
            let mut g = Vec::with_capacity(n);
            for c in 0..n {
                let eval = |delta: f64| {
                    let mut a = affines.to_vec();
                    let p = if part == 0 { &mut a[slot].scale[c] } else { &mut a[slot].shift[c] };
                    *p += delta;
                    f(&a)
                };
                g.push((eval(h) - eval(-h)) / (2.0 * h));
            }
            out.push(g);
        }
    }
    out
}

/// Brute-force mean and biased variance of each channel of `rows`.
pub fn direct_moments(rows: &[&[f64]], channels: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..channels).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let var = (0..channels).map(|c| rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n).collect();
    (mean, var)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
