use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Maps actual class `j` to canonical rank `perm[j]` (rank 0 is the head
/// class of the long-tailed pool).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassPermutation(Vec<usize>);

impl ClassPermutation {
    pub fn identity(classes: usize) -> Self {
        ClassPermutation((0..classes).collect())
    }

    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        if sorted != (0..ranks.len()).collect::<Vec<_>>() {
            return Err(Error::config(format!("{ranks:?} is not a permutation")));
        }
        Ok(ClassPermutation(ranks))
    }

    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    /// Reindexes a canonical-order vector: `out[j] = canonical[perm[j]]`.
    pub fn apply<T: Clone>(&self, canonical: &[T]) -> Vec<T> {
        self.0.iter().map(|&r| canonical[r].clone()).collect()
    }
}

/// Uniformly random permutation of the class axis.
pub fn permute_class_axis(classes: usize, rng: &mut Rng) -> ClassPermutation {
    let mut ranks: Vec<usize> = (0..classes).collect();
    ranks.shuffle(rng);
    ClassPermutation(ranks)
}

/// Seeded visiting order of the domains; each appears once.
pub fn domain_schedule(domains: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..domains).collect();
    order.shuffle(rng);
    order
}

/// Long-tailed per-class counts in canonical order:
/// `N_k = round(N_0 · (1/IF)^{k/(Kc−1)})`, tail `⌈N_0/IF⌉`, each at least 1.
pub fn long_tail_counts(head: usize, classes: usize, imbalance: f64) -> Vec<usize> {
    (0..classes)
        .map(|k| {
            let v = head as f64 * (1.0 / imbalance).powf(k as f64 / (classes - 1) as f64);
            let n = if k + 1 == classes { (head as f64 / imbalance).ceil() } else { v.round() };
            (n as usize).max(1)
        })
        .collect()
}

/// Per-class sample ids selected for one domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalPool {
    pub per_class: Vec<Vec<usize>>,
}

impl GlobalPool {
    pub fn counts(&self) -> Vec<usize> {
        self.per_class.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.per_class.iter().map(Vec::len).sum()
    }
}

/// Builds a long-tailed pool from a domain's labels. The head count `N_0` is
/// the largest count every class can supply; `perm` decides which actual
/// class receives which canonical rank.
pub fn build_global_pool(
    labels: &[usize],
    classes: usize,
    imbalance: f64,
    perm: &ClassPermutation,
    rng: &mut Rng,
) -> Result<GlobalPool> {
    let mut available: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (id, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::config(format!("label {y} outside [0, {classes})")));
        }
        available[y].push(id);
    }
    let head = available.iter().map(Vec::len).min().unwrap_or(0);
    if head == 0 {
        let missing: Vec<_> = (0..classes).filter(|&k| available[k].is_empty()).map(|k| (k, 0, 1)).collect();
        return Err(Error::InsufficientSamples(missing));
    }
    let required = perm.apply(&long_tail_counts(head, classes, imbalance));
    let deficient: Vec<_> = (0..classes)
        .filter(|&k| available[k].len() < required[k])
        .map(|k| (k, available[k].len(), required[k]))
        .collect();
    if !deficient.is_empty() {
        return Err(Error::InsufficientSamples(deficient));
    }
    let per_class = available
        .into_iter()
        .zip(required)
        .map(|(mut ids, n)| {
            ids.shuffle(rng);
            ids.truncate(n);
            ids.sort_unstable();
            ids
        })
        .collect();
    Ok(GlobalPool { per_class })
}

/// Samples remaining for streaming, drawn without replacement.
#[derive(Clone, Debug)]
pub struct RemainingPool {
    per_class: Vec<Vec<usize>>,
}

impl RemainingPool {
    pub fn new(pool: &GlobalPool) -> Self {
        RemainingPool { per_class: pool.per_class.clone() }
    }

    pub fn is_empty(&self) -> bool {
        self.per_class.iter().all(Vec::is_empty)
    }

    pub fn remaining(&self, class: usize) -> usize {
        self.per_class[class].len()
    }

    fn take(&mut self, class: usize, rng: &mut Rng) -> usize {
        let ids = &mut self.per_class[class];
        let i = rng.random_range(0..ids.len());
        ids.swap_remove(i)
    }
}

/// Labels and ids drawn for one batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchDraw {
    pub labels: Vec<usize>,
    pub ids: Vec<usize>,
}

/// Draws up to `batch` samples with class probabilities `exp(ln_q)`, renormalized
/// over classes that still have samples. Returns `None` when the pool is empty
/// (end of domain); a short batch is returned if the pool runs out midway.
pub fn sample_batch_labels_ln(
    ln_q: &[f64],
    batch: usize,
    rng: &mut Rng,
    pool: &mut RemainingPool,
) -> Option<BatchDraw> {
    if pool.is_empty() {
        return None;
    }
    let mut draw = BatchDraw { labels: Vec::with_capacity(batch), ids: Vec::with_capacity(batch) };
    for _ in 0..batch {
        let live: Vec<usize> = (0..ln_q.len()).filter(|&k| pool.remaining(k) > 0).collect();
        if live.is_empty() {
            break;
        }
        let m = live.iter().map(|&k| ln_q[k]).fold(f64::NEG_INFINITY, f64::max);
        let class = if m == f64::NEG_INFINITY {
            live[rng.random_range(0..live.len())]
        } else {
            let w: Vec<f64> = live.iter().map(|&k| (ln_q[k] - m).exp()).collect();
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = *live.last().expect("nonempty");
            for (&k, &wk) in live.iter().zip(&w) {
                if u < wk {
                    pick = k;
                    break;
                }
                u -= wk;
            }
            pick
        };
        draw.ids.push(pool.take(class, rng));
        draw.labels.push(class);
    }
    Some(draw)
}

/// [`sample_batch_labels_ln`] for a plain probability vector.
pub fn sample_batch_labels(q: &[f64], batch: usize, rng: &mut Rng, pool: &mut RemainingPool) -> Option<BatchDraw> {
    let ln_q: Vec<f64> = q.iter().map(|p| p.ln()).collect();
    sample_batch_labels_ln(&ln_q, batch, rng, pool)
}
