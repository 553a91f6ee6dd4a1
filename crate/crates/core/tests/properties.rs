mod common;

use std::collections::BTreeSet;

use common::{direct_moments, normal, oracle_logits, random_matrix, random_model, rel_err};
use proptest::prelude::*;
use rand::Rng as _;
use tribekit::harness::{
    append_records, category_avg_error, instance_avg_error, read_records, summarize, DomainMetrics, EpisodeResult,
    RunRecord,
};
use tribekit::nn::{backward, entropy, forward, forward_eval, softmax, Adam, Mode, Network, Tensor, Trainable};
use tribekit::norm::{
    balanced_aggregate, pooled_stats_from_classes, ClassWiseStats, NormState, NormVariant, SharedVarianceTerm,
    NORM_EPS, VAR_FLOOR,
};
use tribekit::rng::seeded;
use tribekit::streamgen::{generate_stream, synth_dataset, SynthConfig, Variant};
use tribekit::tta::{bn_stat_step, gate_mask, pl_step, run_episode, stats_only_step, tent_step, TriNet};
use tribekit::{Method, ProtocolConfig, SourceModel, TribeHyperParams};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn eval_forward_is_pure_and_matches_loop_oracle(seed in any::<u64>(), rows in 1usize..8) {
        let model = random_model(seed);
        let x = random_matrix(rows, model.net.in_dim(), 2.0, &mut seeded(seed ^ 1));
        let states = model.states(NormVariant::Standard { momentum: 0.0 }).unwrap();
        let a = forward_eval(&model.net, &states, &x).unwrap().logits;
        let b = forward_eval(&model.net, &states, &x).unwrap().logits;
        prop_assert_eq!(&a, &b);
        let affines: Vec<_> = model.net.affines().cloned().collect();
        let oracle = oracle_logits(&model.net, &affines, &model.stats, NORM_EPS, &x);
        for (r, row) in oracle.iter().enumerate() {
            for (v, o) in a.row(r).iter().zip(row) {
                prop_assert!(rel_err(*v, *o) < 1e-12 || (v - o).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn softmax_rows_normalize_and_entropy_is_bounded(seed in any::<u64>(), rows in 1usize..6, k in 2usize..12, scale in 0.1f64..80.0) {
        let logits = random_matrix(rows, k, scale, &mut seeded(seed));
        let p = softmax(&logits);
        for row in p.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for h in entropy(&p) {
            prop_assert!(h >= -1e-15 && h <= (k as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn affine_only_gradients_touch_no_dense_layer(seed in any::<u64>(), rows in 2usize..8) {
        let model = random_model(seed);
        let mut states = model.states(NormVariant::Standard { momentum: 0.0 }).unwrap();
        let x = random_matrix(rows, model.net.in_dim(), 1.0, &mut seeded(seed ^ 2));
        let out = forward(&model.net, &mut states, &x, Mode::BatchStats).unwrap();
        let dlogits = random_matrix(rows, model.net.out_dim(), 1.0, &mut seeded(seed ^ 3));
        let g = backward(&model.net, &out.trace, &dlogits, Trainable::NormAffinesOnly).unwrap();
        prop_assert!(!g.has_dense());
        prop_assert!(backward(&model.net, &out.trace, &dlogits, Trainable::All).unwrap().has_dense());
    }
}

fn random_labels(n: usize, classes: usize, rng: &mut tribekit::rng::Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

fn rows_of(state: &NormState) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let s = state.class_stats().unwrap();
    ((0..s.classes()).map(|k| s.mu(k).to_vec()).collect(), (0..s.classes()).map(|k| s.var(k).to_vec()).collect())
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn gamma_one_keeps_rows_identical(seed in any::<u64>(), kc in 2usize..7, c in 1usize..4, steps in 1usize..20) {
        let mut rng = seeded(seed);
        let source = tribekit::norm::ChannelStats::new(vec![0.3; c], vec![1.5; c]).unwrap();
        let variant = NormVariant::Balanced { gamma: 1.0, eta: 0.01, shared_variance: SharedVarianceTerm::SummedRow };
        let mut state = NormState::from_source(&source, variant, kc).unwrap();
        for _ in 0..steps {
            let b = rng.random_range(1..12);
            let x = random_matrix(b, c, 2.0, &mut rng);
            state.update(&x, Some(&random_labels(b, kc, &mut rng))).unwrap();
            let (mu, var) = rows_of(&state);
            for k in 1..kc {
                for ch in 0..c {
                    prop_assert!((mu[k][ch] - mu[0][ch]).abs() < 1e-12);
                    prop_assert!((var[k][ch] - var[0][ch]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn balanced_aggregate_weights_classes_equally(seed in any::<u64>(), kc in 1usize..5, c in 1usize..4) {
        let mut rng = seeded(seed);
        let samples: Vec<Vec<Vec<f64>>> = (0..kc)
            .map(|_| (0..rng.random_range(1..5)).map(|_| (0..c).map(|_| 3.0 * normal(&mut rng)).collect()).collect())
            .collect();
        let (mut mu, mut var) = (Vec::new(), Vec::new());
        for class in &samples {
            let rows: Vec<&[f64]> = class.iter().map(Vec::as_slice).collect();
            let (m, v) = direct_moments(&rows, c);
            mu.extend(m);
            var.extend(v);
        }
        let agg = balanced_aggregate(&ClassWiseStats::new(kc, c, mu, var).unwrap());
        // Equal class weights: replicate every class up to a common size.
        let common: usize = (1..=4).product::<usize>();
        let mut pool: Vec<&[f64]> = Vec::new();
        for class in &samples {
            for _ in 0..common / class.len() {
                pool.extend(class.iter().map(Vec::as_slice));
            }
        }
        let (m, v) = direct_moments(&pool, c);
        for ch in 0..c {
            prop_assert!(close(agg.mean[ch], m[ch], 1e-10));
            prop_assert!(close(agg.var[ch], v[ch].max(VAR_FLOOR), 1e-10));
        }
    }

    #[test]
    fn pooled_moments_match_direct_moments(seed in any::<u64>(), kc in 1usize..6, c in 1usize..4, n in 6usize..40) {
        let mut rng = seeded(seed);
        let all: Vec<Vec<f64>> = (0..n).map(|_| (0..c).map(|_| 2.0 * normal(&mut rng) + 1.0).collect()).collect();
        let mut owner: Vec<usize> = (0..n).map(|i| if i < kc { i } else { rng.random_range(0..kc) }).collect();
        owner.rotate_left(rng.random_range(0..n));
        let (mut mu, mut var, mut counts) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..kc {
            let rows: Vec<&[f64]> = all.iter().zip(&owner).filter(|(_, o)| **o == k).map(|(r, _)| r.as_slice()).collect();
            counts.push(rows.len());
            let (m, v) = direct_moments(&rows, c);
            mu.extend(m);
            var.extend(v);
        }
        let pooled = pooled_stats_from_classes(&counts, &ClassWiseStats::new(kc, c, mu, var).unwrap()).unwrap();
        let rows: Vec<&[f64]> = all.iter().map(Vec::as_slice).collect();
        let (m, v) = direct_moments(&rows, c);
        for ch in 0..c {
            prop_assert!(close(pooled.mean[ch], m[ch], 1e-10));
            // Single-sample classes are clamped at the floor, which is far below the tolerance.
            prop_assert!(close(pooled.var[ch], v[ch], 1e-10));
        }
    }

    #[test]
    fn variances_stay_above_floor_and_finite(
        seed in any::<u64>(), kc in 2usize..6, eta in 0.001f64..5.0, gamma in 0.0f64..=1.0, scale in 0.001f64..1e3,
        target in any::<bool>(),
    ) {
        let mut rng = seeded(seed);
        let shared_variance = if target { SharedVarianceTerm::TargetRow } else { SharedVarianceTerm::SummedRow };
        let source = tribekit::norm::ChannelStats::new(vec![0.0; 2], vec![1.0; 2]).unwrap();
        let mut state = NormState::from_source(&source, NormVariant::Balanced { gamma, eta, shared_variance }, kc).unwrap();
        for _ in 0..15 {
            let b = rng.random_range(1..10);
            let x = random_matrix(b, 2, scale, &mut rng);
            state.update(&x, Some(&random_labels(b, kc, &mut rng))).unwrap();
            let (mu, var) = rows_of(&state);
            prop_assert!(mu.iter().flatten().all(|v| v.is_finite()));
            prop_assert!(var.iter().flatten().all(|v| v.is_finite() && *v >= VAR_FLOOR));
            let active = state.active_stats();
            prop_assert!(active.var.iter().all(|v| v.is_finite() && *v >= VAR_FLOOR));
        }
    }

    #[test]
    fn balanced_update_commutes_with_class_relabeling(seed in any::<u64>(), kc in 2usize..6, gamma in 0.0f64..=1.0) {
        let mut rng = seeded(seed);
        let mut perm: Vec<usize> = (0..kc).collect();
        for i in (1..kc).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let source = tribekit::norm::ChannelStats::new(vec![0.5, -0.5, 0.0], vec![1.0, 2.0, 0.5]).unwrap();
        let variant = NormVariant::Balanced { gamma, eta: 0.02, shared_variance: SharedVarianceTerm::SummedRow };
        let mut plain = NormState::from_source(&source, variant, kc).unwrap();
        let mut relabeled = plain.clone();
        for _ in 0..10 {
            let b = rng.random_range(1..16);
            let x = random_matrix(b, 3, 1.5, &mut rng);
            let labels = random_labels(b, kc, &mut rng);
            let permuted: Vec<usize> = labels.iter().map(|&y| perm[y]).collect();
            plain.update(&x, Some(&labels)).unwrap();
            relabeled.update(&x, Some(&permuted)).unwrap();
        }
        let (mu_a, var_a) = rows_of(&plain);
        let (mu_b, var_b) = rows_of(&relabeled);
        for k in 0..kc {
            for ch in 0..3 {
                prop_assert!(close(mu_b[perm[k]][ch], mu_a[k][ch], 1e-12));
                prop_assert!(close(var_b[perm[k]][ch], var_a[k][ch], 1e-12));
            }
        }
        for ch in 0..3 {
            prop_assert!(close(relabeled.active_stats().mean[ch], plain.active_stats().mean[ch], 1e-12));
        }
    }
}

fn variant_strategy() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::GliF), Just(Variant::GliV), Just(Variant::Ptta), Just(Variant::Iid)]
}

proptest! {
    #![proptest_config(config(40))]

    #[test]
    fn streams_are_deterministic_and_conserve_pools(
        seed in any::<u64>(), kc in 2usize..6, domains in 1usize..4, imbalance in 1.0f64..50.0,
        sigma in prop_oneof![Just(0.01), Just(0.1), Just(1.0)], batch in 1usize..40, variant in variant_strategy(),
    ) {
        let mut rng = seeded(seed);
        let labels: Vec<Vec<usize>> = (0..domains)
            .map(|_| (0..kc).flat_map(|k| std::iter::repeat_n(k, rng.random_range(1..60))).collect())
            .collect();
        let cfg = ProtocolConfig {
            sigma, imbalance_factor: imbalance, batch_size: batch, variant, seed, ..ProtocolConfig::new(kc, domains)
        };
        let stream = generate_stream(&cfg, &labels).unwrap();
        prop_assert_eq!(&stream, &generate_stream(&cfg, &labels).unwrap());
        for plan in &stream.plan {
            let d = plan.domain;
            let mut seen = Vec::new();
            for b in stream.batches.iter().filter(|b| b.domain_id == d) {
                prop_assert!(b.sample_ids.len() <= batch);
                for (&id, &y) in b.sample_ids.iter().zip(&b.true_labels) {
                    prop_assert_eq!(labels[d][id], y);
                    seen.push(id);
                }
            }
            let unique: BTreeSet<usize> = seen.iter().copied().collect();
            prop_assert_eq!(unique.len(), seen.len());
            let pooled: BTreeSet<usize> = plan.pool.per_class.iter().flatten().copied().collect();
            prop_assert_eq!(unique, pooled);
        }
    }

    #[test]
    fn gate_never_shrinks_as_threshold_grows(seed in any::<u64>(), rows in 1usize..20, k in 2usize..8, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let p = softmax(&random_matrix(rows, k, 3.0, &mut seeded(seed)));
        let (lo, hi) = (a.min(b), a.max(b));
        let small = gate_mask(&p, lo);
        let large = gate_mask(&p, hi);
        prop_assert!(small.iter().zip(&large).all(|(s, l)| !s || *l));
    }

    #[test]
    fn equal_class_counts_make_errors_coincide(seed in any::<u64>(), kc in 2usize..6, per_class in 1usize..10) {
        let mut rng = seeded(seed);
        let truth: Vec<usize> = (0..kc).flat_map(|k| std::iter::repeat_n(k, per_class)).collect();
        let pred = random_labels(truth.len(), kc, &mut rng);
        let inst = instance_avg_error(&truth, &pred).unwrap();
        prop_assert!((inst - category_avg_error(&truth, &pred, kc).unwrap()).abs() < 1e-10);
        prop_assert!((0.0..=100.0).contains(&inst));
    }
}

fn small_source() -> (tribekit::streamgen::SyntheticDataset, SourceModel) {
    let ds = synth_dataset(&SynthConfig::new(3, 4, 40, 2)).unwrap();
    let net = Network::mlp(4, &[5], 3, true, &mut seeded(2)).unwrap();
    let cfg = tribekit::nn::PretrainConfig { epochs: 4, ..Default::default() };
    let source = tribekit::nn::pretrain(net, &ds.clean, &cfg).unwrap();
    (ds, source)
}

#[test]
fn every_method_keeps_dense_weights_frozen() {
    let (ds, source) = small_source();
    let cfg = ProtocolConfig { batch_size: 16, imbalance_factor: 10.0, seed: 3, ..ProtocolConfig::new(3, 2) };
    let stream = generate_stream(&cfg, &ds.domain_labels()).unwrap();
    let domains: Vec<_> = ds.domains.iter().map(|d| &d.data).collect();
    let hp = TribeHyperParams { lr: 1e-2, ..TribeHyperParams::for_classes(3) };
    let frozen = source.net.dense_digest();
    for method in Method::ALL {
        let result = run_episode(method, &stream.batches, &domains, &source, &hp, 5, true).unwrap();
        assert_eq!(result.dense_digest, frozen, "{method}");
        let log = result.predictions.unwrap();
        assert_eq!(log.len(), stream.batches.len());
        if method == Method::Test {
            for (b, p) in stream.batches.iter().zip(&log) {
                let x = domains[b.domain_id].features.select_rows(&b.sample_ids).unwrap();
                assert_eq!(&source.predict(&x).unwrap(), p);
            }
        }
    }
}

#[test]
fn predictions_come_from_the_pre_update_pass() {
    let (ds, source) = small_source();
    let hp = TribeHyperParams { lr: 1e-2, ..TribeHyperParams::for_classes(3) };
    let data = &ds.domains[1].data;
    let mut rng = seeded(8);
    let mut tri = TriNet::new(&source, &hp).unwrap();
    let mut net = source.net.clone();
    let mut standard = source.states(NormVariant::Standard { momentum: 0.0 }).unwrap();
    let mut robust = source.states(NormVariant::Robust { momentum: 0.05 }).unwrap();
    let mut balanced = source.states(hp.balanced_variant()).unwrap();
    let mut adam = Adam::new(hp.lr);
    for step in 0..12 {
        let ids: Vec<usize> = (step * 10..step * 10 + 10).collect();
        let x = data.features.select_rows(&ids).unwrap();
        let argmax = |logits: Tensor| logits.argmax_rows();

        let expected = argmax(forward_eval(tri.network(), tri.teacher_states(), &x).unwrap().logits);
        assert_eq!(tri.step(&x, &hp, &mut rng).unwrap().predictions, expected);

        let expected = argmax(forward_eval(&source.net, &robust, &x).unwrap().logits);
        assert_eq!(stats_only_step(&source.net, &mut robust, &x).unwrap(), expected);
        let expected = argmax(forward_eval(&source.net, &balanced, &x).unwrap().logits);
        assert_eq!(stats_only_step(&source.net, &mut balanced, &x).unwrap(), expected);

        let batch_pass = |net: &Network, states: &[NormState]| {
            argmax(forward(net, &mut states.to_vec(), &x, Mode::BatchStats).unwrap().logits)
        };
        let expected = batch_pass(&source.net, &standard);
        assert_eq!(bn_stat_step(&source.net, &mut standard, &x).unwrap(), expected);
        let expected = batch_pass(&net, &standard);
        let step_fn = if step % 2 == 0 { pl_step } else { tent_step };
        assert_eq!(step_fn(&mut net, &mut standard, &mut adam, &x).unwrap().predictions, expected);
    }
}

fn record_strategy() -> impl Strategy<Value = RunRecord> {
    (
        prop::sample::select(Method::ALL.to_vec()),
        variant_strategy(),
        prop::sample::select(vec![1.0, 10.0, 100.0]),
        0u64..5,
        prop::collection::vec((0.0f64..=100.0, 0.0f64..=100.0, 1usize..500), 1..4),
        any::<u64>(),
    )
        .prop_map(|(method, variant, imbalance, seed, domains, wall)| {
            let metrics = domains
                .iter()
                .enumerate()
                .map(|(d, &(i, c, n))| DomainMetrics { domain: d, samples: n, instance_error: i, category_error: c })
                .collect();
            let result = EpisodeResult::new(seed, metrics, None, format!("{seed:064x}"), "ab".repeat(32));
            let protocol = ProtocolConfig { variant, imbalance_factor: imbalance, ..ProtocolConfig::new(4, domains.len()) };
            RunRecord::new(method, result, &protocol, (0..domains.len()).collect(), &TribeHyperParams::for_classes(4), wall)
        })
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn records_roundtrip_through_files(records in prop::collection::vec(record_strategy(), 1..8)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        append_records(&path, &records).unwrap();
        let (back, skipped) = read_records(&path).unwrap();
        prop_assert_eq!(skipped, 0);
        prop_assert_eq!(back, records);
    }

    #[test]
    fn summary_means_match_hand_recomputation(records in prop::collection::vec(record_strategy(), 1..12)) {
        let rows = summarize(&records);
        prop_assert_eq!(rows.iter().map(|r| r.runs).sum::<usize>(), records.len());
        for row in rows {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.method == row.method && r.variant == row.variant && r.imbalance_factor == row.imbalance_factor)
                .collect();
            prop_assert_eq!(group.len(), row.runs);
            let n = group.len() as f64;
            let inst = group.iter().map(|r| r.result.domains.iter().map(|d| d.instance_error).sum::<f64>()
                / r.result.domains.len() as f64).sum::<f64>() / n;
            let cat = group.iter().map(|r| r.result.domains.iter().map(|d| d.category_error).sum::<f64>()
                / r.result.domains.len() as f64).sum::<f64>() / n;
            prop_assert!((row.instance_error - inst).abs() < 1e-9);
            prop_assert!((row.category_error - cat).abs() < 1e-9);
        }
    }
}
