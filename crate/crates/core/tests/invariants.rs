use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::strategy::Strategy as Gen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use upload_select::budget::{budget_score, noisy_accuracy, variance_penalty, NoiseStream, TaskFeatures};
use upload_select::data::load_csv;
use upload_select::discrimination::{disc_scores, fisher_score, penalize, select_top_m};
use upload_select::pauli::{enumerate_family, greedy_group};
use upload_select::pipeline::run_strategy;
use upload_select::probe::{fit_probe, ProbeConfig};
use upload_select::search::{run_search, Evaluator, Problem, SearchSettings};
use upload_select::sim::{apply_block, encode, ring_edges};
use upload_select::{AngleVector, FeatureMatrix, GateBlock, Pauli, PauliString, RunConfig, StateVector};
use upload_select::Strategy as Plan;

fn iris() -> (Problem, RunConfig) {
    let cfg = RunConfig {
        dataset: PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("../../data/iris.csv")
            .display()
            .to_string(),
        label: "species".into(),
        ..RunConfig::default()
    };
    let ds = load_csv(&cfg.dataset, &cfg.label).unwrap();
    (Problem::prepare(ds, &cfg).unwrap(), cfg)
}

fn labelled(rows: usize, cols: usize) -> impl Gen<Value = (Vec<Vec<f64>>, Vec<bool>)> {
    (
        prop::collection::vec(prop::collection::vec(-1.0..1.0f64, cols), rows),
        prop::collection::vec(any::<bool>(), rows),
    )
        .prop_map(|(x, mut y)| {
            y[0] = true;
            y[1] = false;
            (x, y)
        })
}

// CZ on edge (a, b) negates amplitudes where both bits are set.
fn cz_edges(state: &StateVector, edges: &[(usize, usize)]) -> Vec<Complex64> {
    let mut amps = state.amplitudes().to_vec();
    for &(a, b) in edges {
        let mask = (1usize << a) | (1usize << b);
        for (i, v) in amps.iter_mut().enumerate() {
            if i & mask == mask {
                *v = -*v;
            }
        }
    }
    amps
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_is_bit_deterministic(
        n in 2usize..=4,
        blocks in prop::collection::vec(0usize..8, 0..=6),
        raw in prop::collection::vec(-PI..=PI, 4),
    ) {
        let seq = upload_select::UploadSequence::new(blocks.iter().map(|&i| GateBlock::LIBRARY[i]).collect());
        let theta = AngleVector::new(raw[..n].to_vec()).unwrap();
        let a = encode(&seq, &theta, n).unwrap();
        let b = encode(&seq, &theta, n).unwrap();
        prop_assert_eq!(a.amplitudes(), b.amplitudes());
        prop_assert!((a.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cz_ring_edge_order_is_irrelevant(
        n in 2usize..=4,
        raw in prop::collection::vec(-PI..=PI, 4),
        order_seed in any::<u64>(),
    ) {
        let theta = AngleVector::new(raw[..n].to_vec()).unwrap();
        let psi = encode(&"RY+RX".parse().unwrap(), &theta, n).unwrap();
        let mut edges: Vec<(usize, usize)> = ring_edges(n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(order_seed);
        for i in (1..edges.len()).rev() {
            edges.swap(i, rng.random_range(0..=i));
        }
        let reference = apply_block(&psi, GateBlock::CzRing, &theta).unwrap();
        for (a, b) in cz_edges(&psi, &edges).iter().zip(reference.amplitudes()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn column_scaling_leaves_disc_score_unchanged(
        (rows, labels) in labelled(16, 3),
        c in 0.2..5.0f64,
    ) {
        let f = FeatureMatrix::from_rows(3, &rows);
        let base = disc_scores(&f, &labels).unwrap();
        let scaled = f.map_entries(|_, col, v| if col == 1 { v * c } else { v });
        // ε is negligible once both class spreads are well away from zero
        let spread: Vec<f64> = [true, false].iter().map(|&k| {
            let vals: Vec<f64> = rows.iter().zip(&labels).filter(|(_, &y)| y == k).map(|(r, _)| r[1]).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
        }).collect();
        prop_assume!(spread.iter().sum::<f64>() >= 0.1);
        let after = disc_scores(&scaled, &labels).unwrap();
        prop_assert!((after[1] - base[1]).abs() < 1e-6 * base[1].max(1.0), "{} vs {}", after[1], base[1]);
        prop_assert_eq!(after[0], base[0]);
    }

    #[test]
    fn fisher_score_is_non_negative((rows, labels) in labelled(14, 4), lambda in 1e-6..1.0f64) {
        let f = FeatureMatrix::from_rows(4, &rows);
        prop_assert!(fisher_score(&f, &labels, lambda).unwrap() >= 0.0);
    }

    #[test]
    fn larger_cost_weight_never_lifts_weight_two_columns(
        raw in prop::collection::vec(0.0..3.0f64, 66),
        l1 in 0.0..1.0f64,
        extra in 0.0..1.0f64,
    ) {
        let fam = enumerate_family(4, 2, &[]).unwrap();
        // give one weight-1 and one weight-2 column the same raw score
        let w1 = fam.members().iter().position(|p| p.weight() == 1).unwrap();
        let w2 = fam.members().iter().position(|p| p.weight() == 2).unwrap();
        let mut raw = raw;
        raw[w2] = raw[w1];
        let rank = |lambda: f64| {
            let top = select_top_m(&penalize(&raw, &fam, lambda), 66);
            let pos = |c| top.columns.iter().position(|&x| x == c).unwrap() as i64;
            pos(w2) - pos(w1)
        };
        prop_assert!(rank(l1 + extra) >= rank(l1));
        prop_assert!(rank(l1) > 0, "the weight-2 column ranks below its weight-1 twin");
        let a = select_top_m(&penalize(&raw, &fam, l1), 12);
        prop_assert_eq!(a, select_top_m(&penalize(&raw, &fam, l1), 12));
    }

    #[test]
    fn probe_fit_is_deterministic((rows, labels) in labelled(20, 3)) {
        let f = FeatureMatrix::from_rows(3, &rows);
        let a = fit_probe(&f, &labels, &ProbeConfig::default()).unwrap();
        let b = fit_probe(&f, &labels, &ProbeConfig::default()).unwrap();
        prop_assert_eq!(a.weights, b.weights);
        prop_assert_eq!(a.bias.to_bits(), b.bias.to_bits());
    }

    #[test]
    fn variance_penalty_falls_with_shots(rows in prop::collection::vec(prop::collection::vec(-0.99..0.99f64, 3), 1..10), shots in 1u64..10_000) {
        let f = FeatureMatrix::from_rows(3, &rows);
        prop_assert!(variance_penalty(&f, shots + 1) < variance_penalty(&f, shots));
    }

    #[test]
    fn budget_score_falls_with_groups(j in 0.0..5.0f64, v in 0.0..0.1f64, g in 1usize..20, d in 1usize..13, gamma in 0.01..1.0f64) {
        prop_assert!(budget_score(j, v, g + 1, d, 1.0, gamma) < budget_score(j, v, g, d, 1.0, gamma));
    }
}

#[test]
fn family_matches_brute_force_enumeration() {
    const SYMBOLS: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    for n in 1..=6usize {
        let all: Vec<PauliString> = (0..4usize.pow(n as u32))
            .map(|mut code| {
                PauliString::new(
                    (0..n)
                        .map(|_| {
                            let s = SYMBOLS[code % 4];
                            code /= 4;
                            s
                        })
                        .collect(),
                )
            })
            .collect();
        for k in 1..=n {
            let mut expect: Vec<PauliString> = all.iter().filter(|p| (1..=k).contains(&p.weight())).cloned().collect();
            let fam = enumerate_family(n, k, &[]).unwrap();
            let formula: usize = (1..=k).map(|j| binomial(n, j) * 3usize.pow(j as u32)).sum();
            assert_eq!(fam.len(), formula, "n={n} k={k}");
            assert_eq!(fam.len(), expect.len(), "n={n} k={k}");
            let mut got = fam.members().to_vec();
            got.sort();
            expect.sort();
            assert_eq!(got, expect);
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn single_qubit_clique_forces_three_groups() {
    let fam = enumerate_family(4, 2, &[]).unwrap();
    let groups = greedy_group(fam.members());
    let home = |s: &str| {
        let p: PauliString = s.parse().unwrap();
        groups.iter().position(|g| g.members().contains(&p)).unwrap()
    };
    let mut homes = vec![home("XIII"), home("YIII"), home("ZIII")];
    homes.dedup();
    assert_eq!(homes.len(), 3);
    assert!(groups.len() >= 3);
    assert!(groups.len() <= fam.len());
}

#[test]
fn noisy_accuracy_repeats_exactly() {
    let (train, train_y) = synthetic(40, 0.3, 1);
    let (test, test_y) = synthetic(20, 0.3, 2);
    let rows_tr: Vec<usize> = (0..40).collect();
    let rows_te: Vec<usize> = (40..60).collect();
    let cols = [0, 1, 2];
    let task = TaskFeatures {
        train: &train,
        train_rows: &rows_tr,
        train_labels: &train_y,
        test: &test,
        test_rows: &rows_te,
        test_labels: &test_y,
        columns: &cols,
    };
    let probe = ProbeConfig::default();
    let a = noisy_accuracy(&task, 128, 5, &NoiseStream::new(9), &probe).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| noisy_accuracy(&task, 128, 5, &NoiseStream::new(9), &probe).unwrap());
    assert_eq!(a.to_bits(), b.to_bits());
}

// Two classes at ±margin on every column with small jitter, values inside (−1, 1).
fn synthetic(rows: usize, margin: f64, seed: u64) -> (FeatureMatrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..rows).map(|i| i % 2 == 0).collect();
    let data: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            let s = if y { margin } else { -margin };
            (0..3).map(|_| s + rng.random_range(-0.05..0.05)).collect()
        })
        .collect();
    (FeatureMatrix::from_rows(3, &data), labels)
}

#[test]
fn more_shots_help_on_average() {
    let probe = ProbeConfig::default();
    let mut diffs = Vec::new();
    for seed in 0..50u64 {
        let (train, train_y) = synthetic(40, 0.1, 100 + seed);
        let (test, test_y) = synthetic(20, 0.1, 200 + seed);
        let rows_tr: Vec<usize> = (0..40).collect();
        let rows_te: Vec<usize> = (40..60).collect();
        let cols = [0, 1, 2];
        let task = TaskFeatures {
            train: &train,
            train_rows: &rows_tr,
            train_labels: &train_y,
            test: &test,
            test_rows: &rows_te,
            test_labels: &test_y,
            columns: &cols,
        };
        let hi = noisy_accuracy(&task, 4096, 5, &NoiseStream::new(seed), &probe).unwrap();
        let lo = noisy_accuracy(&task, 64, 5, &NoiseStream::new(seed), &probe).unwrap();
        diffs.push(hi - lo);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut means: Vec<f64> = (0..2000)
        .map(|_| (0..diffs.len()).map(|_| diffs[rng.random_range(0..diffs.len())]).sum::<f64>() / diffs.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lower = means[(0.025 * means.len() as f64) as usize];
    assert!(lower >= 0.0, "bootstrap lower bound {lower}");
}

#[test]
fn search_counters_are_exact_and_easy_pairs_are_untouched() {
    let (p, cfg) = iris();
    for strategy in [Plan::SparsePairAdaptiveIdeal, Plan::SparsePairAdaptiveBudget] {
        let ev = Evaluator::new(&p, SearchSettings::for_strategy(&cfg, strategy));
        let out = run_search(&ev);
        let tasks = p.tasks.len();
        assert!(out.global.failed.is_empty());
        assert_eq!(out.global.sequences, 8 * cfg.prefix_rounds);
        assert_eq!(out.global.evaluations, 8 * cfg.prefix_rounds * tasks);
        let mut total = 0;
        for pair in out.pairs.iter().map(|r| r.as_ref().unwrap()) {
            assert_eq!(pair.evaluations, 8 * pair.rounds_run);
            assert!(pair.rounds_run <= cfg.max_rounds - cfg.prefix_rounds);
            assert!(pair.final_summary.sequence.starts_with(&out.global.prefix));
            if !pair.is_hard {
                assert_eq!(pair.rounds_run, 0);
                assert_eq!(pair.final_summary, pair.prefix_summary);
                assert_eq!(pair.final_summary.sequence, out.global.prefix);
            }
            total += pair.evaluations;
        }
        assert_eq!(out.continuation_evaluations, total);
    }
}

#[test]
fn baselines_read_out_the_full_family() {
    let (p, cfg) = iris();
    let full = greedy_group(p.family.members()).len();
    for strategy in [Plan::TemplateCv, Plan::KtaExact] {
        let r = run_strategy(&p, &cfg, strategy);
        for t in &r.tasks {
            let o = t.outcome.as_ref().unwrap();
            assert_eq!(o.paulis.len(), 66);
            assert_eq!(o.groups, full);
        }
        if strategy == Plan::KtaExact {
            assert_eq!(r.counters.baseline_candidates, (8 + 64 + 512) * r.tasks.len());
        }
    }
}
