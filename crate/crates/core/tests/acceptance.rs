//! Acceptance suite: one test per shipping criterion, each printing a
//! single `acceptance N (<name>): PASS|FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`). Tolerances are pinned in
//! the constants below; a failing criterion fails its test.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tcsched_core::baseline::{self, NaiveOrder, ORACLE_MAX};
use tcsched_core::dag::{build_dag, stats, ContractionDag, NodeId, TreeSet};
use tcsched_core::device::{self, min_working_set, DeviceConfig};
use tcsched_core::memory::{simulate, Schedule};
use tcsched_core::sibling::{self, LeafPick, SiblingOptions};
use tcsched_core::tree::{self, TreeOptions, TreeScheduler};
use tcsched_core::workload::fixtures::{shared_triple, E, F, G, H};
use tcsched_core::workload::format::{emit_schedule, emit_workload, parse_workload};
use tcsched_core::workload::gen::{calibrate_share_prob, generate, GenParams, System};

/// Wall-time slope band for the linear-complexity sweeps.
const SLOPE_BAND: (f64, f64) = (0.9, 1.3);
/// Calibrated sharing factors must land within this of their target.
const F_V_TOLERANCE: f64 = 0.5;
/// Directional comparisons must win at least this many of 10 seeds.
const MIN_WINS: usize = 8;

fn check(n: usize, name: &str, f: impl FnOnce() + std::panic::UnwindSafe) {
    match std::panic::catch_unwind(f) {
        Ok(()) => println!("acceptance {n} ({name}): PASS"),
        Err(e) => {
            println!("acceptance {n} ({name}): FAIL");
            std::panic::resume_unwind(e);
        }
    }
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn sched(order: &[NodeId]) -> Schedule {
    Schedule::new(order.to_vec(), "fixed", 0)
}

fn small_instance(seed: u64) -> (TreeSet, ContractionDag) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = GenParams {
        system: System::ALL[rng.random_range(0..System::ALL.len())],
        num_trees: rng.random_range(1..=4),
        n_dim: rng.random_range(2..=4),
        share_prob: rng.random_range(0.0..=1.0),
        leaves: (2, 4),
        seed,
    };
    let ts = generate(&params);
    let dag = build_dag(&ts).unwrap();
    (ts, dag)
}

#[test]
fn criterion_1_reference_table_reproduction() {
    check(1, "fixture residency reproduction", || {
        let ts = shared_triple();
        let dag = build_dag(&ts).unwrap();
        let s1 = sched(&[E, G, H, F]);
        let s2 = sched(&[F, E, G, H]);
        let t0 = Instant::now();
        let t1 = simulate(&dag, &s1).unwrap();
        let t2 = simulate(&dag, &s2).unwrap();
        let elapsed = t0.elapsed();
        assert_eq!(t1.residency, vec![0, 2, 3, 2, 0]);
        assert_eq!(t1.peak, 3);
        assert_eq!(t2.residency, vec![0, 2, 2, 1, 0]);
        assert_eq!(t2.peak, 2);
        assert!(elapsed.as_micros() < 1000, "took {elapsed:?}, budget 1 ms");
    });
}

#[test]
fn criterion_2_oracle_optimality() {
    check(2, "no scheduler beats the exact oracle", || {
        let t0 = Instant::now();
        let mut checked = 0;
        let mut existence = false;
        let mut seed = 0u64;
        while checked < 200 {
            let (ts, dag) = small_instance(seed);
            seed += 1;
            if dag.contraction_count() > 12 {
                continue;
            }
            checked += 1;
            let optimal = baseline::optimal_peak(&dag, ORACLE_MAX).unwrap().optimal_peak;
            let peaks: Vec<(String, u64)> = [
                sibling::schedule(&dag, &SiblingOptions::default()).unwrap().schedule,
                tree::schedule(&dag, &ts, &TreeOptions::default()).schedule,
                baseline::similarity(&dag, &ts),
                baseline::naive(&dag, &ts, NaiveOrder::Random { seed }),
                baseline::naive(&dag, &ts, NaiveOrder::DfsPostorder),
                baseline::naive(&dag, &ts, NaiveOrder::BfsLevel),
            ]
            .into_iter()
            .map(|s| {
                let peak = simulate(&dag, &s).unwrap().peak;
                (s.algo, peak)
            })
            .collect();
            for (algo, peak) in &peaks {
                assert!(
                    *peak >= optimal,
                    "seed {seed}: {algo} peak {peak} beat the oracle's {optimal}"
                );
            }
            let tree_peak = peaks.iter().find(|(a, _)| a == "tree").unwrap().1;
            let naive_worse = peaks
                .iter()
                .any(|(a, p)| matches!(a.as_str(), "random" | "dfs" | "bfs") && *p > optimal);
            existence |= tree_peak == optimal && naive_worse;
        }
        assert!(existence, "no instance had tree == optimal while a naive order exceeded it");
        assert!(t0.elapsed().as_secs() < 60, "budget 1 min, took {:?}", t0.elapsed());
    });
}

#[test]
fn criterion_3_incremental_gain_exactness() {
    check(3, "incremental gains equal from-scratch recomputation", || {
        let t0 = Instant::now();
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a15);
            let params = GenParams {
                system: System::ALL[rng.random_range(0..System::ALL.len())],
                num_trees: rng.random_range(8..=26),
                n_dim: rng.random_range(2..=5),
                share_prob: rng.random_range(0.2..=0.9),
                leaves: (3, 10),
                seed,
            };
            let ts = generate(&params);
            let dag = build_dag(&ts).unwrap();
            assert!(dag.len() <= 500, "instance budget is 500 nodes");
            let mut s = TreeScheduler::new(&dag, &ts, &TreeOptions::default());
            for _ in 0..ts.k().min(50) {
                for t in s.alive() {
                    assert_eq!(
                        s.gain(t),
                        s.reference_gain(t),
                        "seed {seed}, tree {t}: incremental gain diverged"
                    );
                }
                assert!(s.step().is_some());
            }
        }
        assert!(t0.elapsed().as_secs() < 60, "budget 1 min, took {:?}", t0.elapsed());
    });
}

#[test]
fn criterion_4_sibling_linear_complexity() {
    check(4, "sibling scheduler is linear in V+E", || {
        let mut points = Vec::new();
        let mut achieved = Vec::new();
        for target_e in [1000usize, 3160, 10_000, 31_600, 100_000] {
            let params = GenParams {
                system: System::BxM,
                num_trees: (target_e / 10).max(1),
                n_dim: 3,
                share_prob: 0.3,
                leaves: (8, 16),
                seed: 42,
            };
            let ts = generate(&params);
            let dag = build_dag(&ts).unwrap();
            let parent_sum: usize = dag.nodes().map(|n| n.parents.len()).sum();
            let mut best = u128::MAX;
            for _ in 0..5 {
                let t0 = Instant::now();
                let run = sibling::schedule(&dag, &SiblingOptions::default()).unwrap();
                best = best.min(t0.elapsed().as_nanos());
                assert_eq!(run.process_calls, dag.len(), "one process call per node");
                assert!(
                    run.edges_traversed <= dag.edge_count() + parent_sum,
                    "edge traversals exceed |E| + sum of parent degrees"
                );
            }
            achieved.push(dag.edge_count());
            points.push((((dag.len() + dag.edge_count()) as f64).ln(), (best as f64).ln()));
        }
        assert!(
            *achieved.first().unwrap() <= 1500 && *achieved.last().unwrap() >= 80_000,
            "sweep must span roughly 1e3..1e5 edges, got {achieved:?}"
        );
        let s = slope(&points);
        assert!(
            (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&s),
            "wall-time log-log slope {s:.3} outside {SLOPE_BAND:?}"
        );
    });
}

#[test]
fn criterion_5_tree_linear_complexity() {
    check(5, "tree scheduler is linear in k*E at fixed sharing", || {
        let k = 64usize;
        let target_f_v = 3.0;
        let mut points = Vec::new();
        let mut ratios = Vec::new();
        for target_e in [1500usize, 3000, 6000, 12_000, 24_000] {
            let mean_l = (1.0 + 0.75 * target_e as f64 / (2.0 * k as f64)) as u32;
            let leaves = ((mean_l * 7 / 10).max(2), mean_l * 13 / 10);
            let base = GenParams {
                system: System::BxB,
                num_trees: k,
                n_dim: 3,
                share_prob: 0.5,
                leaves,
                seed: 77,
            };
            let cal = calibrate_share_prob(&base, target_f_v);
            let ts = generate(&GenParams { share_prob: cal.share_prob, ..base });
            let dag = build_dag(&ts).unwrap();
            let s = stats(&dag, &ts);
            assert!(
                (s.f_v - target_f_v).abs() <= F_V_TOLERANCE,
                "sweep point drifted to f_v {:.2}",
                s.f_v
            );
            let mut best = u128::MAX;
            let mut updates = 0usize;
            for _ in 0..3 {
                let t0 = Instant::now();
                let run = tree::schedule(&dag, &ts, &TreeOptions::default());
                best = best.min(t0.elapsed().as_nanos());
                updates = run.counter_updates;
            }
            let ke = (k * s.num_edges) as f64;
            ratios.push(updates as f64 / ke);
            points.push((ke.ln(), (best as f64).ln()));
        }
        // One constant c with updates <= c*k*E across the sweep: the
        // per-unit ratio must not drift as k*E grows 16-fold.
        let c = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            c / lo <= 2.0,
            "counter updates per k*E drift from {lo:.3} to {c:.3}"
        );
        let s = slope(&points);
        assert!(
            (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&s),
            "wall-time log-log slope {s:.3} outside {SLOPE_BAND:?}"
        );
    });
}

#[test]
fn criterion_6_eviction_zero_point_and_monotonicity() {
    check(6, "ample capacity never evicts; evictions fall with capacity", || {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(101));
            let params = GenParams {
                system: System::ALL[rng.random_range(0..System::ALL.len())],
                num_trees: rng.random_range(2..=10),
                n_dim: rng.random_range(2..=5),
                share_prob: rng.random_range(0.0..=0.9),
                leaves: (3, 8),
                seed,
            };
            let ts = generate(&params);
            let dag = build_dag(&ts).unwrap();
            for schedule in [
                sibling::schedule(&dag, &SiblingOptions::default()).unwrap().schedule,
                tree::schedule(&dag, &ts, &TreeOptions::default()).schedule,
                baseline::naive(&dag, &ts, NaiveOrder::Random { seed }),
            ] {
                let trace = simulate(&dag, &schedule).unwrap();
                // The zero point is the schedule's transient peak: the
                // largest amount the device must hold at once mid-step.
                let at_peak = device::run(
                    &dag,
                    &schedule,
                    &DeviceConfig { capacity: trace.transient_peak },
                )
                .unwrap();
                assert_eq!(
                    at_peak.evictions, 0,
                    "seed {seed} {}: evictions at full-residency capacity",
                    schedule.algo
                );

                let mws = min_working_set(&dag, &schedule);
                let span = trace.transient_peak - mws;
                let mut last = u64::MAX;
                for i in 0..5u64 {
                    let capacity = mws + span * i / 4;
                    let r =
                        device::run(&dag, &schedule, &DeviceConfig { capacity }).unwrap();
                    assert!(
                        r.evictions <= last,
                        "seed {seed} {}: evictions rose from {last} to {} at capacity \
                         {capacity}",
                        schedule.algo,
                        r.evictions
                    );
                    last = r.evictions;
                }
            }
        }
    });
}

#[test]
fn criterion_7_directional_trend_on_calibrated_workloads() {
    check(7, "tree scheduler beats the greedy-similarity baseline", || {
        let t0 = Instant::now();
        for (name, system, leaves, target_f_v) in [
            ("deuteron-like", System::BxB, (3u32, 8u32), 7.00f64),
            ("tritium-like", System::BxBxB, (6, 16), 10.11),
        ] {
            let base = GenParams {
                system,
                num_trees: 128,
                n_dim: 4,
                share_prob: 0.5,
                leaves,
                seed: 1000,
            };
            let cal = calibrate_share_prob(&base, target_f_v);
            let mut peak_wins = 0;
            let mut evict_wins = 0;
            let mut f_v_sum = 0.0;
            for seed in 0..10u64 {
                let ts = generate(&GenParams {
                    share_prob: cal.share_prob,
                    seed: 2000 + seed,
                    ..base
                });
                let dag = build_dag(&ts).unwrap();
                f_v_sum += stats(&dag, &ts).f_v;

                let tree_s = tree::schedule(&dag, &ts, &TreeOptions::default()).schedule;
                let base_s = baseline::similarity(&dag, &ts);
                let tree_peak = simulate(&dag, &tree_s).unwrap().peak;
                let base_peak = simulate(&dag, &base_s).unwrap().peak;
                if tree_peak <= base_peak {
                    peak_wins += 1;
                }

                let capacity = ((0.75 * base_peak as f64).ceil() as u64)
                    .max(min_working_set(&dag, &tree_s))
                    .max(min_working_set(&dag, &base_s));
                let tree_ev = device::run(&dag, &tree_s, &DeviceConfig { capacity })
                    .unwrap()
                    .evictions;
                let base_ev = device::run(&dag, &base_s, &DeviceConfig { capacity })
                    .unwrap()
                    .evictions;
                if tree_ev <= base_ev {
                    evict_wins += 1;
                }
            }
            let mean_f_v = f_v_sum / 10.0;
            assert!(
                (mean_f_v - target_f_v).abs() <= F_V_TOLERANCE,
                "{name}: calibrated f_v {mean_f_v:.2} missed target {target_f_v}"
            );
            assert!(
                peak_wins >= MIN_WINS,
                "{name}: tree peak <= baseline in only {peak_wins}/10 seeds"
            );
            assert!(
                evict_wins >= MIN_WINS,
                "{name}: tree evictions <= baseline in only {evict_wins}/10 seeds"
            );
        }
        assert!(t0.elapsed().as_secs() < 600, "budget 10 min, took {:?}", t0.elapsed());
    });
}

#[test]
fn criterion_8_schedule_files_are_deterministic() {
    check(8, "fixed seeds give byte-identical schedule files", || {
        let fixture = shared_triple();
        let generated = generate(&GenParams {
            system: System::BxM,
            num_trees: 10,
            n_dim: 3,
            share_prob: 0.5,
            leaves: (3, 8),
            seed: 8,
        });
        for ts in [fixture, generated] {
            let dag = build_dag(&ts).unwrap();
            let emit_all = || -> Vec<String> {
                let mut files = vec![
                    emit_schedule(
                        &sibling::schedule(&dag, &SiblingOptions::default())
                            .unwrap()
                            .schedule,
                    ),
                    emit_schedule(
                        &sibling::schedule(
                            &dag,
                            &SiblingOptions { leaf_pick: LeafPick::Random { seed: 5 } },
                        )
                        .unwrap()
                        .schedule,
                    ),
                    emit_schedule(&tree::schedule(&dag, &ts, &TreeOptions::default()).schedule),
                    emit_schedule(&baseline::similarity(&dag, &ts)),
                    emit_schedule(&baseline::naive(&dag, &ts, NaiveOrder::Random { seed: 5 })),
                    emit_schedule(&baseline::naive(&dag, &ts, NaiveOrder::DfsPostorder)),
                    emit_schedule(&baseline::naive(&dag, &ts, NaiveOrder::BfsLevel)),
                ];
                if dag.contraction_count() <= ORACLE_MAX {
                    files.push(emit_schedule(
                        &baseline::optimal_peak(&dag, ORACLE_MAX).unwrap().witness,
                    ));
                }
                files
            };
            let first = emit_all();
            for _ in 0..2 {
                assert_eq!(emit_all(), first, "a scheduler produced different bytes");
            }
        }
    });
}

#[test]
fn criterion_9_format_round_trip() {
    check(9, "parse inverts emit on generated workloads", || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for i in 0..100u64 {
            let params = GenParams {
                system: System::ALL[rng.random_range(0..System::ALL.len())],
                num_trees: rng.random_range(1..=20),
                n_dim: rng.random_range(2..=8),
                share_prob: rng.random_range(0.0..=1.0),
                leaves: (2, rng.random_range(4..=10)),
                seed: i,
            };
            let ts = generate(&params);
            let reparsed = parse_workload(&emit_workload(&ts)).unwrap();
            assert_eq!(reparsed, ts, "instance {i} did not round-trip");
        }
    });
}
