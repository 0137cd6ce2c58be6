//! Manager/explorer/marginal-server runtime: parallel pass executors over
//! message passing, the worker-partition planner, and interconnect
//! estimators. See [`exec`] for the message protocol and [`plan`] for the
//! sizing math.

mod exec;
mod plan;

pub use exec::{
    merge_reports, partition_candidates, run_pass_even, run_pass_two_stage, serve_marginal,
    AllocationMode, Message, ParallelExecutor, WorkerRole, WorkerStats,
};
pub use plan::{
    estimate_message_time, plan_partition, topology_estimate, PlanError, RuntimePlan,
    TopologyEstimate,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("worker failure: {0}")]
    Worker(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FrequencyTable;
    use crate::graph::{Graph, LinkSet};
    use crate::model::{expected_counts, parity_model, pim3_like_small, sample, table1_model};
    use crate::score::Threshold;
    use crate::search::{
        learn, CandidateMove, PassExecutor, SearchConfig, SequentialExecutor,
    };
    use crate::rng::CounterRng;
    use std::sync::Arc;

    fn config(eta: usize, kappa: usize, delta_h: f64) -> SearchConfig {
        SearchConfig::new(eta, kappa, Threshold::new(delta_h).unwrap()).unwrap()
    }

    #[test]
    fn ranges_are_even_and_cover() {
        assert_eq!(partition_candidates(6, 2), vec![0..3, 3..6]);
        assert_eq!(partition_candidates(7, 3), vec![0..3, 3..5, 5..7]);
        assert_eq!(
            partition_candidates(2, 5),
            vec![0..1, 1..2, 2..2, 2..2, 2..2]
        );
        let mut rng = CounterRng::new(3);
        for _ in 0..100 {
            let total = rng.next_below(10_000);
            let n = 1 + rng.next_below(16) as usize;
            let ranges = partition_candidates(total, n);
            assert_eq!(ranges.len(), n);
            assert_eq!(ranges.first().unwrap().start, 0);
            assert_eq!(ranges.last().unwrap().end, total);
            for w in ranges.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
            let sizes: Vec<u64> = ranges.iter().map(|r| r.end - r.start).collect();
            let min = sizes.iter().min().unwrap();
            let max = sizes.iter().max().unwrap();
            assert!(max - min <= 1);
        }
    }

    #[test]
    fn report_merging_ignores_arrival_order() {
        let mv = |index: u64, dh: f64| CandidateMove {
            index,
            links: LinkSet::new(vec![(0, index as u32 + 1)]).unwrap(),
            dh: Some(dh),
        };
        let reports = vec![
            (Some(mv(5, 0.2)), 10u64, Some(0.001)),
            (Some(mv(2, 0.2)), 7, Some(-1e-12)),
            (None, 3, None),
            (Some(mv(9, 0.1)), 4, Some(0.05)),
        ];
        let (best, valid, min_dh) = merge_reports(&reports);
        // Equal decrements tie-break to the lowest index.
        assert_eq!(best.as_ref().unwrap().index, 2);
        assert_eq!(valid, 24);
        assert_eq!(min_dh, Some(-1e-12));

        // Every permutation of delivery produces the same merge.
        let mut rng = CounterRng::new(17);
        for _ in 0..50 {
            let mut shuffled = reports.clone();
            for i in (1..shuffled.len()).rev() {
                let j = rng.next_below(i as u64 + 1) as usize;
                shuffled.swap(i, j);
            }
            let (b, v, m) = merge_reports(&shuffled);
            assert_eq!(b.as_ref().unwrap().index, 2);
            assert_eq!(v, 24);
            assert_eq!(m, Some(-1e-12));
        }
    }

    fn fixtures() -> Vec<(&'static str, Arc<FrequencyTable>, SearchConfig)> {
        vec![
            (
                "table1",
                Arc::new(expected_counts(&table1_model(), 10_000.0).unwrap()),
                config(3, 2, 0.003),
            ),
            (
                "parity3",
                Arc::new(expected_counts(&parity_model(3, 0.05).unwrap(), 10_000.0).unwrap()),
                config(3, 3, 0.003),
            ),
            (
                "pim3-like-small",
                Arc::new(expected_counts(&pim3_like_small(), 10_000.0).unwrap()),
                config(3, 3, 0.003),
            ),
        ]
    }

    #[test]
    fn parallel_runs_match_sequential_exactly() {
        for (name, data, cfg) in fixtures() {
            let (seq_graph, seq_trace) = learn(&cfg, &data, &mut SequentialExecutor).unwrap();
            let seq_text = seq_trace.to_text();
            for n in [1usize, 2, 4] {
                for mode in ["even", "two-stage"] {
                    let mut exec = match mode {
                        "even" => ParallelExecutor::even(n),
                        _ => ParallelExecutor::two_stage(n),
                    };
                    let (g, t) = learn(&cfg, &data, &mut exec).unwrap();
                    assert_eq!(g, seq_graph, "{name} {mode} n={n}");
                    assert_eq!(t.to_text(), seq_text, "{name} {mode} n={n}");
                }
            }
        }
    }

    #[test]
    fn server_pipeline_learning_matches_sequential() {
        // Sampled counts are integers, so pipelined marginal sums are exact
        // and the learned structure and trace match byte for byte.
        let model = parity_model(3, 0.05).unwrap();
        let data = Arc::new(sample(&model, 1000, 7).unwrap());
        let cfg = config(3, 3, 0.003);
        let (seq_graph, seq_trace) = learn(&cfg, &data, &mut SequentialExecutor).unwrap();
        for (n, m) in [(1usize, 1usize), (2, 2), (2, 4)] {
            let mut exec = ParallelExecutor::with_servers(n, m);
            let (g, t) = learn(&cfg, &data, &mut exec).unwrap();
            assert_eq!(g, seq_graph, "n={n} m={m}");
            assert_eq!(t.to_text(), seq_trace.to_text(), "n={n} m={m}");
            let stats = exec.shutdown();
            assert_eq!(stats.len(), n + m);
        }
    }

    #[test]
    fn standalone_passes_match_sequential_pass() {
        let data = Arc::new(expected_counts(&table1_model(), 10_000.0).unwrap());
        let cfg = config(3, 1, 0.003);
        let g = Graph::empty(4);
        let forest = crate::graph::JunctionForest::of(&g).unwrap();
        let seq = crate::search::run_pass(&g, &forest, 1, &cfg, &data).unwrap();
        for n in [1usize, 2, 4] {
            let even = run_pass_even(&g, 1, &cfg, &data, n).unwrap();
            let two = run_pass_two_stage(&g, 1, &cfg, &data, n).unwrap();
            for other in [&even, &two] {
                match (&seq, other) {
                    (Some((a, ga)), Some((b, gb))) => {
                        assert_eq!(a, b);
                        assert_eq!(ga, gb);
                    }
                    (None, None) => {}
                    _ => panic!("pass outcomes diverged"),
                }
            }
        }
    }

    #[test]
    fn zero_valid_candidates_reports_none() {
        // A complete graph has no candidates at all.
        let mut links = Vec::new();
        for u in 0..3u32 {
            for v in (u + 1)..3 {
                links.push((u, v));
            }
        }
        let g = Graph::from_links(3, links).unwrap();
        let model = parity_model(3, 0.05).unwrap();
        let data = Arc::new(expected_counts(&model, 100.0).unwrap());
        let cfg = config(3, 1, 0.003);
        assert!(run_pass_even(&g, 1, &cfg, &data, 3).unwrap().is_none());
        assert!(run_pass_two_stage(&g, 1, &cfg, &data, 3).unwrap().is_none());
    }

    #[test]
    fn pipeline_marginals_equal_whole_projection() {
        let model = table1_model();
        let data = expected_counts(&model, 10_000.0).unwrap();
        let mut rng = CounterRng::new(123);
        for m in [0usize, 1, 2, 4] {
            let shards = data.shard_rows(m + 1);
            for _ in 0..10 {
                let mut subset: Vec<usize> = (0..4).filter(|_| rng.next_bool(0.5)).collect();
                if subset.is_empty() {
                    subset.push(rng.next_below(4) as usize);
                }
                let piped = serve_marginal(&subset, &shards).unwrap();
                let whole = data.project(&subset).unwrap();
                assert_eq!(piped, whole, "m={m} subset={subset:?}");
            }
        }
    }

    #[test]
    fn pipeline_reproduces_known_pair_counts() {
        let model = table1_model();
        let data = expected_counts(&model, 10_000.0).unwrap();
        let shards = data.shard_rows(5); // m = 4 servers
        let marginal = serve_marginal(&[1, 2], &shards).unwrap();
        assert_eq!(marginal.count_for(&[0, 0]), 4250.0);
        assert_eq!(marginal.total(), 10_000.0);
    }

    #[test]
    fn worker_stats_come_back_on_shutdown() {
        let data = Arc::new(expected_counts(&table1_model(), 1_000.0).unwrap());
        let cfg = config(3, 1, 0.003);
        let mut exec = ParallelExecutor::even(3);
        let _ = learn(&cfg, &data, &mut exec).unwrap();
        let stats = exec.shutdown();
        assert_eq!(stats.len(), 3);
        assert!(stats.iter().all(|s| s.role == WorkerRole::Explorer));
        // Repeated shutdown is quiet and empty.
        assert!(exec.shutdown().is_empty());
    }
}
