//! Command implementations behind the `dmn` binary: dataset generation,
//! learning runs, partition planning, benchmarking, and pseudo-independence
//! checks. Everything here is a thin orchestration layer over the library;
//! the binary only parses flags and maps errors to exit codes
//! (0 success, 1 negative domain verdict, 2 usage, 3 runtime failure).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::data::{read_dataset, write_dataset, DatasetFormat, FrequencyTable};
use crate::model::{
    expected_counts, read_model, sample, verify_pi, ClusterModel, PiReport,
};
use crate::runtime::{
    estimate_message_time, plan_partition, topology_estimate, ParallelExecutor, WorkerRole,
    WorkerStats,
};
use crate::score::Threshold;
use crate::search::{learn, PassExecutor, SearchConfig, SearchTrace, SequentialExecutor};
use crate::graph::Graph;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn parse_dataset_format(s: &str) -> Result<DatasetFormat, CliError> {
    match s {
        "text" => Ok(DatasetFormat::Text),
        "binary" => Ok(DatasetFormat::Binary),
        other => Err(CliError::Usage(format!(
            "unknown dataset format `{other}` (expected text or binary)"
        ))),
    }
}

/// How `generate` produces counts from a model.
#[derive(Debug, Clone, Copy)]
pub enum GenerateMode {
    /// Deterministic counts: probability times total.
    Expected { total: f64 },
    /// Seeded forward sampling.
    Sample { count: u64, seed: u64 },
}

pub struct GenerateSummary {
    pub out: PathBuf,
    pub rows: usize,
    pub total: f64,
    pub variables: usize,
}

pub fn cmd_generate(
    model_path: &Path,
    mode: GenerateMode,
    out: &Path,
    format: DatasetFormat,
) -> Result<GenerateSummary, CliError> {
    let model = read_model(model_path).map_err(runtime_err)?;
    let table = match mode {
        GenerateMode::Expected { total } => expected_counts(&model, total).map_err(runtime_err)?,
        GenerateMode::Sample { count, seed } => sample(&model, count, seed).map_err(runtime_err)?,
    };
    write_dataset(&table, out, format).map_err(runtime_err)?;
    Ok(GenerateSummary {
        out: out.to_path_buf(),
        rows: table.row_count(),
        total: table.total(),
        variables: table.scheme().len(),
    })
}

/// Which executor runs the passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Even,
    TwoStage,
}

impl ExecMode {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "sequential" => Ok(ExecMode::Sequential),
            "even" => Ok(ExecMode::Even),
            "two-stage" => Ok(ExecMode::TwoStage),
            other => Err(CliError::Usage(format!(
                "unknown mode `{other}` (expected sequential, even, or two-stage)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExecMode::Sequential => "sequential",
            ExecMode::Even => "even",
            ExecMode::TwoStage => "two-stage",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnOptions {
    pub max_clique: usize,
    pub lookahead: usize,
    pub delta_h: f64,
    pub explorers: usize,
    pub servers: usize,
    pub mode: ExecMode,
}

impl LearnOptions {
    pub fn search_config(&self) -> Result<SearchConfig, CliError> {
        let threshold =
            Threshold::new(self.delta_h).map_err(|e| CliError::Usage(e.to_string()))?;
        SearchConfig::new(self.max_clique, self.lookahead, threshold)
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Checks the worker/mode combination and builds the executor.
    pub fn executor(&self) -> Result<Box<dyn PassExecutor>, CliError> {
        if self.explorers == 0 {
            return Err(CliError::Usage("need at least one worker (-n)".into()));
        }
        match self.mode {
            ExecMode::Sequential => {
                if self.explorers > 1 || self.servers > 0 {
                    return Err(CliError::Usage(
                        "sequential mode runs one worker; drop -n/-m or pick --mode even or two-stage"
                            .into(),
                    ));
                }
                Ok(Box::new(SequentialExecutor))
            }
            ExecMode::Even => {
                if self.servers > 0 {
                    return Err(CliError::Usage(
                        "marginal servers (-m) need --mode two-stage".into(),
                    ));
                }
                Ok(Box::new(ParallelExecutor::even(self.explorers)))
            }
            ExecMode::TwoStage => {
                if self.servers > 0 {
                    Ok(Box::new(ParallelExecutor::with_servers(
                        self.explorers,
                        self.servers,
                    )))
                } else {
                    Ok(Box::new(ParallelExecutor::two_stage(self.explorers)))
                }
            }
        }
    }
}

pub struct LearnSummary {
    pub graph: Graph,
    pub trace: SearchTrace,
    pub graph_path: PathBuf,
    pub trace_path: PathBuf,
    pub seconds: f64,
}

/// Learns a structure from a dataset file and writes `<prefix>.graph` and
/// `<prefix>.trace`. Outputs are identical whichever mode and worker count
/// ran the passes.
pub fn cmd_learn(
    dataset: &Path,
    format: DatasetFormat,
    opts: &LearnOptions,
    out_prefix: &Path,
) -> Result<LearnSummary, CliError> {
    let table = Arc::new(read_dataset(dataset, format).map_err(runtime_err)?);
    let config = opts.search_config()?;
    let mut executor = opts.executor()?;
    let started = Instant::now();
    let (graph, trace) = learn(&config, &table, executor.as_mut()).map_err(runtime_err)?;
    let seconds = started.elapsed().as_secs_f64();
    let graph_path = out_prefix.with_extension("graph");
    let trace_path = out_prefix.with_extension("trace");
    fs::write(&graph_path, graph.to_text()).map_err(runtime_err)?;
    fs::write(&trace_path, trace.to_text()).map_err(runtime_err)?;
    Ok(LearnSummary {
        graph,
        trace,
        graph_path,
        trace_path,
        seconds,
    })
}

/// Partition plan plus interconnect estimates, as a printable report.
pub fn cmd_plan(
    data_mb: f64,
    variables: usize,
    workers: usize,
    alpha: f64,
    explorer_mb: f64,
) -> Result<String, CliError> {
    let plan = plan_partition(data_mb, variables, workers, alpha, explorer_mb)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let topo = topology_estimate(workers + 1);
    let mut out = String::new();
    let _ = writeln!(out, "explorers (n): {}", plan.explorers);
    let _ = writeln!(out, "servers (m): {}", plan.servers);
    let _ = writeln!(out, "explorer data (MB): {}", plan.explorer_data_mb);
    let _ = writeln!(out, "server shard (MB): {:.4}", plan.server_data_mb);
    let _ = writeln!(out, "alpha: {}", plan.alpha);
    let _ = writeln!(out, "processors (W): {}", topo.processors);
    let _ = writeln!(out, "mesh max hops (D_max): {}", topo.mesh_max_hops);
    let _ = writeln!(out, "tree max hops (T_max): {}", topo.tree_max_hops);
    let _ = writeln!(out, "explorer-server hops: {}", topo.explorer_server_hops());
    let anchors = [
        (1024u64, topo.tree_max_hops.max(1)),
        (4096, topo.tree_max_hops.max(1)),
        (1024, topo.explorer_server_hops().max(1)),
        (16384, topo.explorer_server_hops().max(1)),
    ];
    for (len, hops) in anchors {
        let _ = writeln!(
            out,
            "message time {len} B x {hops} hops: {:.4} s",
            estimate_message_time(len, hops)
        );
    }
    Ok(out)
}

/// Speed-up of a parallel time against the sequential baseline.
pub fn speedup(t1_seconds: f64, tn_seconds: f64) -> f64 {
    t1_seconds / tn_seconds
}

/// Efficiency: speed-up per worker.
pub fn efficiency(speedup: f64, workers: usize) -> f64 {
    speedup / workers as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub mode: String,
    pub workers: usize,
    pub seconds: f64,
    pub speedup: f64,
    pub efficiency: f64,
    pub max_idle_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Per-worker idle/busy accounting lines (comments in the TSV).
    pub worker_notes: Vec<String>,
}

impl BenchReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("mode\tn\ttime_s\tspeedup\tefficiency\tmax_idle_s\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.mode, r.workers, r.seconds, r.speedup, r.efficiency, r.max_idle_seconds
            );
        }
        for note in &self.worker_notes {
            let _ = writeln!(out, "# {note}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<BenchReport, CliError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(CliError::Runtime(format!(
                    "bench row {i} has {} fields",
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64, CliError> {
                s.parse()
                    .map_err(|_| CliError::Runtime(format!("bad number `{s}` in bench row {i}")))
            };
            rows.push(BenchRow {
                mode: fields[0].to_string(),
                workers: fields[1]
                    .parse()
                    .map_err(|_| CliError::Runtime("bad worker count".into()))?,
                seconds: parse(fields[2])?,
                speedup: parse(fields[3])?,
                efficiency: parse(fields[4])?,
                max_idle_seconds: parse(fields[5])?,
            });
        }
        Ok(BenchReport {
            rows,
            worker_notes: Vec::new(),
        })
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn idle_notes(mode: &str, n: usize, stats: &[WorkerStats], notes: &mut Vec<String>) -> f64 {
    let mut max_idle = 0.0f64;
    for s in stats {
        let role = match s.role {
            WorkerRole::Explorer => "explorer",
            WorkerRole::Server => "server",
        };
        let idle = s.idle.as_secs_f64();
        max_idle = max_idle.max(idle);
        notes.push(format!(
            "idle\t{mode}\t{n}\t{role}-{}\t{:.6}\t{:.6}",
            s.index,
            idle,
            s.busy.as_secs_f64()
        ));
    }
    max_idle
}

/// Times learning runs across worker counts for both allocation modes and
/// reports speed-up and efficiency against the shared sequential baseline,
/// plus per-worker idle time to make load imbalance visible.
pub fn cmd_bench(
    dataset: &Path,
    format: DatasetFormat,
    opts: &LearnOptions,
    worker_counts: &[usize],
    repetitions: usize,
) -> Result<BenchReport, CliError> {
    if worker_counts.is_empty() {
        return Err(CliError::Usage("worker list must be nonempty".into()));
    }
    if repetitions == 0 {
        return Err(CliError::Usage("need at least one repetition".into()));
    }
    let table = Arc::new(read_dataset(dataset, format).map_err(runtime_err)?);
    let config = opts.search_config()?;

    let reference = learn(&config, &table, &mut SequentialExecutor).map_err(runtime_err)?;
    let mut baseline_times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let started = Instant::now();
        let _ = learn(&config, &table, &mut SequentialExecutor).map_err(runtime_err)?;
        baseline_times.push(started.elapsed().as_secs_f64());
    }
    let t1 = median(baseline_times);

    let mut report = BenchReport::default();
    for mode in [ExecMode::Even, ExecMode::TwoStage] {
        for &n in worker_counts {
            if n == 0 {
                return Err(CliError::Usage("worker counts must be positive".into()));
            }
            let (tn, max_idle) = if n == 1 {
                // The baseline is the sequential program.
                (t1, 0.0)
            } else {
                let mut times = Vec::with_capacity(repetitions);
                let mut last_stats = Vec::new();
                for _ in 0..repetitions {
                    let mut exec = match mode {
                        ExecMode::Even => ParallelExecutor::even(n),
                        _ => ParallelExecutor::two_stage(n),
                    };
                    let started = Instant::now();
                    let (g, t) = learn(&config, &table, &mut exec).map_err(runtime_err)?;
                    times.push(started.elapsed().as_secs_f64());
                    last_stats = exec.shutdown();
                    if g != reference.0 || t.to_text() != reference.1.to_text() {
                        return Err(CliError::Runtime(format!(
                            "{} run with {n} workers diverged from the sequential result",
                            mode.name()
                        )));
                    }
                }
                let max_idle = idle_notes(mode.name(), n, &last_stats, &mut report.worker_notes);
                (median(times), max_idle)
            };
            let s = speedup(t1, tn);
            report.rows.push(BenchRow {
                mode: mode.name().to_string(),
                workers: n,
                seconds: tn,
                speedup: s,
                efficiency: efficiency(s, n),
                max_idle_seconds: max_idle,
            });
        }
    }
    Ok(report)
}

/// Pseudo-independence check of a model subset given by variable names.
pub fn cmd_verify(
    model_path: &Path,
    subset_names: &[String],
    tol: f64,
) -> Result<PiReport, CliError> {
    let model = read_model(model_path).map_err(runtime_err)?;
    let subset = resolve_subset(&model, subset_names)?;
    verify_pi(&model, &subset, tol).map_err(runtime_err)
}

fn resolve_subset(model: &ClusterModel, names: &[String]) -> Result<Vec<usize>, CliError> {
    names
        .iter()
        .map(|name| {
            model
                .scheme()
                .index_of(name.trim())
                .ok_or_else(|| CliError::Usage(format!("unknown variable `{}`", name.trim())))
        })
        .collect()
}

/// Key=value config files mirroring the learn/bench flags. Lines starting
/// with `#` are comments; flags given on the command line win.
#[derive(Debug, Default, Clone)]
pub struct KeyValues(HashMap<String, String>);

impl KeyValues {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {} is not key=value", i + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KeyValues(map))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                CliError::Usage(format!("config value for `{key}` is invalid: `{raw}`"))
            }),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parity_model, table1_model, write_model};
    use tempfile::tempdir;

    #[test]
    fn generate_expected_is_deterministic() {
        let dir = tempdir().unwrap();
        let model_path = dir.path().join("table1.model");
        write_model(&table1_model(), &model_path).unwrap();
        let out = dir.path().join("t.data");
        let s = cmd_generate(
            &model_path,
            GenerateMode::Expected { total: 10_000.0 },
            &out,
            DatasetFormat::Text,
        )
        .unwrap();
        assert_eq!(s.rows, 16);
        assert_eq!(s.total, 10_000.0);
        let first = fs::read(&out).unwrap();
        cmd_generate(
            &model_path,
            GenerateMode::Expected { total: 10_000.0 },
            &out,
            DatasetFormat::Text,
        )
        .unwrap();
        assert_eq!(fs::read(&out).unwrap(), first);
        let text = String::from_utf8(first).unwrap();
        assert!(text.contains("0 0 0 0 225\n"));
    }

    #[test]
    fn generate_sampled_is_seed_stable() {
        let dir = tempdir().unwrap();
        let model_path = dir.path().join("parity3.model");
        write_model(&parity_model(3, 0.05).unwrap(), &model_path).unwrap();
        let a = dir.path().join("a.data");
        let b = dir.path().join("b.data");
        for (path, seed) in [(&a, 7u64), (&b, 7)] {
            cmd_generate(
                &model_path,
                GenerateMode::Sample {
                    count: 1000,
                    seed,
                },
                path,
                DatasetFormat::Binary,
            )
            .unwrap();
        }
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    fn write_table1_dataset(dir: &Path) -> PathBuf {
        let table = expected_counts(&table1_model(), 10_000.0).unwrap();
        let path = dir.join("table1-exp.data");
        write_dataset(&table, &path, DatasetFormat::Text).unwrap();
        path
    }

    fn opts(mode: ExecMode, n: usize, m: usize, kappa: usize) -> LearnOptions {
        LearnOptions {
            max_clique: 3,
            lookahead: kappa,
            delta_h: 0.003,
            explorers: n,
            servers: m,
            mode,
        }
    }

    #[test]
    fn learn_outputs_are_mode_invariant() {
        let dir = tempdir().unwrap();
        let dataset = write_table1_dataset(dir.path());
        let mut outputs = Vec::new();
        for (mode, n, tag) in [
            (ExecMode::Sequential, 1usize, "seq"),
            (ExecMode::Even, 2, "even2"),
            (ExecMode::TwoStage, 4, "two4"),
        ] {
            let prefix = dir.path().join(tag);
            let s = cmd_learn(&dataset, DatasetFormat::Text, &opts(mode, n, 0, 2), &prefix)
                .unwrap();
            outputs.push((
                fs::read(&s.graph_path).unwrap(),
                fs::read(&s.trace_path).unwrap(),
            ));
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]));
        // And the learned structure is the expected five-edge graph.
        let graph_text = String::from_utf8(outputs[0].0.clone()).unwrap();
        assert_eq!(graph_text, "dmn-graph v1\n4\n0 1\n0 2\n1 2\n1 3\n2 3\n");
    }

    #[test]
    fn learn_flag_combinations_are_validated() {
        let bad = opts(ExecMode::Sequential, 2, 0, 1).executor();
        assert!(matches!(bad, Err(CliError::Usage(_))));
        let bad = opts(ExecMode::Even, 2, 1, 1).executor();
        assert!(matches!(bad, Err(CliError::Usage(_))));
        assert!(opts(ExecMode::TwoStage, 2, 2, 1).executor().is_ok());
        let bad = LearnOptions {
            delta_h: -1.0,
            ..opts(ExecMode::Sequential, 1, 0, 1)
        }
        .search_config();
        assert!(matches!(bad, Err(CliError::Usage(_))));
    }

    #[test]
    fn plan_report_contents() {
        let report = cmd_plan(100.0, 1000, 30, 0.005, 20.0).unwrap();
        assert!(report.contains("explorers (n): 7\n"));
        assert!(report.contains("servers (m): 23\n"));
        assert!(report.contains("server shard (MB): 3.478"));
        // 24 workers plus the manager: a 25-processor machine.
        let report = cmd_plan(10.0, 50, 24, 0.005, 10.0).unwrap();
        assert!(report.contains("processors (W): 25\n"));
        assert!(report.contains("(D_max): 8\n"));
        assert!(report.contains("(T_max): 3\n"));
        assert!(cmd_plan(1.0, 10, 4, 0.005, 2.0).is_err());
    }

    #[test]
    fn speedup_and_efficiency_arithmetic() {
        let s = speedup(3160.0, 471.0);
        assert!((s - 6.71).abs() < 0.005);
        assert_eq!((s * 100.0).round() / 100.0, 6.71);
        assert_eq!(speedup(100.0, 100.0), 1.0);
        assert_eq!(efficiency(6.0, 8), 0.75);
    }

    #[test]
    fn bench_rows_satisfy_definitions() {
        let dir = tempdir().unwrap();
        let dataset = write_table1_dataset(dir.path());
        let report = cmd_bench(
            &dataset,
            DatasetFormat::Text,
            &opts(ExecMode::Sequential, 1, 0, 1),
            &[1, 2],
            1,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 4); // two modes x two counts
        let tsv = report.to_tsv();
        let parsed = BenchReport::from_tsv(&tsv).unwrap();
        for row in &parsed.rows {
            if row.workers == 1 {
                assert_eq!(row.speedup, 1.0);
                assert_eq!(row.efficiency, 1.0);
            }
            assert_eq!(row.efficiency, row.speedup / row.workers as f64);
        }
        // Idle notes exist for the parallel runs.
        assert!(report.worker_notes.iter().any(|n| n.starts_with("idle\teven\t2")));
    }

    #[test]
    fn verify_reports_pi_verdicts() {
        let dir = tempdir().unwrap();
        let model_path = dir.path().join("table1.model");
        write_model(&table1_model(), &model_path).unwrap();
        let names = ["X1", "X2", "X3"].map(String::from);
        let report = cmd_verify(&model_path, &names, 1e-9).unwrap();
        assert!(report.is_pi_submodel());
        let bad = cmd_verify(&model_path, &["X1".into(), "nope".into(), "X3".into()], 1e-9);
        assert!(matches!(bad, Err(CliError::Usage(_))));
    }

    #[test]
    fn config_files_parse_and_type_check() {
        let kv = KeyValues::parse("# comment\neta = 3\nkappa=2\nmode = two-stage\n").unwrap();
        assert_eq!(kv.get::<usize>("eta").unwrap(), Some(3));
        assert_eq!(kv.get::<usize>("kappa").unwrap(), Some(2));
        assert_eq!(kv.get_str("mode"), Some("two-stage"));
        assert_eq!(kv.get::<usize>("absent").unwrap(), None);
        assert!(KeyValues::parse("not a pair\n").is_err());
        assert!(kv.get::<usize>("mode").is_err());
    }
}
