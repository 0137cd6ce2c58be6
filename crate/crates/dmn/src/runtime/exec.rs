//! Manager, explorers, and marginal servers over mailbox message passing.
//!
//! One thread per worker, one mpsc mailbox per worker, no shared mutable
//! state: the manager distributes candidate index ranges, workers scan them
//! against their own copy (or shard) of the data, and the manager merges
//! reports by candidate index, so arrival order never affects the result.
//!
//! Two allocation modes:
//!
//! - even: each explorer filters and scores its whole range and reports its
//!   best candidate.
//! - two-stage: workers first only filter for validity (cheap chordality
//!   and clique-implication checks) and report the surviving indices; the
//!   manager repartitions those evenly and the explorers score them. This
//!   evens out load when validity is rare and scoring expensive.
//!
//! With marginal servers present, the dataset is sharded round-robin across
//! the servers plus one explorer shard. Servers take part in stage-1
//! filtering and then answer marginal requests in a pipeline: each adds its
//! shard's sub-marginal and forwards, the last one answering the requesting
//! explorer, which folds in its own shard. Counts are additive, so the
//! pipelined marginal equals the whole-data projection.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::data::{FrequencyTable, MarginalTable};
use crate::graph::{Graph, JunctionForest};
use crate::score::{EntropyCache, LocalMarginals, MarginalSource, ScoreError};
use crate::search::{
    adopt, candidate_is_valid, candidate_space_for, scan_candidates, CandidateMove,
    CandidateSpace, PassContext, PassExecutor, PassOutcome, RangeScan, SearchConfig, SearchError,
};

use super::RuntimeError;

/// How candidate work is allocated to workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationMode {
    Even,
    TwoStage,
}

/// Wire contract between the manager and its workers. In-process the
/// payloads travel by channel; the variants are what a remote transport
/// would have to carry.
#[derive(Debug, Clone)]
pub enum Message {
    /// Hands a worker its data (full copy or shard) and the clique bound.
    Init {
        data: Arc<FrequencyTable>,
        max_clique: usize,
        mode: AllocationMode,
    },
    /// One pass's work: the current graph and a candidate index range.
    Job {
        graph: Graph,
        level: usize,
        range: std::ops::Range<u64>,
    },
    /// Stage-1 answer: indices of valid candidates in the worker's range.
    StageOneReport { slot: usize, valid: Vec<u64> },
    /// Stage-2 work: valid candidate indices to score.
    StageTwoJob { indices: Vec<u64> },
    /// Scoring answer: the worker's best candidate (none when nothing was
    /// valid and positive), its valid count, and the smallest decrement.
    Report {
        slot: usize,
        best: Option<CandidateMove>,
        valid: u64,
        min_dh: Option<f64>,
    },
    /// Ask the servers for a marginal over a variable subset.
    MarginalRequest { id: u64, subset: Vec<usize> },
    /// A partial (or, from the last server, complete) pipeline marginal.
    SubMarginal { id: u64, table: MarginalTable },
    /// A worker hit an error it cannot handle; the pass must abort.
    Failed { slot: usize, message: String },
    /// Idle/busy accounting returned in response to `Terminate`.
    Stats {
        slot: usize,
        role: WorkerRole,
        idle: Duration,
        busy: Duration,
    },
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerRole {
    Explorer,
    Server,
}

/// Per-worker time accounting over a runtime's life.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerStats {
    pub role: WorkerRole,
    pub index: usize,
    pub idle: Duration,
    pub busy: Duration,
}

/// Splits `total` items into `n` contiguous ranges whose sizes differ by at
/// most one, earlier ranges taking the excess.
pub fn partition_candidates(total: u64, n: usize) -> Vec<std::ops::Range<u64>> {
    assert!(n >= 1, "need at least one worker");
    let base = total / n as u64;
    let excess = (total % n as u64) as usize;
    let mut ranges = Vec::with_capacity(n);
    let mut start = 0u64;
    for i in 0..n {
        let len = base + u64::from(i < excess);
        ranges.push(start..start + len);
        start += len;
    }
    ranges
}

/// Merges scoring reports: the best candidate is the one with the largest
/// decrement, ties broken by the lowest candidate index, so any delivery
/// order produces the same answer.
pub fn merge_reports(
    reports: &[(Option<CandidateMove>, u64, Option<f64>)],
) -> (Option<CandidateMove>, u64, Option<f64>) {
    let mut best: Option<CandidateMove> = None;
    let mut valid = 0u64;
    let mut min_dh: Option<f64> = None;
    for (candidate, v, m) in reports {
        valid += v;
        if let Some(m) = m {
            min_dh = Some(min_dh.map_or(*m, |x: f64| x.min(*m)));
        }
        if let Some(c) = candidate {
            let dh = c.dh.expect("reported candidates are valid");
            let replace = match &best {
                None => true,
                Some(b) => {
                    let best_dh = b.dh.unwrap();
                    dh > best_dh || (dh == best_dh && c.index < b.index)
                }
            };
            if replace {
                best = Some(c.clone());
            }
        }
    }
    (best, valid, min_dh)
}

// Mailbox wait before re-checking worker health.
const POLL: Duration = Duration::from_millis(50);
// Outer bound on any single collect step; generous because scoring a range
// can legitimately take a while on big workloads.
const COLLECT_TIMEOUT: Duration = Duration::from_secs(600);
// Bound on one pipelined marginal round trip.
const MARGINAL_TIMEOUT: Duration = Duration::from_secs(60);

struct Runtime {
    explorer_txs: Vec<Sender<Message>>,
    server_txs: Vec<Sender<Message>>,
    manager_rx: Receiver<Message>,
    handles: Vec<JoinHandle<()>>,
    data_key: usize,
    max_clique: usize,
    stats: Vec<WorkerStats>,
    terminated: bool,
}

impl Runtime {
    /// Spawns explorers and servers and distributes the data. With servers,
    /// the rows are split round-robin into `servers + 1` shards; servers
    /// hold one each and every explorer holds the last. Without servers,
    /// every explorer holds the whole table.
    fn start(
        data: &Arc<FrequencyTable>,
        max_clique: usize,
        mode: AllocationMode,
        explorers: usize,
        servers: usize,
    ) -> Runtime {
        assert!(explorers >= 1, "need at least one explorer");
        let (manager_tx, manager_rx) = channel::<Message>();

        let mut explorer_txs = Vec::with_capacity(explorers);
        let mut explorer_rxs = Vec::with_capacity(explorers);
        for _ in 0..explorers {
            let (tx, rx) = channel::<Message>();
            explorer_txs.push(tx);
            explorer_rxs.push(rx);
        }
        let mut server_txs = Vec::with_capacity(servers);
        let mut server_rxs = Vec::with_capacity(servers);
        for _ in 0..servers {
            let (tx, rx) = channel::<Message>();
            server_txs.push(tx);
            server_rxs.push(rx);
        }

        let (explorer_data, server_data): (Arc<FrequencyTable>, Vec<Arc<FrequencyTable>>) =
            if servers == 0 {
                (Arc::clone(data), Vec::new())
            } else {
                let mut shards = data.shard_rows(servers + 1);
                let explorer_shard = Arc::new(shards.pop().expect("one shard per worker"));
                (explorer_shard, shards.into_iter().map(Arc::new).collect())
            };

        let mut handles = Vec::with_capacity(explorers + servers);
        for (s, rx) in server_rxs.into_iter().enumerate() {
            let manager_tx = manager_tx.clone();
            let next = server_txs.get(s + 1).cloned();
            let explorer_txs = explorer_txs.clone();
            let slot = explorers + s;
            handles.push(std::thread::spawn(move || {
                server_loop(s, slot, rx, manager_tx, next, explorer_txs)
            }));
        }
        for (e, rx) in explorer_rxs.into_iter().enumerate() {
            let manager_tx = manager_tx.clone();
            let server_txs = server_txs.clone();
            handles.push(std::thread::spawn(move || {
                explorer_loop(e, rx, manager_tx, server_txs)
            }));
        }

        for tx in &explorer_txs {
            let _ = tx.send(Message::Init {
                data: Arc::clone(&explorer_data),
                max_clique,
                mode,
            });
        }
        for (s, tx) in server_txs.iter().enumerate() {
            let _ = tx.send(Message::Init {
                data: Arc::clone(&server_data[s]),
                max_clique,
                mode,
            });
        }

        Runtime {
            explorer_txs,
            server_txs,
            manager_rx,
            handles,
            data_key: Arc::as_ptr(data) as usize,
            max_clique,
            stats: Vec::new(),
            terminated: false,
        }
    }

    fn worker_count(&self) -> usize {
        self.explorer_txs.len() + self.server_txs.len()
    }

    fn send_explorer(&self, e: usize, msg: Message) -> Result<(), SearchError> {
        self.explorer_txs[e]
            .send(msg)
            .map_err(|_| SearchError::Runtime(format!("explorer {e} is gone")))
    }

    fn send_server(&self, s: usize, msg: Message) -> Result<(), SearchError> {
        self.server_txs[s]
            .send(msg)
            .map_err(|_| SearchError::Runtime(format!("server {s} is gone")))
    }

    /// Receives one manager-bound message, watching worker health while
    /// waiting so a dead worker surfaces as an error instead of a hang.
    fn recv(&self) -> Result<Message, SearchError> {
        let start = Instant::now();
        loop {
            match self.manager_rx.recv_timeout(POLL) {
                Ok(Message::Failed { slot, message }) => {
                    return Err(SearchError::Runtime(format!(
                        "worker {slot} failed: {message}"
                    )));
                }
                Ok(msg) => return Ok(msg),
                Err(RecvTimeoutError::Timeout) => {
                    if self.handles.iter().any(|h| h.is_finished()) {
                        return Err(SearchError::Runtime(
                            "a worker exited before the pass finished".into(),
                        ));
                    }
                    if start.elapsed() > COLLECT_TIMEOUT {
                        return Err(SearchError::Runtime("timed out collecting reports".into()));
                    }
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(SearchError::Runtime("all workers are gone".into()));
                }
            }
        }
    }

    fn shutdown(&mut self) {
        if self.terminated {
            return;
        }
        self.terminated = true;
        for tx in self.explorer_txs.iter().chain(&self.server_txs) {
            let _ = tx.send(Message::Terminate);
        }
        let deadline = Instant::now() + Duration::from_secs(10);
        let mut expected = self.worker_count();
        while expected > 0 && Instant::now() < deadline {
            match self.manager_rx.recv_timeout(POLL) {
                Ok(Message::Stats {
                    slot,
                    role,
                    idle,
                    busy,
                }) => {
                    let index = match role {
                        WorkerRole::Explorer => slot,
                        WorkerRole::Server => slot - self.explorer_txs.len(),
                    };
                    self.stats.push(WorkerStats {
                        role,
                        index,
                        idle,
                        busy,
                    });
                    expected -= 1;
                }
                Ok(_) => {} // stale reports from an aborted pass
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
        self.stats.sort_by_key(|s| (s.role == WorkerRole::Server, s.index));
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// A [`PassExecutor`] backed by a worker runtime. Workers start on the
/// first pass (when the data is known) and persist across passes; dropping
/// the executor terminates them.
pub struct ParallelExecutor {
    explorers: usize,
    servers: usize,
    mode: AllocationMode,
    runtime: Option<Runtime>,
}

impl ParallelExecutor {
    /// Even allocation: one range per explorer, filtered and scored in one
    /// stage.
    pub fn even(explorers: usize) -> Self {
        ParallelExecutor {
            explorers,
            servers: 0,
            mode: AllocationMode::Even,
            runtime: None,
        }
    }

    /// Two-stage allocation without marginal servers.
    pub fn two_stage(explorers: usize) -> Self {
        ParallelExecutor {
            explorers,
            servers: 0,
            mode: AllocationMode::TwoStage,
            runtime: None,
        }
    }

    /// Two-stage allocation with `servers` marginal servers holding data
    /// shards.
    pub fn with_servers(explorers: usize, servers: usize) -> Self {
        ParallelExecutor {
            explorers,
            servers,
            mode: AllocationMode::TwoStage,
            runtime: None,
        }
    }

    pub fn explorers(&self) -> usize {
        self.explorers
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn mode(&self) -> AllocationMode {
        self.mode
    }

    /// Terminates the workers and returns their time accounting.
    pub fn shutdown(&mut self) -> Vec<WorkerStats> {
        match self.runtime.take() {
            Some(mut rt) => {
                rt.shutdown();
                rt.stats.clone()
            }
            None => Vec::new(),
        }
    }

    fn ensure_runtime(&mut self, ctx: &PassContext<'_>) -> &Runtime {
        let key = Arc::as_ptr(ctx.data) as usize;
        let stale = self
            .runtime
            .as_ref()
            .map(|rt| rt.data_key != key || rt.max_clique != ctx.config.max_clique())
            .unwrap_or(true);
        if stale {
            self.runtime = Some(Runtime::start(
                ctx.data,
                ctx.config.max_clique(),
                self.mode,
                self.explorers,
                self.servers,
            ));
        }
        self.runtime.as_ref().expect("runtime just ensured")
    }

    fn even_pass(&mut self, ctx: &PassContext<'_>) -> Result<PassOutcome, SearchError> {
        let space = candidate_space_for(ctx)?;
        let rt = self.ensure_runtime(ctx);
        let ranges = partition_candidates(space.len(), rt.explorer_txs.len());
        for (e, range) in ranges.into_iter().enumerate() {
            rt.send_explorer(
                e,
                Message::Job {
                    graph: ctx.graph.clone(),
                    level: ctx.level,
                    range,
                },
            )?;
        }
        let mut reports = Vec::with_capacity(rt.explorer_txs.len());
        let mut seen = vec![false; rt.explorer_txs.len()];
        while reports.len() < rt.explorer_txs.len() {
            match rt.recv()? {
                Message::Report {
                    slot,
                    best,
                    valid,
                    min_dh,
                } => {
                    if std::mem::replace(&mut seen[slot], true) {
                        return Err(SearchError::Runtime(format!(
                            "duplicate report from explorer {slot}"
                        )));
                    }
                    reports.push((best, valid, min_dh));
                }
                other => {
                    return Err(SearchError::Runtime(format!(
                        "unexpected message while collecting reports: {other:?}"
                    )));
                }
            }
        }
        let (best, valid, min_dh) = merge_reports(&reports);
        Ok(PassOutcome {
            best,
            generated: space.len(),
            valid,
            min_dh,
        })
    }

    fn two_stage_pass(&mut self, ctx: &PassContext<'_>) -> Result<PassOutcome, SearchError> {
        let space = candidate_space_for(ctx)?;
        let rt = self.ensure_runtime(ctx);
        let explorers = rt.explorer_txs.len();
        let servers = rt.server_txs.len();

        // Stage 1: validity filtering across explorers and servers alike.
        let ranges = partition_candidates(space.len(), explorers + servers);
        for (slot, range) in ranges.iter().enumerate() {
            let msg = Message::Job {
                graph: ctx.graph.clone(),
                level: ctx.level,
                range: range.clone(),
            };
            if slot < explorers {
                rt.send_explorer(slot, msg)?;
            } else {
                rt.send_server(slot - explorers, msg)?;
            }
        }
        let mut stage_one: Vec<Option<Vec<u64>>> = vec![None; explorers + servers];
        let mut pending = explorers + servers;
        while pending > 0 {
            match rt.recv()? {
                Message::StageOneReport { slot, valid } => {
                    if stage_one[slot].replace(valid).is_some() {
                        return Err(SearchError::Runtime(format!(
                            "duplicate stage-one report from worker {slot}"
                        )));
                    }
                    pending -= 1;
                }
                other => {
                    return Err(SearchError::Runtime(format!(
                        "unexpected message while collecting stage-one reports: {other:?}"
                    )));
                }
            }
        }
        // Slots were assigned contiguous ascending ranges, so concatenation
        // in slot order preserves global candidate order.
        let valid_indices: Vec<u64> = stage_one
            .into_iter()
            .flat_map(|v| v.expect("all stage-one reports collected"))
            .collect();
        let valid_total = valid_indices.len() as u64;

        // Stage 2: even repartition of the valid candidates to explorers.
        let chunk_ranges = partition_candidates(valid_total, explorers);
        for (e, r) in chunk_ranges.into_iter().enumerate() {
            let indices = valid_indices[r.start as usize..r.end as usize].to_vec();
            rt.send_explorer(e, Message::StageTwoJob { indices })?;
        }
        let mut reports = Vec::with_capacity(explorers);
        let mut seen = vec![false; explorers];
        while reports.len() < explorers {
            match rt.recv()? {
                Message::Report {
                    slot,
                    best,
                    valid: _,
                    min_dh,
                } => {
                    if std::mem::replace(&mut seen[slot], true) {
                        return Err(SearchError::Runtime(format!(
                            "duplicate report from explorer {slot}"
                        )));
                    }
                    reports.push((best, 0u64, min_dh));
                }
                other => {
                    return Err(SearchError::Runtime(format!(
                        "unexpected message while collecting stage-two reports: {other:?}"
                    )));
                }
            }
        }
        let (best, _, min_dh) = merge_reports(&reports);
        Ok(PassOutcome {
            best,
            generated: space.len(),
            valid: valid_total,
            min_dh,
        })
    }
}

impl PassExecutor for ParallelExecutor {
    fn run_pass(&mut self, ctx: &PassContext<'_>) -> Result<PassOutcome, SearchError> {
        let result = match self.mode {
            AllocationMode::Even => self.even_pass(ctx),
            AllocationMode::TwoStage => self.two_stage_pass(ctx),
        };
        if result.is_err() {
            // A failed pass leaves workers out of step; tear them down.
            self.runtime = None;
        }
        result
    }
}

/// One parallel pass with even allocation across `explorers` workers,
/// started and torn down for the call. Returns the adopted move and the
/// successor graph if the best decrement beats the threshold.
pub fn run_pass_even(
    graph: &Graph,
    level: usize,
    config: &SearchConfig,
    data: &Arc<FrequencyTable>,
    explorers: usize,
) -> Result<Option<(CandidateMove, Graph)>, SearchError> {
    let forest = JunctionForest::of(graph)?;
    let mut exec = ParallelExecutor::even(explorers);
    let ctx = PassContext {
        graph,
        forest: &forest,
        level,
        config,
        data,
    };
    let outcome = exec.run_pass(&ctx)?;
    adopt(graph, &outcome, config)
}

/// One parallel pass with two-stage allocation.
pub fn run_pass_two_stage(
    graph: &Graph,
    level: usize,
    config: &SearchConfig,
    data: &Arc<FrequencyTable>,
    explorers: usize,
) -> Result<Option<(CandidateMove, Graph)>, SearchError> {
    let forest = JunctionForest::of(graph)?;
    let mut exec = ParallelExecutor::two_stage(explorers);
    let ctx = PassContext {
        graph,
        forest: &forest,
        level,
        config,
        data,
    };
    let outcome = exec.run_pass(&ctx)?;
    adopt(graph, &outcome, config)
}

/// Answers one marginal request through a real server pipeline: the first
/// `shards.len() - 1` tables go to server threads chained in order, the
/// last is the local (explorer-side) shard. The result equals projecting
/// the undivided dataset.
pub fn serve_marginal(
    subset: &[usize],
    shards: &[FrequencyTable],
) -> Result<MarginalTable, RuntimeError> {
    let (local, server_shards) = shards
        .split_last()
        .ok_or_else(|| RuntimeError::Worker("need at least one shard".into()))?;
    if server_shards.is_empty() {
        return local
            .project(subset)
            .map_err(|e| RuntimeError::Worker(e.to_string()));
    }
    let (caller_tx, caller_rx) = channel::<Message>();
    let (sink_tx, _sink_rx) = channel::<Message>();
    let mut server_txs = Vec::new();
    let mut server_rxs = Vec::new();
    for _ in server_shards {
        let (tx, rx) = channel::<Message>();
        server_txs.push(tx);
        server_rxs.push(rx);
    }
    let mut handles = Vec::new();
    for (s, rx) in server_rxs.into_iter().enumerate() {
        let next = server_txs.get(s + 1).cloned();
        let manager_tx = sink_tx.clone();
        let explorer_txs = vec![caller_tx.clone()];
        handles.push(std::thread::spawn(move || {
            server_loop(s, s, rx, manager_tx, next, explorer_txs)
        }));
    }
    for (s, shard) in server_shards.iter().enumerate() {
        server_txs[s]
            .send(Message::Init {
                data: Arc::new(shard.clone()),
                max_clique: 2,
                mode: AllocationMode::TwoStage,
            })
            .map_err(|_| RuntimeError::Worker("server unavailable".into()))?;
    }
    let id = 1u64; // single request, explorer slot 0
    for tx in &server_txs {
        tx.send(Message::MarginalRequest {
            id,
            subset: subset.to_vec(),
        })
        .map_err(|_| RuntimeError::Worker("server unavailable".into()))?;
    }
    let local_marginal = local
        .project(subset)
        .map_err(|e| RuntimeError::Worker(e.to_string()))?;
    let piped = loop {
        match caller_rx.recv_timeout(MARGINAL_TIMEOUT) {
            Ok(Message::SubMarginal { id: got, table }) if got == id => break table,
            Ok(_) => continue,
            Err(_) => {
                return Err(RuntimeError::Worker(
                    "marginal request went unanswered".into(),
                ))
            }
        }
    };
    for tx in &server_txs {
        let _ = tx.send(Message::Terminate);
    }
    for h in handles {
        let _ = h.join();
    }
    piped
        .merge(&local_marginal)
        .map_err(|e| RuntimeError::Worker(e.to_string()))
}

/// Counter for globally distinct marginal request ids within a process.
static REQUEST_SALT: AtomicUsize = AtomicUsize::new(0);

struct PipelineMarginals<'a> {
    local: &'a FrequencyTable,
    servers: &'a [Sender<Message>],
    mailbox: &'a Receiver<Message>,
    next_id: u64,
}

impl<'a> PipelineMarginals<'a> {
    fn new(
        explorer: usize,
        local: &'a FrequencyTable,
        servers: &'a [Sender<Message>],
        mailbox: &'a Receiver<Message>,
    ) -> Self {
        let salt = REQUEST_SALT.fetch_add(1, Ordering::Relaxed) as u64;
        PipelineMarginals {
            local,
            servers,
            mailbox,
            // Explorer slot in the high bits routes the answer back; the
            // salt keeps ids fresh across passes and runtimes.
            next_id: (explorer as u64) << 48 | (salt & 0xffff) << 32,
        }
    }
}

impl MarginalSource for PipelineMarginals<'_> {
    fn marginal(&mut self, subset: &[usize]) -> Result<MarginalTable, ScoreError> {
        if self.servers.is_empty() {
            return Ok(self.local.project(subset)?);
        }
        self.next_id += 1;
        let id = self.next_id;
        for tx in self.servers {
            tx.send(Message::MarginalRequest {
                id,
                subset: subset.to_vec(),
            })
            .map_err(|_| ScoreError::Source("marginal server is gone".into()))?;
        }
        // Local sub-marginal overlaps with the pipeline's work.
        let local = self.local.project(subset)?;
        match self.mailbox.recv_timeout(MARGINAL_TIMEOUT) {
            Ok(Message::SubMarginal { id: got, table }) if got == id => Ok(table.merge(&local)?),
            Ok(other) => Err(ScoreError::Source(format!(
                "unexpected message while awaiting marginal: {other:?}"
            ))),
            Err(_) => Err(ScoreError::Source(
                "marginal request went unanswered".into(),
            )),
        }
    }
}

struct PassState {
    graph: Graph,
    space: CandidateSpace,
    forest: Option<JunctionForest>,
}

fn explorer_loop(
    slot: usize,
    mailbox: Receiver<Message>,
    manager: Sender<Message>,
    server_txs: Vec<Sender<Message>>,
) {
    let mut data: Option<Arc<FrequencyTable>> = None;
    let mut max_clique = 2usize;
    let mut mode = AllocationMode::Even;
    let mut state: Option<PassState> = None;
    let mut idle = Duration::ZERO;
    let mut busy = Duration::ZERO;
    loop {
        let wait = Instant::now();
        let Ok(msg) = mailbox.recv() else {
            return;
        };
        idle += wait.elapsed();
        let work = Instant::now();
        match msg {
            Message::Init {
                data: d,
                max_clique: mc,
                mode: m,
            } => {
                data = Some(d);
                max_clique = mc;
                mode = m;
            }
            Message::Job {
                graph,
                level,
                range,
            } => {
                let Some(data) = data.as_ref() else {
                    let _ = manager.send(Message::Failed {
                        slot,
                        message: "job before init".into(),
                    });
                    continue;
                };
                let result = (|| -> Result<(), SearchError> {
                    let space = CandidateSpace::new(&graph, level)?;
                    match mode {
                        AllocationMode::Even => {
                            let forest = JunctionForest::of(&graph)?;
                            let scan = scan_shard(
                                &graph,
                                &forest,
                                &space,
                                range.clone(),
                                max_clique,
                                slot,
                                data,
                                &server_txs,
                                &mailbox,
                            )?;
                            manager
                                .send(Message::Report {
                                    slot,
                                    best: scan.best,
                                    valid: scan.valid,
                                    min_dh: scan.min_dh,
                                })
                                .map_err(|_| SearchError::Runtime("manager gone".into()))?;
                        }
                        AllocationMode::TwoStage => {
                            let mut valid = Vec::new();
                            for index in range.clone() {
                                let links = space.link_set(index);
                                if candidate_is_valid(&graph, &links, max_clique)? {
                                    valid.push(index);
                                }
                            }
                            state = Some(PassState {
                                graph,
                                space,
                                forest: None,
                            });
                            manager
                                .send(Message::StageOneReport { slot, valid })
                                .map_err(|_| SearchError::Runtime("manager gone".into()))?;
                        }
                    }
                    Ok(())
                })();
                if let Err(e) = result {
                    let _ = manager.send(Message::Failed {
                        slot,
                        message: e.to_string(),
                    });
                }
            }
            Message::StageTwoJob { indices } => {
                let (Some(data), Some(st)) = (data.as_ref(), state.as_mut()) else {
                    let _ = manager.send(Message::Failed {
                        slot,
                        message: "stage-two job without a stage-one pass".into(),
                    });
                    continue;
                };
                let result = (|| -> Result<(), SearchError> {
                    if st.forest.is_none() {
                        st.forest = Some(JunctionForest::of(&st.graph)?);
                    }
                    let forest = st.forest.as_ref().unwrap();
                    let scan = scan_shard(
                        &st.graph,
                        forest,
                        &st.space,
                        indices.iter().copied(),
                        max_clique,
                        slot,
                        data,
                        &server_txs,
                        &mailbox,
                    )?;
                    manager
                        .send(Message::Report {
                            slot,
                            best: scan.best,
                            valid: scan.valid,
                            min_dh: scan.min_dh,
                        })
                        .map_err(|_| SearchError::Runtime("manager gone".into()))?;
                    Ok(())
                })();
                if let Err(e) = result {
                    let _ = manager.send(Message::Failed {
                        slot,
                        message: e.to_string(),
                    });
                }
            }
            Message::Terminate => {
                busy += work.elapsed();
                let _ = manager.send(Message::Stats {
                    slot,
                    role: WorkerRole::Explorer,
                    idle,
                    busy,
                });
                return;
            }
            other => {
                let _ = manager.send(Message::Failed {
                    slot,
                    message: format!("explorer got unexpected message: {other:?}"),
                });
            }
        }
        busy += work.elapsed();
    }
}

/// Scans candidates against either local data or the server pipeline,
/// depending on whether servers exist.
#[allow(clippy::too_many_arguments)]
fn scan_shard<I>(
    graph: &Graph,
    forest: &JunctionForest,
    space: &CandidateSpace,
    indices: I,
    max_clique: usize,
    slot: usize,
    data: &Arc<FrequencyTable>,
    server_txs: &[Sender<Message>],
    mailbox: &Receiver<Message>,
) -> Result<RangeScan, SearchError>
where
    I: IntoIterator<Item = u64>,
{
    if server_txs.is_empty() {
        let mut cache = EntropyCache::new(LocalMarginals::new(data));
        scan_candidates(graph, forest, space, indices, max_clique, &mut cache)
    } else {
        let source = PipelineMarginals::new(slot, data, server_txs, mailbox);
        let mut cache = EntropyCache::new(source);
        scan_candidates(graph, forest, space, indices, max_clique, &mut cache)
    }
}

fn server_loop(
    index: usize,
    slot: usize,
    mailbox: Receiver<Message>,
    manager: Sender<Message>,
    next: Option<Sender<Message>>,
    explorer_txs: Vec<Sender<Message>>,
) {
    let mut data: Option<Arc<FrequencyTable>> = None;
    let mut max_clique = 2usize;
    // Sub-marginals waiting for the predecessor's partial, and partials
    // waiting for the local sub-marginal, keyed by request id.
    let mut waiting_own: HashMap<u64, MarginalTable> = HashMap::new();
    let mut waiting_pred: HashMap<u64, MarginalTable> = HashMap::new();
    let mut idle = Duration::ZERO;
    let mut busy = Duration::ZERO;

    let forward = |id: u64, table: MarginalTable| {
        let msg = Message::SubMarginal { id, table };
        match &next {
            Some(tx) => {
                let _ = tx.send(msg);
            }
            None => {
                let explorer = (id >> 48) as usize;
                if let Some(tx) = explorer_txs.get(explorer) {
                    let _ = tx.send(msg);
                }
            }
        }
    };

    loop {
        let wait = Instant::now();
        let Ok(msg) = mailbox.recv() else {
            return;
        };
        idle += wait.elapsed();
        let work = Instant::now();
        match msg {
            Message::Init {
                data: d,
                max_clique: mc,
                ..
            } => {
                data = Some(d);
                max_clique = mc;
            }
            Message::Job {
                graph,
                level,
                range,
            } => {
                // Servers take part in stage-1 filtering only.
                let result = (|| -> Result<(), SearchError> {
                    let space = CandidateSpace::new(&graph, level)?;
                    let mut valid = Vec::new();
                    for index in range {
                        let links = space.link_set(index);
                        if candidate_is_valid(&graph, &links, max_clique)? {
                            valid.push(index);
                        }
                    }
                    manager
                        .send(Message::StageOneReport { slot, valid })
                        .map_err(|_| SearchError::Runtime("manager gone".into()))?;
                    Ok(())
                })();
                if let Err(e) = result {
                    let _ = manager.send(Message::Failed {
                        slot,
                        message: e.to_string(),
                    });
                }
            }
            Message::MarginalRequest { id, subset } => {
                let Some(data) = data.as_ref() else {
                    let _ = manager.send(Message::Failed {
                        slot,
                        message: "marginal request before init".into(),
                    });
                    continue;
                };
                match data.project(&subset) {
                    Ok(own) => {
                        if index == 0 {
                            forward(id, own);
                        } else if let Some(pred) = waiting_pred.remove(&id) {
                            match pred.merge(&own) {
                                Ok(sum) => forward(id, sum),
                                Err(e) => {
                                    let _ = manager.send(Message::Failed {
                                        slot,
                                        message: e.to_string(),
                                    });
                                }
                            }
                        } else {
                            waiting_own.insert(id, own);
                        }
                    }
                    Err(e) => {
                        let _ = manager.send(Message::Failed {
                            slot,
                            message: e.to_string(),
                        });
                    }
                }
            }
            Message::SubMarginal { id, table } => {
                if let Some(own) = waiting_own.remove(&id) {
                    match table.merge(&own) {
                        Ok(sum) => forward(id, sum),
                        Err(e) => {
                            let _ = manager.send(Message::Failed {
                                slot,
                                message: e.to_string(),
                            });
                        }
                    }
                } else {
                    waiting_pred.insert(id, table);
                }
            }
            Message::Terminate => {
                busy += work.elapsed();
                let _ = manager.send(Message::Stats {
                    slot,
                    role: WorkerRole::Server,
                    idle,
                    busy,
                });
                return;
            }
            other => {
                let _ = manager.send(Message::Failed {
                    slot,
                    message: format!("server got unexpected message: {other:?}"),
                });
            }
        }
        busy += work.elapsed();
    }
}
