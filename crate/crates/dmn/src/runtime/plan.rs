//! Worker-partition planning and interconnect estimates.
//!
//! When a dataset outgrows one worker's memory, the workers split into `n`
//! explorers and `m` marginal servers. A server answering `n` explorers must
//! process its shard `n` times as fast as an explorer handles its own work,
//! which with per-megabyte scan cost and a per-variable overhead coefficient
//! `alpha` gives
//!
//! ```text
//! n * d_m = alpha * N + d_e        (server keeps up)
//! d_total = m * d_m + d_e          (shards partition the data)
//! ```
//!
//! whose solution over `n + m = workers` is implemented here. The topology
//! and message-time estimators describe the interconnect: max hop counts for
//! a square mesh and a ternary tree rooted at the manager, plus a bilinear
//! cost model over a measured latency grid.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("infeasible plan: {0}")]
    Infeasible(String),
}

/// Worker-role assignment with per-role data sizes, all sizes in MB.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimePlan {
    pub explorers: usize,
    pub servers: usize,
    /// Data replicated at each explorer.
    pub explorer_data_mb: f64,
    /// Data shard held by each server (0 when no servers are needed).
    pub server_data_mb: f64,
    /// Cost ratio `alpha` the plan was computed with.
    pub alpha: f64,
    /// Local-memory budget the explorer shard was held to.
    pub max_local_mb: f64,
}

/// Splits `workers` processors (the manager not included) into explorers
/// and marginal servers for a dataset of `data_mb` over `variables`
/// variables, with `explorer_mb` of data replicated per explorer.
///
/// When the dataset fits in explorer memory there are no servers. Otherwise
/// the exact solution is rounded in the servers' favor (explorer count is
/// the integer part), keeping the pipeline able to feed every explorer.
pub fn plan_partition(
    data_mb: f64,
    variables: usize,
    workers: usize,
    alpha: f64,
    explorer_mb: f64,
) -> Result<RuntimePlan, PlanError> {
    if !(data_mb.is_finite() && data_mb > 0.0) {
        return Err(PlanError::Infeasible(format!(
            "dataset size must be positive, got {data_mb}"
        )));
    }
    if !(explorer_mb.is_finite() && explorer_mb > 0.0) {
        return Err(PlanError::Infeasible(format!(
            "explorer data size must be positive, got {explorer_mb}"
        )));
    }
    if explorer_mb > data_mb {
        return Err(PlanError::Infeasible(format!(
            "explorer data ({explorer_mb} MB) exceeds the dataset ({data_mb} MB)"
        )));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(PlanError::Infeasible(format!("bad alpha {alpha}")));
    }
    if workers < 2 {
        return Err(PlanError::Infeasible(format!(
            "need at least two workers, got {workers}"
        )));
    }

    if data_mb <= explorer_mb {
        return Ok(RuntimePlan {
            explorers: workers,
            servers: 0,
            explorer_data_mb: data_mb,
            server_data_mb: 0.0,
            alpha,
            max_local_mb: explorer_mb,
        });
    }

    let overhead = alpha * variables as f64;
    let n_exact = workers as f64 * (overhead + explorer_mb) / (overhead + data_mb);
    let explorers = (n_exact.floor() as usize).clamp(1, workers - 1);
    let servers = workers - explorers;
    let server_data_mb = (data_mb - explorer_mb) / servers as f64;
    Ok(RuntimePlan {
        explorers,
        servers,
        explorer_data_mb: explorer_mb,
        server_data_mb,
        alpha,
        max_local_mb: explorer_mb,
    })
}

/// Interconnect hop bounds for `processors` workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopologyEstimate {
    pub processors: usize,
    /// Max hops between two processors in a square 2D mesh,
    /// `2 (sqrt(W) - 1)`; non-square counts use the nearest square side.
    pub mesh_max_hops: u32,
    /// Max hops from the root (manager) to a leaf in a ternary tree,
    /// the smallest `k` with `3^(k+1) >= 2W + 1`.
    pub tree_max_hops: u32,
}

impl TopologyEstimate {
    /// Bound for explorer-to-server traffic: through the root, twice the
    /// tree depth.
    pub fn explorer_server_hops(&self) -> u32 {
        2 * self.tree_max_hops
    }
}

pub fn topology_estimate(processors: usize) -> TopologyEstimate {
    let side = (processors as f64).sqrt().round().max(1.0) as u32;
    let mesh_max_hops = 2 * (side - 1);
    let target = 2 * processors as u128 + 1;
    let mut power: u128 = 1;
    let mut k = 0u32;
    while power < target {
        power *= 3;
        k += 1;
    }
    let tree_max_hops = k.saturating_sub(1);
    TopologyEstimate {
        processors,
        mesh_max_hops,
        tree_max_hops,
    }
}

const GRID_LENGTHS: [f64; 4] = [256.0, 1024.0, 4096.0, 16384.0];
const GRID_HOPS: [f64; 6] = [1.0, 2.0, 3.0, 7.0, 15.0, 31.0];
/// Measured one-way latencies in seconds, rows by hop count, columns by
/// message length.
const GRID_TIMES: [[f64; 4]; 6] = [
    [0.015, 0.016, 0.023, 0.096],
    [0.016, 0.020, 0.035, 0.129],
    [0.017, 0.022, 0.044, 0.125],
    [0.021, 0.032, 0.081, 0.165],
    [0.030, 0.057, 0.160, 0.241],
    [0.051, 0.105, 0.328, 0.409],
];

/// Message-passing time for a message of `length_bytes` crossing `hops`
/// links: bilinear interpolation over the measured grid, exact at grid
/// points, clamped outside it.
pub fn estimate_message_time(length_bytes: u64, hops: u32) -> f64 {
    let x = (length_bytes as f64).clamp(GRID_LENGTHS[0], GRID_LENGTHS[3]);
    let y = (hops as f64).clamp(GRID_HOPS[0], GRID_HOPS[5]);
    let xi = GRID_LENGTHS.iter().rposition(|&l| l <= x).unwrap().min(2);
    let yi = GRID_HOPS.iter().rposition(|&h| h <= y).unwrap().min(4);
    let tx = (x - GRID_LENGTHS[xi]) / (GRID_LENGTHS[xi + 1] - GRID_LENGTHS[xi]);
    let ty = (y - GRID_HOPS[yi]) / (GRID_HOPS[yi + 1] - GRID_HOPS[yi]);
    let top = GRID_TIMES[yi][xi] * (1.0 - tx) + GRID_TIMES[yi][xi + 1] * tx;
    let bottom = GRID_TIMES[yi + 1][xi] * (1.0 - tx) + GRID_TIMES[yi + 1][xi + 1] * tx;
    top * (1.0 - ty) + bottom * ty
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_domain_plan() {
        let plan = plan_partition(100.0, 1000, 30, 0.005, 20.0).unwrap();
        assert_eq!(plan.explorers, 7);
        assert_eq!(plan.servers, 23);
        assert!((plan.server_data_mb - 3.48).abs() < 0.01);
        // Shards reproduce the dataset.
        let rebuilt = plan.servers as f64 * plan.server_data_mb + plan.explorer_data_mb;
        assert!((rebuilt - 100.0).abs() < 1e-9);
    }

    #[test]
    fn small_domain_plan() {
        let plan = plan_partition(0.24, 37, 8, 0.003, 0.08).unwrap();
        assert_eq!(plan.explorers, 4);
        assert_eq!(plan.servers, 4);
        assert!((plan.server_data_mb - 0.04).abs() < 0.005);
    }

    #[test]
    fn dataset_fitting_in_memory_needs_no_servers() {
        let plan = plan_partition(10.0, 50, 4, 0.005, 10.0).unwrap();
        assert_eq!(plan.servers, 0);
        assert_eq!(plan.explorers, 4);
        assert_eq!(plan.explorer_data_mb, 10.0);
    }

    #[test]
    fn infeasible_inputs_are_rejected() {
        assert!(plan_partition(1.0, 10, 4, 0.005, 2.0).is_err());
        assert!(plan_partition(1.0, 10, 1, 0.005, 0.5).is_err());
        assert!(plan_partition(-1.0, 10, 4, 0.005, 0.5).is_err());
    }

    #[test]
    fn plan_invariants_on_a_sweep() {
        let mut rng = crate::rng::CounterRng::new(7);
        for _ in 0..200 {
            let data = 1.0 + rng.next_f64() * 500.0;
            let de = data * (0.05 + 0.9 * rng.next_f64());
            let workers = 2 + rng.next_below(60) as usize;
            let vars = 10 + rng.next_below(2000) as usize;
            let alpha = 0.003 + rng.next_f64() * 0.003;
            let plan = plan_partition(data, vars, workers, alpha, de).unwrap();
            assert_eq!(plan.explorers + plan.servers, workers);
            assert!(plan.explorers >= 1);
            assert!(plan.explorer_data_mb <= plan.max_local_mb + 1e-12);
            let rebuilt = plan.servers as f64 * plan.server_data_mb + plan.explorer_data_mb;
            assert!((rebuilt - data).abs() < 1e-6 * data);
        }
    }

    #[test]
    fn topology_hop_counts() {
        let t = topology_estimate(25);
        assert_eq!(t.mesh_max_hops, 8);
        assert_eq!(t.tree_max_hops, 3);
        assert_eq!(t.explorer_server_hops(), 6);
        let t = topology_estimate(1);
        assert_eq!(t.mesh_max_hops, 0);
        assert_eq!(t.tree_max_hops, 0);
        let t = topology_estimate(64);
        assert_eq!(t.mesh_max_hops, 14);
        assert_eq!(t.tree_max_hops, 4);
        // Exact powers: 3 + 9 + 27 = 39 processors fill a depth-3 tree.
        assert_eq!(topology_estimate(4).tree_max_hops, 1);
        assert_eq!(topology_estimate(13).tree_max_hops, 2);
        assert_eq!(topology_estimate(40).tree_max_hops, 3);
    }

    #[test]
    fn message_time_reproduces_every_grid_point() {
        let lengths = [256u64, 1024, 4096, 16384];
        let hops = [1u32, 2, 3, 7, 15, 31];
        for (i, &h) in hops.iter().enumerate() {
            for (j, &l) in lengths.iter().enumerate() {
                assert_eq!(estimate_message_time(l, h), GRID_TIMES[i][j], "({l}, {h})");
            }
        }
    }

    #[test]
    fn message_time_interpolates_and_clamps() {
        let t = estimate_message_time(640, 1);
        assert!(t > 0.015 && t < 0.016, "t = {t}");
        // Monotone along the hop axis at fixed length here.
        assert!(estimate_message_time(1024, 5) > estimate_message_time(1024, 2));
        // Clamped extrapolation.
        assert_eq!(estimate_message_time(100, 1), 0.015);
        assert_eq!(estimate_message_time(1 << 20, 40), 0.409);
    }
}
