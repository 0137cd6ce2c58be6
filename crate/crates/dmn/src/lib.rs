pub mod data;
pub mod graph;
pub mod model;
pub mod rng;
pub mod runtime;
pub mod score;
pub mod search;

pub use data::{FrequencyTable, MarginalTable, Scheme};
pub use graph::{Graph, JunctionForest, LinkSet};
pub use score::Threshold;
pub use search::{learn, SearchConfig, SearchTrace, SequentialExecutor};
