//! Transport-free core of farmbench. The GA and its sombrero fitness live
//! here next to the two wire codecs and the report types.

pub mod codec;
pub mod ga;
pub mod genome;
pub mod report;
pub mod stats;

pub use codec::{Fault, Method, Protocol, RpcRequest, RpcResponse};
pub use ga::{run_ga, Evaluator, GaConfig, GaError, GaResult, Individual, LocalEvaluator, MutationScheme};
pub use genome::{decode, sombrero, Fitness, Genome, GenomeError, Phenotype, SearchDomain};
pub use report::{BenchReport, Environment, Experiment, Format, Workload};
pub use stats::{mean_stddev, TrialStats};
