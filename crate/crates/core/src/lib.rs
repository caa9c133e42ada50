//! Partitioned scheduling of dual-criticality sporadic tasks on identical
//! multiprocessors.
//!
//! The crate provides the task model, three uniprocessor schedulability
//! tests (EDF-VD, AMC response-time analysis and a demand-bound test with
//! virtual-deadline tuning), the partitioning strategies built on top of
//! them, a random task-set generator, a runtime simulator used to search
//! for counterexamples, and an experiment driver producing acceptance-ratio
//! tables.

pub mod amc;
pub mod ecdf;
pub mod edfvd;
pub mod error;
pub mod experiments;
pub mod generator;
pub mod partition;
pub mod simulator;
pub mod task;

pub use error::Error;
pub use experiments::{
    run_experiment, weighted_acceptance_ratio, Cell, ExperimentConfig, ExperimentRecord, ExperimentResults, WarRecord,
};
pub use generator::{generate_taskset, u_b, GeneratorConfig};
pub use partition::{partition, Outcome, Partition, Partitioner, ProcessorBin, Strategy, TestKind};
pub use simulator::{falsify, simulate, FalsifyOutcome, Runtime, Scenario, SimReport};
pub use task::{Criticality, DeadlineModel, Task, TaskSet, Time, Utilizations};
