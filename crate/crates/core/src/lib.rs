//! Tabular episodic upside-down RL (eUDRL / GCSL) on command extensions of
//! finite MDPs.
//!
//! The core tables are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which the CLI uses throughout.

pub mod analysis;
pub mod command;
pub mod demo;
pub mod dp;
pub mod envspec;
pub mod error;
pub mod iteration;
pub mod mdp;
pub mod policy;
pub mod scalar;
pub mod segment;

pub use analysis::{check_lemma, metric_state_set, rmsve, sup_dist, LemmaCertificate, MetricsEvaluator, MetricsRow};
pub use command::{build_ce, ce_reward, random_ce, CeState, CommandExtension, GoalMap};
pub use demo::{build_demo, fixed_point, DemoParams};
pub use dp::{evaluate, goal_reach, j_objective, optimal, ArgmaxSets, ValueTables};
pub use envspec::EnvironmentSpec;
pub use error::{Error, Result};
pub use iteration::{
    average_policy, average_q, exact_step, fit_segments, run, run_detailed, sampled_step, sampled_step_with_segments, AveragePolicy, AverageQ, RunConfig,
    SegmentStarts, StepMode,
};
pub use mdp::{random_mdp, BaseMdp, Violation};
pub use policy::Policy;
pub use scalar::Scalar;
pub use segment::{
    write_segment_dump, sample_segment, sample_segment_from_batch, sample_segments, sample_trajectory, start_weights, visitation, BatchConfig, Segment,
    StartWeights, Trajectory, TrajectorySampler, VisitationTensor,
};

pub type BaseMdpF64 = mdp::BaseMdp<f64>;
pub type CommandExtensionF64 = command::CommandExtension<f64>;
pub type PolicyF64 = policy::Policy<f64>;
pub type ValueTablesF64 = dp::ValueTables<f64>;
pub type VisitationTensorF64 = segment::VisitationTensor<f64>;
pub type MetricsRowF64 = analysis::MetricsRow<f64>;
pub type LemmaCertificateF64 = analysis::LemmaCertificate<f64>;

pub type BaseMdpF32 = mdp::BaseMdp<f32>;
pub type CommandExtensionF32 = command::CommandExtension<f32>;
pub type PolicyF32 = policy::Policy<f32>;
pub type ValueTablesF32 = dp::ValueTables<f32>;
