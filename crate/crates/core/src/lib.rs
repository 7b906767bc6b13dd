//! Gradient temporal-difference learning as a stochastic convex-concave
//! saddle-point problem.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`]: finite MDPs, policies, seeded transition sampling and exact
//!   policy-evaluation solves.
//! * [`features`]: linear feature maps and Bellman-error basis construction.
//! * [`objectives`]: exact `A`, `b`, `C`, the NEU/MSPBE/MSBE objectives, the
//!   saddle Lagrangian with its error function, and the closed-form
//!   finite-sample bounds.
//! * [`learners`]: TD(0), GTD, GTD2, TDC, the mirror-prox variants, and the
//!   trace-based Greedy-GQ control loop.
//! * [`domains`]: Baird's star, the 50-state chain and the battery arbitrage
//!   MDP.
//! * [`harness`]: seeded multi-run experiments, steady-state summaries and
//!   CSV artifacts.

pub mod domains;
pub mod features;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod mdp;
pub mod objectives;

pub use domains::{BatteryConfig, BatteryDomain, Domain, DomainName};
pub use features::{FeatureError, FeatureMap, FeatureMatrix};
pub use harness::{ExperimentConfig, HarnessError, RunResult};
pub use learners::{Algorithm, Learner, LearnerConfig, SaddleIterate, Schedule, TraceState};
pub use mdp::{FiniteMdp, MdpError, Policy, Sample, SampleStream, SamplingMode};
pub use objectives::{BoundInputs, ExactQuantities, MetricMode, PolicyEvaluation};
