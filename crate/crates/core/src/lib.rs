//! Data-driven GPU frequency scaling.
//!
//! The crate covers the whole offline/online loop:
//!
//! * [`trace`] loads, validates and normalizes profiling traces and can
//!   synthesize them from a ground-truth oracle.
//! * [`predict`] fits energy and execution-time regressors over
//!   (profile features ⊕ candidate frequency configuration).
//! * [`matcher`] clusters known applications and matches an unseen job's
//!   default-clock profile to its closest known application.
//! * [`scheduler`] holds the frequency-selection policies.
//! * [`simulator`] replays a job stream through a discrete-event model of
//!   one or more devices.
//!
//! Learners and policies are trait objects looked up by name through
//! [`predict::LearnerRegistry`] and [`scheduler::PolicyRegistry`].

pub mod error;
pub mod matcher;
pub mod predict;
pub mod rng;
pub mod scheduler;
pub mod simulator;
pub mod trace;

pub use error::{Error, Result};
