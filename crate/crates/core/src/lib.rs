//! Simulation and fluid-limit toolkit for `ell`-vertex random graph
//! processes (Achlioptas processes and their relatives).
//!
//! * [`forest`]: component structure of the evolving graph.
//! * [`rules`]: edge-selection rules and their classification.
//! * [`engine`]: single runs, ensembles and trajectory output.
//! * [`observables`]: transition windows, critical-time estimates and
//!   second-giant statistics over trajectories.
//! * [`ode`]: the coagulation-type ODE limit for size rules and the
//!   classical random-graph closed forms.
//! * [`experiments`]: Monte Carlo checks of the process's structural
//!   properties at finite `n`.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod forest;
pub mod observables;
pub mod ode;
pub mod output;
pub mod rules;

pub use error::{Error, Result};
