//! Distributed model predictive control with adaptive, possibly asymmetric,
//! ellipsoidal terminal sets.
//!
//! The crate covers the offline synthesis of structured terminal costs and
//! gains, the online optimal control problems for the origin-centred
//! ([`Scheme::Adap`]), asymmetric ([`Scheme::Asym`]) and relaxed asymmetric
//! ([`Scheme::Rlxd`]) terminal sets, a consensus ADMM solve mode and a
//! closed-loop simulation harness. All convex programs are solved by the
//! built-in [`sdp`] layer.

pub mod admm;
pub mod error;
pub mod linalg;
pub mod model;
pub mod ocp;
pub mod offline;
pub mod scenario;
pub mod sdp;
pub mod sim;
pub mod terminal;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    assemble_global, build_selection_maps, lift_block_diagonal, neighbor_embed,
    DistributedSystem, GlobalModel, SelectionMaps, SubsystemModel, Topology,
};
pub use ocp::{solve_ocp, OcpOptions, OcpOutcome, OcpSolution, Scheme};
pub use offline::{synthesize, OfflineOptions, TerminalIngredients};
pub use scenario::{benchmark_initial_states, benchmark_system, Scenario};
pub use sdp::{SolveStatus, SolverOptions};
pub use sim::SolveMode;
