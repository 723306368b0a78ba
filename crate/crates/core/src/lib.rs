//! Mesh-free value iteration for infinite-horizon optimal control.
//!
//! The value function lives on scattered nodes and is extended between them
//! by a Shepard approximant built from a compactly supported Wendland kernel.
//! Meshes can follow the controlled dynamics, the kernel width is chosen by
//! minimising the Bellman residual, and the result drives closed-loop
//! feedback simulations.

pub mod error;
pub mod experiments;
pub mod feedback;
pub mod interp;
pub mod io;
pub mod kernel;
pub mod mesh;
pub mod par;
pub mod problems;
pub mod shepard;
pub mod solver;
pub mod tuner;

pub use error::{Error, Result};
pub use kernel::{RadialKernel, WendlandKernel};
pub use mesh::{BoxDomain, MeshRecipe, ScatteredMesh};
pub use problems::{ControlProblem, Eikonal};
pub use shepard::ShepardModel;
pub use solver::{BellmanOperator, SolverConfig, Transitions, ValueFunction};
