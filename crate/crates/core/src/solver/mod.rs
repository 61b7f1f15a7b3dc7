//! HJB/FPK equilibrium solver.

pub mod control;
pub mod fixed_point;
pub mod fpk;
pub mod grid;
pub mod hjb;
pub mod problem;

pub use control::{control_cap, hamiltonian, optimal_control, optimal_control_with};
pub use fixed_point::{initial_density, solve_mfg, solve_mfg_from, FileSolution, MfgSolution};
pub use fpk::fpk_forward;
pub use grid::{l1_distance, DensityField, Field, Grid, PolicyField, ValueField};
pub use hjb::hjb_backward;
pub use problem::{FileProblem, MeanFieldStats};
