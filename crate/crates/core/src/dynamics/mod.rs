//! Arm and payload dynamics.

pub mod constrained;
pub mod grasp;
pub mod model;
pub mod rigid_body;

pub use constrained::{
    constraint_forces, grasp_residual, solve_constrained, ArmTerms, Baumgarte,
    ConstrainedSolution, Plant, SystemState, TorqueLaw,
};
pub use grasp::{
    decompose_forces, load_dynamics_planar, load_dynamics_spatial, planar_grasp_matrix,
    spatial_grasp_matrix, ForceDecomposition,
};
pub use model::{ActuatorParams, LoadModel, RobotModel};
pub use rigid_body::{
    augment, augmented_matrices, mechanical_energy, potential_energy, rigid_body_matrices,
    RigidBodyTerms,
};
