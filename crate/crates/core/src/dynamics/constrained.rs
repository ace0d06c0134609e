//! Closed-chain coupling of the arms and the payload.
//!
//! Unknowns are the stacked joint accelerations, the payload acceleration and
//! the wrenches `F_i` the payload exerts on each end-effector. The grasp is
//! enforced at acceleration level with Baumgarte feedback on the pose and
//! velocity residuals.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::grasp::{planar_grasp_block, world_offsets};
use super::model::{LoadModel, RobotModel};
use super::rigid_body::{augmented_matrices, RigidBodyTerms};
use crate::error::{CrmError, Result};
use crate::kinematics::{ee_position, jacobian, jacobian_dot_qdot, normalize_angle, PlanarPose};

/// Arms plus payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub robots: Vec<RobotModel>,
    pub load: LoadModel,
}

impl Plant {
    pub fn arms(&self) -> usize {
        self.robots.len()
    }

    pub fn gravity(&self) -> Vector2<f64> {
        self.load.gravity_vector()
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.robots {
            r.validate()?;
        }
        self.load.validate()?;
        if self.load.grasp.len() != self.robots.len() {
            return Err(CrmError::Config(format!(
                "{} arms but {} grasp offsets",
                self.robots.len(),
                self.load.grasp.len()
            )));
        }
        Ok(())
    }
}

/// Joint and payload configuration at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub q: Vec<Vector3<f64>>,
    pub qd: Vec<Vector3<f64>>,
    pub load_pose: PlanarPose,
    /// Payload twist (ẋ, ẏ, ω).
    pub load_vel: Vector3<f64>,
    pub t: f64,
}

/// Baumgarte gains (s⁻¹): `Φ̈ + 2αΦ̇ + β²Φ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baumgarte {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Baumgarte {
    fn default() -> Self {
        Self { alpha: 20.0, beta: 20.0 }
    }
}

/// Per-arm quantities evaluated once per integrator stage.
#[derive(Clone, Copy, Debug)]
pub struct ArmTerms {
    /// Augmented `D`, `C`, `G`.
    pub dynamics: RigidBodyTerms,
    pub jacobian: Matrix3<f64>,
    pub jdot_qdot: Vector3<f64>,
    pub ee_position: Vector2<f64>,
    /// Unwrapped end-effector orientation.
    pub ee_phi: f64,
}

impl ArmTerms {
    pub fn new(robot: &RobotModel, q: &Vector3<f64>, qd: &Vector3<f64>, gravity: &Vector2<f64>) -> Self {
        let (p, phi) = ee_position(robot, q);
        Self {
            dynamics: augmented_matrices(robot, q, qd, gravity),
            jacobian: jacobian(robot, q),
            jdot_qdot: jacobian_dot_qdot(robot, q, qd),
            ee_position: p,
            ee_phi: phi,
        }
    }
}

/// Joint torque that depends affinely on the contact wrench: `T = t0 − H·F`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorqueLaw {
    pub offset: Vector3<f64>,
    pub coupling: Matrix3<f64>,
}

impl TorqueLaw {
    pub fn fixed(torque: Vector3<f64>) -> Self {
        Self { offset: torque, coupling: Matrix3::zeros() }
    }

    pub fn eval(&self, wrench: &Vector3<f64>) -> Vector3<f64> {
        self.offset - self.coupling * wrench
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedSolution {
    pub qdd: Vec<Vector3<f64>>,
    pub load_acc: Vector3<f64>,
    /// Wrench applied by the payload on each end-effector (world frame).
    pub wrenches: Vec<Vector3<f64>>,
}

/// Pose and velocity residual of grasp `i`: end-effector versus the grasp
/// point implied by the payload state.
pub fn grasp_residual(
    terms: &ArmTerms,
    qd: &Vector3<f64>,
    load: &LoadModel,
    load_pose: &PlanarPose,
    load_vel: &Vector3<f64>,
    i: usize,
) -> (Vector3<f64>, Vector3<f64>) {
    let rho = world_offsets(&load.grasp, load_pose.phi)[i];
    let target = load_pose.position() - rho;
    let dp = terms.ee_position - target;
    let dphi = normalize_angle(terms.ee_phi - load_pose.phi - load.grasp.orientation_offsets[i]);
    let a = planar_grasp_block(&rho).transpose();
    let vel = terms.jacobian * qd - a * load_vel;
    (Vector3::new(dp.x, dp.y, dphi), vel)
}

/// Solves the coupled arm/payload/constraint system at `state`.
pub fn solve_constrained(
    plant: &Plant,
    state: &SystemState,
    terms: &[ArmTerms],
    laws: &[TorqueLaw],
    baumgarte: Baumgarte,
) -> Result<ConstrainedSolution> {
    let n = plant.arms();
    debug_assert_eq!(terms.len(), n);
    debug_assert_eq!(laws.len(), n);
    let dim = 6 * n + 3;
    let lam0 = 3 * n + 3;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);

    let load = &plant.load;
    let rhos = world_offsets(&load.grasp, state.load_pose.phi);
    let omega = state.load_vel.z;
    let g = load.gravity_vector();

    k[(3 * n, 3 * n)] = load.mass;
    k[(3 * n + 1, 3 * n + 1)] = load.mass;
    k[(3 * n + 2, 3 * n + 2)] = load.inertia;
    rhs[3 * n] = load.mass * g.x;
    rhs[3 * n + 1] = load.mass * g.y;

    for i in 0..n {
        let t = &terms[i];
        let r = 3 * i;
        let c = lam0 + 3 * i;
        let block = planar_grasp_block(&rhos[i]);

        k.fixed_view_mut::<3, 3>(r, r).copy_from(&t.dynamics.d);
        k.fixed_view_mut::<3, 3>(r, c)
            .copy_from(&(laws[i].coupling - t.jacobian.transpose()));
        let tr = laws[i].offset - t.dynamics.c * state.qd[i] - t.dynamics.g;
        rhs.fixed_rows_mut::<3>(r).copy_from(&tr);

        k.fixed_view_mut::<3, 3>(3 * n, c).copy_from(&block);

        k.fixed_view_mut::<3, 3>(c, r).copy_from(&t.jacobian);
        k.fixed_view_mut::<3, 3>(c, 3 * n).copy_from(&(-block.transpose()));
        let (phi, phid) =
            grasp_residual(t, &state.qd[i], load, &state.load_pose, &state.load_vel, i);
        let centripetal = Vector3::new(rhos[i].x, rhos[i].y, 0.0) * (omega * omega);
        let cr = -t.jdot_qdot + centripetal
            - phid * (2.0 * baumgarte.alpha)
            - phi * (baumgarte.beta * baumgarte.beta);
        rhs.fixed_rows_mut::<3>(c).copy_from(&cr);
    }

    let x = k.lu().solve(&rhs).ok_or(CrmError::SingularConstraintSystem)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(CrmError::SingularConstraintSystem);
    }
    Ok(ConstrainedSolution {
        qdd: (0..n).map(|i| x.fixed_rows::<3>(3 * i).into_owned()).collect(),
        load_acc: x.fixed_rows::<3>(3 * n).into_owned(),
        wrenches: (0..n).map(|i| x.fixed_rows::<3>(lam0 + 3 * i).into_owned()).collect(),
    })
}

/// Contact wrenches for prescribed joint torques.
pub fn constraint_forces(
    plant: &Plant,
    state: &SystemState,
    torques: &[Vector3<f64>],
    baumgarte: Baumgarte,
) -> Result<Vec<Vector3<f64>>> {
    let g = plant.gravity();
    let terms: Vec<_> = plant
        .robots
        .iter()
        .zip(state.q.iter().zip(&state.qd))
        .map(|(r, (q, qd))| ArmTerms::new(r, q, qd, &g))
        .collect();
    let laws: Vec<_> = torques.iter().map(|t| TorqueLaw::fixed(*t)).collect();
    Ok(solve_constrained(plant, state, &terms, &laws, baumgarte)?.wrenches)
}
