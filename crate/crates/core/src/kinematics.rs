//! Planar 3R kinematics, rest-to-rest reference trajectories and closed-chain
//! grasp residuals.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::RobotModel;
use crate::error::{CrmError, Result};

/// Smallest singular value of the arm Jacobian below which a reference is refused.
pub const SINGULARITY_THRESHOLD: f64 = 1e-4;

/// Wraps an angle to (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Shifts `a` by a multiple of 2π so it lies within π of `reference`.
pub fn unwrap_angle(reference: f64, a: f64) -> f64 {
    reference + normalize_angle(a - reference)
}

/// 2D rotation of `v` by `angle`.
pub fn rotate(angle: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Unit vector at `angle` and its counter-clockwise perpendicular.
#[inline]
fn unit(angle: f64) -> (Vector2<f64>, Vector2<f64>) {
    let (s, c) = angle.sin_cos();
    (Vector2::new(c, s), Vector2::new(-s, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    /// Orientation in the world frame, kept in (−π, π].
    pub phi: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self { x, y, phi: normalize_angle(phi) }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.phi)
    }
}

/// Pose with first and second time derivatives, ordered (ẋ, ẏ, ω).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub pose: PlanarPose,
    pub vel: Vector3<f64>,
    pub acc: Vector3<f64>,
}

impl TrajectoryPoint {
    pub fn at_rest(pose: PlanarPose) -> Self {
        Self { pose, vel: Vector3::zeros(), acc: Vector3::zeros() }
    }
}

/// Where each arm holds the payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspGeometry {
    /// Vector from each grasp point to the payload COM, in the payload frame (m).
    pub offsets: Vec<[f64; 2]>,
    /// End-effector orientation relative to the payload frame for each arm (rad).
    /// Pairwise differences are the constant relative orientations δR.
    pub orientation_offsets: Vec<f64>,
}

impl GraspGeometry {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offset(&self, i: usize) -> Vector2<f64> {
        Vector2::new(self.offsets[i][0], self.offsets[i][1])
    }

    /// Relative orientation δR between end-effectors `i` and `k`.
    pub fn delta_r(&self, i: usize, k: usize) -> f64 {
        normalize_angle(self.orientation_offsets[i] - self.orientation_offsets[k])
    }

    pub fn validate(&self) -> Result<()> {
        if self.offsets.len() < 2 {
            return Err(CrmError::Config("at least two grasps are required".into()));
        }
        if self.orientation_offsets.len() != self.offsets.len() {
            return Err(CrmError::Config(
                "grasp orientation offsets must match the number of grasp offsets".into(),
            ));
        }
        let finite = self.offsets.iter().flatten().all(|v| v.is_finite())
            && self.orientation_offsets.iter().all(|v| v.is_finite());
        if !finite {
            return Err(CrmError::Config("grasp geometry must be finite".into()));
        }
        Ok(())
    }
}

/// Quintic rest-to-rest blend `s(τ) = 10τ³ − 15τ⁴ + 6τ⁵` and its derivatives in τ.
fn quintic_blend(tau: f64) -> (f64, f64, f64) {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let s = t3 * (10.0 - 15.0 * tau + 6.0 * t2);
    let ds = 30.0 * t2 * (1.0 - 2.0 * tau + t2);
    let dds = 60.0 * tau * (1.0 - 3.0 * tau + 2.0 * t2);
    (s, ds, dds)
}

/// Rest-to-rest quintic interpolation from `p0` to `pf` over `duration` seconds.
///
/// The orientation follows the shortest angular path between the two poses.
pub fn quintic_trajectory(
    p0: &PlanarPose,
    pf: &PlanarPose,
    duration: f64,
    t: f64,
) -> Result<TrajectoryPoint> {
    if !(duration > 0.0) {
        return Err(CrmError::Domain(format!("trajectory duration must be positive, got {duration}")));
    }
    if !(0.0..=duration).contains(&t) {
        return Err(CrmError::Domain(format!("t = {t} outside [0, {duration}]")));
    }
    if t == duration {
        return Ok(TrajectoryPoint::at_rest(*pf));
    }
    let (s, ds, dds) = quintic_blend(t / duration);
    let delta = Vector3::new(pf.x - p0.x, pf.y - p0.y, normalize_angle(pf.phi - p0.phi));
    let pose = PlanarPose::new(p0.x + s * delta.x, p0.y + s * delta.y, p0.phi + s * delta.z);
    Ok(TrajectoryPoint {
        pose,
        vel: delta * (ds / duration),
        acc: delta * (dds / (duration * duration)),
    })
}

/// Absolute link angles θ_k = φ_base + Σ_{l≤k} q_l.
pub(crate) fn link_angles(robot: &RobotModel, q: &Vector3<f64>) -> [f64; 3] {
    let t1 = robot.base_pose.phi + q[0];
    let t2 = t1 + q[1];
    [t1, t2, t2 + q[2]]
}

/// End-effector pose in the world frame.
pub fn forward_kinematics(robot: &RobotModel, q: &Vector3<f64>) -> PlanarPose {
    let (p, phi) = ee_position(robot, q);
    PlanarPose::new(p.x, p.y, phi)
}

/// End-effector position and unwrapped orientation.
pub(crate) fn ee_position(robot: &RobotModel, q: &Vector3<f64>) -> (Vector2<f64>, f64) {
    let th = link_angles(robot, q);
    let mut p = robot.base_pose.position();
    for k in 0..3 {
        p += unit(th[k]).0 * robot.link_lengths[k];
    }
    (p, th[2])
}

/// Analytic Jacobian mapping q̇ to (ẋ, ẏ, ω).
pub fn jacobian(robot: &RobotModel, q: &Vector3<f64>) -> Matrix3<f64> {
    let th = link_angles(robot, q);
    let mut jac = Matrix3::zeros();
    for i in 0..3 {
        let mut v = Vector2::zeros();
        for k in i..3 {
            v += unit(th[k]).1 * robot.link_lengths[k];
        }
        jac[(0, i)] = v.x;
        jac[(1, i)] = v.y;
        jac[(2, i)] = 1.0;
    }
    jac
}

/// The velocity-product term `J̇(q, q̇)·q̇`.
pub fn jacobian_dot_qdot(robot: &RobotModel, q: &Vector3<f64>, qd: &Vector3<f64>) -> Vector3<f64> {
    let th = link_angles(robot, q);
    let mut omega = 0.0;
    let mut acc = Vector2::zeros();
    for k in 0..3 {
        omega += qd[k];
        acc -= unit(th[k]).0 * (robot.link_lengths[k] * omega * omega);
    }
    Vector3::new(acc.x, acc.y, 0.0)
}

/// Smallest and largest singular values of a 3×3 matrix.
pub fn singular_value_range(m: &Matrix3<f64>) -> (f64, f64) {
    let sv = m.singular_values();
    (sv.min(), sv.max())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElbowBranch {
    /// Positive elbow angle, q₂ ≥ 0.
    #[default]
    Down,
    /// Negative elbow angle, q₂ ≤ 0.
    Up,
}

/// Closed-form 3R inverse kinematics via wrist-point reduction.
pub fn inverse_kinematics(
    robot: &RobotModel,
    target: &PlanarPose,
    branch: ElbowBranch,
) -> Result<Vector3<f64>> {
    let [l1, l2, l3] = robot.link_lengths;
    let base = &robot.base_pose;
    let local = rotate(-base.phi, target.position() - base.position());
    let phi_local = target.phi - base.phi;
    let wrist = local - unit(phi_local).0 * l3;
    let r2 = wrist.norm_squared();
    let r = r2.sqrt();

    let c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    let tol = 4.0 * f64::EPSILON;
    if c2 > 1.0 + tol {
        return Err(CrmError::Unreachable { excess: r - (l1 + l2) });
    }
    if c2 < -1.0 - tol {
        return Err(CrmError::Unreachable { excess: (l1 - l2).abs() - r });
    }
    let c2 = c2.clamp(-1.0, 1.0);
    let s2_mag = if 1.0 - c2.abs() <= tol { 0.0 } else { (1.0 - c2 * c2).sqrt() };
    let s2 = match branch {
        ElbowBranch::Down => s2_mag,
        ElbowBranch::Up => -s2_mag,
    };
    let q2 = s2.atan2(c2);
    let q1 = wrist.y.atan2(wrist.x) - (l2 * s2).atan2(l1 + l2 * c2);
    let q3 = phi_local - q1 - q2;
    Ok(Vector3::new(normalize_angle(q1), q2, normalize_angle(q3)))
}

/// End-effector reference induced by a payload reference and a rigid grasp.
///
/// `offset` points from the grasp to the payload COM in the payload frame;
/// `orientation_offset` is the end-effector orientation relative to the payload.
pub fn load_to_ee_reference(
    load_ref: &TrajectoryPoint,
    offset: &Vector2<f64>,
    orientation_offset: f64,
) -> TrajectoryPoint {
    let rho = rotate(load_ref.pose.phi, *offset);
    let omega = load_ref.vel.z;
    let omega_dot = load_ref.acc.z;
    // S(ρ)ω and ρ × ω̇ reduce to the clockwise perpendicular of ρ in the plane.
    let rho_cw = Vector2::new(rho.y, -rho.x);
    let pos = load_ref.pose.position() - rho;
    let vel = load_ref.vel.xy() + rho_cw * omega;
    let acc = load_ref.acc.xy() + rho * (omega * omega) + rho_cw * omega_dot;
    TrajectoryPoint {
        pose: PlanarPose::new(pos.x, pos.y, load_ref.pose.phi + orientation_offset),
        vel: Vector3::new(vel.x, vel.y, omega),
        acc: Vector3::new(acc.x, acc.y, omega_dot),
    }
}

/// Desired joint position, velocity and acceleration for one arm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointReference {
    pub q: Vector3<f64>,
    pub qd: Vector3<f64>,
    pub qdd: Vector3<f64>,
}

impl JointReference {
    /// Shifts each angle by multiples of 2π to stay continuous with `previous`.
    pub fn unwrapped_to(mut self, previous: &Vector3<f64>) -> Self {
        for j in 0..3 {
            self.q[j] = unwrap_angle(previous[j], self.q[j]);
        }
        self
    }
}

pub fn joint_reference(
    robot: &RobotModel,
    ee_ref: &TrajectoryPoint,
    branch: ElbowBranch,
) -> Result<JointReference> {
    let q = inverse_kinematics(robot, &ee_ref.pose, branch)?;
    let jac = jacobian(robot, &q);
    let (smin, smax) = singular_value_range(&jac);
    if smin < SINGULARITY_THRESHOLD {
        return Err(CrmError::SingularJacobian { sigma_min: smin, condition: smax / smin });
    }
    let lu = jac.lu();
    let qd = lu.solve(&ee_ref.vel).ok_or(CrmError::SingularJacobian {
        sigma_min: smin,
        condition: f64::INFINITY,
    })?;
    let rhs = ee_ref.acc - jacobian_dot_qdot(robot, &q, &qd);
    let qdd = lu.solve(&rhs).ok_or(CrmError::SingularJacobian {
        sigma_min: smin,
        condition: f64::INFINITY,
    })?;
    Ok(JointReference { q, qd, qdd })
}

/// Translational (x, y) and rotational grasp-consistency residual between arms `a` and `b`.
pub fn constraint_residual(
    robot_a: &RobotModel,
    q_a: &Vector3<f64>,
    robot_b: &RobotModel,
    q_b: &Vector3<f64>,
    geom: &GraspGeometry,
    a: usize,
    b: usize,
) -> Vector3<f64> {
    let (pa, phia) = ee_position(robot_a, q_a);
    let (pb, phib) = ee_position(robot_b, q_b);
    // Each arm's own estimate of where the payload COM is.
    let ca = pa + rotate(phia - geom.orientation_offsets[a], geom.offset(a));
    let cb = pb + rotate(phib - geom.orientation_offsets[b], geom.offset(b));
    let d = ca - cb;
    Vector3::new(d.x, d.y, normalize_angle(phia - phib - geom.delta_r(a, b)))
}

/// All N(N−1)/2 pairwise residual blocks, ordered (0,1), (0,2), …, (1,2), …
pub fn pairwise_residuals(
    robots: &[RobotModel],
    qs: &[Vector3<f64>],
    geom: &GraspGeometry,
) -> Vec<((usize, usize), Vector3<f64>)> {
    let n = robots.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            out.push((
                (a, b),
                constraint_residual(&robots[a], &qs[a], &robots[b], &qs[b], geom, a, b),
            ));
        }
    }
    out
}
