//! Inertia, Coriolis and gravity terms of a planar 3R arm.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};

use super::model::RobotModel;
use crate::kinematics::link_angles;

/// `D(q)`, `C(q, q̇)` and `g(q)` of one arm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidBodyTerms {
    pub d: Matrix3<f64>,
    pub c: Matrix3<f64>,
    pub g: Vector3<f64>,
}

/// Lever arm of joint `m`'s link towards the COM of link `k` (valid for m ≤ k).
#[inline]
fn lever(robot: &RobotModel, k: usize, m: usize) -> f64 {
    if m < k {
        robot.link_lengths[m]
    } else {
        robot.link_com_offsets[k]
    }
}

#[inline]
fn dir(theta: f64) -> (Vector2<f64>, Vector2<f64>) {
    let (s, c) = theta.sin_cos();
    (Vector2::new(c, s), Vector2::new(-s, c))
}

/// Translational Jacobian of each link COM.
fn com_jacobians(robot: &RobotModel, th: &[f64; 3]) -> [Matrix2x3<f64>; 3] {
    let mut out = [Matrix2x3::zeros(); 3];
    for (k, jk) in out.iter_mut().enumerate() {
        for i in 0..=k {
            let mut col = Vector2::zeros();
            for m in i..=k {
                col += dir(th[m]).1 * lever(robot, k, m);
            }
            jk.set_column(i, &col);
        }
    }
    out
}

/// `∂J_k/∂q_l` for the COM Jacobian of link `k`.
fn com_jacobian_partial(robot: &RobotModel, th: &[f64; 3], k: usize, l: usize) -> Matrix2x3<f64> {
    let mut out = Matrix2x3::zeros();
    if l > k {
        return out;
    }
    for i in 0..=k {
        let mut col = Vector2::zeros();
        for m in i.max(l)..=k {
            col -= dir(th[m]).0 * lever(robot, k, m);
        }
        out.set_column(i, &col);
    }
    out
}

/// Angular Jacobian row of link `k`: ones up to and including joint `k`.
#[inline]
fn angular_row(k: usize) -> Vector3<f64> {
    Vector3::from_fn(|i, _| if i <= k { 1.0 } else { 0.0 })
}

/// Link-side inertia matrix `D°(q)`.
pub fn inertia_matrix(robot: &RobotModel, q: &Vector3<f64>) -> Matrix3<f64> {
    let th = link_angles(robot, q);
    let jv = com_jacobians(robot, &th);
    let mut d = Matrix3::zeros();
    for k in 0..3 {
        let jw = angular_row(k);
        d += jv[k].transpose() * jv[k] * robot.link_masses[k]
            + jw * jw.transpose() * robot.link_inertias[k];
    }
    d
}

/// `∂D°/∂q_l` for l = 0, 1, 2.
pub fn inertia_partials(robot: &RobotModel, q: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let th = link_angles(robot, q);
    let jv = com_jacobians(robot, &th);
    let mut out = [Matrix3::zeros(); 3];
    for (l, dl) in out.iter_mut().enumerate() {
        for k in 0..3 {
            let dj = com_jacobian_partial(robot, &th, k, l);
            let prod = dj.transpose() * jv[k];
            *dl += (prod + prod.transpose()) * robot.link_masses[k];
        }
    }
    out
}

/// Coriolis/centrifugal matrix from Christoffel symbols of the first kind.
fn coriolis_from_partials(dd: &[Matrix3<f64>; 3], qd: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| {
        (0..3)
            .map(|l| 0.5 * (dd[l][(i, j)] + dd[j][(i, l)] - dd[i][(j, l)]) * qd[l])
            .sum()
    })
}

/// Gravity torque `g(q) = ∂V/∂q` for a uniform field `gravity` (m/s²).
pub fn gravity_torque(robot: &RobotModel, q: &Vector3<f64>, gravity: &Vector2<f64>) -> Vector3<f64> {
    let th = link_angles(robot, q);
    let jv = com_jacobians(robot, &th);
    let mut g = Vector3::zeros();
    for k in 0..3 {
        g -= jv[k].transpose() * gravity * robot.link_masses[k];
    }
    g
}

/// Gravitational potential of the links, zero at the base height.
pub fn potential_energy(robot: &RobotModel, q: &Vector3<f64>, gravity: &Vector2<f64>) -> f64 {
    let th = link_angles(robot, q);
    let base = robot.base_pose.position();
    let mut v = 0.0;
    let mut joint = base;
    for k in 0..3 {
        let (e, _) = dir(th[k]);
        let com = joint + e * robot.link_com_offsets[k];
        v -= robot.link_masses[k] * gravity.dot(&(com - base));
        joint += e * robot.link_lengths[k];
    }
    v
}

/// Unaugmented `D°`, `C°`, `g` at `(q, q̇)`.
pub fn rigid_body_matrices(
    robot: &RobotModel,
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    gravity: &Vector2<f64>,
) -> RigidBodyTerms {
    RigidBodyTerms {
        d: inertia_matrix(robot, q),
        c: coriolis_from_partials(&inertia_partials(robot, q), qd),
        g: gravity_torque(robot, q, gravity),
    }
}

/// Diagonal terms the joint mechanisms add to `D°` and `C°`:
/// `(J·n̄², b·n̄² + a²/R)` per joint.
pub fn augment(robot: &RobotModel) -> (Vector3<f64>, Vector3<f64>) {
    (robot.reflected_inertia(), robot.joint_damping())
}

/// Augmented arm-plus-actuator terms `D = D° + diag(Jn̄²)`, `C = C° + diag(bn̄² + a²/R)`.
pub fn augmented_matrices(
    robot: &RobotModel,
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    gravity: &Vector2<f64>,
) -> RigidBodyTerms {
    let mut t = rigid_body_matrices(robot, q, qd, gravity);
    let (dd, dc) = augment(robot);
    t.d += Matrix3::from_diagonal(&dd);
    t.c += Matrix3::from_diagonal(&dc);
    t
}

/// Kinetic energy including reflected rotor inertia plus link potential energy.
pub fn mechanical_energy(
    robot: &RobotModel,
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    gravity: &Vector2<f64>,
) -> f64 {
    let d = inertia_matrix(robot, q) + Matrix3::from_diagonal(&robot.reflected_inertia());
    0.5 * qd.dot(&(d * qd)) + potential_energy(robot, q, gravity)
}
