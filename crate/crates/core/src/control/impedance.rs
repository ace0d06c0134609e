//! Impedance filter, auxiliary error and the virtual torque law.
//!
//! The filter realizes `w = [p²M + pB + K]⁻¹ 𝒯_ext` per joint as the state
//! `(w, ẇ)`; `ẅ` is always reconstructed from the state equation.

use nalgebra::{DVector, Matrix3, Vector3};

use super::gains::ImpedanceGains;
use crate::dynamics::{RigidBodyTerms, TorqueLaw};
use crate::kinematics::JointReference;

/// Filter state for all joints of all arms.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub w: DVector<f64>,
    pub wd: DVector<f64>,
}

impl ControllerState {
    pub fn zeros(joints: usize) -> Self {
        Self { w: DVector::zeros(joints), wd: DVector::zeros(joints) }
    }
}

/// `ẅ = M⁻¹(𝒯_ext − Bẇ − Kw)`, elementwise.
pub fn filter_acceleration(
    w: &DVector<f64>,
    wd: &DVector<f64>,
    t_ext: &DVector<f64>,
    m: &DVector<f64>,
    b: &DVector<f64>,
    k: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_fn(w.len(), |j, _| (t_ext[j] - b[j] * wd[j] - k[j] * w[j]) / m[j])
}

/// Advances the filter by one RK4 step with `𝒯_ext` held over the step.
/// Returns the new state and `ẅ` at the end of the step.
pub fn impedance_filter_step(
    cs: &ControllerState,
    t_ext: &DVector<f64>,
    gains: &ImpedanceGains,
    t: f64,
    dt: f64,
) -> (ControllerState, DVector<f64>) {
    let f = |tt: f64, w: &DVector<f64>, wd: &DVector<f64>| {
        let g = gains.at(tt);
        filter_acceleration(w, wd, t_ext, &g.inertia, &g.damping, &g.stiffness)
    };
    let h = dt / 2.0;
    let (w, v) = (&cs.w, &cs.wd);
    let a1 = f(t, w, v);
    let (w2, v2) = (w + v * h, v + &a1 * h);
    let a2 = f(t + h, &w2, &v2);
    let (w3, v3) = (w + &v2 * h, v + &a2 * h);
    let a3 = f(t + h, &w3, &v3);
    let (w4, v4) = (w + &v3 * dt, v + &a3 * dt);
    let a4 = f(t + dt, &w4, &v4);
    let nw = w + (v + v2 * 2.0 + v3 * 2.0 + &v4) * (dt / 6.0);
    let nv = v + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    let next = ControllerState { w: nw, wd: nv };
    let g = gains.at(t + dt);
    let acc = filter_acceleration(&next.w, &next.wd, t_ext, &g.inertia, &g.damping, &g.stiffness);
    (next, acc)
}

/// `ζ = (q^d − q) − w`.
pub fn auxiliary_error(q_des: &Vector3<f64>, q: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
    (q_des - q) - w
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceSignals {
    /// `S = q̇ − q̇_r = −(ζ̇ + Λζ)`.
    pub s: Vector3<f64>,
    pub qd_r: Vector3<f64>,
    pub qdd_r: Vector3<f64>,
}

/// Filter output of one arm: `w`, `ẇ`, `ẅ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterOutput {
    pub w: Vector3<f64>,
    pub wd: Vector3<f64>,
    pub wdd: Vector3<f64>,
}

pub fn reference_signals(
    des: &JointReference,
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    f: &FilterOutput,
    lambda: &Vector3<f64>,
) -> ReferenceSignals {
    let q_err = des.q - q;
    let qd_err = des.qd - qd;
    let qd_r = des.qd + lambda.component_mul(&q_err) - (f.wd + lambda.component_mul(&f.w));
    let qdd_r = des.qdd + lambda.component_mul(&qd_err) - (f.wdd + lambda.component_mul(&f.wd));
    ReferenceSignals { s: qd - qd_r, qd_r, qdd_r }
}

/// `𝒯^v = D q̈_r + C q̇_r + G − K_D S − 𝒯_ext` with augmented `D`, `C`.
pub fn virtual_torque(
    terms: &RigidBodyTerms,
    refs: &ReferenceSignals,
    t_ext: &Vector3<f64>,
    kd: &Vector3<f64>,
) -> Vector3<f64> {
    terms.d * refs.qdd_r + terms.c * refs.qd_r + terms.g - kd.component_mul(&refs.s) - t_ext
}

/// Per-joint gains of one arm at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmGains {
    pub m: Vector3<f64>,
    pub b: Vector3<f64>,
    pub k: Vector3<f64>,
    pub lambda: Vector3<f64>,
    pub kd: Vector3<f64>,
}

/// The virtual torque written as an affine function of the contact wrench `F`.
///
/// Since `𝒯_ext = JᵀF` enters both directly and through `ẅ`, the law is
/// `𝒯^v = a − (D M⁻¹ + I) Jᵀ F`, which lets the constrained solve treat the
/// controller and contact forces simultaneously.
pub fn virtual_torque_law(
    terms: &RigidBodyTerms,
    jacobian: &Matrix3<f64>,
    des: &JointReference,
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    w: &Vector3<f64>,
    wd: &Vector3<f64>,
    g: &ArmGains,
) -> TorqueLaw {
    let free = FilterOutput {
        w: *w,
        wd: *wd,
        wdd: -(g.b.component_mul(wd) + g.k.component_mul(w)).component_div(&g.m),
    };
    let refs = reference_signals(des, q, qd, &free, &g.lambda);
    let offset = virtual_torque(terms, &refs, &Vector3::zeros(), &g.kd);
    let m_inv = Matrix3::from_diagonal(&g.m.map(|x| 1.0 / x));
    let coupling = (terms.d * m_inv + Matrix3::identity()) * jacobian.transpose();
    TorqueLaw { offset, coupling }
}
