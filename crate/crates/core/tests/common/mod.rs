#![allow(dead_code)]

use std::f64::consts::PI;

use crm_core::kinematics::PlanarPose;
use crm_core::optimize::{GaConfig, GeneId, GeneKind};
use crm_core::ScenarioConfig;
use nalgebra::Vector3;

/// Rod descent with stiff rotors, so a 1 ms step is stable.
pub fn coarse() -> ScenarioConfig {
    let mut sc = ScenarioConfig::rod_descent();
    for r in &mut sc.robots {
        for a in &mut r.model.actuators {
            a.rotor_inertia = 1e-4;
        }
    }
    sc.sim.dt = 1e-3;
    sc
}

/// Two free genes: the damping offsets of the first joint of each arm.
pub fn first_joint_pair(sc: &ScenarioConfig) -> GaConfig {
    let mut cfg = sc.optimizer.clone().expect("preset carries an optimizer");
    cfg.free_genes = Some(vec![
        GeneId { kind: GeneKind::Damping, joint: 0 },
        GeneId { kind: GeneKind::Damping, joint: 3 },
    ]);
    cfg
}

/// Vertical descent midway between the bases; arm 2 is the mirror image of arm 1.
pub fn mirrored() -> ScenarioConfig {
    let mut sc = coarse();
    sc.trajectory.start = PlanarPose::new(0.4, -0.3, 0.0);
    sc.trajectory.end = PlanarPose::new(0.4, -0.7, 0.0);
    sc.load.grasp.orientation_offsets = vec![0.0, PI];
    sc
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// ½ Σ Sᵢᵀ Dᵢ Sᵢ and the impedance residual M q̈̃ + B q̇̃ + K q̃ − 𝒯_ext per step.
pub struct SlidingTrace {
    pub lyapunov: Vec<f64>,
    pub residual: Vec<f64>,
    pub t_ext: Vec<f64>,
    pub zeta_end: f64,
    pub saturated: bool,
}

pub fn sliding_trace(sc: &ScenarioConfig, w0: [f64; 3]) -> SlidingTrace {
    let sim = sc.simulation().unwrap();
    let mut state = sim.initial_state().unwrap();
    state.set_w(0, &Vector3::from(w0));
    state.set_w(1, &Vector3::from(w0).map(|v| -0.5 * v));
    let g = sc.gains.gains.at(0.0);
    let mut out = SlidingTrace { lyapunov: vec![], residual: vec![], t_ext: vec![], zeta_end: 0.0, saturated: false };
    sim.run_from(state, |rec| {
        let mut v = 0.0;
        let mut r2 = 0.0;
        let mut e2 = 0.0;
        for (i, a) in rec.eval.arms.iter().enumerate() {
            v += 0.5 * a.s.dot(&(a.terms.dynamics.d * a.s));
            let q_err = a.reference.q - rec.state.q(i);
            let qd_err = a.reference.qd - rec.state.qd(i);
            let qdd = Vector3::from_column_slice(&rec.eval.deriv[12 * i + 3..12 * i + 6]);
            let qdd_err = a.reference.qdd - qdd;
            for j in 0..3 {
                let k = 3 * i + j;
                let r = g.inertia[k] * qdd_err[j] + g.damping[k] * qd_err[j] + g.stiffness[k] * q_err[j]
                    - a.t_ext[j];
                r2 += r * r;
                e2 += a.t_ext[j] * a.t_ext[j];
            }
        }
        out.saturated |= rec.eval.any_saturated();
        out.lyapunov.push(v);
        out.residual.push(r2.sqrt());
        out.t_ext.push(e2.sqrt());
        out.zeta_end = rec.eval.arms.iter().map(|a| a.zeta.norm_squared()).sum::<f64>().sqrt();
    })
    .unwrap();
    out
}
