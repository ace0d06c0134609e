//! Fixed-step RK4 rollout of the closed-chain system under impedance control.
//!
//! The state vector packs, per arm, `(q, q̇, w, ẇ)` followed by the payload pose
//! and twist. Every stage solves the arm/payload/constraint system together
//! with the controller, so filter states and contact wrenches stay
//! stage-consistent.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::{
    auxiliary_error, reference_signals, svc_modulate, virtual_torque_law, ArmGains,
    FilterOutput, ImpedanceGains,
};
use crate::dynamics::{
    mechanical_energy, solve_constrained, ArmTerms, Baumgarte, Plant, SystemState, TorqueLaw,
};
use crate::energy::{joule_loss_rate, joint_storage_power, EnergyLedger, PowerSample};
use crate::error::{CrmError, Result};
use crate::kinematics::{
    jacobian, joint_reference, load_to_ee_reference, pairwise_residuals, quintic_trajectory,
    ElbowBranch, JointReference, PlanarPose, TrajectoryPoint,
};

const ARM_STRIDE: usize = 12;

/// Supply model of the shared storage element.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum StorageMode {
    Constant { voltage: f64 },
    /// `E_s = ½CV²`, voltage follows the stored energy.
    Ultracapacitor { capacitance: f64, initial_voltage: f64 },
}

impl StorageMode {
    pub fn initial_energy(&self) -> f64 {
        match *self {
            StorageMode::Constant { .. } => 0.0,
            StorageMode::Ultracapacitor { capacitance, initial_voltage } => {
                0.5 * capacitance * initial_voltage * initial_voltage
            }
        }
    }

    pub fn voltage(&self, energy: f64) -> Result<f64> {
        match *self {
            StorageMode::Constant { voltage } => Ok(voltage),
            StorageMode::Ultracapacitor { capacitance, .. } => {
                if energy <= 0.0 {
                    return Err(CrmError::StorageDepleted(0.0));
                }
                Ok((2.0 * energy / capacitance).sqrt())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StorageMode::Constant { voltage } => voltage > 0.0,
            StorageMode::Ultracapacitor { capacitance, initial_voltage } => {
                capacitance > 0.0 && initial_voltage > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CrmError::Config("storage voltage and capacitance must be positive".into()))
        }
    }
}

/// Rest-to-rest quintic payload path, held at the goal after `duration`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadTrajectory {
    pub start: PlanarPose,
    pub end: PlanarPose,
    pub duration: f64,
}

impl LoadTrajectory {
    pub fn at(&self, t: f64) -> Result<TrajectoryPoint> {
        if t >= self.duration {
            return Ok(TrajectoryPoint::at_rest(self.end));
        }
        quintic_trajectory(&self.start, &self.end, self.duration, t.max(0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    pub baumgarte: Baumgarte,
    pub storage: StorageMode,
    /// Joint speed (rad/s) beyond which a rollout is declared diverged.
    pub speed_limit: f64,
}

/// Everything evaluated at one stage.
#[derive(Clone, Debug)]
pub struct ArmStage {
    pub reference: JointReference,
    pub terms: ArmTerms,
    pub wrench: Vector3<f64>,
    pub t_ext: Vector3<f64>,
    /// Demanded virtual torque `𝒯^v`.
    pub virtual_torque: Vector3<f64>,
    /// Realized joint input `U`.
    pub torque: Vector3<f64>,
    pub ratio: Vector3<f64>,
    pub saturated: [bool; 3],
    pub s: Vector3<f64>,
    pub zeta: Vector3<f64>,
    pub wdd: Vector3<f64>,
}

#[derive(Clone, Debug)]
pub struct StageEval {
    pub deriv: Vec<f64>,
    pub arms: Vec<ArmStage>,
    pub load_acc: Vector3<f64>,
    pub supply_voltage: f64,
}

impl StageEval {
    pub fn any_saturated(&self) -> bool {
        self.arms.iter().any(|a| a.saturated.iter().any(|&s| s))
    }
}

/// Packed integrator state.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub y: Vec<f64>,
    /// Stored energy, used only in ultracapacitor mode (J).
    pub storage_energy: f64,
}

impl SimState {
    pub fn arms(&self) -> usize {
        (self.y.len() - 6) / ARM_STRIDE
    }

    fn v3(&self, at: usize) -> Vector3<f64> {
        Vector3::new(self.y[at], self.y[at + 1], self.y[at + 2])
    }

    pub fn q(&self, i: usize) -> Vector3<f64> {
        self.v3(ARM_STRIDE * i)
    }

    pub fn qd(&self, i: usize) -> Vector3<f64> {
        self.v3(ARM_STRIDE * i + 3)
    }

    pub fn w(&self, i: usize) -> Vector3<f64> {
        self.v3(ARM_STRIDE * i + 6)
    }

    pub fn wd(&self, i: usize) -> Vector3<f64> {
        self.v3(ARM_STRIDE * i + 9)
    }

    pub fn load_pose(&self) -> PlanarPose {
        let v = self.v3(ARM_STRIDE * self.arms());
        PlanarPose { x: v.x, y: v.y, phi: v.z }
    }

    pub fn load_vel(&self) -> Vector3<f64> {
        self.v3(ARM_STRIDE * self.arms() + 3)
    }

    pub fn system(&self) -> SystemState {
        let n = self.arms();
        SystemState {
            q: (0..n).map(|i| self.q(i)).collect(),
            qd: (0..n).map(|i| self.qd(i)).collect(),
            load_pose: self.load_pose(),
            load_vel: self.load_vel(),
            t: self.t,
        }
    }

    fn set3(&mut self, at: usize, v: &Vector3<f64>) {
        self.y[at..at + 3].copy_from_slice(v.as_slice());
    }

    pub fn set_w(&mut self, i: usize, w: &Vector3<f64>) {
        self.set3(ARM_STRIDE * i + 6, w);
    }

    pub fn set_wd(&mut self, i: usize, wd: &Vector3<f64>) {
        self.set3(ARM_STRIDE * i + 9, wd);
    }

    pub fn set_qd(&mut self, i: usize, qd: &Vector3<f64>) {
        self.set3(ARM_STRIDE * i + 3, qd);
    }
}

/// Per-rollout diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub ledger: EnergyLedger,
    pub final_load: [f64; 3],
    /// Distance of the final payload position from the goal (m).
    pub final_position_error: f64,
    /// Largest `|q − q^d|` over all joints and samples (rad).
    pub max_tracking_error: f64,
    /// Largest pairwise grasp residual norm.
    pub max_constraint_drift: f64,
    /// Fraction of step endpoints with at least one saturated joint.
    pub saturation_duty: f64,
    pub final_zeta_norm: f64,
    pub steps: usize,
}

/// View passed to rollout observers after every accepted step (and at t = 0).
pub struct StepRecord<'a> {
    pub index: usize,
    pub state: &'a SimState,
    pub eval: &'a StageEval,
    pub power: &'a PowerSample,
    pub ledger: &'a EnergyLedger,
    pub constraint_drift: f64,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub plant: Plant,
    pub gains: ImpedanceGains,
    pub trajectory: LoadTrajectory,
    pub branches: Vec<ElbowBranch>,
    pub options: SimOptions,
}

impl Simulation {
    pub fn arms(&self) -> usize {
        self.plant.arms()
    }

    /// Joint reference of every arm at time `t`, each unwrapped near `near[i]`.
    pub fn references(&self, t: f64, near: Option<&[Vector3<f64>]>) -> Result<Vec<JointReference>> {
        let load_ref = self.trajectory.at(t)?;
        let grasp = &self.plant.load.grasp;
        (0..self.arms())
            .map(|i| {
                let ee = load_to_ee_reference(&load_ref, &grasp.offset(i), grasp.orientation_offsets[i]);
                let r = joint_reference(&self.plant.robots[i], &ee, self.branches[i])?;
                Ok(match near {
                    Some(q) => r.unwrapped_to(&q[i]),
                    None => r,
                })
            })
            .collect()
    }

    /// Arms on their references, at rest relative to the path, filters empty.
    pub fn initial_state(&self) -> Result<SimState> {
        let n = self.arms();
        let refs = self.references(0.0, None)?;
        let mut y = vec![0.0; ARM_STRIDE * n + 6];
        for (i, r) in refs.iter().enumerate() {
            y[ARM_STRIDE * i..ARM_STRIDE * i + 3].copy_from_slice(r.q.as_slice());
            y[ARM_STRIDE * i + 3..ARM_STRIDE * i + 6].copy_from_slice(r.qd.as_slice());
        }
        let load = self.trajectory.at(0.0)?;
        let base = ARM_STRIDE * n;
        y[base..base + 3].copy_from_slice(load.pose.to_vector().as_slice());
        y[base + 3..base + 6].copy_from_slice(load.vel.as_slice());
        Ok(SimState { t: 0.0, y, storage_energy: self.options.storage.initial_energy() })
    }

    /// Derivative of the packed state plus all stage diagnostics.
    pub fn evaluate(&self, state: &SimState) -> Result<StageEval> {
        let n = self.arms();
        let t = state.t;
        let vs = self.options.storage.voltage(state.storage_energy)?;
        let sys = state.system();
        let refs = self.references(t, Some(&sys.q))?;
        let g = self.plant.gravity();
        let gains = self.gains.at(t);
        let slice = |v: &DVector<f64>, i: usize| Vector3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
        let lambda = DVector::from_column_slice(&self.gains.lambda);
        let kd = DVector::from_column_slice(&self.gains.kd);

        let mut terms = Vec::with_capacity(n);
        let mut laws = Vec::with_capacity(n);
        let mut arm_gains = Vec::with_capacity(n);
        for i in 0..n {
            let tm = ArmTerms::new(&self.plant.robots[i], &sys.q[i], &sys.qd[i], &g);
            let ag = ArmGains {
                m: slice(&gains.inertia, i),
                b: slice(&gains.damping, i),
                k: slice(&gains.stiffness, i),
                lambda: slice(&lambda, i),
                kd: slice(&kd, i),
            };
            laws.push(virtual_torque_law(
                &tm.dynamics,
                &tm.jacobian,
                &refs[i],
                &sys.q[i],
                &sys.qd[i],
                &state.w(i),
                &state.wd(i),
                &ag,
            ));
            terms.push(tm);
            arm_gains.push(ag);
        }

        let ceilings: Vec<Vector3<f64>> = self
            .plant
            .robots
            .iter()
            .map(|r| Vector3::from_fn(|j, _| r.actuators[j].torque_ceiling(vs)))
            .collect();

        // Active-set iteration on saturated joints: a saturated joint applies
        // its ceiling and no longer depends on the contact wrench.
        let mut active = vec![[0i8; 3]; n];
        let mut effective = laws.clone();
        let mut sol;
        let mut iterations = 0;
        loop {
            sol = solve_constrained(&self.plant, &sys, &terms, &effective, self.options.baumgarte)?;
            let mut changed = false;
            for i in 0..n {
                let tv = laws[i].eval(&sol.wrenches[i]);
                for j in 0..3 {
                    let over = tv[j].abs() > ceilings[i][j];
                    let want = if over { tv[j].signum() as i8 } else { 0 };
                    if want != active[i][j] {
                        active[i][j] = want;
                        changed = true;
                    }
                }
            }
            iterations += 1;
            if !changed || iterations > 3 * n + 2 {
                break;
            }
            for i in 0..n {
                let mut law: TorqueLaw = laws[i];
                for j in 0..3 {
                    if active[i][j] != 0 {
                        law.offset[j] = active[i][j] as f64 * ceilings[i][j];
                        law.coupling.row_mut(j).fill(0.0);
                    }
                }
                effective[i] = law;
            }
        }

        let mut deriv = vec![0.0; state.y.len()];
        let mut arms = Vec::with_capacity(n);
        for i in 0..n {
            let wrench = sol.wrenches[i];
            let t_ext = terms[i].jacobian.transpose() * wrench;
            let tv = laws[i].eval(&wrench);
            let torque = effective[i].eval(&wrench);
            let ag = &arm_gains[i];
            let (w, wd) = (state.w(i), state.wd(i));
            let wdd = (t_ext - ag.b.component_mul(&wd) - ag.k.component_mul(&w)).component_div(&ag.m);
            let mut ratio = Vector3::zeros();
            let mut saturated = [false; 3];
            for j in 0..3 {
                let m = svc_modulate(tv[j], vs, &self.plant.robots[i].actuators[j])?;
                ratio[j] = m.u;
                saturated[j] = m.saturated;
            }
            let f = FilterOutput { w, wd, wdd };
            let rs = reference_signals(&refs[i], &sys.q[i], &sys.qd[i], &f, &ag.lambda);
            let base = ARM_STRIDE * i;
            deriv[base..base + 3].copy_from_slice(sys.qd[i].as_slice());
            deriv[base + 3..base + 6].copy_from_slice(sol.qdd[i].as_slice());
            deriv[base + 6..base + 9].copy_from_slice(wd.as_slice());
            deriv[base + 9..base + 12].copy_from_slice(wdd.as_slice());
            arms.push(ArmStage {
                reference: refs[i],
                terms: terms[i],
                wrench,
                t_ext,
                virtual_torque: tv,
                torque,
                ratio,
                saturated,
                s: rs.s,
                zeta: auxiliary_error(&refs[i].q, &sys.q[i], &w),
                wdd,
            });
        }
        let base = ARM_STRIDE * n;
        deriv[base..base + 3].copy_from_slice(sys.load_vel.as_slice());
        deriv[base + 3..base + 6].copy_from_slice(sol.load_acc.as_slice());
        Ok(StageEval { deriv, arms, load_acc: sol.load_acc, supply_voltage: vs })
    }

    /// Energy quantities at a step endpoint.
    pub fn power_sample(&self, state: &SimState, eval: &StageEval) -> PowerSample {
        let g = self.plant.gravity();
        let mut s = PowerSample::default();
        for (i, arm) in eval.arms.iter().enumerate() {
            let robot = &self.plant.robots[i];
            let (q, qd) = (state.q(i), state.qd(i));
            for j in 0..3 {
                let act = &robot.actuators[j];
                s.joint_storage_power.push(joint_storage_power(arm.torque[j], qd[j], act));
                s.joule += joule_loss_rate(arm.torque[j], qd[j], act);
                s.friction += act.reflected_friction() * qd[j] * qd[j];
            }
            s.external += qd.dot(&arm.t_ext);
            s.arm_energy += mechanical_energy(robot, &q, &qd, &g);
        }
        let load = &self.plant.load;
        let v = state.load_vel();
        let p = state.load_pose();
        s.load_kinetic = 0.5 * load.mass * (v.x * v.x + v.y * v.y) + 0.5 * load.inertia * v.z * v.z;
        s.load_potential = -load.mass * (g.x * p.x + g.y * p.y);
        s
    }

    fn offset_state(&self, base: &SimState, k: &[f64], h: f64, t: f64) -> SimState {
        SimState {
            t,
            y: base.y.iter().zip(k).map(|(y, d)| y + h * d).collect(),
            storage_energy: base.storage_energy,
        }
    }

    fn check(&self, state: &SimState) -> Result<()> {
        let n = state.arms();
        let finite = state.y.iter().all(|v| v.is_finite());
        let calm = (0..n).all(|i| state.qd(i).amax() < self.options.speed_limit);
        if finite && calm {
            Ok(())
        } else {
            Err(CrmError::Diverged { t: state.t })
        }
    }

    /// One RK4 step from `state` whose stage-1 evaluation is `eval0`.
    /// `t_next` is passed explicitly so step times do not accumulate rounding.
    fn advance(&self, state: &SimState, eval0: &StageEval, t_next: f64) -> Result<SimState> {
        let dt = t_next - state.t;
        let h = 0.5 * dt;
        let stage = |s: &SimState| self.evaluate(s).map_err(|e| diverged_or(e, s.t));
        let k1 = &eval0.deriv;
        let k2 = stage(&self.offset_state(state, k1, h, state.t + h))?.deriv;
        let k3 = stage(&self.offset_state(state, &k2, h, state.t + h))?.deriv;
        let k4 = stage(&self.offset_state(state, &k3, dt, t_next))?.deriv;
        let y = (0..state.y.len())
            .map(|j| state.y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect();
        let next = SimState { t: t_next, y, storage_energy: state.storage_energy };
        self.check(&next)?;
        Ok(next)
    }

    /// Single RK4 step of length `dt`.
    pub fn step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        if !(dt > 0.0) {
            return Err(CrmError::Domain(format!("step size must be positive, got {dt}")));
        }
        let eval0 = self.evaluate(state)?;
        let mut next = self.advance(state, &eval0, state.t + dt)?;
        if matches!(self.options.storage, StorageMode::Ultracapacitor { .. }) {
            let eval1 = self.evaluate(&next)?;
            let p0 = self.power_sample(state, &eval0).storage();
            let p1 = self.power_sample(&next, &eval1).storage();
            next.storage_energy += 0.5 * dt * (p0 + p1);
        }
        Ok(next)
    }

    /// Pairwise grasp residual norm, maximized over arm pairs.
    pub fn constraint_drift(&self, state: &SimState) -> f64 {
        let sys = state.system();
        pairwise_residuals(&self.plant.robots, &sys.q, &self.plant.load.grasp)
            .iter()
            .map(|(_, r)| r.norm())
            .fold(0.0, f64::max)
    }

    /// Runs from the default initial state.
    pub fn run<F: FnMut(&StepRecord)>(&self, observer: F) -> Result<RolloutSummary> {
        self.run_from(self.initial_state()?, observer)
    }

    /// Runs from `state` to the horizon, reporting every endpoint to `observer`.
    pub fn run_from<F: FnMut(&StepRecord)>(&self, mut state: SimState, mut observer: F) -> Result<RolloutSummary> {
        let dt = self.options.dt;
        if !(dt > 0.0) {
            return Err(CrmError::Domain(format!("step size must be positive, got {dt}")));
        }
        let t0 = state.t;
        let steps = ((self.options.horizon - t0) / dt).round().max(0.0) as usize;
        let joints = 3 * self.arms();
        let mut ledger = EnergyLedger::new(joints);
        let mut eval = self.evaluate(&state)?;
        let mut power = self.power_sample(&state, &eval);
        let mut max_track: f64 = 0.0;
        let mut max_drift: f64 = 0.0;
        let mut saturated_samples = 0usize;

        let mut note = |idx: usize, st: &SimState, ev: &StageEval, pw: &PowerSample, lg: &EnergyLedger| {
            let drift = self.constraint_drift(st);
            max_drift = max_drift.max(drift);
            for (i, a) in ev.arms.iter().enumerate() {
                max_track = max_track.max((a.reference.q - st.q(i)).amax());
            }
            if ev.any_saturated() {
                saturated_samples += 1;
            }
            observer(&StepRecord { index: idx, state: st, eval: ev, power: pw, ledger: lg, constraint_drift: drift });
        };
        note(0, &state, &eval, &power, &ledger);

        for k in 1..=steps {
            let t_next = t0 + k as f64 * dt;
            let mut next = self.advance(&state, &eval, t_next)?;
            let mut next_eval = self.evaluate(&next).map_err(|e| diverged_or(e, t_next))?;
            let next_power = self.power_sample(&next, &next_eval);
            ledger.accumulate(&power, &next_power, dt);
            if matches!(self.options.storage, StorageMode::Ultracapacitor { .. }) {
                // Stages hold the step-start voltage; the endpoint sees the updated charge.
                next.storage_energy = self.options.storage.initial_energy() + ledger.de_s;
                next_eval = self.evaluate(&next).map_err(|e| diverged_or(e, t_next))?;
            }
            state = next;
            eval = next_eval;
            power = next_power;
            note(k, &state, &eval, &power, &ledger);
        }

        let goal = self.trajectory.end;
        let fin = state.load_pose();
        let zeta = eval.arms.iter().map(|a| a.zeta.norm_squared()).sum::<f64>().sqrt();
        Ok(RolloutSummary {
            ledger,
            final_load: [fin.x, fin.y, fin.phi],
            final_position_error: (fin.position() - goal.position()).norm(),
            max_tracking_error: max_track,
            max_constraint_drift: max_drift,
            saturation_duty: saturated_samples as f64 / (steps + 1) as f64,
            final_zeta_norm: zeta,
            steps,
        })
    }

    /// Joint positions on the references at t = 0.
    pub fn initial_joint_positions(&self) -> Result<Vec<Vector3<f64>>> {
        Ok(self.references(0.0, None)?.into_iter().map(|r| r.q).collect())
    }

    /// Checks that every arm can follow its reference on a uniform time grid.
    pub fn check_reachability(&self, samples: usize) -> Result<()> {
        let horizon = self.trajectory.duration;
        for k in 0..=samples {
            let t = horizon * k as f64 / samples as f64;
            let load_ref = self.trajectory.at(t)?;
            let grasp = &self.plant.load.grasp;
            for i in 0..self.arms() {
                let ee = load_to_ee_reference(&load_ref, &grasp.offset(i), grasp.orientation_offsets[i]);
                joint_reference(&self.plant.robots[i], &ee, self.branches[i]).map_err(|e| {
                    CrmError::Config(format!("arm {} cannot follow the payload path at t = {t:.3} s: {e}", i + 1))
                })?;
            }
        }
        Ok(())
    }
}

/// Numerical failures mid-rollout surface as divergence at time `t`.
fn diverged_or(e: CrmError, t: f64) -> CrmError {
    match e {
        CrmError::SingularConstraintSystem
        | CrmError::SingularJacobian { .. }
        | CrmError::Unreachable { .. } => CrmError::Diverged { t },
        other => other,
    }
}

/// Joint velocities that carry the grasp rigidly with a payload twist.
pub fn consistent_joint_velocities(
    sim: &Simulation,
    state: &SimState,
    load_vel: &Vector3<f64>,
) -> Result<Vec<Vector3<f64>>> {
    let rhos = crate::dynamics::grasp::world_offsets(&sim.plant.load.grasp, state.load_pose().phi);
    (0..sim.arms())
        .map(|i| {
            let jac = jacobian(&sim.plant.robots[i], &state.q(i));
            let a = crate::dynamics::grasp::planar_grasp_block(&rhos[i]).transpose();
            jac.lu().solve(&(a * load_vel)).ok_or(CrmError::SingularConstraintSystem)
        })
        .collect()
}
