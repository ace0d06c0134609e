//! Physical parameter sets for the arms, their joint actuators and the payload.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CrmError, Result};
use crate::kinematics::{GraspGeometry, PlanarPose};

/// DC motor and gearbox of one semi-active joint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuatorParams {
    /// Gear ratio (dimensionless).
    pub gear_ratio: f64,
    /// Torque constant (N·m/A).
    pub motor_constant: f64,
    /// Armature resistance (Ω).
    pub resistance: f64,
    /// Rotor inertia on the motor side (kg·m²).
    #[serde(default)]
    pub rotor_inertia: f64,
    /// Viscous friction on the motor side (N·m·s/rad).
    #[serde(default)]
    pub viscous_friction: f64,
}

impl ActuatorParams {
    /// Drive constant `a = α·n̄` (N·m/A at the joint).
    pub fn drive_constant(&self) -> f64 {
        self.motor_constant * self.gear_ratio
    }

    /// `a²/R`, the back-EMF damping seen at the joint.
    pub fn back_emf_damping(&self) -> f64 {
        let a = self.drive_constant();
        a * a / self.resistance
    }

    /// `R/a²`, the Joule weight of the virtual torque.
    pub fn joule_weight(&self) -> f64 {
        let a = self.drive_constant();
        self.resistance / (a * a)
    }

    /// Rotor inertia reflected through the gearbox, `J·n̄²`.
    pub fn reflected_inertia(&self) -> f64 {
        self.rotor_inertia * self.gear_ratio * self.gear_ratio
    }

    /// Friction reflected through the gearbox, `b·n̄²`.
    pub fn reflected_friction(&self) -> f64 {
        self.viscous_friction * self.gear_ratio * self.gear_ratio
    }

    /// Largest joint torque the converter can realize at supply voltage `vs`.
    pub fn torque_ceiling(&self, vs: f64) -> f64 {
        self.drive_constant() * vs / self.resistance
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.gear_ratio > 0.0
            && self.motor_constant > 0.0
            && self.resistance > 0.0
            && self.rotor_inertia >= 0.0
            && self.viscous_friction >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(CrmError::Config(format!(
                "actuator parameters must satisfy n > 0, alpha > 0, R > 0, J >= 0, b >= 0 (got {self:?})"
            )))
        }
    }
}

/// One planar three-revolute arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub link_lengths: [f64; 3],
    pub link_masses: [f64; 3],
    /// Distance of each link's center of mass from its proximal joint.
    pub link_com_offsets: [f64; 3],
    /// Link inertia about its center of mass.
    pub link_inertias: [f64; 3],
    pub base_pose: PlanarPose,
    pub actuators: [ActuatorParams; 3],
}

impl RobotModel {
    /// Links modelled as uniform slender rods: COM at mid-length, `I = mL²/12`.
    pub fn uniform_rods(
        lengths: [f64; 3],
        masses: [f64; 3],
        base_pose: PlanarPose,
        actuator: ActuatorParams,
    ) -> Self {
        let mut com = [0.0; 3];
        let mut inertia = [0.0; 3];
        for k in 0..3 {
            com[k] = 0.5 * lengths[k];
            inertia[k] = masses[k] * lengths[k] * lengths[k] / 12.0;
        }
        Self {
            link_lengths: lengths,
            link_masses: masses,
            link_com_offsets: com,
            link_inertias: inertia,
            base_pose,
            actuators: [actuator; 3],
        }
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Diagonal inertia added by the joint mechanisms.
    pub fn reflected_inertia(&self) -> Vector3<f64> {
        Vector3::from_fn(|j, _| self.actuators[j].reflected_inertia())
    }

    /// Diagonal damping added by friction and back-EMF: `b·n̄² + a²/R`.
    pub fn joint_damping(&self) -> Vector3<f64> {
        Vector3::from_fn(|j, _| {
            self.actuators[j].reflected_friction() + self.actuators[j].back_emf_damping()
        })
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            if !(self.link_lengths[k] > 0.0 && self.link_masses[k] > 0.0) {
                return Err(CrmError::Config(format!(
                    "link {} must have positive length and mass",
                    k + 1
                )));
            }
            if !(self.link_inertias[k] >= 0.0) || !self.link_com_offsets[k].is_finite() {
                return Err(CrmError::Config(format!(
                    "link {} must have a finite COM offset and non-negative inertia",
                    k + 1
                )));
            }
            self.actuators[k].validate()?;
        }
        Ok(())
    }
}

/// Rigid payload carried by all arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    pub mass: f64,
    /// Planar moment of inertia about the COM (kg·m²).
    pub inertia: f64,
    pub grasp: GraspGeometry,
    /// Gravitational acceleration in the world frame (m/s²).
    pub gravity: [f64; 2],
}

impl LoadModel {
    /// Uniform rod of length `length`, grasped at both ends.
    pub fn rod(mass: f64, length: f64, gravity: f64) -> Self {
        Self {
            mass,
            inertia: mass * length * length / 12.0,
            grasp: GraspGeometry {
                offsets: vec![[0.5 * length, 0.0], [-0.5 * length, 0.0]],
                orientation_offsets: vec![0.0, 0.0],
            },
            gravity: [0.0, -gravity],
        }
    }

    pub fn gravity_vector(&self) -> Vector2<f64> {
        Vector2::new(self.gravity[0], self.gravity[1])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.inertia > 0.0) {
            return Err(CrmError::Config("load mass and inertia must be positive".into()));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(CrmError::Config("gravity must be finite".into()));
        }
        self.grasp.validate()
    }
}
