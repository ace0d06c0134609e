//! Energy flows between the arms, the joint drives and the storage element.

mod ledger;
mod sankey;

pub use ledger::{EnergyLedger, PowerSample};
pub use sankey::{sankey_export, LoadBalance, SankeyDiagram, SankeyFlow};

use crate::dynamics::ActuatorParams;
use crate::error::{CrmError, Result};

/// Armature Joule loss `R·I²` written in terms of the joint torque and speed:
/// `(R/a²)U² + (a²/R)q̇² − 2Uq̇`.
pub fn joule_loss_rate(torque: f64, qd: f64, act: &ActuatorParams) -> f64 {
    let rw = act.joule_weight();
    let kb = act.back_emf_damping();
    // Completed square of the expression above; identical value, never negative.
    let i_scaled = torque * rw.sqrt() - qd * kb.sqrt();
    i_scaled * i_scaled
}

/// Armature current for voltage ratio `u` at supply `vs` and joint speed `qd`.
pub fn motor_current(u: f64, vs: f64, qd: f64, act: &ActuatorParams) -> f64 {
    (u * vs - act.drive_constant() * qd) / act.resistance
}

/// Charging power contributed by one joint: `q̇U − (R/a²)U²`.
pub fn joint_storage_power(torque: f64, qd: f64, act: &ActuatorParams) -> f64 {
    qd * torque - act.joule_weight() * torque * torque
}

/// `dE_s/dt = q̇ᵀ𝒯 − 𝒯ᵀR_a𝒯` over all joints; positive charges the storage.
pub fn storage_power(torque: &[f64], qd: &[f64], acts: &[ActuatorParams]) -> f64 {
    torque
        .iter()
        .zip(qd)
        .zip(acts)
        .map(|((t, w), a)| joint_storage_power(*t, *w, a))
        .sum()
}

/// `ε = 1 − ΔE_R/ΔE_NR`, both given as consumed energy.
pub fn effectiveness(de_r: f64, de_nr: f64) -> Result<f64> {
    if de_nr == 0.0 || !de_nr.is_finite() {
        return Err(CrmError::UndefinedEffectiveness);
    }
    Ok(1.0 - de_r / de_nr)
}
