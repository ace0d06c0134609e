//! Semi-active virtual control: converter voltage ratio from the virtual torque.

use crate::dynamics::ActuatorParams;
use crate::error::{CrmError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Modulation {
    /// Voltage ratio, clamped to [−1, 1].
    pub u: f64,
    pub saturated: bool,
}

/// `u = 𝒯^v·R / (a·V_s)`, clamped; flags `|𝒯^v| > V_s·a/R`.
pub fn svc_modulate(tv: f64, vs: f64, act: &ActuatorParams) -> Result<Modulation> {
    if !(vs > 0.0) {
        return Err(CrmError::StorageDepleted(vs));
    }
    let a = act.drive_constant();
    let saturated = tv.abs() > act.torque_ceiling(vs);
    let u = if saturated { tv.signum() } else { tv * act.resistance / (a * vs) };
    Ok(Modulation { u: u.clamp(-1.0, 1.0), saturated })
}

/// Joint torque realized by ratio `u`: `U = a·u·V_s/R`.
pub fn applied_input(u: f64, vs: f64, act: &ActuatorParams) -> f64 {
    act.drive_constant() * u * vs / act.resistance
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn motor() -> ActuatorParams {
        ActuatorParams {
            gear_ratio: 50.0,
            motor_constant: 0.07,
            resistance: 0.4,
            rotor_inertia: 0.0,
            viscous_friction: 0.0,
        }
    }

    #[test]
    fn formula_cases() {
        let m = motor();
        assert_eq!(svc_modulate(0.0, 48.0, &m).unwrap().u, 0.0);
        assert_relative_eq!(svc_modulate(42.0, 48.0, &m).unwrap().u, 0.1, epsilon = 1e-15);
        assert_relative_eq!(applied_input(1.0, 48.0, &m), 420.0, epsilon = 1e-12);
        assert_eq!(applied_input(0.0, 48.0, &m), 0.0);
        let s = svc_modulate(-500.0, 48.0, &m).unwrap();
        assert_eq!(s.u, -1.0);
        assert!(s.saturated);
        assert!((applied_input(s.u, 48.0, &m) + 500.0).abs() > 1.0);
        assert!(matches!(svc_modulate(1.0, 0.0, &m), Err(CrmError::StorageDepleted(_))));
    }

    proptest! {
        #[test]
        fn inverse_pair_off_saturation(tv in -420.0..420.0f64, vs in 1.0..100.0f64) {
            let m = motor();
            let r = svc_modulate(tv * vs / 48.0, vs, &m).unwrap();
            let target = tv * vs / 48.0;
            prop_assert!(!r.saturated);
            prop_assert!((applied_input(r.u, vs, &m) - target).abs() < 1e-12 * target.abs().max(1.0));
        }

        #[test]
        fn flag_iff_beyond_ceiling(tv in -2000.0..2000.0f64, vs in 1.0..100.0f64) {
            let m = motor();
            let r = svc_modulate(tv, vs, &m).unwrap();
            prop_assert_eq!(r.saturated, tv.abs() > vs * m.drive_constant() / m.resistance);
            prop_assert!(r.u.abs() <= 1.0);
        }
    }
}
