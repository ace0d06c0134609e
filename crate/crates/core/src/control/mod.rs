//! Impedance control, semi-active modulation and passivity checks.

pub mod gains;
pub mod impedance;
pub mod passivity;
pub mod svc;

pub use gains::{GainSample, GainSchedule, ImpedanceGains, ScheduleRow};
pub use impedance::{
    auxiliary_error, filter_acceleration, impedance_filter_step, reference_signals,
    virtual_torque, virtual_torque_law, ArmGains, ControllerState, FilterOutput,
    ReferenceSignals,
};
pub use passivity::{
    audit_schedule, passivity_check, AuditReport, AuditRow, PassivityReport, Regime,
};
pub use svc::{applied_input, svc_modulate, Modulation};
