//! Passivity certificate for time-varying damping and stiffness.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gains::{GainSchedule, ImpedanceGains};
use crate::error::{CrmError, Result};

/// Definiteness of `P̄`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "ND")]
    NegativeDefinite,
    #[serde(rename = "PD")]
    PositiveDefinite,
    #[serde(rename = "ID")]
    Indefinite,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::NegativeDefinite => "ND",
            Regime::PositiveDefinite => "PD",
            Regime::Indefinite => "ID",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassivityReport {
    /// Largest eigenvalue of the symmetric part of `P̄`.
    pub lambda_bar: f64,
    /// Smallest eigenvalue of `B`.
    pub lambda_b_min: f64,
    /// `2·λ_B² − λ̄`.
    pub margin: f64,
    pub regime: Regime,
    /// Gains are frozen at this instant (`Ḃ = K̇ = 0`).
    pub constant: bool,
}

impl PassivityReport {
    /// Constant gains fall back to the time-invariant case, where the filter is
    /// passive for any positive definite `B`, `K`.
    pub fn passive(&self) -> bool {
        self.margin > 0.0 || self.constant
    }
}

/// `P̄ = [K̇, K − KB; K − BK, MḂ]` for diagonal gains.
pub fn p_bar(
    b: &DVector<f64>,
    k: &DVector<f64>,
    bdot: &DVector<f64>,
    kdot: &DVector<f64>,
    m: &DVector<f64>,
) -> DMatrix<f64> {
    let n = b.len();
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        let off = k[j] - k[j] * b[j];
        p[(j, j)] = kdot[j];
        p[(j, n + j)] = off;
        p[(n + j, j)] = k[j] - b[j] * k[j];
        p[(n + j, n + j)] = m[j] * bdot[j];
    }
    p
}

pub fn passivity_check(
    b: &DVector<f64>,
    k: &DVector<f64>,
    bdot: &DVector<f64>,
    kdot: &DVector<f64>,
    m: &DVector<f64>,
) -> Result<PassivityReport> {
    let n = b.len();
    if [k.len(), bdot.len(), kdot.len(), m.len()].iter().any(|&l| l != n) {
        return Err(CrmError::InvalidGains("gain vectors differ in length".into()));
    }
    if !b.iter().chain(k.iter()).all(|v| v.is_finite() && *v > 0.0) {
        return Err(CrmError::InvalidGains("B and K must be positive definite".into()));
    }
    // Diagonal gains make P̄ a direct sum of 2×2 blocks, one per joint.
    let (mut lo, mut hi, mut scale) = (f64::INFINITY, f64::NEG_INFINITY, 1.0f64);
    for j in 0..n {
        let (a, d, o) = (kdot[j], m[j] * bdot[j], k[j] - k[j] * b[j]);
        let mean = 0.5 * (a + d);
        let radius = (0.5 * (a - d)).hypot(o);
        lo = lo.min(mean - radius);
        hi = hi.max(mean + radius);
        scale = scale.max(a.abs()).max(d.abs()).max(o.abs());
    }
    let lambda_b_min = b.min();
    let tol = 1e-12 * scale;
    let regime = if hi <= tol {
        Regime::NegativeDefinite
    } else if lo >= -tol {
        Regime::PositiveDefinite
    } else {
        Regime::Indefinite
    };
    Ok(PassivityReport {
        lambda_bar: hi,
        lambda_b_min,
        margin: 2.0 * lambda_b_min * lambda_b_min - hi,
        regime,
        constant: bdot.iter().chain(kdot.iter()).all(|v| *v == 0.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub t: f64,
    pub report: PassivityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub certified: bool,
    pub first_violation: Option<f64>,
}

/// Samples `schedule` on a uniform grid of spacing `sample_dt` (inclusive of
/// both ends) and checks every sample. Non-positive-definite gains are an
/// error naming the first offending time.
pub fn audit_schedule(
    gains: &ImpedanceGains,
    schedule: &GainSchedule,
    sample_dt: f64,
) -> Result<AuditReport> {
    if !(sample_dt > 0.0) {
        return Err(CrmError::Domain("audit sample spacing must be positive".into()));
    }
    let mut g = gains.clone();
    g.schedule = Some(schedule.clone());
    let (t0, t1) = (schedule.start(), schedule.end());
    let count = ((t1 - t0) / sample_dt + 1e-9).floor() as usize + 1;
    let mut rows = Vec::with_capacity(count);
    let mut first_violation = None;
    for i in 0..count {
        let t = (t0 + i as f64 * sample_dt).min(t1);
        let s = g.at(t);
        let report = passivity_check(
            &s.damping,
            &s.stiffness,
            &s.damping_rate,
            &s.stiffness_rate,
            &s.inertia,
        )
        .map_err(|_| {
            CrmError::InvalidGains(format!("damping or stiffness not positive definite at t = {t}"))
        })?;
        if !report.passive() && first_violation.is_none() {
            first_violation = Some(t);
        }
        rows.push(AuditRow { t, report });
    }
    Ok(AuditReport { certified: first_violation.is_none(), rows, first_violation })
}
