use serde::{Deserialize, Serialize};

use super::effectiveness;
use crate::error::Result;

/// Instantaneous energy quantities at one accepted step endpoint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PowerSample {
    /// Per-joint charging power (W), stacked over arms.
    pub joint_storage_power: Vec<f64>,
    /// Σ armature Joule loss rate (W).
    pub joule: f64,
    /// Σ `b n̄² q̇²` (W).
    pub friction: f64,
    /// `Σ q̇ᵀJᵀF` (W).
    pub external: f64,
    /// Arm mechanical energy including reflected rotor inertia (J).
    pub arm_energy: f64,
    pub load_kinetic: f64,
    pub load_potential: f64,
}

impl PowerSample {
    pub fn storage(&self) -> f64 {
        self.joint_storage_power.iter().sum()
    }

    /// Consumption with negative per-joint consumption discarded.
    pub fn non_regenerative(&self) -> f64 {
        self.joint_storage_power.iter().map(|p| (-p).max(0.0)).sum()
    }
}

/// Running energy integrals of one rollout (J).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// Net charge into storage; positive means regeneration.
    pub de_s: f64,
    pub w_ext: f64,
    /// Change in arm mechanical energy.
    pub de_m: f64,
    pub sigma_m: f64,
    pub sigma_e: f64,
    /// Consumption with every negative joint consumption zeroed.
    pub de_nr: f64,
    pub closure_residual: f64,
    /// Per-joint charged energy, stacked over arms.
    pub joint_storage_energy: Vec<f64>,
    pub load_kinetic_change: f64,
    pub load_potential_change: f64,
    pub duration: f64,
}

impl EnergyLedger {
    pub fn new(joints: usize) -> Self {
        Self { joint_storage_energy: vec![0.0; joints], ..Default::default() }
    }

    /// Trapezoidal update over one step from endpoint `a` to endpoint `b`.
    pub fn accumulate(&mut self, a: &PowerSample, b: &PowerSample, dt: f64) {
        let h = 0.5 * dt;
        self.de_s += h * (a.storage() + b.storage());
        self.w_ext += h * (a.external + b.external);
        self.sigma_m += h * (a.friction + b.friction);
        self.sigma_e += h * (a.joule + b.joule);
        self.de_nr += h * (a.non_regenerative() + b.non_regenerative());
        self.de_m += b.arm_energy - a.arm_energy;
        self.load_kinetic_change += b.load_kinetic - a.load_kinetic;
        self.load_potential_change += b.load_potential - a.load_potential;
        for (e, (pa, pb)) in self
            .joint_storage_energy
            .iter_mut()
            .zip(a.joint_storage_power.iter().zip(&b.joint_storage_power))
        {
            *e += h * (pa + pb);
        }
        self.duration += dt;
        self.closure_residual = self.w_ext - self.de_s - self.de_m - self.sigma_m - self.sigma_e;
    }

    /// Sums two ledgers, for sweeps over independent rollouts.
    pub fn merge(&self, other: &Self) -> Self {
        let mut joints = self.joint_storage_energy.clone();
        if joints.len() < other.joint_storage_energy.len() {
            joints.resize(other.joint_storage_energy.len(), 0.0);
        }
        for (a, b) in joints.iter_mut().zip(&other.joint_storage_energy) {
            *a += b;
        }
        Self {
            de_s: self.de_s + other.de_s,
            w_ext: self.w_ext + other.w_ext,
            de_m: self.de_m + other.de_m,
            sigma_m: self.sigma_m + other.sigma_m,
            sigma_e: self.sigma_e + other.sigma_e,
            de_nr: self.de_nr + other.de_nr,
            closure_residual: self.closure_residual + other.closure_residual,
            joint_storage_energy: joints,
            load_kinetic_change: self.load_kinetic_change + other.load_kinetic_change,
            load_potential_change: self.load_potential_change + other.load_potential_change,
            duration: self.duration + other.duration,
        }
    }

    /// Energy drawn from storage with regeneration (ΔE_R).
    pub fn consumption(&self) -> f64 {
        -self.de_s
    }

    pub fn effectiveness(&self) -> Result<f64> {
        effectiveness(self.consumption(), self.de_nr)
    }

    /// Largest magnitude among the balance terms.
    pub fn scale(&self) -> f64 {
        [self.w_ext, self.de_s, self.de_m, self.sigma_m, self.sigma_e]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn relative_closure(&self) -> f64 {
        let s = self.scale();
        if s == 0.0 {
            0.0
        } else {
            self.closure_residual.abs() / s
        }
    }
}
