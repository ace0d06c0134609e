//! Impedance gains and time-varying offset schedules.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CrmError, Result};

/// Stacked per-joint diagonal gains for all arms.
///
/// `B = damping + damping_offset`, `K = stiffness + stiffness_offset`. When a
/// schedule is attached, its rows replace the constant offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceGains {
    /// Target inertia `M` (kg·m²).
    pub inertia: Vec<f64>,
    /// Fixed damping `B_c` (N·m·s/rad).
    pub damping: Vec<f64>,
    /// Fixed stiffness `K_c` (N·m/rad).
    pub stiffness: Vec<f64>,
    /// `B̄` (N·m·s/rad).
    pub damping_offset: Vec<f64>,
    /// `K̄` (N·m/rad).
    pub stiffness_offset: Vec<f64>,
    /// `Λ` (1/s).
    pub lambda: Vec<f64>,
    /// `K_D` (N·m·s/rad).
    pub kd: Vec<f64>,
    #[serde(skip)]
    pub schedule: Option<GainSchedule>,
}

/// Gains frozen at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSample {
    pub inertia: DVector<f64>,
    pub damping: DVector<f64>,
    pub stiffness: DVector<f64>,
    pub damping_rate: DVector<f64>,
    pub stiffness_rate: DVector<f64>,
}

impl ImpedanceGains {
    /// Same diagonal value on every one of `joints` joints, zero offsets.
    pub fn uniform(joints: usize, m: f64, b: f64, k: f64, lambda: f64, kd: f64) -> Self {
        Self {
            inertia: vec![m; joints],
            damping: vec![b; joints],
            stiffness: vec![k; joints],
            damping_offset: vec![0.0; joints],
            stiffness_offset: vec![0.0; joints],
            lambda: vec![lambda; joints],
            kd: vec![kd; joints],
            schedule: None,
        }
    }

    pub fn joints(&self) -> usize {
        self.inertia.len()
    }

    pub fn offsets_at(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        match &self.schedule {
            Some(s) => s.offsets_at(t),
            None => (
                DVector::from_column_slice(&self.damping_offset),
                DVector::from_column_slice(&self.stiffness_offset),
            ),
        }
    }

    pub fn at(&self, t: f64) -> GainSample {
        let (bo, ko) = self.offsets_at(t);
        let n = self.joints();
        let (damping_rate, stiffness_rate) = match &self.schedule {
            Some(s) => s.rates_at(t),
            None => (DVector::zeros(n), DVector::zeros(n)),
        };
        GainSample {
            inertia: DVector::from_column_slice(&self.inertia),
            damping: DVector::from_column_slice(&self.damping) + bo,
            stiffness: DVector::from_column_slice(&self.stiffness) + ko,
            damping_rate,
            stiffness_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints();
        let lens = [
            ("damping", self.damping.len()),
            ("stiffness", self.stiffness.len()),
            ("damping_offset", self.damping_offset.len()),
            ("stiffness_offset", self.stiffness_offset.len()),
            ("lambda", self.lambda.len()),
            ("kd", self.kd.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(CrmError::InvalidGains(format!(
                    "{name} has {len} entries, expected {n}"
                )));
            }
        }
        let positive = |name: &str, v: &[f64]| {
            if v.iter().all(|x| x.is_finite() && *x > 0.0) {
                Ok(())
            } else {
                Err(CrmError::InvalidGains(format!("{name} must be positive definite")))
            }
        };
        positive("inertia", &self.inertia)?;
        positive("lambda", &self.lambda)?;
        positive("kd", &self.kd)?;
        match &self.schedule {
            None => {
                let g = self.at(0.0);
                positive("damping", g.damping.as_slice())?;
                positive("stiffness", g.stiffness.as_slice())?;
            }
            Some(s) => {
                if s.joints() != n {
                    return Err(CrmError::Schedule(format!(
                        "schedule covers {} joints, gains cover {n}",
                        s.joints()
                    )));
                }
                for row in &s.rows {
                    let g = self.at(row.t);
                    if !g.damping.iter().chain(g.stiffness.iter()).all(|x| *x > 0.0) {
                        return Err(CrmError::InvalidGains(format!(
                            "damping or stiffness not positive definite at t = {}",
                            row.t
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleRow {
    pub t: f64,
    pub damping_offset: Vec<f64>,
    pub stiffness_offset: Vec<f64>,
}

/// Piecewise-linear `B̄(t)`, `K̄(t)`; held constant outside the table.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSchedule {
    pub rows: Vec<ScheduleRow>,
}

impl GainSchedule {
    pub fn new(rows: Vec<ScheduleRow>) -> Result<Self> {
        let first = rows.first().ok_or_else(|| CrmError::Schedule("schedule is empty".into()))?;
        let n = first.damping_offset.len();
        for (i, r) in rows.iter().enumerate() {
            if r.damping_offset.len() != n || r.stiffness_offset.len() != n {
                return Err(CrmError::Schedule(format!("row {} has inconsistent width", i + 1)));
            }
            let finite = r.t.is_finite()
                && r.damping_offset.iter().chain(&r.stiffness_offset).all(|v| v.is_finite());
            if !finite {
                return Err(CrmError::Schedule(format!("row {} is not finite", i + 1)));
            }
            if i > 0 && r.t <= rows[i - 1].t {
                return Err(CrmError::Schedule(format!(
                    "times must be strictly increasing (row {})",
                    i + 1
                )));
            }
        }
        Ok(Self { rows })
    }

    /// Constant offsets over `[t0, t1]`.
    pub fn constant(t0: f64, t1: f64, damping: &[f64], stiffness: &[f64]) -> Result<Self> {
        let row = |t| ScheduleRow {
            t,
            damping_offset: damping.to_vec(),
            stiffness_offset: stiffness.to_vec(),
        };
        Self::new(vec![row(t0), row(t1)])
    }

    pub fn joints(&self) -> usize {
        self.rows[0].damping_offset.len()
    }

    pub fn start(&self) -> f64 {
        self.rows[0].t
    }

    pub fn end(&self) -> f64 {
        self.rows[self.rows.len() - 1].t
    }

    /// Index of the segment `[rows[i].t, rows[i+1].t)` containing `t`, if any.
    fn segment(&self, t: f64) -> Option<usize> {
        if self.rows.len() < 2 || t < self.start() || t >= self.end() {
            return None;
        }
        Some(self.rows.partition_point(|r| r.t <= t) - 1)
    }

    pub fn offsets_at(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let pick = |r: &ScheduleRow| {
            (
                DVector::from_column_slice(&r.damping_offset),
                DVector::from_column_slice(&r.stiffness_offset),
            )
        };
        match self.segment(t) {
            None if t < self.start() => pick(&self.rows[0]),
            None => pick(&self.rows[self.rows.len() - 1]),
            Some(i) => {
                let (a, b) = (&self.rows[i], &self.rows[i + 1]);
                let s = (t - a.t) / (b.t - a.t);
                let (ba, ka) = pick(a);
                let (bb, kb) = pick(b);
                (&ba + (bb - &ba) * s, &ka + (kb - &ka) * s)
            }
        }
    }

    /// Right-continuous slopes `(Ḃ, K̇)`; zero outside the table.
    pub fn rates_at(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.joints();
        match self.segment(t) {
            None => (DVector::zeros(n), DVector::zeros(n)),
            Some(i) => {
                let (a, b) = (&self.rows[i], &self.rows[i + 1]);
                let h = b.t - a.t;
                let slope = |x: &[f64], y: &[f64]| {
                    DVector::from_iterator(n, x.iter().zip(y).map(|(p, q)| (q - p) / h))
                };
                (
                    slope(&a.damping_offset, &b.damping_offset),
                    slope(&a.stiffness_offset, &b.stiffness_offset),
                )
            }
        }
    }

    /// Reads a CSV with a header row and columns `t, B̄_1..B̄_n, K̄_1..K̄_n`.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let width = rdr.headers().map_err(|e| CrmError::Schedule(e.to_string()))?.len();
        if width < 3 || (width - 1) % 2 != 0 {
            return Err(CrmError::Schedule(format!(
                "expected 1 + 2n columns (t, damping offsets, stiffness offsets), got {width}"
            )));
        }
        let n = (width - 1) / 2;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CrmError::Schedule(e.to_string()))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| CrmError::Schedule(format!("line {}: {e}", i + 2)))?;
            if vals.len() != width {
                return Err(CrmError::Schedule(format!(
                    "line {}: expected {width} fields, got {}",
                    i + 2,
                    vals.len()
                )));
            }
            rows.push(ScheduleRow {
                t: vals[0],
                damping_offset: vals[1..=n].to_vec(),
                stiffness_offset: vals[n + 1..].to_vec(),
            });
        }
        Self::new(rows)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| {
            CrmError::Schedule(format!("cannot open {}: {e}", path.display()))
        })?;
        Self::from_csv_reader(file)
    }
}
