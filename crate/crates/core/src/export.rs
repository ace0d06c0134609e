//! CSV and JSON artifacts: comma-separated, header row, LF endings, `%.12e` numbers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::AuditReport;
use crate::energy::{sankey_export, EnergyLedger};
use crate::error::Result;
use crate::optimize::{GaConfig, GaResult};
use crate::sim::{LoadTrajectory, StepRecord};

/// C `printf("%.12e")`: twelve mantissa digits, signed exponent of at least two digits.
pub fn fmt_e(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub struct CsvTable {
    out: BufWriter<File>,
    columns: usize,
}

impl CsvTable {
    pub fn create(path: &Path, header: &[String]) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(header.join(",").as_bytes())?;
        out.write_all(b"\n")?;
        Ok(Self { out, columns: header.len() })
    }

    pub fn row(&mut self, values: &[f64]) -> io::Result<()> {
        debug_assert_eq!(values.len(), self.columns);
        let line: Vec<String> = values.iter().map(|v| fmt_e(*v)).collect();
        self.out.write_all(line.join(",").as_bytes())?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

fn joint_names(prefix: &str, arms: usize) -> Vec<String> {
    (1..=arms)
        .flat_map(|i| (1..=3).map(move |j| format!("{prefix}_r{i}_j{j}")))
        .collect()
}

fn header(parts: &[Vec<String>]) -> Vec<String> {
    std::iter::once("t".to_string()).chain(parts.iter().flatten().cloned()).collect()
}

/// Streams every `stride`-th step record of a rollout to the plot files
/// `timeseries.csv`, `joints_r{i}.csv`, `torques.csv`, `powers.csv` and
/// `load_path.csv`. Rows reach disk even if the rollout later fails.
pub struct RolloutWriter {
    stride: usize,
    trajectory: LoadTrajectory,
    timeseries: CsvTable,
    joints: Vec<CsvTable>,
    torques: CsvTable,
    powers: CsvTable,
    load_path: CsvTable,
    error: Option<io::Error>,
}

impl RolloutWriter {
    pub fn create(dir: &Path, arms: usize, stride: usize, trajectory: LoadTrajectory) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut ts = header(&[
            joint_names("q", arms),
            joint_names("qd", arms),
            joint_names("u", arms),
            joint_names("tv", arms),
            joint_names("p", arms),
        ]);
        ts.extend(["de_s".to_string(), "constraint_residual".to_string()]);
        let joints = (1..=arms)
            .map(|i| {
                let cols: Vec<String> = ["q", "q_ref", "qd", "qd_ref"]
                    .iter()
                    .flat_map(|p| (1..=3).map(move |j| format!("{p}{j}")))
                    .collect();
                CsvTable::create(&dir.join(format!("joints_r{i}.csv")), &header(&[cols]))
            })
            .collect::<io::Result<Vec<_>>>()?;
        let mut pw = header(&[joint_names("p", arms)]);
        pw.extend(["storage", "joule_loss", "external"].map(String::from));
        Ok(Self {
            stride: stride.max(1),
            trajectory,
            timeseries: CsvTable::create(&dir.join("timeseries.csv"), &ts)?,
            joints,
            torques: CsvTable::create(
                &dir.join("torques.csv"),
                &header(&[joint_names("tv", arms), joint_names("torque", arms), joint_names("t_ext", arms)]),
            )?,
            powers: CsvTable::create(&dir.join("powers.csv"), &pw)?,
            load_path: CsvTable::create(
                &dir.join("load_path.csv"),
                &header(&[["x", "y", "phi", "x_ref", "y_ref", "phi_ref"].map(String::from).to_vec()]),
            )?,
            error: None,
        })
    }

    /// Observer for [`crate::sim::Simulation::run`].
    pub fn observe(&mut self, rec: &StepRecord) {
        if self.error.is_some() || !rec.index.is_multiple_of(self.stride) {
            return;
        }
        if let Err(e) = self.write(rec) {
            self.error = Some(e);
        }
    }

    fn write(&mut self, rec: &StepRecord) -> io::Result<()> {
        let st = rec.state;
        let arms = &rec.eval.arms;
        let t = st.t;
        let per_joint = |f: &dyn Fn(usize) -> [f64; 3]| -> Vec<f64> { (0..arms.len()).flat_map(f).collect() };
        let q = per_joint(&|i| st.q(i).into());
        let qd = per_joint(&|i| st.qd(i).into());
        let u = per_joint(&|i| arms[i].ratio.into());
        let tv = per_joint(&|i| arms[i].virtual_torque.into());
        let p = &rec.power.joint_storage_power;

        let mut row = vec![t];
        for part in [&q, &qd, &u, &tv, p] {
            row.extend_from_slice(part);
        }
        row.extend([rec.ledger.de_s, rec.constraint_drift]);
        self.timeseries.row(&row)?;

        for (i, table) in self.joints.iter_mut().enumerate() {
            let r = &arms[i].reference;
            let mut row = vec![t];
            row.extend(st.q(i).iter());
            row.extend(r.q.iter());
            row.extend(st.qd(i).iter());
            row.extend(r.qd.iter());
            table.row(&row)?;
        }

        let torque = per_joint(&|i| arms[i].torque.into());
        let t_ext = per_joint(&|i| arms[i].t_ext.into());
        let mut row = vec![t];
        for part in [&tv, &torque, &t_ext] {
            row.extend_from_slice(part);
        }
        self.torques.row(&row)?;

        let mut row = vec![t];
        row.extend_from_slice(p);
        row.extend([rec.power.storage(), rec.power.joule, rec.power.external]);
        self.powers.row(&row)?;

        let pose = st.load_pose();
        let reference = self.trajectory.at(t).map(|r| r.pose).unwrap_or(self.trajectory.end);
        self.load_path.row(&[t, pose.x, pose.y, pose.phi, reference.x, reference.y, reference.phi])?;
        Ok(())
    }

    /// Flushes every file and reports the first write error, if any.
    pub fn finish(mut self) -> io::Result<()> {
        let mut result = match self.error.take() {
            Some(e) => Err(e),
            None => Ok(()),
        };
        for table in std::iter::once(&mut self.timeseries)
            .chain(self.joints.iter_mut())
            .chain([&mut self.torques, &mut self.powers, &mut self.load_path])
        {
            let flushed = table.flush();
            if result.is_ok() {
                result = flushed;
            }
        }
        result
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_ledger(dir: &Path, ledger: &EnergyLedger) -> Result<()> {
    write_json(&dir.join("ledger.json"), ledger)?;
    write_json(&dir.join("sankey.json"), &sankey_export(ledger))
}

/// Per-sample passivity rows: `t, lambda_bar, lambda_b, margin, regime`.
pub fn write_audit_csv(path: &Path, audit: &AuditReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,lambda_bar,lambda_b,margin,regime")?;
    for row in &audit.rows {
        let r = &row.report;
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_e(row.t),
            fmt_e(r.lambda_bar),
            fmt_e(r.lambda_b_min),
            fmt_e(r.margin),
            r.regime.label()
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestGains {
    /// Diagonal of B = B_c + B̄.
    pub damping: Vec<f64>,
    /// Diagonal of K = K_c + K̄.
    pub stiffness: Vec<f64>,
    pub damping_offset: Vec<f64>,
    pub stiffness_offset: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub config: GaConfig,
    pub history: Vec<crate::optimize::GenerationStats>,
    pub evaluations: usize,
    pub feasible_found: bool,
    pub best: BestGains,
    pub baseline_de_s: f64,
    pub de_s: f64,
    pub de_nr: f64,
    /// `None` when ΔE_NR is zero.
    pub effectiveness: Option<f64>,
    pub improvement: f64,
}

impl OptimizationReport {
    /// `nominal_damping`/`nominal_stiffness` are the fixed parts B_c, K_c.
    /// `rerun` is the full-resolution ledger of the best candidate.
    pub fn new(
        config: &GaConfig,
        result: &GaResult,
        nominal_damping: &[f64],
        nominal_stiffness: &[f64],
        rerun: &EnergyLedger,
        baseline_rerun: &EnergyLedger,
    ) -> Self {
        let b = &result.best;
        let add = |a: &[f64], d: &[f64]| a.iter().zip(d).map(|(x, y)| x + y).collect::<Vec<_>>();
        Self {
            config: config.clone(),
            history: result.history.clone(),
            evaluations: result.evaluations,
            feasible_found: result.feasible_found,
            best: BestGains {
                damping: add(nominal_damping, &b.damping_offset),
                stiffness: add(nominal_stiffness, &b.stiffness_offset),
                damping_offset: b.damping_offset.clone(),
                stiffness_offset: b.stiffness_offset.clone(),
            },
            baseline_de_s: baseline_rerun.de_s,
            de_s: rerun.de_s,
            de_nr: rerun.de_nr,
            effectiveness: rerun.effectiveness().ok(),
            improvement: rerun.de_s - baseline_rerun.de_s,
        }
    }
}
