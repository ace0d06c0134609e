//! Gain search: a real-coded genetic algorithm and an exhaustive grid oracle.

mod exec;
mod ga;
mod grid;

pub use exec::{map_indexed, ExecMode};
pub use ga::{ga_run, GaResult, GenerationStats};
pub use grid::{grid_oracle, linspace, GridResult};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{CrmError, Result};
use crate::scenario::ScenarioConfig;
use crate::sim::RolloutSummary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneKind {
    Damping,
    Stiffness,
}

/// One decision variable: an offset on a stacked joint index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneId {
    pub kind: GeneKind,
    pub joint: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub max_generations: usize,
    pub crossover_prob: f64,
    pub mutation_rate: f64,
    pub seed: u64,
    pub elitism: usize,
    pub tournament_size: usize,
    /// α of the BLX-α blend crossover.
    pub blend_alpha: f64,
    /// Mutation standard deviation as a fraction of the box width.
    pub mutation_sigma: f64,
    /// `[LB, UB]` of `B̄` per stacked joint.
    pub damping_bounds: Vec<[f64; 2]>,
    /// `[LB, UB]` of `K̄` per stacked joint.
    pub stiffness_bounds: Vec<[f64; 2]>,
    /// Genes searched; all others stay at the scenario's offsets. `None` frees all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_genes: Option<Vec<GeneId>>,
    /// Integrator step of candidate rollouts; defaults to the scenario's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout_dt: Option<f64>,
}

impl GaConfig {
    /// Population 50, 30 generations, crossover 0.75, mutation 0.02, boxes
    /// `±damping` and `±stiffness` on every joint.
    pub fn symmetric_boxes(joints: usize, damping: f64, stiffness: f64) -> Self {
        Self {
            population: 50,
            max_generations: 30,
            crossover_prob: 0.75,
            mutation_rate: 0.02,
            seed: 0,
            elitism: 1,
            tournament_size: 2,
            blend_alpha: 0.5,
            mutation_sigma: 0.1,
            damping_bounds: vec![[-damping, damping]; joints],
            stiffness_bounds: vec![[-stiffness, stiffness]; joints],
            free_genes: None,
            rollout_dt: None,
        }
    }

    pub fn validate(&self, joints: usize) -> Result<()> {
        let err = |m: String| Err(CrmError::Config(format!("optimizer: {m}")));
        if self.population < 2 {
            return err("population must be at least 2".into());
        }
        if self.max_generations < 1 {
            return err("max_generations must be at least 1".into());
        }
        for (name, p) in [("crossover_prob", self.crossover_prob), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.elitism >= self.population {
            return err("elitism must be smaller than the population".into());
        }
        if self.tournament_size < 1 {
            return err("tournament_size must be at least 1".into());
        }
        if !(self.blend_alpha >= 0.0 && self.mutation_sigma >= 0.0) {
            return err("blend_alpha and mutation_sigma must be non-negative".into());
        }
        if self.damping_bounds.len() != joints || self.stiffness_bounds.len() != joints {
            return err(format!("bounds must cover all {joints} joints"));
        }
        for b in self.damping_bounds.iter().chain(&self.stiffness_bounds) {
            if !(b[0] <= b[1]) {
                return err(format!("lower bound exceeds upper bound in {b:?}"));
            }
        }
        if let Some(free) = &self.free_genes {
            if free.iter().any(|g| g.joint >= joints) {
                return err("free gene refers to a joint that does not exist".into());
            }
        }
        if let Some(dt) = self.rollout_dt {
            if !(dt > 0.0) {
                return err("rollout_dt must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gene {
    pub id: GeneId,
    pub lower: f64,
    pub upper: f64,
}

/// Free genes with their boxes plus the pinned offsets of all other genes.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub genes: Vec<Gene>,
    pub pinned_damping: Vec<f64>,
    pub pinned_stiffness: Vec<f64>,
}

impl SearchSpace {
    pub fn new(config: &GaConfig, scenario: &ScenarioConfig) -> Self {
        let joints = scenario.gains.gains.joints();
        let ids: Vec<GeneId> = match &config.free_genes {
            Some(f) => f.clone(),
            None => [GeneKind::Damping, GeneKind::Stiffness]
                .iter()
                .flat_map(|&kind| (0..joints).map(move |joint| GeneId { kind, joint }))
                .collect(),
        };
        let genes = ids
            .into_iter()
            .map(|id| {
                let b = match id.kind {
                    GeneKind::Damping => config.damping_bounds[id.joint],
                    GeneKind::Stiffness => config.stiffness_bounds[id.joint],
                };
                Gene { id, lower: b[0], upper: b[1] }
            })
            .collect();
        let g = &scenario.gains.gains;
        let clamp_all = |v: &[f64], b: &[[f64; 2]]| {
            v.iter().zip(b).map(|(x, b)| x.clamp(b[0], b[1])).collect::<Vec<_>>()
        };
        Self {
            genes,
            pinned_damping: clamp_all(&g.damping_offset, &config.damping_bounds),
            pinned_stiffness: clamp_all(&g.stiffness_offset, &config.stiffness_bounds),
        }
    }

    pub fn dim(&self) -> usize {
        self.genes.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, g) in x.iter_mut().zip(&self.genes) {
            *v = v.clamp(g.lower, g.upper);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.genes.iter().map(|g| 0.5 * (g.lower + g.upper)).collect()
    }

    /// Full `(B̄, K̄)` vectors for gene values `x`.
    pub fn decode(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut b = self.pinned_damping.clone();
        let mut k = self.pinned_stiffness.clone();
        for (v, g) in x.iter().zip(&self.genes) {
            match g.id.kind {
                GeneKind::Damping => b[g.id.joint] = *v,
                GeneKind::Stiffness => k[g.id.joint] = *v,
            }
        }
        (b, k)
    }
}

/// An evaluated point of the search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub genes: Vec<f64>,
    pub damping_offset: Vec<f64>,
    pub stiffness_offset: Vec<f64>,
    /// ΔE_s of the rollout (J); `f64::MIN` for a failed rollout.
    pub fitness: f64,
    pub feasible: bool,
    /// Sum of constraint excesses; `f64::MAX` for a failed rollout.
    pub violation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<RolloutSummary>,
}

impl Candidate {
    pub fn failed(&self) -> bool {
        self.fitness == f64::MIN
    }

    /// Feasible first (by fitness), then infeasible by violation.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        match (self.feasible, other.feasible) {
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            (true, true) => self.fitness.total_cmp(&other.fitness),
            (false, false) => other
                .violation
                .total_cmp(&self.violation)
                .then(self.fitness.total_cmp(&other.fitness)),
        }
    }
}

/// Runs candidate rollouts of one scenario.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pub scenario: ScenarioConfig,
    pub space: SearchSpace,
}

impl Evaluator {
    pub fn new(scenario: &ScenarioConfig, config: &GaConfig) -> Self {
        let mut scenario = scenario.clone();
        if let Some(dt) = config.rollout_dt {
            scenario.sim.dt = dt;
        }
        Self { space: SearchSpace::new(config, &scenario), scenario }
    }

    /// Clamps `genes` into the box and runs one rollout.
    pub fn evaluate(&self, genes: &[f64]) -> Candidate {
        let mut x = genes.to_vec();
        self.space.clamp(&mut x);
        let (b, k) = self.space.decode(&x);
        let (fitness, feasible, violation, summary) = match evaluate(&self.scenario, &b, &k) {
            Ok(e) => (e.fitness, e.feasible, e.violation, Some(e.summary)),
            Err(_) => (f64::MIN, false, f64::MAX, None),
        };
        Candidate {
            genes: x,
            damping_offset: b,
            stiffness_offset: k,
            fitness,
            feasible,
            violation,
            summary,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub feasible: bool,
    pub violation: f64,
    pub summary: RolloutSummary,
}

/// One rollout with `B = B_c + B̄`, `K = K_c + K̄`; returns ΔE_s and feasibility.
pub fn evaluate(scenario: &ScenarioConfig, damping: &[f64], stiffness: &[f64]) -> Result<Evaluation> {
    let sc = scenario.with_offsets(damping, stiffness);
    sc.gains.gains.validate()?;
    let summary = sc.simulation()?.run(|_| {})?;
    let s = &sc.sim;
    let violation = (summary.saturation_duty - s.saturation_tolerance).max(0.0)
        + (summary.final_position_error - s.final_tolerance).max(0.0)
        + (summary.max_constraint_drift - s.drift_tolerance).max(0.0);
    Ok(Evaluation {
        fitness: summary.ledger.de_s,
        feasible: violation == 0.0,
        violation,
        summary,
    })
}
