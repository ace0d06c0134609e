use serde::{Deserialize, Serialize};

use super::EnergyLedger;

/// Hub node every flow enters or leaves.
pub const HUB: &str = "arms";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SankeyFlow {
    pub source: String,
    pub sink: String,
    pub joules: f64,
}

/// Where the external work on the arms came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadBalance {
    pub potential_drop: f64,
    pub kinetic_gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SankeyDiagram {
    pub flows: Vec<SankeyFlow>,
    pub closure_residual: f64,
    pub load: LoadBalance,
}

impl SankeyDiagram {
    /// Σ(into hub) − Σ(out of hub).
    pub fn signed_sum(&self) -> f64 {
        self.flows
            .iter()
            .map(|f| if f.sink == HUB { f.joules } else { -f.joules })
            .sum()
    }

    pub fn dominant_source(&self) -> Option<&SankeyFlow> {
        self.flows
            .iter()
            .filter(|f| f.sink == HUB)
            .max_by(|a, b| a.joules.total_cmp(&b.joules))
    }
}

fn flow(name: &str, into_hub: f64) -> SankeyFlow {
    if into_hub >= 0.0 {
        SankeyFlow { source: name.into(), sink: HUB.into(), joules: into_hub }
    } else {
        SankeyFlow { source: HUB.into(), sink: name.into(), joules: -into_hub }
    }
}

pub fn sankey_export(ledger: &EnergyLedger) -> SankeyDiagram {
    SankeyDiagram {
        flows: vec![
            flow("external work", ledger.w_ext),
            flow("storage", -ledger.de_s),
            flow("mechanical energy", -ledger.de_m),
            flow("friction loss", -ledger.sigma_m),
            flow("joule loss", -ledger.sigma_e),
        ],
        closure_residual: ledger.closure_residual,
        load: LoadBalance {
            potential_drop: -ledger.load_potential_change,
            kinetic_gain: ledger.load_kinetic_change,
        },
    }
}
