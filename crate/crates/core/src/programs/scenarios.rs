use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ProblemInstance, SlotTable};

/// Tolerance on the total scenario weight.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub weight: f64,
    pub demand: SlotTable<f64>,
}

/// Weighted joint demand realizations over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::InvalidArgument("scenario set is empty".into()));
        }
        if let Some(w) = scenarios
            .iter()
            .map(|s| s.weight)
            .find(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::InvalidArgument(format!(
                "scenario weight {w} is not a nonnegative number"
            )));
        }
        let sum: f64 = scenarios.iter().map(|s| s.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "scenario weights sum to {sum}, expected 1"
            )));
        }
        for (m, s) in scenarios.iter().enumerate() {
            if s.demand.values().iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "scenario {} has a negative demand",
                    m + 1
                )));
            }
        }
        Ok(Self { scenarios })
    }

    /// One scenario with the instance's own demand.
    pub fn deterministic(instance: &ProblemInstance) -> Self {
        Self {
            scenarios: vec![Scenario {
                weight: 1.0,
                demand: instance.demand.clone(),
            }],
        }
    }

    /// Scenarios that scale the instance demand by the given factors.
    pub fn scaled(instance: &ProblemInstance, factors_and_weights: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            factors_and_weights
                .iter()
                .map(|&(f, w)| Scenario {
                    weight: w,
                    demand: instance.demand.map(|d| d * f),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    /// Probability-weighted demand.
    pub fn expected_demand(&self) -> SlotTable<f64> {
        let first = &self.scenarios[0].demand;
        SlotTable::from_fn(first.edges(), first.horizon(), |e, t| {
            self.scenarios.iter().map(|s| s.weight * s.demand.get(e, t)).sum()
        })
    }

    pub(crate) fn check_shape(&self, instance: &ProblemInstance) -> Result<()> {
        let want = (instance.network.edge_count(), instance.horizon);
        for (m, s) in self.scenarios.iter().enumerate() {
            if (s.demand.edges(), s.demand.horizon()) != want {
                return Err(Error::DimensionMismatch(format!(
                    "scenario {} demand is {}x{}, instance needs {}x{}",
                    m + 1,
                    s.demand.edges(),
                    s.demand.horizon(),
                    want.0,
                    want.1
                )));
            }
        }
        Ok(())
    }
}

/// On-disk scenario description: demand multipliers of the instance's base
/// demand with their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledScenario {
    pub factor: f64,
    pub weight: f64,
}
