//! Baseline learning-rate schedules, indexed by epoch.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{InertiaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant { eta0: f64 },
    Exponential { eta0: f64, gamma: f64 },
    Step { eta0: f64, gamma: f64, step_size: u64 },
    /// Annealed from `eta0` to `eta_min` over `total_epochs`, flat afterwards.
    Cosine { eta0: f64, eta_min: f64, total_epochs: u64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Constant { eta0: 0.1 }
    }
}

impl Schedule {
    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Constant { .. } => "constant",
            Schedule::Exponential { .. } => "exponential",
            Schedule::Step { .. } => "step",
            Schedule::Cosine { .. } => "cosine",
        }
    }

    pub fn eta0(&self) -> f64 {
        match *self {
            Schedule::Constant { eta0 }
            | Schedule::Exponential { eta0, .. }
            | Schedule::Step { eta0, .. }
            | Schedule::Cosine { eta0, .. } => eta0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(InertiaError::Config(format!("{} schedule: {m}", self.name())));
        if !(self.eta0().is_finite() && self.eta0() > 0.0) {
            return bad("eta0 must be positive");
        }
        match *self {
            Schedule::Constant { .. } => Ok(()),
            Schedule::Exponential { gamma, .. } | Schedule::Step { gamma, .. } if !(gamma > 0.0 && gamma <= 1.0) => {
                bad("gamma must lie in (0, 1]")
            }
            Schedule::Step { step_size: 0, .. } => bad("step_size must be positive"),
            Schedule::Cosine { eta0, eta_min, total_epochs } => {
                if !(eta_min > 0.0 && eta_min <= eta0) {
                    bad("eta_min must lie in (0, eta0]")
                } else if total_epochs == 0 {
                    bad("total_epochs must be positive")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn eta(&self, epoch: u64) -> f64 {
        match *self {
            Schedule::Constant { eta0 } => eta0,
            Schedule::Exponential { eta0, gamma } => eta0 * gamma.powf(epoch as f64),
            Schedule::Step { eta0, gamma, step_size } => eta0 * gamma.powf((epoch / step_size) as f64),
            Schedule::Cosine { eta0, eta_min, total_epochs } => {
                let t = epoch.min(total_epochs) as f64 / total_epochs as f64;
                eta_min + 0.5 * (eta0 - eta_min) * (1.0 + (PI * t).cos())
            }
        }
    }
}
