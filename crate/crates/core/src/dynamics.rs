//! Closed-form relativistic cost law.
//!
//! A system that spends a fraction `ρ` of its logical action on rule
//! maintenance only has `√(1−ρ²)` of each cycle left for observable state
//! change, so holding the state-change tempo fixed inflates the work per
//! transition by the Lorentz factor `γ(ρ) = 1/√(1−ρ²)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{InertiaError, Result};

/// Distance below the horizon `ρ = 1` that saturating paths clamp to.
pub const SATURATION_EPS: f64 = 1e-6;

/// Largest representable density on measurement paths.
pub const SATURATION_LIMIT: f64 = 1.0 - SATURATION_EPS;

/// Default absolute band around `ds² = 0` classified as critical.
pub const DEFAULT_CRITICAL_TOLERANCE: f64 = 1e-9;

/// Fraction of logical action consumed by rule maintenance, `0 ≤ ρ < 1`.
///
/// The same quantity serves as the systemic velocity `v`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RuleDensity(f64);

impl RuleDensity {
    pub const ZERO: RuleDensity = RuleDensity(0.0);

    /// Strict constructor: rejects anything outside `[0, 1)`.
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && (0.0..1.0).contains(&value) {
            Ok(RuleDensity(value))
        } else {
            Err(InertiaError::domain(format!(
                "rule density must lie in [0, 1), got {value}"
            )))
        }
    }

    /// Clamps into `[0, 1−ε]`. NaN maps to the saturation limit, since an
    /// undefined measurement must brake rather than accelerate.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            return RuleDensity(SATURATION_LIMIT);
        }
        RuleDensity(value.clamp(0.0, SATURATION_LIMIT))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// True when the value sits on the saturation clamp.
    pub fn is_saturated(self) -> bool {
        self.0 >= SATURATION_LIMIT
    }
}

impl TryFrom<f64> for RuleDensity {
    type Error = InertiaError;

    fn try_from(value: f64) -> Result<Self> {
        RuleDensity::new(value)
    }
}

impl From<RuleDensity> for f64 {
    fn from(rho: RuleDensity) -> f64 {
        rho.0
    }
}

/// `γ(ρ) = 1/√(1−ρ²)`.
#[inline]
pub fn lorentz_factor(rho: RuleDensity) -> f64 {
    let r = rho.value();
    1.0 / ((1.0 - r) * (1.0 + r)).sqrt()
}

/// Landauer scaling of the rest cost: `n` bits erased at temperature `kT`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkParams {
    n_bits: f64,
    kt: f64,
}

impl WorkParams {
    pub fn new(n_bits: f64, kt: f64) -> Result<Self> {
        if !(n_bits.is_finite() && n_bits > 0.0) {
            return Err(InertiaError::domain(format!("n_bits must be positive, got {n_bits}")));
        }
        if !(kt.is_finite() && kt > 0.0) {
            return Err(InertiaError::domain(format!("kT must be positive, got {kt}")));
        }
        Ok(WorkParams { n_bits, kt })
    }

    /// One bit at unit temperature, so `rest_work = ln 2`.
    pub fn unit() -> Self {
        WorkParams { n_bits: 1.0, kt: 1.0 }
    }

    pub fn n_bits(&self) -> f64 {
        self.n_bits
    }

    pub fn kt(&self) -> f64 {
        self.kt
    }

    /// `n · kT · ln 2`
    pub fn rest_work(&self) -> f64 {
        self.n_bits * self.kt * LN_2
    }
}

/// `W(ρ) = W_rest · γ(ρ)`.
pub fn work(rho: RuleDensity, params: &WorkParams) -> f64 {
    params.rest_work() * lorentz_factor(rho)
}

/// Truncation order of the low-velocity expansion of `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaylorOrder {
    Second,
    Fourth,
}

/// Low-velocity expansion of the work law. The second-order form is the
/// quadratic (Fisher-curvature) cost; the fourth-order form adds `⅜ρ⁴`.
pub fn fisher_approx_work(rho: RuleDensity, params: &WorkParams, order: TaylorOrder) -> f64 {
    let r2 = rho.value() * rho.value();
    let series = match order {
        TaylorOrder::Second => 1.0 + 0.5 * r2,
        TaylorOrder::Fourth => 1.0 + 0.5 * r2 + 0.375 * r2 * r2,
    };
    params.rest_work() * series
}

/// `μ(ρ) = W(ρ)/c²`.
pub fn effective_mass(rho: RuleDensity, params: &WorkParams, c_squared: f64) -> Result<f64> {
    if !(c_squared.is_finite() && c_squared > 0.0) {
        return Err(InertiaError::domain(format!("c² must be positive, got {c_squared}")));
    }
    Ok(work(rho, params) / c_squared)
}

/// A logical cycle `l` split into its orthogonal rule and state parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogicalAction {
    pub total: f64,
    pub rule_component: f64,
    pub state_component: f64,
}

impl LogicalAction {
    /// Norm of the two components; reproduces `total` up to rounding.
    pub fn recombined(&self) -> f64 {
        self.rule_component.hypot(self.state_component)
    }
}

/// `l_R = l·ρ`, `l_S = l·√(1−ρ²)`.
pub fn decompose_action(total: f64, rho: RuleDensity) -> Result<LogicalAction> {
    if !(total.is_finite() && total >= 0.0) {
        return Err(InertiaError::domain(format!(
            "logical action must be nonnegative, got {total}"
        )));
    }
    let r = rho.value();
    Ok(LogicalAction {
        total,
        rule_component: total * r,
        state_component: total * ((1.0 - r) * (1.0 + r)).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionInputs {
    pub rho_max: f64,
    pub ds: f64,
    pub dr: f64,
    pub granularity: f64,
}

impl CriterionInputs {
    pub fn new(rho_max: f64, ds: f64, dr: f64, granularity: f64) -> Result<Self> {
        let all_finite = [rho_max, ds, dr, granularity].iter().all(|x| x.is_finite());
        if !all_finite {
            return Err(InertiaError::domain("criterion inputs must be finite"));
        }
        if rho_max <= 0.0 || granularity <= 0.0 {
            return Err(InertiaError::domain("rho_max and granularity must be positive"));
        }
        if ds < 0.0 || dr < 0.0 {
            return Err(InertiaError::domain("dS and dR must be nonnegative"));
        }
        Ok(CriterionInputs { rho_max, ds, dr, granularity })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Interpretable,
    Critical,
    Uninterpretable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interpretability {
    pub ds_squared: f64,
    pub regime: Regime,
}

/// `ds² = ρ_max²·dS² − dR²·‖D‖²`, classified against an absolute band `tol`.
pub fn interpretability_criterion(inputs: &CriterionInputs, tol: f64) -> Interpretability {
    let expressive = inputs.rho_max * inputs.ds;
    let sequestered = inputs.dr * inputs.granularity;
    let ds_squared = expressive * expressive - sequestered * sequestered;
    let regime = if ds_squared > tol {
        Regime::Interpretable
    } else if ds_squared < -tol {
        Regime::Uninterpretable
    } else {
        Regime::Critical
    };
    Interpretability { ds_squared, regime }
}
