//! Inertia-aware learning-rate regulation.
//!
//! The regulator contracts the step size as measured velocity approaches the
//! horizon (the relativistic brake), gates it by directional coherence with a
//! stored anchor, and optionally blends the result with a conventional
//! scheduler through a weighted geometric mean.
//!
//! The brake normally sees the smoothed velocity. A raw reading that jumps
//! more than `spike_margin` above the previous smoothed value is a spike: the
//! brake sees it directly and the velocity ceiling is lifted to it. The
//! ceiling then relaxes every step, so a plateau that stops spiking thaws.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use crate::dynamics::{lorentz_factor, RuleDensity, SATURATION_LIMIT};
use crate::error::{InertiaError, Result};
use crate::measurement::{CalibrationConstants, VelocityEstimate};
use crate::vector::{cosine, norm, unit};

pub const DEFAULT_COUPLING_WEIGHT: f64 = 0.2;
pub const DEFAULT_COHERENCE_FLOOR: f64 = 0.05;
pub const DEFAULT_FREEZE_DECAY: f64 = 0.99;
pub const DEFAULT_SPIKE_MARGIN: f64 = 0.15;
pub const DEFAULT_CAPTURE_BAND: (f64, f64) = (0.4, 0.6);

/// Fraction of the scheduler's rate below which a step is reported as braked.
pub const BRAKED_FRACTION: f64 = 0.5;

/// `η_eff = η_base · √(1−v²)/√(1−v_base²)`.
pub fn relativistic_brake(eta_base: f64, v: RuleDensity, v_base: RuleDensity) -> f64 {
    eta_base * lorentz_factor(v_base) / lorentz_factor(v)
}

/// `η_sched^(1−w) · η_wrapper^w`.
pub fn compose(eta_sched: f64, eta_wrapper: f64, w: f64) -> Result<f64> {
    if !(eta_sched.is_finite() && eta_sched > 0.0) {
        return Err(InertiaError::domain(format!("eta_sched must be positive, got {eta_sched}")));
    }
    if !(eta_wrapper.is_finite() && eta_wrapper >= 0.0) {
        return Err(InertiaError::domain(format!(
            "eta_wrapper must be nonnegative, got {eta_wrapper}"
        )));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(InertiaError::domain(format!("coupling weight must lie in [0, 1], got {w}")));
    }
    if w == 0.0 {
        return Ok(eta_sched);
    }
    if w == 1.0 {
        return Ok(eta_wrapper);
    }
    if eta_wrapper == 0.0 {
        return Ok(0.0);
    }
    Ok(eta_sched.powf(1.0 - w) * eta_wrapper.powf(w))
}

/// Reference dynamics captured during an efficient learning phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorState {
    pub ds_r_dir: Vec<f64>,
    pub ds_ext_dir: Vec<f64>,
    /// `‖dS_ext‖ / ‖dS_R‖` at capture.
    pub efficiency_ratio: f64,
    pub captured_at_step: u64,
    pub captured_in_epoch: u64,
    pub capture_velocity: RuleDensity,
}

impl AnchorState {
    pub fn capture(
        ds_r: &[f64],
        ds_ext: &[f64],
        step: u64,
        epoch: u64,
        velocity: RuleDensity,
    ) -> Result<Self> {
        let (Some(ds_r_dir), Some(ds_ext_dir)) = (unit(ds_r), unit(ds_ext)) else {
            return Err(InertiaError::domain("anchor vectors must be nonzero"));
        };
        Ok(AnchorState {
            ds_r_dir,
            ds_ext_dir,
            efficiency_ratio: norm(ds_ext) / norm(ds_r),
            captured_at_step: step,
            captured_in_epoch: epoch,
            capture_velocity: velocity,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub score: f64,
    pub c_sr: f64,
    pub c_sext: f64,
    pub c_phi: f64,
}

/// Phase coherence of the current step against an anchor:
/// `C = clamp(C_SR · C_Sext · C_φ, floor, 1)`.
pub fn coherence_score(ds_r: &[f64], ds_ext: &[f64], anchor: &AnchorState, floor: f64) -> Coherence {
    let (Some(c_sr), Some(c_sext)) = (cosine(ds_r, &anchor.ds_r_dir), cosine(ds_ext, &anchor.ds_ext_dir))
    else {
        return Coherence { score: floor, c_sr: 0.0, c_sext: 0.0, c_phi: 0.0 };
    };
    let r_curr = norm(ds_ext) / norm(ds_r);
    let r_anchor = anchor.efficiency_ratio;
    let k_ratio = r_curr.min(r_anchor) / r_curr.max(r_anchor);
    let c_phi = (FRAC_PI_2 * k_ratio).sin();
    let score = (c_sr * c_sext * c_phi).clamp(floor, 1.0);
    Coherence { score, c_sr, c_sext, c_phi }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegulatorMode {
    /// The wrapper alone sets the step size.
    Standalone,
    /// The wrapper is blended with a base scheduler.
    Nested,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegulatorConfig {
    pub base_lr: f64,
    pub coupling_weight: f64,
    pub freeze_decay: f64,
    pub coherence_floor: f64,
    pub capture_band: (f64, f64),
    /// Raw-over-smoothed jump that counts as a fresh velocity spike.
    pub spike_margin: f64,
    pub coherence_gating: bool,
}

impl Default for RegulatorConfig {
    fn default() -> Self {
        RegulatorConfig {
            base_lr: 0.1,
            coupling_weight: DEFAULT_COUPLING_WEIGHT,
            freeze_decay: DEFAULT_FREEZE_DECAY,
            coherence_floor: DEFAULT_COHERENCE_FLOOR,
            capture_band: DEFAULT_CAPTURE_BAND,
            spike_margin: DEFAULT_SPIKE_MARGIN,
            coherence_gating: true,
        }
    }
}

impl RegulatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(InertiaError::Config(m.to_string()));
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return bad("base_lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.coupling_weight) {
            return bad("coupling_weight must lie in [0, 1]");
        }
        // A decay of exactly 1 is allowed and means a permanent freeze.
        if !(self.freeze_decay > 0.0 && self.freeze_decay <= 1.0) {
            return bad("freeze_decay must lie in (0, 1]");
        }
        if !(self.coherence_floor > 0.0 && self.coherence_floor <= 1.0) {
            return bad("coherence_floor must lie in (0, 1]");
        }
        let (lo, hi) = self.capture_band;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return bad("capture_band must satisfy 0 <= lo <= hi < 1");
        }
        if !(self.spike_margin >= 0.0) {
            return bad("spike_margin must be nonnegative");
        }
        Ok(())
    }
}

/// One step's learning-rate decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrDecision {
    pub eta_sched: f64,
    pub eta_wrapper: f64,
    pub eta_eff: f64,
    pub coherence: f64,
    pub eta_final: f64,
    /// The step size actually applied.
    pub eta_composed: f64,
    pub braked: bool,
    /// Velocity fed to the brake after smoothing and the unfreezing ceiling.
    pub v_fed: f64,
}

/// Inputs for one regulator step.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub step: u64,
    pub epoch: u64,
    pub estimate: &'a VelocityEstimate,
    pub smoothed: RuleDensity,
    pub ds_r: &'a [f64],
    pub ds_ext: &'a [f64],
    pub loss: f64,
    pub eta_sched: f64,
    /// Terminal lower bound on the applied rate in standalone mode.
    pub floor: Option<f64>,
}

/// Mutable regulator state; one instance per training loop.
#[derive(Debug, Clone)]
pub struct RegulatorState {
    cal: CalibrationConstants,
    config: RegulatorConfig,
    mode: RegulatorMode,
    anchor: Option<AnchorState>,
    /// Position of the velocity ceiling between `v_base` (0) and the
    /// saturation limit (1). Decays each step, raised by fresh spikes.
    inertia_ema: f64,
    last_smoothed: Option<f64>,
    losses: VecDeque<f64>,
}

impl RegulatorState {
    pub fn new(cal: CalibrationConstants, config: RegulatorConfig, mode: RegulatorMode) -> Result<Self> {
        config.validate()?;
        Ok(RegulatorState {
            cal,
            config,
            mode,
            anchor: None,
            inertia_ema: 1.0,
            last_smoothed: None,
            losses: VecDeque::with_capacity(cal.window_steps + 1),
        })
    }

    pub fn calibration(&self) -> &CalibrationConstants {
        &self.cal
    }

    pub fn config(&self) -> &RegulatorConfig {
        &self.config
    }

    pub fn mode(&self) -> RegulatorMode {
        self.mode
    }

    pub fn anchor(&self) -> Option<&AnchorState> {
        self.anchor.as_ref()
    }

    pub fn inertia_ema(&self) -> f64 {
        self.inertia_ema
    }

    pub fn set_inertia_ema(&mut self, value: f64) {
        self.inertia_ema = value.clamp(0.0, 1.0);
    }

    /// Highest velocity the brake is currently allowed to see.
    pub fn velocity_ceiling(&self) -> f64 {
        let base = self.cal.v_base.value();
        base + (SATURATION_LIMIT - base) * self.inertia_ema
    }

    fn ceiling_level(&self, v: f64) -> f64 {
        let base = self.cal.v_base.value();
        ((v - base) / (SATURATION_LIMIT - base)).clamp(0.0, 1.0)
    }

    /// Exponential relaxation of the measured inertia.
    pub fn unfreeze_tick(&mut self) {
        self.inertia_ema *= self.config.freeze_decay;
    }

    pub fn step(&mut self, input: StepInput<'_>) -> Result<LrDecision> {
        if !(input.eta_sched.is_finite() && input.eta_sched > 0.0) {
            return Err(InertiaError::domain(format!(
                "eta_sched must be positive, got {}",
                input.eta_sched
            )));
        }
        let raw = input.estimate.value.value();
        let smoothed = input.smoothed.value();

        self.unfreeze_tick();
        let prev = self.last_smoothed.unwrap_or(self.cal.v_base.value());
        // A fresh spike bypasses the low-pass filter for this step so the
        // brake engages immediately; otherwise the brake follows the EMA.
        let spike = raw - prev > self.config.spike_margin;
        let sensed = if spike {
            self.inertia_ema = self.inertia_ema.max(self.ceiling_level(raw));
            smoothed.max(raw)
        } else {
            smoothed
        };
        let v_fed = RuleDensity::saturating(sensed.min(self.velocity_ceiling()));

        let eta_eff = relativistic_brake(self.config.base_lr, v_fed, self.cal.v_base);
        let coherence = match (&self.anchor, self.config.coherence_gating) {
            (Some(anchor), true) => {
                coherence_score(input.ds_r, input.ds_ext, anchor, self.config.coherence_floor).score
            }
            _ => 1.0,
        };
        let eta_final = eta_eff * coherence;
        let eta_wrapper = eta_final;
        let eta_composed = match self.mode {
            RegulatorMode::Nested => compose(input.eta_sched, eta_wrapper, self.config.coupling_weight)?,
            RegulatorMode::Standalone => eta_final.max(input.floor.unwrap_or(0.0)),
        };

        self.maybe_capture(&input, smoothed);
        self.last_smoothed = Some(smoothed);

        Ok(LrDecision {
            eta_sched: input.eta_sched,
            eta_wrapper,
            eta_eff,
            coherence,
            eta_final,
            eta_composed,
            braked: eta_final < BRAKED_FRACTION * input.eta_sched,
            v_fed: v_fed.value(),
        })
    }

    /// Refreshes the anchor near equipartition while the loss is improving,
    /// at most once per epoch.
    fn maybe_capture(&mut self, input: &StepInput<'_>, smoothed: f64) {
        let window = self.cal.window_steps;
        if self.losses.len() == window + 1 {
            self.losses.pop_front();
        }
        self.losses.push_back(input.loss);
        let improving = self.losses.len() == window + 1
            && self.losses.back().copied().unwrap_or(f64::INFINITY)
                < self.losses.front().copied().unwrap_or(f64::NEG_INFINITY);
        let (lo, hi) = self.config.capture_band;
        let in_band = (lo..=hi).contains(&smoothed);
        let fresh_epoch = self.anchor.as_ref().is_none_or(|a| a.captured_in_epoch < input.epoch);
        if improving && in_band && fresh_epoch {
            if let Ok(anchor) = AnchorState::capture(
                input.ds_r,
                input.ds_ext,
                input.step,
                input.epoch,
                RuleDensity::saturating(smoothed),
            ) {
                self.anchor = Some(anchor);
            }
        }
    }

    pub fn set_anchor(&mut self, anchor: Option<AnchorState>) {
        self.anchor = anchor;
    }
}
