//! Velocity measurement on live training dynamics.
//!
//! A step is reduced to three magnitudes: the rule displacement `dR = ‖Δθ‖`,
//! the internal state shift `dS_R` (identical to `dR`), and the external gain
//! `dS_ext`, the environmental feedback projected onto the update direction.
//! Three tiers turn these into a velocity, trading measurement cost for
//! fidelity. The symbolic granularity `‖D‖` that converts between the two
//! axes is fixed by a warmup calibration that pins the warmup velocity at
//! equipartition, `v = 0.5`.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::dynamics::RuleDensity;
use crate::error::{InertiaError, Result};
use crate::vector::{coefficient_of_variation, dot, norm};

/// Guard for divisions by path norms and velocity denominators.
pub const DIVISION_GUARD: f64 = 1e-12;

pub const DEFAULT_DISORDER_WINDOW: usize = 10;
pub const DEFAULT_EMA_ALPHA: f64 = 0.3;
pub const EQUIPARTITION_VELOCITY: f64 = 0.5;

/// Everything the tiers need to know about one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepObservation {
    pub delta_theta: Vec<f64>,
    /// Environmental feedback in descent orientation: a step that improves
    /// the environment has positive inner product with it.
    pub env_gradient: Vec<f64>,
    pub loss: f64,
    /// `‖Σ|Δθ|‖` over the disorder window.
    pub abs_path_norm: f64,
    /// `‖ΣΔθ‖` over the same window.
    pub net_path_norm: f64,
    /// Coefficient of variation of the per-step loss over the window.
    pub state_noise_proxy: f64,
}

impl StepObservation {
    pub fn new(
        delta_theta: Vec<f64>,
        env_gradient: Vec<f64>,
        loss: f64,
        abs_path_norm: f64,
        net_path_norm: f64,
        state_noise_proxy: f64,
    ) -> Result<Self> {
        if delta_theta.len() != env_gradient.len() {
            return Err(InertiaError::domain(format!(
                "update has {} entries but feedback has {}",
                delta_theta.len(),
                env_gradient.len()
            )));
        }
        if !(loss.is_finite() && loss > 0.0) {
            return Err(InertiaError::domain(format!("loss must be positive, got {loss}")));
        }
        if !(net_path_norm >= 0.0 && abs_path_norm.is_finite()) {
            return Err(InertiaError::domain("path norms must be finite and nonnegative"));
        }
        // Element-wise |·| can only lengthen the path; allow rounding slack.
        if abs_path_norm < net_path_norm * (1.0 - 1e-12) {
            return Err(InertiaError::domain(format!(
                "absolute path {abs_path_norm} shorter than net path {net_path_norm}"
            )));
        }
        if !(state_noise_proxy.is_finite() && state_noise_proxy >= 0.0) {
            return Err(InertiaError::domain("state noise proxy must be nonnegative"));
        }
        Ok(StepObservation {
            delta_theta,
            env_gradient,
            loss,
            abs_path_norm,
            net_path_norm,
            state_noise_proxy,
        })
    }

    /// A single isolated step: the window holds only `delta_theta`.
    pub fn single(delta_theta: Vec<f64>, env_gradient: Vec<f64>, loss: f64) -> Result<Self> {
        let n = norm(&delta_theta);
        StepObservation::new(delta_theta, env_gradient, loss, n, n, 0.0)
    }
}

/// `dR ≈ ‖Δθ‖`; the internal state shift `dS_R` takes the same value.
pub fn rule_displacement(obs: &StepObservation) -> f64 {
    norm(&obs.delta_theta)
}

/// Scalar projection of the feedback onto the update direction, floored at
/// zero. No displacement means no ripple.
pub fn external_gain(obs: &StepObservation) -> f64 {
    let n = norm(&obs.delta_theta);
    if n == 0.0 {
        return 0.0;
    }
    (dot(&obs.env_gradient, &obs.delta_theta) / n).max(0.0)
}

/// `L_R`: element-wise absolute path over net displacement, never below 1.
pub fn disorder_rule(obs: &StepObservation) -> f64 {
    if obs.abs_path_norm == 0.0 {
        return 1.0;
    }
    (obs.abs_path_norm / obs.net_path_norm.max(DIVISION_GUARD)).max(1.0)
}

/// `L_S = 1 + cv(loss)` over the disorder window.
pub fn disorder_state(obs: &StepObservation) -> f64 {
    1.0 + obs.state_noise_proxy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Loss only.
    Scalar,
    /// Update norm plus projected external gain.
    CausalRipple,
    /// Tier 2 corrected by the disorder coefficients.
    DisorderAware,
}

impl Tier {
    pub fn number(self) -> u8 {
        match self {
            Tier::Scalar => 1,
            Tier::CausalRipple => 2,
            Tier::DisorderAware => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub tier: Tier,
    pub value: RuleDensity,
    pub dr: f64,
    pub ds_r: f64,
    pub ds_ext: f64,
    pub l_r: f64,
    pub l_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConstants {
    pub granularity: f64,
    pub v_base: RuleDensity,
    pub window_steps: usize,
}

impl CalibrationConstants {
    pub fn new(granularity: f64, v_base: RuleDensity, window_steps: usize) -> Result<Self> {
        if !(granularity.is_finite() && granularity > 0.0) {
            return Err(InertiaError::Calibration(format!(
                "granularity must be positive, got {granularity}"
            )));
        }
        if v_base.value() <= 0.0 {
            return Err(InertiaError::Calibration("v_base must lie in (0, 1)".into()));
        }
        if window_steps == 0 {
            return Err(InertiaError::Calibration("window_steps must be positive".into()));
        }
        Ok(CalibrationConstants { granularity, v_base, window_steps })
    }
}

fn check_nonnegative(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(InertiaError::domain(format!("{name} must be finite and nonnegative, got {x}")))
    }
}

fn check_loss(loss: f64) -> Result<()> {
    if loss.is_finite() && loss > 0.0 {
        Ok(())
    } else {
        Err(InertiaError::domain(format!("loss must be positive, got {loss}")))
    }
}

fn saturating_ratio(num: f64, denom: f64) -> RuleDensity {
    if denom < DIVISION_GUARD {
        // Total stall: nothing reaches the environment.
        RuleDensity::saturating(1.0)
    } else {
        RuleDensity::saturating(num / denom)
    }
}

/// `v = 1/(1 + 1/(L·‖D‖))`.
pub fn velocity_tier1(loss: f64, cal: &CalibrationConstants) -> Result<VelocityEstimate> {
    check_loss(loss)?;
    let scaled = loss * cal.granularity;
    Ok(VelocityEstimate {
        tier: Tier::Scalar,
        value: RuleDensity::saturating(scaled / (scaled + 1.0)),
        dr: 0.0,
        ds_r: 0.0,
        ds_ext: 0.0,
        l_r: 1.0,
        l_s: 1.0,
    })
}

/// `v = dR / (dS_R + dS_ext/(L·‖D‖))`.
pub fn velocity_tier2(
    dr: f64,
    ds_r: f64,
    ds_ext: f64,
    loss: f64,
    cal: &CalibrationConstants,
) -> Result<VelocityEstimate> {
    check_nonnegative("dR", dr)?;
    check_nonnegative("dS_R", ds_r)?;
    check_nonnegative("dS_ext", ds_ext)?;
    check_loss(loss)?;
    let denom = ds_r + ds_ext / (loss * cal.granularity);
    Ok(VelocityEstimate {
        tier: Tier::CausalRipple,
        value: saturating_ratio(dr, denom),
        dr,
        ds_r,
        ds_ext,
        l_r: 1.0,
        l_s: 1.0,
    })
}

/// `v = dR·L_R / (dS_R·L_R + dS_ext/(L·L_S·‖D‖))`.
#[allow(clippy::too_many_arguments)]
pub fn velocity_tier3(
    dr: f64,
    ds_r: f64,
    ds_ext: f64,
    loss: f64,
    l_r: f64,
    l_s: f64,
    cal: &CalibrationConstants,
) -> Result<VelocityEstimate> {
    check_nonnegative("dR", dr)?;
    check_nonnegative("dS_R", ds_r)?;
    check_nonnegative("dS_ext", ds_ext)?;
    check_loss(loss)?;
    if !(l_r >= 1.0 && l_s >= 1.0) || l_r.is_nan() || l_s.is_nan() {
        return Err(InertiaError::domain(format!(
            "disorder coefficients must be >= 1, got L_R={l_r}, L_S={l_s}"
        )));
    }
    let denom = ds_r * l_r + ds_ext / (loss * l_s * cal.granularity);
    let value = if l_r.is_infinite() {
        saturating_ratio(dr, ds_r)
    } else {
        saturating_ratio(dr * l_r, denom)
    };
    Ok(VelocityEstimate { tier: Tier::DisorderAware, value, dr, ds_r, ds_ext, l_r, l_s })
}

/// Dispatches a full observation to the requested tier.
pub fn estimate(obs: &StepObservation, tier: Tier, cal: &CalibrationConstants) -> Result<VelocityEstimate> {
    match tier {
        Tier::Scalar => velocity_tier1(obs.loss, cal),
        Tier::CausalRipple => {
            let dr = rule_displacement(obs);
            velocity_tier2(dr, dr, external_gain(obs), obs.loss, cal)
        }
        Tier::DisorderAware => {
            let dr = rule_displacement(obs);
            velocity_tier3(
                dr,
                dr,
                external_gain(obs),
                obs.loss,
                disorder_rule(obs),
                disorder_state(obs),
                cal,
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Minimum number of warmup observations.
    pub window_steps: usize,
    pub v_base: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { window_steps: DEFAULT_DISORDER_WINDOW, v_base: EQUIPARTITION_VELOCITY }
    }
}

/// Warmup calibration: `‖D‖ = mean(dS_ext/L) / mean(dR)` over the warmup
/// observations (mean of ratios, taken literally).
pub fn calibrate(warmup: &[StepObservation], config: &CalibrationConfig) -> Result<CalibrationConstants> {
    if config.window_steps == 0 {
        return Err(InertiaError::Calibration("window_steps must be positive".into()));
    }
    if warmup.len() < config.window_steps {
        return Err(InertiaError::Calibration(format!(
            "need at least {} warmup steps, got {}",
            config.window_steps,
            warmup.len()
        )));
    }
    let n = warmup.len() as f64;
    let mean_dr = warmup.iter().map(rule_displacement).sum::<f64>() / n;
    let mean_gain = warmup.iter().map(|o| external_gain(o) / o.loss).sum::<f64>() / n;
    calibrate_from_means(mean_gain, mean_dr, config)
}

/// Calibration from precomputed window means of `dS_ext/L` and `dR`.
pub fn calibrate_from_means(
    mean_gain_over_loss: f64,
    mean_dr: f64,
    config: &CalibrationConfig,
) -> Result<CalibrationConstants> {
    if !(mean_dr >= DIVISION_GUARD) {
        return Err(InertiaError::Calibration(format!(
            "mean rule displacement {mean_dr} is too small"
        )));
    }
    if !(mean_gain_over_loss >= DIVISION_GUARD) {
        return Err(InertiaError::Calibration(format!(
            "mean external gain per unit loss {mean_gain_over_loss} is too small"
        )));
    }
    let v_base = RuleDensity::new(config.v_base)
        .map_err(|e| InertiaError::Calibration(e.to_string()))?;
    CalibrationConstants::new(mean_gain_over_loss / mean_dr, v_base, config.window_steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementConfig {
    pub tier: Tier,
    pub disorder_window: usize,
    pub ema_alpha: f64,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        MeasurementConfig {
            tier: Tier::DisorderAware,
            disorder_window: DEFAULT_DISORDER_WINDOW,
            ema_alpha: DEFAULT_EMA_ALPHA,
        }
    }
}

impl MeasurementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.disorder_window == 0 {
            return Err(InertiaError::Config("disorder_window must be positive".into()));
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return Err(InertiaError::Config("ema_alpha must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Rolling windows feeding the disorder coefficients and the velocity EMA.
///
/// Owned by a single training loop.
#[derive(Debug, Clone)]
pub struct MeasurementAccumulator {
    config: MeasurementConfig,
    updates: VecDeque<Vec<f64>>,
    losses: VecDeque<f64>,
    ema: Option<f64>,
}

impl MeasurementAccumulator {
    pub fn new(config: MeasurementConfig) -> Result<Self> {
        config.validate()?;
        Ok(MeasurementAccumulator {
            config,
            updates: VecDeque::with_capacity(config.disorder_window),
            losses: VecDeque::with_capacity(config.disorder_window),
            ema: None,
        })
    }

    pub fn config(&self) -> &MeasurementConfig {
        &self.config
    }

    /// Pushes one step into the windows and returns its observation.
    pub fn observe(&mut self, delta_theta: Vec<f64>, env_gradient: Vec<f64>, loss: f64) -> Result<StepObservation> {
        check_loss(loss)?;
        if self.updates.len() == self.config.disorder_window {
            self.updates.pop_front();
            self.losses.pop_front();
        }
        self.updates.push_back(delta_theta.clone());
        self.losses.push_back(loss);

        let dim = delta_theta.len();
        let mut abs_sum = vec![0.0; dim];
        let mut net_sum = vec![0.0; dim];
        for u in &self.updates {
            for ((a, n), x) in abs_sum.iter_mut().zip(net_sum.iter_mut()).zip(u) {
                *a += x.abs();
                *n += x;
            }
        }
        let losses: Vec<f64> = self.losses.iter().copied().collect();
        StepObservation::new(
            delta_theta,
            env_gradient,
            loss,
            norm(&abs_sum),
            norm(&net_sum),
            coefficient_of_variation(&losses),
        )
    }

    pub fn estimate(&self, obs: &StepObservation, cal: &CalibrationConstants) -> Result<VelocityEstimate> {
        estimate(obs, self.config.tier, cal)
    }

    /// Exponential moving average of the raw velocity.
    pub fn smooth(&mut self, raw: RuleDensity) -> RuleDensity {
        let next = match self.ema {
            None => raw.value(),
            Some(prev) => self.config.ema_alpha * raw.value() + (1.0 - self.config.ema_alpha) * prev,
        };
        self.ema = Some(next);
        RuleDensity::saturating(next)
    }

    pub fn smoothed(&self) -> Option<RuleDensity> {
        self.ema.map(RuleDensity::saturating)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SATURATION_LIMIT;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cal(d: f64) -> CalibrationConstants {
        CalibrationConstants::new(d, RuleDensity::new(0.5).unwrap(), 1).unwrap()
    }

    /// Error-free transformation sum (Knuth two-sum), used as an
    /// extended-precision reference for squared norms.
    fn two_sum_norm(xs: &[f64]) -> f64 {
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for x in xs {
            let sq = x * x;
            let sq_err = x.mul_add(*x, -sq);
            let s = hi + sq;
            let bp = s - hi;
            let err = (hi - (s - bp)) + (sq - bp);
            hi = s;
            lo += err + sq_err;
        }
        (hi + lo).sqrt()
    }

    #[test]
    fn rule_displacement_examples() {
        let zero = StepObservation::single(vec![0.0; 4], vec![0.0; 4], 1.0).unwrap();
        assert_eq!(rule_displacement(&zero), 0.0);
        let o = StepObservation::single(vec![3.0, 4.0], vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(rule_displacement(&o), 5.0);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..3.0)).collect();
        let o = StepObservation::single(v.clone(), vec![0.0; 100], 1.0).unwrap();
        let reference = two_sum_norm(&v);
        assert!((rule_displacement(&o) - reference).abs() <= 1e-14 * reference);
    }

    #[test]
    fn external_gain_examples() {
        let par = StepObservation::single(vec![1.0, 0.0], vec![1.0, 0.0], 1.0).unwrap();
        assert_eq!(external_gain(&par), 1.0);
        let orth = StepObservation::single(vec![1.0, 0.0], vec![0.0, 1.0], 1.0).unwrap();
        assert_eq!(external_gain(&orth), 0.0);
        let anti = StepObservation::single(vec![1.0, 0.0], vec![-1.0, 0.0], 1.0).unwrap();
        assert_eq!(external_gain(&anti), 0.0);
        let still = StepObservation::single(vec![0.0, 0.0], vec![1.0, 0.0], 1.0).unwrap();
        assert_eq!(external_gain(&still), 0.0);
    }

    #[test]
    fn antialigned_feedback_saturates_tier2() {
        // Sweep the feedback angle from aligned to antialigned; velocity must
        // rise monotonically and hit the clamp once the projection floors.
        let c = cal(1.0);
        let mut last = 0.0;
        for i in 0..=20 {
            let angle = std::f64::consts::PI * i as f64 / 20.0;
            let o = StepObservation::single(vec![1.0, 0.0], vec![angle.cos(), angle.sin()], 1.0).unwrap();
            let dr = rule_displacement(&o);
            let v = velocity_tier2(dr, dr, external_gain(&o), 1.0, &c).unwrap().value.value();
            assert!(v >= last);
            last = v;
            if angle >= std::f64::consts::FRAC_PI_2 {
                assert_eq!(v, SATURATION_LIMIT);
            }
        }
    }

    #[test]
    fn disorder_rule_examples() {
        let one = StepObservation::single(vec![0.3, -2.0, 1.0], vec![0.0; 3], 1.0).unwrap();
        assert_eq!(disorder_rule(&one), 1.0);

        let mut acc = MeasurementAccumulator::new(MeasurementConfig::default()).unwrap();
        acc.observe(vec![1.0, 2.0], vec![0.0; 2], 1.0).unwrap();
        let back = acc.observe(vec![-1.0, -2.0], vec![0.0; 2], 1.0).unwrap();
        assert!(disorder_rule(&back) > 1e11);

        let mut acc = MeasurementAccumulator::new(MeasurementConfig::default()).unwrap();
        acc.observe(vec![1.0, 0.0], vec![0.0; 2], 1.0).unwrap();
        let turn = acc.observe(vec![0.0, 1.0], vec![0.0; 2], 1.0).unwrap();
        assert!((turn.abs_path_norm - 2f64.sqrt()).abs() < 1e-15);
        assert!((turn.net_path_norm - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(disorder_rule(&turn), 1.0);
    }

    #[test]
    fn observation_validation() {
        assert!(StepObservation::new(vec![1.0], vec![1.0], 1.0, 0.5, 1.0, 0.0).is_err());
        assert!(StepObservation::new(vec![1.0], vec![1.0], 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(StepObservation::new(vec![1.0], vec![1.0, 2.0], 1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn tier1_examples() {
        assert_eq!(velocity_tier1(1.0, &cal(1.0)).unwrap().value.value(), 0.5);
        assert!((velocity_tier1(2.0, &cal(1.0)).unwrap().value.value() - 2.0 / 3.0).abs() < 1e-15);
        let big = velocity_tier1(1e9, &cal(1.0)).unwrap().value.value();
        assert!(big > 0.999_99);
        let est = velocity_tier1(2.0, &cal(1.0)).unwrap();
        assert_eq!((est.dr, est.ds_r, est.ds_ext), (0.0, 0.0, 0.0));
        assert!(velocity_tier1(0.0, &cal(1.0)).is_err());
    }

    #[test]
    fn tier2_examples() {
        let c = cal(2.0);
        // dS_ext = L·‖D‖ puts the gain term at parity with dS_R.
        assert_eq!(velocity_tier2(1.0, 1.0, 1.5 * 2.0, 1.5, &c).unwrap().value.value(), 0.5);
        assert_eq!(velocity_tier2(0.7, 0.7, 0.0, 1.0, &c).unwrap().value.value(), SATURATION_LIMIT);
        assert_eq!(velocity_tier2(1.0, 1.0, 3.0, 1.0, &cal(1.0)).unwrap().value.value(), 0.25);
        assert_eq!(velocity_tier2(0.0, 0.0, 0.0, 1.0, &c).unwrap().value.value(), SATURATION_LIMIT);
        assert!(velocity_tier2(-1.0, 1.0, 1.0, 1.0, &c).is_err());
    }

    #[test]
    fn tier3_examples() {
        let c = cal(1.3);
        let t2 = velocity_tier2(0.4, 0.4, 0.9, 1.7, &c).unwrap();
        let t3 = velocity_tier3(0.4, 0.4, 0.9, 1.7, 1.0, 1.0, &c).unwrap();
        assert_eq!(t2.value.value().to_bits(), t3.value.value().to_bits());

        let mut last = 0.0;
        for l_s in [1.0, 2.0, 4.0, 8.0] {
            let v = velocity_tier3(0.4, 0.4, 0.9, 1.7, 1.0, l_s, &c).unwrap().value.value();
            assert!(v > last);
            last = v;
        }
        let lim = velocity_tier3(0.4, 0.4, 0.9, 1.7, f64::INFINITY, 1.0, &c).unwrap();
        assert_eq!(lim.value.value(), SATURATION_LIMIT);
        let big = velocity_tier3(0.4, 0.4, 0.9, 1.7, 1e12, 1.0, &c).unwrap();
        assert!(big.value.value() > 0.999_99);
        assert!(velocity_tier3(0.4, 0.4, 0.9, 1.7, 0.5, 1.0, &c).is_err());
    }

    #[test]
    fn calibrate_examples() {
        let cfg = CalibrationConfig { window_steps: 1, v_base: 0.5 };
        assert_eq!(calibrate_from_means(0.7, 0.7, &cfg).unwrap().granularity, 1.0);
        assert_eq!(calibrate_from_means(2.0, 0.5, &cfg).unwrap().granularity, 4.0);
        assert!(calibrate_from_means(1.0, 0.0, &cfg).is_err());
        assert!(calibrate_from_means(0.0, 1.0, &cfg).is_err());
    }

    #[test]
    fn calibrate_needs_enough_steps() {
        let obs = vec![StepObservation::single(vec![1.0], vec![1.0], 1.0).unwrap(); 3];
        assert!(calibrate(&obs, &CalibrationConfig { window_steps: 4, v_base: 0.5 }).is_err());
        assert!(calibrate(&obs, &CalibrationConfig { window_steps: 3, v_base: 0.5 }).is_ok());
    }

    #[test]
    fn calibrated_stream_sits_at_equipartition() {
        // Synthetic warmup stream with known, varying ratios.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let obs: Vec<StepObservation> = (0..40)
            .map(|_| {
                let scale = rng.random_range(0.1..2.0);
                let dtheta = vec![scale, -0.5 * scale, 0.25 * scale];
                let env: Vec<f64> = dtheta.iter().map(|x| x * rng.random_range(0.5..3.0)).collect();
                StepObservation::single(dtheta, env, rng.random_range(0.3..2.5)).unwrap()
            })
            .collect();
        let c = calibrate(&obs, &CalibrationConfig::default()).unwrap();
        let mean_dr = obs.iter().map(rule_displacement).sum::<f64>() / obs.len() as f64;
        let mean_gain = obs.iter().map(|o| external_gain(o) / o.loss).sum::<f64>() / obs.len() as f64;
        // Unit loss with dS_ext equal to the mean of dS_ext/L.
        let v = velocity_tier2(mean_dr, mean_dr, mean_gain, 1.0, &c).unwrap().value.value();
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ema_smoothing() {
        let mut acc = MeasurementAccumulator::new(MeasurementConfig::default()).unwrap();
        assert_eq!(acc.smooth(RuleDensity::new(0.5).unwrap()).value(), 0.5);
        let s = acc.smooth(RuleDensity::new(0.9).unwrap()).value();
        assert!((s - (0.3 * 0.9 + 0.7 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn state_disorder_tracks_loss_spread() {
        let mut acc = MeasurementAccumulator::new(MeasurementConfig::default()).unwrap();
        let steady = (0..5)
            .map(|_| acc.observe(vec![1.0], vec![1.0], 2.0).unwrap())
            .last()
            .unwrap();
        assert_eq!(disorder_state(&steady), 1.0);
        let jumpy = acc.observe(vec![1.0], vec![1.0], 6.0).unwrap();
        assert!(disorder_state(&jumpy) > 1.0);
    }

    proptest! {
        #[test]
        fn equipartition_fixed_point(gain in 1e-3f64..1e3, dr in 1e-3f64..1e3) {
            let c = calibrate_from_means(gain, dr, &CalibrationConfig::default()).unwrap();
            let v = velocity_tier2(dr, dr, gain, 1.0, &c).unwrap().value.value();
            prop_assert!((v - 0.5).abs() < 1e-12);
        }

        #[test]
        fn saturation_without_gain(d in 1e-6f64..1e6, loss in 1e-3f64..1e3, g in 1e-3f64..1e3) {
            let v = velocity_tier2(d, d, 0.0, loss, &cal(g)).unwrap().value.value();
            prop_assert_eq!(v, SATURATION_LIMIT);
        }

        #[test]
        fn tiers_agree_without_disorder(
            dr in 0.0f64..10.0, ds in 0.0f64..10.0, ext in 0.0f64..10.0, loss in 1e-3f64..10.0
        ) {
            let c = cal(0.8);
            let a = velocity_tier2(dr, ds, ext, loss, &c).unwrap().value.value();
            let b = velocity_tier3(dr, ds, ext, loss, 1.0, 1.0, &c).unwrap().value.value();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }

        #[test]
        fn estimates_stay_inside_clamp(
            dr in 0.0f64..1e3, ds in 0.0f64..1e3, ext in 0.0f64..1e3, loss in 1e-6f64..1e3,
            l_r in 1.0f64..1e3, l_s in 1.0f64..1e3
        ) {
            let c = cal(1.7);
            for est in [
                velocity_tier1(loss, &c).unwrap(),
                velocity_tier2(dr, ds, ext, loss, &c).unwrap(),
                velocity_tier3(dr, ds, ext, loss, l_r, l_s, &c).unwrap(),
            ] {
                prop_assert!(est.value.value() >= 0.0 && est.value.value() <= SATURATION_LIMIT);
            }
        }

        #[test]
        fn tier1_increasing_in_loss(a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
            prop_assume!(a < b * (1.0 - 1e-9));
            let c = cal(1.0);
            prop_assert!(velocity_tier1(a, &c).unwrap().value < velocity_tier1(b, &c).unwrap().value);
        }

        #[test]
        fn tier2_decreasing_in_gain(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            prop_assume!(a < b * (1.0 - 1e-9));
            let c = cal(1.0);
            let va = velocity_tier2(1.0, 1.0, a, 1.0, &c).unwrap().value;
            let vb = velocity_tier2(1.0, 1.0, b, 1.0, &c).unwrap().value;
            prop_assert!(vb < va || va.is_saturated() && vb.is_saturated());
        }
    }
}
