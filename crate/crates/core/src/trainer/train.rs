//! Instrumented SGD loop.
//!
//! Every step takes a gradient `g` on the mini-batch, forms the candidate
//! update `Δθ = −η_sched·g` and measures it before anything is applied:
//! the environmental gradient comes from a probe pass at `θ + Δθ` on the
//! same batch (regulation mode) or from a held-out clean batch at `θ`
//! (observation mode). The regulator then picks the step size actually
//! applied along `−g`. Measuring the candidate rather than the applied
//! update keeps the velocity independent of the brake's own output.
//!
//! The first epoch of an uncalibrated trainer is the warmup window: it runs
//! at `η_sched`, and its observations calibrate the granularity.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use super::schedule::Schedule;
use super::task::Dataset;
use super::telemetry::{PhaseTag, TelemetryRecord};
use crate::error::{InertiaError, Result};
use crate::measurement::{
    calibrate, CalibrationConfig, CalibrationConstants, MeasurementAccumulator, MeasurementConfig, StepObservation,
    VelocityEstimate,
};
use crate::regulator::{LrDecision, RegulatorConfig, RegulatorMode, RegulatorState, StepInput};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegulatorModeSel {
    #[default]
    Off,
    Standalone,
    Nested,
}

impl RegulatorModeSel {
    fn regulator_mode(self) -> Option<RegulatorMode> {
        match self {
            RegulatorModeSel::Off => None,
            RegulatorModeSel::Standalone => Some(RegulatorMode::Standalone),
            RegulatorModeSel::Nested => Some(RegulatorMode::Nested),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// Post-update probe on the training batch.
    #[default]
    Regulation,
    /// Gradient of a held-out clean batch.
    Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub mode: RegulatorModeSel,
    pub probe: ProbeMode,
    pub measurement: MeasurementConfig,
    pub calibration: CalibrationConfig,
    pub regulator: RegulatorConfig,
    /// Terminal lower bound on the applied rate in standalone mode.
    pub lr_floor: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            batch_size: 32,
            schedule: Schedule::default(),
            mode: RegulatorModeSel::Off,
            probe: ProbeMode::Regulation,
            measurement: MeasurementConfig::default(),
            calibration: CalibrationConfig::default(),
            regulator: RegulatorConfig::default(),
            lr_floor: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(InertiaError::Config("batch_size must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(InertiaError::Config("hidden layer sizes must be positive".into()));
        }
        if let Some(f) = self.lr_floor {
            if !(f.is_finite() && f >= 0.0) {
                return Err(InertiaError::Config("lr_floor must be nonnegative".into()));
            }
        }
        self.schedule.validate()?;
        self.measurement.validate()?;
        self.regulator.validate()
    }
}

/// A training run that can be driven epoch by epoch over changing data.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    model: Mlp,
    accumulator: MeasurementAccumulator,
    calibration: Option<CalibrationConstants>,
    regulator: Option<RegulatorState>,
    shuffle_rng: ChaCha8Rng,
    step: u64,
}

struct Pending {
    obs: StepObservation,
    record: TelemetryRecord,
}

impl Trainer {
    pub fn new(config: TrainConfig, input_dim: usize, n_classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![input_dim];
        sizes.extend(&config.hidden);
        sizes.push(n_classes);
        let model = Mlp::new(&sizes, config.activation, derive_seed(seed, 0))?;
        Ok(Trainer {
            accumulator: MeasurementAccumulator::new(config.measurement)?,
            config,
            model,
            calibration: None,
            regulator: None,
            shuffle_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)),
            step: 0,
        })
    }

    /// Skips the warmup window and uses externally supplied constants.
    pub fn with_calibration(mut self, cal: CalibrationConstants) -> Result<Self> {
        self.install_calibration(cal)?;
        Ok(self)
    }

    fn install_calibration(&mut self, cal: CalibrationConstants) -> Result<()> {
        self.calibration = Some(cal);
        self.regulator = match self.config.mode.regulator_mode() {
            Some(mode) => Some(RegulatorState::new(cal, self.config.regulator, mode)?),
            None => None,
        };
        Ok(())
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn calibration(&self) -> Option<&CalibrationConstants> {
        self.calibration.as_ref()
    }

    pub fn regulator(&self) -> Option<&RegulatorState> {
        self.regulator.as_ref()
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One pass over `data` in a freshly shuffled order.
    pub fn run_epoch(
        &mut self,
        epoch: u64,
        data: &Dataset,
        holdout: Option<&Dataset>,
        tag: PhaseTag,
    ) -> Result<Vec<TelemetryRecord>> {
        if data.is_empty() {
            return Err(InertiaError::domain("empty training set"));
        }
        let holdout_idx: Option<(&Dataset, Vec<usize>)> = match self.config.probe {
            ProbeMode::Observation => {
                let h = holdout.ok_or_else(|| InertiaError::Config("observation mode needs a holdout set".into()))?;
                Some((h, (0..h.len()).collect()))
            }
            ProbeMode::Regulation => None,
        };
        let warmup = self.calibration.is_none();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let eta_sched = self.config.schedule.eta(epoch);

        let mut pending: Vec<Pending> = Vec::new();
        let mut records = Vec::new();
        for batch in order.chunks(self.config.batch_size) {
            let (loss, grad) = self.model.loss_grad(data, batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(InertiaError::Divergence { step: self.step, loss });
            }
            let delta: Vec<f64> = grad.iter().map(|g| -eta_sched * g).collect();
            let env = match &holdout_idx {
                Some((h, idx)) => self.model.loss_grad(h, idx).1,
                None => {
                    let trial: Vec<f64> = self.model.params().iter().zip(&delta).map(|(p, d)| p + d).collect();
                    self.model.loss_grad_at(&trial, data, batch).1
                }
            };
            let env: Vec<f64> = env.into_iter().map(|g| -g).collect();
            if delta.iter().chain(&env).any(|x| !x.is_finite()) {
                return Err(InertiaError::Divergence { step: self.step, loss });
            }
            // Inputs are finite here, so a rejected observation means the path
            // norms overflowed.
            let step = self.step;
            let obs = self
                .accumulator
                .observe(delta, env, loss.max(f64::MIN_POSITIVE))
                .map_err(|_| InertiaError::Divergence { step, loss })?;

            let mut record = TelemetryRecord {
                step: self.step,
                epoch,
                loss,
                dr: 0.0,
                ds_r: 0.0,
                ds_ext: 0.0,
                l_r: 1.0,
                l_s: 1.0,
                v_raw: 0.0,
                v_smoothed: 0.0,
                eta_sched,
                eta_wrapper: eta_sched,
                eta_eff: eta_sched,
                eta_final: eta_sched,
                eta_composed: eta_sched,
                coherence: 1.0,
                braked: false,
                phase_tag: if warmup { PhaseTag::Warmup } else { tag },
            };
            let applied = match self.calibration {
                None => eta_sched,
                Some(cal) => {
                    let est = self.accumulator.estimate(&obs, &cal)?;
                    let smoothed = self.accumulator.smooth(est.value);
                    fill_measurement(&mut record, &est, smoothed.value());
                    if let Some(reg) = self.regulator.as_mut() {
                        let decision = reg.step(StepInput {
                            step: self.step,
                            epoch,
                            estimate: &est,
                            smoothed,
                            ds_r: &obs.delta_theta,
                            ds_ext: &obs.env_gradient,
                            loss,
                            eta_sched,
                            floor: self.config.lr_floor,
                        })?;
                        fill_decision(&mut record, &decision);
                        decision.eta_composed
                    } else {
                        eta_sched
                    }
                }
            };
            self.model.sgd_step(&grad, applied);
            self.step += 1;
            if warmup {
                pending.push(Pending { obs, record });
            } else {
                records.push(record);
            }
        }

        if warmup {
            let observations: Vec<StepObservation> = pending.iter().map(|p| p.obs.clone()).collect();
            let cal = calibrate(&observations, &self.config.calibration)?;
            for p in pending {
                let mut record = p.record;
                let est = self.accumulator.estimate(&p.obs, &cal)?;
                let smoothed = self.accumulator.smooth(est.value);
                fill_measurement(&mut record, &est, smoothed.value());
                records.push(record);
            }
            self.install_calibration(cal)?;
        }
        Ok(records)
    }
}

fn fill_measurement(record: &mut TelemetryRecord, est: &VelocityEstimate, smoothed: f64) {
    record.dr = est.dr;
    record.ds_r = est.ds_r;
    record.ds_ext = est.ds_ext;
    record.l_r = est.l_r;
    record.l_s = est.l_s;
    record.v_raw = est.value.value();
    record.v_smoothed = smoothed;
}

fn fill_decision(record: &mut TelemetryRecord, d: &LrDecision) {
    record.eta_wrapper = d.eta_wrapper;
    record.eta_eff = d.eta_eff;
    record.eta_final = d.eta_final;
    record.eta_composed = d.eta_composed;
    record.coherence = d.coherence;
    record.braked = d.braked;
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Mlp,
    pub telemetry: Vec<TelemetryRecord>,
    pub calibration: Option<CalibrationConstants>,
}

/// Trains for `epochs` epochs on fixed data; the first epoch calibrates.
pub fn train(
    config: &TrainConfig,
    data: &Dataset,
    holdout: Option<&Dataset>,
    n_classes: usize,
    epochs: u64,
    seed: u64,
) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(config.clone(), data.dim, n_classes, seed)?;
    let mut telemetry = Vec::new();
    for epoch in 0..epochs {
        telemetry.extend(trainer.run_epoch(epoch, data, holdout, PhaseTag::Clean)?);
    }
    Ok(TrainOutput { calibration: trainer.calibration().copied(), model: trainer.model, telemetry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::task::SyntheticTask;

    fn small_batches() -> TrainConfig {
        TrainConfig { batch_size: 8, ..Default::default() }
    }

    fn two_class() -> (SyntheticTask, Dataset) {
        let task = SyntheticTask { n_classes: 2, cluster_std: 0.3, ..Default::default() };
        let data = task.generate(128, 0);
        (task, data)
    }

    #[test]
    fn separable_task_converges_without_regulation() {
        let (_, data) = two_class();
        let out = train(&small_batches(), &data, None, 2, 10, 1).unwrap();
        assert!(out.model.loss(&data) < 0.1);
        assert_eq!(out.telemetry.len(), 10 * 16);
        assert!(out.telemetry.iter().all(|r| r.is_finite()));
        assert!(out.telemetry[..16].iter().all(|r| r.phase_tag == PhaseTag::Warmup));
        let steps: Vec<u64> = out.telemetry.iter().map(|r| r.step).collect();
        assert_eq!(steps, (0..160).collect::<Vec<_>>());
    }

    #[test]
    fn runs_are_reproducible() {
        let task = SyntheticTask::default();
        let data = task.generate(200, 0);
        for mode in [RegulatorModeSel::Off, RegulatorModeSel::Standalone, RegulatorModeSel::Nested] {
            let cfg = TrainConfig { mode, ..small_batches() };
            let a = train(&cfg, &data, None, 10, 4, 7).unwrap();
            let b = train(&cfg, &data, None, 10, 4, 7).unwrap();
            assert_eq!(a.telemetry, b.telemetry);
            assert_eq!(a.model, b.model);
        }
    }

    #[test]
    fn warmup_calibration_centres_velocity() {
        let task = SyntheticTask::default();
        let data = task.generate(320, 0);
        let cfg = TrainConfig { measurement: MeasurementConfig { tier: crate::measurement::Tier::CausalRipple, ..Default::default() }, ..Default::default() };
        let out = train(&cfg, &data, None, 10, 1, 3).unwrap();
        let cal = out.calibration.unwrap();
        assert!(cal.granularity > 0.0);
        let mean_v: f64 = out.telemetry.iter().map(|r| r.v_raw).sum::<f64>() / out.telemetry.len() as f64;
        assert!((mean_v - 0.5).abs() < 0.15, "{mean_v}");
    }

    #[test]
    fn nested_mode_stays_between_paths() {
        let task = SyntheticTask::default();
        let data = task.generate(200, 0);
        let cfg = TrainConfig { mode: RegulatorModeSel::Nested, ..small_batches() };
        let out = train(&cfg, &data, None, 10, 3, 2).unwrap();
        for r in out.telemetry.iter().filter(|r| r.phase_tag != PhaseTag::Warmup) {
            let lo = r.eta_sched.min(r.eta_wrapper);
            let hi = r.eta_sched.max(r.eta_wrapper);
            assert!(r.eta_composed >= lo * (1.0 - 1e-12) && r.eta_composed <= hi * (1.0 + 1e-12));
            assert!((r.eta_final - r.eta_eff * r.coherence).abs() < 1e-15);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let (_, data) = two_class();
        let cfg = TrainConfig { schedule: Schedule::Constant { eta0: 1e300 }, ..small_batches() };
        let r = train(&cfg, &data, None, 2, 3, 0);
        assert!(matches!(r, Err(InertiaError::Divergence { .. })), "{:?}", r.map(|o| o.telemetry.last().copied()));
    }

    #[test]
    fn observation_mode_requires_holdout() {
        let (_, data) = two_class();
        let cfg = TrainConfig { probe: ProbeMode::Observation, ..small_batches() };
        assert!(matches!(train(&cfg, &data, None, 2, 1, 0), Err(InertiaError::Config(_))));
        assert!(train(&cfg, &data, Some(&data), 2, 2, 0).is_ok());
    }
}
