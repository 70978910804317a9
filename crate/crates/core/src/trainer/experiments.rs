//! Experiment protocols: noise sweep, noise shock, task switch, scheduler
//! benchmark.
//!
//! Every protocol fans out over seeds with rayon; each run owns its state
//! and results are collected in seed order, so outputs do not depend on
//! thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::Schedule;
use super::task::{Dataset, SyntheticTask};
use super::telemetry::{summarize_epochs, EpochSummary, PhaseTag, TelemetryRecord};
use super::train::{ProbeMode, RegulatorModeSel, TrainConfig, Trainer};
use crate::arena::{adjudicate, Adjudication, CostSample, FitOptions, Frame, Model};
use crate::error::{InertiaError, Result};
use crate::measurement::{MeasurementConfig, Tier};
use crate::seed::derive_seed;

/// Data geometry shared by every protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Substrate {
    pub n_classes: usize,
    pub input_dim: usize,
    pub cluster_std: f64,
    pub train_size: usize,
    pub holdout_size: usize,
}

impl Default for Substrate {
    fn default() -> Self {
        Substrate { n_classes: 10, input_dim: 16, cluster_std: 1.0, train_size: 400, holdout_size: 200 }
    }
}

impl Substrate {
    pub fn validate(&self) -> Result<()> {
        if self.train_size == 0 || self.holdout_size == 0 {
            return Err(InertiaError::Config("train_size and holdout_size must be positive".into()));
        }
        self.task(0).validate()
    }

    /// The full task for a seed; cluster geometry varies with the seed.
    pub fn task(&self, seed: u64) -> SyntheticTask {
        SyntheticTask {
            n_classes: self.n_classes,
            input_dim: self.input_dim,
            cluster_std: self.cluster_std,
            noise_fraction: 0.0,
            class_subset: None,
            seed: derive_seed(seed, 0xDA7A),
        }
    }
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(InertiaError::Config("at least one seed is required".into()));
    }
    Ok(())
}

fn epoch_mean_loss(records: &[TelemetryRecord]) -> f64 {
    records.iter().map(|r| r.loss).sum::<f64>() / records.len().max(1) as f64
}

// ---------------------------------------------------------------------------
// Noise sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSweepConfig {
    pub substrate: Substrate,
    pub train: TrainConfig,
    pub noise_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Convergence when the epoch-mean training loss drops to this
    /// fraction of `ln(n_classes)`.
    pub threshold_fraction: f64,
    pub epoch_cap: u64,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        NoiseSweepConfig {
            substrate: Substrate::default(),
            train: TrainConfig {
                probe: ProbeMode::Observation,
                measurement: MeasurementConfig { tier: Tier::CausalRipple, ..Default::default() },
                ..Default::default()
            },
            noise_levels: (0..10).map(|i| i as f64 / 9.0).collect(),
            seeds: (0..5).collect(),
            threshold_fraction: 0.6,
            epoch_cap: 200,
        }
    }
}

impl NoiseSweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.substrate.validate()?;
        self.train.validate()?;
        check_seeds(&self.seeds)?;
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(InertiaError::Config("noise_levels must be a nonempty list in [0, 1]".into()));
        }
        if !(self.threshold_fraction > 0.0) || self.epoch_cap == 0 {
            return Err(InertiaError::Config("threshold_fraction and epoch_cap must be positive".into()));
        }
        if self.train.mode != RegulatorModeSel::Off {
            return Err(InertiaError::Config("the noise sweep measures unregulated training; use mode off".into()));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.threshold_fraction * (self.substrate.n_classes as f64).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    pub noise: f64,
    /// Epochs to threshold, or the cap when censored.
    pub epochs: u64,
    pub censored: bool,
    pub mean_velocity: f64,
    pub final_loss: f64,
    pub granularity: f64,
}

impl SweepRun {
    pub fn sample(&self) -> CostSample {
        CostSample { velocity: self.mean_velocity, cost: self.epochs as f64, weight: 1.0, censored: self.censored }
    }
}

fn sweep_seed(config: &NoiseSweepConfig, seed: u64) -> Result<Vec<SweepRun>> {
    let task = config.substrate.task(seed);
    let clean = task.generate(config.substrate.train_size, 0);
    let holdout = task.generate(config.substrate.holdout_size, 1);
    let n_classes = config.substrate.n_classes;

    // The granularity is a property of the substrate: calibrate once on the
    // clean run and reuse it at every noise level.
    let mut warm = Trainer::new(config.train.clone(), task.input_dim, n_classes, seed)?;
    warm.run_epoch(0, &clean, Some(&holdout), PhaseTag::Warmup)?;
    let cal = *warm.calibration().ok_or_else(|| InertiaError::Calibration("warmup produced no constants".into()))?;

    config
        .noise_levels
        .iter()
        .enumerate()
        .map(|(i, &noise)| {
            let data = task.relabel(&clean, noise, derive_seed(seed, 0x5EED + i as u64));
            let mut trainer =
                Trainer::new(config.train.clone(), task.input_dim, n_classes, seed)?.with_calibration(cal)?;
            let mut v_sum = 0.0;
            let mut v_n = 0usize;
            let mut epochs = config.epoch_cap;
            let mut censored = true;
            let mut final_loss = f64::NAN;
            for epoch in 0..config.epoch_cap {
                let tag = if noise > 0.0 { PhaseTag::Noise } else { PhaseTag::Clean };
                let recs = trainer.run_epoch(epoch, &data, Some(&holdout), tag)?;
                v_sum += recs.iter().map(|r| r.v_raw).sum::<f64>();
                v_n += recs.len();
                final_loss = epoch_mean_loss(&recs);
                if final_loss <= config.threshold() {
                    epochs = epoch + 1;
                    censored = false;
                    break;
                }
            }
            Ok(SweepRun {
                seed,
                noise,
                epochs,
                censored,
                mean_velocity: v_sum / v_n as f64,
                final_loss,
                granularity: cal.granularity,
            })
        })
        .collect()
}

/// Trains every (seed, noise level) pair to the loss threshold.
pub fn run_noise_sweep(config: &NoiseSweepConfig) -> Result<Vec<SweepRun>> {
    config.validate()?;
    let per_seed: Vec<Vec<SweepRun>> = config.seeds.par_iter().map(|&s| sweep_seed(config, s)).collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

pub fn cost_samples(runs: &[SweepRun]) -> Vec<CostSample> {
    runs.iter().map(SweepRun::sample).collect()
}

/// One sample per noise level: velocity and cost averaged over seeds.
/// A level is censored when any of its seeds is.
pub fn seed_averaged_samples(runs: &[SweepRun]) -> Vec<CostSample> {
    let mut levels: Vec<f64> = Vec::new();
    for r in runs {
        if !levels.contains(&r.noise) {
            levels.push(r.noise);
        }
    }
    levels
        .iter()
        .map(|&p| {
            let group: Vec<&SweepRun> = runs.iter().filter(|r| r.noise == p).collect();
            let n = group.len() as f64;
            CostSample {
                velocity: group.iter().map(|r| r.mean_velocity).sum::<f64>() / n,
                cost: group.iter().map(|r| r.epochs as f64).sum::<f64>() / n,
                weight: 1.0,
                censored: group.iter().any(|r| r.censored),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRmse {
    pub model: Model,
    pub frame: Frame,
    pub mean_rmse: f64,
    /// Seeds whose fit succeeded.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JCurveVerdict {
    /// Fits on seed-averaged samples.
    pub pooled: Adjudication,
    /// Per-seed fits, in seed order.
    pub per_seed: Vec<Adjudication>,
    /// Per-seed rmse averaged over seeds, best first.
    pub mean_rmse: Vec<MeanRmse>,
    /// Mean of the per-seed covariance gaps.
    pub mean_covariance_gap: Option<f64>,
}

impl JCurveVerdict {
    pub fn mean(&self, model: Model, frame: Frame) -> Option<f64> {
        self.mean_rmse.iter().find(|m| m.model == model && m.frame == frame).map(|m| m.mean_rmse)
    }
}

pub fn jcurve_verdict(runs: &[SweepRun], seeds: &[u64], options: &FitOptions) -> JCurveVerdict {
    let per_seed: Vec<Adjudication> = seeds
        .iter()
        .map(|s| {
            let samples: Vec<CostSample> = runs.iter().filter(|r| r.seed == *s).map(SweepRun::sample).collect();
            adjudicate(&samples, options)
        })
        .collect();
    let mut mean_rmse: Vec<MeanRmse> = Model::ALL
        .iter()
        .flat_map(|&m| Frame::ALL.iter().map(move |&f| (m, f)))
        .map(|(model, frame)| {
            let vals: Vec<f64> = per_seed.iter().filter_map(|a| a.get(model, frame)).map(|f| f.rmse).collect();
            let mean = if vals.is_empty() { f64::INFINITY } else { vals.iter().sum::<f64>() / vals.len() as f64 };
            MeanRmse { model, frame, mean_rmse: mean, seeds: vals.len() }
        })
        .collect();
    mean_rmse.sort_by(|a, b| a.mean_rmse.total_cmp(&b.mean_rmse));
    let gaps: Vec<f64> = per_seed.iter().filter_map(|a| a.covariance_gap).collect();
    let mean_covariance_gap = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
    JCurveVerdict { pooled: adjudicate(&seed_averaged_samples(runs), options), per_seed, mean_rmse, mean_covariance_gap }
}

// ---------------------------------------------------------------------------
// Noise shock

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShockConfig {
    pub substrate: Substrate,
    /// Training setup for the regulated arm; the baseline arm is the same
    /// with the regulator off.
    pub train: TrainConfig,
    /// Total epochs; the second half alternates clean and 100%-noise epochs.
    pub epochs: u64,
    pub seeds: Vec<u64>,
}

impl Default for ShockConfig {
    fn default() -> Self {
        ShockConfig {
            substrate: Substrate::default(),
            train: TrainConfig { mode: RegulatorModeSel::Standalone, ..Default::default() },
            epochs: 30,
            seeds: (0..10).collect(),
        }
    }
}

impl ShockConfig {
    pub fn validate(&self) -> Result<()> {
        self.substrate.validate()?;
        self.train.validate()?;
        check_seeds(&self.seeds)?;
        if self.epochs < 4 {
            return Err(InertiaError::Config("shock runs need at least 4 epochs".into()));
        }
        Ok(())
    }

    pub fn shock_start(&self) -> u64 {
        self.epochs / 2
    }

    /// Phase of an epoch: clean first half, then clean/noise alternating.
    pub fn phase(&self, epoch: u64) -> PhaseTag {
        let start = self.shock_start();
        if epoch >= start && (epoch - start) % 2 == 1 {
            PhaseTag::Noise
        } else {
            PhaseTag::Clean
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockRun {
    pub seed: u64,
    pub mode: RegulatorModeSel,
    /// `mean(eta_final | clean) / mean(eta_final | noise)` over the shock half.
    pub brake_ratio: f64,
    pub mean_loss_clean: f64,
    pub mean_loss_noise: f64,
    pub mean_v_clean: f64,
    pub mean_v_noise: f64,
    /// Every noise epoch's mean raw velocity exceeds that of each adjacent
    /// clean epoch.
    pub noise_velocity_separated: bool,
    pub epochs: Vec<EpochSummary>,
    #[serde(skip)]
    pub telemetry: Vec<TelemetryRecord>,
}

fn shock_run(config: &ShockConfig, seed: u64, mode: RegulatorModeSel) -> Result<ShockRun> {
    let task = config.substrate.task(seed);
    let clean = task.generate(config.substrate.train_size, 0);
    let train = TrainConfig { mode, ..config.train.clone() };
    let mut trainer = Trainer::new(train, task.input_dim, task.n_classes, seed)?;
    let mut telemetry = Vec::new();
    for epoch in 0..config.epochs {
        let phase = config.phase(epoch);
        let data = match phase {
            PhaseTag::Noise => task.relabel(&clean, 1.0, derive_seed(seed, 0x5400 + epoch)),
            _ => clean.clone(),
        };
        telemetry.extend(trainer.run_epoch(epoch, &data, None, phase)?);
    }
    let epochs = summarize_epochs(&telemetry);
    let start = config.shock_start();
    let shock: Vec<&TelemetryRecord> = telemetry.iter().filter(|r| r.epoch >= start).collect();
    let phase_mean = |tag: PhaseTag, f: fn(&TelemetryRecord) -> f64| {
        let xs: Vec<f64> = shock.iter().filter(|r| r.phase_tag == tag).map(|r| f(r)).collect();
        xs.iter().sum::<f64>() / xs.len().max(1) as f64
    };
    let separated = epochs.iter().enumerate().filter(|(_, e)| e.phase_tag == PhaseTag::Noise).all(|(i, e)| {
        [i.checked_sub(1), Some(i + 1)]
            .into_iter()
            .flatten()
            .filter_map(|j| epochs.get(j))
            .filter(|n| n.phase_tag == PhaseTag::Clean && n.epoch >= start)
            .all(|n| e.mean_v_raw > n.mean_v_raw)
    });
    Ok(ShockRun {
        seed,
        mode,
        brake_ratio: phase_mean(PhaseTag::Clean, |r| r.eta_final) / phase_mean(PhaseTag::Noise, |r| r.eta_final),
        mean_loss_clean: phase_mean(PhaseTag::Clean, |r| r.loss),
        mean_loss_noise: phase_mean(PhaseTag::Noise, |r| r.loss),
        mean_v_clean: phase_mean(PhaseTag::Clean, |r| r.v_raw),
        mean_v_noise: phase_mean(PhaseTag::Noise, |r| r.v_raw),
        noise_velocity_separated: separated,
        epochs,
        telemetry,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockReport {
    pub regulated: Vec<ShockRun>,
    pub baseline: Vec<ShockRun>,
    pub regulated_seeds_braking: usize,
    pub baseline_ratio_range: (f64, f64),
    pub all_runs_separated: bool,
}

/// Regulated and unregulated arms on every seed.
pub fn run_noise_shock(config: &ShockConfig) -> Result<ShockReport> {
    config.validate()?;
    let regulated_mode = match config.train.mode {
        RegulatorModeSel::Off => RegulatorModeSel::Standalone,
        m => m,
    };
    let jobs: Vec<(u64, RegulatorModeSel)> = config
        .seeds
        .iter()
        .flat_map(|&s| [(s, regulated_mode), (s, RegulatorModeSel::Off)])
        .collect();
    let runs: Vec<ShockRun> = jobs.par_iter().map(|&(s, m)| shock_run(config, s, m)).collect::<Result<_>>()?;
    let (regulated, baseline): (Vec<ShockRun>, Vec<ShockRun>) =
        runs.into_iter().partition(|r| r.mode != RegulatorModeSel::Off);
    let lo = baseline.iter().map(|r| r.brake_ratio).fold(f64::INFINITY, f64::min);
    let hi = baseline.iter().map(|r| r.brake_ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(ShockReport {
        regulated_seeds_braking: regulated.iter().filter(|r| r.brake_ratio > 1.0).count(),
        baseline_ratio_range: (lo, hi),
        all_runs_separated: regulated.iter().chain(&baseline).all(|r| r.noise_velocity_separated),
        regulated,
        baseline,
    })
}

// ---------------------------------------------------------------------------
// Task switch

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinualConfig {
    pub substrate: Substrate,
    pub train: TrainConfig,
    pub task_a: Vec<usize>,
    pub task_b: Vec<usize>,
    /// First epoch trained on task B.
    pub switch_epoch: u64,
    pub epochs: u64,
    pub seeds: Vec<u64>,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        ContinualConfig {
            substrate: Substrate::default(),
            train: TrainConfig { mode: RegulatorModeSel::Standalone, ..Default::default() },
            task_a: (0..5).collect(),
            task_b: (5..10).collect(),
            switch_epoch: 10,
            epochs: 20,
            seeds: (0..10).collect(),
        }
    }
}

impl ContinualConfig {
    pub fn validate(&self) -> Result<()> {
        self.substrate.validate()?;
        self.train.validate()?;
        check_seeds(&self.seeds)?;
        if self.task_a.iter().any(|c| self.task_b.contains(c)) {
            return Err(InertiaError::Config("task_a and task_b must be disjoint".into()));
        }
        if self.switch_epoch < 2 || self.switch_epoch >= self.epochs {
            return Err(InertiaError::Config("switch_epoch must lie in [2, epochs)".into()));
        }
        for t in [&self.task_a, &self.task_b] {
            let task = SyntheticTask { class_subset: Some(t.clone()), ..self.substrate.task(0) };
            task.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualRun {
    pub seed: u64,
    pub mode: RegulatorModeSel,
    pub pre_switch_loss_a: f64,
    pub final_loss_a: f64,
    /// `final_loss_a − pre_switch_loss_a`.
    pub retention_deficit: f64,
    pub final_loss_b: f64,
    pub final_loss_full: f64,
    /// `eta_final` on the last step before the switch over the first after.
    pub instantaneous_ratio: f64,
    pub epochs: Vec<EpochSummary>,
    #[serde(skip)]
    pub telemetry: Vec<TelemetryRecord>,
}

fn continual_run(config: &ContinualConfig, seed: u64, mode: RegulatorModeSel) -> Result<ContinualRun> {
    let full = config.substrate.task(seed);
    let sub = |classes: &Vec<usize>| SyntheticTask { class_subset: Some(classes.clone()), ..full.clone() };
    let (task_a, task_b) = (sub(&config.task_a), sub(&config.task_b));
    let n = config.substrate.train_size;
    let h = config.substrate.holdout_size;
    let (train_a, train_b) = (task_a.generate(n, 0), task_b.generate(n, 2));
    let (val_a, val_b, val_full) = (task_a.generate(h, 1), task_b.generate(h, 3), full.generate(h, 4));

    let train = TrainConfig { mode, ..config.train.clone() };
    let mut trainer = Trainer::new(train, full.input_dim, full.n_classes, seed)?;
    let mut telemetry: Vec<TelemetryRecord> = Vec::new();
    let mut pre_switch_loss_a = f64::NAN;
    for epoch in 0..config.epochs {
        if epoch == config.switch_epoch {
            pre_switch_loss_a = trainer.model().loss(&val_a);
        }
        let (data, tag) = if epoch < config.switch_epoch {
            (&train_a, PhaseTag::TaskA)
        } else {
            (&train_b, PhaseTag::TaskB)
        };
        telemetry.extend(trainer.run_epoch(epoch, data, None, tag)?);
    }
    let switch = telemetry.iter().position(|r| r.epoch == config.switch_epoch).unwrap_or(0);
    let instantaneous_ratio = telemetry[switch - 1].eta_final / telemetry[switch].eta_final;
    let model = trainer.model();
    let final_loss_a = model.loss(&val_a);
    Ok(ContinualRun {
        seed,
        mode,
        pre_switch_loss_a,
        final_loss_a,
        retention_deficit: final_loss_a - pre_switch_loss_a,
        final_loss_b: model.loss(&val_b),
        final_loss_full: model.loss(&val_full),
        instantaneous_ratio,
        epochs: summarize_epochs(&telemetry),
        telemetry,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualReport {
    pub regulated: Vec<ContinualRun>,
    pub baseline: Vec<ContinualRun>,
    pub regulated_seeds_braking: usize,
    pub mean_deficit_regulated: f64,
    pub mean_deficit_baseline: f64,
}

pub fn run_task_switch(config: &ContinualConfig) -> Result<ContinualReport> {
    config.validate()?;
    let regulated_mode = match config.train.mode {
        RegulatorModeSel::Off => RegulatorModeSel::Standalone,
        m => m,
    };
    let jobs: Vec<(u64, RegulatorModeSel)> = config
        .seeds
        .iter()
        .flat_map(|&s| [(s, regulated_mode), (s, RegulatorModeSel::Off)])
        .collect();
    let runs: Vec<ContinualRun> =
        jobs.par_iter().map(|&(s, m)| continual_run(config, s, m)).collect::<Result<_>>()?;
    let (regulated, baseline): (Vec<ContinualRun>, Vec<ContinualRun>) =
        runs.into_iter().partition(|r| r.mode != RegulatorModeSel::Off);
    let mean = |rs: &[ContinualRun]| rs.iter().map(|r| r.retention_deficit).sum::<f64>() / rs.len() as f64;
    Ok(ContinualReport {
        regulated_seeds_braking: regulated.iter().filter(|r| r.instantaneous_ratio > 1.5).count(),
        mean_deficit_regulated: mean(&regulated),
        mean_deficit_baseline: mean(&baseline),
        regulated,
        baseline,
    })
}

// ---------------------------------------------------------------------------
// Scheduler benchmark

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub substrate: Substrate,
    pub train: TrainConfig,
    pub schedules: Vec<Schedule>,
    pub epochs: u64,
    pub seeds: Vec<u64>,
    /// Holdout-loss threshold, as a fraction of `ln(n_classes)`.
    pub threshold_fraction: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let epochs = 20;
        BenchConfig {
            substrate: Substrate::default(),
            train: TrainConfig::default(),
            schedules: vec![
                Schedule::Constant { eta0: 0.1 },
                Schedule::Exponential { eta0: 0.1, gamma: 0.9 },
                Schedule::Step { eta0: 0.1, gamma: 0.5, step_size: 5 },
                Schedule::Cosine { eta0: 0.1, eta_min: 0.001, total_epochs: epochs },
            ],
            epochs,
            seeds: (0..5).collect(),
            threshold_fraction: 0.2,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.substrate.validate()?;
        self.train.validate()?;
        check_seeds(&self.seeds)?;
        if self.schedules.is_empty() || self.epochs < 2 {
            return Err(InertiaError::Config("bench needs a schedule and at least 2 epochs".into()));
        }
        self.schedules.iter().try_for_each(Schedule::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub schedule: String,
    pub mode: RegulatorModeSel,
    pub seed: u64,
    pub final_holdout_loss: f64,
    pub final_holdout_accuracy: f64,
    /// First epoch (1-based) ending with holdout loss under the threshold.
    pub epochs_to_threshold: Option<u64>,
    pub epochs: Vec<EpochSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub schedule: String,
    pub mode: RegulatorModeSel,
    pub mean_final_loss: f64,
    pub mean_final_accuracy: f64,
    pub seeds_reaching_threshold: usize,
    pub mean_epochs_to_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub runs: Vec<BenchRun>,
}

fn bench_run(config: &BenchConfig, schedule: Schedule, mode: RegulatorModeSel, seed: u64) -> Result<BenchRun> {
    let task = config.substrate.task(seed);
    let data = task.generate(config.substrate.train_size, 0);
    let holdout: Dataset = task.generate(config.substrate.holdout_size, 1);
    let train = TrainConfig { mode, schedule, ..config.train.clone() };
    let mut trainer = Trainer::new(train, task.input_dim, task.n_classes, seed)?;
    let threshold = config.threshold_fraction * (task.n_classes as f64).ln();
    let mut telemetry = Vec::new();
    let mut reached = None;
    for epoch in 0..config.epochs {
        telemetry.extend(trainer.run_epoch(epoch, &data, Some(&holdout), PhaseTag::Clean)?);
        if reached.is_none() && trainer.model().loss(&holdout) <= threshold {
            reached = Some(epoch + 1);
        }
    }
    Ok(BenchRun {
        schedule: schedule.name().to_string(),
        mode,
        seed,
        final_holdout_loss: trainer.model().loss(&holdout),
        final_holdout_accuracy: trainer.model().accuracy(&holdout),
        epochs_to_threshold: reached,
        epochs: summarize_epochs(&telemetry),
    })
}

/// Each schedule alone, nested under the wrapper, and the wrapper alone.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let mut arms: Vec<(Schedule, RegulatorModeSel)> = Vec::new();
    for &s in &config.schedules {
        arms.push((s, RegulatorModeSel::Off));
        arms.push((s, RegulatorModeSel::Nested));
    }
    arms.push((Schedule::Constant { eta0: config.train.regulator.base_lr }, RegulatorModeSel::Standalone));
    let jobs: Vec<(Schedule, RegulatorModeSel, u64)> =
        arms.iter().flat_map(|&(s, m)| config.seeds.iter().map(move |&seed| (s, m, seed))).collect();
    let runs: Vec<BenchRun> = jobs.par_iter().map(|&(s, m, seed)| bench_run(config, s, m, seed)).collect::<Result<_>>()?;
    let rows = arms
        .iter()
        .map(|&(s, m)| {
            let group: Vec<&BenchRun> = runs.iter().filter(|r| r.schedule == s.name() && r.mode == m).collect();
            let n = group.len() as f64;
            let hits: Vec<f64> = group.iter().filter_map(|r| r.epochs_to_threshold).map(|e| e as f64).collect();
            BenchRow {
                schedule: s.name().to_string(),
                mode: m,
                mean_final_loss: group.iter().map(|r| r.final_holdout_loss).sum::<f64>() / n,
                mean_final_accuracy: group.iter().map(|r| r.final_holdout_accuracy).sum::<f64>() / n,
                seeds_reaching_threshold: hits.len(),
                mean_epochs_to_threshold: (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64),
            }
        })
        .collect();
    Ok(BenchReport { rows, runs })
}
