//! Event-level Monte Carlo of the adiabatic-collision picture.
//!
//! Each collision delivers a total action `l` against a facet inclined at
//! `θ = asin(ρ)`. The facet sequesters `l·sin θ`; only the normal part
//! `l·cos θ` accumulates toward an observable state change, which registers
//! whenever a full unit of normal action has built up. A multiplicative
//! controller tunes `l` so that every collision yields one registration.
//! Holding that tempo costs `γ(ρ)` times the reference work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use crate::dynamics::RuleDensity;
use crate::error::{InertiaError, Result};
use crate::seed::derive_seed;

pub const DEFAULT_CONTROLLER_GAIN: f64 = 0.01;
pub const DEFAULT_STOCHASTIC_JITTER: f64 = 0.05;

/// Relative slack on the registration threshold so that rounding in a
/// settled deterministic run never drops a registration.
const THRESHOLD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionConfig {
    pub rho: RuleDensity,
    pub n_events_target: u64,
    pub unit_action: f64,
    pub rng_seed: u64,
    /// Standard deviation of per-collision facet-angle noise, radians.
    pub facet_jitter: f64,
    #[serde(default = "default_gain")]
    pub controller_gain: f64,
    /// Collisions spent letting the controller settle before accounting.
    #[serde(default = "default_settle_events")]
    pub settle_events: u64,
    /// Relative tempo error allowed once settled.
    #[serde(default = "default_settle_tolerance")]
    pub settle_tolerance: f64,
    /// Hard cap on collisions, settling included.
    #[serde(default = "default_event_budget")]
    pub event_budget: u64,
}

fn default_gain() -> f64 {
    DEFAULT_CONTROLLER_GAIN
}

fn default_settle_events() -> u64 {
    4_000
}

fn default_settle_tolerance() -> f64 {
    0.05
}

fn default_event_budget() -> u64 {
    50_000_000
}

impl CollisionConfig {
    pub fn new(rho: RuleDensity, n_events_target: u64, rng_seed: u64, facet_jitter: f64) -> Self {
        CollisionConfig {
            rho,
            n_events_target,
            unit_action: 1.0,
            rng_seed,
            facet_jitter,
            controller_gain: DEFAULT_CONTROLLER_GAIN,
            settle_events: default_settle_events(),
            settle_tolerance: default_settle_tolerance(),
            event_budget: default_event_budget(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(InertiaError::Config(m.to_string()));
        if self.n_events_target == 0 {
            return bad("n_events_target must be at least 1");
        }
        if !(self.unit_action.is_finite() && self.unit_action > 0.0) {
            return bad("unit_action must be positive");
        }
        if !(self.facet_jitter.is_finite() && self.facet_jitter >= 0.0) {
            return bad("facet_jitter must be nonnegative");
        }
        if !(self.controller_gain > 0.0 && self.controller_gain < 1.0) {
            return bad("controller_gain must lie in (0, 1)");
        }
        if !(self.settle_tolerance > 0.0) {
            return bad("settle_tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub registered_events: u64,
    pub total_work: f64,
    /// `total_work / (n_events_target · unit_action)`.
    pub work_ratio: f64,
    pub mean_event_energy: f64,
    pub collisions: u64,
}

struct Facet {
    base_angle: f64,
    jitter: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Facet {
    fn new(config: &CollisionConfig) -> Self {
        let base_angle = config.rho.value().asin();
        let jitter = (config.facet_jitter > 0.0)
            .then(|| Normal::new(0.0, config.facet_jitter).expect("validated jitter"));
        Facet { base_angle, jitter, rng: ChaCha8Rng::seed_from_u64(config.rng_seed) }
    }

    /// Fraction of a collision's action that reaches the normal direction.
    fn transmission(&mut self) -> f64 {
        match &self.jitter {
            None => (1.0 - self.base_angle.sin().powi(2)).sqrt(),
            Some(noise) => (self.base_angle + noise.sample(&mut self.rng)).clamp(0.0, FRAC_PI_2).cos(),
        }
    }
}

pub fn run_collision_sim(config: &CollisionConfig) -> Result<SimResult> {
    config.validate()?;
    let unit = config.unit_action;
    let gain = config.controller_gain;
    let mut facet = Facet::new(config);
    let mut action = unit;
    let mut collisions: u64 = 0;

    // Settling: steer the action until the normal delivery matches one unit
    // per collision. The tempo check averages over a trailing block so that
    // facet jitter does not prevent settling.
    let block = 256u64;
    let mut block_log_err = 0.0;
    let mut block_len = 0u64;
    let mut settled = false;
    while collisions < config.event_budget {
        let normal = action * facet.transmission();
        collisions += 1;
        let log_err = if normal > 0.0 { (unit / normal).ln() } else { 1.0 };
        action *= (gain * log_err).exp();
        block_log_err += log_err;
        block_len += 1;
        if block_len == block {
            let mean_err = (block_log_err / block as f64).abs();
            if collisions >= config.settle_events && mean_err < config.settle_tolerance {
                settled = true;
                break;
            }
            block_log_err = 0.0;
            block_len = 0;
        }
    }
    if !settled {
        return Err(InertiaError::NonConvergence { budget: config.event_budget });
    }

    // Accounting: count injected work until the target is registered.
    let mut registered = 0u64;
    let mut accumulated = 0.0;
    let mut total_work = 0.0;
    let mut counted = 0u64;
    let threshold = unit * (1.0 - THRESHOLD_SLACK);
    while registered < config.n_events_target {
        if collisions >= config.event_budget {
            return Err(InertiaError::NonConvergence { budget: config.event_budget });
        }
        let normal = action * facet.transmission();
        collisions += 1;
        counted += 1;
        total_work += action;
        accumulated += normal;
        while accumulated >= threshold && registered < config.n_events_target {
            accumulated -= unit;
            registered += 1;
        }
        if normal > 0.0 {
            action *= (gain * (unit / normal).ln()).exp();
        }
    }

    let reference = config.n_events_target as f64 * unit;
    Ok(SimResult {
        registered_events: registered,
        total_work,
        work_ratio: total_work / reference,
        mean_event_energy: total_work / counted as f64,
        collisions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rho: f64,
    pub work_ratio: f64,
    pub registered_events: u64,
    pub total_work: f64,
    pub seed: u64,
}

/// Runs one simulation per density with seeds derived from the base seed
/// and the density's index. Output order follows `rhos`.
pub fn sweep_rho(rhos: &[RuleDensity], base: &CollisionConfig) -> Result<Vec<SweepPoint>> {
    rhos.par_iter()
        .enumerate()
        .map(|(i, &rho)| {
            let seed = derive_seed(base.rng_seed, i as u64);
            let config = CollisionConfig { rho, rng_seed: seed, ..*base };
            let r = run_collision_sim(&config)?;
            Ok(SweepPoint {
                rho: rho.value(),
                work_ratio: r.work_ratio,
                registered_events: r.registered_events,
                total_work: r.total_work,
                seed,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
