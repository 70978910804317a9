//! JSON experiment configuration and the runners behind the CLI.
//!
//! A config names one experiment and carries that experiment's section;
//! every other section must be absent. Unknown keys are rejected at every
//! level. Seeds listed inside a section are offset by the top-level `seed`.
//!
//! Each run writes its resolved config, data CSVs, a JSON report, long-form
//! plot series (`series,x,y`) and a `manifest.json` describing the plots.

use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::arena::{adjudicate, Adjudication, CostSample, FitOptions, Frame, Model};
use crate::dynamics::{lorentz_factor, RuleDensity};
use crate::error::{InertiaError, Result};
use crate::microsim::{sweep_rho, write_sweep_csv, CollisionConfig, SweepPoint, DEFAULT_CONTROLLER_GAIN};
use crate::trainer::experiments::{
    cost_samples, jcurve_verdict, run_bench, run_noise_shock, run_noise_sweep, run_task_switch, BenchConfig,
    ContinualConfig, JCurveVerdict, NoiseSweepConfig, ShockConfig, SweepRun,
};
use crate::trainer::telemetry::{write_telemetry_csv, EpochSummary, TelemetryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Microsim,
    Jcurve,
    Bench,
    Shock,
    Continual,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Microsim => "microsim",
            ExperimentKind::Jcurve => "jcurve",
            ExperimentKind::Bench => "bench",
            ExperimentKind::Shock => "shock",
            ExperimentKind::Continual => "continual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MicrosimConfig {
    pub rhos: Vec<f64>,
    pub n_events: u64,
    pub jitter: f64,
    pub unit_action: f64,
    pub controller_gain: f64,
    pub event_budget: u64,
    pub fit: FitOptions,
}

impl Default for MicrosimConfig {
    fn default() -> Self {
        MicrosimConfig {
            rhos: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95],
            n_events: 100_000,
            jitter: 0.0,
            unit_action: 1.0,
            controller_gain: DEFAULT_CONTROLLER_GAIN,
            event_budget: 50_000_000,
            fit: FitOptions::default(),
        }
    }
}

impl MicrosimConfig {
    fn collision(&self, seed: u64) -> CollisionConfig {
        CollisionConfig {
            unit_action: self.unit_action,
            controller_gain: self.controller_gain,
            event_budget: self.event_budget,
            ..CollisionConfig::new(RuleDensity::ZERO, self.n_events, seed, self.jitter)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rhos.is_empty() {
            return Err(InertiaError::Config("rhos must be nonempty".into()));
        }
        for &r in &self.rhos {
            RuleDensity::new(r).map_err(|e| InertiaError::Config(format!("rhos: {e}")))?;
        }
        self.collision(0).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct JCurveConfig {
    pub sweep: NoiseSweepConfig,
    pub fit: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub microsim: Option<MicrosimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jcurve: Option<JCurveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shock: Option<ShockConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continual: Option<ContinualConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            seed: 0,
            output_dir: default_output_dir(),
            microsim: None,
            jcurve: None,
            bench: None,
            shock: None,
            continual: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| InertiaError::Config(format!("config parse error: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| InertiaError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fills in the selected section with defaults and validates it.
    pub fn resolve(mut self) -> Result<Self> {
        let present = [
            (ExperimentKind::Microsim, self.microsim.is_some()),
            (ExperimentKind::Jcurve, self.jcurve.is_some()),
            (ExperimentKind::Bench, self.bench.is_some()),
            (ExperimentKind::Shock, self.shock.is_some()),
            (ExperimentKind::Continual, self.continual.is_some()),
        ];
        if let Some((other, _)) = present.iter().find(|(k, p)| *p && *k != self.experiment) {
            return Err(InertiaError::Config(format!(
                "section `{}` given for experiment `{}`",
                other.as_str(),
                self.experiment.as_str()
            )));
        }
        match self.experiment {
            ExperimentKind::Microsim => self.microsim.get_or_insert_with(Default::default).validate()?,
            ExperimentKind::Jcurve => self.jcurve.get_or_insert_with(Default::default).sweep.validate()?,
            ExperimentKind::Bench => self.bench.get_or_insert_with(Default::default).validate()?,
            ExperimentKind::Shock => self.shock.get_or_insert_with(Default::default).validate()?,
            ExperimentKind::Continual => self.continual.get_or_insert_with(Default::default).validate()?,
        }
        Ok(self)
    }
}

fn offset(seeds: &[u64], base: u64) -> Vec<u64> {
    seeds.iter().map(|s| s.wrapping_add(base)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub file: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub files: Vec<String>,
    pub plots: Vec<PlotSpec>,
}

#[derive(Serialize)]
struct SeriesPoint<'a> {
    series: &'a str,
    x: f64,
    y: f64,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    plots: Vec<PlotSpec>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        Ok(())
    }

    fn rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let w = self.create(name)?;
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        for r in rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    }

    fn plot(&mut self, name: &str, title: &str, x: &str, y: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<()> {
        let points: Vec<SeriesPoint> = series
            .iter()
            .flat_map(|(s, pts)| pts.iter().map(move |&(x, y)| SeriesPoint { series: s, x, y }))
            .collect();
        self.rows(name, &points)?;
        self.plots.push(PlotSpec {
            file: name.to_string(),
            title: title.to_string(),
            x_label: x.to_string(),
            y_label: y.to_string(),
        });
        Ok(())
    }

    fn verdict(&mut self, name: &str, verdict: &Adjudication) -> Result<()> {
        let w = self.create(name)?;
        verdict.write_csv(w)
    }
}

/// Fitted curves for every successful row, sampled on a velocity grid.
fn fit_curves(verdict: &Adjudication, lo: f64, hi: f64) -> Vec<(String, Vec<(f64, f64)>)> {
    let grid: Vec<f64> = (0..=100).map(|i| lo + (hi - lo) * i as f64 / 100.0).collect();
    let mut series = Vec::new();
    for model in Model::ALL {
        for frame in Frame::ALL {
            if let Some(fit) = verdict.get(model, frame) {
                let pts = grid.iter().filter_map(|&v| fit.predict(v).ok().map(|c| (v, c))).collect();
                series.push((format!("{model}_{frame}"), pts));
            }
        }
    }
    series
}

/// Runs a resolved config and writes every output under its output dir.
pub fn run(config: &ExperimentConfig) -> Result<Manifest> {
    let mut out = Outputs { dir: config.output_dir.clone(), files: Vec::new(), plots: Vec::new() };
    fs::create_dir_all(&out.dir)?;
    out.json("resolved_config.json", config)?;
    let missing = || InertiaError::Config("config was not resolved".into());
    match config.experiment {
        ExperimentKind::Microsim => run_microsim(config.microsim.as_ref().ok_or_else(missing)?, config.seed, &mut out)?,
        ExperimentKind::Jcurve => run_jcurve(config.jcurve.as_ref().ok_or_else(missing)?, config.seed, &mut out)?,
        ExperimentKind::Bench => {
            let mut c = config.bench.clone().ok_or_else(missing)?;
            c.seeds = offset(&c.seeds, config.seed);
            let report = run_bench(&c)?;
            out.rows("bench.csv", &report.rows)?;
            out.json("report.json", &report)?;
            let series: Vec<(String, Vec<(f64, f64)>)> = report
                .rows
                .iter()
                .map(|row| {
                    let runs: Vec<_> = report
                        .runs
                        .iter()
                        .filter(|r| r.schedule == row.schedule && r.mode == row.mode)
                        .collect();
                    let n_epochs = runs.first().map_or(0, |r| r.epochs.len());
                    let pts = (0..n_epochs)
                        .map(|e| {
                            let mean = runs.iter().map(|r| r.epochs[e].mean_loss).sum::<f64>() / runs.len() as f64;
                            (e as f64, mean)
                        })
                        .collect();
                    (format!("{}_{}", row.schedule, mode_name(row.mode)), pts)
                })
                .collect();
            out.plot("plot_bench_loss.csv", "Training loss per epoch", "epoch", "mean training loss", &series)?;
        }
        ExperimentKind::Shock => {
            let mut c = config.shock.clone().ok_or_else(missing)?;
            c.seeds = offset(&c.seeds, config.seed);
            let report = run_noise_shock(&c)?;
            let runs: Vec<RunView> = report
                .regulated
                .iter()
                .chain(&report.baseline)
                .map(|r| RunView { seed: r.seed, mode: r.mode, epochs: &r.epochs, telemetry: &r.telemetry })
                .collect();
            write_runs(&mut out, "shock", &runs)?;
            out.json("report.json", &report)?;
        }
        ExperimentKind::Continual => {
            let mut c = config.continual.clone().ok_or_else(missing)?;
            c.seeds = offset(&c.seeds, config.seed);
            let report = run_task_switch(&c)?;
            let runs: Vec<RunView> = report
                .regulated
                .iter()
                .chain(&report.baseline)
                .map(|r| RunView { seed: r.seed, mode: r.mode, epochs: &r.epochs, telemetry: &r.telemetry })
                .collect();
            write_runs(&mut out, "continual", &runs)?;
            out.json("report.json", &report)?;
        }
    }
    let mut manifest = Manifest { experiment: config.experiment, files: out.files.clone(), plots: out.plots.clone() };
    manifest.files.push("manifest.json".into());
    out.json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn mode_name(mode: crate::trainer::RegulatorModeSel) -> &'static str {
    match mode {
        crate::trainer::RegulatorModeSel::Off => "off",
        crate::trainer::RegulatorModeSel::Standalone => "standalone",
        crate::trainer::RegulatorModeSel::Nested => "nested",
    }
}

struct RunView<'a> {
    seed: u64,
    mode: crate::trainer::RegulatorModeSel,
    epochs: &'a [EpochSummary],
    telemetry: &'a [TelemetryRecord],
}

fn write_runs(out: &mut Outputs, prefix: &str, runs: &[RunView]) -> Result<()> {
    for r in runs {
        let w = out.create(&format!("telemetry/{prefix}_seed{}_{}.csv", r.seed, mode_name(r.mode)))?;
        write_telemetry_csv(r.telemetry, w)?;
    }
    let w = out.create("epochs.csv")?;
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    csv.write_record([
        "seed",
        "mode",
        "epoch",
        "phase_tag",
        "steps",
        "mean_loss",
        "mean_v_raw",
        "mean_v_smoothed",
        "mean_eta_final",
        "mean_eta_applied",
        "braked_fraction",
    ])?;
    for r in runs {
        for s in r.epochs {
            let tag = serde_json::to_value(s.phase_tag)?;
            csv.write_record([
                r.seed.to_string(),
                mode_name(r.mode).to_string(),
                s.epoch.to_string(),
                tag.as_str().unwrap_or_default().to_string(),
                s.steps.to_string(),
                s.mean_loss.to_string(),
                s.mean_v_raw.to_string(),
                s.mean_v_smoothed.to_string(),
                s.mean_eta_final.to_string(),
                s.mean_eta_applied.to_string(),
                s.braked_fraction.to_string(),
            ])?;
        }
    }
    csv.flush()?;
    let series = |f: fn(&TelemetryRecord) -> f64| -> Vec<(String, Vec<(f64, f64)>)> {
        runs.iter()
            .map(|r| {
                let pts = r.telemetry.iter().map(|t| (t.step as f64, f(t))).collect();
                (format!("seed{}_{}", r.seed, mode_name(r.mode)), pts)
            })
            .collect()
    };
    out.plot(&format!("plot_{prefix}_eta_final.csv"), "Regulated learning rate", "step", "eta_final", &series(|t| t.eta_final))?;
    out.plot(&format!("plot_{prefix}_velocity.csv"), "Raw velocity", "step", "v_raw", &series(|t| t.v_raw))?;
    out.plot(&format!("plot_{prefix}_loss.csv"), "Training loss", "step", "loss", &series(|t| t.loss))?;
    Ok(())
}

fn run_microsim(c: &MicrosimConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let rhos: Vec<RuleDensity> = c.rhos.iter().map(|&r| RuleDensity::new(r)).collect::<Result<_>>()?;
    let points: Vec<SweepPoint> = sweep_rho(&rhos, &c.collision(seed))?;
    write_sweep_csv(&points, out.create("sweep.csv")?)?;
    let samples: Vec<CostSample> = points.iter().map(|p| CostSample::new(p.rho, p.work_ratio)).collect();
    let verdict = adjudicate(&samples, &c.fit);
    out.verdict("verdict.csv", &verdict)?;
    #[derive(Serialize)]
    struct Report<'a> {
        points: &'a [SweepPoint],
        verdict: &'a Adjudication,
    }
    out.json("report.json", &Report { points: &points, verdict: &verdict })?;
    let measured = points.iter().map(|p| (p.rho, p.work_ratio)).collect();
    let hi = c.rhos.iter().copied().fold(0.0, f64::max);
    let gamma = (0..=100)
        .map(|i| {
            let r = hi * i as f64 / 100.0;
            (r, lorentz_factor(RuleDensity::saturating(r)))
        })
        .collect();
    out.plot(
        "plot_work_ratio.csv",
        "Work inflation against rule density",
        "rho",
        "work ratio",
        &[("measured".into(), measured), ("gamma".into(), gamma)],
    )
}

fn run_jcurve(c: &JCurveConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let sweep = NoiseSweepConfig { seeds: offset(&c.sweep.seeds, seed), ..c.sweep.clone() };
    let runs: Vec<SweepRun> = run_noise_sweep(&sweep)?;
    out.rows("runs.csv", &runs)?;
    let verdict: JCurveVerdict = jcurve_verdict(&runs, &sweep.seeds, &c.fit);
    out.verdict("verdict.csv", &verdict.pooled)?;
    out.rows("mean_rmse.csv", &verdict.mean_rmse)?;
    out.json("report.json", &verdict)?;

    let samples = cost_samples(&runs);
    let pooled = crate::trainer::experiments::seed_averaged_samples(&runs);
    let series = vec![
        ("runs".to_string(), samples.iter().map(|s| (s.velocity, s.cost)).collect()),
        ("seed_mean".to_string(), pooled.iter().map(|s| (s.velocity, s.cost)).collect()),
    ];
    out.plot("plot_cost_samples.csv", "Cost against measured velocity", "velocity", "epochs to threshold", &series)?;
    let lo = pooled.iter().map(|s| s.velocity).fold(f64::INFINITY, f64::min);
    let hi = pooled.iter().map(|s| s.velocity).fold(f64::NEG_INFINITY, f64::max);
    if lo < hi {
        let curves = fit_curves(&verdict.pooled, lo, hi);
        out.plot("plot_fits.csv", "Fitted cost models", "velocity", "epochs to threshold", &curves)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"experiment":"microsim","bogus":1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let nested = r#"{"experiment":"microsim","microsim":{"rhos":[0.1],"typo":2}}"#;
        assert!(ExperimentConfig::from_json(nested).is_err());
        let deep = r#"{"experiment":"shock","shock":{"train":{"regulator":{"base_lrr":0.1}}}}"#;
        assert!(ExperimentConfig::from_json(deep).is_err());
    }

    #[test]
    fn foreign_sections_are_rejected() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment":"microsim","shock":{}}"#).unwrap();
        assert!(matches!(cfg.resolve(), Err(InertiaError::Config(_))));
    }

    #[test]
    fn resolve_fills_defaults_and_round_trips() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment":"jcurve","seed":3}"#).unwrap().resolve().unwrap();
        assert_eq!(cfg.jcurve.as_ref().unwrap().sweep.noise_levels.len(), 10);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap().resolve().unwrap(), cfg);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let bad = r#"{"experiment":"microsim","microsim":{"rhos":[1.5]}}"#;
        assert!(ExperimentConfig::from_json(bad).unwrap().resolve().is_err());
        let bad = r#"{"experiment":"continual","continual":{"task_a":[0,1],"task_b":[1,2]}}"#;
        assert!(ExperimentConfig::from_json(bad).unwrap().resolve().is_err());
    }
}
