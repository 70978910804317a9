//! Per-step training telemetry and its CSV form.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTag {
    Warmup,
    Clean,
    Noise,
    TaskA,
    TaskB,
}

/// One optimizer step. Column order in the CSV follows field order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub step: u64,
    pub epoch: u64,
    pub loss: f64,
    #[serde(rename = "dR")]
    pub dr: f64,
    #[serde(rename = "dS_R")]
    pub ds_r: f64,
    #[serde(rename = "dS_ext")]
    pub ds_ext: f64,
    #[serde(rename = "L_R")]
    pub l_r: f64,
    #[serde(rename = "L_S")]
    pub l_s: f64,
    pub v_raw: f64,
    pub v_smoothed: f64,
    pub eta_sched: f64,
    pub eta_wrapper: f64,
    pub eta_eff: f64,
    pub eta_final: f64,
    pub eta_composed: f64,
    pub coherence: f64,
    pub braked: bool,
    pub phase_tag: PhaseTag,
}

impl TelemetryRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.loss,
            self.dr,
            self.ds_r,
            self.ds_ext,
            self.l_r,
            self.l_s,
            self.v_raw,
            self.v_smoothed,
            self.eta_sched,
            self.eta_wrapper,
            self.eta_eff,
            self.eta_final,
            self.eta_composed,
            self.coherence,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

pub fn write_telemetry_csv<W: Write>(records: &[TelemetryRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_telemetry_csv<R: std::io::Read>(input: R) -> Result<Vec<TelemetryRecord>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Per-epoch aggregate of a telemetry stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: u64,
    pub phase_tag: PhaseTag,
    pub steps: usize,
    pub mean_loss: f64,
    pub mean_v_raw: f64,
    pub mean_v_smoothed: f64,
    pub mean_eta_final: f64,
    pub mean_eta_applied: f64,
    pub braked_fraction: f64,
}

/// Groups consecutive records by epoch. The phase tag is the epoch's
/// first record's tag.
pub fn summarize_epochs(records: &[TelemetryRecord]) -> Vec<EpochSummary> {
    records
        .chunk_by(|a, b| a.epoch == b.epoch)
        .map(|chunk| {
            let n = chunk.len() as f64;
            let mean = |f: fn(&TelemetryRecord) -> f64| chunk.iter().map(f).sum::<f64>() / n;
            EpochSummary {
                epoch: chunk[0].epoch,
                phase_tag: chunk[0].phase_tag,
                steps: chunk.len(),
                mean_loss: mean(|r| r.loss),
                mean_v_raw: mean(|r| r.v_raw),
                mean_v_smoothed: mean(|r| r.v_smoothed),
                mean_eta_final: mean(|r| r.eta_final),
                mean_eta_applied: mean(|r| r.eta_composed),
                braked_fraction: chunk.iter().filter(|r| r.braked).count() as f64 / n,
            }
        })
        .collect()
}

pub fn write_epoch_csv<W: Write>(summaries: &[EpochSummary], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for s in summaries {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
