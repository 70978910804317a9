//! Desk-scale training harness and the experiment protocols built on it.

pub mod experiments;
pub mod mlp;
pub mod schedule;
pub mod task;
pub mod telemetry;
pub mod train;

pub use mlp::{gradient_check, softmax_cross_entropy, Activation, GradientCheck, Mlp};
pub use schedule::Schedule;
pub use task::{Dataset, SyntheticTask};
pub use telemetry::{summarize_epochs, write_telemetry_csv, EpochSummary, PhaseTag, TelemetryRecord};
pub use train::{train, ProbeMode, RegulatorModeSel, TrainConfig, TrainOutput, Trainer};
