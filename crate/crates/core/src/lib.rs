//! Discrete-event simulator of the cellular random-access procedure over
//! long satellite round trips.

pub mod channel;
pub mod cli;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod identity;
pub mod protocol;
pub mod raconfig;
pub mod sequences;
pub mod timing;

pub use engine::{ladder, ladder_holds, multi_ue_run, run, sweep_rtt, KpiReport, LadderStep, Scenario, SweepPoint};
pub use error::{Error, Result};
pub use geometry::{NtnGeometry, Payload};
pub use protocol::{CollisionModel, CorrectionMode, CorrectionStrategy, FixFlags, Stage};
pub use raconfig::{PrachConfig, PreambleFormat, TimerMode};
pub use timing::{Duration, Standard, TimeBase, TimeStamp, TimingAdvance};
