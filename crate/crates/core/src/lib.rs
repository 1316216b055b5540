//! Sparse WMMSE precoding for downlink multi-user MIMO in the angle domain.

pub mod allsp;
pub mod aullsp;
mod blocks;
pub mod channel;
pub mod config;
pub mod cost;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod linalg;
pub mod oracle;
pub mod rate;
pub mod scenario;
pub mod selection;
pub mod solution;
pub mod wmmse;

pub use allsp::{allsp_solve, AllspState};
pub use aullsp::{aullsp_solve, AullspState};
pub use channel::{synth_channel, ChannelParams, ChannelSet};
pub use config::{noise_from_snr, SystemConfig};
pub use cost::{cost_model, n_sym, CostReport, ResourceGrid};
pub use error::{PrecodingError, Result};
pub use rate::{rates, user_rate, wsr, RateReport};
pub use selection::{select_beams, SelectionRule, SelectionVector};
pub use solution::{PrecoderSolution, SolverOptions, SparseTraceRow, Support};
pub use wmmse::{dense_wmmse_solve, greedy_energy_select_then_wmmse, matched_filter_init, DensePrecoder};
