//! Intermittent CSI estimation for massive MIMO downlinks.
//!
//! A base station with `M` antennas serves `K` users whose channels drift as
//! first-order Gauss-Markov processes between blocks of `C` channel uses.
//! Estimating every user in every block costs `K` pilot symbols per block;
//! this crate instead decides how often each user should be re-estimated.
//!
//! * [`ratemodel`]: closed-form SINR and rate as a function of CSI age, the
//!   cumulative rate `G`, the per-user rate `S(p) = p G(1/p)` and their smoothed
//!   approximations.
//! * [`precoder`]: the matched-filter and zero-forcing precoders behind one
//!   trait, looked up by name in a [`precoder::PrecoderRegistry`].
//! * [`optimizer`]: capped-simplex projection, gradient projection over update
//!   frequencies and the outer pilot-length search.
//! * [`scheduler`]: quasi-periodic interval laws and credit-based per-block
//!   pilot schedules with exact achieved rates.
//! * [`simulator`]: Monte Carlo check of the closed forms against simulated
//!   channels and precoders.
//! * [`experiments`]: scenario files, the three sweeps and CSV output used by
//!   the `agedcsi` binary.

pub mod error;
pub mod experiments;
pub mod optimizer;
pub mod precoder;
pub mod ratemodel;
pub mod scheduler;
pub mod simulator;

pub use error::{Error, Result};
pub use optimizer::{FrequencyAllocation, OptimizerSettings, PilotSearch};
pub use precoder::{MatchedFilter, Precoder, PrecoderRegistry, ZeroForcing};
pub use ratemodel::{LogBase, RateTable, SystemConfig, UserLink};
pub use scheduler::{IntervalDistribution, Schedule, ScheduleStats};
pub use simulator::{ChannelMatrix, MonteCarloReport};
