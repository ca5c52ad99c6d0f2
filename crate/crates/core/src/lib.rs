//! Bayesian Cramér-Rao bounds for oscillator phase-noise estimation in a
//! two-transmitter coordinated multi-point downlink.
//!
//! The receiver observes `y_n = s_n (h1 e^{jφ1_n} + h2 e^{jφ2_n}) + w_n`
//! where each φ is the sum of a transmit and the receive oscillator phase,
//! all Wiener processes, and the two transmit oscillators are correlated
//! with synchronization factor ρ. The crate builds the prior and Fisher
//! terms of the Bayesian information matrix for data-aided, modified and
//! non-data-aided estimation, inverts it, derives the residual amplitude
//! noise, and checks the bounds against a MAP estimator.

pub mod amplitude;
pub mod bcrb;
pub mod error;
pub mod experiment;
pub mod fisher;
pub mod likelihood;
pub mod map;
pub mod model;
pub mod prior;
pub mod report;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{make_constellation, ChannelConfig, Constellation, Mode, PnConfig, ReceivedBlock};
