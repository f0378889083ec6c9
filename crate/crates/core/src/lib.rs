//! Residual carrier- and sampling-frequency offset estimation for OFDM.
//!
//! The estimator splits the subcarriers into `Q` equal regions, multiplies
//! tones mirrored about each region's centre so that the tone-dependent phase
//! cancels, and recovers the block-to-block phase increment of every region
//! with two cascaded least-squares fits. The crate also carries a baseband
//! OFDM simulator (modem and channel), closed-form variance predictors, and a
//! seeded Monte-Carlo harness.
//!
//! ```
//! use pairphase::channel::{self, ChannelRealization, ImpairmentParams};
//! use pairphase::estimator::{self, WeightMode};
//! use pairphase::modem::{BlockGrid, SystemConfig};
//! use pairphase::Complex64;
//!
//! let cfg = SystemConfig::default();
//! let tx = BlockGrid::filled(cfg.m, cfg.n, Complex64::new(1.0, 0.0));
//! let chan = ChannelRealization::flat(&cfg);
//! let imp = ImpairmentParams::new(0.02, 5e-5, 0.0, 0);
//! let rx = channel::apply_impairments_freq(&tx, &chan, &imp, &cfg).unwrap();
//! let report =
//!     estimator::estimate(&rx, &chan.ctf, &tx, &cfg, WeightMode::Simplified, 0.0).unwrap();
//! assert!((report.eps_hat - 0.02).abs() < 1e-9);
//! assert!((report.eta_hat - 5e-5).abs() < 1e-9);
//! ```

pub mod channel;
mod error;
pub mod estimator;
pub mod harness;
pub mod modem;
pub mod seed;
pub mod variance;

pub use error::{Error, Result};
pub use num_complex::Complex64;
