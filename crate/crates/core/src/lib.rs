//! Energy-efficient precoder design for the K-user MIMO interference channel
//! when transmitters only know an estimate of the channel.
//!
//! Two designs maximize the global energy efficiency (sum rate over consumed
//! power):
//!
//! - [`stat_robust`] treats the CSI error as Gaussian and works with an
//!   error-as-noise rate, solved by Dinkelbach iterations around a
//!   minorize-maximize loop with a closed-form QCQP per user.
//! - [`worstcase`] bounds the error in a Frobenius ball and maximizes a
//!   guaranteed rate bound, alternating over precoders, receivers and MSE
//!   weights with one small SDP per block.
//!
//! [`channel`] draws networks and errors, [`metrics`] evaluates rates and
//! efficiency, [`sdp`] is the conic solver used by the bounded-error design
//! and [`harness`] runs Monte-Carlo sweeps.
//!
//! ```
//! use gee_precoder::channel::{generate_channels, SystemConfig};
//! use gee_precoder::stat_robust::{run_statistical, StatisticalOptions};
//!
//! let cfg = SystemConfig::symmetric(2, 2, 2, 1);
//! let estimate = generate_channels(&cfg, 7);
//! let out = run_statistical(&estimate, &cfg, 0.05, &StatisticalOptions::default())?;
//! assert!(out.report.gee > 0.0);
//! # Ok::<(), gee_precoder::Error>(())
//! ```

pub mod channel;
pub mod dinkelbach;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod sdp;
pub mod stat_robust;
pub mod worstcase;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/fractional.md")]
    mod fractional {}
    #[doc = include_str!("../../../book/src/statistical.md")]
    mod statistical {}
    #[doc = include_str!("../../../book/src/worstcase.md")]
    mod worstcase {}
    #[doc = include_str!("../../../book/src/sdp.md")]
    mod sdp {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
