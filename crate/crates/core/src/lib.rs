//! Joint uplink/downlink simulation for pinching-antenna systems: channel
//! model, antenna activation, SCA power allocation and Monte Carlo sweeps.

pub mod activation;
pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod rates;
pub mod rng;
pub mod sca;

pub use channel::{ActivationMask, ChannelRealization};
pub use config::{Scenario, ScenarioConfig};
pub use error::{Error, Result};
pub use rates::{PowerAllocation, RateReport};
