//! Simulation and optimization of a UAV-mounted multifunctional RIS that
//! assists a NOMA downlink against an eavesdropper.
//!
//! A soft actor-critic agent picks UAV motion, BS power split, RIS element
//! scheduling and amplification each slot; RIS phases follow in closed form
//! from channel alignment. The objective is secure energy efficiency:
//! secrecy sum rate per watt of RIS and propulsion power.

pub mod app;
pub mod channel;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod learner;
pub mod link;
pub mod ris;
pub mod uav;

pub use app::config::SystemConfig;
pub use channel::{ChannelSet, Node, Position3D};
pub use env::{SchemeMode, SkyEnv, StepResult};
pub use error::{Result, SkyError};
