//! Discrete-event simulation and analysis of adaptive-bitrate VR streaming
//! over constrained networks.

pub mod abr;
pub mod config;
pub mod error;
pub mod metrics;
pub mod model;
pub mod path;
pub mod presets;
pub mod sim;
pub mod trace;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

pub use error::{Error, Result};

/// Scalar type of the metric estimators.
pub trait Real: Float + FromPrimitive + Sum + Debug + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + Sum + Debug + 'static {}

pub type Window = metrics::SlidingWindow<f64>;
pub type FowdFilter = metrics::KalmanFowd<f64>;
pub type PacketJitter = metrics::PacketJitter<f64>;
