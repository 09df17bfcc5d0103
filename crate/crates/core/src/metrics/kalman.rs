use serde::{Deserialize, Serialize};

use crate::Real;

/// Tuning of the one-way-delay-gradient filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanParams {
    /// State noise variance q.
    pub state_noise: f64,
    /// Initial measurement-noise variance r (ms^2).
    pub initial_measurement_noise: f64,
    /// Initial estimate-error variance e.
    pub initial_error: f64,
    /// Forgetting factor applied to the r estimate.
    pub forgetting: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        KalmanParams {
            state_noise: 1e-7,
            initial_measurement_noise: 0.01,
            initial_error: 0.1,
            forgetting: 0.99,
        }
    }
}

/// Scalar Kalman filter tracking the per-frame one-way delay gradient, with
/// the measurement noise estimated online from squared innovations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanFowd<T> {
    estimate: T,
    error: T,
    state_noise: T,
    measurement_noise: T,
    forgetting: T,
    last_gain: Option<T>,
}

impl<T: Real> KalmanFowd<T> {
    pub fn new(params: &KalmanParams) -> Self {
        let conv = |v: f64| T::from_f64(v).expect("parameter representable in scalar type");
        KalmanFowd {
            estimate: T::zero(),
            error: conv(params.initial_error),
            state_noise: conv(params.state_noise),
            measurement_noise: conv(params.initial_measurement_noise),
            forgetting: conv(params.forgetting),
            last_gain: None,
        }
    }

    pub fn estimate(&self) -> T {
        self.estimate
    }

    pub fn error_variance(&self) -> T {
        self.error
    }

    pub fn measurement_noise(&self) -> T {
        self.measurement_noise
    }

    pub fn last_gain(&self) -> Option<T> {
        self.last_gain
    }

    /// Incorporates one raw gradient sample and returns the new estimate.
    pub fn update(&mut self, gradient: T) -> T {
        let z = gradient - self.estimate;
        let prior = self.error + self.state_noise;
        let gain = prior / (prior + self.measurement_noise);
        self.estimate = self.estimate + gain * z;
        self.error = (T::one() - gain) * prior;

        let r = self.forgetting * self.measurement_noise + (T::one() - self.forgetting) * z * z;
        // keep r strictly positive so the gain stays below one
        self.measurement_noise = r.max(T::min_positive_value());
        self.last_gain = Some(gain);
        self.estimate
    }
}

/// Raw one-way delay gradient between two frames, from their send and
/// receive anchors.
pub fn delay_gradient(prev_tx: i64, prev_rx: i64, tx: i64, rx: i64) -> i64 {
    (rx - prev_rx) - (tx - prev_tx)
}
