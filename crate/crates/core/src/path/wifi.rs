use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear interpolation over `(x, y)` points sorted by `x`,
/// constant beyond the ends.
fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    match points {
        [] => 0.0,
        [only] => only.1,
        _ => {
            let first = points[0];
            let last = points[points.len() - 1];
            if x <= first.0 {
                return first.1;
            }
            if x >= last.0 {
                return last.1;
            }
            let i = points.partition_point(|p| p.0 <= x);
            let (a, b) = (points[i - 1], points[i]);
            if b.0 == a.0 {
                return b.1;
            }
            a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
        }
    }
}

/// RSSI over time as `(t_s, dBm)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RssiProfile(pub Vec<(f64, f64)>);

impl RssiProfile {
    pub fn constant(dbm: f64) -> Self {
        RssiProfile(vec![(0.0, dbm)])
    }

    /// Holds `near`, ramps to `far`, stays there, ramps back.
    pub fn trapezoid(near: f64, far: f64, hold_s: f64, ramp_s: f64, plateau_s: f64) -> Self {
        let t1 = hold_s + ramp_s;
        let t2 = t1 + plateau_s;
        RssiProfile(vec![(0.0, near), (hold_s, near), (t1, far), (t2, far), (t2 + ramp_s, near)])
    }

    pub fn at(&self, t_s: f64) -> f64 {
        interpolate(&self.0, t_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WifiLinkModel {
    /// When false the hop has infinite rate and no loss.
    pub enabled: bool,
    /// `(RSSI dBm, goodput Mbps)`, monotone non-decreasing in RSSI.
    pub rate_map: Vec<(f64, f64)>,
    /// `(RSSI dBm, loss probability)`.
    pub residual_loss: Vec<(f64, f64)>,
    pub per_packet_overhead_us: f64,
    /// Tail-drop limit of the access-point queue.
    pub queue_packets: usize,
    pub rssi: RssiProfile,
}

impl Default for WifiLinkModel {
    fn default() -> Self {
        WifiLinkModel {
            enabled: true,
            rate_map: vec![
                (-80.0, 10.0),
                (-75.0, 30.0),
                (-70.0, 60.0),
                (-65.0, 120.0),
                (-55.0, 300.0),
                (-40.0, 600.0),
            ],
            residual_loss: vec![(-80.0, 0.002), (-75.0, 0.0005), (-65.0, 0.0)],
            per_packet_overhead_us: 8.0,
            queue_packets: 250,
            rssi: RssiProfile::constant(-40.0),
        }
    }
}

impl WifiLinkModel {
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.rate_map.is_empty() {
            return Err(Error::config(format!("{field}.rate_map"), "needs at least one point"));
        }
        for w in self.rate_map.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 < w[0].1 {
                return Err(Error::config(
                    format!("{field}.rate_map"),
                    "must be sorted by RSSI and non-decreasing in rate",
                ));
            }
        }
        if self.rate_map.iter().any(|p| p.1.is_nan() || p.1 <= 0.0) {
            return Err(Error::config(format!("{field}.rate_map"), "rates must be positive"));
        }
        if self.residual_loss.windows(2).any(|w| w[1].0 <= w[0].0)
            || self.residual_loss.iter().any(|p| !(0.0..=1.0).contains(&p.1))
        {
            return Err(Error::config(
                format!("{field}.residual_loss"),
                "must be sorted by RSSI with probabilities in [0, 1]",
            ));
        }
        if self.per_packet_overhead_us.is_nan() || self.per_packet_overhead_us < 0.0 {
            return Err(Error::config(format!("{field}.per_packet_overhead_us"), "must be non-negative"));
        }
        if self.queue_packets == 0 {
            return Err(Error::config(format!("{field}.queue_packets"), "must be positive"));
        }
        if self.rssi.0.is_empty() || self.rssi.0.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::config(format!("{field}.rssi"), "needs time-sorted (t_s, dBm) points"));
        }
        Ok(())
    }

    pub fn rssi_at(&self, t_s: f64) -> f64 {
        self.rssi.at(t_s)
    }

    pub fn rate_for_rssi(&self, rssi: f64) -> f64 {
        interpolate(&self.rate_map, rssi)
    }

    pub fn loss_for_rssi(&self, rssi: f64) -> f64 {
        interpolate(&self.residual_loss, rssi).clamp(0.0, 1.0)
    }

    pub fn set_rssi_profile(&mut self, profile: RssiProfile) {
        self.rssi = profile;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_profile_uses_top_rate() {
        let w = WifiLinkModel::default();
        for t in [0.0, 10.0, 119.9] {
            assert_eq!(w.rate_for_rssi(w.rssi_at(t)), 600.0);
        }
    }

    #[test]
    fn trapezoid_dips_and_recovers() {
        let mut w = WifiLinkModel::default();
        w.set_rssi_profile(RssiProfile::trapezoid(-40.0, -75.0, 30.0, 20.0, 20.0));
        let rate = |t: f64| w.rate_for_rssi(w.rssi_at(t));
        assert_eq!(rate(10.0), 600.0);
        assert_eq!(rate(60.0), 30.0);
        assert_eq!(rate(110.0), 600.0);
        assert!(rate(40.0) < 600.0 && rate(40.0) > 30.0);
        let mut last = f64::INFINITY;
        for i in 300..=500 {
            let r = rate(i as f64 / 10.0);
            assert!(r <= last);
            last = r;
        }
    }

    #[test]
    fn interpolation_midpoint() {
        let w = WifiLinkModel::default();
        assert!((w.rate_for_rssi(-72.5) - 45.0).abs() < 1e-9);
        assert_eq!(w.rate_for_rssi(-90.0), 10.0);
    }

    #[test]
    fn non_monotone_map_rejected() {
        let w = WifiLinkModel {
            rate_map: vec![(-70.0, 100.0), (-60.0, 50.0)],
            ..Default::default()
        };
        assert!(w.validate("wifi").is_err());
    }
}
