use crate::Real;

/// RTP interarrival jitter estimator (RFC 3550).
///
/// `J <- J + (|D| - J) / 16`, where `D` is the difference in relative transit
/// time between two consecutive packets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketJitter<T> {
    jitter: T,
    last_transit: Option<T>,
}

impl<T: Real> Default for PacketJitter<T> {
    fn default() -> Self {
        PacketJitter {
            jitter: T::zero(),
            last_transit: None,
        }
    }
}

impl<T: Real> PacketJitter<T> {
    pub fn value(&self) -> T {
        self.jitter
    }

    /// Applies one update with a known `|D|`.
    pub fn update(&mut self, abs_d: T) -> T {
        let sixteen = T::from_u8(16).expect("16 is representable");
        self.jitter = self.jitter + (abs_d.abs() - self.jitter) / sixteen;
        self.jitter
    }

    /// Feeds a packet's send and receive timestamps (same unit as the
    /// estimate). The first packet only primes the transit reference.
    pub fn on_packet(&mut self, sent: T, received: T) -> T {
        let transit = received - sent;
        if let Some(prev) = self.last_transit.replace(transit) {
            self.update(transit - prev);
        }
        self.jitter
    }
}
