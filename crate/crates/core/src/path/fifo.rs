use std::collections::VecDeque;

/// Nanoseconds on the simulation clock.
pub type Nanos = u64;

pub const NANOS_PER_MICRO: u64 = 1_000;

/// Serialization time of `bytes` at `rate_bps`, rounded up to the nanosecond.
pub fn serialization_ns(bytes: u64, rate_bps: u64) -> Nanos {
    let bits = bytes as u128 * 8 * 1_000_000_000;
    bits.div_ceil(rate_bps as u128) as Nanos
}

pub fn mbps_to_bps(mbps: f64) -> u64 {
    (mbps * 1e6).round().max(1.0) as u64
}

pub fn ns_to_us_ceil(ns: Nanos) -> u64 {
    ns.div_ceil(NANOS_PER_MICRO)
}

/// Tail-drop FIFO in front of a constant-rate server.
#[derive(Debug, Clone, Default)]
pub struct FifoLink {
    /// Departure time and size of every packet still queued or in service.
    queue: VecDeque<(Nanos, u64)>,
    queued_bytes: u64,
    next_free: Nanos,
    peak_packets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueFull;

impl FifoLink {
    pub fn new() -> Self {
        Self::default()
    }

    fn drain(&mut self, now: Nanos) {
        while let Some(&(depart, bytes)) = self.queue.front() {
            if depart > now {
                break;
            }
            self.queue.pop_front();
            self.queued_bytes -= bytes;
        }
    }

    /// Admits a packet at `now` and returns its departure time. Both limits
    /// count the packet in service.
    pub fn offer(
        &mut self,
        now: Nanos,
        bytes: u64,
        rate_bps: u64,
        overhead_ns: Nanos,
        max_packets: Option<usize>,
        max_bytes: Option<u64>,
    ) -> Result<Nanos, QueueFull> {
        self.drain(now);
        if max_packets.is_some_and(|m| self.queue.len() >= m)
            || max_bytes.is_some_and(|m| self.queued_bytes + bytes > m)
        {
            return Err(QueueFull);
        }
        let depart = self.next_free.max(now) + serialization_ns(bytes, rate_bps) + overhead_ns;
        self.next_free = depart;
        self.queue.push_back((depart, bytes));
        self.queued_bytes += bytes;
        self.peak_packets = self.peak_packets.max(self.queue.len());
        Ok(depart)
    }

    /// Empties the queue; the server is idle from `now`.
    pub fn flush(&mut self, now: Nanos) -> usize {
        self.drain(now);
        let n = self.queue.len();
        self.queue.clear();
        self.queued_bytes = 0;
        self.next_free = now;
        n
    }

    pub fn occupancy(&mut self, now: Nanos) -> (usize, u64) {
        self.drain(now);
        (self.queue.len(), self.queued_bytes)
    }

    pub fn peak_packets(&self) -> usize {
        self.peak_packets
    }
}
