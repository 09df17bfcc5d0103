use std::collections::VecDeque;

use crate::Real;

/// Fixed-capacity window over the most recent samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow<T> {
    capacity: usize,
    samples: VecDeque<T>,
}

impl<T: Real> SlidingWindow<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        SlidingWindow {
            capacity,
            samples: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, sample: T) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.samples.iter()
    }

    pub fn mean(&self) -> Option<T> {
        if self.samples.is_empty() {
            return None;
        }
        let sum: T = self.samples.iter().copied().sum();
        Some(sum / T::from_usize(self.samples.len())?)
    }

    /// Sample standard deviation (n - 1 denominator); absent below two samples.
    pub fn std_dev(&self) -> Option<T> {
        sample_std_dev(self.samples.iter().copied())
    }
}

/// Sample standard deviation of a sequence; `None` with fewer than two values.
pub fn sample_std_dev<T: Real>(values: impl Iterator<Item = T> + Clone) -> Option<T> {
    let n = values.clone().count();
    if n < 2 {
        return None;
    }
    let nf = T::from_usize(n)?;
    let mean = values.clone().sum::<T>() / nf;
    let ss: T = values.map(|x| (x - mean) * (x - mean)).sum();
    Some((ss / (nf - T::one())).sqrt())
}
