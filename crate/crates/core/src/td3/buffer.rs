//! Fixed-capacity FIFO experience store.

use crate::rng::SimRng;

/// One (possibly n-step aggregated) experience record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: [f64; 2],
    pub a: f64,
    /// Discounted sum of the rewards covered by this record.
    pub r: f64,
    /// State the bootstrap is taken from.
    pub s_next: [f64; 2],
    pub d: bool,
    /// Number of environment steps between `s` and `s_next`.
    pub steps: u32,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.s.iter().chain(&self.s_next).all(|x| x.is_finite()) && self.a.is_finite() && self.r.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    /// Slot the next insert overwrites once the buffer is full.
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, data: Vec::new(), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Records from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.data.split_at(self.cursor);
        older.iter().chain(newer)
    }

    /// Uniform sample with replacement; `None` while fewer than `n` records are stored.
    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Option<Vec<Transition>> {
        if n == 0 || self.data.len() < n {
            return None;
        }
        Some((0..n).map(|_| self.data[rng.below(self.data.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize) -> Transition {
        Transition { s: [i as f64, 0.0], a: 0.5, r: -1.0, s_next: [0.0; 2], d: false, steps: 1 }
    }

    #[test]
    fn evicts_oldest_at_capacity() {
        let mut b = ReplayBuffer::new(4);
        for i in 0..6 {
            b.push(rec(i));
        }
        assert_eq!(b.len(), 4);
        let order: Vec<f64> = b.iter_oldest_first().map(|t| t.s[0]).collect();
        assert_eq!(order, vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn sampling_needs_enough_records_and_is_seeded() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..10 {
            b.push(rec(i));
        }
        assert!(b.sample(11, &mut SimRng::new(0)).is_none());
        let x = b.sample(8, &mut SimRng::new(5)).unwrap();
        let y = b.sample(8, &mut SimRng::new(5)).unwrap();
        assert_eq!(x, y);
    }
}
