//! Fixed-capacity experience replay with uniform sampling.

use std::sync::Arc;

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// States are shared by the nine agents' buffers.
    pub state: Arc<[f64]>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Arc<[f64]>,
    pub terminal: bool,
}

/// Ring buffer: once full, each push overwrites the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// `n` uniform draws with replacement; empty if the buffer is.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, Stream};

    fn t(i: usize) -> Transition {
        let s: Arc<[f64]> = Arc::from(vec![i as f64]);
        Transition {
            state: s.clone(),
            action: i,
            reward: i as f64,
            next_state: s,
            terminal: false,
        }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(t(i));
            assert!(b.len() <= 3);
        }
        assert_eq!(b.iter().map(|x| x.action).collect::<Vec<_>>(), vec![2, 3, 4]);
        b.push(t(5));
        assert_eq!(b.iter().map(|x| x.action).collect::<Vec<_>>(), vec![3, 4, 5]);
    }

    #[test]
    fn samples_only_stored() {
        let mut b = ReplayBuffer::new(10);
        let mut rng = RngStream::new(1).substream(Stream::ReplaySampling);
        assert!(b.sample(4, &mut rng).is_empty());
        for i in 0..4 {
            b.push(t(i));
        }
        let mut seen = [0usize; 4];
        for s in b.sample(4000, &mut rng) {
            seen[s.action] += 1;
        }
        // each of 4 entries ~ Bin(4000, 1/4): sigma ~ 27
        assert!(seen.iter().all(|&c| (c as f64 - 1000.0).abs() < 3.0 * 27.4), "{seen:?}");
    }
}
