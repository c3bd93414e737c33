use std::collections::VecDeque;

use rand::Rng;

/// One transition `(s, a, r, s', done)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// FIFO ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
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

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Experience> {
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(i: usize) -> Experience {
        Experience {
            state: vec![i as f64],
            action: vec![0.0],
            reward: i as f64,
            next_state: vec![i as f64 + 1.0],
            done: false,
        }
    }

    proptest! {
        #[test]
        fn keeps_the_latest_items_in_order(capacity in 1usize..50, extra in 0usize..80) {
            let mut buf = ReplayBuffer::new(capacity);
            for i in 0..capacity + extra {
                buf.push(exp(i));
            }
            prop_assert_eq!(buf.len(), capacity);
            let rewards: Vec<f64> = buf.iter().map(|e| e.reward).collect();
            let expected: Vec<f64> = (extra..capacity + extra).map(|i| i as f64).collect();
            prop_assert_eq!(rewards, expected);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(exp(i));
        }
        let a: Vec<f64> = buf.sample(5, &mut ChaCha8Rng::seed_from_u64(1)).iter().map(|e| e.reward).collect();
        let b: Vec<f64> = buf.sample(5, &mut ChaCha8Rng::seed_from_u64(1)).iter().map(|e| e.reward).collect();
        assert_eq!(a, b);
    }
}
