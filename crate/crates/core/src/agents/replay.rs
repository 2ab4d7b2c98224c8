//! Fixed-capacity experience replay with uniform resampling.

use crate::error::{CoreError, Result};
use rand::Rng;

/// Ring buffer: once full, new items overwrite the oldest. Sampling is
/// uniform with replacement, one RNG draw per sampled item.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(CoreError::param("replay capacity", "must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity),
            next: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample_indices<R: Rng>(&self, rng: &mut R, batch: usize) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(CoreError::EmptyInput("replay buffer"));
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.items.len())).collect())
    }

    pub fn get(&self, index: usize) -> &T {
        &self.items[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn overwrites_oldest_when_full() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            buf.push(i);
        }
        assert_eq!(buf.len(), 3);
        let mut contents: Vec<i32> = (0..3).map(|i| *buf.get(i)).collect();
        contents.sort_unstable();
        assert_eq!(contents, vec![2, 3, 4], "0 and 1 were displaced");
    }

    #[test]
    fn sampling_is_uniform_enough_and_reproducible() {
        let mut buf = ReplayBuffer::new(4).unwrap();
        for i in 0..4 {
            buf.push(i);
        }
        let mut rng = stream_rng(5, "replay");
        let draws = buf.sample_indices(&mut rng, 40_000).unwrap();
        for slot in 0..4 {
            let freq = draws.iter().filter(|&&d| d == slot).count() as f64 / 40_000.0;
            assert!((freq - 0.25).abs() < 0.02, "slot {slot}: {freq}");
        }

        let mut a = stream_rng(9, "replay");
        let mut b = stream_rng(9, "replay");
        assert_eq!(
            buf.sample_indices(&mut a, 16).unwrap(),
            buf.sample_indices(&mut b, 16).unwrap()
        );
    }

    #[test]
    fn empty_buffer_refuses_to_sample() {
        let buf: ReplayBuffer<u8> = ReplayBuffer::new(2).unwrap();
        let mut rng = stream_rng(1, "replay");
        assert!(buf.sample_indices(&mut rng, 1).is_err());
        assert!(ReplayBuffer::<u8>::new(0).is_err());
    }
}
