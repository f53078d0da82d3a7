use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

/// `(squared distance, id)`, ordered by distance then id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Neighbor {
    pub dist_sq: f64,
    pub id: u32,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq.total_cmp(&other.dist_sq).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded max-heap keeping the `cap` smallest entries seen.
#[derive(Clone, Debug)]
pub(crate) struct TopK {
    cap: usize,
    heap: BinaryHeap<Neighbor>,
}

impl TopK {
    pub fn new(cap: usize) -> Self {
        Self {
            cap,
            heap: BinaryHeap::with_capacity(cap + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.cap
    }

    /// Largest kept key, or `+inf` while not full.
    #[inline]
    pub fn threshold_sq(&self) -> f64 {
        if self.is_full() {
            self.heap.peek().map_or(f64::INFINITY, |n| n.dist_sq)
        } else {
            f64::INFINITY
        }
    }

    /// Inserts when not full or strictly below the current maximum.
    #[inline]
    pub fn offer(&mut self, dist_sq: f64, id: u32) -> bool {
        if self.is_full() {
            match self.heap.peek() {
                Some(top) if dist_sq < top.dist_sq => {
                    self.heap.pop();
                }
                _ => return false,
            }
        }
        self.heap.push(Neighbor { dist_sq, id });
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = &Neighbor> {
        self.heap.iter()
    }

    /// Ascending by distance.
    pub fn sorted(&self) -> Vec<Neighbor> {
        let mut v: Vec<Neighbor> = self.heap.iter().copied().collect();
        v.sort_unstable();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_smallest_and_skips_ties() {
        let mut t = TopK::new(2);
        assert_eq!(t.threshold_sq(), f64::INFINITY);
        assert!(t.offer(5.0, 1));
        assert!(t.offer(3.0, 2));
        assert_eq!(t.threshold_sq(), 5.0);
        assert!(!t.offer(5.0, 0));
        assert!(t.offer(1.0, 3));
        let s = t.sorted();
        assert_eq!((s[0].id, s[1].id), (3, 2));
    }
}
