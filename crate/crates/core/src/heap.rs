//! Addressable binary max-heap over dense ids with updatable keys.
//!
//! Backs tree selection: extract-max and key updates in O(log n) instead of
//! rescanning all trees per selection. Ties favor the lowest id, so iteration
//! order of the surrounding code never changes which element pops first.

/// Max-heap over ids `0..n` keyed by `i64`, equal keys won by the lower id.
#[derive(Debug, Clone)]
pub struct IndexedMaxHeap {
    heap: Vec<usize>,
    /// id -> position in `heap`, or `None` once removed.
    locator: Vec<Option<usize>>,
    key: Vec<i64>,
}

impl IndexedMaxHeap {
    /// Builds a heap containing every id `0..keys.len()`.
    pub fn with_keys(keys: Vec<i64>) -> Self {
        let n = keys.len();
        let mut h = IndexedMaxHeap {
            heap: (0..n).collect(),
            locator: (0..n).map(Some).collect(),
            key: keys,
        };
        for i in (0..n / 2).rev() {
            h.sift_down(i);
        }
        h
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.locator[id].is_some()
    }

    /// Current key of `id`, whether or not it is still in the heap.
    pub fn key(&self, id: usize) -> i64 {
        self.key[id]
    }

    pub fn peek(&self) -> Option<usize> {
        self.heap.first().copied()
    }

    /// Removes and returns the max element and its key.
    pub fn pop(&mut self) -> Option<(usize, i64)> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.locator[top] = None;
        if top != last {
            self.heap[0] = last;
            self.locator[last] = Some(0);
            self.sift_down(0);
        }
        Some((top, self.key[top]))
    }

    /// Sets `id`'s key and restores heap order. No-op membership-wise for ids
    /// already popped (their stored key still changes).
    pub fn update(&mut self, id: usize, new_key: i64) {
        let old = self.key[id];
        self.key[id] = new_key;
        if let Some(pos) = self.locator[id] {
            if new_key > old {
                self.sift_up(pos);
            } else if new_key < old {
                self.sift_down(pos);
            }
        }
    }

    /// True if the element at `a` must sit above the one at `b`.
    fn outranks(&self, a: usize, b: usize) -> bool {
        let (ka, kb) = (self.key[a], self.key[b]);
        ka > kb || (ka == kb && a < b)
    }

    fn sift_up(&mut self, mut pos: usize) {
        while pos > 0 {
            let parent = (pos - 1) / 2;
            if self.outranks(self.heap[pos], self.heap[parent]) {
                self.swap(pos, parent);
                pos = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut pos: usize) {
        loop {
            let mut best = pos;
            for child in [2 * pos + 1, 2 * pos + 2] {
                if child < self.heap.len() && self.outranks(self.heap[child], self.heap[best]) {
                    best = child;
                }
            }
            if best == pos {
                return;
            }
            self.swap(pos, best);
            pos = best;
        }
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.heap.swap(a, b);
        self.locator[self.heap[a]] = Some(a);
        self.locator[self.heap[b]] = Some(b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pops_in_key_order_with_id_ties() {
        let mut h = IndexedMaxHeap::with_keys(vec![5, -2, 5, 9, 0]);
        let order: Vec<_> = std::iter::from_fn(|| h.pop()).collect();
        assert_eq!(order, vec![(3, 9), (0, 5), (2, 5), (4, 0), (1, -2)]);
    }

    #[test]
    fn updates_move_elements_both_ways() {
        let mut h = IndexedMaxHeap::with_keys(vec![1, 2, 3]);
        h.update(0, 10);
        h.update(2, -1);
        assert_eq!(h.pop(), Some((0, 10)));
        assert_eq!(h.pop(), Some((1, 2)));
        assert_eq!(h.pop(), Some((2, -1)));
        assert_eq!(h.pop(), None);
    }

    #[test]
    fn updates_after_pop_keep_key_but_not_membership() {
        let mut h = IndexedMaxHeap::with_keys(vec![4, 1]);
        assert_eq!(h.pop(), Some((0, 4)));
        assert!(!h.contains(0));
        h.update(0, 100);
        assert_eq!(h.key(0), 100);
        assert_eq!(h.pop(), Some((1, 1)));
    }

    #[test]
    fn matches_reference_under_random_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let n = rng.random_range(1..40usize);
            let keys: Vec<i64> = (0..n).map(|_| rng.random_range(-50..50)).collect();
            let mut h = IndexedMaxHeap::with_keys(keys.clone());
            let mut reference: Vec<(usize, i64)> = keys.into_iter().enumerate().collect();
            for _ in 0..n * 3 {
                if rng.random_bool(0.6) && !reference.is_empty() {
                    let i = rng.random_range(0..reference.len());
                    let delta = rng.random_range(-30..30);
                    reference[i].1 += delta;
                    h.update(reference[i].0, reference[i].1);
                } else if !reference.is_empty() {
                    let best = reference
                        .iter()
                        .enumerate()
                        .max_by_key(|(_, &(id, k))| (k, std::cmp::Reverse(id)))
                        .map(|(i, _)| i)
                        .unwrap();
                    let expect = reference.swap_remove(best);
                    assert_eq!(h.pop(), Some(expect));
                }
            }
        }
    }
}
