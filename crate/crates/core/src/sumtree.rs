//! Sum tree over non-negative priorities.
//!
//! Leaves hold priorities, every internal node the sum of its two children.
//! Capacity is rounded up to a power of two; padding leaves hold zero and are
//! never returned by a prefix lookup. Incremental updates accumulate rounding
//! drift, so internal sums are rebuilt from the leaves after every
//! `capacity` calls to [`SumTree::set`].

use rand::RngCore;

use crate::error::{invalid, Error, Result};
use crate::rng::unit_f64;

#[derive(Debug, Clone)]
pub struct SumTree {
    /// `levels[0]` is the root, `levels[depth]` the leaves.
    levels: Vec<Vec<f64>>,
    capacity: usize,
    in_use: usize,
    writes_since_rebuild: usize,
}

impl SumTree {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("sum tree capacity must be positive"));
        }
        let capacity = capacity.next_power_of_two();
        let depth = capacity.trailing_zeros() as usize;
        let levels = (0..=depth).map(|l| vec![0.0; 1 << l]).collect();
        Ok(SumTree {
            levels,
            capacity,
            in_use: 0,
            writes_since_rebuild: 0,
        })
    }

    /// Number of leaves (a power of two).
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// One past the highest leaf index ever written.
    pub fn len_in_use(&self) -> usize {
        self.in_use
    }

    /// Nodes visited on a root-to-leaf path: `log2(capacity) + 1`.
    pub fn path_len(&self) -> usize {
        self.levels.len()
    }

    fn leaves(&self) -> &[f64] {
        self.levels.last().expect("at least one level")
    }

    pub fn get(&self, index: usize) -> Result<f64> {
        self.leaves()
            .get(index)
            .copied()
            .ok_or_else(|| invalid(format!("leaf {index} out of range (capacity {})", self.capacity)))
    }

    /// Total priority mass (the root).
    pub fn total(&self) -> f64 {
        self.levels[0][0]
    }

    /// Sets leaf `index` and refreshes its ancestors.
    pub fn set(&mut self, index: usize, priority: f64) -> Result<()> {
        if index >= self.capacity {
            return Err(invalid(format!(
                "leaf {index} out of range (capacity {})",
                self.capacity
            )));
        }
        if !(priority >= 0.0 && priority.is_finite()) {
            return Err(invalid(format!("priority must be finite and non-negative, got {priority}")));
        }
        self.set_traced(index, priority);
        Ok(())
    }

    fn set_traced(&mut self, leaf: usize, priority: f64) -> usize {
        let depth = self.levels.len() - 1;
        let mut index = leaf;
        self.levels[depth][index] = priority;
        let mut touched = 1;
        for level in (0..depth).rev() {
            index /= 2;
            let children = &self.levels[level + 1];
            let s = children[2 * index] + children[2 * index + 1];
            self.levels[level][index] = s;
            touched += 1;
        }
        self.in_use = self.in_use.max(leaf + 1);
        self.writes_since_rebuild += 1;
        if self.writes_since_rebuild >= self.capacity {
            self.rebuild();
        }
        touched
    }

    /// Recomputes every internal node from the leaves.
    pub fn rebuild(&mut self) {
        for level in (0..self.levels.len() - 1).rev() {
            let (upper, lower) = self.levels.split_at_mut(level + 1);
            for (i, node) in upper[level].iter_mut().enumerate() {
                *node = lower[0][2 * i] + lower[0][2 * i + 1];
            }
        }
        self.writes_since_rebuild = 0;
    }

    /// Smallest index `i` with `Σ_{j≤i} leaf[j] > u`, for `u ∈ [0, total)`.
    pub fn find_prefix(&self, u: f64) -> Result<usize> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::EmptyStructure("sum tree has zero total priority"));
        }
        if !(u >= 0.0 && u < total) {
            return Err(invalid(format!("prefix value {u} outside [0, {total})")));
        }
        Ok(self.descend(u).0)
    }

    /// Root-to-leaf descent. Ties at a left-subtree sum go right; a step into
    /// an empty right subtree (possible only through rounding) goes left.
    fn descend(&self, mut u: f64) -> (usize, usize) {
        let mut index = 0;
        let mut touched = 1;
        for level in 1..self.levels.len() {
            let nodes = &self.levels[level];
            let left = 2 * index;
            let left_sum = nodes[left];
            if u < left_sum || nodes[left + 1] <= 0.0 {
                index = left;
            } else {
                u -= left_sum;
                index = left + 1;
            }
            touched += 1;
        }
        (index, touched)
    }

    /// Draws `batch` leaf indices proportionally to priority. With
    /// `stratified`, draw `k` comes from the `k`-th of `batch` equal slices
    /// of `[0, total)`.
    pub fn sample_batch<R: RngCore + ?Sized>(
        &self,
        batch: usize,
        rng: &mut R,
        stratified: bool,
    ) -> Result<Vec<usize>> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::EmptyStructure("sum tree has zero total priority"));
        }
        let segment = total / batch as f64;
        Ok((0..batch)
            .map(|k| {
                let u = if stratified {
                    (k as f64 + unit_f64(rng)) * segment
                } else {
                    unit_f64(rng) * total
                };
                self.descend(u.min(prev_float(total))).0
            })
            .collect())
    }

    /// Largest relative mismatch between a node and the sum of its children.
    pub fn audit(&self) -> f64 {
        let mut worst = 0.0f64;
        for level in 0..self.levels.len() - 1 {
            for (i, &node) in self.levels[level].iter().enumerate() {
                let s = self.levels[level + 1][2 * i] + self.levels[level + 1][2 * i + 1];
                let scale = node.abs().max(s.abs());
                if scale > 0.0 {
                    worst = worst.max((node - s).abs() / scale);
                }
            }
        }
        worst
    }

    /// Leaf priorities, including padding leaves.
    pub fn priorities(&self) -> &[f64] {
        self.leaves()
    }
}

fn prev_float(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    f64::from_bits(x.to_bits() - 1)
}
