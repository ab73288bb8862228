//! Prefix-sum tree over non-negative weights with O(log n) draws and updates.

#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    len: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(weights: &[f64]) -> Self {
        let len = weights.len();
        let leaves = len.max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + len].copy_from_slice(weights);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self { leaves, len, nodes }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.nodes[self.leaves + index]
    }

    pub fn set(&mut self, index: usize, weight: f64) {
        assert!(index < self.len, "sum tree index {index} out of range");
        let mut i = self.leaves + index;
        self.nodes[i] = weight;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    /// Index whose cumulative interval contains `mass`, for `mass` in `[0, total)`.
    ///
    /// Zero-weight leaves are never returned while any positive leaf exists.
    pub fn find(&self, mass: f64) -> usize {
        let mut mass = mass.max(0.0);
        let mut i = 1;
        while i < self.leaves {
            let left = 2 * i;
            let right = left + 1;
            if mass < self.nodes[left] || self.nodes[right] <= 0.0 {
                i = left;
            } else {
                mass -= self.nodes[left];
                i = right;
            }
        }
        let mut idx = i - self.leaves;
        // rounding can land on a trailing zero leaf; step back to a live one
        while idx > 0 && (idx >= self.len || self.weight(idx) <= 0.0) {
            idx -= 1;
        }
        idx
    }
}
