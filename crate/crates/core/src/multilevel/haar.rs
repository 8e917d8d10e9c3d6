//! Orthonormal Haar-type system on a [`BlockTree`].
//!
//! Coordinates are ordered level-major: coordinate 0 is the global constant
//! `1/sqrt(p)`, followed by one detail function per split block, level by
//! level. A block split into children of sizes `a` and `b` contributes the
//! detail that equals `+sqrt(b / (a (a+b)))` on the first child and
//! `-sqrt(a / (b (a+b)))` on the second.

use super::tree::BlockTree;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Split {
    /// index of the first child in the next level's block list
    child: usize,
    left: usize,
    right: usize,
}

impl Split {
    fn weights(&self) -> (f64, f64) {
        let (a, b) = (self.left as f64, self.right as f64);
        ((b / (a * (a + b))).sqrt(), (a / (b * (a + b))).sqrt())
    }
}

/// Per tree level, which blocks split and where their coefficients live.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HaarLayout {
    width: usize,
    /// `splits[l][j]` is `Some` when block `j` of level `l` has two children
    splits: Vec<Vec<Option<Split>>>,
    /// coefficient range of level `l` is `offsets[l]..offsets[l + 1]`
    offsets: Vec<usize>,
}

impl HaarLayout {
    pub fn new(tree: &BlockTree) -> Self {
        let depth = tree.depth();
        let mut splits = Vec::with_capacity(depth);
        for l in 0..depth {
            let mut child = 0;
            let level = tree
                .level(l)
                .iter()
                .map(|b| match b.halves() {
                    Some((left, right)) => {
                        let s = Split { child, left, right };
                        child += 2;
                        Some(s)
                    }
                    None => {
                        child += 1;
                        None
                    }
                })
                .collect();
            splits.push(level);
        }
        let levels = depth.max(1);
        let mut offsets = vec![0usize; levels + 1];
        for l in 0..levels {
            let details = splits.get(l).map_or(0, |s: &Vec<Option<Split>>| s.iter().flatten().count());
            offsets[l + 1] = offsets[l] + details + usize::from(l == 0);
        }
        debug_assert_eq!(offsets[levels], tree.width());
        Self {
            width: tree.width(),
            splits,
            offsets,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of coefficient levels, `max(depth, 1)`.
    pub fn levels(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn level_range(&self, l: usize) -> std::ops::Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    /// Haar coefficients of `x` (forward transform), `O(p log p)`.
    pub fn analyze(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.width);
        let mut out = vec![0.0; self.width];
        // block sums of the level below, starting from the singletons
        let mut sums = x.to_vec();
        for l in (0..self.splits.len()).rev() {
            let mut k = self.offsets[l] + usize::from(l == 0);
            let mut up = Vec::with_capacity(self.splits[l].len());
            let mut child = 0;
            for s in &self.splits[l] {
                match s {
                    Some(s) => {
                        let (wl, wr) = s.weights();
                        let (sl, sr) = (sums[s.child], sums[s.child + 1]);
                        out[k] = wl * sl - wr * sr;
                        k += 1;
                        up.push(sl + sr);
                        child += 2;
                    }
                    None => {
                        up.push(sums[child]);
                        child += 1;
                    }
                }
            }
            sums = up;
        }
        out[0] = sums[0] / (self.width as f64).sqrt();
        out
    }

    /// Inverse transform: the signal whose coefficients are `c`.
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.width);
        // value of the current partial sum on each block of the current level
        let mut values = vec![c[0] / (self.width as f64).sqrt()];
        for l in 0..self.splits.len() {
            let mut k = self.offsets[l] + usize::from(l == 0);
            let mut next = Vec::with_capacity(values.len() * 2);
            for (s, v) in self.splits[l].iter().zip(&values) {
                match s {
                    Some(s) => {
                        let (wl, wr) = s.weights();
                        next.push(v + wl * c[k]);
                        next.push(v - wr * c[k]);
                        k += 1;
                    }
                    None => next.push(*v),
                }
            }
            values = next;
        }
        values
    }

    /// The basis function of coordinate `k`, as a length-`p` vector.
    #[cfg(test)]
    pub fn basis_vector(&self, k: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.width];
        e[k] = 1.0;
        self.synthesize(&e)
    }
}
