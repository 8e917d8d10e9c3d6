use serde::{Deserialize, Serialize};

/// Contiguous index range `[start, start + len)` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub start: usize,
    pub len: usize,
}

impl Block {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    /// Sizes of the two halves this block splits into, `(ceil, floor)`.
    pub fn halves(&self) -> Option<(usize, usize)> {
        (self.len >= 2).then(|| (self.len.div_ceil(2), self.len / 2))
    }
}

/// Dyadic partition hierarchy of `{0, .., p-1}`.
///
/// Level 0 is the single block covering everything; each following level
/// splits every block of size at least two into halves of sizes `ceil(s/2)`
/// and `floor(s/2)`. The deepest level, `depth() = ceil(log2 p)`, is all
/// singletons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub struct BlockTree {
    width: usize,
    levels: Vec<Vec<Block>>,
}

/// Serialized form: per level, the list of `[start, end)` boundaries.
#[derive(Serialize, Deserialize)]
struct TreeRepr {
    width: usize,
    levels: Vec<Vec<[usize; 2]>>,
}

impl From<BlockTree> for TreeRepr {
    fn from(t: BlockTree) -> Self {
        TreeRepr {
            width: t.width,
            levels: t
                .levels
                .iter()
                .map(|lvl| lvl.iter().map(|b| [b.start, b.end()]).collect())
                .collect(),
        }
    }
}

impl TryFrom<TreeRepr> for BlockTree {
    type Error = String;

    fn try_from(r: TreeRepr) -> Result<Self, String> {
        if r.width == 0 {
            return Err("block tree width must be positive".into());
        }
        let tree = build_block_tree(r.width);
        let expected: TreeRepr = tree.clone().into();
        if expected.levels != r.levels {
            return Err("block boundaries do not match the dyadic tree of this width".into());
        }
        Ok(tree)
    }
}

impl BlockTree {
    pub fn width(&self) -> usize {
        self.width
    }

    /// `n = ceil(log2 p)`; the tree has `n + 1` partitions.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, l: usize) -> &[Block] {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[Vec<Block>] {
        &self.levels
    }
}

/// Builds the dyadic block tree over `p` indices.
///
/// # Panics
/// If `p == 0`.
pub fn build_block_tree(p: usize) -> BlockTree {
    assert!(p >= 1, "block tree needs at least one index");
    let mut levels = vec![vec![Block { start: 0, len: p }]];
    while levels.last().unwrap().iter().any(|b| b.len >= 2) {
        let next = levels
            .last()
            .unwrap()
            .iter()
            .flat_map(|b| match b.halves() {
                Some((a, c)) => vec![
                    Block { start: b.start, len: a },
                    Block { start: b.start + a, len: c },
                ],
                None => vec![*b],
            })
            .collect();
        levels.push(next);
    }
    BlockTree { width: p, levels }
}
