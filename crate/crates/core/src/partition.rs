use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};

/// Ordered, disjoint, contiguous blocks covering `0..dim`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    dim: usize,
    /// `(start, len)` pairs in index order.
    blocks: Vec<(usize, usize)>,
}

impl BlockPartition {
    /// Builds from block lengths; zero-length blocks are rejected.
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::InvalidPartition("no blocks".into()));
        }
        let mut blocks = Vec::with_capacity(lengths.len());
        let mut start = 0;
        for &len in lengths {
            if len == 0 {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            blocks.push((start, len));
            start += len;
        }
        Ok(Self { dim: start, blocks })
    }

    /// Checks that `(start, len)` pairs tile `0..dim` in order.
    pub fn from_blocks(dim: usize, blocks: Vec<(usize, usize)>) -> Result<Self> {
        let mut next = 0;
        for &(start, len) in &blocks {
            if start != next || len == 0 {
                return Err(Error::InvalidPartition(format!(
                    "block ({start}, {len}) does not continue at {next}"
                )));
            }
            next += len;
        }
        if next != dim || blocks.is_empty() {
            return Err(Error::InvalidPartition(format!(
                "blocks cover 0..{next}, expected 0..{dim}"
            )));
        }
        Ok(Self { dim, blocks })
    }

    pub fn whole(dim: usize) -> Self {
        Self::even(dim, 1)
    }

    /// `count` blocks whose lengths differ by at most one (clamped to `1..=dim`).
    pub fn even(dim: usize, count: usize) -> Self {
        assert!(dim > 0, "cannot partition an empty vector");
        let count = count.clamp(1, dim);
        let (base, extra) = (dim / count, dim % count);
        let lengths: Vec<usize> = (0..count).map(|i| base + usize::from(i < extra)).collect();
        Self::from_lengths(&lengths).expect("non-empty lengths")
    }

    pub fn per_coordinate(dim: usize) -> Self {
        Self::even(dim, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn max_block_len(&self) -> usize {
        self.blocks.iter().map(|b| b.1).max().unwrap_or(0)
    }

    pub fn ranges(&self) -> impl ExactSizeIterator<Item = Range<usize>> + '_ {
        self.blocks.iter().map(|&(s, l)| s..s + l)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if dim == self.dim {
            Ok(())
        } else {
            Err(Error::InvalidPartition(format!(
                "partition covers {} coordinates, parameters have {dim}",
                self.dim
            )))
        }
    }
}
