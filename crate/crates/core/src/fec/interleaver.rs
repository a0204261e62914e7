//! Row/column block interleaver: write row-wise, read column-wise.

use crate::{Error, Result};

/// Block interleaver over sequences of up to `rows * cols` elements.
///
/// Sequences shorter than the full block are handled by skipping the empty
/// trailing cells on read-out, which keeps the permutation a bijection on
/// `[0, len)` for any length; `deinterleave(interleave(s)) == s` always.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockInterleaver {
    pub rows: usize,
    pub cols: usize,
}

impl BlockInterleaver {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter("interleaver shape must be positive".into()));
        }
        Ok(BlockInterleaver { rows, cols })
    }

    /// Shape with the given row count sized to fit `len` elements.
    pub fn for_len(rows: usize, len: usize) -> Result<Self> {
        if rows == 0 || len == 0 {
            return Err(Error::Parameter("interleaver shape must be positive".into()));
        }
        Self::new(rows, len.div_ceil(rows))
    }

    /// Source index for each output position, in read-out order.
    fn permutation(&self, len: usize) -> Result<Vec<usize>> {
        if len > self.rows * self.cols {
            return Err(Error::Parameter(format!(
                "sequence of {len} exceeds interleaver block {}x{}",
                self.rows, self.cols
            )));
        }
        let mut perm = Vec::with_capacity(len);
        for c in 0..self.cols {
            for r in 0..self.rows {
                let src = r * self.cols + c;
                if src < len {
                    perm.push(src);
                }
            }
        }
        Ok(perm)
    }

    pub fn interleave<T: Copy>(&self, seq: &[T]) -> Result<Vec<T>> {
        Ok(self.permutation(seq.len())?.iter().map(|&i| seq[i]).collect())
    }

    pub fn deinterleave<T: Copy + Default>(&self, seq: &[T]) -> Result<Vec<T>> {
        let perm = self.permutation(seq.len())?;
        let mut out = vec![T::default(); seq.len()];
        for (dst, &src) in perm.iter().enumerate() {
            out[src] = seq[dst];
        }
        Ok(out)
    }
}
