//! Presorted feature columns for tree growing.
//!
//! Each column lists sample positions in ascending feature value. Node
//! samples occupy the same `[start, end)` range in every column, and a split
//! stably partitions all columns so each stays sorted.

use rayon::prelude::*;

use crate::matrix::Matrix;

/// Node size above which per-node work is spread over threads.
pub(crate) const PARALLEL_MIN: usize = 8192;

#[derive(Clone)]
pub(crate) struct SortedColumns {
    cols: Vec<Vec<u32>>,
}

impl SortedColumns {
    /// `rows[p]` is the matrix row of sample position `p`.
    pub(crate) fn new(x: &Matrix, rows: &[usize]) -> Self {
        let cols = (0..x.n_cols())
            .into_par_iter()
            .map(|f| {
                let mut c: Vec<u32> = (0..rows.len() as u32).collect();
                c.sort_by(|&a, &b| {
                    x.get(rows[a as usize], f)
                        .total_cmp(&x.get(rows[b as usize], f))
                        .then(a.cmp(&b))
                });
                c
            })
            .collect();
        Self { cols }
    }

    pub(crate) fn column(&self, f: usize, start: usize, end: usize) -> &[u32] {
        &self.cols[f][start..end]
    }

    /// Stable partition of `[start, end)` by `goes_left[position]`.
    /// Returns the first index of the right block.
    pub(crate) fn partition(&mut self, start: usize, end: usize, goes_left: &[bool]) -> usize {
        let split = |c: &mut Vec<u32>| -> usize {
            let slice = &mut c[start..end];
            let mut right = Vec::with_capacity(slice.len());
            let mut w = 0;
            for r in 0..slice.len() {
                let p = slice[r];
                if goes_left[p as usize] {
                    slice[w] = p;
                    w += 1;
                } else {
                    right.push(p);
                }
            }
            slice[w..].copy_from_slice(&right);
            start + w
        };
        let mids: Vec<usize> = if end - start >= PARALLEL_MIN {
            self.cols.par_iter_mut().map(split).collect()
        } else {
            self.cols.iter_mut().map(split).collect()
        };
        debug_assert!(mids.windows(2).all(|m| m[0] == m[1]));
        mids.first().copied().unwrap_or(start)
    }

    /// Positions in `[start, end)` (order of column 0).
    pub(crate) fn positions(&self, start: usize, end: usize) -> &[u32] {
        &self.cols[0][start..end]
    }
}

/// Midpoint between consecutive distinct values, kept strictly below `hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi && m >= lo {
        m
    } else {
        lo
    }
}
