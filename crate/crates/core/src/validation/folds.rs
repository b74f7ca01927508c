use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};

pub const REPEATS: usize = 4;
pub const OUTER_FOLDS: usize = 10;
pub const INNER_FOLDS: usize = 10;
/// Smallest dataset a fold plan accepts.
pub const MIN_ROWS: usize = 20;

/// Outer test folds per repeat and inner validation folds per outer fold.
/// All entries are row indices into the full dataset, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub n: usize,
    /// `outer[r][f]` = test rows of fold f in repeat r.
    pub outer: Vec<Vec<Vec<usize>>>,
    /// `inner[r][f][g]` = validation rows of inner fold g inside the training
    /// part of outer fold (r, f).
    pub inner: Vec<Vec<Vec<Vec<usize>>>>,
}

/// Split `rows` (after shuffling) into `k` contiguous chunks whose sizes
/// differ by at most one.
fn chunk(mut rows: Vec<usize>, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = substream(seed, 0);
    rows.shuffle(&mut rng);
    let n = rows.len();
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let mut fold = rows[start..start + size].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += size;
    }
    out
}

pub fn make_fold_plan(n: usize, seed: u64) -> Result<FoldPlan> {
    make_fold_plan_with(n, seed, REPEATS, OUTER_FOLDS, INNER_FOLDS)
}

pub fn make_fold_plan_with(n: usize, seed: u64, repeats: usize, k: usize, inner_k: usize) -> Result<FoldPlan> {
    if n < MIN_ROWS {
        return Err(Error::invalid(format!("fold plan needs at least {MIN_ROWS} rows, got {n}")));
    }
    if repeats == 0 || k < 2 || inner_k < 2 || k > n {
        return Err(Error::invalid("fold plan needs repeats >= 1 and at least 2 folds"));
    }
    let mut outer = Vec::with_capacity(repeats);
    let mut inner = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let folds = chunk((0..n).collect(), k, derive_seed(seed, &[r as u64]));
        let mut inner_r = Vec::with_capacity(k);
        for (f, test) in folds.iter().enumerate() {
            let train = complement(n, test);
            if train.len() < inner_k {
                return Err(Error::invalid("too few training rows for the inner folds"));
            }
            inner_r.push(chunk(train, inner_k, derive_seed(seed, &[r as u64, f as u64, 1])));
        }
        outer.push(folds);
        inner.push(inner_r);
    }
    Ok(FoldPlan { seed, n, outer, inner })
}

/// Rows of `0..n` not in the sorted slice `test`.
pub fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - test.len());
    let mut t = test.iter().peekable();
    for i in 0..n {
        if t.peek() == Some(&&i) {
            t.next();
        } else {
            out.push(i);
        }
    }
    out
}

/// Rows of sorted `set` not in sorted `minus`.
pub fn difference(set: &[usize], minus: &[usize]) -> Vec<usize> {
    set.iter().copied().filter(|i| minus.binary_search(i).is_err()).collect()
}

impl FoldPlan {
    pub fn repeats(&self) -> usize {
        self.outer.len()
    }

    pub fn folds(&self) -> usize {
        self.outer.first().map_or(0, Vec::len)
    }

    pub fn outer_train(&self, r: usize, f: usize) -> Vec<usize> {
        complement(self.n, &self.outer[r][f])
    }

    /// (train, validation) rows of inner fold g within outer fold (r, f).
    pub fn inner_split(&self, r: usize, f: usize, g: usize) -> (Vec<usize>, Vec<usize>) {
        let val = self.inner[r][f][g].clone();
        (difference(&self.outer_train(r, f), &val), val)
    }
}
