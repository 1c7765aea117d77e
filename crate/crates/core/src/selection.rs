//! Lowest-loss subset selection.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Indices of the `k` smallest losses, sorted ascending by index.
///
/// Ties are broken in favour of the smaller index, so the result is a pure
/// function of the input. Uses a partial selection rather than a full sort.
pub fn select_k_smallest(losses: &[f64], k: usize) -> Result<Vec<usize>> {
    let n = losses.len();
    if k == 0 || k > n {
        return Err(Error::SelectionSize { k, n });
    }
    if let Some(index) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::NonFiniteLoss { index });
    }
    let mut order: Vec<usize> = (0..n).collect();
    if k < n {
        let by_loss = |a: &usize, b: &usize| -> Ordering {
            losses[*a]
                .partial_cmp(&losses[*b])
                .expect("finite losses are totally ordered")
                .then(a.cmp(b))
        };
        order.select_nth_unstable_by(k - 1, by_loss);
        order.truncate(k);
        order.sort_unstable();
    }
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionStats {
    pub n_selected: usize,
    /// Selected samples that are not clean, `|S \ S*|`.
    pub n_bad_selected: usize,
    /// Fraction of all clean samples that were selected.
    pub clean_recovery_ratio: f64,
}

pub fn selection_stats(subset: &[usize], clean_mask: &[bool]) -> Result<SelectionStats> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    if let Some(&index) = subset.iter().find(|&&i| i >= clean_mask.len()) {
        return Err(Error::IndexOutOfRange { index, n: clean_mask.len() });
    }
    let n_clean_total = clean_mask.iter().filter(|&&c| c).count();
    if n_clean_total == 0 {
        return Err(Error::config("clean mask has no clean samples"));
    }
    let n_clean_selected = subset.iter().filter(|&&i| clean_mask[i]).count();
    Ok(SelectionStats {
        n_selected: subset.len(),
        n_bad_selected: subset.len() - n_clean_selected,
        clean_recovery_ratio: n_clean_selected as f64 / n_clean_total as f64,
    })
}
