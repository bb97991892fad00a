//! Gini impurity and exhaustive midpoint split search.

use super::ForestError;

/// Gains within this margin of the incumbent count as ties; ties keep the
/// earlier (lower feature, lower threshold) candidate.
pub(crate) const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

pub fn gini(pos: usize, neg: usize) -> Result<f64, ForestError> {
    if pos + neg == 0 {
        return Err(ForestError::EmptyNode);
    }
    Ok(gini_unchecked(pos, neg))
}

#[inline]
pub(crate) fn gini_unchecked(pos: usize, neg: usize) -> f64 {
    let n = (pos + neg) as f64;
    let p = pos as f64 / n;
    let q = neg as f64 / n;
    1.0 - p * p - q * q
}

/// Threshold strictly between `lo` and `hi` that routes `lo` left and `hi`
/// right under the `<=` rule, even for adjacent floats.
#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Best impurity-decreasing split over `features` for the rows selected by
/// `idx`, requiring at least `min_leaf` rows on each side.
pub(crate) fn find_split(
    x: &[&[f64]],
    y: &[bool],
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
    buf: &mut Vec<(f64, bool)>,
) -> Option<Split> {
    let n = idx.len();
    if n < 2 {
        return None;
    }
    let pos_total = idx.iter().filter(|&&i| y[i]).count();
    let parent = gini_unchecked(pos_total, n - pos_total);
    if parent == 0.0 {
        return None;
    }
    let min_leaf = min_leaf.max(1);
    let mut best: Option<Split> = None;
    let mut best_gain = 0.0;

    for &f in features {
        buf.clear();
        buf.extend(idx.iter().map(|&i| (x[i][f], y[i])));
        buf.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut left_n, mut left_pos) = (0usize, 0usize);
        for k in 0..n - 1 {
            left_n += 1;
            left_pos += buf[k].1 as usize;
            if buf[k].0 == buf[k + 1].0 {
                continue;
            }
            let right_n = n - left_n;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let right_pos = pos_total - left_pos;
            let weighted = (left_n as f64 * gini_unchecked(left_pos, left_n - left_pos)
                + right_n as f64 * gini_unchecked(right_pos, right_n - right_pos))
                / n as f64;
            let gain = parent - weighted;
            if gain > best_gain + GAIN_EPS {
                best_gain = gain;
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(buf[k].0, buf[k + 1].0),
                    gain,
                });
            }
        }
    }
    best
}

/// Best split over all rows, one row per `x` entry.
pub fn best_split(x: &[Vec<f64>], y: &[bool], features: &[usize]) -> Option<Split> {
    let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let idx: Vec<usize> = (0..x.len()).collect();
    let mut features = features.to_vec();
    features.sort_unstable();
    features.dedup();
    find_split(&refs, y, &idx, &features, 1, &mut Vec::new())
}
