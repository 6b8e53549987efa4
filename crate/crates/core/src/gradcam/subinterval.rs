use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Splits `[0, input_len)` into `nodes` contiguous runs whose sizes differ
/// by at most one, longer runs first.
pub fn subinterval_ranges(nodes: usize, input_len: usize) -> Result<Vec<Range<usize>>> {
    if nodes == 0 || input_len < nodes {
        return Err(Error::InvalidConfig(format!(
            "cannot split {input_len} input steps among {nodes} nodes"
        )));
    }
    let base = input_len / nodes;
    let extra = input_len % nodes;
    let mut start = 0;
    Ok((0..nodes)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// Pairs every node score with the input range it covers.
pub fn assign_to_subintervals(scores: &[f64], input_len: usize) -> Result<Vec<(Range<usize>, f64)>> {
    Ok(subinterval_ranges(scores.len(), input_len)?
        .into_iter()
        .zip(scores.iter().copied())
        .collect())
}

/// Score of one overlapping input window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    /// Zero-based first input index.
    pub start: usize,
    pub len: usize,
    pub score: f64,
}

/// Windows of length `window` at starts `0, stride, 2*stride, ...`; window
/// `j` takes node score `j`. Rejected when fewer windows than nodes fit.
pub fn window_scores(scores: &[f64], input_len: usize, window: usize, stride: usize) -> Result<Vec<WindowScore>> {
    if window == 0 || stride == 0 || window > input_len {
        return Err(Error::InvalidConfig(format!(
            "window {window} with stride {stride} on length {input_len}"
        )));
    }
    let fit = (input_len - window) / stride + 1;
    if fit < scores.len() {
        return Err(Error::InvalidConfig(format!(
            "only {fit} windows of length {window} (stride {stride}) fit {input_len} steps, {} nodes need one each",
            scores.len()
        )));
    }
    Ok(scores
        .iter()
        .enumerate()
        .map(|(j, &score)| WindowScore {
            start: j * stride,
            len: window,
            score,
        })
        .collect())
}

/// Largest stride at which `nodes` windows of length `window` fit in
/// `input_len` steps: `(L - W) / (nodes - 1)`. Gives 25 for 1000/225/32.
pub fn tiling_stride(input_len: usize, window: usize, nodes: usize) -> Result<usize> {
    if nodes == 0 || window == 0 || window > input_len {
        return Err(Error::InvalidConfig(format!(
            "cannot tile {nodes} windows of length {window} over {input_len} steps"
        )));
    }
    if nodes == 1 {
        return Ok(1);
    }
    let s = (input_len - window) / (nodes - 1);
    if s == 0 {
        return Err(Error::InvalidConfig(format!(
            "{nodes} windows of length {window} need distinct starts within {input_len} steps"
        )));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tiling_stride_examples() {
        assert_eq!(tiling_stride(1000, 225, 32).unwrap(), 25);
        let s = tiling_stride(200, 61, 7).unwrap();
        assert_eq!(s, 23);
        assert_eq!(window_scores(&[0.0; 7], 200, 61, s).unwrap().len(), 7);
        assert!(tiling_stride(10, 10, 3).is_err());
    }

    #[test]
    fn thousand_over_thirty_two() {
        let r = subinterval_ranges(32, 1000).unwrap();
        let sizes: Vec<usize> = r.iter().map(|r| r.len()).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 32).count(), 8);
        assert_eq!(sizes.iter().filter(|&&s| s == 31).count(), 24);
        assert!(sizes[..8].iter().all(|&s| s == 32));
        assert_eq!(r.last().unwrap().end, 1000);
    }

    #[test]
    fn identity_partition_and_constant_scores() {
        let r = subinterval_ranges(32, 32).unwrap();
        assert!(r.iter().enumerate().all(|(i, r)| *r == (i..i + 1)));
        let a = assign_to_subintervals(&[2.5; 4], 10).unwrap();
        assert!(a.iter().all(|(_, s)| *s == 2.5));
        assert!(subinterval_ranges(5, 4).is_err());
    }

    #[test]
    fn full_scale_windows() {
        let w = window_scores(&[0.0; 32], 1000, 225, 25).unwrap();
        assert_eq!(w.len(), 32);
        // 1-based t in [1, 225] and [26, 250]
        assert_eq!((w[0].start + 1, w[0].start + w[0].len), (1, 225));
        assert_eq!((w[1].start + 1, w[1].start + w[1].len), (26, 250));
        assert!(window_scores(&[0.0; 33], 1000, 225, 25).is_err());
    }

    proptest! {
        #[test]
        fn ranges_partition_the_input(nodes in 1usize..64, extra in 0usize..500) {
            let len = nodes + extra;
            let r = subinterval_ranges(nodes, len).unwrap();
            prop_assert_eq!(r.len(), nodes);
            prop_assert_eq!(r[0].start, 0);
            prop_assert_eq!(r.last().unwrap().end, len);
            for pair in r.windows(2) {
                prop_assert_eq!(pair[0].end, pair[1].start);
                prop_assert!(pair[0].len() >= pair[1].len());
            }
            let max = r.iter().map(|r| r.len()).max().unwrap();
            let min = r.iter().map(|r| r.len()).min().unwrap();
            prop_assert!(max - min <= 1 && min >= 1);
        }
    }
}
