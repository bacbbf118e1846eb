//! Frame index selection: proportional allocation of a frame budget across
//! ranges and uniform, endpoint-inclusive sampling inside one range.

use super::{FrameRange, MediaError};

/// Splits `n` frames across `ranges` in proportion to their lengths.
///
/// Uses largest-remainder rounding: every range gets the floor of its exact
/// share and the leftover frames go to the largest fractional parts, earlier
/// ranges first on ties. The result always sums to `n`.
pub fn allocate_across_ranges(ranges: &[FrameRange], n: u64) -> Result<Vec<u64>, MediaError> {
    if n < 1 {
        return Err(MediaError::InvalidCount("frame count must be at least 1".into()));
    }
    if ranges.is_empty() {
        return Err(MediaError::EmptyInput("range list"));
    }
    let lengths: Vec<u128> = ranges.iter().map(|r| r.len() as u128).collect();
    let total: u128 = lengths.iter().sum();
    let n = n as u128;

    // Exact share of range i is n * len_i / total; keep the remainder numerator
    // so ties compare exactly.
    let mut counts: Vec<u64> = Vec::with_capacity(ranges.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(ranges.len());
    for (i, len) in lengths.iter().enumerate() {
        let scaled = n * len;
        counts.push((scaled / total) as u64);
        remainders.push((scaled % total, i));
    }
    let assigned: u64 = counts.iter().sum();
    let leftover = (n as u64) - assigned;

    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(leftover as usize) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Picks `k` evenly spread global indices from `range`.
///
/// For `k >= 2` the i-th index is `start + floor(i * (len - 1) / (k - 1))`, so
/// both endpoints are always included. A single sample takes the midpoint.
/// When the range holds fewer than `k` frames every frame is returned once.
pub fn uniform_sample_indices(range: FrameRange, k: u64) -> Result<Vec<u64>, MediaError> {
    if k < 1 {
        return Err(MediaError::InvalidCount("sample count must be at least 1".into()));
    }
    let len = range.len();
    if len <= k {
        return Ok((range.start_frame..=range.end_frame).collect());
    }
    if k == 1 {
        return Ok(vec![range.start_frame + (len - 1) / 2]);
    }
    let span = (len - 1) as u128;
    let steps = (k - 1) as u128;
    let mut out: Vec<u64> = (0..k as u128).map(|i| range.start_frame + (i * span / steps) as u64).collect();
    out.dedup();
    Ok(out)
}

/// Allocates `n` frames across `ranges` and samples each range uniformly.
/// Output follows range order; duplicates across overlapping ranges are kept.
pub fn sample_ranges(ranges: &[FrameRange], n: u64) -> Result<Vec<u64>, MediaError> {
    let counts = allocate_across_ranges(ranges, n)?;
    let mut out = Vec::with_capacity(n as usize);
    for (range, count) in ranges.iter().zip(counts) {
        if count == 0 {
            continue;
        }
        out.extend(uniform_sample_indices(*range, count)?);
    }
    Ok(out)
}
