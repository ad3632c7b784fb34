use std::collections::BTreeMap;

use crate::error::{FdError, Result};

fn pairs(k: u64) -> f64 {
    (k * k.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index under the permutation model. Labels are arbitrary
/// identifiers; only the induced partitions matter. When both partitions
/// are trivial in the same way (the adjustment is 0/0) the index is 1 for
/// equal partitions and 0 otherwise.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(FdError::DimensionMismatch(format!(
            "labelings of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, u64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&c| pairs(c)).sum();
    let sa: f64 = ra.values().map(|&c| pairs(c)).sum();
    let sb: f64 = rb.values().map(|&c| pairs(c)).sum();
    let total = pairs(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}
