use std::collections::BTreeMap;

fn pairs(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items, from the
/// contingency table. Returns 1 when both partitions are trivial in the
/// same way (the index is undefined there). `None` for fewer than two items.
pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let mut table: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut ra: BTreeMap<u32, f64> = BTreeMap::new();
    let mut rb: BTreeMap<u32, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sa: f64 = ra.values().map(|&c| pairs(c)).sum();
    let sb: f64 = rb.values().map(|&c| pairs(c)).sum();
    let expected = sa * sb / pairs(n as f64);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Some(1.0);
    }
    Some((index - expected) / (max - expected))
}
