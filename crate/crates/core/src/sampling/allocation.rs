use std::hash::Hash;

use indexmap::IndexMap;

/// Splits `capacity` slots across strata in proportion to their counts.
///
/// Each stratum first gets `floor(capacity * count / total)`; the slots left
/// over go one each to the strata with the largest remainders, ties going to
/// the stratum seen first (lower index). The result sums to `capacity` and
/// every entry is strictly within 1 of its real-valued share. An all-zero
/// input yields all-zero sizes.
pub fn allocate(counts: &[u64], capacity: usize) -> Vec<usize> {
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let cap = capacity as u128;
    let mut sizes = Vec::with_capacity(counts.len());
    let mut remainders = Vec::with_capacity(counts.len());
    let mut assigned: u128 = 0;
    for (i, &c) in counts.iter().enumerate() {
        let scaled = cap * c as u128;
        let q = scaled / total;
        assigned += q;
        sizes.push(q as usize);
        remainders.push((scaled % total, i));
    }
    let leftover = (cap - assigned) as usize;
    // stable sort keeps first-seen order among equal remainders
    remainders.sort_by_key(|r| std::cmp::Reverse(r.0));
    for &(_, i) in remainders.iter().take(leftover) {
        sizes[i] += 1;
    }
    sizes
}

/// Keyed form of [`allocate`]; output preserves the input order.
pub fn compute_allocation<K: Clone + Hash + Eq>(
    seen: &IndexMap<K, u64>,
    capacity: usize,
) -> IndexMap<K, usize> {
    if seen.values().all(|&c| c == 0) {
        return IndexMap::new();
    }
    let counts: Vec<u64> = seen.values().copied().collect();
    seen.keys()
        .cloned()
        .zip(allocate(&counts, capacity))
        .collect()
}
