use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::hypervolume::exclusive_contributions;
use super::SolverError;
use crate::value::ValueVector;

/// Mutually non-dominated value vectors, lexicographically descending.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParetoSet(Vec<ValueVector>);

impl ParetoSet {
    pub fn empty() -> Self {
        ParetoSet(Vec::new())
    }

    pub fn vectors(&self) -> &[ValueVector] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ValueVector> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<ValueVector> {
        self.0
    }

    /// Member within `tol` (L∞) of `v`, if any.
    pub fn find(&self, v: &ValueVector, tol: f64) -> Option<usize> {
        self.0.iter().position(|m| m.chebyshev(v) <= tol)
    }

    /// Whether `v` is dominated by or equal (within `tol`) to some member.
    pub fn covers(&self, v: &ValueVector, tol: f64) -> bool {
        self.0.iter().any(|m| v.covered_by(m, tol))
    }

    /// Per-component maxima over the members.
    pub fn maxima(&self) -> Option<ValueVector> {
        let first = self.0.first()?;
        Some(
            (0..first.dim())
                .map(|i| self.0.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        )
    }

    /// L∞ Hausdorff distance between two sets.
    pub fn hausdorff(&self, other: &ParetoSet) -> f64 {
        hausdorff(&self.0, &other.0, |v| v)
    }

    pub(crate) fn from_pruned(vectors: Vec<ValueVector>) -> Self {
        ParetoSet(vectors)
    }
}

impl<'a> IntoIterator for &'a ParetoSet {
    type Item = &'a ValueVector;
    type IntoIter = std::slice::Iter<'a, ValueVector>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub(crate) fn hausdorff<T>(a: &[T], b: &[T], key: impl Fn(&T) -> &ValueVector) -> f64 {
    fn directed<T>(from: &[T], to: &[T], key: &impl Fn(&T) -> &ValueVector) -> f64 {
        from.iter()
            .map(|x| {
                to.iter()
                    .map(|y| key(x).chebyshev(key(y)))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    directed(a, b, &key).max(directed(b, a, &key))
}

fn lex_desc(a: &ValueVector, b: &ValueVector) -> Ordering {
    b.lex_cmp(a)
}

/// Keeps the non-dominated items, collapsing near-duplicates (L∞ ≤ `tau`)
/// onto the lexicographically largest. Output is lexicographically
/// descending; among equal vectors the earliest input item survives.
pub(crate) fn prune_by<T>(mut items: Vec<T>, key: impl Fn(&T) -> &ValueVector, tau: f64) -> Vec<T> {
    items.sort_by(|a, b| lex_desc(key(a), key(b)));
    let mut kept: Vec<T> = Vec::with_capacity(items.len().min(64));
    if items.first().is_some_and(|t| key(t).dim() == 2) {
        // survivors have falling x and rising y, so only the highest y can
        // dominate and only a suffix can sit within tau
        for item in items {
            let v = key(&item);
            let covered = kept.last().is_some_and(|k| key(k)[1] >= v[1])
                || kept
                    .iter()
                    .rev()
                    .take_while(|k| key(k)[1] >= v[1] - tau)
                    .any(|k| key(k).chebyshev(v) <= tau);
            if !covered {
                kept.push(item);
            }
        }
        return kept;
    }
    for item in items {
        let v = key(&item);
        // a later (lexicographically smaller) vector never dominates an
        // earlier one, so checking against the survivors is enough
        let covered = kept
            .iter()
            .any(|k| key(k).weakly_dominates(v) || key(k).chebyshev(v) <= tau);
        if !covered {
            kept.push(item);
        }
    }
    kept
}

/// Drops members with the smallest exclusive hypervolume until at most
/// `cap` remain. Ties drop the lexicographically smallest first.
pub(crate) fn cap_by_contribution<T>(items: Vec<T>, cap: usize, key: impl Fn(&T) -> &ValueVector) -> Vec<T> {
    if cap == 0 || items.len() <= cap {
        return items;
    }
    let dim = key(&items[0]).dim();
    let reference: ValueVector = (0..dim)
        .map(|i| items.iter().map(|t| key(t)[i]).fold(f64::INFINITY, f64::min) - 1.0)
        .collect();
    if dim == 2 {
        return cap_2d(items, cap, key, &reference);
    }
    cap_general(items, cap, key, &reference)
}

fn cap_general<T>(mut items: Vec<T>, cap: usize, key: impl Fn(&T) -> &ValueVector, reference: &ValueVector) -> Vec<T> {
    while items.len() > cap {
        let points: Vec<ValueVector> = items.iter().map(|t| key(t).clone()).collect();
        let contributions = exclusive_contributions(&points, reference);
        let mut worst = 0;
        for i in 1..items.len() {
            let better = match contributions[i].total_cmp(&contributions[worst]) {
                Ordering::Less => true,
                Ordering::Equal => key(&items[i]).lex_cmp(key(&items[worst])) == Ordering::Less,
                Ordering::Greater => false,
            };
            if better {
                worst = i;
            }
        }
        items.remove(worst);
    }
    items
}

/// Planar version of the greedy cap. Removing a point only changes the
/// contributions of its two neighbours, so a heap with stale-entry checks
/// replaces the full recomputation.
fn cap_2d<T>(items: Vec<T>, cap: usize, key: impl Fn(&T) -> &ValueVector, reference: &ValueVector) -> Vec<T> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    #[derive(PartialEq)]
    struct Entry<'a> {
        contribution: f64,
        point: &'a ValueVector,
        slot: usize,
    }
    impl Eq for Entry<'_> {}
    impl PartialOrd for Entry<'_> {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry<'_> {
        fn cmp(&self, other: &Self) -> Ordering {
            self.contribution
                .total_cmp(&other.contribution)
                .then_with(|| self.point.lex_cmp(other.point))
        }
    }

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| key(&items[b])[0].total_cmp(&key(&items[a])[0]));
    let n = order.len();
    // neighbours in x-descending order, by position; n marks none
    let mut prev: Vec<usize> = (0..n).map(|p| if p == 0 { n } else { p - 1 }).collect();
    let mut next: Vec<usize> = (0..n).map(|p| p + 1).collect();
    let mut alive = vec![true; n];
    let point = |pos: usize| key(&items[order[pos]]);
    let contribution = |pos: usize, prev: &[usize], next: &[usize]| {
        let p = point(pos);
        let right = if next[pos] == n {
            reference[0]
        } else {
            point(next[pos])[0]
        };
        let below = if prev[pos] == n {
            reference[1]
        } else {
            point(prev[pos])[1]
        };
        (p[0] - right) * (p[1] - below)
    };
    let mut current: Vec<f64> = (0..n).map(|p| contribution(p, &prev, &next)).collect();
    let mut heap: BinaryHeap<Reverse<Entry>> = (0..n)
        .map(|p| {
            Reverse(Entry {
                contribution: current[p],
                point: point(p),
                slot: p,
            })
        })
        .collect();
    let mut remaining = n;
    while remaining > cap {
        let Some(Reverse(e)) = heap.pop() else { break };
        let pos = e.slot;
        if !alive[pos] || e.contribution.to_bits() != current[pos].to_bits() {
            continue;
        }
        alive[pos] = false;
        remaining -= 1;
        let (l, r) = (prev[pos], next[pos]);
        if l != n {
            next[l] = r;
        }
        if r != n {
            prev[r] = l;
        }
        for q in [l, r] {
            if q != n {
                current[q] = contribution(q, &prev, &next);
                heap.push(Reverse(Entry {
                    contribution: current[q],
                    point: point(q),
                    slot: q,
                }));
            }
        }
    }
    drop(heap);
    let keep: Vec<bool> = {
        let mut keep = vec![false; n];
        for pos in 0..n {
            keep[order[pos]] = alive[pos];
        }
        keep
    };
    items
        .into_iter()
        .zip(keep)
        .filter_map(|(t, k)| k.then_some(t))
        .collect()
}

/// The non-dominated subset of `vectors`, deduplicated within `tau`.
pub fn pareto_prune(vectors: &[ValueVector], tau: f64) -> Result<ParetoSet, SolverError> {
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
            return Err(SolverError::DimensionMismatch {
                expected: first.dim(),
                found: bad.dim(),
            });
        }
    }
    Ok(ParetoSet(prune_by(vectors.to_vec(), |v| v, tau)))
}
