//! Set cover over grid points: exact branch-and-bound for small grids, greedy otherwise.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Reverse;

/// Grids with at most this many points are covered exactly.
pub const EXACT_LIMIT: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CoverMethod {
    ExactSmall,
    Greedy,
}

impl CoverMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ExactSmall => "exact",
            Self::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cover {
    /// Chosen set indices, in selection order.
    pub chosen: Vec<usize>,
    pub method: CoverMethod,
}

fn uncoverable(n_points: usize, sets: &[Vec<u32>]) -> Vec<usize> {
    let mut hit = alloc::vec![false; n_points];
    for s in sets {
        for &p in s {
            hit[p as usize] = true;
        }
    }
    (0..n_points).filter(|p| !hit[*p]).collect()
}

/// Greedy cover: take the set with the most uncovered points, ties to the lowest index.
///
/// On failure returns the points no set contains.
pub fn greedy_cover(n_points: usize, sets: &[Vec<u32>]) -> Result<Vec<usize>, Vec<usize>> {
    let missing = uncoverable(n_points, sets);
    if !missing.is_empty() {
        return Err(missing);
    }
    let mut covered = alloc::vec![false; n_points];
    let mut remaining = n_points;
    // lazy evaluation: stored gains are upper bounds of the true gains
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> = sets
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| (s.len(), Reverse(i)))
        .collect();
    let mut chosen = Vec::new();
    while remaining > 0 {
        let Some((_, Reverse(i))) = heap.pop() else { break };
        let gain = sets[i].iter().filter(|p| !covered[**p as usize]).count();
        if gain == 0 {
            continue;
        }
        if heap.peek().is_some_and(|top| (gain, Reverse(i)) < *top) {
            heap.push((gain, Reverse(i)));
            continue;
        }
        for &p in &sets[i] {
            covered[p as usize] = true;
        }
        remaining -= gain;
        chosen.push(i);
    }
    Ok(chosen)
}

struct Search {
    masks: Vec<(u32, usize)>,
    best: Vec<usize>,
    chosen: Vec<usize>,
}

impl Search {
    fn run(&mut self, uncovered: u32) {
        if uncovered == 0 {
            if self.chosen.len() < self.best.len() {
                self.best = self.chosen.clone();
            }
            return;
        }
        let widest = self.masks.iter().map(|(m, _)| (m & uncovered).count_ones()).max().unwrap_or(0);
        if widest == 0 {
            return;
        }
        let need = uncovered.count_ones().div_ceil(widest) as usize;
        if self.chosen.len() + need >= self.best.len() {
            return;
        }
        // branch on the point with the fewest covering sets
        let mut pivot = 0;
        let mut fewest = usize::MAX;
        let mut rest = uncovered;
        while rest != 0 {
            let p = rest.trailing_zeros();
            rest &= rest - 1;
            let c = self.masks.iter().filter(|(m, _)| m >> p & 1 == 1).count();
            if c < fewest {
                fewest = c;
                pivot = p;
            }
        }
        for k in 0..self.masks.len() {
            let (m, idx) = self.masks[k];
            if m >> pivot & 1 == 1 {
                self.chosen.push(idx);
                self.run(uncovered & !m);
                self.chosen.pop();
            }
        }
    }
}

/// Minimum-cardinality cover by branch and bound. Needs `n_points <= 32`.
pub fn exact_cover(n_points: usize, sets: &[Vec<u32>]) -> Result<Vec<usize>, Vec<usize>> {
    assert!(n_points <= 32, "exact cover handles at most 32 points");
    let greedy = greedy_cover(n_points, sets)?;
    let mut masks: Vec<(u32, usize)> = Vec::new();
    for (i, s) in sets.iter().enumerate() {
        let m = s.iter().fold(0u32, |m, p| m | 1 << p);
        if m != 0 {
            masks.push((m, i));
        }
    }
    // drop sets contained in another (keeping the lowest index among equals)
    let kept: Vec<(u32, usize)> = masks
        .iter()
        .enumerate()
        .filter(|(a, (ma, _))| {
            !masks.iter().enumerate().any(|(b, (mb, _))| {
                b != *a && ma & mb == *ma && (ma != mb || b < *a)
            })
        })
        .map(|(_, m)| *m)
        .collect();
    let full = if n_points == 32 { u32::MAX } else { (1u32 << n_points) - 1 };
    let mut search = Search { masks: kept, best: greedy, chosen: Vec::new() };
    search.run(full);
    let mut best = search.best;
    best.sort_unstable();
    Ok(best)
}

/// Exact cover up to [`EXACT_LIMIT`] points, greedy beyond.
pub fn minimal_cover(n_points: usize, sets: &[Vec<u32>]) -> Result<Cover, Vec<usize>> {
    if n_points <= EXACT_LIMIT {
        exact_cover(n_points, sets).map(|chosen| Cover { chosen, method: CoverMethod::ExactSmall })
    } else {
        greedy_cover(n_points, sets).map(|chosen| Cover { chosen, method: CoverMethod::Greedy })
    }
}
