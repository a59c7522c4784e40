//! Label-driven triplets: every unordered same-class pair as anchor and
//! positive, with every member of every other class as negative.

use rand::seq::index;
use rand::Rng;

/// Random-access view of the triplet set of a labeled collection.
///
/// Items are plain indices; `classes[c]` lists the members of class `c`.
#[derive(Debug, Clone)]
pub struct TripletIndex {
    classes: Vec<Vec<usize>>,
    total_members: usize,
    /// Cumulative triplet counts, one per class.
    offsets: Vec<u64>,
}

fn pairs(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

impl TripletIndex {
    pub fn new(classes: Vec<Vec<usize>>) -> Self {
        let total_members: usize = classes.iter().map(Vec::len).sum();
        let mut offsets = Vec::with_capacity(classes.len());
        let mut acc = 0u64;
        for c in &classes {
            acc += pairs(c.len()) * (total_members - c.len()) as u64;
            offsets.push(acc);
        }
        TripletIndex {
            classes,
            total_members,
            offsets,
        }
    }

    /// Groups items by label, in order of first appearance.
    pub fn from_labels<L: PartialEq>(labels: &[L]) -> Self {
        let mut keys: Vec<&L> = Vec::new();
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            match keys.iter().position(|k| *k == l) {
                Some(c) => classes[c].push(i),
                None => {
                    keys.push(l);
                    classes.push(vec![i]);
                }
            }
        }
        Self::new(classes)
    }

    /// `Σ_c C(|c|, 2) · (M − |c|)`.
    pub fn len(&self) -> u64 {
        self.offsets.last().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `i`-th triplet `(anchor, positive, negative)`.
    pub fn get(&self, i: u64) -> Option<(usize, usize, usize)> {
        if i >= self.len() {
            return None;
        }
        let c = self.offsets.partition_point(|&o| o <= i);
        let local = i - if c == 0 { 0 } else { self.offsets[c - 1] };
        let members = &self.classes[c];
        let negatives = (self.total_members - members.len()) as u64;
        let (pair, neg) = (local / negatives, local % negatives);
        let (a, p) = unrank_pair(pair, members.len());
        Some((members[a], members[p], self.negative(c, neg as usize)))
    }

    fn negative(&self, own: usize, mut k: usize) -> usize {
        for (c, members) in self.classes.iter().enumerate() {
            if c == own {
                continue;
            }
            if k < members.len() {
                return members[k];
            }
            k -= members.len();
        }
        unreachable!("negative index within range")
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.len()).filter_map(|i| self.get(i))
    }

    /// `count` distinct triplet indices in random order (all of them,
    /// shuffled, when `count >= len`).
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<u64> {
        let len = self.len();
        let amount = (count as u64).min(len) as usize;
        match usize::try_from(len) {
            Ok(l) => index::sample(rng, l, amount).into_iter().map(|i| i as u64).collect(),
            // astronomically large sets: rejection sampling is collision-free in practice
            Err(_) => {
                let mut seen = std::collections::HashSet::new();
                while seen.len() < amount {
                    seen.insert(rng.random_range(0..len));
                }
                seen.into_iter().collect()
            }
        }
    }
}

/// Lexicographic unranking of unordered pairs `(a, p)`, `a < p < n`.
fn unrank_pair(mut r: u64, n: usize) -> (usize, usize) {
    let mut a = 0;
    loop {
        let row = (n - 1 - a) as u64;
        if r < row {
            return (a, a + 1 + r as usize);
        }
        r -= row;
        a += 1;
    }
}
