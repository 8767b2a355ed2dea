//! Variable-to-fixed parsing dictionaries for i.i.d. bits.

use std::io::Write;

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

/// Complete prefix-free set of binary words, kept both as a sorted word
/// list and as a parsing trie.
#[derive(Clone, Debug, PartialEq)]
pub struct TunstallDictionary {
    leaves: Vec<Vec<u8>>,
    expected_len: f64,
    trie: Vec<[u32; 2]>,
}

impl TunstallDictionary {
    /// Grows the parse tree by splitting the most probable leaf until there
    /// are `m` leaves. Ties go to the lexicographically smallest word.
    pub fn build(p0: f64, m: usize) -> Result<Self> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::InvalidArgument(format!("Pr(0) = {p0} must be in (0, 1)")));
        }
        if m < 2 {
            return Err(Error::InvalidArgument(format!("dictionary size {m} must be at least 2")));
        }
        let mut leaves: Vec<(Vec<u8>, f64)> = vec![(Vec::new(), 1.0)];
        let mut expected_len = 0.0;
        while leaves.len() < m {
            let (i, _) = leaves
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                .expect("nonempty");
            let (word, prob) = leaves.swap_remove(i);
            expected_len += prob;
            let mut w0 = word.clone();
            w0.push(0);
            let mut w1 = word;
            w1.push(1);
            leaves.push((w0, prob * p0));
            leaves.push((w1, prob * (1.0 - p0)));
        }
        let mut words: Vec<Vec<u8>> = leaves.into_iter().map(|(w, _)| w).collect();
        words.sort();
        Ok(Self::from_words(words, expected_len))
    }

    fn from_words(leaves: Vec<Vec<u8>>, expected_len: f64) -> Self {
        let mut trie = vec![[NONE, NONE]];
        for w in &leaves {
            let mut node = 0usize;
            for &b in w {
                if trie[node][b as usize] == NONE {
                    trie.push([NONE, NONE]);
                    trie[node][b as usize] = (trie.len() - 1) as u32;
                }
                node = trie[node][b as usize] as usize;
            }
        }
        Self { leaves, expected_len, trie }
    }

    pub fn leaves(&self) -> &[Vec<u8>] {
        &self.leaves
    }

    pub fn size(&self) -> usize {
        self.leaves.len()
    }

    /// Expected number of source bits consumed by one parse.
    pub fn expected_parse_length(&self) -> f64 {
        self.expected_len
    }

    pub fn kraft_sum(&self) -> f64 {
        self.leaves.iter().map(|w| 0.5f64.powi(w.len() as i32)).sum()
    }

    /// Bits consumed until a leaf is reached, or `None` if the input ends
    /// inside a word.
    pub fn parse<I: IntoIterator<Item = bool>>(&self, bits: I) -> Option<usize> {
        let mut node = 0usize;
        let mut used = 0;
        for b in bits {
            node = self.trie[node][b as usize] as usize;
            used += 1;
            if self.trie[node] == [NONE, NONE] {
                return Some(used);
            }
        }
        None
    }

    /// One leaf per line.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        for w in &self.leaves {
            let s: String = w.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect();
            writeln!(out, "{s}")?;
        }
        Ok(())
    }
}

/// Largest expected parse length over every complete binary tree with
/// `m` leaves, found by listing the trees one by one.
pub fn exhaustive_best_length(p0: f64, m: usize) -> f64 {
    // all trees with k leaves, each as its expected parse length under unit weight
    let mut by_leaves: Vec<Vec<f64>> = vec![Vec::new(), vec![0.0]];
    for k in 2..=m {
        let mut trees = Vec::new();
        for left in 1..k {
            for a in &by_leaves[left] {
                for b in &by_leaves[k - left] {
                    trees.push(1.0 + p0 * a + (1.0 - p0) * b);
                }
            }
        }
        by_leaves.push(trees);
    }
    by_leaves[m].iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn words(d: &TunstallDictionary) -> Vec<String> {
        let mut buf = Vec::new();
        d.dump(&mut buf).unwrap();
        String::from_utf8(buf).unwrap().lines().map(String::from).collect()
    }

    #[test]
    fn biased_four_words() {
        let d = TunstallDictionary::build(0.7, 4).unwrap();
        assert_eq!(words(&d), ["000", "001", "01", "1"]);
        assert_abs_diff_eq!(d.expected_parse_length(), 2.19, epsilon = 1e-12);
        assert_abs_diff_eq!(exhaustive_best_length(0.7, 4), 2.19, epsilon = 1e-12);
    }

    #[test]
    fn uniform_is_balanced() {
        let d = TunstallDictionary::build(0.5, 4).unwrap();
        assert_eq!(words(&d), ["00", "01", "10", "11"]);
        assert_abs_diff_eq!(d.expected_parse_length(), 2.0, epsilon = 1e-12);
        let d8 = TunstallDictionary::build(0.5, 8).unwrap();
        assert!(d8.leaves().iter().all(|w| w.len() == 3));
    }

    #[test]
    fn parse_walks_the_trie() {
        let d = TunstallDictionary::build(0.7, 4).unwrap();
        assert_eq!(d.parse([true, false]), Some(1));
        assert_eq!(d.parse([false, true, true]), Some(2));
        assert_eq!(d.parse([false, false, true]), Some(3));
        assert_eq!(d.parse([false, false]), None);
    }

    #[test]
    fn kraft_and_length_bounds() {
        for p0 in [0.05, 0.3, 0.5, 0.7, 0.93] {
            for m in 2..=64 {
                let d = TunstallDictionary::build(p0, m).unwrap();
                assert_eq!(d.size(), m);
                assert_abs_diff_eq!(d.kraft_sum(), 1.0, epsilon = 1e-12);
                if m.is_power_of_two() {
                    assert!(d.expected_parse_length() >= m.trailing_zeros() as f64 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn no_tree_beats_tunstall() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p0: f64 = rng.random_range(0.05..0.95);
            for m in 2..=8 {
                let d = TunstallDictionary::build(p0, m).unwrap();
                assert!(exhaustive_best_length(p0, m) <= d.expected_parse_length() + 1e-12, "p0={p0} m={m}");
            }
        }
    }
}
