//! Permutations over a dense vocabulary `0..V` and the distances between them.
//!
//! A [`Permutation`] is stored position-ordered: `items()[p]` is the item at
//! position `p`. The inverse table (item -> position) is built once at
//! construction so [`Permutation::rank_of`] is a single lookup.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    items: Vec<usize>,
    positions: Vec<usize>,
}

impl Permutation {
    /// Validates that `items` is a bijection on `0..items.len()`.
    pub fn new(items: Vec<usize>) -> Result<Self> {
        let v = items.len();
        if v == 0 {
            return Err(Error::Empty("permutation"));
        }
        let mut positions = vec![usize::MAX; v];
        for (p, &item) in items.iter().enumerate() {
            if item >= v {
                return Err(Error::UnknownItem { item, vocab: v });
            }
            if positions[item] != usize::MAX {
                return Err(Error::NotAPermutation(format!("item {item} repeated")));
            }
            positions[item] = p;
        }
        Ok(Self { items, positions })
    }

    pub fn identity(v: usize) -> Self {
        let items: Vec<usize> = (0..v).collect();
        Self {
            positions: items.clone(),
            items,
        }
    }

    pub fn reversed(v: usize) -> Self {
        let items: Vec<usize> = (0..v).rev().collect();
        Self::new(items).expect("reversal is a permutation")
    }

    /// Builds the ordering whose item `v` sits at `positions[v]`.
    pub fn from_positions(positions: Vec<usize>) -> Result<Self> {
        let inv = Self::new(positions)?;
        Ok(Self {
            items: inv.positions,
            positions: inv.items,
        })
    }

    /// Vocabulary size V.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    /// Item -> position table.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn into_items(self) -> Vec<usize> {
        self.items
    }

    /// Position of `item` in this ordering.
    pub fn rank_of(&self, item: usize) -> Result<usize> {
        self.positions.get(item).copied().ok_or(Error::UnknownItem {
            item,
            vocab: self.len(),
        })
    }

    /// Ordering with the items at positions `p` and `p + 1` exchanged.
    pub fn swap_adjacent(&self, p: usize) -> Permutation {
        let mut items = self.items.clone();
        items.swap(p, p + 1);
        let mut positions = self.positions.clone();
        positions[items[p]] = p;
        positions[items[p + 1]] = p + 1;
        Permutation { items, positions }
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation[{self}]")
    }
}

/// Fixture text form: comma-separated item-ids in position order.
impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{item}")?;
        }
        Ok(())
    }
}

impl FromStr for Permutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let items = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::NotAPermutation(format!("{t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Permutation::new(items)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(items: Vec<usize>) -> Result<Self> {
        Permutation::new(items)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.items
    }
}

/// The `q` of an `l_q` norm over a motion vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Norm {
    /// Count of displaced positions.
    L0,
    /// Spearman's footrule.
    #[default]
    L1,
    L2,
}

impl TryFrom<u32> for Norm {
    type Error = Error;

    fn try_from(q: u32) -> Result<Self> {
        match q {
            0 => Ok(Norm::L0),
            1 => Ok(Norm::L1),
            2 => Ok(Norm::L2),
            other => Err(Error::UnsupportedNorm(other)),
        }
    }
}

impl Norm {
    pub fn of(self, displacements: &[i64]) -> f64 {
        match self {
            Norm::L0 => displacements.iter().filter(|&&m| m != 0).count() as f64,
            Norm::L1 => displacements.iter().map(|m| m.unsigned_abs()).sum::<u64>() as f64,
            Norm::L2 => (displacements.iter().map(|&m| (m * m) as u64).sum::<u64>() as f64).sqrt(),
        }
    }
}

/// Signed displacement of every input position towards its place in `filter`:
/// `m[p] = rank(filter, input[p]) - p`. The input may be a prefix (or any
/// sequence of distinct items) from the filter's vocabulary.
pub fn motion_items(input: &[usize], filter: &Permutation) -> Result<Vec<i64>> {
    input
        .iter()
        .enumerate()
        .map(|(p, &item)| Ok(filter.rank_of(item)? as i64 - p as i64))
        .collect()
}

pub fn motion(input: &Permutation, filter: &Permutation) -> Result<Vec<i64>> {
    check_same_vocab(input, filter)?;
    motion_items(input.items(), filter)
}

fn check_same_vocab(a: &Permutation, b: &Permutation) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::VocabMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Spearman's footrule: total absolute positional displacement.
pub fn footrule(a: &Permutation, b: &Permutation) -> Result<u64> {
    check_same_vocab(a, b)?;
    Ok(footrule_unchecked(a, b))
}

/// Footrule for permutations already known to share a vocabulary.
pub(crate) fn footrule_unchecked(a: &Permutation, b: &Permutation) -> u64 {
    let pos = b.positions();
    a.items()
        .iter()
        .enumerate()
        .map(|(p, &item)| pos[item].abs_diff(p) as u64)
        .sum()
}

pub fn lq_distance(a: &Permutation, b: &Permutation, norm: Norm) -> Result<f64> {
    Ok(norm.of(&motion(a, b)?))
}

/// Number of item pairs ordered differently by `a` and `b`. Quadratic; kept
/// simple because it only serves as a cross-check for the footrule.
pub fn kendall_tau(a: &Permutation, b: &Permutation) -> Result<u64> {
    check_same_vocab(a, b)?;
    let (pa, pb) = (a.positions(), b.positions());
    let v = a.len();
    let mut count = 0;
    for i in 0..v {
        for j in i + 1..v {
            if (pa[i] < pa[j]) != (pb[i] < pb[j]) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Items ordered by decreasing score; equal scores keep index order.
pub fn argsort_desc(scores: &[f64]) -> Result<Permutation> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NaN("scores"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    Permutation::new(idx)
}

/// Items ordered by increasing score; equal scores keep index order.
pub fn argsort_asc(scores: &[f64]) -> Result<Permutation> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NaN("scores"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    Permutation::new(idx)
}

/// Applies `count` uniformly chosen adjacent swaps. Each swap moves the
/// ordering exactly 2 footrule units from where it was.
pub fn adjacent_transpose_augment(
    pi: &Permutation,
    count: usize,
    rng: &mut SeededRng,
) -> Permutation {
    let v = pi.len();
    if count == 0 || v < 2 {
        return pi.clone();
    }
    let mut items = pi.items().to_vec();
    for _ in 0..count {
        let p = rng.below(v - 1);
        items.swap(p, p + 1);
    }
    Permutation::new(items).expect("swaps preserve bijection")
}

/// Uniform draw from S_V.
pub fn random_permutation(v: usize, rng: &mut SeededRng) -> Result<Permutation> {
    if v == 0 {
        return Err(Error::InvalidArgument("vocabulary size must be >= 1".into()));
    }
    let mut items: Vec<usize> = (0..v).collect();
    rng.shuffle(&mut items);
    Permutation::new(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    // A=0 .. E=4
    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;
    const E: usize = 4;

    fn p(items: &[usize]) -> Permutation {
        Permutation::new(items.to_vec()).unwrap()
    }

    #[test]
    fn rank_lookup() {
        assert_eq!(p(&[C, A, E, B, D]).rank_of(A).unwrap(), 1);
        let id = Permutation::identity(7);
        for v in 0..7 {
            assert_eq!(id.rank_of(v).unwrap(), v);
        }
        assert_eq!(Permutation::reversed(5).rank_of(0).unwrap(), 4);
        assert!(matches!(
            id.rank_of(7),
            Err(Error::UnknownItem { item: 7, vocab: 7 })
        ));
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        assert!(Permutation::new(vec![]).is_err());
    }

    #[test]
    fn motion_rows_of_forward_example() {
        let x = p(&[C, A, E, B, D]);
        assert_eq!(motion(&x, &p(&[A, B, C, D, E])).unwrap(), vec![2, -1, 2, -2, -1]);
        assert_eq!(motion(&x, &p(&[C, E, A, B, D])).unwrap(), vec![0, 1, -1, 0, 0]);
        assert_eq!(motion(&x, &p(&[E, D, B, A, C])).unwrap(), vec![4, 2, -2, -1, -3]);
        assert!(motion(&x, &x).unwrap().iter().all(|&m| m == 0));
    }

    #[test]
    fn motion_rejects_unknown_item() {
        assert!(motion_items(&[0, 5], &Permutation::identity(3)).is_err());
    }

    #[test]
    fn footrule_values() {
        let x = p(&[C, A, E, B, D]);
        assert_eq!(footrule(&x, &Permutation::identity(5)).unwrap(), 8);
        assert_eq!(footrule(&x, &x).unwrap(), 0);
        assert_eq!(
            footrule(&Permutation::identity(5), &Permutation::reversed(5)).unwrap(),
            12
        );
        assert!(footrule(&x, &Permutation::identity(4)).is_err());
    }

    #[test]
    fn lq_norms() {
        let x = p(&[C, A, E, B, D]);
        let r3 = p(&[E, D, B, A, C]);
        assert_eq!(lq_distance(&x, &r3, Norm::L1).unwrap(), 12.0);
        let m = [0, 1, -1, 0, 0];
        assert_eq!(Norm::L0.of(&m), 2.0);
        assert!((Norm::L2.of(&m) - 2f64.sqrt()).abs() < 1e-15);
        assert!(Norm::try_from(3).is_err());
    }

    #[test]
    fn kendall_values() {
        let x = p(&[2, 0, 1]);
        assert_eq!(kendall_tau(&x, &x).unwrap(), 0);
        assert_eq!(
            kendall_tau(&Permutation::identity(3), &Permutation::reversed(3)).unwrap(),
            3
        );
    }

    #[test]
    fn argsort_ordering_and_ties() {
        assert_eq!(argsort_desc(&[0.2, 0.9, 0.5]).unwrap().items(), &[1, 2, 0]);
        assert_eq!(argsort_desc(&[-8.0, -2.0, -12.0]).unwrap().items(), &[1, 0, 2]);
        assert_eq!(argsort_desc(&[1.0, 1.0]).unwrap().items(), &[0, 1]);
        assert_eq!(argsort_asc(&[1.0, 1.0, 0.0]).unwrap().items(), &[2, 0, 1]);
        assert!(matches!(argsort_desc(&[1.0, f64::NAN]), Err(Error::NaN(_))));
        assert!(argsort_desc(&[]).is_err());
    }

    #[test]
    fn augment_counts() {
        let mut rng = SeededRng::new(3);
        let x = random_permutation(10, &mut rng).unwrap();
        assert_eq!(adjacent_transpose_augment(&x, 0, &mut rng), x);
        let y = adjacent_transpose_augment(&x, 1, &mut rng);
        assert_eq!(footrule(&x, &y).unwrap(), 2);
        for k in 2..20 {
            let z = adjacent_transpose_augment(&x, k, &mut rng);
            assert!(footrule(&x, &z).unwrap() <= 2 * k as u64);
        }
    }

    #[test]
    fn random_permutation_edges() {
        let mut rng = SeededRng::new(11);
        assert_eq!(random_permutation(1, &mut rng).unwrap().items(), &[0]);
        assert!(random_permutation(0, &mut rng).is_err());
        let a = random_permutation(20, &mut SeededRng::new(5)).unwrap();
        let b = random_permutation(20, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_form_round_trip() {
        let x: Permutation = "2,0,4,1,3".parse().unwrap();
        assert_eq!(x.items(), &[2, 0, 4, 1, 3]);
        assert_eq!(x.to_string(), "2,0,4,1,3");
        assert!("1,1".parse::<Permutation>().is_err());
        assert!("a,b".parse::<Permutation>().is_err());
    }

    #[test]
    fn from_positions_inverts() {
        let x = p(&[2, 0, 4, 1, 3]);
        let y = Permutation::from_positions(x.positions().to_vec()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn swap_adjacent_keeps_inverse() {
        let x = p(&[2, 0, 4, 1, 3]);
        let y = x.swap_adjacent(1);
        assert_eq!(y.items(), &[2, 4, 0, 1, 3]);
        assert_eq!(y, Permutation::new(y.items().to_vec()).unwrap());
    }
}
