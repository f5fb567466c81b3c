//! The ranking layer: a bank of permutation filters, the forward distance
//! pass, vote matrices and the accumulate/reorder learning step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::{argsort_asc, argsort_desc, random_permutation, Norm, Permutation};
use crate::rng::SeededRng;

/// One row per vocabulary item; `Some(k)` is the single voted column.
/// Items absent from the input have an all-zero row (`None`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteMatrix {
    columns: Vec<Option<usize>>,
}

impl VoteMatrix {
    /// Item `v` votes for its position in `input`.
    pub fn from_input(input: &[usize], vocab: usize) -> Result<Self> {
        let mut columns = vec![None; vocab];
        for (p, &item) in input.iter().enumerate() {
            if item >= vocab {
                return Err(Error::UnknownItem { item, vocab });
            }
            if columns[item].is_some() {
                return Err(Error::NotAPermutation(format!("item {item} repeated")));
            }
            columns[item] = Some(p);
        }
        Ok(Self { columns })
    }

    /// Votes for the mirrored positions `len - 1 - p`, i.e. towards the
    /// reversal of the input.
    pub fn reversed_input(input: &[usize], vocab: usize) -> Result<Self> {
        let mut m = Self::from_input(input, vocab)?;
        let last = input.len().saturating_sub(1);
        for c in m.columns.iter_mut().flatten() {
            *c = last - *c;
        }
        Ok(m)
    }

    pub fn vocab(&self) -> usize {
        self.columns.len()
    }

    pub fn column_of(&self, item: usize) -> Option<usize> {
        self.columns[item]
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let v = self.vocab();
        self.columns
            .iter()
            .map(|c| {
                let mut row = vec![0u8; v];
                if let Some(k) = c {
                    row[*k] = 1;
                }
                row
            })
            .collect()
    }
}

/// A learned ordering plus its V x V evidence accumulator (row = item,
/// column = position).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingFilter {
    ordering: Permutation,
    accumulator: Vec<f64>,
}

impl RankingFilter {
    /// The accumulator starts as the permutation matrix of `ordering`, which is
    /// the identity when the ordering is the identity.
    pub fn new(ordering: Permutation) -> Self {
        let v = ordering.len();
        let mut accumulator = vec![0.0; v * v];
        for (item, &pos) in ordering.positions().iter().enumerate() {
            accumulator[item * v + pos] = 1.0;
        }
        Self {
            ordering,
            accumulator,
        }
    }

    pub fn from_parts(ordering: Permutation, accumulator: Vec<f64>) -> Result<Self> {
        let v = ordering.len();
        if accumulator.len() != v * v {
            return Err(Error::VocabMismatch {
                left: accumulator.len(),
                right: v * v,
            });
        }
        if accumulator.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::InvalidArgument(
                "accumulator entries must be non-negative".into(),
            ));
        }
        Ok(Self {
            ordering,
            accumulator,
        })
    }

    pub fn vocab(&self) -> usize {
        self.ordering.len()
    }

    pub fn ordering(&self) -> &Permutation {
        &self.ordering
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accumulator
    }

    pub fn accumulator_row(&self, item: usize) -> &[f64] {
        let v = self.vocab();
        &self.accumulator[item * v..(item + 1) * v]
    }

    pub fn row_sum(&self, item: usize) -> f64 {
        self.accumulator_row(item).iter().sum()
    }

    /// `A <- A + eta * phi`; the ordering is left alone until [`reorder`].
    ///
    /// [`reorder`]: RankingFilter::reorder
    pub fn accumulate(&mut self, phi: &VoteMatrix, eta: f64) -> Result<()> {
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be > 0, got {eta}")));
        }
        let v = self.vocab();
        if phi.vocab() != v {
            return Err(Error::VocabMismatch {
                left: phi.vocab(),
                right: v,
            });
        }
        for (item, col) in phi.columns.iter().enumerate() {
            if let Some(k) = col {
                self.accumulator[item * v + k] += eta;
            }
        }
        Ok(())
    }

    /// Mean voted position of every item.
    pub fn position_scores(&self) -> Result<Vec<f64>> {
        let v = self.vocab();
        (0..v)
            .map(|item| {
                let row = self.accumulator_row(item);
                let mass: f64 = row.iter().sum();
                if !(mass > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "accumulator row {item} has zero mass"
                    )));
                }
                let moment: f64 = row.iter().enumerate().map(|(k, a)| k as f64 * a).sum();
                Ok(moment / mass)
            })
            .collect()
    }

    /// Ordering <- items by ascending mean voted position, ties to the smaller
    /// item-id.
    pub fn reorder(&mut self) -> Result<()> {
        self.ordering = argsort_asc(&self.position_scores()?)?;
        Ok(())
    }
}

/// Forward-pass result: one distance per filter and the filter-ids ranked
/// closest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub distances: Vec<f64>,
    pub output: Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortLayer {
    filters: Vec<RankingFilter>,
    pub norm: Norm,
    pub frozen: bool,
    /// How many closest filters a competitive update touches.
    pub winners: usize,
    /// An item missing from a partial input is treated as sitting at position
    /// `V + deletion_offset`.
    pub deletion_offset: usize,
}

impl SortLayer {
    pub fn new(filters: Vec<RankingFilter>, norm: Norm) -> Result<Self> {
        let first = filters
            .first()
            .ok_or(Error::Empty("filter bank"))?
            .vocab();
        if let Some(bad) = filters.iter().find(|f| f.vocab() != first) {
            return Err(Error::VocabMismatch {
                left: first,
                right: bad.vocab(),
            });
        }
        Ok(Self {
            filters,
            norm,
            frozen: false,
            winners: 1,
            deletion_offset: 0,
        })
    }

    /// `n_filters` uniformly random orderings over `vocab` items.
    pub fn random(n_filters: usize, vocab: usize, norm: Norm, rng: &mut SeededRng) -> Result<Self> {
        if n_filters == 0 {
            return Err(Error::InvalidArgument("layer needs at least one filter".into()));
        }
        let filters = (0..n_filters)
            .map(|_| random_permutation(vocab, rng).map(RankingFilter::new))
            .collect::<Result<Vec<_>>>()?;
        Self::new(filters, norm)
    }

    pub fn vocab(&self) -> usize {
        self.filters[0].vocab()
    }

    pub fn width(&self) -> usize {
        self.filters.len()
    }

    pub fn filters(&self) -> &[RankingFilter] {
        &self.filters
    }

    pub fn filter(&self, j: usize) -> &RankingFilter {
        &self.filters[j]
    }

    /// Distance from a (possibly partial) input to filter `j`. Filter items
    /// missing from the input are charged `|V + offset - p|` for filter
    /// position `p`.
    pub fn distance_items(&self, input: &[usize], j: usize) -> Result<f64> {
        let filter = &self.filters[j].ordering;
        let v = filter.len();
        if input.len() == v && self.norm == Norm::L1 {
            let pos = filter.positions();
            let mut total = 0u64;
            for (p, &item) in input.iter().enumerate() {
                let r = *pos
                    .get(item)
                    .ok_or(Error::UnknownItem { item, vocab: v })?;
                total += r.abs_diff(p) as u64;
            }
            return Ok(total as f64);
        }
        let mut present = vec![false; v];
        let mut displacements = Vec::with_capacity(v);
        for (p, &item) in input.iter().enumerate() {
            let r = filter.rank_of(item)?;
            present[item] = true;
            displacements.push(r as i64 - p as i64);
        }
        let slot = (v + self.deletion_offset) as i64;
        for (item, seen) in present.iter().enumerate() {
            if !seen {
                displacements.push(slot - filter.positions()[item] as i64);
            }
        }
        Ok(self.norm.of(&displacements))
    }

    pub fn forward_items(&self, input: &[usize]) -> Result<LayerOutput> {
        if input.is_empty() {
            return Err(Error::Empty("layer input"));
        }
        if input.len() > self.vocab() {
            return Err(Error::VocabMismatch {
                left: input.len(),
                right: self.vocab(),
            });
        }
        let distances = (0..self.width())
            .map(|j| self.distance_items(input, j))
            .collect::<Result<Vec<_>>>()?;
        let negated: Vec<f64> = distances.iter().map(|d| -d).collect();
        let output = argsort_desc(&negated)?;
        Ok(LayerOutput { distances, output })
    }

    pub fn forward(&self, input: &Permutation) -> Result<LayerOutput> {
        self.forward_items(input.items())
    }

    /// The `winners` closest filters, closest first.
    pub fn closest(&self, out: &LayerOutput) -> Vec<usize> {
        out.output.items()[..self.winners.min(self.width())].to_vec()
    }

    /// Accumulates `phi` into filter `j` and reorders it.
    pub fn apply_vote(&mut self, j: usize, phi: &VoteMatrix, eta: f64) -> Result<()> {
        if self.frozen {
            return Err(Error::FrozenLayer);
        }
        let f = self
            .filters
            .get_mut(j)
            .ok_or_else(|| Error::InvalidArgument(format!("filter {j} out of range")))?;
        f.accumulate(phi, eta)?;
        f.reorder()
    }

    /// Moves filters `ids` towards `input`.
    pub fn attract(&mut self, ids: &[usize], input: &[usize], eta: f64) -> Result<()> {
        let phi = VoteMatrix::from_input(input, self.vocab())?;
        for &j in ids {
            self.apply_vote(j, &phi, eta)?;
        }
        Ok(())
    }

    /// Moves filters `ids` towards the reversal of `input`.
    pub fn repel(&mut self, ids: &[usize], input: &[usize], eta: f64) -> Result<()> {
        let phi = VoteMatrix::reversed_input(input, self.vocab())?;
        for &j in ids {
            self.apply_vote(j, &phi, eta)?;
        }
        Ok(())
    }

    /// Supervised (`target = Some(j)`): only filter `j` learns the input.
    /// Competitive (`None`): the `winners` closest filters learn it.
    /// Returns the updated filter-ids.
    pub fn update(&mut self, input: &Permutation, target: Option<usize>, eta: f64) -> Result<Vec<usize>> {
        if self.frozen {
            return Err(Error::FrozenLayer);
        }
        let ids = match target {
            Some(j) if j >= self.width() => {
                return Err(Error::InvalidArgument(format!(
                    "target filter {j} out of range for {} filters",
                    self.width()
                )))
            }
            Some(j) => vec![j],
            None => {
                let out = self.forward(input)?;
                self.closest(&out)
            }
        };
        self.attract(&ids, input.items(), eta)?;
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;
    const E: usize = 4;

    fn perm(items: &[usize]) -> Permutation {
        Permutation::new(items.to_vec()).unwrap()
    }

    fn forward_example_layer() -> SortLayer {
        let filters = vec![
            RankingFilter::new(perm(&[A, B, C, D, E])),
            RankingFilter::new(perm(&[C, E, A, B, D])),
            RankingFilter::new(perm(&[E, D, B, A, C])),
        ];
        SortLayer::new(filters, Norm::L1).unwrap()
    }

    #[test]
    fn forward_pass_example() {
        let layer = forward_example_layer();
        let out = layer.forward(&perm(&[C, A, E, B, D])).unwrap();
        assert_eq!(out.distances, vec![8.0, 2.0, 12.0]);
        assert_eq!(out.output.items(), &[1, 0, 2]);
    }

    #[test]
    fn input_equal_to_filter_ranks_first() {
        let layer = forward_example_layer();
        let out = layer.forward(&perm(&[E, D, B, A, C])).unwrap();
        assert_eq!(out.output.items()[0], 2);
        assert_eq!(out.distances[2], 0.0);
    }

    #[test]
    fn single_filter_layer() {
        let layer = SortLayer::new(vec![RankingFilter::new(perm(&[1, 0, 2]))], Norm::L1).unwrap();
        let out = layer.forward(&perm(&[2, 1, 0])).unwrap();
        assert_eq!(out.output.items(), &[0]);
    }

    #[test]
    fn forward_rejects_empty_input() {
        assert!(forward_example_layer().forward_items(&[]).is_err());
    }

    #[test]
    fn partial_input_gets_deletion_penalty() {
        let layer = forward_example_layer();
        // Input [C, A]: filter 0 = [A,B,C,D,E]
        // C: rank 2 - 0 = 2, A: 0 - 1 = -1, absent B,D,E at 1,3,4 -> 4,2,1
        let out = layer.forward_items(&[C, A]).unwrap();
        assert_eq!(out.distances[0], 2.0 + 1.0 + 4.0 + 2.0 + 1.0);
    }

    #[test]
    fn other_norms() {
        let mut layer = forward_example_layer();
        layer.norm = Norm::L0;
        let out = layer.forward(&perm(&[C, A, E, B, D])).unwrap();
        assert_eq!(out.distances[1], 2.0);
        layer.norm = Norm::L2;
        let out = layer.forward(&perm(&[C, A, E, B, D])).unwrap();
        assert!((out.distances[1] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn vote_matrix_example() {
        let phi = VoteMatrix::from_input(&[C, A, D, B], 4).unwrap();
        assert_eq!(phi.column_of(A), Some(1));
        assert_eq!(phi.column_of(B), Some(3));
        assert_eq!(phi.column_of(C), Some(0));
        assert_eq!(phi.column_of(D), Some(2));
        let id = VoteMatrix::from_input(&[0, 1, 2], 3).unwrap().to_dense();
        assert_eq!(id, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let partial = VoteMatrix::from_input(&[2, 0], 4).unwrap().to_dense();
        assert_eq!(partial[1], vec![0, 0, 0, 0]);
        assert_eq!(partial[3], vec![0, 0, 0, 0]);
        assert!(partial
            .iter()
            .enumerate()
            .all(|(v, row)| row.iter().map(|&x| x as usize).sum::<usize>() == usize::from(v == 0 || v == 2)));
    }

    #[test]
    fn accumulation_example() {
        let mut f = RankingFilter::new(Permutation::identity(4));
        let phi = VoteMatrix::from_input(&[C, A, D, B], 4).unwrap();
        f.accumulate(&phi, 1.0).unwrap();
        let want = [
            1.0, 1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 1.0, //
            1.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, 1.0,
        ];
        assert_eq!(f.accumulator(), &want);
        assert_eq!(f.ordering(), &Permutation::identity(4));
        assert_eq!(f.position_scores().unwrap(), vec![0.5, 2.0, 1.0, 2.5]);
        f.reorder().unwrap();
        assert_eq!(f.ordering().items(), &[A, C, B, D]);
    }

    #[test]
    fn accumulate_rejects_bad_eta() {
        let mut f = RankingFilter::new(Permutation::identity(3));
        let phi = VoteMatrix::from_input(&[0, 1, 2], 3).unwrap();
        assert!(f.accumulate(&phi, 0.0).is_err());
        assert!(f.accumulate(&phi, -1.0).is_err());
    }

    #[test]
    fn repeated_votes_add_linearly() {
        let mut f = RankingFilter::new(Permutation::identity(3));
        let phi = VoteMatrix::from_input(&[2, 0, 1], 3).unwrap();
        for _ in 0..7 {
            f.accumulate(&phi, 0.5).unwrap();
        }
        // item 0 voted column 1; item 2 voted column 0
        assert_eq!(f.accumulator_row(0), &[1.0, 3.5, 0.0]);
        assert_eq!(f.accumulator_row(2), &[3.5, 0.0, 1.0]);
    }

    #[test]
    fn identity_accumulator_reorders_to_identity() {
        let mut f = RankingFilter::new(Permutation::identity(6));
        f.reorder().unwrap();
        assert_eq!(f.ordering(), &Permutation::identity(6));
    }

    #[test]
    fn initial_accumulator_encodes_ordering() {
        let mut f = RankingFilter::new(perm(&[3, 0, 2, 1]));
        f.reorder().unwrap();
        assert_eq!(f.ordering().items(), &[3, 0, 2, 1]);
    }

    #[test]
    fn zero_row_rejected() {
        let f = RankingFilter::from_parts(Permutation::identity(2), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(f.position_scores().is_err());
        assert!(RankingFilter::from_parts(Permutation::identity(2), vec![1.0; 3]).is_err());
    }

    #[test]
    fn frozen_layer_rejects_updates() {
        let mut layer = forward_example_layer();
        layer.frozen = true;
        let before = layer.clone();
        let x = perm(&[C, A, E, B, D]);
        assert_eq!(layer.update(&x, Some(0), 1.0), Err(Error::FrozenLayer));
        assert_eq!(layer.update(&x, None, 1.0), Err(Error::FrozenLayer));
        assert_eq!(layer, before);
    }

    #[test]
    fn supervised_update_on_own_ordering_is_stable() {
        let mut layer = forward_example_layer();
        let x = perm(&[C, E, A, B, D]);
        layer.update(&x, Some(1), 0.1).unwrap();
        assert_eq!(layer.filter(1).ordering(), &x);
    }

    #[test]
    fn competitive_update_touches_only_closest() {
        let mut layer = forward_example_layer();
        let before = layer.clone();
        let updated = layer.update(&perm(&[C, A, E, B, D]), None, 1.0).unwrap();
        assert_eq!(updated, vec![1]);
        assert_eq!(layer.filter(0), before.filter(0));
        assert_eq!(layer.filter(2), before.filter(2));
        assert_ne!(layer.filter(1).accumulator(), before.filter(1).accumulator());
    }

    #[test]
    fn target_out_of_range() {
        let mut layer = forward_example_layer();
        assert!(layer.update(&perm(&[0, 1, 2, 3, 4]), Some(3), 1.0).is_err());
    }

    #[test]
    fn repeated_attraction_reaches_input() {
        let mut rng = SeededRng::new(21);
        let v = 9;
        let mut layer = SortLayer::random(1, v, Norm::L1, &mut rng).unwrap();
        let x = random_permutation(v, &mut rng).unwrap();
        let mut reached = false;
        for _ in 0..v * v {
            layer.update(&x, Some(0), 1.0).unwrap();
            if layer.filter(0).ordering() == &x {
                reached = true;
                break;
            }
        }
        assert!(reached);
    }
}
