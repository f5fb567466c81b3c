//! Real vectors to permutations: polynomial expansion, z-scoring,
//! projection to `e` coordinates and a descending argsort.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::{argsort_desc, Permutation};
use crate::rng::SeededRng;

pub const STD_FLOOR: f64 = 1e-8;
pub const DEFAULT_LDA_RATIO: f64 = 0.5;
const LDA_RIDGE: f64 = 1e-6;

/// `C(d + k, k) - 1`, the number of non-constant monomials of degree <= k.
pub fn expanded_len(d: usize, k: usize) -> usize {
    let mut c: u128 = 1;
    for i in 1..=k as u128 {
        c = c * (d as u128 + i) / i;
    }
    (c - 1) as usize
}

/// All monomials of total degree `1..=k`, constant excluded, in
/// graded-lexicographic order: `x1..xd`, then `x1^2, x1x2, ...`, and so on.
pub fn poly_expand(x: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("polynomial degree must be >= 1".into()));
    }
    if x.is_empty() {
        return Err(Error::Empty("feature vector"));
    }
    let d = x.len();
    let mut out = Vec::with_capacity(expanded_len(d, k));
    out.extend_from_slice(x);
    // Each previous-degree monomial is stored with the smallest index it may
    // be extended by, which keeps index tuples non-decreasing.
    let mut prev: Vec<(f64, usize)> = x.iter().copied().zip(0..d).collect();
    for _ in 2..=k {
        let mut next = Vec::new();
        for &(value, last) in &prev {
            for (j, &xj) in x.iter().enumerate().skip(last) {
                next.push((value * xj, j));
            }
        }
        out.extend(next.iter().map(|&(v, _)| v));
        prev = next;
    }
    Ok(out)
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ScalerStats {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidArgument(
                "scaler needs at least 2 rows".into(),
            ));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Data("ragged rows".into()));
        }
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        for r in rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in vars.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars
            .into_iter()
            .map(|s| (s / n).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { means, stds })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionStrategy {
    Random,
    TargetAware,
    Calibrated,
}

impl std::str::FromStr for ProjectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "target-aware" | "target_aware" => Ok(Self::TargetAware),
            "calibrated" => Ok(Self::Calibrated),
            other => Err(Error::InvalidArgument(format!(
                "unknown projection strategy {other:?}"
            ))),
        }
    }
}

/// Row-major `rows x cols` projection (`d' x e`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    pub rows: usize,
    pub cols: usize,
    pub strategy: ProjectionStrategy,
    pub entries: Vec<f64>,
}

impl ProjectionMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// `x . W`
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            let row = &self.entries[r * self.cols..(r + 1) * self.cols];
            for (zc, w) in z.iter_mut().zip(row) {
                *zc += xr * w;
            }
        }
        z
    }

    fn set_column(&mut self, c: usize, values: &[f64]) {
        for (r, v) in values.iter().enumerate() {
            self.entries[r * self.cols + c] = *v;
        }
    }
}

/// Builds a `d' x e` projection. `train_x` rows are already expanded and
/// standardized. `train_y` is required for the target-aware strategy and
/// `train_x` for target-aware and calibrated.
pub fn make_projection(
    strategy: ProjectionStrategy,
    expanded_dim: usize,
    embed_dim: usize,
    train_x: Option<&[Vec<f64>]>,
    train_y: Option<&[usize]>,
    lda_ratio: f64,
    rng: &mut SeededRng,
) -> Result<ProjectionMatrix> {
    if embed_dim < 2 {
        return Err(Error::InvalidArgument("embedding dimension must be >= 2".into()));
    }
    if expanded_dim == 0 {
        return Err(Error::InvalidArgument("expanded dimension must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&lda_ratio) {
        return Err(Error::InvalidArgument(format!(
            "lda_ratio {lda_ratio} outside [0, 1]"
        )));
    }
    let scale = 1.0 / (expanded_dim as f64).sqrt();
    let mut w = ProjectionMatrix {
        rows: expanded_dim,
        cols: embed_dim,
        strategy,
        entries: (0..expanded_dim * embed_dim)
            .map(|_| scale * rng.standard_normal())
            .collect(),
    };
    match strategy {
        ProjectionStrategy::Random => {}
        ProjectionStrategy::Calibrated => {
            let x = train_x.ok_or_else(|| {
                Error::InvalidArgument("calibrated projection needs training data".into())
            })?;
            check_rows(x, expanded_dim)?;
            for c in 0..embed_dim {
                let col = w.column(c);
                let sd = projected_std(x, &col);
                if sd > 0.0 {
                    let scaled: Vec<f64> = col.iter().map(|v| v / sd).collect();
                    w.set_column(c, &scaled);
                }
            }
        }
        ProjectionStrategy::TargetAware => {
            let (x, y) = match (train_x, train_y) {
                (Some(x), Some(y)) => (x, y),
                _ => {
                    return Err(Error::InvalidArgument(
                        "target-aware projection needs labelled training data".into(),
                    ))
                }
            };
            check_rows(x, expanded_dim)?;
            if x.len() != y.len() {
                return Err(Error::Data("feature/label count mismatch".into()));
            }
            let wanted = (lda_ratio * embed_dim as f64).ceil() as usize;
            let directions = lda_directions(x, y, wanted)?;
            for (c, dir) in directions.iter().enumerate() {
                let sd = projected_std(x, dir);
                let scaled: Vec<f64> = if sd > 0.0 {
                    dir.iter().map(|v| v / sd).collect()
                } else {
                    dir.clone()
                };
                w.set_column(c, &scaled);
            }
        }
    }
    if w.entries.iter().any(|v| v.is_nan()) {
        return Err(Error::NaN("projection matrix"));
    }
    Ok(w)
}

fn check_rows(x: &[Vec<f64>], d: usize) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 training rows".into()));
    }
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::VocabMismatch {
            left: x[0].len(),
            right: d,
        });
    }
    Ok(())
}

fn projected_std(x: &[Vec<f64>], dir: &[f64]) -> f64 {
    let proj: Vec<f64> = x
        .iter()
        .map(|r| r.iter().zip(dir).map(|(a, b)| a * b).sum())
        .collect();
    let n = proj.len() as f64;
    let mean = proj.iter().sum::<f64>() / n;
    (proj.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n).sqrt()
}

/// Top generalized eigenvectors of `S_b w = lambda (S_w + ridge I) w`, at most
/// `min(wanted, C - 1)` of them, unit-normalized and sign-fixed so the largest
/// component is positive.
pub fn lda_directions(x: &[Vec<f64>], y: &[usize], wanted: usize) -> Result<Vec<Vec<f64>>> {
    let d = x[0].len();
    let classes = y.iter().copied().max().map_or(0, |m| m + 1);
    let count = wanted.min(classes.saturating_sub(1)).min(d);
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = x.len();
    let rows = DMatrix::from_fn(n, d, |i, j| x[i][j]);
    let overall: DVector<f64> = rows.row_mean().transpose();
    let mut within = DMatrix::<f64>::zeros(d, d);
    let mut between = DMatrix::<f64>::zeros(d, d);
    for c in 0..classes {
        let members: Vec<usize> = (0..n).filter(|&i| y[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = DVector::<f64>::zeros(d);
        for &i in &members {
            mean += rows.row(i).transpose();
        }
        mean /= members.len() as f64;
        for &i in &members {
            let diff = rows.row(i).transpose() - &mean;
            within += &diff * diff.transpose();
        }
        let shift = &mean - &overall;
        between += (&shift * shift.transpose()) * members.len() as f64;
    }
    let ridge = LDA_RIDGE * within.trace().max(f64::MIN_POSITIVE) / d as f64;
    for i in 0..d {
        within[(i, i)] += ridge;
    }
    let chol = within
        .cholesky()
        .ok_or_else(|| Error::Data("within-class scatter is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Data("singular scatter factor".into()))?;
    let m = &l_inv * &between * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let back = l_inv.transpose();
    let mut dirs = Vec::with_capacity(count);
    for &k in order.iter().take(count) {
        let u = eig.eigenvectors.column(k).into_owned();
        let mut w = &back * u;
        let norm = w.norm();
        if norm > 0.0 {
            w /= norm;
        }
        let (imax, _) = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("non-empty");
        if w[imax] < 0.0 {
            w = -w;
        }
        dirs.push(w.iter().copied().collect());
    }
    Ok(dirs)
}

/// Expansion degree, scaler and projection for one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingPipeline {
    pub input_dim: usize,
    pub poly_degree: usize,
    pub scaler: ScalerStats,
    pub projection: ProjectionMatrix,
}

impl EncodingPipeline {
    pub fn new(
        input_dim: usize,
        poly_degree: usize,
        scaler: ScalerStats,
        projection: ProjectionMatrix,
    ) -> Result<Self> {
        let expanded = expanded_len(input_dim, poly_degree);
        if scaler.means.len() != expanded || projection.rows != expanded {
            return Err(Error::VocabMismatch {
                left: expanded,
                right: projection.rows,
            });
        }
        Ok(Self {
            input_dim,
            poly_degree,
            scaler,
            projection,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.projection.cols
    }

    /// Expanded and standardized features.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::VocabMismatch {
                left: x.len(),
                right: self.input_dim,
            });
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::NaN("input features"));
        }
        Ok(self.scaler.apply(&poly_expand(x, self.poly_degree)?))
    }

    /// Projected coordinates `z` before the argsort.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.projection.project(&self.features(x)?))
    }

    pub fn encode(&self, x: &[f64]) -> Result<Permutation> {
        argsort_desc(&self.embed(x)?)
    }
}

/// Smallest pairwise absolute difference.
pub fn min_gap(z: &[f64]) -> Result<f64> {
    if z.len() < 2 {
        return Err(Error::InvalidArgument("min_gap needs at least 2 values".into()));
    }
    if z.iter().any(|v| v.is_nan()) {
        return Err(Error::NaN("min_gap input"));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn expansion_examples() {
        assert_eq!(poly_expand(&[2.0, 3.0], 2).unwrap(), vec![2.0, 3.0, 4.0, 6.0, 9.0]);
        assert_eq!(poly_expand(&[1.0, 2.0, 3.0, 4.0], 3).unwrap().len(), 34);
        let x = [0.3, -1.2, 7.0];
        assert_eq!(poly_expand(&x, 1).unwrap(), x.to_vec());
        assert!(poly_expand(&x, 0).is_err());
    }

    #[test]
    fn expansion_lengths_match_binomials() {
        for d in 1..=8usize {
            for k in 1..=4usize {
                let x: Vec<f64> = (0..d).map(|i| i as f64 + 1.5).collect();
                let want = binomial((d + k) as u64, k as u64) as usize - 1;
                assert_eq!(expanded_len(d, k), want);
                assert_eq!(poly_expand(&x, k).unwrap().len(), want);
            }
        }
    }

    #[test]
    fn degree_three_order() {
        let out = poly_expand(&[2.0, 3.0], 3).unwrap();
        // x1, x2, x1^2, x1x2, x2^2, x1^3, x1^2x2, x1x2^2, x2^3
        assert_eq!(out, vec![2.0, 3.0, 4.0, 6.0, 9.0, 8.0, 12.0, 18.0, 27.0]);
    }

    #[test]
    fn scaler_hand_values() {
        let s = ScalerStats::fit(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(s.means, vec![1.0]);
        assert_eq!(s.stds, vec![1.0]);
        assert_eq!(s.apply(&[3.0]), vec![2.0]);
        assert!(ScalerStats::fit(&[vec![1.0]]).is_err());
    }

    #[test]
    fn scaler_constant_column() {
        let rows = vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 4.0]];
        let s = ScalerStats::fit(&rows).unwrap();
        assert_eq!(s.stds[0], STD_FLOOR);
        for r in &rows {
            assert_eq!(s.apply(r)[0], 0.0);
        }
    }

    #[test]
    fn scaler_standardizes_fit_data() {
        let mut rng = SeededRng::new(9);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.normal(3.0, 2.0), rng.normal(-1.0, 0.1)])
            .collect();
        let s = ScalerStats::fit(&rows).unwrap();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| s.apply(r)).collect();
        for c in 0..2 {
            let m = z.iter().map(|r| r[c]).sum::<f64>() / 50.0;
            let v = z.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / 50.0;
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-6);
        }
    }

    fn gaussian_rows(rng: &mut SeededRng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.standard_normal()).collect())
            .collect()
    }

    #[test]
    fn random_projection_is_reproducible() {
        let a = make_projection(ProjectionStrategy::Random, 10, 4, None, None, 0.5, &mut SeededRng::new(1))
            .unwrap();
        let b = make_projection(ProjectionStrategy::Random, 10, 4, None, None, 0.5, &mut SeededRng::new(1))
            .unwrap();
        assert_eq!(a, b);
        assert!(make_projection(ProjectionStrategy::Random, 10, 1, None, None, 0.5, &mut SeededRng::new(1))
            .is_err());
    }

    #[test]
    fn calibrated_columns_have_unit_variance() {
        let mut rng = SeededRng::new(4);
        let x = gaussian_rows(&mut rng, 40, 6);
        let w = make_projection(ProjectionStrategy::Calibrated, 6, 5, Some(&x), None, 0.5, &mut rng)
            .unwrap();
        for c in 0..5 {
            assert_abs_diff_eq!(projected_std(&x, &w.column(c)).powi(2), 1.0, epsilon = 1e-6);
        }
        assert!(make_projection(ProjectionStrategy::Calibrated, 6, 5, None, None, 0.5, &mut rng).is_err());
    }

    #[test]
    fn target_aware_requires_labels() {
        let mut rng = SeededRng::new(4);
        let x = gaussian_rows(&mut rng, 10, 3);
        let r = make_projection(ProjectionStrategy::TargetAware, 3, 4, Some(&x), None, 0.5, &mut rng);
        assert!(r.is_err());
    }

    #[test]
    fn lda_columns_capped_by_classes() {
        let mut rng = SeededRng::new(8);
        let x = gaussian_rows(&mut rng, 30, 5);
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        assert_eq!(lda_directions(&x, &y, 10).unwrap().len(), 2);
        assert_eq!(lda_directions(&x, &y, 1).unwrap().len(), 1);
    }

    #[test]
    fn encode_examples() {
        let scaler = ScalerStats { means: vec![0.0, 0.0], stds: vec![1.0, 1.0] };
        let proj = ProjectionMatrix {
            rows: 2,
            cols: 2,
            strategy: ProjectionStrategy::Random,
            entries: vec![1.0, 0.0, 0.0, 1.0],
        };
        let p = EncodingPipeline::new(2, 1, scaler, proj).unwrap();
        assert_eq!(p.encode(&[1.0, 3.0]).unwrap().items(), &[1, 0]);
        assert_eq!(p.encode(&[1.0, 3.0]).unwrap(), p.encode(&[1.0, 3.0]).unwrap());
        assert!(matches!(p.encode(&[f64::NAN, 1.0]), Err(Error::NaN(_))));
        assert!(p.encode(&[1.0]).is_err());
    }

    #[test]
    fn min_gap_examples() {
        assert_abs_diff_eq!(min_gap(&[1.2, 3.5, 5.1, 7.8]).unwrap(), 1.6, epsilon = 1e-12);
        assert_eq!(min_gap(&[2.5, 2.5]).unwrap(), 0.0);
        assert!(min_gap(&[1.0]).is_err());
    }

    #[test]
    fn min_gap_agrees_with_all_pairs() {
        let mut rng = SeededRng::new(77);
        for _ in 0..200 {
            let z: Vec<f64> = (0..12).map(|_| rng.normal(0.0, 3.0)).collect();
            let mut brute = f64::INFINITY;
            for i in 0..z.len() {
                for j in 0..z.len() {
                    if i != j {
                        brute = brute.min((z[i] - z[j]).abs());
                    }
                }
            }
            assert_eq!(min_gap(&z).unwrap(), brute);
        }
    }
}
