//! Executable checks for the ordinal-stability, capacity, accumulation,
//! ensemble, manipulability and noise-propagation results, backed by
//! brute-force or Monte Carlo references.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::encoder::min_gap;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Parallelism};
use crate::layer::{RankingFilter, SortLayer, VoteMatrix};
use crate::perm::{argsort_desc, footrule, footrule_unchecked, kendall_tau, random_permutation, Norm, Permutation};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub trials: u64,
    pub violations: u64,
    /// The theoretical value the measurement is checked against.
    pub bound: f64,
    pub measured: f64,
    pub passed: bool,
    pub detail: String,
}

impl OracleReport {
    pub const HEADER: &'static str = "name,trials,violations,bound,measured,passed";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.name, self.trials, self.violations, self.bound, self.measured, self.passed
        )
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: trials={} violations={} bound={:.6} measured={:.6}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.trials,
            self.violations,
            self.bound,
            self.measured
        )?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Perturbs random `z` by uniform noise with `‖ε‖∞ < eps_scale · min_gap/2`
/// and counts argsort changes. Below `eps_scale = 1` any change is a
/// violation; above it changes are only counted.
pub fn check_stability(trials: u64, d: usize, eps_scale: f64, seed: u64) -> Result<OracleReport> {
    if d < 2 {
        return Err(Error::InvalidArgument("stability check needs d >= 2".into()));
    }
    if !(eps_scale > 0.0) {
        return Err(Error::InvalidArgument(format!("eps_scale {eps_scale} must be > 0")));
    }
    let mut rng = SeededRng::new(seed);
    let mut changes = 0;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let z: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let gap = min_gap(&z)?;
        let radius = eps_scale * gap / 2.0;
        let noisy: Vec<f64> = z
            .iter()
            .map(|v| {
                // (-1, 1) open interval keeps the strict inequality
                let u = 2.0 * rng.uniform() - 1.0;
                let u = if u <= -1.0 { 0.0 } else { u };
                v + radius * u
            })
            .collect();
        worst = worst.max(
            z.iter()
                .zip(&noisy)
                .map(|(a, b)| (a - b).abs() / (gap / 2.0))
                .fold(0.0, f64::max),
        );
        if argsort_desc(&z)? != argsort_desc(&noisy)? {
            changes += 1;
        }
    }
    let strict = eps_scale < 1.0;
    Ok(OracleReport {
        name: format!("stability d={d} eps={eps_scale}"),
        trials,
        violations: if strict { changes } else { 0 },
        bound: 0.0,
        measured: changes as f64 / trials.max(1) as f64,
        passed: !strict || changes == 0,
        detail: format!("max |eps|/(gap/2) = {worst:.4}, ordering changes = {changes}"),
    })
}

/// Flip frequency of `z_i = i` (minimum gap 1) under `N(0, sigma^2)` noise
/// against `C(d,2)·exp(−1/(4σ²))`, with three Monte Carlo standard errors of
/// slack.
pub fn check_gaussian_bound(d: usize, sigma: f64, trials: u64, seed: u64) -> Result<OracleReport> {
    if d < 2 || trials == 0 {
        return Err(Error::InvalidArgument("need d >= 2 and trials > 0".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma {sigma} must be >= 0")));
    }
    let z: Vec<f64> = (0..d).map(|i| i as f64).collect();
    let clean = argsort_desc(&z)?;
    let mut rng = SeededRng::new(seed);
    let mut flips = 0u64;
    for _ in 0..trials {
        let noisy: Vec<f64> = z.iter().map(|v| v + rng.normal(0.0, sigma)).collect();
        if argsort_desc(&noisy)? != clean {
            flips += 1;
        }
    }
    let pairs = (d * (d - 1) / 2) as f64;
    let bound = if sigma == 0.0 { 0.0 } else { pairs * (-1.0 / (4.0 * sigma * sigma)).exp() };
    let rate = flips as f64 / trials as f64;
    let stderr = (rate * (1.0 - rate) / trials as f64).sqrt();
    let passed = rate <= bound + 3.0 * stderr;
    Ok(OracleReport {
        name: format!("gaussian flip bound d={d} sigma={sigma}"),
        trials,
        violations: u64::from(!passed),
        bound,
        measured: rate,
        passed,
        detail: format!("mc stderr {stderr:.2e}"),
    })
}

/// `log2(d!)` as a sum of logarithms.
pub fn ordinal_capacity_bits(d: usize) -> f64 {
    (2..=d).map(|i| (i as f64).log2()).sum()
}

/// Footrule-Mallows model `P(π) ∝ exp(−λ·d_F(π, center))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MallowsSpec {
    pub center: Permutation,
    pub lambda: f64,
}

impl MallowsSpec {
    pub fn new(center: Permutation, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda {lambda} must be > 0")));
        }
        Ok(Self { center, lambda })
    }
}

/// Metropolis chain with adjacent-transposition proposals, started at a
/// random permutation, burn-in `10·V²` steps and `V²` steps between samples.
pub fn sample_mallows(spec: &MallowsSpec, count: usize, rng: &mut SeededRng) -> Result<Vec<Permutation>> {
    MallowsSpec::new(spec.center.clone(), spec.lambda)?;
    let v = spec.center.len();
    if v < 2 {
        return Ok(vec![spec.center.clone(); count]);
    }
    let mut state = random_permutation(v, rng)?;
    let mut dist = footrule_unchecked(&state, &spec.center) as f64;
    let step = |state: &mut Permutation, dist: &mut f64, rng: &mut SeededRng| {
        let proposal = state.swap_adjacent(rng.below(v - 1));
        let d_new = footrule_unchecked(&proposal, &spec.center) as f64;
        let accept = d_new <= *dist || rng.uniform() < (-spec.lambda * (d_new - *dist)).exp();
        if accept {
            *state = proposal;
            *dist = d_new;
        }
    };
    for _ in 0..10 * v * v {
        step(&mut state, &mut dist, rng);
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..v * v {
            step(&mut state, &mut dist, rng);
        }
        out.push(state.clone());
    }
    Ok(out)
}

/// Exact Mallows probabilities over all of `S_V` (lexicographic order).
pub fn mallows_exact(spec: &MallowsSpec) -> Result<Vec<(Permutation, f64)>> {
    let all = all_permutations(spec.center.len())?;
    let weights: Vec<f64> = all
        .iter()
        .map(|p| (-spec.lambda * footrule_unchecked(p, &spec.center) as f64).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    Ok(all.into_iter().zip(weights).map(|(p, w)| (p, w / z)).collect())
}

/// Every permutation of `0..v` in lexicographic order (`v ≤ 8`).
pub fn all_permutations(v: usize) -> Result<Vec<Permutation>> {
    if v > 8 {
        return Err(Error::InvalidArgument(format!("refusing to enumerate {v}! permutations")));
    }
    let mut cur: Vec<usize> = (0..v).collect();
    let mut out = vec![Permutation::new(cur.clone())?];
    while next_lexicographic(&mut cur) {
        out.push(Permutation::new(cur.clone())?);
    }
    Ok(out)
}

fn next_lexicographic(a: &mut [usize]) -> bool {
    if a.len() < 2 {
        return false;
    }
    let Some(i) = (0..a.len() - 1).rev().find(|&i| a[i] < a[i + 1]) else {
        return false;
    };
    let j = (i + 1..a.len()).rev().find(|&j| a[j] > a[i]).expect("successor exists");
    a.swap(i, j);
    a[i + 1..].reverse();
    true
}

/// Result of feeding Mallows samples through one filter.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulationRun {
    pub init: Permutation,
    pub result: Permutation,
    pub samples: Vec<Permutation>,
    /// Smallest gap between consecutive sorted expected positions.
    pub position_gap: f64,
}

/// `T` Mallows samples around a random center, accumulated with unit rate
/// into a filter initialized at an independent random ordering.
pub fn accumulate_mallows(v: usize, lambda: f64, t: usize, seed: u64) -> Result<(Permutation, AccumulationRun)> {
    let mut rng = SeededRng::new(seed);
    let center = random_permutation(v, &mut rng)?;
    let init = random_permutation(v, &mut rng)?;
    let spec = MallowsSpec::new(center.clone(), lambda)?;
    let samples = sample_mallows(&spec, t, &mut rng)?;
    let mut filter = RankingFilter::new(init.clone());
    for s in &samples {
        filter.accumulate(&VoteMatrix::from_input(s.items(), v)?, 1.0)?;
        filter.reorder()?;
    }
    let mut scores = filter.position_scores()?;
    scores.sort_by(f64::total_cmp);
    let position_gap = scores.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    Ok((
        center,
        AccumulationRun {
            init,
            result: filter.ordering().clone(),
            samples,
            position_gap,
        },
    ))
}

/// Center recovery over `runs` seeded accumulation runs.
pub fn check_accumulation_consistency(
    v: usize,
    lambda: f64,
    t: usize,
    runs: u64,
    min_rate: f64,
    seed: u64,
    mode: Parallelism,
) -> Result<OracleReport> {
    let outcomes = map_indexed(runs as usize, mode, |r| {
        accumulate_mallows(v, lambda, t, seed ^ r as u64).map(|(c, run)| (c == run.result, run.position_gap))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let recovered = outcomes.iter().filter(|(ok, _)| *ok).count() as u64;
    let rate = recovered as f64 / runs.max(1) as f64;
    let gap = outcomes.iter().map(|(_, g)| *g).fold(f64::INFINITY, f64::min);
    Ok(OracleReport {
        name: format!("accumulation recovery V={v} lambda={lambda} T={t}"),
        trials: runs,
        violations: runs - recovered,
        bound: min_rate,
        measured: rate,
        passed: rate >= min_rate,
        detail: format!("smallest expected-position gap {gap:.3}"),
    })
}

/// Exact footrule median over all `V!` candidates, first in lexicographic
/// order on ties.
pub fn footrule_median_bruteforce(samples: &[Permutation]) -> Result<Permutation> {
    let first = samples.first().ok_or(Error::Empty("samples"))?;
    let v = first.len();
    if v > 7 {
        return Err(Error::InvalidArgument(format!("brute-force median limited to V <= 7, got {v}")));
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != v) {
        return Err(Error::VocabMismatch { left: v, right: bad.len() });
    }
    let mut best: Option<(u64, Permutation)> = None;
    for cand in all_permutations(v)? {
        let cost: u64 = samples.iter().map(|s| footrule_unchecked(s, &cand)).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, cand));
        }
    }
    Ok(best.expect("S_V is non-empty").1)
}

/// Minimum footrule distance from `input` to any permutation that changes
/// the layer's output ordering; `None` when no permutation does.
pub fn min_flip_distance(layer: &SortLayer, input: &Permutation) -> Result<Option<u64>> {
    let base = layer.forward(input)?.output;
    let mut best: Option<u64> = None;
    for cand in all_permutations(input.len())? {
        let d = footrule(input, &cand)?;
        if d == 0 || best.is_some_and(|b| d >= b) {
            continue;
        }
        if layer.forward(&cand)?.output != base {
            best = Some(d);
        }
    }
    Ok(best)
}

/// For each of `banks` random layers of `n_filters` over `v` items, searches
/// `inputs` random inputs for one whose minimal flipping perturbation is at
/// most `2(N−1)`.
pub fn check_manipulability(v: usize, n_filters: usize, banks: u64, inputs: usize, seed: u64) -> Result<OracleReport> {
    if v > 6 {
        return Err(Error::InvalidArgument(format!("manipulability search limited to V <= 6, got {v}")));
    }
    let threshold = 2 * (n_filters as u64).saturating_sub(1);
    let name = format!("manipulability V={v} N={n_filters}");
    if n_filters < 2 {
        return Ok(OracleReport {
            name,
            trials: 0,
            violations: 0,
            bound: threshold as f64,
            measured: f64::NAN,
            passed: true,
            detail: "skipped: a single filter has one output ordering".into(),
        });
    }
    let mut rng = SeededRng::new(seed);
    let mut failures = 0;
    let mut worst_best = 0u64;
    for _ in 0..banks {
        let layer = SortLayer::random(n_filters, v, Norm::L1, &mut rng)?;
        let mut best = u64::MAX;
        for _ in 0..inputs {
            let x = random_permutation(v, &mut rng)?;
            if let Some(d) = min_flip_distance(&layer, &x)? {
                best = best.min(d);
            }
        }
        worst_best = worst_best.max(best);
        if best > threshold {
            failures += 1;
        }
    }
    Ok(OracleReport {
        name,
        trials: banks,
        violations: failures,
        bound: threshold as f64,
        measured: worst_best as f64,
        passed: failures == 0,
        detail: format!("largest per-bank minimum over {inputs} inputs"),
    })
}

/// First-order variance of the monomial `Π x[j]` over `indices` under
/// i.i.d. `N(0, σ²)` input noise: `σ²·Σ_i (∂f/∂x_i)²`.
pub fn poly_noise_variance(x: &[f64], indices: &[usize], sigma: f64) -> f64 {
    let mut distinct: Vec<usize> = indices.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let grad_sq: f64 = distinct
        .iter()
        .map(|&i| {
            let m = indices.iter().filter(|&&j| j == i).count();
            let others: f64 = indices.iter().filter(|&&j| j != i).map(|&j| x[j]).product();
            let g = m as f64 * x[i].powi(m as i32 - 1) * others;
            g * g
        })
        .sum();
    sigma * sigma * grad_sq
}

/// Monte Carlo variance of `f(x+ε) − f(x)` against [`poly_noise_variance`],
/// passing at `rel_tol` relative error.
pub fn check_poly_noise(
    x: &[f64],
    indices: &[usize],
    sigma: f64,
    trials: u64,
    rel_tol: f64,
    seed: u64,
) -> Result<OracleReport> {
    if indices.is_empty() || indices.iter().any(|&j| j >= x.len()) {
        return Err(Error::InvalidArgument("monomial indices out of range".into()));
    }
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least 2 trials".into()));
    }
    let f = |v: &[f64]| indices.iter().map(|&j| v[j]).product::<f64>();
    let clean = f(x);
    let mut rng = SeededRng::new(seed);
    let diffs: Vec<f64> = (0..trials)
        .map(|_| {
            let noisy: Vec<f64> = x.iter().map(|v| v + rng.normal(0.0, sigma)).collect();
            f(&noisy) - clean
        })
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected = poly_noise_variance(x, indices, sigma);
    let rel = (var - expected).abs() / expected;
    Ok(OracleReport {
        name: format!("poly noise indices={indices:?}"),
        trials,
        violations: u64::from(rel > rel_tol),
        bound: expected,
        measured: var,
        passed: rel <= rel_tol,
        detail: format!("relative error {rel:.4}"),
    })
}

/// `P(more than K/2 of K independent voters err)` with per-voter error `p`.
pub fn majority_error_exact(k: usize, p: f64) -> f64 {
    (k / 2 + 1..=k)
        .map(|j| binomial(k, j) * p.powi(j as i32) * (1.0 - p).powi((k - j) as i32))
        .sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn hoeffding_majority_bound(k: usize, p: f64) -> f64 {
    (-2.0 * k as f64 * (0.5 - p).powi(2)).exp()
}

/// Simulated majority of `K` Bernoulli(`p`) voters against the exact tail
/// (3 standard errors) and the Hoeffding bound.
pub fn check_ensemble_bound(k: usize, p: f64, trials: u64, seed: u64) -> Result<OracleReport> {
    if k == 0 || trials == 0 || !(0.0..0.5).contains(&p) {
        return Err(Error::InvalidArgument("need K >= 1, trials >= 1, 0 <= p < 0.5".into()));
    }
    let mut rng = SeededRng::new(seed);
    let wrong = (0..trials)
        .filter(|_| (0..k).filter(|_| rng.bernoulli(p)).count() > k / 2)
        .count();
    let rate = wrong as f64 / trials as f64;
    let exact = majority_error_exact(k, p);
    let hoeffding = hoeffding_majority_bound(k, p);
    let stderr = (exact * (1.0 - exact) / trials as f64).sqrt();
    let passed = (rate - exact).abs() <= 3.0 * stderr && rate <= hoeffding;
    Ok(OracleReport {
        name: format!("ensemble majority K={k} p={p}"),
        trials,
        violations: u64::from(!passed),
        bound: exact,
        measured: rate,
        passed,
        detail: format!("hoeffding {hoeffding:.4}, mc stderr {stderr:.2e}"),
    })
}

/// Sandwich `d_K ≤ d_F ≤ 2·d_K` and diameter `⌊V²/2⌋` on random pairs.
pub fn check_metric_suite(v: usize, pairs: u64, seed: u64) -> Result<OracleReport> {
    let mut rng = SeededRng::new(seed);
    let diameter = (v * v / 2) as u64;
    let mut violations = 0;
    let mut largest = 0;
    for _ in 0..pairs {
        let a = random_permutation(v, &mut rng)?;
        let b = random_permutation(v, &mut rng)?;
        let f = footrule(&a, &b)?;
        let k = kendall_tau(&a, &b)?;
        largest = largest.max(f);
        if k > f || f > 2 * k || f > diameter {
            violations += 1;
        }
    }
    if footrule(&Permutation::identity(v), &Permutation::reversed(v))? != diameter {
        violations += 1;
    }
    Ok(OracleReport {
        name: format!("metric sandwich+diameter V={v}"),
        trials: pairs,
        violations,
        bound: diameter as f64,
        measured: largest as f64,
        passed: violations == 0,
        detail: String::new(),
    })
}

/// Every oracle at its default scale, run independently with disjoint seeds.
pub fn run_suite(seed: u64, mode: Parallelism) -> Result<Vec<OracleReport>> {
    type Job = Box<dyn Fn(u64) -> Result<OracleReport> + Send + Sync>;
    let jobs: Vec<Job> = vec![
        Box::new(|s| check_metric_suite(5, 10_000, s)),
        Box::new(|s| check_metric_suite(16, 10_000, s)),
        Box::new(|s| check_metric_suite(64, 10_000, s)),
        Box::new(|s| check_stability(10_000, 8, 0.999, s)),
        Box::new(|s| check_gaussian_bound(4, 0.25, 100_000, s)),
        Box::new(|_| {
            let bits = ordinal_capacity_bits(64);
            Ok(OracleReport {
                name: "ordinal capacity d=64".into(),
                trials: 1,
                violations: u64::from((bits - 296.0).abs() > 0.5),
                bound: 296.0,
                measured: bits,
                passed: (bits - 296.0).abs() <= 0.5,
                detail: String::new(),
            })
        }),
        Box::new(|s| check_accumulation_consistency(5, 2.0, 2000, 50, 0.95, s, Parallelism::Sequential)),
        Box::new(|s| check_ensemble_bound(7, 0.2, 200_000, s)),
        Box::new(|s| check_poly_noise(&[2.0, 3.0], &[0, 1], 1e-3, 100_000, 0.05, s)),
        Box::new(|s| check_poly_noise(&[2.0], &[0, 0], 1e-3, 100_000, 0.05, s)),
        Box::new(|s| check_manipulability(5, 3, 20, 10, s)),
    ];
    map_indexed(jobs.len(), mode, |i| jobs[i](seed ^ i as u64))
        .into_iter()
        .collect()
}
