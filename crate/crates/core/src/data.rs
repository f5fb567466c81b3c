//! Dataset ingestion, stratified splits, perturbations and error reports.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Parallelism};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for &y in &self.y {
            counts[y] += 1;
        }
        counts
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn with_features(&self, x: Vec<Vec<f64>>) -> Dataset {
        Dataset {
            x,
            ..self.clone()
        }
    }
}

/// Header row required; the last column is the class label, every other
/// column must be numeric. Labels map to dense ids in order of first
/// appearance.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Data(
            "need at least one feature column and a label column".into(),
        ));
    }
    let d = headers.len() - 1;
    let feature_names = headers.iter().take(d).map(str::to_string).collect();
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != d + 1 {
            return Err(Error::Data(format!(
                "row {}: expected {} fields, found {}",
                line + 2,
                d + 1,
                record.len()
            )));
        }
        let row = record
            .iter()
            .take(d)
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Data(format!("row {}: bad number {f:?}", line + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = record[d].to_string();
        let next = class_names.len();
        let id = *class_ids.entry(label.clone()).or_insert_with(|| {
            class_names.push(label);
            next
        });
        x.push(row);
        y.push(id);
    }
    if x.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    Ok(Dataset {
        x,
        y,
        feature_names,
        class_names,
    })
}

/// Per-class proportional split. Each class keeps at least one sample on
/// each side.
pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside [0, 1)"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..ds.classes() {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.y[i] == c).collect();
        if members.len() < 2 {
            return Err(Error::Data(format!(
                "class {:?} has {} sample(s); need at least 2",
                ds.class_names[c],
                members.len()
            )));
        }
        rng.shuffle(&mut members);
        let n_test = ((members.len() as f64 * test_fraction).round() as usize)
            .clamp(1, members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Column means and population standard deviations of a (train) split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ColumnStats {
    pub fn of(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let n = ds.len() as f64;
        let d = ds.dim();
        let mut means = vec![0.0; d];
        for r in &ds.x {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let stds = (0..d)
            .map(|j| {
                (ds.x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect();
        Ok(Self { means, stds })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneFn {
    Log1p,
    SqrtAbs,
    SignedSquare,
    Scale0_01,
    Scale100,
}

impl MonotoneFn {
    pub const ALL: [MonotoneFn; 5] = [
        MonotoneFn::Log1p,
        MonotoneFn::SqrtAbs,
        MonotoneFn::SignedSquare,
        MonotoneFn::Scale0_01,
        MonotoneFn::Scale100,
    ];

    pub fn apply(self, v: f64) -> f64 {
        match self {
            MonotoneFn::Log1p => v.ln_1p(),
            MonotoneFn::SqrtAbs => v.abs().sqrt(),
            MonotoneFn::SignedSquare => v.signum() * v * v,
            MonotoneFn::Scale0_01 => v * 0.01,
            MonotoneFn::Scale100 => v * 100.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MonotoneFn::Log1p => "log1p",
            MonotoneFn::SqrtAbs => "sqrt_abs",
            MonotoneFn::SignedSquare => "signed_square",
            MonotoneFn::Scale0_01 => "scale_0.01",
            MonotoneFn::Scale100 => "scale_100",
        }
    }
}

impl FromStr for MonotoneFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MonotoneFn::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown monotone transform {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// `x_j + N(0, (sigma * std_j)^2)` with train-split `std_j`.
    Gaussian { sigma: f64 },
    /// Each cell independently replaced by its train-split column mean with
    /// probability `fraction`.
    Mask { fraction: f64 },
    /// Per-column ordinal ranks `0..n`, ties by row index.
    RankTransform,
    Monotone { func: MonotoneFn },
    /// Column `j` multiplied by `exp(N(0, sigma^2))`, one factor per column.
    PerGeneScale { sigma: f64 },
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Perturbation::Gaussian { sigma } | Perturbation::PerGeneScale { sigma } if !(sigma >= 0.0) => {
                Err(Error::InvalidArgument(format!("sigma {sigma} must be >= 0")))
            }
            Perturbation::Mask { fraction } if !(0.0..=1.0).contains(&fraction) => Err(
                Error::InvalidArgument(format!("mask fraction {fraction} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Text form: `gaussian:0.5`, `mask:0.1`, `rank`, `monotone:log1p`,
/// `per_gene_scale:0.3`.
impl FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let number = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::InvalidArgument(format!("{kind} needs a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("{s:?}: {e}")))
        };
        let p = match kind {
            "gaussian" => Perturbation::Gaussian { sigma: number(arg)? },
            "mask" => Perturbation::Mask { fraction: number(arg)? },
            "rank" | "rank_transform" => Perturbation::RankTransform,
            "monotone" => Perturbation::Monotone {
                func: arg
                    .ok_or_else(|| Error::InvalidArgument("monotone needs a function name".into()))?
                    .parse()?,
            },
            "per_gene_scale" => Perturbation::PerGeneScale { sigma: number(arg)? },
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown perturbation kind {other:?}"
                )))
            }
        };
        p.validate()?;
        Ok(p)
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            Perturbation::Mask { fraction } => write!(f, "mask:{fraction}"),
            Perturbation::RankTransform => write!(f, "rank"),
            Perturbation::Monotone { func } => write!(f, "monotone:{}", func.name()),
            Perturbation::PerGeneScale { sigma } => write!(f, "per_gene_scale:{sigma}"),
        }
    }
}

/// Per-column ordinal ranks (ascending, ties broken by row index).
pub fn rank_transform(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| x[a][j].total_cmp(&x[b][j]));
        for (rank, &i) in idx.iter().enumerate() {
            out[i][j] = rank as f64;
        }
    }
    out
}

/// Transformed copy of `ds`. `train_stats` supplies the column statistics for
/// noise scaling and mean imputation.
pub fn perturb(ds: &Dataset, spec: &Perturbation, seed: u64, train_stats: &ColumnStats) -> Result<Dataset> {
    spec.validate()?;
    if train_stats.means.len() != ds.dim() {
        return Err(Error::VocabMismatch {
            left: train_stats.means.len(),
            right: ds.dim(),
        });
    }
    let mut rng = SeededRng::new(seed);
    let x = match *spec {
        Perturbation::Gaussian { sigma } => ds
            .x
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&train_stats.stds)
                    .map(|(v, s)| if sigma == 0.0 { *v } else { v + rng.normal(0.0, sigma * s) })
                    .collect()
            })
            .collect(),
        Perturbation::Mask { fraction } => ds
            .x
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&train_stats.means)
                    .map(|(v, m)| if rng.bernoulli(fraction) { *m } else { *v })
                    .collect()
            })
            .collect(),
        Perturbation::RankTransform => rank_transform(&ds.x),
        Perturbation::Monotone { func } => ds
            .x
            .iter()
            .map(|r| r.iter().map(|&v| func.apply(v)).collect())
            .collect(),
        Perturbation::PerGeneScale { sigma } => {
            let factors: Vec<f64> = (0..ds.dim()).map(|_| rng.normal(0.0, sigma).exp()).collect();
            ds.x
                .iter()
                .map(|r| r.iter().zip(&factors).map(|(v, f)| v * f).collect())
                .collect()
        }
    };
    Ok(ds.with_features(x))
}

/// Mean and population std of a set of error rates (in percent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub errors: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl ErrorReport {
    pub fn from_errors(errors: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Empty("error list"));
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let std = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self { errors, mean, std })
    }

    pub fn reps(&self) -> usize {
        self.errors.len()
    }
}

/// Runs `run(outer, inner)` over every pair of outer (perturbation) and inner
/// (model) seeds and summarizes the returned error percentages.
pub fn evaluate_repeated<F>(outer: &[u64], inner: &[u64], mode: Parallelism, run: F) -> Result<ErrorReport>
where
    F: Fn(u64, u64) -> Result<f64> + Sync + Send,
{
    let pairs: Vec<(u64, u64)> = outer
        .iter()
        .flat_map(|&o| inner.iter().map(move |&i| (o, i)))
        .collect();
    let errors = map_indexed(pairs.len(), mode, |k| run(pairs[k].0, pairs[k].1))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    ErrorReport::from_errors(errors)
}

/// One output row: `dataset,config_id,perturbation,error_mean,error_std,n_reps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub config_id: String,
    pub perturbation: String,
    pub error_mean: f64,
    pub error_std: f64,
    pub n_reps: usize,
}

impl ReportRow {
    pub const HEADER: &'static str = "dataset,config_id,perturbation,error_mean,error_std,n_reps";

    pub fn new(dataset: &str, config_id: &str, perturbation: &str, report: &ErrorReport) -> Self {
        Self {
            dataset: dataset.to_string(),
            config_id: config_id.to_string(),
            perturbation: perturbation.to_string(),
            error_mean: report.mean,
            error_std: report.std,
            n_reps: report.reps(),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{}",
            self.dataset, self.config_id, self.perturbation, self.error_mean, self.error_std, self.n_reps
        )
    }
}
