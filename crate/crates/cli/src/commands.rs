use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use sortnet::data::{
    load_csv, perturb, stratified_split, ColumnStats, Dataset, ErrorReport, Perturbation, ReportRow,
};
use sortnet::energy::{
    compare_layer, comparison_csv, comparison_table, profile_inference, EnergyModel, InferenceSpec, IntWidth,
    OutputAccounting,
};
use sortnet::ensemble::{build_ensemble, fit_encoders, learning_gain, EnsembleModel, KnnEnsemble};
use sortnet::exec::map_indexed;
use sortnet::oracles::{run_suite, OracleReport};
use sortnet::Parallelism;

use crate::config::{short_hash, RunConfig};
use crate::error::{CliError, CliResult};
use crate::model::{ModelFile, FORMAT_VERSION};
use crate::report::{pct, Format, Table};

pub struct Simulation {
    pub index: usize,
    pub seed: u64,
    pub train_error: f64,
    pub test_error: f64,
    pub model: EnsembleModel,
    pub log_digest: String,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_dataset(path: &Path) -> CliResult<Dataset> {
    Ok(load_csv(path)?)
}

pub fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate_one(cfg: &RunConfig, ds: &Dataset, s: usize) -> CliResult<Simulation> {
    let seed = cfg.simulation_seed(s);
    let (train, test) = stratified_split(ds, cfg.test_fraction, seed)?;
    let (model, logs) = build_ensemble(&cfg.ensemble(ds.classes(), seed), &train.x, &train.y, Parallelism::Parallel)?;
    let train_error = 100.0 * model.error_rate(&train.x, &train.y, Parallelism::Parallel)?;
    let test_error = 100.0 * model.error_rate(&test.x, &test.y, Parallelism::Parallel)?;
    let logs_text: String = logs.iter().map(|l| l.to_csv()).collect();
    Ok(Simulation {
        index: s,
        seed,
        train_error,
        test_error,
        model,
        log_digest: short_hash(logs_text.as_bytes()),
        train,
        test,
    })
}

/// All simulations of `cfg` on `ds`, in index order.
pub fn simulate(cfg: &RunConfig, ds: &Dataset) -> CliResult<Vec<Simulation>> {
    map_indexed(cfg.simulations, Parallelism::Parallel, |s| simulate_one(cfg, ds, s))
        .into_iter()
        .collect()
}

fn test_report(sims: &[Simulation]) -> CliResult<ErrorReport> {
    Ok(ErrorReport::from_errors(sims.iter().map(|s| s.test_error).collect())?)
}

fn report_table(rows: &[ReportRow]) -> Table {
    let mut t = Table::new(&ReportRow::HEADER.split(',').collect::<Vec<_>>());
    for r in rows {
        t.push(vec![
            r.dataset.clone(),
            r.config_id.clone(),
            r.perturbation.clone(),
            pct(r.error_mean),
            pct(r.error_std),
            r.n_reps.to_string(),
        ]);
    }
    t
}

pub fn train(data: &Path, cfg: &RunConfig, out: Option<&Path>, format: Format) -> CliResult<String> {
    let ds = load_dataset(data)?;
    let sims = simulate(cfg, &ds)?;
    let report = test_report(&sims)?;
    let name = dataset_name(data);
    let config_id = cfg.hash();
    if let Some(path) = out {
        let best = sims
            .iter()
            .min_by(|a, b| a.train_error.total_cmp(&b.train_error).then(a.index.cmp(&b.index)))
            .expect("at least one simulation");
        ModelFile {
            format_version: FORMAT_VERSION,
            config: cfg.clone(),
            config_id: config_id.clone(),
            dataset: name.clone(),
            feature_names: ds.feature_names.clone(),
            class_names: ds.class_names.clone(),
            simulation: best.index,
            split_seed: best.seed,
            train_error: best.train_error,
            test_error: best.test_error,
            log_digest: best.log_digest.clone(),
            model: best.model.clone(),
        }
        .save(path)?;
    }
    Ok(report_table(&[ReportRow::new(&name, &config_id, "none", &report)]).render(format))
}

/// Relabels `ds` to the model's class-id order.
fn align_labels(ds: &Dataset, mf: &ModelFile) -> CliResult<Dataset> {
    if ds.dim() != mf.feature_names.len() {
        return Err(CliError::Data(format!(
            "data has {} features, model expects {}",
            ds.dim(),
            mf.feature_names.len()
        )));
    }
    let y = ds
        .y
        .iter()
        .map(|&c| {
            let name = &ds.class_names[c];
            mf.class_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| CliError::Data(format!("label {name:?} unknown to the model")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Dataset {
        x: ds.x.clone(),
        y,
        feature_names: ds.feature_names.clone(),
        class_names: mf.class_names.clone(),
    })
}

/// Expands `gaussian:0,0.1,0.5` into one spec per value.
pub fn parse_perturbations(args: &[String]) -> CliResult<Vec<Perturbation>> {
    let mut out = Vec::new();
    for a in args {
        match a.split_once(':') {
            Some((kind, values)) if values.contains(',') => {
                for v in values.split(',') {
                    out.push(format!("{kind}:{}", v.trim()).parse()?);
                }
            }
            _ => out.push(a.parse()?),
        }
    }
    Ok(out)
}

fn is_stochastic(p: &Perturbation) -> bool {
    matches!(
        p,
        Perturbation::Gaussian { .. } | Perturbation::Mask { .. } | Perturbation::PerGeneScale { .. }
    )
}

pub fn eval(
    model_path: &Path,
    data: &Path,
    perturbations: &[Perturbation],
    all_rows: bool,
    seed: Option<u64>,
    format: Format,
) -> CliResult<String> {
    let mf = ModelFile::load(model_path)?;
    let ds = align_labels(&load_dataset(data)?, &mf)?;
    let (train, test) = stratified_split(&ds, mf.config.test_fraction, mf.split_seed)?;
    let target = if all_rows { ds.clone() } else { test };
    let stats = ColumnStats::of(&train)?;
    let base_seed = seed.unwrap_or(mf.config.seed);
    let name = dataset_name(data);
    let mut rows = Vec::new();
    let error_of = |set: &Dataset| -> CliResult<f64> {
        Ok(100.0 * mf.model.error_rate(&set.x, &set.y, Parallelism::Parallel)?)
    };
    if perturbations.is_empty() {
        let r = ErrorReport::from_errors(vec![error_of(&target)?])?;
        rows.push(ReportRow::new(&name, &mf.config_id, "none", &r));
    }
    for p in perturbations {
        let reps = if is_stochastic(p) { mf.config.simulations } else { 1 };
        let errors = (0..reps)
            .map(|r| error_of(&perturb(&target, p, base_seed.wrapping_add(r as u64), &stats)?))
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(ReportRow::new(&name, &mf.config_id, &p.to_string(), &ErrorReport::from_errors(errors)?));
    }
    Ok(report_table(&rows).render(format))
}

/// Every combination of the grid's values applied over `base`, in key order.
pub fn expand_grid(base: &RunConfig, grid: &serde_json::Value) -> CliResult<Vec<(String, RunConfig)>> {
    let obj = grid
        .as_object()
        .ok_or_else(|| CliError::Config("grid must be a JSON object of arrays".into()))?;
    let mut cells: Vec<(Vec<String>, serde_json::Value)> =
        vec![(Vec::new(), serde_json::to_value(base).expect("config serializes"))];
    for (key, values) in obj {
        let values = values
            .as_array()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| CliError::Config(format!("grid entry {key:?} must be a non-empty array")))?;
        let mut next = Vec::new();
        for (labels, cfg) in &cells {
            for v in values {
                let mut cfg = cfg.clone();
                cfg[key] = v.clone();
                let mut labels = labels.clone();
                labels.push(format!("{key}={v}"));
                next.push((labels, cfg));
            }
        }
        cells = next;
    }
    cells
        .into_iter()
        .map(|(labels, v)| {
            let cfg: RunConfig = serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))?;
            cfg.validate()?;
            Ok((labels.join(";"), cfg))
        })
        .collect()
}

pub const SWEEP_HEADER: [&str; 7] = [
    "dataset",
    "config_id",
    "perturbation",
    "error_mean",
    "error_std",
    "n_reps",
    "overrides",
];

/// Runs every grid cell. With `out`, rows already present there (matched by
/// config id) are skipped and new rows are appended as they finish.
pub fn sweep(data: &Path, base: &RunConfig, grid_path: &Path, out: Option<&Path>, format: Format) -> CliResult<String> {
    let grid_text = std::fs::read_to_string(grid_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", grid_path.display())))?;
    let grid: serde_json::Value = serde_json::from_str(&grid_text).map_err(|e| CliError::Config(e.to_string()))?;
    let cells = expand_grid(base, &grid)?;
    let ds = load_dataset(data)?;
    let name = dataset_name(data);

    let mut done = HashSet::new();
    let mut file = None;
    if let Some(path) = out {
        let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
        if exists {
            let mut r = csv::Reader::from_path(path)?;
            for rec in r.records() {
                done.insert(rec?.get(1).unwrap_or_default().to_string());
            }
        }
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        if !exists {
            writeln!(f, "{}", SWEEP_HEADER.join(","))?;
        }
        file = Some(f);
    }

    let mut table = Table::new(&SWEEP_HEADER);
    for (labels, cfg) in cells {
        let id = cfg.hash();
        if done.contains(&id) {
            continue;
        }
        let report = test_report(&simulate(&cfg, &ds)?)?;
        let row = vec![
            name.clone(),
            id.clone(),
            "none".into(),
            pct(report.mean),
            pct(report.std),
            report.reps().to_string(),
            labels,
        ];
        if let Some(f) = file.as_mut() {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(&row)?;
            f.write_all(&w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;
            f.flush()?;
        }
        done.insert(id);
        table.push(row);
    }
    Ok(table.render(format))
}

pub fn knn(data: &Path, cfg: &RunConfig, ks: &[usize], format: Format) -> CliResult<String> {
    let ds = load_dataset(data)?;
    let sims = simulate(cfg, &ds)?;
    let model_error = test_report(&sims)?.mean;
    let mut table = Table::new(&["dataset", "config_id", "knn_k", "model_error", "knn_error", "learning_gain"]);
    for &k in ks {
        let mut errors = Vec::with_capacity(sims.len());
        for s in &sims {
            let knn = KnnEnsemble::from_model(&s.model, &s.train.x, &s.train.y, k)?;
            errors.push(100.0 * knn.error_rate(&s.test.x, &s.test.y, knn.views(), Parallelism::Parallel)?);
        }
        let knn_error = errors.iter().sum::<f64>() / errors.len() as f64;
        table.push(vec![
            dataset_name(data),
            cfg.hash(),
            k.to_string(),
            pct(model_error),
            pct(knn_error),
            format!("{:.4}", learning_gain(knn_error, model_error)),
        ]);
    }
    Ok(table.render(format))
}

pub fn proptest(seed: u64, format: Format) -> CliResult<(String, usize)> {
    let reports: Vec<OracleReport> = run_suite(seed, Parallelism::Parallel)?;
    let config_id = short_hash(format!("oracle-suite seed={seed}").as_bytes());
    let mut table = Table::new(&["config_id", "name", "trials", "violations", "bound", "measured", "passed"]);
    for r in &reports {
        table.push(vec![
            config_id.clone(),
            r.name.clone(),
            r.trials.to_string(),
            r.violations.to_string(),
            format!("{:.6}", r.bound),
            format!("{:.6}", r.measured),
            r.passed.to_string(),
        ]);
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    Ok((table.render(format), failed))
}

pub struct EnergyArgs {
    pub filters: usize,
    pub vocab: usize,
    pub int8: bool,
    pub spec: InferenceSpec,
}

impl Default for EnergyArgs {
    fn default() -> Self {
        Self {
            filters: 128,
            vocab: 64,
            int8: false,
            spec: InferenceSpec::default(),
        }
    }
}

pub fn energy(args: &EnergyArgs, format: Format) -> CliResult<String> {
    let model = EnergyModel::default();
    let width = if args.int8 { IntWidth::Int8 } else { IntWidth::Int32 };
    let layer = compare_layer(args.filters, args.vocab, width)?;
    let full = profile_inference(&args.spec)?;
    let config_id = short_hash(
        format!(
            "energy N={} V={} int8={} {:?}",
            args.filters, args.vocab, args.int8, args.spec
        )
        .as_bytes(),
    );
    let accounting = match args.spec.accounting {
        OutputAccounting::SingleFilter => "single-filter output accounting",
        OutputAccounting::AllFilters => "all-filter output accounting",
    };
    Ok(match format {
        Format::Csv => format!(
            "# config_id={config_id} per-layer\n{}# config_id={config_id} full-inference ({accounting})\n{}",
            comparison_csv(&layer, &model),
            comparison_csv(&full, &model)
        ),
        Format::Md => format!(
            "config_id {config_id}\n\nPer layer\n```\n{}```\n\nFull inference ({accounting})\n```\n{}```\n",
            comparison_table(&layer, &model),
            comparison_table(&full, &model)
        ),
    })
}

pub fn encode(data: &Path, cfg: &RunConfig, view: Option<usize>, format: Format) -> CliResult<String> {
    let ds = load_dataset(data)?;
    let encoders = fit_encoders(&cfg.ensemble(ds.classes(), cfg.seed), &ds.x, &ds.y)?;
    let views: Vec<usize> = match view {
        Some(v) if v >= encoders.len() => {
            return Err(CliError::Config(format!("view {v} out of range for {} views", encoders.len())))
        }
        Some(v) => vec![v],
        None => (0..encoders.len()).collect(),
    };
    let mut table = Table::new(&["config_id", "row", "view", "permutation"]);
    for (i, x) in ds.x.iter().enumerate() {
        for &k in &views {
            table.push(vec![cfg.hash(), i.to_string(), k.to_string(), encoders[k].encode(x)?.to_string()]);
        }
    }
    Ok(table.render(format))
}

pub fn write_or_print(text: &str, out: Option<&PathBuf>) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
