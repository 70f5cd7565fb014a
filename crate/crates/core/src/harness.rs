//! Experiment driver: loads a dataset from a [`RunConfig`], expands the
//! algorithm × parameter grid into cells, runs every cell over the
//! configured repetitions and persists the results.
//!
//! Each cell fits its model once; repetitions differ only in the seed of
//! the final k-means step, so they re-discretize the same embedding.
//! Cells run in parallel but are merged in cell order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::cluster::{
    average_kernel, discretize, kcd_mkkm, mkkm, mkkm_mr, sb_kkm_from_embeddings, AlternatingOptions,
    KcdConfig, KcdResult, Partition,
};
use crate::io::{
    expand_seeds, load_features, load_kernel, load_labels, persist_results, save_kernel_csv, Algorithm,
    Convergence, ResultRecord, RunConfig,
};
use crate::kernels::{build_bank, BankOptions, KernelBank, KernelSpec};
use crate::metrics::{aggregate, MetricsReport};
use crate::spectral::top_k_eigs;
use crate::{Error, Result};

/// A kernel bank with optional ground truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub bank: KernelBank,
    pub truth: Option<Partition>,
}

/// Builds (from features) or loads (precomputed) the kernel bank, and the
/// labels when given.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let opts = BankOptions {
        normalize: cfg.normalize,
        scale: cfg.scale,
    };
    let bank = match (&cfg.features, &cfg.kernels) {
        (Some(path), _) => {
            let x = load_features(path, cfg.features_header)?;
            build_bank(&x, &KernelSpec::standard(), opts)?
        }
        (None, Some(paths)) => {
            let kernels = paths
                .iter()
                .map(|p| load_kernel(p).and_then(|k| opts.apply(k)))
                .collect::<Result<Vec<_>>>()?;
            KernelBank::new(kernels)?
        }
        (None, None) => return Err(Error::config("features", "no data source")),
    };
    let truth = cfg.labels.as_deref().map(load_labels).transpose()?;
    if let Some(t) = &truth {
        if t.n() != bank.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} samples",
                t.n(),
                bank.n()
            )));
        }
        if t.k() != cfg.k {
            log::warn!("labels have {} classes but k = {}", t.k(), cfg.k);
        }
    }
    if cfg.k > bank.n() {
        return Err(Error::config("k", format!("{} exceeds the sample count {}", cfg.k, bank.n())));
    }
    Ok(Dataset {
        name: cfg.dataset.clone(),
        bank,
        truth,
    })
}

/// One algorithm at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub params: BTreeMap<String, f64>,
}

/// Expands the configured algorithms over their grids, in config order
/// (alpha outermost for KCD-MKKM).
pub fn plan_cells(cfg: &RunConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &algorithm in &cfg.algorithms {
        match algorithm {
            Algorithm::AMkkm | Algorithm::SbKkm | Algorithm::Mkkm => cells.push(Cell {
                algorithm,
                params: BTreeMap::new(),
            }),
            Algorithm::MkkmMr => {
                for &l in &cfg.lambda {
                    cells.push(Cell {
                        algorithm,
                        params: BTreeMap::from([("lambda".to_string(), l)]),
                    });
                }
            }
            Algorithm::KcdMkkm => {
                for &a in &cfg.alpha {
                    for &b in &cfg.beta {
                        cells.push(Cell {
                            algorithm,
                            params: BTreeMap::from([("alpha".to_string(), a), ("beta".to_string(), b)]),
                        });
                    }
                }
            }
        }
    }
    cells
}

struct Outcome {
    partitions: Vec<Partition>,
    weights: Option<Vec<f64>>,
    selected: Option<Vec<usize>>,
    convergence: Option<Convergence>,
}

fn param(cell: &Cell, name: &str) -> Result<f64> {
    cell.params
        .get(name)
        .copied()
        .ok_or_else(|| Error::config(name, "missing parameter"))
}

fn learned(fit: KcdResult, seeds: &[u64]) -> Result<Outcome> {
    let partitions = seeds
        .par_iter()
        .map(|&s| fit.repartition(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome {
        partitions,
        weights: Some(fit.weights.into_vec()),
        selected: None,
        convergence: Some(Convergence {
            iterations: fit.iterations,
            converged: fit.converged,
            objective_trace: fit.objective_trace,
        }),
    })
}

fn fit_cell(ds: &Dataset, cell: &Cell, cfg: &RunConfig, seeds: &[u64]) -> Result<Outcome> {
    let bank = &ds.bank;
    let opts = AlternatingOptions {
        k: cfg.k,
        seed: seeds[0],
        epsilon: cfg.epsilon,
        max_iters: cfg.max_iters,
        row_normalize: cfg.row_normalize,
    };
    match cell.algorithm {
        Algorithm::AMkkm => {
            let emb = top_k_eigs(&average_kernel(bank), cfg.k)?;
            let partitions = seeds
                .par_iter()
                .map(|&s| discretize(&emb, s, cfg.row_normalize))
                .collect::<Result<Vec<_>>>()?;
            Ok(Outcome {
                partitions,
                weights: None,
                selected: None,
                convergence: None,
            })
        }
        Algorithm::SbKkm => {
            let truth = ds
                .truth
                .as_ref()
                .ok_or_else(|| Error::config("labels", "SB-KKM needs labels"))?;
            let embeddings = bank
                .kernels()
                .par_iter()
                .map(|k| top_k_eigs(k.values(), cfg.k))
                .collect::<Result<Vec<_>>>()?;
            let picks = seeds
                .par_iter()
                .map(|&s| sb_kkm_from_embeddings(&embeddings, truth, s, cfg.row_normalize))
                .collect::<Result<Vec<_>>>()?;
            Ok(Outcome {
                selected: Some(picks.iter().map(|p| p.best_index).collect()),
                partitions: picks.into_iter().map(|p| p.partition).collect(),
                weights: None,
                convergence: None,
            })
        }
        Algorithm::Mkkm => learned(mkkm(bank, &opts)?, seeds),
        Algorithm::MkkmMr => learned(mkkm_mr(bank, param(cell, "lambda")?, &opts)?, seeds),
        Algorithm::KcdMkkm => {
            let kcfg = KcdConfig {
                alpha: param(cell, "alpha")?,
                beta: param(cell, "beta")?,
                epsilon: cfg.epsilon,
                max_outer_iters: cfg.max_iters,
                k: cfg.k,
                seed: seeds[0],
                row_normalize: cfg.row_normalize,
            };
            learned(kcd_mkkm(bank, bank.relations(), &kcfg)?, seeds)
        }
    }
}

fn score(ds: &Dataset, cfg: &RunConfig, partitions: &[Partition]) -> Result<Vec<MetricsReport>> {
    match (&ds.truth, cfg.metrics) {
        (Some(truth), true) => partitions.iter().map(|p| MetricsReport::evaluate(p, truth)).collect(),
        _ => Ok(Vec::new()),
    }
}

/// Runs one cell over all `seeds`. Failures are captured in the record's
/// `error` field rather than returned.
pub fn run_cell(ds: &Dataset, cell: &Cell, cfg: &RunConfig, seeds: &[u64]) -> ResultRecord {
    let start = Instant::now();
    let mut record = ResultRecord {
        dataset: ds.name.clone(),
        algorithm: cell.algorithm,
        params: cell.params.clone(),
        repetitions: Vec::new(),
        aggregate: None,
        weights: None,
        selected_kernels: None,
        convergence: None,
        duration_ms: 0.0,
        error: None,
    };
    let result = fit_cell(ds, cell, cfg, seeds).and_then(|out| {
        let reports = score(ds, cfg, &out.partitions)?;
        let agg = if reports.is_empty() { None } else { Some(aggregate(&reports)?) };
        Ok((out, reports, agg))
    });
    match result {
        Ok((out, reports, agg)) => {
            record.aggregate = agg;
            record.repetitions = reports;
            record.weights = out.weights;
            record.selected_kernels = out.selected;
            record.convergence = out.convergence;
        }
        Err(e) => {
            log::error!("{} {}: {e}", cell.algorithm.name(), record.params_label());
            record.error = Some(e.to_string());
        }
    }
    record.duration_ms = start.elapsed().as_secs_f64() * 1e3;
    record
}

/// Records of a sweep plus where they were written.
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub records: Vec<ResultRecord>,
    pub seeds: Vec<u64>,
    pub manifest: PathBuf,
}

impl BenchOutcome {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Runs every cell of the grid with at most `jobs` worker threads
/// (`None`: one per core) and writes the tables into `cfg.output_dir`.
pub fn run_bench(cfg: &RunConfig, jobs: Option<usize>) -> Result<BenchOutcome> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let seeds = expand_seeds(cfg.seed, cfg.repetitions);
    let cells = plan_cells(cfg);
    log::info!(
        "{}: {} cells × {} repetitions over {} kernels, n = {}",
        ds.name,
        cells.len(),
        seeds.len(),
        ds.bank.len(),
        ds.bank.n()
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let records: Vec<ResultRecord> = pool.install(|| {
        if cfg.algorithms.contains(&Algorithm::KcdMkkm) {
            // Shared by every KCD cell; compute once up front.
            ds.bank.relations();
        }
        cells
            .par_iter()
            .map(|cell| run_cell(&ds, cell, cfg, &seeds))
            .collect()
    });
    if cfg.export_relations {
        export_relations(&ds, &cfg.output_dir)?;
    }
    let manifest = persist_results(&records, &cfg.output_dir, Some(cfg), &seeds)?;
    write_records(&records, &cfg.output_dir, &ds.name)?;
    Ok(BenchOutcome {
        records,
        seeds,
        manifest,
    })
}

/// Writes every record, including per-repetition metrics and timings, as
/// `{dataset}_records.json`.
pub fn write_records(records: &[ResultRecord], dir: &Path, dataset: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}_records.json", file_stem(dataset)));
    let json = serde_json::to_string_pretty(records).expect("records serialize");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes the correlation and dissimilarity matrices as CSV.
pub fn export_relations(ds: &Dataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = file_stem(&ds.name);
    let rel = ds.bank.relations();
    let m_path = dir.join(format!("{stem}_correlation.csv"));
    let d_path = dir.join(format!("{stem}_dissimilarity.csv"));
    save_kernel_csv(&m_path, rel.correlation())?;
    save_kernel_csv(&d_path, rel.dissimilarity())?;
    Ok((m_path, d_path))
}
