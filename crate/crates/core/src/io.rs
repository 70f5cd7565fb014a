//! File formats, run configuration and result persistence.
//!
//! * Features: CSV, one sample per row, optional header.
//! * Labels: CSV/text, one label per row (first column), any token.
//! * Kernels: CSV `n × n`, or binary `MKK1`: the 4 magic bytes, `n` as a
//!   little-endian `u32`, then `n·n` little-endian `f64` in row-major order.
//! * Results: one CSV per (dataset, metric), a cell listing, learned
//!   weights, and `manifest.json` holding the resolved config, its SHA-256
//!   and the repetition seeds.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::Partition;
use crate::kernels::{FeatureMatrix, GramMatrix, KernelBank, KernelSpec};
use crate::metrics::{AggregateReport, Metric, MetricsReport};
use crate::{Error, Matrix, Result};

pub const MAGIC: &[u8; 4] = b"MKK1";

/// Symmetry tolerance for kernels read from disk.
pub const LOAD_SYMMETRY_TOL: f64 = 1e-8;

fn read_csv_rows(path: &Path, header: bool) -> Result<Vec<Vec<String>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

fn parse_numeric(rows: &[Vec<String>], header: bool) -> Result<Vec<Vec<f64>>> {
    let offset = usize::from(header) + 1;
    let width = rows.first().map_or(0, Vec::len);
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            if row.len() != width {
                return Err(Error::Parse {
                    row: r + offset,
                    col: row.len().min(width) + 1,
                    msg: format!("expected {width} columns, found {}", row.len()),
                });
            }
            row.iter()
                .enumerate()
                .map(|(c, cell)| {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        row: r + offset,
                        col: c + 1,
                        msg: format!("`{cell}` is not a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row: r + offset,
                            col: c + 1,
                            msg: format!("`{cell}` is not finite"),
                        });
                    }
                    Ok(v)
                })
                .collect()
        })
        .collect()
}

/// Reads a features CSV (rows are samples). Rows and columns in error
/// messages are 1-based file positions.
pub fn load_features(path: &Path, header: bool) -> Result<FeatureMatrix> {
    let rows = read_csv_rows(path, header)?;
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            msg: "no samples".into(),
        });
    }
    FeatureMatrix::from_samples(&parse_numeric(&rows, header)?)
}

/// Writes one sample per row, no header.
pub fn save_features(path: &Path, x: &FeatureMatrix) -> Result<()> {
    let data = x.data();
    let rows: Vec<Vec<f64>> = (0..x.n_samples())
        .map(|i| data.column(i).iter().copied().collect())
        .collect();
    write_numeric_csv(path, &rows)
}

fn write_numeric_csv(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Reads ground-truth labels, one per row (first column). Tokens are
/// relabeled to `0..k` in order of first appearance.
pub fn load_labels(path: &Path) -> Result<Partition> {
    let rows = read_csv_rows(path, false)?;
    let tokens: Vec<String> = rows.into_iter().filter_map(|r| r.into_iter().next()).collect();
    if tokens.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            msg: "no labels".into(),
        });
    }
    Ok(Partition::from_raw(&tokens))
}

/// Reads a kernel, sniffing the `MKK1` magic. Files named `*.mkk` must be
/// binary. The result is validated symmetric within 1e-8.
pub fn load_kernel(path: &Path) -> Result<GramMatrix> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 4];
    let got = read_up_to(&mut file, &mut head).map_err(|e| Error::io(path, e))?;
    let is_binary = got == 4 && &head == MAGIC;
    let wants_binary = path.extension().is_some_and(|e| e == "mkk" || e == "bin");
    let values = if is_binary {
        read_binary_body(path, &mut file)?
    } else if wants_binary {
        return Err(Error::BadMagic);
    } else {
        drop(file);
        let rows = parse_numeric(&read_csv_rows(path, false)?, false)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "{}: kernel CSV is not square",
                path.display()
            )));
        }
        Matrix::from_fn(n, n, |i, j| rows[i][j])
    };
    GramMatrix::precomputed(values, LOAD_SYMMETRY_TOL)
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    Ok(filled)
}

fn read_binary_body(path: &Path, file: &mut fs::File) -> Result<Matrix> {
    let mut len = [0u8; 4];
    file.read_exact(&mut len).map_err(|e| Error::io(path, e))?;
    let n = u32::from_le_bytes(len) as usize;
    let mut body = Vec::new();
    file.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    if body.len() != n * n * 8 {
        return Err(Error::DimensionMismatch(format!(
            "{}: expected {} bytes of kernel data, found {}",
            path.display(),
            n * n * 8,
            body.len()
        )));
    }
    let vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Matrix::from_row_slice(n, n, &vals))
}

/// Writes the binary `MKK1` format.
pub fn save_kernel_binary(path: &Path, k: &Matrix) -> Result<()> {
    let n = k.nrows();
    let n32 = u32::try_from(n)
        .map_err(|_| Error::InvalidArgument(format!("kernel size {n} exceeds u32")))?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&n32.to_le_bytes())?;
        for i in 0..n {
            for j in 0..n {
                w.write_all(&k[(i, j)].to_le_bytes())?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Writes an `n × n` CSV.
pub fn save_kernel_csv(path: &Path, k: &Matrix) -> Result<()> {
    let rows: Vec<Vec<f64>> = k.row_iter().map(|r| r.iter().copied().collect()).collect();
    write_numeric_csv(path, &rows)
}

/// Writes every kernel of `bank` as `kNN.mkk` plus `bank.json` into `dir`,
/// returning the manifest path.
pub fn save_bank(bank: &KernelBank, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(bank.len());
    for (p, k) in bank.iter().enumerate() {
        let file = format!("k{:02}.mkk", p + 1);
        save_kernel_binary(&dir.join(&file), k.values())?;
        entries.push(BankEntry {
            file,
            spec: k.spec(),
            normalized: k.is_normalized(),
            scaled: k.is_scaled(),
        });
    }
    let manifest = BankManifest {
        n: bank.n(),
        kernels: entries,
    };
    let path = dir.join(BANK_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("bank manifest serializes");
    write_text(&path, &(json + "\n"))?;
    Ok(path)
}

pub const BANK_FILE: &str = "bank.json";

/// A datasets × algorithms score table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub datasets: Vec<String>,
    pub algorithms: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

/// Reads a score table: a header `dataset,<alg>,...` followed by one row
/// per dataset, its name in the first column.
pub fn load_score_table(path: &Path) -> Result<ScoreTable> {
    let rows = read_csv_rows(path, false)?;
    let Some((header, body)) = rows.split_first() else {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            msg: "empty score table".into(),
        });
    };
    if header.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            msg: "header needs a dataset column and at least one algorithm".into(),
        });
    }
    if body.is_empty() {
        return Err(Error::Parse {
            row: 2,
            col: 1,
            msg: "no dataset rows".into(),
        });
    }
    let datasets = body.iter().map(|r| r[0].clone()).collect();
    let values: Vec<Vec<String>> = body.iter().map(|r| r[1..].to_vec()).collect();
    // Shift columns so errors point at file positions.
    let scores = parse_numeric(&values, true).map_err(|e| match e {
        Error::Parse { row, col, msg } => Error::Parse { row, col: col + 1, msg },
        other => other,
    })?;
    if let Some(r) = scores.iter().position(|r| r.len() != header.len() - 1) {
        return Err(Error::Parse {
            row: r + 2,
            col: 1,
            msg: format!("expected {} scores, found {}", header.len() - 1, scores[r].len()),
        });
    }
    Ok(ScoreTable {
        datasets,
        algorithms: header[1..].to_vec(),
        scores,
    })
}

/// Entry of a kernel bank manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub file: String,
    pub spec: KernelSpec,
    pub normalized: bool,
    pub scaled: bool,
}

/// Describes a directory of kernel files written by `kernels build`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankManifest {
    pub n: usize,
    pub kernels: Vec<BankEntry>,
}

/// Algorithms the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[serde(alias = "a-mkkm", alias = "amkkm")]
    AMkkm,
    #[serde(alias = "sb-kkm", alias = "sbkkm")]
    SbKkm,
    Mkkm,
    #[serde(alias = "mkkm-mr")]
    MkkmMr,
    #[serde(alias = "kcd", alias = "kcd-mkkm")]
    KcdMkkm,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::AMkkm => "A-MKKM",
            Algorithm::SbKkm => "SB-KKM",
            Algorithm::Mkkm => "MKKM",
            Algorithm::MkkmMr => "MKKM-MR",
            Algorithm::KcdMkkm => "KCD-MKKM",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    /// Accepts the display names and the config spellings, ignoring case.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match key.as_str() {
            "a-mkkm" | "amkkm" => Algorithm::AMkkm,
            "sb-kkm" | "sbkkm" => Algorithm::SbKkm,
            "mkkm" => Algorithm::Mkkm,
            "mkkm-mr" | "mkkmmr" => Algorithm::MkkmMr,
            "kcd" | "kcd-mkkm" | "kcdmkkm" => Algorithm::KcdMkkm,
            _ => return Err(Error::config("algorithm", format!("unknown algorithm `{s}`"))),
        })
    }
}

fn default_alpha_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

fn default_beta_grid() -> Vec<f64> {
    (-14..=-5).map(|e| 2f64.powi(e)).collect()
}

fn default_lambda_grid() -> Vec<f64> {
    (-15..=15).map(|e| 2f64.powi(e)).collect()
}

fn default_repetitions() -> usize {
    50
}

fn default_max_iters() -> usize {
    50
}

fn default_dataset() -> String {
    "dataset".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn yes() -> bool {
    true
}

/// Experiment configuration, read from JSON. Relative paths are resolved
/// against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_dataset")]
    pub dataset: String,
    /// Features CSV; mutually exclusive with `kernels`.
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub features_header: bool,
    /// Precomputed kernel files (CSV or `MKK1`).
    #[serde(default)]
    pub kernels: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    pub k: usize,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_alpha_grid")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_beta_grid")]
    pub beta: Vec<f64>,
    #[serde(default = "default_lambda_grid")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Master seed; expanded into per-repetition seeds.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Normalize kernels (features: always part of the bank recipe;
    /// precomputed: applied only when set).
    #[serde(default = "yes")]
    pub normalize: bool,
    #[serde(default = "yes")]
    pub scale: bool,
    #[serde(default)]
    pub row_normalize: bool,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Evaluate against `labels`.
    #[serde(default = "yes")]
    pub metrics: bool,
    /// Also write the correlation and dissimilarity matrices as CSV.
    #[serde(default)]
    pub export_relations: bool,
}

impl RunConfig {
    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_owned(),
            source: e,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Json {
            path: PathBuf::from("<inline>"),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.features.as_mut() {
            join(p);
        }
        if let Some(ps) = self.kernels.as_mut() {
            ps.iter_mut().for_each(join);
        }
        if let Some(p) = self.labels.as_mut() {
            join(p);
        }
        join(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.features, &self.kernels) {
            (Some(_), Some(_)) => {
                return Err(Error::config("features", "give either `features` or `kernels`, not both"))
            }
            (None, None) => return Err(Error::config("features", "one of `features` or `kernels` is required")),
            (None, Some(ks)) if ks.is_empty() => return Err(Error::config("kernels", "must not be empty")),
            _ => {}
        }
        if self.k == 0 {
            return Err(Error::config("k", "must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "must not be empty"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions", "must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) {
                return Err(Error::config("epsilon", "must be positive"));
            }
        }
        let needs = |alg: Algorithm| self.algorithms.contains(&alg);
        let check_grid = |name: &str, grid: &[f64]| -> Result<()> {
            if grid.is_empty() {
                return Err(Error::config(name, "grid must not be empty"));
            }
            if let Some(i) = grid.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::config(format!("{name}[{i}]"), "must be finite and >= 0"));
            }
            Ok(())
        };
        if needs(Algorithm::KcdMkkm) {
            check_grid("alpha", &self.alpha)?;
            check_grid("beta", &self.beta)?;
        }
        if needs(Algorithm::MkkmMr) {
            check_grid("lambda", &self.lambda)?;
        }
        if self.metrics && self.labels.is_none() {
            return Err(Error::config("labels", "metrics requested but no labels file given"));
        }
        if needs(Algorithm::SbKkm) && self.labels.is_none() {
            return Err(Error::config("labels", "SB-KKM selects kernels by accuracy and needs labels"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// One splitmix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-repetition seeds: successive splitmix64 outputs from `master`.
pub fn expand_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut state = master;
    (0..count).map(|_| splitmix64(&mut state)).collect()
}

/// Convergence summary of one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

/// Outcome of one (dataset, algorithm, parameter) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub params: BTreeMap<String, f64>,
    pub repetitions: Vec<MetricsReport>,
    pub aggregate: Option<AggregateReport>,
    /// Learned kernel weights, when the algorithm has any.
    pub weights: Option<Vec<f64>>,
    /// Kernel chosen by SB-KKM in each repetition.
    pub selected_kernels: Option<Vec<usize>>,
    pub convergence: Option<Convergence>,
    pub duration_ms: f64,
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn params_label(&self) -> String {
        if self.params.is_empty() {
            return "-".into();
        }
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={}", fmt_f64(*v)))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// What `persist_results` wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: Option<String>,
    pub config: Option<RunConfig>,
    pub seeds: Vec<u64>,
    pub tables: Vec<String>,
    pub cells: usize,
    pub failures: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_owned(),
            source: e,
        })
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Best record per algorithm by mean of `metric` (first wins ties).
pub fn best_per_algorithm(records: &[ResultRecord], metric: Metric) -> Vec<&ResultRecord> {
    let mut best: BTreeMap<Algorithm, &ResultRecord> = BTreeMap::new();
    for r in records {
        let Some(agg) = &r.aggregate else { continue };
        let score = agg.mean.get(metric);
        match best.get(&r.algorithm) {
            Some(cur) if cur.aggregate.as_ref().is_some_and(|a| a.mean.get(metric) >= score) => {}
            _ => {
                best.insert(r.algorithm, r);
            }
        }
    }
    best.into_values().collect()
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the result tables and `manifest.json` into `dir`, returning the
/// manifest path.
pub fn persist_results(
    records: &[ResultRecord],
    dir: &Path,
    config: Option<&RunConfig>,
    seeds: &[u64],
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tables = Vec::new();
    let datasets: Vec<&str> = {
        let mut seen = Vec::new();
        for r in records {
            if !seen.contains(&r.dataset.as_str()) {
                seen.push(r.dataset.as_str());
            }
        }
        seen
    };

    for ds in &datasets {
        let mine: Vec<ResultRecord> = records.iter().filter(|r| r.dataset == *ds).cloned().collect();
        let stem = sanitize(ds);

        for metric in Metric::ALL {
            let best = best_per_algorithm(&mine, metric);
            if best.is_empty() {
                continue;
            }
            let mut text = String::from("algorithm,params,mean,std,mean_pm_std\n");
            for r in best {
                let agg = r.aggregate.as_ref().expect("filtered above");
                let (mean, std) = (agg.mean.get(metric), agg.std.get(metric));
                text.push_str(&format!(
                    "{},{},{},{},{:.4}±{:.4}\n",
                    r.algorithm.name(),
                    r.params_label(),
                    fmt_f64(mean),
                    fmt_f64(std),
                    mean,
                    std
                ));
            }
            let name = format!("{stem}_{}.csv", metric.name());
            write_text(&dir.join(&name), &text)?;
            tables.push(name);
        }

        let mut cells = String::from("algorithm,params,repetitions");
        for metric in Metric::ALL {
            cells.push_str(&format!(",{0}_mean,{0}_std", metric.name()));
        }
        cells.push_str(",iterations,converged,error\n");
        for r in &mine {
            cells.push_str(&format!("{},{},{}", r.algorithm.name(), r.params_label(), r.repetitions.len()));
            for metric in Metric::ALL {
                match &r.aggregate {
                    Some(a) => cells.push_str(&format!(
                        ",{},{}",
                        fmt_f64(a.mean.get(metric)),
                        fmt_f64(a.std.get(metric))
                    )),
                    None => cells.push_str(",,"),
                }
            }
            let (it, conv) = r
                .convergence
                .as_ref()
                .map_or((String::new(), String::new()), |c| (c.iterations.to_string(), c.converged.to_string()));
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            cells.push_str(&format!(",{it},{conv},{err}\n"));
        }
        let name = format!("{stem}_cells.csv");
        write_text(&dir.join(&name), &cells)?;
        tables.push(name);

        let weighted: Vec<&ResultRecord> = best_per_algorithm(&mine, Metric::Acc)
            .into_iter()
            .filter(|r| r.weights.is_some())
            .collect();
        let weighted = if weighted.is_empty() {
            // Without labels every cell is unscored; list them all.
            mine.iter().filter(|r| r.weights.is_some()).collect()
        } else {
            weighted
        };
        if !weighted.is_empty() {
            let mut text = String::from("algorithm,params,weights\n");
            for r in weighted {
                let w = r.weights.as_ref().expect("filtered above");
                let joined: Vec<String> = w.iter().map(|v| fmt_f64(*v)).collect();
                text.push_str(&format!("{},{},{}\n", r.algorithm.name(), r.params_label(), joined.join(";")));
            }
            let name = format!("{stem}_weights.csv");
            write_text(&dir.join(&name), &text)?;
            tables.push(name);
        }
    }

    let manifest = Manifest {
        config_hash: config.map(RunConfig::hash),
        config: config.cloned(),
        seeds: seeds.to_vec(),
        tables,
        cells: records.len(),
        failures: records
            .iter()
            .filter_map(|r| {
                r.error
                    .as_ref()
                    .map(|e| format!("{} {} {}: {e}", r.dataset, r.algorithm.name(), r.params_label()))
            })
            .collect(),
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&path, &json)?;
    Ok(path)
}
