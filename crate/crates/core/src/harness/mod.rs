//! Experiment orchestration: configs, result records, tables and
//! atomic output.

mod experiments;

pub use experiments::*;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::AttackConfig;
use crate::data::{
    parse_csv, Dataset, DatasetManifest, GridDataSpec, TabularSpec, DEFAULT_TEST_FRACTION, LABEL_COLUMN,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::neural::{ModelFile, ModelPreset, TrainConfig};

pub const RESULT_FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// One cell of a [`Table`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(v) => write!(f, "{v}"),
        }
    }
}

/// A named-column table rendered as CSV or JSON records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: &Table) {
        assert_eq!(self.columns, other.columns, "column sets differ");
        self.rows.extend(other.rows.iter().cloned());
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("utf-8 cells"))
    }

    pub fn to_json(&self) -> Result<String> {
        let records: Vec<serde_json::Map<String, serde_json::Value>> = self
            .rows
            .iter()
            .map(|row| {
                self.columns
                    .iter()
                    .cloned()
                    .zip(row.iter().map(|c| serde_json::to_value(c).expect("cell serializes")))
                    .collect()
            })
            .collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    /// Parses CSV written by [`Table::to_csv`]; numeric-looking cells become
    /// numbers.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(
                rec?.iter()
                    .map(|f| {
                        if let Ok(v) = f.parse::<i64>() {
                            Cell::Int(v)
                        } else if let Ok(v) = f.parse::<f64>() {
                            Cell::Num(v)
                        } else {
                            Cell::Text(f.to_string())
                        }
                    })
                    .collect(),
            );
        }
        Ok(Table { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Settings for the order-profile measurements inside experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileSettings {
    /// Correctly classified test samples measured per model.
    pub samples: usize,
    /// Contexts per (pair, order); orders with fewer contexts are exact.
    pub contexts: usize,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        ProfileSettings {
            samples: 100,
            contexts: 1 << 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheorySettings {
    /// Search interval for n′; `None` uses `(2, n]`.
    pub n_range: Option<(f64, f64)>,
    pub theorem1_n: usize,
    pub theorem1_sigma: f64,
    pub theorem1_trials: usize,
}

impl Default for TheorySettings {
    fn default() -> Self {
        TheorySettings {
            n_range: None,
            theorem1_n: 12,
            theorem1_sigma: 1.0,
            theorem1_trials: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstabilitySettings {
    pub contexts: usize,
    pub repeats: usize,
    pub samples: usize,
}

impl Default for InstabilitySettings {
    fn default() -> Self {
        InstabilitySettings {
            contexts: 100,
            repeats: 2,
            samples: 20,
        }
    }
}

/// Everything an experiment run depends on besides the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Seeds offsets added to the run seed; one independent run per entry.
    pub seed_offsets: Vec<u64>,
    pub tabular: TabularSpec,
    pub grid: GridDataSpec,
    /// Base optimizer settings; λ and ranges come from the model type.
    pub train: TrainConfig,
    pub model: ModelPreset,
    pub robustness_models: Vec<ModelPreset>,
    pub profile: ProfileSettings,
    pub attacks: Vec<AttackConfig>,
    /// Masked counts as fractions of n.
    pub mask_fractions: Vec<f64>,
    pub theory: TheorySettings,
    pub instability: InstabilitySettings,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed_offsets: vec![0, 1, 2],
            tabular: TabularSpec::default(),
            grid: GridDataSpec::default(),
            train: TrainConfig::default(),
            model: ModelPreset::Mlp5,
            robustness_models: vec![ModelPreset::Mlp5, ModelPreset::Mlp8],
            profile: ProfileSettings::default(),
            attacks: vec![
                AttackConfig {
                    epsilon: 0.2,
                    steps: 50,
                    alpha: 0.01,
                    ..AttackConfig::default()
                },
                AttackConfig {
                    epsilon: 0.6,
                    steps: 100,
                    alpha: 0.01,
                    ..AttackConfig::default()
                },
            ],
            mask_fractions: (0..=8).map(|k| k as f64 / 8.0).collect(),
            theory: TheorySettings::default(),
            instability: InstabilitySettings::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<()> {
        self.tabular.validate()?;
        self.train.validate()?;
        if self.seed_offsets.is_empty() {
            return Err(Error::Config("at least one seed".into()));
        }
        if self.profile.samples == 0 || self.profile.contexts == 0 {
            return Err(Error::Config("profile samples and contexts must be positive".into()));
        }
        if self.mask_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("mask fractions must lie in [0, 1]".into()));
        }
        if self.instability.repeats < 2 {
            return Err(Error::Config("instability needs at least 2 repeats".into()));
        }
        for a in &self.attacks {
            a.validate(self.tabular.n)?;
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Self-describing record of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub format_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub config_digest: String,
    pub metrics: serde_json::Value,
    pub tables: BTreeMap<String, Table>,
    /// Unix seconds; excluded from [`ExperimentResult::digest`].
    pub started_at: u64,
    pub finished_at: u64,
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl ExperimentResult {
    pub fn new<C: Serialize>(experiment: &str, seed: u64, config: &C) -> Self {
        let config = serde_json::to_value(config).expect("config serializes");
        let config_digest = sha256_hex(config.to_string().as_bytes());
        let now = unix_now();
        ExperimentResult {
            format_version: RESULT_FORMAT_VERSION,
            experiment: experiment.to_string(),
            seed,
            tool_version: TOOL_VERSION.to_string(),
            config,
            config_digest,
            metrics: serde_json::Value::Object(Default::default()),
            tables: BTreeMap::new(),
            started_at: now,
            finished_at: now,
        }
    }

    pub fn set_metric<V: Serialize>(&mut self, key: &str, value: V) {
        self.metrics
            .as_object_mut()
            .expect("metrics is an object")
            .insert(key.to_string(), serde_json::to_value(value).expect("metric serializes"));
    }

    pub fn finish(mut self) -> Self {
        self.finished_at = unix_now();
        self
    }

    /// Hash of everything except the timestamps.
    pub fn digest(&self) -> String {
        let mut copy = self.clone();
        copy.started_at = 0;
        copy.finished_at = 0;
        sha256_hex(&serde_json::to_vec(&copy).expect("result serializes"))
    }

    /// Writes `result.json` plus one file per table into `dir`; returns
    /// `(relative path, digest)` pairs, with timestamp-free digests for the
    /// JSON record.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<Vec<(PathBuf, String)>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        write_atomic(&dir.join("result.json"), serde_json::to_string_pretty(self)?.as_bytes())?;
        written.push((PathBuf::from("result.json"), self.digest()));
        for (name, table) in &self.tables {
            let file = format!("{name}.{}", format.extension());
            let text = table.render(format)?;
            write_atomic(&dir.join(&file), text.as_bytes())?;
            written.push((PathBuf::from(file), sha256_hex(text.as_bytes())));
        }
        Ok(written)
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `data.csv` → `data.manifest.json`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    let stem = csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv.with_file_name(format!("{stem}.manifest.json"))
}

/// Writes `<stem>.csv` and `<stem>.manifest.json` into `dir`.
pub fn save_dataset(data: &Dataset, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let csv = dir.join(format!("{stem}.csv"));
    write_atomic(&csv, data.to_csv()?.as_bytes())?;
    let manifest = manifest_path(&csv);
    write_atomic(&manifest, serde_json::to_string_pretty(&data.manifest())?.as_bytes())?;
    Ok((csv, manifest))
}

/// Reads a dataset CSV. A sibling manifest, when present, fixes the split
/// and grid; otherwise the split comes from `seed`.
pub fn load_dataset(csv: &Path, label_column: &str, seed: u64) -> Result<Dataset> {
    let bytes = fs::read(csv)?;
    let manifest_file = manifest_path(csv);
    let manifest: Option<DatasetManifest> = if manifest_file.exists() {
        Some(
            serde_json::from_slice(&fs::read(&manifest_file)?)
                .map_err(|e| Error::Schema(format!("{}: {e}", manifest_file.display())))?,
        )
    } else {
        None
    };
    let (split_seed, fraction) = manifest
        .as_ref()
        .map(|m| (m.split_seed, m.test_fraction))
        .unwrap_or((seed, DEFAULT_TEST_FRACTION));
    let mut data = parse_csv(&bytes, label_column, split_seed, fraction)?;
    if let Some(m) = manifest {
        if m.n != data.n() {
            return Err(Error::Schema(format!(
                "manifest n = {} but CSV has {} features",
                m.n,
                data.n()
            )));
        }
        if m.class_names != data.class_names {
            return Err(Error::Schema("manifest class names differ from CSV labels".into()));
        }
        data.grid = m.grid;
        data.provenance = m.provenance;
        data.reference_accuracy = m.reference_accuracy;
        if data.digest() != m.digest {
            log::warn!("{} does not match its manifest digest", csv.display());
        }
    }
    Ok(data)
}

pub fn default_label_column() -> &'static str {
    LABEL_COLUMN
}

/// Model file carrying the dataset's standardization and baseline.
pub fn model_file(model: &crate::neural::MlpModel, data: &Dataset, config: &TrainConfig) -> ModelFile {
    let mut f = ModelFile::from_model(model);
    f.baseline = data.baseline.clone();
    f.input_mean = data.mean.clone();
    f.input_std = data.std.clone();
    f.class_names = data.class_names.clone();
    f.dataset_digest = data.digest();
    f.train_config_digest = config.digest();
    f.train_config = serde_json::to_value(config).ok();
    f
}

pub fn save_model(file: &ModelFile, path: &Path) -> Result<()> {
    write_atomic(path, file.to_json()?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path)?;
    ModelFile::from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::Schema(format!("{}: {j}", path.display())),
        other => other,
    })
}

/// Puts `data` into the model's input space.
pub fn align_dataset(model: &ModelFile, data: &mut Dataset) -> Result<()> {
    if model.layer_dims.first() != Some(&data.n()) {
        return Err(Error::Dimension(format!(
            "model expects {:?} inputs, data has {}",
            model.layer_dims.first(),
            data.n()
        )));
    }
    if model.class_names.len() != data.num_classes {
        return Err(Error::Dimension("model and data class counts differ".into()));
    }
    data.restandardize(&model.input_mean, &model.input_std, &model.baseline)
}

/// Execution mode from a worker count: one worker runs sequentially.
pub fn exec_for_workers(workers: Option<usize>) -> Exec {
    match workers {
        Some(1) => Exec::Sequential,
        _ => Exec::Parallel,
    }
}
