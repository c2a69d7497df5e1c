//! Datasets: synthetic generators, CSV ingestion, standardization, splits
//! and the masking helpers used by the structural-masking experiment.

use std::collections::BTreeSet;
use std::path::Path;

use log::warn;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

/// Smallest per-feature standard deviation used when standardizing.
pub const STD_FLOOR: f64 = 1e-8;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

const STREAM_SPLIT: u64 = 0x7370_6c74;
const STREAM_SPEC: u64 = 0x7370_6563;
const STREAM_ROWS: u64 = 0x726f_7773;

/// Row-major grid of cells; cell `(r, c)` is variable `r·width + c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn cell(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub fn chebyshev(&self, a: usize, b: usize) -> usize {
        let (ra, ca) = self.cell(a);
        let (rb, cb) = self.cell(b);
        ra.abs_diff(rb).max(ca.abs_diff(cb))
    }

    /// Distance of a cell from the grid boundary; 0 on the perimeter.
    pub fn ring(&self, index: usize) -> usize {
        let (r, c) = self.cell(index);
        r.min(c).min(self.height - 1 - r).min(self.width - 1 - c)
    }

    /// Cells ordered boundary ring first, row-major within a ring.
    pub fn surround_order(&self) -> Vec<usize> {
        let mut cells: Vec<usize> = (0..self.len()).collect();
        cells.sort_by_key(|&i| (self.ring(i), i));
        cells
    }
}

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Tabular {
        spec: TabularSpec,
        seed: u64,
    },
    Grid {
        spec: GridDataSpec,
        seed: u64,
    },
    Csv {
        path: String,
        sha256: String,
        label_column: String,
    },
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// Features as generated or read, `k × n`.
    pub raw: Array2<f64>,
    /// Standardized features: the model's input space.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Training-split means of the standardized features.
    pub baseline: Vec<f64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub provenance: Provenance,
    pub grid: Option<GridSpec>,
    /// Accuracy of the noise-free generative rule under the label noise.
    pub reference_accuracy: Option<f64>,
}

/// Seeded shuffle split; the first `round(k·(1−f))` shuffled rows train.
pub fn split_indices(k: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng::stream(seed, &[STREAM_SPLIT]));
    let n_train = ((k as f64) * (1.0 - test_fraction)).round() as usize;
    if n_train == 0 {
        return Err(Error::Config(format!("{k} rows leave an empty training split")));
    }
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn column_stats(raw: ArrayView2<f64>, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let sel = raw.select(Axis(0), rows);
    let mean = sel.mean_axis(Axis(0)).expect("non-empty split").to_vec();
    let std = sel.std_axis(Axis(0), 0.0).to_vec();
    (mean, std)
}

impl Dataset {
    /// Standardizes with training-split statistics and fixes the baseline.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        raw: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
        split_seed: u64,
        test_fraction: f64,
        provenance: Provenance,
        grid: Option<GridSpec>,
    ) -> Result<Self> {
        let (k, n) = raw.dim();
        let num_classes = class_names.len();
        if labels.len() != k {
            return Err(Error::Dimension(format!("{k} rows but {} labels", labels.len())));
        }
        if feature_names.len() != n {
            return Err(Error::Dimension(format!(
                "{n} columns but {} names",
                feature_names.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::Config(
                "a classification dataset needs at least 2 classes".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Argument(format!("label {bad} with {num_classes} classes")));
        }
        if let Some(g) = grid {
            if g.len() != n {
                return Err(Error::Config(format!(
                    "grid {}x{} does not cover {n} features",
                    g.height, g.width
                )));
            }
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("features must be finite".into()));
        }
        let (train, test) = split_indices(k, test_fraction, split_seed)?;
        let (mean, mut std) = column_stats(raw.view(), &train);
        for (name, s) in feature_names.iter().zip(std.iter_mut()) {
            if *s < STD_FLOOR {
                warn!("feature {name} is constant on the training split; std floored at {STD_FLOOR}");
                *s = STD_FLOOR;
            }
        }
        let mut features = raw.clone();
        for mut row in features.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&mean).zip(&std) {
                *v = (*v - m) / s;
            }
        }
        let baseline = features
            .select(Axis(0), &train)
            .mean_axis(Axis(0))
            .expect("non-empty split")
            .to_vec();
        Ok(Dataset {
            raw,
            features,
            labels,
            num_classes,
            class_names,
            feature_names,
            mean,
            std,
            baseline,
            train,
            test,
            split_seed,
            test_fraction,
            provenance,
            grid,
            reference_accuracy: None,
        })
    }

    pub fn n(&self) -> usize {
        self.features.ncols()
    }

    /// Re-expresses the raw features with externally fixed standardization
    /// constants and baseline, e.g. those stored with a trained model.
    pub fn restandardize(&mut self, mean: &[f64], std: &[f64], baseline: &[f64]) -> Result<()> {
        let n = self.n();
        if mean.len() != n || std.len() != n || baseline.len() != n {
            return Err(Error::Dimension(format!("standardization constants need {n} entries")));
        }
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Argument("standard deviations must be positive".into()));
        }
        for (mut out, raw) in self.features.rows_mut().into_iter().zip(self.raw.rows()) {
            for k in 0..n {
                out[k] = (raw[k] - mean[k]) / std[k];
            }
        }
        self.mean = mean.to_vec();
        self.std = std.to_vec();
        self.baseline = baseline.to_vec();
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, row: usize) -> ArrayView1<'_, f64> {
        self.features.row(row)
    }

    pub fn split(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Standardized rows and labels of `rows`.
    pub fn gather(&self, rows: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (
            self.features.select(Axis(0), rows),
            rows.iter().map(|&r| self.labels[r]).collect(),
        )
    }

    /// Hash of raw features, labels, classes and split.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.raw.nrows() as u64).to_le_bytes());
        h.update((self.raw.ncols() as u64).to_le_bytes());
        for v in self.raw.iter() {
            h.update(v.to_le_bytes());
        }
        for &y in &self.labels {
            h.update((y as u64).to_le_bytes());
        }
        for name in &self.class_names {
            h.update(name.as_bytes());
            h.update([0]);
        }
        for &i in self.train.iter().chain(&self.test) {
            h.update((i as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            provenance: self.provenance.clone(),
            split_seed: self.split_seed,
            test_fraction: self.test_fraction,
            rows: self.len(),
            n: self.n(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
            grid: self.grid,
            mean: self.mean.clone(),
            std: self.std.clone(),
            baseline: self.baseline.clone(),
            train_size: self.train.len(),
            test_size: self.test.len(),
            reference_accuracy: self.reference_accuracy,
            digest: self.digest(),
        }
    }

    /// Raw features plus a trailing `label` column holding class names.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(LABEL_COLUMN);
        w.write_record(&header)?;
        for (row, &y) in self.raw.rows().into_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.class_names[y].clone());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

pub const LABEL_COLUMN: &str = "label";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub provenance: Provenance,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub rows: usize,
    pub n: usize,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub grid: Option<GridSpec>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub baseline: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub reference_accuracy: Option<f64>,
    pub digest: String,
}

/// Generative rule for the synthetic tabular data.
///
/// Raw features are i.i.d. standard normal. Each class `c` scores
/// `linear·⟨a_c, x⟩ + pairwise·Σ_t b_ct x_i x_j + high_order·h_c(x)`
/// with `h_c(x) = cos(π ⟨u_c, x⟩ / √n)`, a smooth function of a sum over
/// every feature. Coefficients are drawn from the seed and scaled so each
/// block has unit variance across classes before weighting. The noise-free
/// label is the arg-max class; with probability `min(1, 2·label_noise)` the
/// label is then replaced by a uniform draw, so 0.5 is pure noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularSpec {
    pub n: usize,
    pub classes: usize,
    pub samples: usize,
    pub linear: f64,
    pub pairwise: f64,
    pub high_order: f64,
    /// Number of pairwise product terms.
    pub pair_terms: usize,
    pub label_noise: f64,
    pub test_fraction: f64,
}

impl Default for TabularSpec {
    fn default() -> Self {
        TabularSpec {
            n: 12,
            classes: 2,
            samples: 4000,
            linear: 2.0,
            pairwise: 0.5,
            high_order: 0.5,
            pair_terms: 6,
            label_noise: 0.0,
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

impl TabularSpec {
    pub fn validate(&self) -> Result<()> {
        if !(6..=24).contains(&self.n) {
            return Err(Error::Config(format!("tabular n must be in [6, 24], got {}", self.n)));
        }
        if self.classes < 2 {
            return Err(Error::Config("at least 2 classes".into()));
        }
        if self.samples < 10 {
            return Err(Error::Config("at least 10 samples".into()));
        }
        for (name, w) in [
            ("linear", self.linear),
            ("pairwise", self.pairwise),
            ("high_order", self.high_order),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("weight {name} must be finite and ≥ 0")));
            }
        }
        if self.linear + self.pairwise + self.high_order == 0.0 {
            return Err(Error::Config("signal has no component".into()));
        }
        if !(0.0..=0.5).contains(&self.label_noise) {
            return Err(Error::Config("label noise must be in [0, 0.5]".into()));
        }
        let max_pairs = self.n * (self.n - 1) / 2;
        if self.pair_terms > max_pairs {
            return Err(Error::Config(format!(
                "at most {max_pairs} pair terms for n = {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Sampled coefficients of a [`TabularSpec`].
#[derive(Clone, Debug)]
pub struct TabularRule {
    spec: TabularSpec,
    linear: Array2<f64>,
    pairs: Vec<(usize, usize)>,
    pair_coef: Array2<f64>,
    projection: Array2<f64>,
    phase_coef: Vec<f64>,
}

impl TabularRule {
    pub fn new(spec: &TabularSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (n, c) = (spec.n, spec.classes);
        let mut r = rng::stream(seed, &[STREAM_SPEC]);
        let normal = |r: &mut rng::StreamRng, rows, cols| {
            Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(r))
        };
        let linear = normal(&mut r, c, n) / (n as f64).sqrt();
        let all_pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut pairs: Vec<(usize, usize)> = index::sample(&mut r, all_pairs.len(), spec.pair_terms)
            .into_iter()
            .map(|t| all_pairs[t])
            .collect();
        pairs.sort_unstable();
        let pair_coef = normal(&mut r, c, pairs.len().max(1)) / (pairs.len().max(1) as f64).sqrt();
        let projection = normal(&mut r, c, n);
        let phase_coef = (0..c).map(|_| StandardNormal.sample(&mut r)).collect();
        Ok(TabularRule {
            spec: spec.clone(),
            linear,
            pairs,
            pair_coef,
            projection,
            phase_coef,
        })
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let n = self.spec.n as f64;
        (0..self.spec.classes)
            .map(|c| {
                let lin: f64 = self.linear.row(c).iter().zip(x).map(|(a, v)| a * v).sum();
                let pair: f64 = self
                    .pairs
                    .iter()
                    .enumerate()
                    .map(|(t, &(i, j))| self.pair_coef[[c, t]] * x[i] * x[j])
                    .sum();
                let proj: f64 = self.projection.row(c).iter().zip(x).map(|(a, v)| a * v).sum();
                let high = self.phase_coef[c] * (std::f64::consts::PI * proj / n.sqrt()).cos();
                self.spec.linear * lin + self.spec.pairwise * pair + self.spec.high_order * high
            })
            .collect()
    }

    pub fn label(&self, x: &[f64]) -> usize {
        crate::neural::argmax(self.scores(x).into_iter())
    }
}

pub fn gen_tabular(spec: &TabularSpec, seed: u64) -> Result<Dataset> {
    let rule = TabularRule::new(spec, seed)?;
    let (n, c, k) = (spec.n, spec.classes, spec.samples);
    let flip = (2.0 * spec.label_noise).min(1.0);
    let mut raw = Array2::zeros((k, n));
    let mut labels = Vec::with_capacity(k);
    for (row_id, mut row) in raw.rows_mut().into_iter().enumerate() {
        let mut r = rng::stream(seed, &[STREAM_ROWS, row_id as u64]);
        row.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut r));
        let mut y = rule.label(row.as_slice().expect("contiguous row"));
        if r.random::<f64>() < flip {
            y = r.random_range(0..c);
        }
        labels.push(y);
    }
    let mut ds = Dataset::new(
        raw,
        labels,
        (0..c).map(|k| format!("class{k:02}")).collect(),
        (0..n).map(|i| format!("x{i}")).collect(),
        seed,
        spec.test_fraction,
        Provenance::Tabular {
            spec: spec.clone(),
            seed,
        },
        None,
    )?;
    ds.reference_accuracy = Some(1.0 - flip * (c - 1) as f64 / c as f64);
    Ok(ds)
}

/// Synthetic images on a grid.
///
/// Class `c` uses template `c` of [`grid_template`]: a 0/1 pattern with
/// exactly half the cells on, spanning the whole grid. A sample is
/// `contrast·(2t − 1) + texture·ε` with i.i.d. standard normal `ε` per
/// cell. Every template has the same number of on cells, so the multiset
/// of cell values carries no class information; only the arrangement does.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridDataSpec {
    pub grid: GridSpec,
    pub classes: usize,
    pub samples: usize,
    pub contrast: f64,
    pub texture: f64,
    pub test_fraction: f64,
}

impl Default for GridDataSpec {
    fn default() -> Self {
        GridDataSpec {
            grid: GridSpec { height: 8, width: 8 },
            classes: 4,
            samples: 6000,
            contrast: 0.5,
            texture: 1.0,
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

/// Number of distinct grid templates.
pub const GRID_TEMPLATES: usize = 4;

/// Templates: 0 top half, 1 left half, 2 top-left plus bottom-right
/// quadrants, 3 checkerboard of 2×2 blocks.
pub fn grid_template(grid: GridSpec, class: usize) -> Vec<f64> {
    let (h, w) = (grid.height, grid.width);
    (0..grid.len())
        .map(|i| {
            let (r, c) = grid.cell(i);
            let on = match class {
                0 => r < h / 2,
                1 => c < w / 2,
                2 => (r < h / 2) == (c < w / 2),
                _ => (r / 2 + c / 2) % 2 == 0,
            };
            if on {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

pub fn gen_grid(spec: &GridDataSpec, seed: u64) -> Result<Dataset> {
    let g = spec.grid;
    if g.height < 4 || g.width < 4 || !g.height.is_multiple_of(4) || !g.width.is_multiple_of(4) {
        return Err(Error::Config(format!(
            "grid sides must be multiples of 4 and at least 4, got {}x{}",
            g.height, g.width
        )));
    }
    if g.len() > crate::coalition::MAX_VARIABLES {
        return Err(Error::Config(format!("grid has {} cells, more than 64", g.len())));
    }
    if !(2..=GRID_TEMPLATES).contains(&spec.classes) {
        return Err(Error::Config(format!("grid classes must be in [2, {GRID_TEMPLATES}]")));
    }
    if spec.samples < 10 || !(spec.contrast > 0.0) || !(spec.texture >= 0.0) {
        return Err(Error::Config(
            "grid spec needs ≥ 10 samples, contrast > 0, texture ≥ 0".into(),
        ));
    }
    let templates: Vec<Vec<f64>> = (0..spec.classes).map(|c| grid_template(g, c)).collect();
    let mut raw = Array2::zeros((spec.samples, g.len()));
    let mut labels = Vec::with_capacity(spec.samples);
    let noise = Normal::new(0.0, spec.texture).map_err(|e| Error::Config(e.to_string()))?;
    for (row_id, mut row) in raw.rows_mut().into_iter().enumerate() {
        let mut r = rng::stream(seed, &[STREAM_ROWS, row_id as u64]);
        let y = r.random_range(0..spec.classes);
        for (v, t) in row.iter_mut().zip(&templates[y]) {
            *v = spec.contrast * (2.0 * t - 1.0) + noise.sample(&mut r);
        }
        labels.push(y);
    }
    let mut ds = Dataset::new(
        raw,
        labels,
        (0..spec.classes).map(|k| format!("shape{k}")).collect(),
        (0..g.len())
            .map(|i| format!("r{}c{}", i / g.width, i % g.width))
            .collect(),
        seed,
        spec.test_fraction,
        Provenance::Grid {
            spec: spec.clone(),
            seed,
        },
        Some(g),
    )?;
    ds.reference_accuracy = None;
    Ok(ds)
}

/// Nearest-template prediction on raw grid features.
pub fn nearest_template(grid: GridSpec, classes: usize, raw: &[f64]) -> usize {
    let scores = (0..classes).map(|c| {
        -grid_template(grid, c)
            .iter()
            .zip(raw)
            .map(|(t, v)| (v - (2.0 * t - 1.0)).powi(2))
            .sum::<f64>()
    });
    crate::neural::argmax(scores)
}

/// Reads a header-first CSV. Every column but `label_column` must be
/// numeric; label values become classes in sorted order.
pub fn load_csv(path: &Path, label_column: &str, split_seed: u64, test_fraction: f64) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    let sha = hex::encode(Sha256::digest(&bytes));
    let mut ds = parse_csv(&bytes, label_column, split_seed, test_fraction)?;
    ds.provenance = Provenance::Csv {
        path: path.display().to_string(),
        sha256: sha,
        label_column: label_column.to_string(),
    };
    Ok(ds)
}

pub fn parse_csv(bytes: &[u8], label_column: &str, split_seed: u64, test_fraction: f64) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_at = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("label column {label_column:?} not in header")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != label_at)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let mut values = Vec::new();
    let mut label_text = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: row + 1,
                column: String::new(),
                message: format!("{} fields, header has {}", record.len(), headers.len()),
            });
        }
        for (k, field) in record.iter().enumerate() {
            if k == label_at {
                label_text.push(field.trim().to_string());
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: headers[k].clone(),
                message: format!("{field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: row + 1,
                    column: headers[k].clone(),
                    message: "value is not finite".into(),
                });
            }
            values.push(v);
        }
    }
    let k = label_text.len();
    if k == 0 {
        return Err(Error::Schema("no data rows".into()));
    }
    let class_names: Vec<String> = label_text
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels = label_text
        .iter()
        .map(|t| class_names.binary_search(t).expect("name collected above"))
        .collect();
    let raw = Array2::from_shape_vec((k, feature_names.len()), values).expect("row lengths checked");
    Dataset::new(
        raw,
        labels,
        class_names,
        feature_names,
        split_seed,
        test_fraction,
        Provenance::Csv {
            path: String::new(),
            sha256: hex::encode(Sha256::digest(bytes)),
            label_column: label_column.to_string(),
        },
        None,
    )
}

fn check_mask_args(x: &[f64], baseline: &[f64], m: usize) -> Result<()> {
    if x.len() != baseline.len() {
        return Err(Error::Dimension(format!(
            "input {} vs baseline {}",
            x.len(),
            baseline.len()
        )));
    }
    if m > x.len() {
        return Err(Error::Argument(format!("cannot mask {m} of {} variables", x.len())));
    }
    Ok(())
}

/// Replaces `m` uniformly chosen variables by their baseline values.
pub fn mask_random<R: Rng + ?Sized>(x: &[f64], baseline: &[f64], m: usize, rng: &mut R) -> Result<Vec<f64>> {
    check_mask_args(x, baseline, m)?;
    let mut out = x.to_vec();
    for i in index::sample(rng, x.len(), m) {
        out[i] = baseline[i];
    }
    Ok(out)
}

/// Replaces the first `m` cells of [`GridSpec::surround_order`] by their
/// baseline values.
pub fn mask_surround(x: &[f64], baseline: &[f64], m: usize, grid: GridSpec) -> Result<Vec<f64>> {
    check_mask_args(x, baseline, m)?;
    if grid.len() != x.len() {
        return Err(Error::Dimension(format!(
            "grid has {} cells, input {}",
            grid.len(),
            x.len()
        )));
    }
    let mut out = x.to_vec();
    for &i in grid.surround_order().iter().take(m) {
        out[i] = baseline[i];
    }
    Ok(out)
}
