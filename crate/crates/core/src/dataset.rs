//! Tabular ingestion, scaling and seeded train/validation/test splitting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const TRAIN_FRACTION: f64 = 0.64;
pub const VAL_FRACTION: f64 = 0.16;
pub const MIN_ROWS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read `{path}`")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("no usable rows ({dropped} dropped for unparseable or non-finite cells)")]
    NoUsableRows { dropped: usize },
    #[error("need at least {MIN_ROWS} rows to split, found {0}")]
    TooFewRows(usize),
    #[error("feature column `{0}` is constant on the training split")]
    ConstantFeature(String),
    #[error("target column is constant on the training split")]
    ConstantTarget,
    #[error("table has no feature columns")]
    NoFeatures,
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),
}

/// Numeric table as read from disk. `column_names` lists the numeric columns
/// (target included); the date column, when named, is carried in `dates`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub target_column: String,
    pub date_column: Option<String>,
    pub dates: Vec<String>,
    pub dropped_count: usize,
}

impl RawTable {
    pub fn target_index(&self) -> usize {
        self.column_names
            .iter()
            .position(|c| *c == self.target_column)
            .expect("target column is validated at construction")
    }

    pub fn feature_names(&self) -> Vec<String> {
        let t = self.target_index();
        self.column_names
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != t)
            .map(|(_, c)| c.clone())
            .collect()
    }

    pub fn n_features(&self) -> usize {
        self.column_names.len().saturating_sub(1)
    }

    /// Splits each row into its feature vector and target value.
    pub fn features_and_target(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let t = self.target_index();
        self.rows
            .iter()
            .map(|row| {
                let x = row
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != t)
                    .map(|(_, v)| *v)
                    .collect();
                (x, row[t])
            })
            .unzip()
    }

    /// The rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> RawTable {
        RawTable {
            column_names: self.column_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            target_column: self.target_column.clone(),
            date_column: self.date_column.clone(),
            dates: if self.dates.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.dates[i].clone()).collect()
            },
            dropped_count: 0,
        }
    }

    /// Writes the table back out as CSV with exactly round-tripping reals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = Vec::new();
        if let Some(d) = &self.date_column {
            header.push(d);
        }
        header.extend(self.column_names.iter().map(String::as_str));
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if self.date_column.is_some() {
                rec.push(self.dates[i].clone());
            }
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DatasetError::Csv(e.into()))?;
        Ok(())
    }
}

/// Reads a headered CSV file. Rows with unparseable or non-finite cells are
/// dropped and counted in [`RawTable::dropped_count`].
pub fn load_csv(
    path: impl AsRef<Path>,
    target_column: &str,
    date_column: Option<&str>,
) -> Result<RawTable, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let table = read_csv(file, target_column, date_column)?;
    if table.rows.is_empty() {
        return Err(DatasetError::NoUsableRows {
            dropped: table.dropped_count,
        });
    }
    Ok(table)
}

/// Like [`load_csv`] over any reader, but an empty table is not an error.
pub fn read_csv<R: Read>(
    input: R,
    target_column: &str,
    date_column: Option<&str>,
) -> Result<RawTable, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();

    let date_idx = match date_column {
        Some(d) => Some(
            header
                .iter()
                .position(|h| h == d)
                .ok_or_else(|| DatasetError::MissingColumn(d.to_owned()))?,
        ),
        None => None,
    };
    if !header.iter().any(|h| h == target_column) || date_column == Some(target_column) {
        return Err(DatasetError::MissingColumn(target_column.to_owned()));
    }
    let column_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != date_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows = Vec::new();
    let mut dates = Vec::new();
    let mut dropped = 0;
    for record in reader.records() {
        let record = record?;
        if record.len() != header.len() {
            dropped += 1;
            continue;
        }
        let parsed: Option<Vec<f64>> = record
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != date_idx)
            .map(|(_, cell)| cell.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match parsed {
            Some(row) => {
                if let Some(d) = date_idx {
                    dates.push(record[d].to_owned());
                }
                rows.push(row);
            }
            None => dropped += 1,
        }
    }

    Ok(RawTable {
        column_names,
        rows,
        target_column: target_column.to_owned(),
        date_column: date_column.map(str::to_owned),
        dates,
        dropped_count: dropped,
    })
}

/// Min-max scaler fitted on the training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    #[inline]
    pub fn transform(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn inverse(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// Z-score scaler for the target, in original units (MWh).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    #[inline]
    pub fn transform(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    #[inline]
    pub fn inverse(&self, y_norm: f64) -> f64 {
        inverse_target(y_norm, *self)
    }
}

#[inline]
pub fn inverse_target(y_norm: f64, scaler: TargetScaler) -> f64 {
    y_norm * scaler.std + scaler.mean
}

/// Everything needed to move between original and model units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub features: Vec<MinMaxScaler>,
    pub target: TargetScaler,
}

impl Scaling {
    pub fn normalize_features(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.features)
            .map(|(v, s)| s.transform(*v))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded uniform shuffle into 64/16/20 percent partitions; each part is
    /// returned in ascending index order.
    pub fn shuffled(n: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
        let n_val = ((n as f64 * VAL_FRACTION).round() as usize).min(n - n_train);
        let mut train = idx[..n_train].to_vec();
        let mut val = idx[n_train..n_train + n_val].to_vec();
        let mut test = idx[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Self { train, val, test }
    }
}

/// Normalised design matrix and standardised target with the scalers needed
/// to undo both.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub feature_scalers: Vec<MinMaxScaler>,
    pub target_scaler: TargetScaler,
    pub split: Split,
}

impl Dataset {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Borrowed rows and copied targets for an index set.
    pub fn subset(&self, idx: &[usize]) -> (Vec<&[f64]>, Vec<f64>) {
        idx.iter()
            .map(|&i| (self.x[i].as_slice(), self.y[i]))
            .unzip()
    }

    /// Per-feature `(min, max)` of the normalised training rows.
    pub fn train_feature_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.n_features())
            .map(|f| {
                self.split
                    .train
                    .iter()
                    .map(|&i| self.x[i][f])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    })
            })
            .collect()
    }

    pub fn scaling(&self) -> Scaling {
        Scaling {
            features: self.feature_scalers.clone(),
            target: self.target_scaler,
        }
    }
}

/// Fits scalers on a seeded training split and applies them to every row.
pub fn normalize_and_split(raw: &RawTable, seed: u64) -> Result<Dataset, DatasetError> {
    let n = raw.rows.len();
    if n < MIN_ROWS {
        return Err(DatasetError::TooFewRows(n));
    }
    let feature_names = raw.feature_names();
    if feature_names.is_empty() {
        return Err(DatasetError::NoFeatures);
    }
    let (x_raw, y_raw) = raw.features_and_target();
    let split = Split::shuffled(n, seed);

    let mut feature_scalers = Vec::with_capacity(feature_names.len());
    for (f, name) in feature_names.iter().enumerate() {
        let (min, max) = split
            .train
            .iter()
            .map(|&i| x_raw[i][f])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if max <= min {
            return Err(DatasetError::ConstantFeature(name.clone()));
        }
        feature_scalers.push(MinMaxScaler { min, max });
    }

    let n_train = split.train.len() as f64;
    let mean = split.train.iter().map(|&i| y_raw[i]).sum::<f64>() / n_train;
    let var = split
        .train
        .iter()
        .map(|&i| (y_raw[i] - mean).powi(2))
        .sum::<f64>()
        / n_train;
    let std = var.sqrt();
    if std <= 0.0 || !std.is_finite() {
        return Err(DatasetError::ConstantTarget);
    }
    let target_scaler = TargetScaler { mean, std };

    let x = x_raw
        .iter()
        .map(|row| {
            row.iter()
                .zip(&feature_scalers)
                .map(|(v, s)| s.transform(*v))
                .collect()
        })
        .collect();
    let y = y_raw.iter().map(|&v| target_scaler.transform(v)).collect();

    Ok(Dataset {
        feature_names,
        x,
        y,
        feature_scalers,
        target_scaler,
        split,
    })
}

/// Parameters of the synthetic surrogate generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_latent_rules: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_features: 13,
            n_latent_rules: 7,
            noise_std: 10.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_samples < MIN_ROWS {
            return Err(DatasetError::InvalidSynthetic(format!(
                "n_samples = {} < {MIN_ROWS}",
                self.n_samples
            )));
        }
        if self.n_features == 0 {
            return Err(DatasetError::InvalidSynthetic(
                "n_features must be >= 1".into(),
            ));
        }
        if self.n_latent_rules == 0 {
            return Err(DatasetError::InvalidSynthetic(
                "n_latent_rules must be >= 1".into(),
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(DatasetError::InvalidSynthetic(format!(
                "noise_std = {} must be finite and >= 0",
                self.noise_std
            )));
        }
        Ok(())
    }
}

pub const SYNTHETIC_TARGET: &str = "energy_mwh";
const SYNTH_BASE_MWH: f64 = 260.0;
const SYNTH_SCALE_MWH: f64 = 40.0;

/// Mixture of local affine models gated by Gaussian bumps, plus noise.
///
/// Features live in arbitrary per-column ranges to mimic raw plant units;
/// gating and local models act on the unit-cube coordinates. With a single
/// latent rule the gate is identically one and the target is exactly affine
/// in the features (up to noise).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<RawTable, DatasetError> {
    spec.validate()?;
    let f = spec.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let ranges: Vec<(f64, f64)> = (0..f)
        .map(|_| (rng.random_range(0.0..100.0), rng.random_range(1.0..50.0)))
        .collect();
    let gate_width = 0.3 * (f as f64).sqrt();
    let latent: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..spec.n_latent_rules)
        .map(|_| {
            let centre: Vec<f64> = (0..f).map(|_| rng.random::<f64>()).collect();
            let slope: Vec<f64> = (0..f).map(|_| rng.sample(StandardNormal)).collect();
            let bias: f64 = rng.sample(StandardNormal);
            (centre, slope, bias)
        })
        .collect();

    let mut column_names: Vec<String> = (1..=f).map(|i| format!("x{i}")).collect();
    column_names.push(SYNTHETIC_TARGET.to_owned());

    let mut rows = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let u: Vec<f64> = (0..f).map(|_| rng.random::<f64>()).collect();
        // log-domain softmax keeps far-from-everything samples finite
        let logits: Vec<f64> = latent
            .iter()
            .map(|(c, _, _)| {
                let d2: f64 = u.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                -0.5 * d2 / (gate_width * gate_width)
            })
            .collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let gates: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = gates.iter().sum();
        let mix: f64 = latent
            .iter()
            .zip(&gates)
            .map(|((_, w, b), g)| {
                g / total * (w.iter().zip(&u).map(|(w, u)| w * u).sum::<f64>() + b)
            })
            .sum();
        let noise: f64 = if spec.noise_std > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            spec.noise_std * z
        } else {
            0.0
        };
        let mut row: Vec<f64> = u
            .iter()
            .zip(&ranges)
            .map(|(u, (lo, span))| lo + span * u)
            .collect();
        row.push(SYNTH_BASE_MWH + SYNTH_SCALE_MWH * mix + noise);
        rows.push(row);
    }

    Ok(RawTable {
        column_names,
        rows,
        target_column: SYNTHETIC_TARGET.to_owned(),
        date_column: None,
        dates: Vec::new(),
        dropped_count: 0,
    })
}
