//! Window featurization: ten distribution statistics per axis, thirty values
//! in total.
//!
//! Canonical order, repeated for the X, Y and Z axes:
//!
//! | slot | statistic        | definition                                         |
//! |------|------------------|----------------------------------------------------|
//! | 0    | `sum`            | Σx                                                 |
//! | 1    | `mean`           | sum / n                                            |
//! | 2    | `median`         | middle order statistic, mean of the two for even n |
//! | 3    | `std`            | sample standard deviation (n − 1), 0 when n = 1    |
//! | 4    | `cv`             | std / \|mean\|, 0 when \|mean\| < 1e-12            |
//! | 5    | `zero_crossings` | sign changes between consecutive nonzero values    |
//! | 6    | `mean_abs_dev`   | mean of \|x − mean\|                               |
//! | 7    | `median_abs_dev` | median of \|x − median\|                           |
//! | 8    | `skewness`       | m3 / m2^1.5, population moments, 0 when m2 < 1e-24 |
//! | 9    | `kurtosis`       | m4 / m2² − 3, 0 when m2 < 1e-24                    |
//!
//! Column names are `{axis}_{statistic}` with axis in `x`, `y`, `z`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::signal::Sample;
use crate::{Error, Label, Result};

pub const STATS_PER_AXIS: usize = 10;
pub const FEATURE_COUNT: usize = 3 * STATS_PER_AXIS;

pub const STAT_NAMES: [&str; STATS_PER_AXIS] = [
    "sum",
    "mean",
    "median",
    "std",
    "cv",
    "zero_crossings",
    "mean_abs_dev",
    "median_abs_dev",
    "skewness",
    "kurtosis",
];

pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

const CV_MEAN_EPS: f64 = 1e-12;
const MOMENT_EPS: f64 = 1e-24;

/// The thirty column names in canonical order.
pub fn feature_names() -> Vec<String> {
    AXIS_NAMES
        .iter()
        .flat_map(|axis| STAT_NAMES.iter().map(move |stat| format!("{axis}_{stat}")))
        .collect()
}

/// Hex SHA-256 of the comma-joined feature names. Stored in model files so a
/// model is never applied to vectors laid out differently.
pub fn feature_order_hash() -> String {
    let digest = Sha256::digest(feature_names().join(",").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub sum: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub cv: f64,
    pub zero_crossings: f64,
    pub mean_abs_dev: f64,
    pub median_abs_dev: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl AxisStats {
    pub fn to_array(&self) -> [f64; STATS_PER_AXIS] {
        [
            self.sum,
            self.mean,
            self.median,
            self.std,
            self.cv,
            self.zero_crossings,
            self.mean_abs_dev,
            self.median_abs_dev,
            self.skewness,
            self.kurtosis,
        ]
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    median_of_sorted(values)
}

/// Counts strict sign changes between consecutive nonzero values; exact
/// zeros are skipped.
pub fn zero_crossings(xs: &[f64]) -> usize {
    let mut last_positive: Option<bool> = None;
    let mut count = 0;
    for &x in xs {
        if x == 0.0 {
            continue;
        }
        let positive = x > 0.0;
        if let Some(prev) = last_positive {
            if prev != positive {
                count += 1;
            }
        }
        last_positive = Some(positive);
    }
    count
}

pub fn axis_features(xs: &[f64]) -> Result<AxisStats> {
    if xs.is_empty() {
        return Err(Error::Empty("feature input"));
    }
    if let Some(index) = xs.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let n = xs.len() as f64;
    let sum: f64 = xs.iter().sum();
    let mean = sum / n;

    let mut scratch = xs.to_vec();
    let median = median_in_place(&mut scratch);

    let (mut m2, mut m3, mut m4, mut abs_dev) = (0.0, 0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        abs_dev += d.abs();
    }
    let std = if xs.len() > 1 { (m2 / (n - 1.0)).sqrt() } else { 0.0 };
    m2 /= n;
    m3 /= n;
    m4 /= n;

    let cv = if mean.abs() < CV_MEAN_EPS {
        0.0
    } else {
        std / mean.abs()
    };
    let (skewness, kurtosis) = if m2 < MOMENT_EPS {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };

    for (slot, &x) in scratch.iter_mut().zip(xs) {
        *slot = (x - median).abs();
    }
    let median_abs_dev = median_in_place(&mut scratch);

    Ok(AxisStats {
        sum,
        mean,
        median,
        std,
        cv,
        zero_crossings: zero_crossings(xs) as f64,
        mean_abs_dev: abs_dev / n,
        median_abs_dev,
        skewness,
        kurtosis,
    })
}

/// Thirty features of one (prefix of a) window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    /// Prefix length, in seconds, the features were computed over.
    pub prefix_t: f64,
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// The ten statistics of one axis (0 = X, 1 = Y, 2 = Z).
    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.values[axis * STATS_PER_AXIS..(axis + 1) * STATS_PER_AXIS]
    }
}

/// Featurizes each axis independently and concatenates X, Y, Z.
pub fn featurize(samples: &[Sample], prefix_t: f64) -> Result<FeatureVector> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let mut values = [0.0; FEATURE_COUNT];
    let mut column = Vec::with_capacity(samples.len());
    for axis in 0..3 {
        column.clear();
        column.extend(samples.iter().map(|s| s.axes()[axis]));
        let stats = axis_features(&column)?;
        values[axis * STATS_PER_AXIS..(axis + 1) * STATS_PER_AXIS].copy_from_slice(&stats.to_array());
    }
    Ok(FeatureVector { values, prefix_t })
}

/// Writes a debugging feature matrix: thirty named columns, `label`, `prefix_t`.
pub fn write_feature_matrix<W: Write>(writer: W, rows: &[FeatureVector], labels: &[Label]) -> Result<()> {
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    let mut out = csv::Writer::from_writer(writer);
    let mut header = feature_names();
    header.push("label".into());
    header.push("prefix_t".into());
    out.write_record(&header)?;
    for (row, label) in rows.iter().zip(labels) {
        let mut record: Vec<String> = row.values.iter().map(|v| v.to_string()).collect();
        record.push(label.to_string());
        record.push(row.prefix_t.to_string());
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}
