//! The temporal ensemble: one forest per prefix length of a 1.5 s frame,
//! each weighted by its cross-validated F1, voting on a growing frame.

mod detector;
mod vote;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::TrialRecord;
use crate::features::{feature_order_hash, featurize, FeatureVector};
use crate::forest::{cross_validate, Dataset, Hyperparams, MaxFeatures, RandomForest};
use crate::signal::{prefix, samples_for};
use crate::{derive_seed, Error, Label, Result};

pub use detector::{
    classify_frame, detect_stream, events_from_decisions, read_event_log, write_event_log, DetectionEvent, Detections,
    FrameDecision, RefractoryGate, StreamDetector, DEFAULT_REFRACTORY,
};
pub use vote::{compute_weights, decide, early_decide, partial_score, vote, Decision};

/// Weight sharpness applied to F1 differences.
pub const DEFAULT_LAMBDA: f64 = 10.0;
pub const DEFAULT_FOLDS: usize = 10;

pub const ENSEMBLE_FORMAT: &str = "facetouch-ensemble";
pub const ENSEMBLE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

const CV_STREAM: u64 = 0xC0_0000;
const FIT_STREAM: u64 = 0xF1_0000;

/// Cross-validation seed used for instant `t`.
pub fn cv_seed(seed: u64, t: PrefixTime) -> u64 {
    derive_seed(seed, CV_STREAM + t.millis() as u64)
}

fn fit_seed(seed: u64, t: PrefixTime) -> u64 {
    derive_seed(seed, FIT_STREAM + t.millis() as u64)
}

/// A prefix length on the frame, stored in whole milliseconds so it can key
/// maps exactly. Serialized as decimal seconds text, e.g. `"1.3"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrefixTime(u32);

impl PrefixTime {
    pub const fn from_millis(ms: u32) -> Self {
        PrefixTime(ms)
    }

    pub fn from_secs(secs: f64) -> Result<Self> {
        let ms = (secs * 1000.0).round();
        if !secs.is_finite() || ms <= 0.0 || ms > u32::MAX as f64 || (secs * 1000.0 - ms).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "prefix instant must be a positive whole number of milliseconds, got {secs}"
            )));
        }
        Ok(PrefixTime(ms as u32))
    }

    pub fn millis(self) -> u32 {
        self.0
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Samples in a prefix of this length at `rate`.
    pub fn samples(self, rate: f64) -> usize {
        samples_for(self.secs(), rate)
    }
}

impl fmt::Display for PrefixTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(100) {
            write!(f, "{:.1}", self.secs())
        } else {
            let text = format!("{:.3}", self.secs());
            f.write_str(text.trim_end_matches('0'))
        }
    }
}

impl FromStr for PrefixTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let secs: f64 = s
            .trim()
            .trim_end_matches('s')
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("invalid prefix instant {s:?}")))?;
        PrefixTime::from_secs(secs)
    }
}

impl Serialize for PrefixTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PrefixTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Prefix instants at which a frame is classified, strictly increasing; the
/// last one is the full frame length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PrefixTime>", into = "Vec<PrefixTime>")]
pub struct PrefixSchedule {
    instants: Vec<PrefixTime>,
}

impl Default for PrefixSchedule {
    /// 1.0, 1.1, …, 1.5 s.
    fn default() -> Self {
        PrefixSchedule {
            instants: (0..6).map(|i| PrefixTime(1000 + 100 * i)).collect(),
        }
    }
}

impl PrefixSchedule {
    pub fn new(instants: Vec<PrefixTime>) -> Result<Self> {
        if instants.is_empty() {
            return Err(Error::Empty("prefix schedule"));
        }
        if instants.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "prefix schedule must be strictly increasing".into(),
            ));
        }
        Ok(PrefixSchedule { instants })
    }

    pub fn parse_list(text: &str) -> Result<Self> {
        PrefixSchedule::new(
            text.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse)
                .collect::<Result<_>>()?,
        )
    }

    pub fn instants(&self) -> &[PrefixTime] {
        &self.instants
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    /// The full frame length.
    pub fn window_len(&self) -> PrefixTime {
        self.instants[self.instants.len() - 1]
    }

    pub fn contains(&self, t: PrefixTime) -> bool {
        self.instants.binary_search(&t).is_ok()
    }
}

impl TryFrom<Vec<PrefixTime>> for PrefixSchedule {
    type Error = Error;

    fn try_from(instants: Vec<PrefixTime>) -> Result<Self> {
        PrefixSchedule::new(instants)
    }
}

impl From<PrefixSchedule> for Vec<PrefixTime> {
    fn from(schedule: PrefixSchedule) -> Self {
        schedule.instants
    }
}

/// The tuned per-prefix forest settings for the default schedule.
pub fn reference_hyperparams() -> BTreeMap<PrefixTime, Hyperparams> {
    // (t ms, max_depth, min_samples_leaf, min_samples_split, n_estimators)
    const TABLE: [(u32, usize, usize, usize, usize); 6] = [
        (1000, 200, 2, 3, 150),
        (1100, 150, 1, 2, 150),
        (1200, 150, 1, 2, 300),
        (1300, 300, 1, 3, 200),
        (1400, 200, 4, 4, 100),
        (1500, 150, 2, 3, 300),
    ];
    TABLE
        .iter()
        .map(|&(ms, max_depth, min_samples_leaf, min_samples_split, n_estimators)| {
            (
                PrefixTime(ms),
                Hyperparams {
                    bootstrap: false,
                    max_depth,
                    max_features: MaxFeatures::Log2,
                    min_samples_leaf,
                    min_samples_split,
                    n_estimators,
                },
            )
        })
        .collect()
}

/// Per-instant hyperparameters for any schedule: the reference table where
/// it has an entry, the full-window setting elsewhere.
pub fn hyperparams_for(schedule: &PrefixSchedule) -> BTreeMap<PrefixTime, Hyperparams> {
    let table = reference_hyperparams();
    schedule
        .instants()
        .iter()
        .map(|t| (*t, table.get(t).copied().unwrap_or_default()))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct HyperparamRow {
    t: PrefixTime,
    bootstrap: bool,
    max_depth: usize,
    max_features: MaxFeatures,
    min_samples_leaf: usize,
    min_samples_split: usize,
    n_estimators: usize,
}

impl HyperparamRow {
    fn new(t: PrefixTime, hp: Hyperparams) -> Self {
        HyperparamRow {
            t,
            bootstrap: hp.bootstrap,
            max_depth: hp.max_depth,
            max_features: hp.max_features,
            min_samples_leaf: hp.min_samples_leaf,
            min_samples_split: hp.min_samples_split,
            n_estimators: hp.n_estimators,
        }
    }

    fn params(&self) -> Hyperparams {
        Hyperparams {
            bootstrap: self.bootstrap,
            max_depth: self.max_depth,
            max_features: self.max_features,
            min_samples_leaf: self.min_samples_leaf,
            min_samples_split: self.min_samples_split,
            n_estimators: self.n_estimators,
        }
    }
}

/// Writes one `t,bootstrap,max_depth,…` row per instant.
pub fn write_hyperparams<W: std::io::Write>(writer: W, table: &BTreeMap<PrefixTime, Hyperparams>) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for (&t, &params) in table {
        out.serialize(HyperparamRow::new(t, params))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_hyperparams<R: std::io::Read>(reader: R) -> Result<BTreeMap<PrefixTime, Hyperparams>> {
    let mut table = BTreeMap::new();
    for (i, row) in csv::Reader::from_reader(reader)
        .deserialize::<HyperparamRow>()
        .enumerate()
    {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(line, e.to_string()))?;
        let params = row.params();
        params.validate().map_err(|e| Error::parse(line, e.to_string()))?;
        if table.insert(row.t, params).is_some() {
            return Err(Error::parse(line, format!("duplicate instant {}", row.t)));
        }
    }
    if table.is_empty() {
        return Err(Error::Empty("hyperparameter table"));
    }
    Ok(table)
}

/// Featurizes the first `t` seconds of every trial window.
pub fn prefix_features(trials: &[TrialRecord], t: PrefixTime) -> Result<Vec<FeatureVector>> {
    trials
        .iter()
        .map(|trial| featurize(prefix(&trial.window, t.secs())?, t.secs()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub lambda: f64,
    pub folds: usize,
    pub seed: u64,
}

impl TrainOptions {
    pub fn new(seed: u64) -> Self {
        TrainOptions {
            lambda: DEFAULT_LAMBDA,
            folds: DEFAULT_FOLDS,
            seed,
        }
    }
}

/// The deployed detector: forests, their CV F1s and vote weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalEnsemble {
    pub schedule: PrefixSchedule,
    pub models: BTreeMap<PrefixTime, RandomForest>,
    pub f1: BTreeMap<PrefixTime, f64>,
    pub weights: BTreeMap<PrefixTime, f64>,
    pub lambda: f64,
    pub rate: f64,
}

/// Trains one forest per instant: cross-validated F1 first, then a fit on
/// every trial. Instants train in parallel with independent derived seeds.
pub fn train_ensemble(
    trials: &[TrialRecord],
    schedule: &PrefixSchedule,
    hyperparams: &BTreeMap<PrefixTime, Hyperparams>,
    options: &TrainOptions,
) -> Result<TemporalEnsemble> {
    if trials.is_empty() {
        return Err(Error::Empty("trials"));
    }
    if hyperparams.len() != schedule.len() || schedule.instants().iter().any(|t| !hyperparams.contains_key(t)) {
        return Err(Error::KeyMismatch(
            "hyperparameters must be keyed exactly by the prefix schedule".into(),
        ));
    }
    let labels: Vec<Label> = trials.iter().map(TrialRecord::label).collect();
    if labels.iter().all(|l| *l == labels[0]) {
        return Err(Error::SingleClass);
    }
    let rate = trials[0].window.rate;
    let trained = schedule
        .instants()
        .par_iter()
        .map(|&t| {
            let hp = &hyperparams[&t];
            let features = prefix_features(trials, t)?;
            let data = Dataset::from_features(&features, labels.clone())?;
            let cv = cross_validate(&data, options.folds, hp, cv_seed(options.seed, t))?;
            let mut model = RandomForest::fit(&data, hp, fit_seed(options.seed, t))?;
            model.feature_order_hash = Some(feature_order_hash());
            Ok((t, model, cv.mean))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut models = BTreeMap::new();
    let mut f1 = BTreeMap::new();
    for (t, model, score) in trained {
        models.insert(t, model);
        f1.insert(t, score);
    }
    let weights = compute_weights(&f1, options.lambda)?;
    Ok(TemporalEnsemble {
        schedule: schedule.clone(),
        models,
        f1,
        weights,
        lambda: options.lambda,
        rate,
    })
}

impl TemporalEnsemble {
    /// Assembles an ensemble from fitted models and their F1 scores.
    pub fn from_parts(
        models: BTreeMap<PrefixTime, RandomForest>,
        f1: BTreeMap<PrefixTime, f64>,
        lambda: f64,
        rate: f64,
    ) -> Result<Self> {
        if models.keys().ne(f1.keys()) {
            return Err(Error::KeyMismatch(
                "models and F1 scores cover different instants".into(),
            ));
        }
        let schedule = PrefixSchedule::new(models.keys().copied().collect())?;
        let weights = compute_weights(&f1, lambda)?;
        Ok(TemporalEnsemble {
            schedule,
            models,
            f1,
            weights,
            lambda,
            rate,
        })
    }

    /// The single model at `t`, as a one-member ensemble with weight 1.
    pub fn single(&self, t: PrefixTime) -> Result<Self> {
        let model = self
            .models
            .get(&t)
            .ok_or_else(|| Error::KeyMismatch(format!("ensemble has no model at {t}")))?;
        TemporalEnsemble::from_parts(
            BTreeMap::from([(t, model.clone())]),
            BTreeMap::from([(t, self.f1[&t])]),
            self.lambda,
            self.rate,
        )
    }

    pub fn window_len(&self) -> PrefixTime {
        self.schedule.window_len()
    }

    pub fn predict_at(&self, t: PrefixTime, features: &FeatureVector) -> Result<Label> {
        self.models
            .get(&t)
            .ok_or_else(|| Error::KeyMismatch(format!("ensemble has no model at {t}")))?
            .predict(&features.values)
    }

    /// Writes `manifest.json` and one `model_<t>.json` per instant.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for (t, model) in &self.models {
            let file = format!("model_{t}.json");
            model.save(&dir.join(&file))?;
            entries.push(ManifestEntry {
                t: *t,
                file,
                f1: self.f1[t],
                weight: self.weights[t],
            });
        }
        let manifest = Manifest {
            format: ENSEMBLE_FORMAT.into(),
            version: ENSEMBLE_VERSION,
            lambda: self.lambda,
            rate: self.rate,
            feature_order_hash: feature_order_hash(),
            models: entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bad = |message: String| Error::Format {
            path: path.clone(),
            message,
        };
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| bad(e.to_string()))?;
        if manifest.format != ENSEMBLE_FORMAT || manifest.version != ENSEMBLE_VERSION {
            return Err(bad(format!(
                "unsupported ensemble {} v{}",
                manifest.format, manifest.version
            )));
        }
        if manifest.feature_order_hash != feature_order_hash() {
            return Err(bad("ensemble was trained on a different feature layout".into()));
        }
        let mut models = BTreeMap::new();
        let mut f1 = BTreeMap::new();
        for entry in &manifest.models {
            models.insert(entry.t, RandomForest::load(&dir.join(&entry.file))?);
            f1.insert(entry.t, entry.f1);
        }
        let ensemble = TemporalEnsemble::from_parts(models, f1, manifest.lambda, manifest.rate)?;
        for entry in &manifest.models {
            let stored = entry.weight;
            let derived = ensemble.weights[&entry.t];
            if (stored - derived).abs() > 1e-12 * derived.max(1.0) {
                return Err(bad(format!(
                    "weight for {} is {stored}, F1 scores imply {derived}",
                    entry.t
                )));
            }
        }
        Ok(ensemble)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    t: PrefixTime,
    file: String,
    f1: f64,
    weight: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    lambda: f64,
    rate: f64,
    feature_order_hash: String,
    models: Vec<ManifestEntry>,
}
