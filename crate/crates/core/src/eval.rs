//! Experiment metrics: the F1-versus-prefix curve, per-prompt recall and
//! frame-level false-positive rate on session logs, and the comparison of
//! the temporal ensemble against the full-window model alone.
//!
//! Scoring rules:
//!
//! - A prompt is detected when at least one event's window start lies in
//!   its label interval `[p, p + 3 s)`.
//! - The false-positive rate is the fraction of complete frames outside
//!   every label interval whose own decision is positive, before refractory
//!   suppression.
//! - The early-decision histogram counts, per detected prompt, the prefix
//!   instant of the first matching event.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{in_label_interval, matching_prompt, PromptLog, TrialRecord};
use crate::ensemble::{
    cv_seed, detect_stream, prefix_features, DetectionEvent, Detections, FrameDecision, PrefixSchedule, PrefixTime,
    TemporalEnsemble,
};
use crate::forest::{cross_validate, Dataset, Hyperparams};
use crate::signal::FrameSchedule;
use crate::{Error, Label, Result};

/// Mean cross-validated F1 of a forest trained on each prefix length.
///
/// Uses the same fold seeds as ensemble training, so the curve equals the
/// F1 scores recorded in an ensemble trained with the same seed.
pub fn f1_curve(
    trials: &[TrialRecord],
    schedule: &PrefixSchedule,
    hyperparams: &BTreeMap<PrefixTime, Hyperparams>,
    folds: usize,
    seed: u64,
) -> Result<BTreeMap<PrefixTime, f64>> {
    let labels: Vec<Label> = trials.iter().map(TrialRecord::label).collect();
    f1_curve_with_labels(trials, &labels, schedule, hyperparams, folds, seed)
}

/// [`f1_curve`] with labels supplied separately, e.g. permuted.
pub fn f1_curve_with_labels(
    trials: &[TrialRecord],
    labels: &[Label],
    schedule: &PrefixSchedule,
    hyperparams: &BTreeMap<PrefixTime, Hyperparams>,
    folds: usize,
    seed: u64,
) -> Result<BTreeMap<PrefixTime, f64>> {
    if trials.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: trials.len(),
            got: labels.len(),
        });
    }
    schedule
        .instants()
        .par_iter()
        .map(|&t| {
            let hp = hyperparams
                .get(&t)
                .ok_or_else(|| Error::KeyMismatch(format!("no hyperparameters for {t}")))?;
            let data = Dataset::from_features(&prefix_features(trials, t)?, labels.to_vec())?;
            Ok((t, cross_validate(&data, folds, hp, cv_seed(seed, t))?.mean))
        })
        .collect()
}

pub fn write_f1_curve<W: Write>(mut writer: W, curve: &BTreeMap<PrefixTime, f64>) -> Result<()> {
    writeln!(writer, "t,f1")?;
    for (t, f1) in curve {
        writeln!(writer, "{t},{f1}")?;
    }
    writer.flush()?;
    Ok(())
}

/// Detection outcome of one session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub prompts: usize,
    pub detected: usize,
    /// Complete frames outside every label interval.
    pub negative_frames: usize,
    pub false_positive_frames: usize,
    pub early_histogram: BTreeMap<PrefixTime, usize>,
}

impl SessionScore {
    pub fn recall(&self) -> f64 {
        ratio(self.detected, self.prompts)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.false_positive_frames, self.negative_frames)
    }

    /// Detections settled before the last prefix instant.
    pub fn early_detections(&self, window_len: PrefixTime) -> usize {
        self.early_histogram
            .iter()
            .filter(|(t, _)| **t < window_len)
            .map(|(_, n)| n)
            .sum()
    }

    /// Pools counts across sessions.
    pub fn merge(&mut self, other: &SessionScore) {
        self.prompts += other.prompts;
        self.detected += other.detected;
        self.negative_frames += other.negative_frames;
        self.false_positive_frames += other.false_positive_frames;
        for (t, n) in &other.early_histogram {
            *self.early_histogram.entry(*t).or_default() += n;
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores detector output against prompt times.
///
/// `frame_starts` are the start times of all complete frames of the stream
/// and `positive_starts` those among them decided positive.
pub fn score_detections(
    prompts: &[f64],
    frame_starts: &[f64],
    positive_starts: &[f64],
    events: &[DetectionEvent],
) -> SessionScore {
    let mut first_hit: Vec<Option<PrefixTime>> = vec![None; prompts.len()];
    for event in events {
        if let Some(i) = matching_prompt(prompts, event.window_start_t) {
            first_hit[i].get_or_insert(event.decided_at_t);
        }
    }
    let mut early_histogram = BTreeMap::new();
    for t in first_hit.iter().flatten() {
        *early_histogram.entry(*t).or_default() += 1;
    }
    let outside = |start: f64| !prompts.iter().any(|&p| in_label_interval(start, p));
    SessionScore {
        prompts: prompts.len(),
        detected: first_hit.iter().filter(|h| h.is_some()).count(),
        negative_frames: frame_starts.iter().filter(|&&s| outside(s)).count(),
        false_positive_frames: positive_starts.iter().filter(|&&s| outside(s)).count(),
        early_histogram,
    }
}

fn complete_positive_starts(decisions: &[FrameDecision], complete: usize, stride: usize) -> Vec<f64> {
    decisions
        .iter()
        .filter(|d| d.decision.is_positive() && d.start_index / stride < complete)
        .map(|d| d.window_start_t)
        .collect()
}

/// Scores an existing detection run on a session log.
pub fn score_session(log: &PromptLog, frames: &FrameSchedule, detections: &Detections) -> Result<SessionScore> {
    log.validate()?;
    frames.validate()?;
    let stride = frames.stride_samples();
    let complete = frames.frame_count(log.stream.len());
    let starts: Vec<f64> = (0..complete).map(|k| log.stream[k * stride].t).collect();
    let positives = complete_positive_starts(&detections.decisions, complete, stride);
    Ok(score_detections(
        &log.prompt_times(),
        &starts,
        &positives,
        &detections.events,
    ))
}

/// Runs the detector over a session log and scores it.
pub fn evaluate_session(
    log: &PromptLog,
    ensemble: &TemporalEnsemble,
    frames: &FrameSchedule,
    refractory: f64,
) -> Result<(SessionScore, Detections)> {
    let detections = detect_stream(&log.stream, ensemble, frames, refractory)?;
    Ok((score_session(log, frames, &detections)?, detections))
}

/// Scores of the full ensemble and of its last-instant model alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub ensemble: SessionScore,
    pub full_window: SessionScore,
}

pub fn compare_full_window(
    log: &PromptLog,
    ensemble: &TemporalEnsemble,
    frames: &FrameSchedule,
    refractory: f64,
) -> Result<Comparison> {
    let full = ensemble.single(ensemble.window_len())?;
    Ok(Comparison {
        ensemble: evaluate_session(log, ensemble, frames, refractory)?.0,
        full_window: evaluate_session(log, &full, frames, refractory)?.0,
    })
}

/// Everything the `eval` command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1_by_prefix: BTreeMap<PrefixTime, f64>,
    pub window_len: PrefixTime,
    /// Per-participant scores in input order.
    pub sessions: Vec<(String, SessionScore)>,
    /// Same participants scored with the full-window model alone.
    pub full_window: Option<Vec<(String, SessionScore)>>,
}

fn pooled(sessions: &[(String, SessionScore)]) -> SessionScore {
    let mut total = SessionScore::default();
    for (_, s) in sessions {
        total.merge(s);
    }
    total
}

fn percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn render_table(out: &mut String, title: &str, sessions: &[(String, SessionScore)]) {
    let overall = pooled(sessions);
    let mut columns: Vec<(&str, &SessionScore)> = sessions.iter().map(|(n, s)| (n.as_str(), s)).collect();
    columns.push(("Overall", &overall));
    type Cell = fn(&SessionScore) -> String;
    let rows: [(&str, Cell); 2] = [
        ("Face touching detected", |s| format!("{}/{}", s.detected, s.prompts)),
        ("False positives rate", |s| percent(s.fpr())),
    ];
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, f)| columns.iter().map(|(_, s)| f(s)).collect())
        .collect();
    let widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(c, (name, _))| cells.iter().map(|r| r[c].len()).chain([name.len()]).max().unwrap_or(0))
        .collect();

    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:label_width$}", "");
    for ((name, _), w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {name:>w$}");
    }
    let _ = writeln!(out);
    for ((label, _), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{label:label_width$}");
        for (cell, w) in row.iter().zip(&widths) {
            let _ = write!(out, "  {cell:>w$}");
        }
        let _ = writeln!(out);
    }
}

impl EvalReport {
    pub fn overall(&self) -> SessionScore {
        pooled(&self.sessions)
    }

    /// Human-readable tables: recall and FPR per participant and overall.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        render_table(&mut out, "Temporal ensemble", &self.sessions);
        if let Some(full) = &self.full_window {
            let _ = writeln!(out);
            render_table(&mut out, &format!("Full window only ({} s)", self.window_len), full);
        }
        let overall = self.overall();
        let _ = writeln!(out);
        let _ = writeln!(out, "Decision instant of detected touches");
        for (t, n) in &overall.early_histogram {
            let _ = writeln!(out, "  t = {t} s: {n}");
        }
        if !self.f1_by_prefix.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "Cross-validated F1 by prefix");
            for (t, f1) in &self.f1_by_prefix {
                let _ = writeln!(out, "  t = {t} s: {f1:.4}");
            }
        }
        out
    }

    /// Machine-readable key/value summary (TOML).
    pub fn to_toml(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Entry {
            prompts: usize,
            detected: usize,
            recall: f64,
            negative_frames: usize,
            false_positive_frames: usize,
            fpr: f64,
            early_histogram: BTreeMap<String, usize>,
        }
        #[derive(Serialize)]
        struct Doc {
            window_len: f64,
            overall: Entry,
            sessions: BTreeMap<String, Entry>,
            #[serde(skip_serializing_if = "Option::is_none")]
            full_window_overall: Option<Entry>,
            #[serde(skip_serializing_if = "Option::is_none")]
            full_window_sessions: Option<BTreeMap<String, Entry>>,
            f1_by_prefix: BTreeMap<String, f64>,
        }
        fn entry(s: &SessionScore) -> Entry {
            Entry {
                prompts: s.prompts,
                detected: s.detected,
                recall: s.recall(),
                negative_frames: s.negative_frames,
                false_positive_frames: s.false_positive_frames,
                fpr: s.fpr(),
                early_histogram: s.early_histogram.iter().map(|(t, n)| (t.to_string(), *n)).collect(),
            }
        }
        let by_name = |v: &[(String, SessionScore)]| v.iter().map(|(n, s)| (n.clone(), entry(s))).collect();
        let doc = Doc {
            window_len: self.window_len.secs(),
            overall: entry(&self.overall()),
            sessions: by_name(&self.sessions),
            full_window_overall: self.full_window.as_ref().map(|f| entry(&pooled(f))),
            full_window_sessions: self.full_window.as_ref().map(|f| by_name(f)),
            f1_by_prefix: self.f1_by_prefix.iter().map(|(t, f)| (t.to_string(), *f)).collect(),
        };
        toml::to_string(&doc).map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))
    }
}

/// Evaluates an ensemble on named session logs, optionally alongside its
/// full-window model.
pub fn evaluate_sessions(
    logs: &[(String, PromptLog)],
    ensemble: &TemporalEnsemble,
    frames: &FrameSchedule,
    refractory: f64,
    compare_full: bool,
) -> Result<EvalReport> {
    if logs.is_empty() {
        return Err(Error::Empty("session logs"));
    }
    let full = if compare_full {
        Some(ensemble.single(ensemble.window_len())?)
    } else {
        None
    };
    let scored = logs
        .par_iter()
        .map(|(name, log)| {
            let main = evaluate_session(log, ensemble, frames, refractory)?.0;
            let single = full
                .as_ref()
                .map(|f| evaluate_session(log, f, frames, refractory).map(|r| r.0))
                .transpose()?;
            Ok((name.clone(), main, single))
        })
        .collect::<Result<Vec<_>>>()?;
    let sessions = scored.iter().map(|(n, s, _)| (n.clone(), s.clone())).collect();
    let full_window = compare_full.then(|| {
        scored
            .iter()
            .map(|(n, _, f)| (n.clone(), f.clone().unwrap_or_default()))
            .collect()
    });
    Ok(EvalReport {
        f1_by_prefix: ensemble.f1.clone(),
        window_len: ensemble.window_len(),
        sessions,
        full_window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(start: f64, at_ms: u32) -> DetectionEvent {
        DetectionEvent {
            window_start_t: start,
            decided_at_t: PrefixTime::from_millis(at_ms),
            score: 1.0,
            votes: BTreeMap::new(),
        }
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 * 0.25).collect()
    }

    #[test]
    fn never_and_always_firing() {
        let prompts = [10.0, 30.0];
        let starts = grid(200);
        let never = score_detections(&prompts, &starts, &[], &[]);
        assert_eq!((never.recall(), never.fpr()), (0.0, 0.0));
        assert_eq!(never.negative_frames, 200 - 24);

        let events: Vec<_> = [0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0, 27.0, 30.0, 33.0]
            .iter()
            .map(|&s| event(s, 1000))
            .collect();
        let always = score_detections(&prompts, &starts, &starts, &events);
        assert_eq!((always.recall(), always.fpr()), (1.0, 1.0));
        assert_eq!(always.early_histogram.values().sum::<usize>(), always.detected);
    }

    #[test]
    fn histogram_uses_first_matching_event() {
        let prompts = [10.0];
        let events = [event(9.0, 1000), event(10.5, 1300), event(11.0, 1500)];
        let score = score_detections(&prompts, &grid(80), &[], &events);
        assert_eq!(score.detected, 1);
        assert_eq!(
            score.early_histogram,
            BTreeMap::from([(PrefixTime::from_millis(1300), 1)])
        );
        assert_eq!(score.early_detections(PrefixTime::from_millis(1500)), 1);
    }

    #[test]
    fn table_layout() {
        let s = SessionScore {
            prompts: 30,
            detected: 28,
            negative_frames: 1000,
            false_positive_frames: 6,
            early_histogram: BTreeMap::from([(PrefixTime::from_millis(1300), 28)]),
        };
        let report = EvalReport {
            f1_by_prefix: BTreeMap::new(),
            window_len: PrefixTime::from_millis(1500),
            sessions: vec![("P1".into(), s.clone()), ("P2".into(), s)],
            full_window: None,
        };
        let table = report.to_table();
        assert!(
            table.contains("Face touching detected  28/30  28/30    56/60"),
            "{table}"
        );
        assert!(
            table.contains("False positives rate    0.60%  0.60%    0.60%"),
            "{table}"
        );
        let kv = report.to_toml().unwrap();
        assert!(kv.contains("recall = 0.9333333333333333"), "{kv}");
    }
}
