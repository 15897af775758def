//! Frame-by-frame detection on a uniform stream.
//!
//! A candidate frame begins at every stride boundary. It is classified at
//! each prefix instant as soon as enough samples have arrived, and finalized
//! the moment [`early_decide`] settles its vote. Positive frames become
//! [`DetectionEvent`]s unless they start within the refractory period of the
//! previous event.
//!
//! [`StreamDetector`] consumes one sample at a time; [`detect_stream`]
//! classifies all candidates of a recorded stream independently and then
//! replays them in decision order. Both produce the same events.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{early_decide, Decision, PrefixTime, TemporalEnsemble};
use crate::features::featurize;
use crate::signal::{samples_for, FrameSchedule, Sample, Window};
use crate::{Error, Label, Result};

/// Seconds after an event's window start during which further candidates
/// are suppressed.
pub const DEFAULT_REFRACTORY: f64 = 3.0;

/// The final classification of one candidate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDecision {
    pub start_index: usize,
    pub window_start_t: f64,
    /// Prefix instant at which the vote was settled.
    pub decided_at: PrefixTime,
    /// Absolute index of the sample that settled the vote.
    pub decided_index: usize,
    pub decision: Label,
    /// Weighted vote sum over the instants evaluated so far.
    pub score: f64,
    pub votes: BTreeMap<PrefixTime, Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub window_start_t: f64,
    #[serde(with = "seconds")]
    pub decided_at_t: PrefixTime,
    pub score: f64,
    pub votes: BTreeMap<PrefixTime, Label>,
}

mod seconds {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::PrefixTime;

    pub fn serialize<S: Serializer>(t: &PrefixTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(t.secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PrefixTime, D::Error> {
        PrefixTime::from_secs(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl From<&FrameDecision> for DetectionEvent {
    fn from(d: &FrameDecision) -> Self {
        DetectionEvent {
            window_start_t: d.window_start_t,
            decided_at_t: d.decided_at,
            score: d.score,
            votes: d.votes.clone(),
        }
    }
}

/// Suppresses positive frames starting within the refractory period of the
/// last admitted event, on either side of it.
#[derive(Debug, Clone)]
pub struct RefractoryGate {
    samples: usize,
    last: Option<usize>,
}

impl RefractoryGate {
    pub fn new(refractory: f64, rate: f64) -> Self {
        RefractoryGate {
            samples: samples_for(refractory, rate),
            last: None,
        }
    }

    pub fn admit(&mut self, start_index: usize) -> bool {
        if let Some(last) = self.last {
            if start_index.abs_diff(last) < self.samples {
                return false;
            }
        }
        self.last = Some(start_index);
        true
    }
}

/// Applies the refractory rule to decisions already in decision order.
pub fn events_from_decisions(decisions: &[FrameDecision], refractory: f64, rate: f64) -> Vec<DetectionEvent> {
    let mut gate = RefractoryGate::new(refractory, rate);
    decisions
        .iter()
        .filter(|d| d.decision.is_positive() && gate.admit(d.start_index))
        .map(DetectionEvent::from)
        .collect()
}

fn check_geometry(ensemble: &TemporalEnsemble, frames: &FrameSchedule) -> Result<Vec<usize>> {
    frames.validate()?;
    if (ensemble.rate - frames.rate).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "ensemble trained at {} Hz, stream is {} Hz",
            ensemble.rate, frames.rate
        )));
    }
    let counts: Vec<usize> = ensemble
        .schedule
        .instants()
        .iter()
        .map(|t| t.samples(frames.rate))
        .collect();
    if counts.last() != Some(&frames.window_samples()) {
        return Err(Error::InvalidArgument(format!(
            "last prefix instant {} differs from frame length {} s",
            ensemble.window_len(),
            frames.window_len
        )));
    }
    Ok(counts)
}

/// Votes cast by one candidate so far.
#[derive(Debug, Clone)]
struct Candidate {
    start: usize,
    start_t: f64,
    partial: Vec<(PrefixTime, Label)>,
}

impl Candidate {
    fn new(start: usize, start_t: f64) -> Self {
        Candidate {
            start,
            start_t,
            partial: Vec::new(),
        }
    }

    /// Casts the vote of instant `t` on `prefix` and checks for a decision.
    fn step(&mut self, ensemble: &TemporalEnsemble, t: PrefixTime, prefix: &[Sample]) -> Result<Option<FrameDecision>> {
        let features = featurize(prefix, t.secs())?;
        let vote = ensemble.predict_at(t, &features)?;
        self.partial.push((t, vote));
        match early_decide(&self.partial, &ensemble.weights)? {
            Decision::Pending => Ok(None),
            Decision::Decided(decision) => Ok(Some(FrameDecision {
                start_index: self.start,
                window_start_t: self.start_t,
                decided_at: t,
                decided_index: self.start + prefix.len() - 1,
                decision,
                score: super::partial_score(&self.partial, &ensemble.weights),
                votes: self.partial.iter().copied().collect(),
            })),
        }
    }
}

fn classify_from(
    ensemble: &TemporalEnsemble,
    counts: &[usize],
    samples: &[Sample],
    start: usize,
) -> Result<Option<FrameDecision>> {
    let mut candidate = Candidate::new(start, samples[0].t);
    for (&t, &count) in ensemble.schedule.instants().iter().zip(counts) {
        if count > samples.len() {
            break;
        }
        if let Some(decision) = candidate.step(ensemble, t, &samples[..count])? {
            return Ok(Some(decision));
        }
    }
    Ok(None)
}

/// Classifies one complete frame with early decision.
pub fn classify_frame(ensemble: &TemporalEnsemble, window: &Window) -> Result<FrameDecision> {
    let frames = FrameSchedule {
        window_len: ensemble.window_len().secs(),
        stride: ensemble.window_len().secs(),
        rate: window.rate,
    };
    let counts = check_geometry(ensemble, &frames)?;
    if window.len() != frames.window_samples() {
        return Err(Error::DimensionMismatch {
            expected: frames.window_samples(),
            got: window.len(),
        });
    }
    let decision =
        classify_from(ensemble, &counts, &window.samples, 0)?.expect("a complete frame always reaches a decision");
    Ok(decision)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Detections {
    /// Every settled candidate, in decision order.
    pub decisions: Vec<FrameDecision>,
    pub events: Vec<DetectionEvent>,
}

/// Runs detection over a recorded uniform stream.
///
/// Candidates are classified independently (in parallel), ordered by the
/// sample that settled them, then passed through the refractory gate.
/// Candidates too close to the end of the stream to settle are dropped.
pub fn detect_stream(
    stream: &[Sample],
    ensemble: &TemporalEnsemble,
    frames: &FrameSchedule,
    refractory: f64,
) -> Result<Detections> {
    let counts = check_geometry(ensemble, frames)?;
    let stride = frames.stride_samples();
    let starts: Vec<usize> = (0..stream.len()).step_by(stride).collect();
    let mut decisions: Vec<FrameDecision> = starts
        .par_iter()
        .map(|&start| classify_from(ensemble, &counts, &stream[start..], start))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    decisions.sort_by_key(|d| (d.decided_index, d.start_index));
    let events = events_from_decisions(&decisions, refractory, frames.rate);
    Ok(Detections { decisions, events })
}

/// Incremental detector: push samples as they arrive, drain results.
pub struct StreamDetector<'a> {
    ensemble: &'a TemporalEnsemble,
    counts: Vec<usize>,
    stride: usize,
    buffer: VecDeque<Sample>,
    base: usize,
    seen: usize,
    last_t: Option<f64>,
    pending: Vec<(Candidate, usize)>,
    gate: RefractoryGate,
    decisions: Vec<FrameDecision>,
    events: Vec<DetectionEvent>,
}

impl<'a> StreamDetector<'a> {
    pub fn new(ensemble: &'a TemporalEnsemble, frames: &FrameSchedule, refractory: f64) -> Result<Self> {
        let counts = check_geometry(ensemble, frames)?;
        Ok(StreamDetector {
            ensemble,
            counts,
            stride: frames.stride_samples(),
            buffer: VecDeque::new(),
            base: 0,
            seen: 0,
            last_t: None,
            pending: Vec::new(),
            gate: RefractoryGate::new(refractory, frames.rate),
            decisions: Vec::new(),
            events: Vec::new(),
        })
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        let index = self.seen;
        if !sample.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if self.last_t.is_some_and(|t| sample.t <= t) {
            return Err(Error::NonMonotone { index, t: sample.t });
        }
        self.last_t = Some(sample.t);
        self.buffer.push_back(sample);
        self.seen += 1;
        if index.is_multiple_of(self.stride) {
            self.pending.push((Candidate::new(index, sample.t), 0));
        }

        let buffer = self.buffer.make_contiguous();
        let mut settled = Vec::new();
        for (slot, (candidate, next)) in self.pending.iter_mut().enumerate() {
            let Some(&count) = self.counts.get(*next) else {
                continue;
            };
            if candidate.start + count != index + 1 {
                continue;
            }
            let t = self.ensemble.schedule.instants()[*next];
            *next += 1;
            let offset = candidate.start - self.base;
            if let Some(decision) = candidate.step(self.ensemble, t, &buffer[offset..offset + count])? {
                settled.push(slot);
                if decision.decision.is_positive() && self.gate.admit(decision.start_index) {
                    self.events.push(DetectionEvent::from(&decision));
                }
                self.decisions.push(decision);
            }
        }
        for slot in settled.into_iter().rev() {
            self.pending.remove(slot);
        }

        let keep_from = self.pending.first().map_or(self.seen, |(candidate, _)| candidate.start);
        while self.base < keep_from {
            self.buffer.pop_front();
            self.base += 1;
        }
        Ok(())
    }

    pub fn drain_events(&mut self) -> Vec<DetectionEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn drain_decisions(&mut self) -> Vec<FrameDecision> {
        std::mem::take(&mut self.decisions)
    }

    /// Candidates still waiting for samples.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }
}

/// Writes one JSON event per line.
pub fn write_event_log<W: Write>(mut writer: W, events: &[DetectionEvent]) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_event_log<R: BufRead>(reader: R) -> Result<Vec<DetectionEvent>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_suppresses_both_sides() {
        let mut gate = RefractoryGate::new(3.0, 100.0);
        assert!(gate.admit(1000));
        assert!(!gate.admit(1200));
        assert!(!gate.admit(975));
        assert!(gate.admit(1300));
        assert!(!gate.admit(1550));
    }

    #[test]
    fn event_json_shape() {
        let event = DetectionEvent {
            window_start_t: 10.25,
            decided_at_t: PrefixTime::from_millis(1300),
            score: 4.5,
            votes: BTreeMap::from([
                (PrefixTime::from_millis(1000), Label::Positive),
                (PrefixTime::from_millis(1100), Label::Negative),
            ]),
        };
        let mut buf = Vec::new();
        write_event_log(&mut buf, std::slice::from_ref(&event)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "{\"window_start_t\":10.25,\"decided_at_t\":1.3,\"score\":4.5,\"votes\":{\"1.0\":1,\"1.1\":-1}}\n"
        );
        assert_eq!(read_event_log(buf.as_slice()).unwrap(), vec![event]);
        assert!(matches!(
            read_event_log("{\"bad\":1}\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
