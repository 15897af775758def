//! Shared fixtures for the pipeline benchmarks.

use std::collections::BTreeMap;

use facetouch::dataset::{protocol_manifest, session_log, synth_trials, SessionPlan, SynthConfig};
use facetouch::ensemble::{train_ensemble, TrainOptions};
use facetouch::{Hyperparams, PrefixSchedule, PromptLog, Result, TemporalEnsemble, TrialRecord};

/// The full 366-trial protocol, synthesized.
pub fn trials(seed: u64) -> Result<Vec<TrialRecord>> {
    synth_trials(&protocol_manifest(seed), &SynthConfig::default(), seed)
}

/// An ensemble with `trees` trees per instant, small enough to train quickly.
pub fn ensemble(trials: &[TrialRecord], trees: usize, seed: u64) -> Result<TemporalEnsemble> {
    let schedule = PrefixSchedule::default();
    let hp = Hyperparams {
        n_estimators: trees,
        ..Hyperparams::default()
    };
    let table: BTreeMap<_, _> = schedule.instants().iter().map(|&t| (t, hp)).collect();
    train_ensemble(trials, &schedule, &table, &TrainOptions::new(seed))
}

/// A session log of `secs` seconds with one prompt per 20 s.
pub fn session(secs: f64, seed: u64) -> Result<PromptLog> {
    let plan = SessionPlan {
        duration: secs,
        prompts: (secs / 20.0) as usize,
        ..SessionPlan::default()
    };
    let mut rng = facetouch::seeded_rng(seed);
    session_log(&plan, &SynthConfig::default(), &mut rng)
}
