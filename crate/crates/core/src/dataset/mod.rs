//! Trial records, the data-collection protocol, synthetic traces and the
//! labeling rule for continuous session logs.

mod io;
mod manifest;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::signal::{Sample, Window};
use crate::{Error, Label, Result};

pub use io::{
    load_session, load_trials, read_prompts, read_trials, save_session, save_trials, write_prompts, write_trials,
    PROMPTS_FILE, STREAM_FILE, TRIALS_FORMAT,
};
pub use manifest::{protocol_manifest, PARTS_PER_SESSION, SESSIONS, TOUCHES_PER_PART, TRIALS_PER_ACTIVITY};
pub use synth::{session_log, synth_trial, synth_trials, ActivityConfig, SessionPlan, SynthConfig, TouchConfig};

/// Seconds after a prompt during which frames are labeled as touching.
pub const LABEL_INTERVAL: f64 = 3.0;

// Absorbs representation error in frame start times.
const TIME_EPS: f64 = 1e-9;

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $token)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($token => Ok($name::$variant),)+
                    other => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($name), " {:?}"),
                        other
                    ))),
                }
            }
        }
    };
}

token_enum! {
    /// Resting position of the hand before a touch.
    Placement { High => "high", Mid => "mid", Low => "low" }
}

token_enum! {
    FacialPart {
        Hair => "hair",
        Forehead => "forehead",
        Temple => "temple",
        Eye => "eye",
        Ear => "ear",
        Nose => "nose",
        Cheek => "cheek",
        Mouth => "mouth",
        Chin => "chin",
    }
}

token_enum! {
    Side { Left => "left", Right => "right", Center => "center" }
}

token_enum! {
    Manner { Transient => "transient", Lingering => "lingering" }
}

token_enum! {
    Activity {
        FlippingMagazines => "flipping-magazines",
        JumpingJacks => "jumping-jacks",
        Typing => "typing",
        SpeakingGesturing => "speaking-gesturing",
        WashingHands => "washing-hands",
    }
}

impl Placement {
    /// Placement used throughout protocol session `session` (1-based).
    pub fn for_session(session: u8) -> Result<Self> {
        match session {
            1 => Ok(Placement::High),
            2 => Ok(Placement::Mid),
            3 => Ok(Placement::Low),
            other => Err(Error::OutOfRange(format!("session {other} not in 1..=3"))),
        }
    }
}

impl FacialPart {
    /// Parts with a left and a right instance.
    pub fn is_symmetric(self) -> bool {
        matches!(
            self,
            FacialPart::Temple | FacialPart::Eye | FacialPart::Ear | FacialPart::Cheek
        )
    }
}

/// What the participant did during a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    Touch {
        part: FacialPart,
        side: Side,
        manner: Manner,
    },
    NoTouch {
        activity: Activity,
    },
}

impl Behavior {
    pub fn label(&self) -> Label {
        Label::from_sign(matches!(self, Behavior::Touch { .. }))
    }

    pub fn validate(&self) -> Result<()> {
        if let Behavior::Touch { part, side, .. } = *self {
            let ok = if part.is_symmetric() {
                side != Side::Center
            } else {
                side == Side::Center
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("side {side} is invalid for {part}")));
            }
        }
        Ok(())
    }
}

/// Labels and setting of one trial, without samples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialStub {
    pub user_id: String,
    pub session: u8,
    pub placement: Placement,
    pub behavior: Behavior,
}

impl TrialStub {
    pub fn label(&self) -> Label {
        self.behavior.label()
    }
}

/// One labeled 1.5 s trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub user_id: String,
    pub session: u8,
    pub placement: Placement,
    pub behavior: Behavior,
    pub window: Window,
}

impl TrialRecord {
    pub fn label(&self) -> Label {
        self.behavior.label()
    }

    pub fn stub(&self) -> TrialStub {
        TrialStub {
            user_id: self.user_id.clone(),
            session: self.session,
            placement: self.placement,
            behavior: self.behavior,
        }
    }

    /// Checks label consistency and that the window has `expected` samples.
    pub fn validate(&self, expected: usize) -> Result<()> {
        if !(1..=3).contains(&self.session) {
            return Err(Error::OutOfRange(format!("session {} not in 1..=3", self.session)));
        }
        self.behavior.validate()?;
        if self.window.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.window.len(),
            });
        }
        Ok(())
    }
}

/// A prompted touch in a session log: the second vibration and its target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prompt {
    pub t: f64,
    pub part: FacialPart,
}

/// A continuous session stream with its prompt times.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptLog {
    pub stream: Vec<Sample>,
    pub prompts: Vec<Prompt>,
}

impl PromptLog {
    pub fn new(stream: Vec<Sample>, prompts: Vec<Prompt>) -> Result<Self> {
        let log = PromptLog { stream, prompts };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        let (Some(first), Some(last)) = (self.stream.first(), self.stream.last()) else {
            return Err(Error::Empty("session stream"));
        };
        for pair in self.prompts.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(Error::InvalidArgument(format!(
                    "prompt at {} s does not follow {} s",
                    pair[1].t, pair[0].t
                )));
            }
        }
        if let Some(p) = self.prompts.iter().find(|p| !(p.t >= first.t && p.t <= last.t)) {
            return Err(Error::OutOfRange(format!(
                "prompt at {} s outside stream span [{}, {}] s",
                p.t, first.t, last.t
            )));
        }
        Ok(())
    }

    pub fn prompt_times(&self) -> Vec<f64> {
        self.prompts.iter().map(|p| p.t).collect()
    }
}

/// Whether a frame starting at `start` lies in the label interval of the
/// prompt at `prompt`: `[prompt, prompt + 3 s)`.
pub fn in_label_interval(start: f64, prompt: f64) -> bool {
    start >= prompt - TIME_EPS && start < prompt + LABEL_INTERVAL - TIME_EPS
}

/// Index of the first prompt whose label interval contains `start`.
pub fn matching_prompt(prompts: &[f64], start: f64) -> Option<usize> {
    prompts.iter().position(|&p| in_label_interval(start, p))
}

/// Labels each frame `+1` iff its start lies in some prompt's interval.
pub fn label_log(log: &PromptLog, frames: &[Window]) -> Result<Vec<Label>> {
    log.validate()?;
    let times = log.prompt_times();
    Ok(frames
        .iter()
        .map(|w| Label::from_sign(matching_prompt(&times, w.start_t).is_some()))
        .collect())
}
