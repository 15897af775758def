//! Parametric accelerometer traces.
//!
//! Touch motion, as a function of time `τ` since onset:
//!
//! - X ramps from the placement's rest value toward `x_top` (≈ +1 g, the
//!   forearm pointing up) along a smoothstep over `raise` seconds.
//! - Y carries a Gaussian bump early in the raise, then settles.
//! - Z settles to a level set by the facial part, shifted by the side.
//! - Transient touches add a brief X dip after arrival (the retract);
//!   lingering touches hold still with a faint tremor.
//!
//! No-touch activities are periodic or jittery templates with a random
//! phase. Every trace gets i.i.d. Gaussian noise on each axis.
//!
//! Session logs chain activity segments. After each prompt and a reaction
//! latency the hand fades from its activity to the placement's rest pose,
//! stays still briefly, runs the touch motion, and fades back.

use std::f64::consts::TAU;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Activity, Behavior, FacialPart, Manner, Placement, Prompt, PromptLog, Side, TrialRecord, TrialStub};
use crate::rng::seeded;
use crate::signal::{samples_for, Sample, Window, DEFAULT_RATE, DEFAULT_WINDOW_LEN};
use crate::{derive_seed, Error, Result};

/// Every generator parameter. Ranges are `[low, high]` and sampled
/// uniformly per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub rate: f64,
    pub window_len: f64,
    /// Standard deviation of the additive noise, in g.
    pub noise_sigma: f64,
    /// Maximum delay of touch onset after the trial window starts, in s.
    pub onset_jitter: f64,
    pub touch: TouchConfig,
    pub activity: ActivityConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rate: DEFAULT_RATE,
            window_len: DEFAULT_WINDOW_LEN,
            noise_sigma: 0.05,
            onset_jitter: 0.2,
            touch: TouchConfig::default(),
            activity: ActivityConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TouchConfig {
    pub rest_high: [f64; 3],
    pub rest_mid: [f64; 3],
    pub rest_low: [f64; 3],
    /// Duration of the raise toward the face, in s.
    pub raise: [f64; 2],
    pub x_top: [f64; 2],
    pub y_peak: [f64; 2],
    /// Center of the Y bump as a fraction of the raise.
    pub y_peak_at: f64,
    pub y_peak_width: f64,
    pub y_end: f64,
    /// Final Z level per facial part, in `FacialPart::ALL` order.
    pub part_z: [f64; 9],
    /// Z shift of left (negative) and right (positive) touches.
    pub side_offset: f64,
    pub retract_depth: f64,
    /// Delay of the retract dip after the raise completes, in s.
    pub retract_delay: f64,
    pub retract_width: f64,
    pub tremor: f64,
    /// Time spent at the face in session logs before returning, in s.
    pub session_hold_transient: [f64; 2],
    pub session_hold_lingering: [f64; 2],
    /// Fade from background activity to the rest pose, in s.
    pub settle: f64,
    /// Time at rest between the settle and onset, in s.
    pub still: f64,
    /// Fade back to background activity after a touch, in s.
    pub return_duration: f64,
}

impl Default for TouchConfig {
    fn default() -> Self {
        TouchConfig {
            rest_high: [0.2, 0.1, 0.97],
            rest_mid: [-0.3, 0.2, 0.93],
            rest_low: [-0.85, 0.2, 0.48],
            raise: [0.72, 0.88],
            x_top: [0.92, 0.97],
            y_peak: [0.5, 0.8],
            y_peak_at: 0.3,
            y_peak_width: 0.12,
            y_end: 0.1,
            part_z: [0.8, 0.6, 0.4, 0.2, 0.0, -0.2, -0.4, -0.6, -0.8],
            side_offset: 0.05,
            retract_depth: 0.12,
            retract_delay: 0.25,
            retract_width: 0.15,
            tremor: 0.01,
            session_hold_transient: [0.5, 0.7],
            session_hold_lingering: [0.8, 1.2],
            settle: 0.3,
            still: 0.2,
            return_duration: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityConfig {
    pub jumping_jacks_freq: [f64; 2],
    pub jumping_jacks_amp: [f64; 2],
    pub typing_freq: [f64; 2],
    pub typing_amp: f64,
    pub gesture_freq: [f64; 2],
    pub gesture_amp: f64,
    pub flip_period: [f64; 2],
    pub flip_amp: f64,
    pub washing_freq: [f64; 2],
    pub washing_amp: f64,
}

impl Default for ActivityConfig {
    fn default() -> Self {
        ActivityConfig {
            jumping_jacks_freq: [1.5, 2.2],
            jumping_jacks_amp: [0.8, 1.0],
            typing_freq: [5.0, 9.0],
            typing_amp: 0.03,
            gesture_freq: [0.5, 1.2],
            gesture_amp: 0.25,
            flip_period: [1.2, 2.0],
            flip_amp: 0.4,
            washing_freq: [3.0, 4.0],
            washing_amp: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rate", self.rate),
            ("window_len", self.window_len),
            ("touch.y_peak_width", self.touch.y_peak_width),
            ("touch.retract_width", self.touch.retract_width),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("noise_sigma", self.noise_sigma),
            ("onset_jitter", self.onset_jitter),
            ("touch.settle", self.touch.settle),
            ("touch.still", self.touch.still),
            ("touch.return_duration", self.touch.return_duration),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        let ranges = [
            ("touch.raise", self.touch.raise),
            ("touch.x_top", self.touch.x_top),
            ("touch.y_peak", self.touch.y_peak),
            ("touch.session_hold_transient", self.touch.session_hold_transient),
            ("touch.session_hold_lingering", self.touch.session_hold_lingering),
            ("activity.jumping_jacks_freq", self.activity.jumping_jacks_freq),
            ("activity.jumping_jacks_amp", self.activity.jumping_jacks_amp),
            ("activity.typing_freq", self.activity.typing_freq),
            ("activity.gesture_freq", self.activity.gesture_freq),
            ("activity.flip_period", self.activity.flip_period),
            ("activity.washing_freq", self.activity.washing_freq),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument(format!("{name} must satisfy low <= high")));
            }
        }
        if self.touch.raise[0] <= 0.0 || self.activity.flip_period[0] <= 0.0 {
            return Err(Error::InvalidArgument("durations must be positive".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        samples_for(self.window_len, self.rate)
    }

    fn rest(&self, placement: Placement) -> [f64; 3] {
        match placement {
            Placement::High => self.touch.rest_high,
            Placement::Mid => self.touch.rest_mid,
            Placement::Low => self.touch.rest_low,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

fn bump(x: f64, center: f64, width: f64) -> f64 {
    let z = (x - center) / width;
    (-z * z).exp()
}

/// One realized touch: trajectory parameters drawn from the config.
#[derive(Debug, Clone)]
struct TouchMotion {
    rest: [f64; 3],
    raise: f64,
    x_top: f64,
    y_peak: f64,
    y_peak_at: f64,
    y_peak_width: f64,
    y_end: f64,
    z_end: f64,
    retract: Option<(f64, f64, f64)>,
    tremor: f64,
    tremor_phase: f64,
}

impl TouchMotion {
    fn draw<R: Rng + ?Sized>(
        cfg: &SynthConfig,
        placement: Placement,
        part: FacialPart,
        side: Side,
        manner: Manner,
        rng: &mut R,
    ) -> Self {
        let t = &cfg.touch;
        let part_index = FacialPart::ALL.iter().position(|p| *p == part).expect("listed part");
        let side_shift = match side {
            Side::Left => -t.side_offset,
            Side::Right => t.side_offset,
            Side::Center => 0.0,
        };
        let raise = uniform(rng, t.raise);
        let retract =
            (manner == Manner::Transient).then_some((t.retract_depth, raise + t.retract_delay, t.retract_width));
        TouchMotion {
            rest: cfg.rest(placement),
            raise,
            x_top: uniform(rng, t.x_top),
            y_peak: uniform(rng, t.y_peak),
            y_peak_at: t.y_peak_at,
            y_peak_width: t.y_peak_width,
            y_end: t.y_end,
            z_end: t.part_z[part_index] + side_shift,
            retract,
            tremor: if manner == Manner::Lingering { t.tremor } else { 0.0 },
            tremor_phase: uniform(rng, [0.0, TAU]),
        }
    }

    fn at(&self, tau: f64) -> [f64; 3] {
        let s = smoothstep(tau / self.raise);
        let [rx, ry, rz] = self.rest;
        let mut x = rx + (self.x_top - rx) * s;
        let y = ry + (self.y_end - ry) * s + self.y_peak * bump(tau, self.y_peak_at * self.raise, self.y_peak_width);
        let z = rz + (self.z_end - rz) * s;
        if let Some((depth, center, width)) = self.retract {
            x -= depth * bump(tau, center, width);
        }
        if tau > self.raise {
            x += self.tremor * (TAU * 8.0 * tau + self.tremor_phase).sin();
        }
        [x, y, z]
    }
}

/// A realized activity template with random frequencies and phase.
#[derive(Debug, Clone)]
struct ActivityWave {
    activity: Activity,
    freq: [f64; 3],
    amp: f64,
    phase: [f64; 3],
}

impl ActivityWave {
    fn draw<R: Rng + ?Sized>(cfg: &ActivityConfig, activity: Activity, rng: &mut R) -> Self {
        let phase = [
            uniform(rng, [0.0, TAU]),
            uniform(rng, [0.0, TAU]),
            uniform(rng, [0.0, TAU]),
        ];
        let (freq, amp) = match activity {
            Activity::JumpingJacks => {
                let f = uniform(rng, cfg.jumping_jacks_freq);
                ([f; 3], uniform(rng, cfg.jumping_jacks_amp))
            }
            Activity::Typing => (
                [
                    uniform(rng, cfg.typing_freq),
                    uniform(rng, cfg.typing_freq),
                    uniform(rng, cfg.typing_freq),
                ],
                cfg.typing_amp,
            ),
            Activity::SpeakingGesturing => (
                [
                    uniform(rng, cfg.gesture_freq),
                    uniform(rng, cfg.gesture_freq),
                    uniform(rng, cfg.gesture_freq),
                ],
                cfg.gesture_amp,
            ),
            Activity::FlippingMagazines => ([1.0 / uniform(rng, cfg.flip_period); 3], cfg.flip_amp),
            Activity::WashingHands => {
                let f = uniform(rng, cfg.washing_freq);
                ([f; 3], cfg.washing_amp)
            }
        };
        ActivityWave {
            activity,
            freq,
            amp,
            phase,
        }
    }

    fn at(&self, t: f64) -> [f64; 3] {
        let w = |axis: usize| TAU * self.freq[axis] * t + self.phase[axis];
        let a = self.amp;
        match self.activity {
            // X swings symmetrically about zero at the jumping frequency.
            Activity::JumpingJacks => [
                a * w(0).sin(),
                -0.3 + 0.6 * a * (w(0) + 1.0).sin(),
                0.2 + 0.5 * a * w(0).cos(),
            ],
            Activity::Typing => [-0.1 + a * w(0).sin(), 0.05 + a * w(1).sin(), 0.99 + a * w(2).sin()],
            Activity::SpeakingGesturing => [a * w(0).sin(), 0.35 + a * w(1).sin(), 0.85 + 0.5 * a * w(2).sin()],
            Activity::FlippingMagazines => {
                // A page flip is a short wrist rotation once per period.
                let period = 1.0 / self.freq[0];
                let offset = self.phase[0] / TAU * period;
                let k = ((t - offset) / period).round();
                let flip = bump(t, offset + k * period, 0.12);
                [-0.2 + 0.2 * a * flip, 0.3 + a * flip, 0.9 - 0.75 * a * flip]
            }
            Activity::WashingHands => [
                -0.5 + 0.3 * a * w(0).sin(),
                0.1 + a * (w(0) + self.phase[1]).sin(),
                0.8 + 0.5 * a * (w(0) + self.phase[2]).sin(),
            ],
        }
    }
}

struct Noise(Option<Normal<f64>>);

impl Noise {
    fn new(sigma: f64) -> Result<Self> {
        if sigma == 0.0 {
            return Ok(Noise(None));
        }
        Normal::new(0.0, sigma)
            .map(|n| Noise(Some(n)))
            .map_err(|e| Error::InvalidArgument(format!("noise_sigma: {e}")))
    }

    fn sample<R: Rng + ?Sized>(&self, t: f64, [x, y, z]: [f64; 3], rng: &mut R) -> Sample {
        match &self.0 {
            None => Sample::new(t, x, y, z),
            Some(n) => Sample::new(t, x + n.sample(rng), y + n.sample(rng), z + n.sample(rng)),
        }
    }
}

/// Synthesizes the samples of one trial. Equal stubs and RNG states give
/// equal records.
pub fn synth_trial<R: Rng + ?Sized>(stub: &TrialStub, cfg: &SynthConfig, rng: &mut R) -> Result<TrialRecord> {
    cfg.validate()?;
    stub.behavior.validate()?;
    let noise = Noise::new(cfg.noise_sigma)?;
    let n = cfg.window_samples();
    let samples: Vec<Sample> = match stub.behavior {
        Behavior::Touch { part, side, manner } => {
            let motion = TouchMotion::draw(cfg, stub.placement, part, side, manner, rng);
            let delay = uniform(rng, [0.0, cfg.onset_jitter]);
            (0..n)
                .map(|i| {
                    let t = i as f64 / cfg.rate;
                    noise.sample(t, motion.at(t - delay), rng)
                })
                .collect()
        }
        Behavior::NoTouch { activity } => {
            let wave = ActivityWave::draw(&cfg.activity, activity, rng);
            let t0 = uniform(rng, [0.0, 10.0]);
            (0..n)
                .map(|i| {
                    let t = i as f64 / cfg.rate;
                    noise.sample(t, wave.at(t0 + t), rng)
                })
                .collect()
        }
    };
    Ok(TrialRecord {
        user_id: stub.user_id.clone(),
        session: stub.session,
        placement: stub.placement,
        behavior: stub.behavior,
        window: Window::new(0.0, cfg.rate, samples),
    })
}

/// Synthesizes every stub, trial `i` from its own stream of `seed`.
pub fn synth_trials(stubs: &[TrialStub], cfg: &SynthConfig, seed: u64) -> Result<Vec<TrialRecord>> {
    stubs
        .par_iter()
        .enumerate()
        .map(|(i, stub)| synth_trial(stub, cfg, &mut seeded(derive_seed(seed, i as u64))))
        .collect()
}

/// Shape of one participant's free-living session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionPlan {
    pub user_id: String,
    /// Session length in s.
    pub duration: f64,
    pub prompts: usize,
    /// Minimum spacing between prompts, in s.
    pub min_gap: f64,
    /// Delay from prompt until the hand leaves its activity, in s.
    pub reaction: [f64; 2],
    /// Length of each background activity segment, in s.
    pub segment_len: [f64; 2],
    /// Cross-fade between consecutive activity segments, in s.
    pub crossfade: f64,
}

impl Default for SessionPlan {
    fn default() -> Self {
        SessionPlan {
            user_id: "p1".into(),
            duration: 1800.0,
            prompts: 30,
            min_gap: 10.0,
            reaction: [0.3, 0.7],
            segment_len: [20.0, 90.0],
            crossfade: 1.0,
        }
    }
}

// Prompts keep this far from the ends of the stream, in s.
const PROMPT_LEAD: f64 = 5.0;
const PROMPT_TAIL: f64 = 8.0;

struct Segment {
    end: f64,
    wave: ActivityWave,
}

struct SessionTouch {
    onset: f64,
    motion: TouchMotion,
    fade_in: (f64, f64),
    fade_out: (f64, f64),
}

impl SessionTouch {
    fn weight(&self, t: f64) -> f64 {
        if t <= self.fade_in.0 || t >= self.fade_out.1 {
            0.0
        } else if t < self.fade_in.1 {
            smoothstep((t - self.fade_in.0) / (self.fade_in.1 - self.fade_in.0))
        } else if t <= self.fade_out.0 {
            1.0
        } else {
            1.0 - smoothstep((t - self.fade_out.0) / (self.fade_out.1 - self.fade_out.0))
        }
    }
}

fn background(segments: &[Segment], crossfade: f64, t: f64) -> [f64; 3] {
    let k = segments.partition_point(|s| s.end <= t).min(segments.len() - 1);
    let here = segments[k].wave.at(t);
    if k + 1 < segments.len() && crossfade > 0.0 {
        let boundary = segments[k].end;
        let u = (t - (boundary - crossfade / 2.0)) / crossfade;
        if u > 0.0 {
            let next = segments[k + 1].wave.at(t);
            let b = smoothstep(u);
            return [0, 1, 2].map(|a| (1.0 - b) * here[a] + b * next[a]);
        }
    }
    if k > 0 && crossfade > 0.0 {
        let boundary = segments[k - 1].end;
        let u = (t - (boundary - crossfade / 2.0)) / crossfade;
        if u < 1.0 {
            let prev = segments[k - 1].wave.at(t);
            let b = smoothstep(u);
            return [0, 1, 2].map(|a| (1.0 - b) * prev[a] + b * here[a]);
        }
    }
    here
}

/// Generates a continuous session with prompted touches.
///
/// Prompt times are uniform subject to the minimum gap. Each prompt draws a
/// facial part, side, manner and hand placement. Touch onset follows the
/// prompt by the reaction latency plus the settle and still times.
pub fn session_log<R: Rng + ?Sized>(plan: &SessionPlan, cfg: &SynthConfig, rng: &mut R) -> Result<PromptLog> {
    cfg.validate()?;
    let usable = plan.duration - PROMPT_LEAD - PROMPT_TAIL;
    let slack = usable - plan.prompts.saturating_sub(1) as f64 * plan.min_gap;
    if !(plan.duration.is_finite() && slack >= 0.0 && plan.min_gap >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{} prompts {} s apart do not fit in {} s",
            plan.prompts, plan.min_gap, plan.duration
        )));
    }
    if !(plan.reaction[0] >= 0.0 && plan.reaction[0] <= plan.reaction[1])
        || !(plan.segment_len[0] > 0.0 && plan.segment_len[0] <= plan.segment_len[1])
        || plan.crossfade.is_nan()
        || plan.crossfade < 0.0
    {
        return Err(Error::InvalidArgument("invalid participant timing ranges".into()));
    }
    let noise = Noise::new(cfg.noise_sigma)?;

    let mut segments = Vec::new();
    let mut end = 0.0;
    while end < plan.duration {
        let activity = *Activity::ALL.choose(rng).expect("activities listed");
        end += uniform(rng, plan.segment_len);
        segments.push(Segment {
            end,
            wave: ActivityWave::draw(&cfg.activity, activity, rng),
        });
    }

    let mut offsets: Vec<f64> = (0..plan.prompts).map(|_| uniform(rng, [0.0, slack])).collect();
    offsets.sort_by(f64::total_cmp);
    let mut prompts = Vec::with_capacity(plan.prompts);
    let mut touches = Vec::with_capacity(plan.prompts);
    for (i, offset) in offsets.into_iter().enumerate() {
        // Millisecond resolution keeps the prompt file exact.
        let t = ((PROMPT_LEAD + offset + i as f64 * plan.min_gap) * 1000.0).round() / 1000.0;
        let part = *FacialPart::ALL.choose(rng).expect("parts listed");
        let side = if part.is_symmetric() {
            *[Side::Left, Side::Right].choose(rng).expect("two sides")
        } else {
            Side::Center
        };
        let manner = *[Manner::Transient, Manner::Lingering].choose(rng).expect("two manners");
        let placement = *Placement::ALL.choose(rng).expect("placements listed");
        let motion = TouchMotion::draw(cfg, placement, part, side, manner, rng);
        let leave = t + uniform(rng, plan.reaction);
        let onset = leave + cfg.touch.settle + cfg.touch.still;
        let hold = uniform(
            rng,
            match manner {
                Manner::Transient => cfg.touch.session_hold_transient,
                Manner::Lingering => cfg.touch.session_hold_lingering,
            },
        );
        let back = onset + motion.raise + hold;
        touches.push(SessionTouch {
            onset,
            fade_in: (leave, leave + cfg.touch.settle),
            fade_out: (back, back + cfg.touch.return_duration),
            motion,
        });
        prompts.push(Prompt { t, part });
    }

    let n = samples_for(plan.duration, cfg.rate);
    let mut next_touch = 0;
    let mut stream = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / cfg.rate;
        while next_touch < touches.len() && touches[next_touch].fade_out.1 <= t {
            next_touch += 1;
        }
        let mut value = background(&segments, plan.crossfade, t);
        if let Some(touch) = touches.get(next_touch) {
            let w = touch.weight(t);
            if w > 0.0 {
                let m = touch.motion.at(t - touch.onset);
                value = [0, 1, 2].map(|a| (1.0 - w) * value[a] + w * m[a]);
            }
        }
        stream.push(noise.sample(t, value, rng));
    }
    PromptLog::new(stream, prompts)
}
