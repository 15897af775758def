use rand::seq::SliceRandom;

use super::{Activity, Behavior, FacialPart, Manner, Placement, Side, TrialStub};
use crate::derive_seed;
use crate::rng::seeded;

pub const SESSIONS: u8 = 3;
pub const PARTS_PER_SESSION: usize = 9;
pub const TOUCHES_PER_PART: usize = 8;
pub const TRIALS_PER_ACTIVITY: usize = 10;

/// The eight touches of one part: manners alternate, and symmetric parts
/// put the first four on the left and the rest on the right.
fn part_block(part: FacialPart) -> Vec<(Side, Manner)> {
    (0..TOUCHES_PER_PART)
        .map(|i| {
            let side = match (part.is_symmetric(), i < TOUCHES_PER_PART / 2) {
                (false, _) => Side::Center,
                (true, true) => Side::Left,
                (true, false) => Side::Right,
            };
            let manner = if i % 2 == 0 {
                Manner::Transient
            } else {
                Manner::Lingering
            };
            (side, manner)
        })
        .collect()
}

/// Trial stubs of the full collection protocol for one participant, in
/// collection order.
///
/// Each of three sessions (one per hand placement) touches every facial part
/// eight times in a part order shuffled per session, then performs each
/// no-touch activity ten times: `3 × (9 × 8 + 5 × 10) = 366` stubs.
pub fn protocol_manifest(seed: u64) -> Vec<TrialStub> {
    let mut stubs = Vec::with_capacity(366);
    for session in 1..=SESSIONS {
        let mut rng = seeded(derive_seed(seed, session as u64));
        let placement = Placement::for_session(session).expect("session within protocol");
        let stub = |behavior| TrialStub {
            user_id: format!("u{seed}"),
            session,
            placement,
            behavior,
        };

        let mut parts = FacialPart::ALL.to_vec();
        parts.shuffle(&mut rng);
        for part in parts {
            let mut block = part_block(part);
            block.shuffle(&mut rng);
            stubs.extend(
                block
                    .into_iter()
                    .map(|(side, manner)| stub(Behavior::Touch { part, side, manner })),
            );
        }

        let mut activities = Activity::ALL.to_vec();
        activities.shuffle(&mut rng);
        for activity in activities {
            stubs.extend((0..TRIALS_PER_ACTIVITY).map(|_| stub(Behavior::NoTouch { activity })));
        }
    }
    stubs
}
