//! Deterministic random-number substreams.
//!
//! Every rollout owns one named substream per purpose (acceptance draws,
//! base-policy sampling, alternative-policy sampling, environment noise,
//! initial-state sampling), derived from a master seed and the rollout index
//! by a counter-based splitting rule. Replays of a trace under a different
//! decision rule therefore see the exact same uniform draws, and parallel
//! rollouts never share generator state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is consumed for. The discriminant is part of the
/// splitting rule; reordering variants changes every derived stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Acceptance = 1,
    BaseAction = 2,
    AltAction = 3,
    EnvNoise = 4,
    InitState = 5,
}

/// SplitMix64 finalizer; a full-period mixer used here as a seed derivation
/// counter step.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the ChaCha seed for `(master, rollout, purpose)`.
fn derive_seed(master: u64, rollout: u64, purpose: StreamPurpose) -> [u8; 32] {
    let mut counter = master;
    let a = splitmix64(&mut counter);
    let mut counter = counter ^ rollout.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let b = splitmix64(&mut counter);
    let mut counter = counter ^ (purpose as u64).wrapping_mul(0x8CB9_2BA7_2F3D_8DD7);
    let c = splitmix64(&mut counter);
    let d = splitmix64(&mut counter);
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&a.to_le_bytes());
    seed[8..16].copy_from_slice(&b.to_le_bytes());
    seed[16..24].copy_from_slice(&c.to_le_bytes());
    seed[24..32].copy_from_slice(&d.to_le_bytes());
    seed
}

/// One seeded generator for a named purpose.
pub fn substream(master: u64, rollout: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(master, rollout, purpose))
}

/// The full set of named substreams owned by a single rollout.
#[derive(Debug, Clone)]
pub struct RolloutStreams {
    pub acceptance: ChaCha8Rng,
    pub base_action: ChaCha8Rng,
    pub alt_action: ChaCha8Rng,
    pub env_noise: ChaCha8Rng,
    pub init_state: ChaCha8Rng,
}

impl RolloutStreams {
    pub fn derive(master: u64, rollout: u64) -> Self {
        RolloutStreams {
            acceptance: substream(master, rollout, StreamPurpose::Acceptance),
            base_action: substream(master, rollout, StreamPurpose::BaseAction),
            alt_action: substream(master, rollout, StreamPurpose::AltAction),
            env_noise: substream(master, rollout, StreamPurpose::EnvNoise),
            init_state: substream(master, rollout, StreamPurpose::InitState),
        }
    }
}
