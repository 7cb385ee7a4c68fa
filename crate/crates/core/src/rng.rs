//! Counter-keyed random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose of a substream within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Covariance = 1,
    Training = 2,
    TestH0 = 3,
    TestH1 = 4,
    Calibration = 5,
    Resample = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, trial, role)`; draws never depend on
/// scheduling order.
pub fn substream(seed: u64, trial: u64, role: Role) -> ChaCha8Rng {
    let key = splitmix(splitmix(splitmix(seed) ^ trial) ^ role as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(trial);
    rng
}
