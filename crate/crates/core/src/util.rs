use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent 64-bit seed for sub-stream `stream` of `seed`.
///
/// SplitMix64 finalizer over both inputs; used wherever work items (trees,
/// folds, participants) need their own generator so results do not depend
/// on evaluation order.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a string-keyed work item such as a participant id (FNV-1a, then mixed).
pub fn seed_for_label(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix_seed(seed, h)
}

pub(crate) fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mean and population standard deviation; `(0, 0)` for empty input.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_seeds_differ_per_stream() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(0, 1), mix_seed(1, 0));
        assert_eq!(mix_seed(42, 7), mix_seed(42, 7));
        assert_ne!(seed_for_label(3, "P01"), seed_for_label(3, "P02"));
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[0.0, 1.0, 2.0]);
        assert!((m - 1.0).abs() < 1e-15);
        assert!((s - libm::sqrt(2.0 / 3.0)).abs() < 1e-15);
    }
}
