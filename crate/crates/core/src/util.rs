use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Platform-independent RNG used for every seeded operation in the crate.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Formats a float with 9 significant digits (scientific notation).
///
/// Nine digits are enough to round-trip any `f32` exactly and keep text
/// exports diff-able.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_round_trips_f32() {
        for &x in &[0.1f32, -3.402_823_5e38, 1.0e-30, 7.123_456_7] {
            let s = sig9(x as f64);
            assert_eq!(s.parse::<f64>().unwrap() as f32, x);
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
