//! Counter-based pseudo-random numbers.
//!
//! The generator is Philox-2x64 with 10 rounds (Salmon et al., Random123).
//! Each draw is a pure function of `(key, stream, position)`: the 128-bit
//! counter is `(position, stream)` and the key is derived from the seed. The
//! block function is a bijection on counters for a fixed key, so distinct
//! streams never share an output block, and results do not depend on how work
//! is scheduled across threads.

use crate::error::{Error, Result};

const PHILOX_M: u64 = 0xD2B7_4407_B1CE_6E93;
const PHILOX_W: u64 = 0x9E37_79B9_7F4A_7C15;
const ROUNDS: usize = 10;

/// Philox-2x64-10 block function.
pub fn philox2x64(counter: [u64; 2], key: u64) -> [u64; 2] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..ROUNDS {
        if round > 0 {
            k = k.wrapping_add(PHILOX_W);
        }
        let prod = u128::from(PHILOX_M) * u128::from(ctr[0]);
        let hi = (prod >> 64) as u64;
        let lo = prod as u64;
        ctr = [hi ^ k ^ ctr[1], lo];
    }
    ctr
}

/// Deterministic random stream identified by `(seed, stream)`.
///
/// Cloning an `Rng` forks an identical copy at the same position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    stream: u64,
    position: u64,
    spare: Option<u64>,
    spare_normal: Option<u64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Rng {
            seed,
            stream,
            position: 0,
            spare: None,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 128-bit blocks consumed so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Independent sub-stream for task `id`, derived from this generator's
    /// seed and stream. Does not advance `self`.
    pub fn substream(&self, id: u64) -> Rng {
        let mixed = philox2x64([id, self.stream], self.seed ^ 0x5851_F42D_4C95_7F2D);
        Rng::with_stream(self.seed, mixed[0])
    }

    pub fn next_u64(&mut self) -> u64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let block = philox2x64([self.position, self.stream], self.seed);
        self.position = self.position.wrapping_add(1);
        self.spare = Some(block[1]);
        block[0]
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Log-uniform draw in `[lo, hi)`, both positive.
    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.uniform_range(lo.ln(), hi.ln()).exp()
    }

    /// Standard normal draw via the Box–Muller transform. Pairs are generated
    /// together and the second value is kept for the next call.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(bits) = self.spare_normal.take() {
            return f64::from_bits(bits);
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some((r * theta.sin()).to_bits());
        r * theta.cos()
    }
}

/// `n` i.i.d. draws from `N(mean, std²)`.
pub fn sample_gaussian_vector(rng: &mut Rng, n: usize, mean: f64, std: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::invalid("std", format!("must be finite and >= 0, got {std}")));
    }
    if !mean.is_finite() {
        return Err(Error::invalid("mean", "must be finite"));
    }
    Ok((0..n).map(|_| mean + std * rng.standard_normal()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        // Random123 kat_vectors, philox2x64 with 10 rounds.
        assert_eq!(
            philox2x64([0, 0], 0),
            [0xca00a0459843d731, 0x66c24222c9a845b5]
        );
        assert_eq!(
            philox2x64([u64::MAX, u64::MAX], u64::MAX),
            [0x65b021d60cd8310f, 0x4d02f3222f86df20]
        );
        assert_eq!(
            philox2x64([0x243f6a8885a308d3, 0x13198a2e03707344], 0xa4093822299f31d0),
            [0x0a5e742c2997341c, 0xb0f883d38000de5d]
        );
    }

    #[test]
    fn zero_std_is_constant() {
        let mut rng = Rng::new(3);
        assert_eq!(sample_gaussian_vector(&mut rng, 3, 0.0, 0.0).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn negative_std_rejected() {
        let mut rng = Rng::new(3);
        assert!(matches!(
            sample_gaussian_vector(&mut rng, 3, 0.0, -1.0),
            Err(Error::InvalidParameter { name: "std", .. })
        ));
        assert!(sample_gaussian_vector(&mut rng, 0, 0.0, 1.0).is_err());
    }

    #[test]
    fn same_seed_same_vector() {
        let a = sample_gaussian_vector(&mut Rng::new(11), 17, 0.5, 2.0).unwrap();
        let b = sample_gaussian_vector(&mut Rng::new(11), 17, 0.5, 2.0).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn gaussian_moments() {
        let n = 100_000;
        let v = sample_gaussian_vector(&mut Rng::new(7), n, 0.0, 1.0).unwrap();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn substreams_differ_and_are_stable() {
        let root = Rng::new(42);
        let mut a = root.substream(1);
        let mut b = root.substream(2);
        let mut a2 = root.substream(1);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xa2: Vec<u64> = (0..8).map(|_| a2.next_u64()).collect();
        assert_eq!(xa, xa2);
        assert_ne!(xa, xb);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = Rng::new(0);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            let v = rng.uniform_open0();
            assert!(v > 0.0 && v <= 1.0);
        }
    }
}
