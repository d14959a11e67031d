//! Deterministic pseudo-random numbers for seeded experiments.
//!
//! SplitMix64 (Steele, Lea, Flood 2014): a counter-based generator with a
//! 64-bit state and a fixed finalizer. Streams are reproducible bit-for-bit
//! across platforms, and `fork` derives statistically independent child
//! streams from a parent seed, which is how parallel workers get disjoint
//! deterministic sequences.

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Child generator for work item `index`, independent of calls made on `self`.
    pub fn fork(&self, index: u64) -> Self {
        let mut mixer =
            SplitMix64::new(self.state ^ 0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
        let s = mixer.next_u64();
        SplitMix64::new(s)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller.
    pub fn gaussian(&mut self) -> f64 {
        let mut u = self.next_f64();
        if u == 0.0 {
            u = f64::MIN_POSITIVE;
        }
        let v = self.next_f64();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}
