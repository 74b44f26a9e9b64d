//! Counter-based deterministic random streams.
//!
//! Every draw is a pure function of (seed, counter), so noise fields and
//! initializations are reproducible regardless of evaluation order or
//! worker count.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless stream: the value at any counter can be queried directly.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn u64_at(&self, counter: u64) -> u64 {
        splitmix64(self.seed ^ splitmix64(counter.wrapping_mul(GOLDEN) ^ 0x5851_F42D_4C95_7F2D))
    }

    /// Uniform in (0, 1]; never zero, safe as a log argument.
    pub fn unit_at(&self, counter: u64) -> f64 {
        (((self.u64_at(counter) >> 11) as f64) + 1.0) / 9_007_199_254_740_992.0
    }

    /// Standard normal via Box-Muller, indexed by pixel: draws for pixel `i`
    /// come from counters 2i and 2i+1 only.
    pub fn gaussian_at(&self, index: u64) -> f64 {
        let u1 = self.unit_at(2 * index);
        let u2 = self.unit_at(2 * index + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform in [-bound, bound].
    pub fn uniform_signed_at(&self, counter: u64, bound: f64) -> f64 {
        (2.0 * self.unit_at(counter) - 1.0) * bound
    }
}

/// Sequential stream for order-dependent use (shuffles, weight init).
#[derive(Debug, Clone)]
pub struct SeqRng {
    rng: CounterRng,
    counter: u64,
}

impl SeqRng {
    pub fn new(seed: u64) -> Self {
        SeqRng {
            rng: CounterRng::new(seed),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = self.rng.u64_at(self.counter);
        self.counter += 1;
        v
    }

    pub fn next_unit(&mut self) -> f64 {
        let v = self.rng.unit_at(self.counter);
        self.counter += 1;
        v
    }

    pub fn next_range(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn next_uniform_signed(&mut self, bound: f64) -> f64 {
        (2.0 * self.next_unit() - 1.0) * bound
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_range(i + 1);
            items.swap(i, j);
        }
    }
}

/// Stable seed derivation from a master seed and string labels
/// (FNV-1a over the parts, then mixed). Used so each experiment cell
/// is reproducible in isolation.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for part in parts {
        for byte in part.as_bytes() {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h ^= 0xFF; // separator so ("ab","c") != ("a","bc")
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(master ^ h)
}
