//! Deterministic, hierarchically splittable random streams.
//!
//! Every source of randomness in the simulator is an [`RngStream`] derived
//! from a single experiment seed through a path of labels
//! (experiment → stage → client → round). Streams never touch OS entropy,
//! so the same `(seed, path)` replays the identical sequence anywhere.
//!
//! The generator is xoshiro256++ seeded through splitmix64; stream derivation
//! mixes the parent's identity key with a hash of the child label, so a
//! stream's draws never depend on how many values its parent has produced.

use std::f64::consts::PI;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(hash: u64, bytes: &[u8]) -> u64 {
    let mut h = hash;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// One segment of a stream's derivation path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamLabel {
    Text(String),
    Index(u64),
}

impl StreamLabel {
    fn digest(&self, key: u64) -> u64 {
        // Tag bytes keep Text("7") and Index(7) distinct.
        let h = match self {
            StreamLabel::Text(s) => fnv1a(fnv1a(FNV_OFFSET ^ key, &[0x01]), s.as_bytes()),
            StreamLabel::Index(i) => fnv1a(fnv1a(FNV_OFFSET ^ key, &[0x02]), &i.to_le_bytes()),
        };
        let mut s = h;
        splitmix64(&mut s)
    }
}

impl From<&str> for StreamLabel {
    fn from(s: &str) -> Self {
        StreamLabel::Text(s.to_owned())
    }
}

impl From<String> for StreamLabel {
    fn from(s: String) -> Self {
        StreamLabel::Text(s)
    }
}

impl From<u64> for StreamLabel {
    fn from(i: u64) -> Self {
        StreamLabel::Index(i)
    }
}

impl From<usize> for StreamLabel {
    fn from(i: usize) -> Self {
        StreamLabel::Index(i as u64)
    }
}

/// A deterministic random stream with a hierarchical identity.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    path: Vec<StreamLabel>,
    state: [u64; 4],
    pending_normal: Option<f64>,
}

impl RngStream {
    /// Root stream of an experiment.
    pub fn from_seed(seed: u64) -> Self {
        Self::with_key(seed, Vec::new())
    }

    fn with_key(key: u64, path: Vec<StreamLabel>) -> Self {
        let mut sm = key;
        let mut state = [0u64; 4];
        for word in state.iter_mut() {
            *word = splitmix64(&mut sm);
        }
        if state.iter().all(|&w| w == 0) {
            state[0] = 0x6a09e667f3bcc908;
        }
        RngStream { key, path, state, pending_normal: None }
    }

    /// Derive a child stream. Depends only on the parent's identity, not on
    /// how many draws the parent has made.
    pub fn derive(&self, label: impl Into<StreamLabel>) -> RngStream {
        let label = label.into();
        let key = label.digest(self.key);
        let mut path = self.path.clone();
        path.push(label);
        RngStream::with_key(key, path)
    }

    /// Derive through a whole path of labels at once.
    pub fn derive_path<L, I>(&self, labels: I) -> RngStream
    where
        L: Into<StreamLabel>,
        I: IntoIterator<Item = L>,
    {
        labels.into_iter().fold(self.clone(), |s, l| s.derive(l))
    }

    pub fn path(&self) -> &[StreamLabel] {
        &self.path
    }

    /// Next raw value (xoshiro256++).
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in (0, 1]; safe as a log argument.
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform integer in [0, n).
    pub fn uniform_range(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_range requires n > 0");
        let n = n as u64;
        let rem = ((u64::MAX % n) + 1) % n; // 2^64 mod n
        let threshold = u64::MAX - rem;
        loop {
            let x = self.next_u64();
            if x <= threshold {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal draw (Box-Muller; the paired value is cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.pending_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.pending_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Vector of standard normal draws.
    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Gamma(shape, 1) draw (Marsaglia-Tsang, with the boost for shape < 1).
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma requires shape > 0");
        if shape < 1.0 {
            let boost = self.uniform_open().powf(1.0 / shape);
            return self.gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = self.uniform_open();
            if u < 1.0 - 0.0331 * x.powi(4) {
                return d * v;
            }
            if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.uniform_range(i + 1);
            slice.swap(i, j);
        }
    }

    /// k distinct indices from [0, n), uniform without replacement, sorted.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.uniform_range(n - i);
            pool.swap(i, j);
        }
        let mut chosen = pool[..k].to_vec();
        chosen.sort_unstable();
        chosen
    }
}
