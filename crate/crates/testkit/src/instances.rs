//! Deterministic random SVR instances for oracle comparisons.

/// splitmix64: tiny, seedable, and good enough for test instances.
pub struct TinyRng(u64);

impl TinyRng {
    pub fn new(seed: u64) -> Self {
        TinyRng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Log-uniform over [lo, hi], both positive.
    pub fn log_range(&mut self, lo: f64, hi: f64) -> f64 {
        (self.range(lo.ln(), hi.ln())).exp()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// One randomly drawn SVR training problem.
pub struct SvrInstance {
    /// One point per row.
    pub points: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

/// Draws a small instance: n in [4, 28], dimension in [1, 4], smooth
/// targets with noise, and hyperparameters spanning several orders of
/// magnitude. The same seed always yields the same instance.
pub fn random_svr_instance(seed: u64) -> SvrInstance {
    let mut rng = TinyRng::new(seed.wrapping_mul(0x5851f42d4c957f2d).wrapping_add(1));
    let n = 4 + rng.below(25);
    let dim = 1 + rng.below(4);

    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..dim).map(|_| rng.range(-2.0, 2.0)).collect();
        points.push(row);
    }

    let freq = rng.range(0.5, 2.5);
    let slope = rng.range(-1.0, 1.0);
    let scale = rng.log_range(0.5, 20.0);
    let shift = rng.range(-10.0, 10.0);
    let noise = rng.range(0.0, 0.3);
    let targets: Vec<f64> = points
        .iter()
        .map(|p| {
            let s: f64 = p.iter().sum();
            let smooth = (freq * p[0]).sin() + slope * s;
            scale * smooth + shift + noise * (rng.uniform() - 0.5)
        })
        .collect();

    SvrInstance {
        points,
        targets,
        c: rng.log_range(0.1, 100.0),
        epsilon: rng.log_range(1e-3, 0.5),
        gamma: rng.log_range(0.05, 3.0),
    }
}
