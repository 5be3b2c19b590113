//! Monte Carlo estimators used as independent checks on the lattice engine.
//!
//! Every estimator draws from ChaCha8 streams keyed by `(seed, chunk)`, with a
//! fixed chunk size, so results do not depend on the execution policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::{discretize_tail, CountingDist, GridSpec, LatticeDist, ParametricDist, Rounding};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tilt::tilt;

/// Samples per RNG stream.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Plain,
    Tilted(f64),
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::Plain => write!(f, "plain"),
            Estimator::Tilted(g) => write!(f, "tilted({g})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub x: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub estimator: Estimator,
}

impl McEstimate {
    /// `|a - b| / sqrt(se_a² + se_b²)`; infinite when both are exact and differ.
    pub fn z_score(&self, other: f64, other_se: f64) -> f64 {
        let se = (self.stderr.powi(2) + other_se.powi(2)).sqrt();
        let d = (self.estimate - other).abs();
        if d == 0.0 {
            0.0
        } else {
            d / se
        }
    }
}

/// CSV with header `x,estimate,stderr,n,estimator`.
pub fn estimates_to_csv(rows: &[McEstimate]) -> String {
    let mut out = String::from("x,estimate,stderr,n,estimator\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.x, r.estimate, r.stderr, r.n, r.estimator
        ));
    }
    out
}

/// Empirical law of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTail {
    sorted: Vec<f64>,
}

impl EmpiricalTail {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Precondition(
                "empirical law needs at least one sample".into(),
            ));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("NaN in sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalTail { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples strictly above `x`.
    pub fn fraction_above(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|v| *v <= x);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }

    /// `P{S > x}` with binomial standard error.
    pub fn tail(&self, x: f64) -> McEstimate {
        let p = self.fraction_above(x);
        let n = self.sorted.len();
        McEstimate {
            x,
            estimate: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            n,
            estimator: Estimator::Plain,
        }
    }

    /// Bin the sample onto a grid (`Up`: values in `(x_{i-1}, x_i]` go to `x_i`).
    pub fn to_lattice(&self, grid: GridSpec, rounding: Rounding) -> Result<LatticeDist> {
        let low = self.sorted[0];
        discretize_tail(|x| self.fraction_above(x), low, grid, rounding)
    }
}

fn stream(seed: u64, idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx as u64);
    rng
}

/// Uniform on `(0, 1]`.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Inverse-transform sampler for a counting law.
#[derive(Debug, Clone)]
enum CountSampler {
    Fixed(usize),
    Geometric(f64),
    Table(Vec<f64>),
}

impl CountSampler {
    fn new(tau: &CountingDist) -> Result<Self> {
        Ok(match tau {
            CountingDist::Deterministic { n } => CountSampler::Fixed(*n),
            CountingDist::Geometric { p } if *p == 0.0 => CountSampler::Fixed(0),
            CountingDist::Geometric { p } => CountSampler::Geometric(*p),
            _ => {
                let n = tau.n_max(1e-16)?;
                let mut acc = 0.0;
                let cdf = (0..=n)
                    .map(|k| {
                        acc += tau.pmf(k);
                        acc
                    })
                    .collect();
                CountSampler::Table(cdf)
            }
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            CountSampler::Fixed(n) => *n,
            // P{τ ≥ k} = p^k
            CountSampler::Geometric(p) => (unit(rng).ln() / p.ln()).floor() as usize,
            CountSampler::Table(cdf) => {
                let u = rng.random::<f64>() * cdf[cdf.len() - 1];
                cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
            }
        }
    }
}

/// Index sampler for lattice grid masses.
#[derive(Debug, Clone)]
struct GridSampler {
    cdf: Vec<f64>,
}

impl GridSampler {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        GridSampler { cdf }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let u = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        self.cdf
            .partition_point(|c| *c <= u)
            .min(self.cdf.len() - 1)
    }
}

fn chunks(n: usize) -> usize {
    n.div_ceil(CHUNK)
}

fn chunk_len(n: usize, c: usize) -> usize {
    CHUNK.min(n - c * CHUNK)
}

/// Draw `n` copies of `ξ_1 + … + ξ_τ` by inverse transform.
pub fn sample_stopped_sum(
    dist: &ParametricDist,
    tau: &CountingDist,
    seed: u64,
    n: usize,
    exec: Exec,
) -> Result<EmpiricalTail> {
    if n == 0 {
        return Err(Error::Precondition("need at least one sample".into()));
    }
    let counts = CountSampler::new(tau)?;
    let parts = exec.map_range(chunks(n), |c| {
        let mut rng = stream(seed, c);
        (0..chunk_len(n, c))
            .map(|_| {
                let k = counts.draw(&mut rng);
                (0..k)
                    .map(|_| dist.upper_quantile(unit(&mut rng)))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
    });
    EmpiricalTail::new(parts.concat())
}

/// Importance-sampling estimate of `P{S_τ > x}` on a lattice, drawing from the
/// tilted pair `(G, ν)` and weighting each path by `E φ^τ e^{-γ S}`. With
/// `γ = 0` this is plain Monte Carlo. The lattice is conditioned on its grid.
pub fn tilted_tail_estimate(
    f: &LatticeDist,
    tau: &CountingDist,
    gamma: f64,
    xs: &[f64],
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<McEstimate>> {
    if n < 2 {
        return Err(Error::Precondition("need at least two samples".into()));
    }
    // validates the tilt (remainder amplification, E φ^τ)
    tilt(f, tau, gamma)?;
    let base = f.grid_normalized();
    let w: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if *m > 0.0 {
                m * (gamma * f.x(i)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let phi: f64 = w.iter().sum();
    let e_phi_tau = tau.pgf(phi);
    if !e_phi_tau.is_finite() {
        return Err(Error::Divergent(format!("E φ^τ diverges at φ = {phi}")));
    }
    let nu = tau.reweighted(phi)?;
    let counts = CountSampler::new(&nu)?;
    let grid = GridSampler::new(&w);
    let estimator = if gamma == 0.0 {
        Estimator::Plain
    } else {
        Estimator::Tilted(gamma)
    };

    // per chunk: Σ w·1{S > x} and Σ (w·1{S > x})² for every x
    let parts = exec.map_range(chunks(n), |c| {
        let mut rng = stream(seed, c);
        let mut s1 = vec![0.0; xs.len()];
        let mut s2 = vec![0.0; xs.len()];
        for _ in 0..chunk_len(n, c) {
            let k = counts.draw(&mut rng);
            let mut idx_sum = 0usize;
            for _ in 0..k {
                idx_sum += grid.draw(&mut rng);
            }
            let s = k as f64 * f.offset() + idx_sum as f64 * f.step();
            let weight = e_phi_tau * (-gamma * s).exp();
            for (j, &x) in xs.iter().enumerate() {
                if s > x + 1e-9 * f.step() {
                    s1[j] += weight;
                    s2[j] += weight * weight;
                }
            }
        }
        (s1, s2)
    });
    let mut s1 = vec![0.0; xs.len()];
    let mut s2 = vec![0.0; xs.len()];
    for (a, b) in parts {
        for j in 0..xs.len() {
            s1[j] += a[j];
            s2[j] += b[j];
        }
    }
    let nf = n as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let mean = s1[j] / nf;
            let var = ((s2[j] / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
            McEstimate {
                x,
                estimate: mean,
                stderr: (var / nf).sqrt(),
                n,
                estimator,
            }
        })
        .collect())
}

/// When to stop a random-walk path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupremumPolicy {
    /// Stop once `S_n < max_k S_k - barrier`.
    pub barrier: f64,
    /// Hard cap on steps per path.
    pub max_steps: usize,
    /// Estimated probability that a stopped path would still have set a new maximum.
    pub bias_bound: f64,
}

impl SupremumPolicy {
    /// Pick the barrier so that `(1/m) ∫_B^∞ F̄(y) dy ≤ target`, the
    /// large-deviation estimate of climbing back over a gap of size `B`.
    pub fn auto(dist: &ParametricDist, target: f64) -> Result<Self> {
        let m = -dist.mean();
        if !(m > 0.0) {
            return Err(Error::Precondition(format!(
                "random walk needs a negative mean, got {}",
                -m
            )));
        }
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::invalid("target", target, "must lie in (0, 1)"));
        }
        let climb = |b: f64| dist.excess_integral(b.max(0.0)) / m;
        let mut b = 1.0;
        while climb(b) > target {
            b *= 2.0;
            if b > 1e15 {
                return Err(Error::Numeric("no barrier meets the bias target".into()));
            }
        }
        let (mut lo, mut hi) = (b / 2.0, b);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if climb(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(SupremumPolicy {
            barrier: hi,
            max_steps: (1000.0 * hi / m).max(1e6) as usize,
            bias_bound: target,
        })
    }
}

/// Path maxima and ladder data from [`simulate_supremum`].
#[derive(Debug, Clone, PartialEq)]
pub struct SupremumSample {
    /// `M` per path, in path order.
    pub maxima: Vec<f64>,
    /// Ladder heights, concatenated in path order.
    pub ladder_heights: Vec<f64>,
    /// Number of ladder heights per path.
    pub ladder_counts: Vec<u32>,
    /// Paths stopped by `max_steps` rather than the barrier.
    pub capped_paths: usize,
    pub policy: SupremumPolicy,
}

impl SupremumSample {
    pub fn n_paths(&self) -> usize {
        self.maxima.len()
    }

    /// Empirical `p = P{M > 0}`.
    pub fn p_hat(&self) -> McEstimate {
        let n = self.maxima.len();
        let p = self.ladder_counts.iter().filter(|c| **c > 0).count() as f64 / n as f64;
        McEstimate {
            x: 0.0,
            estimate: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            n,
            estimator: Estimator::Plain,
        }
    }

    pub fn maxima_tail(&self) -> Result<EmpiricalTail> {
        EmpiricalTail::new(self.maxima.clone())
    }

    /// Split paths into `k` contiguous batches, each as its own sample.
    pub fn batches(&self, k: usize) -> Vec<SupremumSample> {
        let n = self.maxima.len();
        let mut out = Vec::with_capacity(k);
        let mut h = 0usize;
        for b in 0..k {
            let (lo, hi) = (b * n / k, (b + 1) * n / k);
            let counts = self.ladder_counts[lo..hi].to_vec();
            let len: usize = counts.iter().map(|c| *c as usize).sum();
            out.push(SupremumSample {
                maxima: self.maxima[lo..hi].to_vec(),
                ladder_heights: self.ladder_heights[h..h + len].to_vec(),
                ladder_counts: counts,
                capped_paths: 0,
                policy: self.policy,
            });
            h += len;
        }
        out
    }
}

/// Simulate `M = sup_n S_n` for a random walk with increments from `dist`.
pub fn simulate_supremum(
    dist: &ParametricDist,
    n_paths: usize,
    policy: SupremumPolicy,
    seed: u64,
    exec: Exec,
) -> Result<SupremumSample> {
    if !(dist.mean() < 0.0) {
        return Err(Error::Precondition(format!(
            "random walk needs a negative mean, got {}",
            dist.mean()
        )));
    }
    if n_paths == 0 {
        return Err(Error::Precondition("need at least one path".into()));
    }
    let parts = exec.map_range(chunks(n_paths), |c| {
        let mut rng = stream(seed, c);
        let mut maxima = Vec::with_capacity(CHUNK);
        let mut heights = Vec::new();
        let mut counts = Vec::with_capacity(CHUNK);
        let mut capped = 0usize;
        for _ in 0..chunk_len(n_paths, c) {
            let (mut s, mut max, mut ladders) = (0.0f64, 0.0f64, 0u32);
            let mut steps = 0usize;
            loop {
                s += dist.upper_quantile(unit(&mut rng));
                steps += 1;
                if s > max {
                    heights.push(s - max);
                    max = s;
                    ladders += 1;
                } else if s < max - policy.barrier {
                    break;
                }
                if steps >= policy.max_steps {
                    capped += 1;
                    break;
                }
            }
            maxima.push(max);
            counts.push(ladders);
        }
        (maxima, heights, counts, capped)
    });
    let mut out = SupremumSample {
        maxima: Vec::with_capacity(n_paths),
        ladder_heights: Vec::new(),
        ladder_counts: Vec::with_capacity(n_paths),
        capped_paths: 0,
        policy,
    };
    for (m, h, k, c) in parts {
        out.maxima.extend(m);
        out.ladder_heights.extend(h);
        out.ladder_counts.extend(k);
        out.capped_paths += c;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_stopped_sums() {
        let d = ParametricDist::pareto(2.0, 1.0).unwrap();
        let zero = sample_stopped_sum(
            &d,
            &CountingDist::deterministic(0),
            1,
            100,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(zero.tail(0.1).estimate, 0.0);
        let one = ParametricDist::degenerate(1.0).unwrap();
        let three = sample_stopped_sum(
            &one,
            &CountingDist::deterministic(3),
            1,
            50,
            Exec::Sequential,
        )
        .unwrap();
        assert!(three.samples().iter().all(|v| *v == 3.0));
    }

    #[test]
    fn seeds_reproduce_and_policy_is_irrelevant() {
        let d = ParametricDist::weibull(0.5, 1.0).unwrap();
        let tau = CountingDist::poisson(2.0).unwrap();
        let a = sample_stopped_sum(&d, &tau, 7, 10_000, Exec::Sequential).unwrap();
        let b = sample_stopped_sum(&d, &tau, 7, 10_000, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let c = sample_stopped_sum(&d, &tau, 8, 10_000, Exec::Sequential).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_tilt_equals_plain_and_point_mass_is_exact() {
        let f = LatticeDist::new(1.0, 0.0, vec![0.5, 0.3, 0.2], 0.0).unwrap();
        let tau = CountingDist::geometric(0.5).unwrap();
        let e = tilted_tail_estimate(&f, &tau, 0.0, &[1.0], 1000, 3, Exec::Sequential).unwrap();
        assert_eq!(e[0].estimator, Estimator::Plain);
        let pm = LatticeDist::point_mass(1.0, 1.0).unwrap();
        let det = CountingDist::deterministic(3);
        let e = tilted_tail_estimate(&pm, &det, 0.4, &[2.5], 1000, 3, Exec::Sequential).unwrap();
        assert!((e[0].estimate - 1.0).abs() < 1e-12 && e[0].stderr < 1e-12);
    }

    #[test]
    fn drift_only_walk_never_rises() {
        let d = ParametricDist::degenerate(-1.0).unwrap();
        let policy = SupremumPolicy {
            barrier: 5.0,
            max_steps: 100,
            bias_bound: 0.0,
        };
        let s = simulate_supremum(&d, 100, policy, 1, Exec::Sequential).unwrap();
        assert!(s.maxima.iter().all(|m| *m == 0.0));
        assert_eq!(s.p_hat().estimate, 0.0);
        assert!(simulate_supremum(
            &ParametricDist::exponential(1.0).unwrap(),
            10,
            policy,
            1,
            Exec::Sequential
        )
        .is_err());
    }

    #[test]
    fn batches_partition_paths() {
        let d = ParametricDist::exponential(1.0).unwrap().shifted(-2.0);
        let policy = SupremumPolicy::auto(&d, 1e-6).unwrap();
        let s = simulate_supremum(&d, 1000, policy, 5, Exec::Sequential).unwrap();
        let b = s.batches(7);
        assert_eq!(b.iter().map(|x| x.n_paths()).sum::<usize>(), 1000);
        assert_eq!(
            b.iter().map(|x| x.ladder_heights.len()).sum::<usize>(),
            s.ladder_heights.len()
        );
        assert!(s.maxima.iter().all(|m| *m >= 0.0));
    }
}
