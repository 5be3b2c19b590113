//! Lattice convolution: n-fold powers, randomly stopped sums, tail-ratio
//! curves and the pairwise lower bound on convolution tails.
//!
//! Convolutions are direct `O(N²)` sums: the tail entries that the asymptotic
//! checks look at are many orders of magnitude below the bulk, which rules out
//! transform-based products.

use crate::dist::{
    CountingDist, LatticeDist, LatticePair, ParametricDist, TailBracket, SERIES_TOL,
};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Denominators below this are dropped from ratio curves.
pub const MIN_DENOMINATOR: f64 = 1e-300;

/// Dot product `Σ a[i] b[k-i]` over the overlapping index range.
#[inline]
fn conv_entry(a: &[f64], b: &[f64], k: usize) -> f64 {
    let i0 = (k + 1).saturating_sub(b.len());
    let i1 = k.min(a.len() - 1);
    if i0 > i1 {
        return 0.0;
    }
    let xs = &a[i0..=i1];
    let ys = &b[k - i1..=k - i0];
    let mut acc = [0.0f64; 4];
    let n = xs.len();
    let chunks = n / 4;
    for c in 0..chunks {
        for (l, a) in acc.iter_mut().enumerate() {
            let i = 4 * c + l;
            *a += xs[i] * ys[n - 1 - i];
        }
    }
    let mut s = acc[0] + acc[1] + acc[2] + acc[3];
    for i in 4 * chunks..n {
        s += xs[i] * ys[n - 1 - i];
    }
    s
}

/// Truncated convolution of two mass vectors: the first `len` entries of `a * b`.
pub fn convolve_masses(a: &[f64], b: &[f64], len: usize, exec: Exec) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if a.is_empty() || b.is_empty() {
        return out;
    }
    exec.fill(&mut out, |k| conv_entry(a, b, k));
    out
}

/// Mass of grid pairs landing at index `≥ len`.
fn overflow_mass(a: &[f64], b: &[f64], len: usize) -> f64 {
    // suffix[m] = Σ_{j ≥ m} b_j
    let mut suffix = vec![0.0; b.len() + 1];
    for j in (0..b.len()).rev() {
        suffix[j] = suffix[j + 1] + b[j];
    }
    a.iter()
        .enumerate()
        .map(|(i, ai)| {
            let m = len.saturating_sub(i);
            if m >= b.len() {
                0.0
            } else {
                ai * suffix[m]
            }
        })
        .sum()
}

/// `a * b` on the common grid, truncated to the longer input's length.
pub fn conv(a: &LatticeDist, b: &LatticeDist) -> Result<LatticeDist> {
    conv_with(a, b, Exec::default())
}

pub fn conv_with(a: &LatticeDist, b: &LatticeDist, exec: Exec) -> Result<LatticeDist> {
    if ((a.step() - b.step()) / a.step()).abs() > 1e-12 {
        return Err(Error::GridMismatch {
            left: a.step(),
            right: b.step(),
        });
    }
    let (la, lb) = (a.len(), b.len());
    let len = la.max(lb);
    let (ma, mb) = (a.masses(), b.masses());
    let mass = convolve_masses(ma, mb, len, exec);
    let (ga, gb) = (a.grid_mass(), b.grid_mass());
    let (ba, bb) = (a.remainder_beyond(), b.remainder_beyond());
    let (ua, ub) = (a.remainder_unplaced(), b.remainder_unplaced());

    let mut beyond = overflow_mass(ma, mb, len) + ba * bb;
    let mut unplaced = ua * (gb + bb + ub) + ub * (ga + ba);
    // a beyond its last point plus b on-grid lands beyond the output grid only
    // when a's grid spans the full output length
    if la == len {
        beyond += ba * gb;
    } else {
        unplaced += ba * gb;
    }
    if lb == len {
        beyond += ga * bb;
    } else {
        unplaced += ga * bb;
    }
    Ok(LatticeDist::raw(
        a.step(),
        a.offset() + b.offset(),
        mass,
        beyond,
        unplaced,
    ))
}

/// `F^{*n}` by binary exponentiation; `F^{*0} = δ_0`.
pub fn conv_power(f: &LatticeDist, n: usize) -> Result<LatticeDist> {
    conv_power_with(f, n, Exec::default())
}

pub fn conv_power_with(f: &LatticeDist, n: usize, exec: Exec) -> Result<LatticeDist> {
    let mut result: Option<LatticeDist> = None;
    let mut base = f.clone();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => conv_with(&r, &base, exec)?,
            });
        }
        k >>= 1;
        if k > 0 {
            base = conv_with(&base, &base, exec)?;
        }
    }
    match result {
        Some(r) => Ok(r),
        None => LatticeDist::point_mass(0.0, f.step()),
    }
}

/// Accumulates weighted lattices onto a fixed output window.
struct Mixture {
    step: f64,
    offset: f64,
    mass: Vec<f64>,
    beyond: f64,
    unplaced: f64,
}

impl Mixture {
    fn new(step: f64, offset: f64, len: usize) -> Self {
        Mixture {
            step,
            offset,
            mass: vec![0.0; len],
            beyond: 0.0,
            unplaced: 0.0,
        }
    }

    fn last_x(&self) -> f64 {
        self.offset + (self.mass.len() - 1) as f64 * self.step
    }

    fn add(&mut self, w: f64, l: &LatticeDist) {
        if w == 0.0 {
            return;
        }
        let shift = ((l.offset() - self.offset) / self.step).round() as i64;
        debug_assert!(shift >= 0);
        let shift = shift as usize;
        let len = self.mass.len();
        for (i, m) in l.masses().iter().enumerate() {
            let k = i + shift;
            if k < len {
                self.mass[k] += w * m;
            } else {
                self.beyond += w * m;
            }
        }
        // remainder beyond l's last point is beyond ours only if l reaches our end
        if l.last_x() >= self.last_x() - 1e-9 * self.step {
            self.beyond += w * l.remainder_beyond();
        } else {
            self.unplaced += w * l.remainder_beyond();
        }
        self.unplaced += w * l.remainder_unplaced();
    }

    fn finish(self, extra_unplaced: f64) -> LatticeDist {
        LatticeDist::raw(
            self.step,
            self.offset,
            self.mass,
            self.beyond,
            self.unplaced + extra_unplaced,
        )
    }
}

/// Output window of a mixture of `F^{*n}`, `n ≤ n_max`: from the lowest reachable
/// grid point up to the last grid point of `f`.
fn mixture_window(f: &LatticeDist, n_max: usize) -> (f64, usize) {
    let offset = if f.offset() < 0.0 {
        n_max as f64 * f.offset()
    } else {
        0.0
    };
    let top = f.last_x().max(offset);
    let len = ((top - offset) / f.step()).round() as usize + 1;
    (offset, len)
}

/// Options for [`stopped_sum_with`].
#[derive(Debug, Clone, Copy)]
pub struct SeriesOpts {
    /// Neglected counting mass `P{τ > n_max}` allowed.
    pub tol: f64,
    /// Explicit truncation index, overriding `tol`.
    pub n_max: Option<usize>,
    pub exec: Exec,
}

impl Default for SeriesOpts {
    fn default() -> Self {
        SeriesOpts {
            tol: SERIES_TOL,
            n_max: None,
            exec: Exec::default(),
        }
    }
}

/// `F^{*τ} = Σ_n P{τ = n} F^{*n}`, with `P{τ > n_max}` moved into the remainder.
pub fn stopped_sum(f: &LatticeDist, tau: &CountingDist) -> Result<LatticeDist> {
    stopped_sum_with(f, tau, SeriesOpts::default())
}

pub fn stopped_sum_with(
    f: &LatticeDist,
    tau: &CountingDist,
    opts: SeriesOpts,
) -> Result<LatticeDist> {
    let n_max = match opts.n_max {
        Some(n) => n,
        None => tau.n_max(opts.tol)?,
    };
    if let CountingDist::Deterministic { n } = tau {
        if *n <= n_max {
            return conv_power_with(f, *n, opts.exec);
        }
    }
    let weights = tau.pmf_vec(n_max);
    let neglected = tau.tail_prob(n_max);
    stopped_sum_weights(f, &weights, neglected, opts.exec)
}

/// `Σ_n w_n F^{*n}` over the given weights, with `extra` added to the unplaced remainder.
pub(crate) fn stopped_sum_weights(
    f: &LatticeDist,
    weights: &[f64],
    extra: f64,
    exec: Exec,
) -> Result<LatticeDist> {
    let n_max = weights.len().saturating_sub(1);
    let (offset, len) = mixture_window(f, n_max);
    let mut acc = Mixture::new(f.step(), offset, len);
    let mut power = LatticeDist::point_mass(0.0, f.step())?;
    for (n, &w) in weights.iter().enumerate() {
        if n > 0 {
            power = conv_with(&power, f, exec)?;
        }
        acc.add(w, &power);
    }
    Ok(acc.finish(extra))
}

/// One sample of a ratio curve: the ratio and its certified bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioPoint {
    pub x: f64,
    pub ratio: f64,
    pub lo: f64,
    pub hi: f64,
}

impl RatioPoint {
    pub fn err_lo(&self) -> f64 {
        self.ratio - self.lo
    }
    pub fn err_hi(&self) -> f64 {
        self.hi - self.ratio
    }
}

/// Sampled ratio `r(x)` of two tails with per-point brackets.
#[derive(Debug, Clone, PartialEq)]
pub struct TailRatioCurve {
    pub points: Vec<RatioPoint>,
    /// Grid values dropped because the denominator underflowed.
    pub dropped: Vec<f64>,
    /// `Eτ` of the counting law (or the analogous reference value).
    pub e_tau: f64,
    /// Extra `key=value` metadata emitted as comment lines.
    pub meta: Vec<(String, String)>,
}

impl TailRatioCurve {
    pub fn new(e_tau: f64) -> Self {
        TailRatioCurve {
            points: Vec::new(),
            dropped: Vec::new(),
            e_tau,
            meta: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    /// Push `num/den` given brackets for both, dropping underflowing denominators.
    pub fn push(&mut self, x: f64, num: TailBracket, den: TailBracket) {
        if !(den.lo >= MIN_DENOMINATOR) {
            self.dropped.push(x);
            return;
        }
        let lo = num.lo / den.hi;
        let hi = num.hi / den.lo;
        let ratio = (num.mid() / den.mid()).clamp(lo, hi);
        self.points.push(RatioPoint { x, ratio, lo, hi });
    }

    /// Push with an exact denominator given as a log value.
    pub fn push_exact_den(&mut self, x: f64, num: TailBracket, log_den: f64) {
        if !(log_den >= MIN_DENOMINATOR.ln()) {
            self.dropped.push(x);
            return;
        }
        let scale = |v: f64| {
            if v <= 0.0 {
                0.0
            } else {
                (v.ln() - log_den).exp()
            }
        };
        let lo = scale(num.lo);
        let hi = scale(num.hi);
        let ratio = scale(num.mid());
        self.points.push(RatioPoint { x, ratio, lo, hi });
    }
}

/// Log-spaced grid of `n` points on `[x_min, x_max]`.
pub fn log_grid(x_min: f64, x_max: f64, n: usize) -> Vec<f64> {
    assert!(x_min > 0.0 && x_max > x_min && n >= 2);
    let (a, b) = (x_min.ln(), x_max.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Round each value to the nearest point of `offset + i·step`, removing duplicates.
pub fn snap_to_grid(xs: &[f64], step: f64, offset: f64) -> Vec<f64> {
    let mut out: Vec<f64> = xs
        .iter()
        .map(|x| offset + ((x - offset) / step).round() * step)
        .collect();
    out.dedup_by(|a, b| (*a - *b).abs() < 0.5 * step);
    out
}

/// Source distribution of a ratio curve.
#[derive(Debug, Clone, Copy)]
pub enum RatioSource<'a> {
    /// A lattice; its own tail (with remainder bracket) is the denominator.
    Lattice(&'a LatticeDist),
    /// A closed-form law: up/down discretizations bracket the numerator and the
    /// exact tail is the denominator.
    Parametric {
        dist: &'a ParametricDist,
        grid: crate::dist::GridSpec,
    },
}

/// `r(x) = F̄^{*τ}(x)/F̄(x)` on `x_grid`.
pub fn tail_ratio_curve(
    src: RatioSource<'_>,
    tau: &CountingDist,
    x_grid: &[f64],
) -> Result<TailRatioCurve> {
    let mut curve = TailRatioCurve::new(tau.mean());
    match src {
        RatioSource::Lattice(f) => {
            let num = stopped_sum(f, tau)?;
            for &x in x_grid {
                curve.push(x, num.tail(x), f.tail(x));
            }
        }
        RatioSource::Parametric { dist, grid } => {
            let pair = LatticePair::from_parametric(dist, grid)?;
            let num = pair.try_map(|l| stopped_sum(l, tau))?;
            for &x in x_grid {
                curve.push_exact_den(x, pair_tail(&num, x), dist.log_tail(x));
            }
        }
    }
    Ok(curve)
}

/// Bracket from a lower/upper lattice pair, centred on the mean of the two.
pub(crate) fn pair_tail(pair: &LatticePair, x: f64) -> TailBracket {
    let lo = pair.lower.tail(x);
    let hi = pair.upper.tail(x);
    TailBracket {
        lo: lo.lo,
        hi: hi.hi,
    }
}

/// Which part of the x-grid the liminf estimator looks at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// Points with `x ≥ x_last / 10`.
    LastDecade,
    /// The top fraction of points by count, in `(0, 1]`.
    TopFraction(f64),
}

/// Windowed minimum of a ratio curve with its propagated bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiminfEstimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    /// Where the minimum of the point estimates sits.
    pub x_at: f64,
    pub n_points: usize,
}

impl LiminfEstimate {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

pub fn liminf_estimate(curve: &TailRatioCurve, window: Window) -> Result<LiminfEstimate> {
    if curve.points.is_empty() {
        return Err(Error::Precondition(format!(
            "ratio curve has no usable points ({} dropped)",
            curve.dropped.len()
        )));
    }
    let pts = &curve.points;
    let start = match window {
        Window::LastDecade => {
            let last = pts[pts.len() - 1].x;
            pts.iter().position(|p| p.x >= last / 10.0).unwrap_or(0)
        }
        Window::TopFraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid("window_fraction", f, "must lie in (0, 1]"));
            }
            let k = ((pts.len() as f64) * f).ceil() as usize;
            pts.len() - k.clamp(1, pts.len())
        }
    };
    let w = &pts[start..];
    let best = w
        .iter()
        .min_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .expect("window is nonempty");
    Ok(LiminfEstimate {
        value: best.ratio,
        lo: w.iter().map(|p| p.lo).fold(f64::INFINITY, f64::min),
        hi: w.iter().map(|p| p.hi).fold(f64::INFINITY, f64::min),
        x_at: best.x,
        n_points: w.len(),
    })
}

/// Both sides of `P{ξ_a + ξ_b > x} ≥ P{ξ_a > x} P{ξ_b ≤ x} + P{ξ_b > x} P{ξ_a ≤ x}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseBound {
    pub lhs: f64,
    pub rhs: f64,
    /// Remainder mass of the inputs, which the lattice cannot place.
    pub slack: f64,
}

impl PairwiseBound {
    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs - self.slack - 1e-15 * self.rhs.abs()
    }
}

pub fn pairwise_lower_bound(a: &LatticeDist, b: &LatticeDist, x: f64) -> Result<PairwiseBound> {
    for l in [a, b] {
        if l.offset() < -1e-9 * l.step() {
            return Err(Error::Precondition(format!(
                "pairwise bound needs support on [0, ∞); offset is {}",
                l.offset()
            )));
        }
    }
    let c = conv(a, b)?;
    let lhs = c.tail(x).lo;
    let rhs = a.tail(x).lo * b.cdf_grid(x) + b.tail(x).lo * a.cdf_grid(x);
    Ok(PairwiseBound {
        lhs,
        rhs,
        slack: a.remainder() + b.remainder(),
    })
}
