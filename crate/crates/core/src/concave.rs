//! Concave piecewise-linear weights for heavy-tailed laws.
//!
//! For a heavy-tailed `ξ ≥ 0` and `δ ∈ (0, 1]`, [`build_h`] constructs knots
//! `0 = x_0 < x_1 < …` and slopes `ε_1 > ε_2 > … > 0` such that, block by block,
//!
//! ```text
//! E{e^{h(ξ)}; ξ ∈ (x_{n-1}, x_n]} + e^{h(x_n)} F̄(x_n) = e^{h(x_{n-1})} F̄(x_{n-1}) + δ/2^n
//! ```
//!
//! which telescopes to `E e^{h(ξ)} = 1 + δ` while `E ξ e^{h(ξ)}` diverges.

use crate::convolve::conv_power;
use crate::dist::{CountingDist, LatticeDist, ParametricDist, TailClass};
use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_log, QuadOpts};

const BLOCK_QUAD: QuadOpts = QuadOpts {
    abs_tol: 0.0,
    rel_tol: 1e-13,
    max_intervals: 20_000,
};

/// Nondecreasing concave piecewise-linear `h` with `h(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcavePLF {
    knots: Vec<f64>,
    slopes: Vec<f64>,
    values: Vec<f64>,
    delta: f64,
    /// Translation applied to `ξ` before evaluating `h` (nonzero when the
    /// support starts below 0).
    shift: f64,
    residuals: Vec<f64>,
}

/// Value of `h` and whether it came from extending the last segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HValue {
    pub value: f64,
    pub extrapolated: bool,
}

impl ConcavePLF {
    /// Assemble from knots `x_0 = 0 < x_1 < …` and slopes `ε_1 > ε_2 > … > 0`.
    pub fn from_knots(knots: Vec<f64>, slopes: Vec<f64>, delta: f64) -> Result<Self> {
        if knots.len() != slopes.len() + 1 || slopes.is_empty() {
            return Err(Error::Precondition(format!(
                "need one more knot than slopes ({} knots, {} slopes)",
                knots.len(),
                slopes.len()
            )));
        }
        if knots[0] != 0.0 {
            return Err(Error::invalid("x_0", knots[0], "first knot must be 0"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition(
                "knots must be strictly increasing".into(),
            ));
        }
        if slopes.windows(2).any(|w| !(w[1] < w[0])) || !(slopes[slopes.len() - 1] > 0.0) {
            return Err(Error::Precondition(
                "slopes must be positive and strictly decreasing".into(),
            ));
        }
        let mut values = vec![0.0];
        for (i, e) in slopes.iter().enumerate() {
            values.push(values[i] + e * (knots[i + 1] - knots[i]));
        }
        Ok(ConcavePLF {
            knots,
            slopes,
            values,
            delta,
            shift: 0.0,
            residuals: Vec::new(),
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
    /// `ε_1, ε_2, …`; `slopes()[n-1]` is the slope on `(x_{n-1}, x_n]`.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }
    /// `h(x_0), h(x_1), …`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn shift(&self) -> f64 {
        self.shift
    }
    pub fn blocks(&self) -> usize {
        self.slopes.len()
    }
    /// Block identity residuals recorded during construction.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// `h(x)`; past the last knot the last slope is extended and flagged.
    pub fn eval(&self, x: f64) -> Result<HValue> {
        if !(x >= 0.0) {
            return Err(Error::invalid("x", x, "h is defined on [0, ∞)"));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> HValue {
        let n = self.knots.len();
        let last = self.knots[n - 1];
        if x > last {
            return HValue {
                value: self.values[n - 1] + self.slopes[n - 2] * (x - last),
                extrapolated: true,
            };
        }
        // segment k covers (x_{k-1}, x_k]
        let k = self.knots.partition_point(|&t| t < x).max(1);
        HValue {
            value: self.values[k - 1] + self.slopes[k - 1] * (x - self.knots[k - 1]),
            extrapolated: false,
        }
    }
}

impl ConcavePLF {
    /// CSV with header `n,x_n,eps_n,h_xn`; row 0 carries `eps_n = 0`.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# delta={}\n# shift={}\nn,x_n,eps_n,h_xn\n",
            self.delta, self.shift
        );
        for (i, (x, v)) in self.knots.iter().zip(&self.values).enumerate() {
            let e = if i == 0 { 0.0 } else { self.slopes[i - 1] };
            out.push_str(&format!("{i},{x},{e},{v}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut delta = f64::NAN;
        let mut shift = 0.0;
        let mut knots = Vec::new();
        let mut slopes = Vec::new();
        let mut values = Vec::new();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(c) = line.strip_prefix('#') {
                if let Some((k, v)) = c.trim().split_once('=') {
                    match k.trim() {
                        "delta" => delta = num(v)?,
                        "shift" => shift = num(v)?,
                        _ => {}
                    }
                }
                continue;
            }
            if line.starts_with("n,") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Parse(format!("expected 4 columns: {line:?}")));
            }
            let i: usize = cols[0]
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad row index {:?}: {e}", cols[0])))?;
            if i != knots.len() {
                return Err(Error::Parse(format!("row {i} out of order")));
            }
            knots.push(num(cols[1])?);
            if i > 0 {
                slopes.push(num(cols[2])?);
            }
            values.push(num(cols[3])?);
        }
        let mut h = ConcavePLF::from_knots(knots, slopes, delta)?;
        h.values = values;
        h.shift = shift;
        Ok(h)
    }
}

/// Convenience for [`ConcavePLF::eval`].
pub fn eval_h(h: &ConcavePLF, x: f64) -> Result<HValue> {
    h.eval(x)
}

/// `∫_a^b e^{c + ε(y-a)} F̄(y) dy`, the variable part of the block functional
/// after integrating by parts.
fn excess_integral(log_tail: &dyn Fn(f64) -> f64, c: f64, eps: f64, a: f64, b: f64) -> f64 {
    let f = |y: f64| (c + eps * (y - a) + log_tail(y)).exp();
    if a > 0.0 && b / a > 8.0 {
        integrate_log(f, a, b, BLOCK_QUAD).value
    } else {
        integrate(f, a, b, BLOCK_QUAD).value
    }
}

/// Construct `h` over `n_blocks` blocks.
///
/// Knots are placed by doubling from `max(2^{n+1}, 2 x_n)` until the overshoot
/// condition `E{e^{ε_n(ξ-x_n)}; ξ ∈ (x_n, X]} + e^{ε_n(X-x_n)} F̄(X) > 1 + δ`
/// holds (with `ε_0 = 1`), and each slope solves its block identity by
/// bisection on `(0, ε_n)`.
pub fn build_h(dist: &ParametricDist, delta: f64, n_blocks: usize) -> Result<ConcavePLF> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("delta", delta, "must lie in (0, 1]"));
    }
    if n_blocks == 0 {
        return Err(Error::Precondition("need at least one block".into()));
    }
    if dist.classify() != TailClass::Heavy {
        return Err(Error::Precondition(
            "build_h needs a heavy-tailed law; for light tails the overshoot point may not exist"
                .into(),
        ));
    }
    // F̄(0) = 1 is required; translate the support onto [0, ∞) if needed
    let shift = (-dist.support_low()).max(0.0);
    let d = *dist;
    let log_tail = move |y: f64| d.log_tail(y - shift);

    let mut knots = vec![0.0];
    let mut slopes: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = vec![0.0];
    let mut residuals = Vec::new();

    for n in 0..n_blocks {
        let a = knots[n];
        let h_a = values[n];
        let eps_prev = if n == 0 { 1.0 } else { slopes[n - 1] };
        let tail_a = log_tail(a).exp();
        // block functional minus F̄(a), scaled by e^{h(a)}
        let excess = |c: f64, eps: f64, x: f64| eps * excess_integral(&log_tail, c, eps, a, x);

        let mut x_next = (2f64.powi(n as i32 + 1)).max(2.0 * a);
        loop {
            if tail_a + excess(0.0, eps_prev, x_next) > 1.0 + delta {
                break;
            }
            x_next *= 2.0;
            if !x_next.is_finite() || x_next > 1e300 {
                return Err(Error::Numeric(format!(
                    "no overshoot point found for block {} (slope {eps_prev}, from x = {a})",
                    n + 1
                )));
            }
        }

        let target = delta / 2f64.powi(n as i32 + 1);
        let (mut lo, mut hi) = (0.0, eps_prev);
        if !(excess(h_a, hi, x_next) > target) {
            return Err(Error::Numeric(format!(
                "slope root not bracketed in block {}: excess at ε = {hi} is {}, target {target}",
                n + 1,
                excess(h_a, hi, x_next)
            )));
        }
        while (hi - lo) > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if excess(h_a, mid, x_next) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let eps = 0.5 * (lo + hi);
        if !(eps > 0.0 && eps < eps_prev) {
            return Err(Error::Numeric(format!(
                "slope {eps} in block {} is not in (0, {eps_prev})",
                n + 1
            )));
        }
        residuals.push(excess(h_a, eps, x_next) - target);
        slopes.push(eps);
        knots.push(x_next);
        values.push(h_a + eps * (x_next - a));
    }

    Ok(ConcavePLF {
        knots,
        slopes,
        values,
        delta,
        shift,
        residuals,
    })
}

/// `∫_a^b g(y) dy` for a block integrand; handles the integrable
/// singularity some densities have at 0 through `y = b t²`.
fn block_quad<G: Fn(f64) -> f64>(g: G, a: f64, b: f64) -> f64 {
    if a == 0.0 {
        integrate(|t| 2.0 * b * t * g(b * t * t), 0.0, 1.0, BLOCK_QUAD).value
    } else if b / a > 8.0 {
        integrate_log(g, a, b, BLOCK_QUAD).value
    } else {
        integrate(g, a, b, BLOCK_QUAD).value
    }
}

/// `E{ξ e^{h(ξ)}; ξ ∈ (x_n, x_N]}` with `N` the last built block.
pub fn divergence_witness(h: &ConcavePLF, dist: &ParametricDist, n: usize) -> Result<f64> {
    let blocks = h.blocks();
    if n >= blocks {
        return Err(Error::Precondition(format!(
            "witness index {n} needs a block beyond it; {blocks} blocks built"
        )));
    }
    let shift = h.shift;
    let mut total = 0.0;
    for k in n + 1..=blocks {
        let (a, b) = (h.knots[k - 1], h.knots[k]);
        let (ha, eps) = (h.values[k - 1], h.slopes[k - 1]);
        total += block_quad(
            |y| {
                let d = dist.log_pdf(y - shift);
                if d == f64::NEG_INFINITY {
                    0.0
                } else {
                    y * (ha + eps * (y - a) + d).exp()
                }
            },
            a,
            b,
        );
    }
    Ok(total)
}

/// `E{e^{h(ξ)}; ξ ∈ (x_{k-1}, x_k]}` from the density.
pub fn block_mass(h: &ConcavePLF, dist: &ParametricDist, k: usize) -> Result<f64> {
    if k == 0 || k > h.blocks() {
        return Err(Error::Precondition(format!("block {k} not built")));
    }
    let (a, b) = (h.knots[k - 1], h.knots[k]);
    let (ha, eps) = (h.values[k - 1], h.slopes[k - 1]);
    let shift = h.shift;
    Ok(block_quad(
        |y| {
            let d = dist.log_pdf(y - shift);
            if d == f64::NEG_INFINITY {
                0.0
            } else {
                (ha + eps * (y - a) + d).exp()
            }
        },
        a,
        b,
    ))
}

/// `h_b(x) = min{h(x), b x}`, with an extra knot where the ray crosses `h`.
pub fn truncate_hb(h: &ConcavePLF, b: f64) -> Result<ConcavePLF> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::invalid("b", b, "must be positive"));
    }
    if b >= h.slopes[0] {
        return Ok(h.clone());
    }
    // h(x)/x is nonincreasing; the crossing sits in the first segment whose
    // right end satisfies h(x_k) ≤ b x_k
    let k = (1..h.knots.len()).find(|&k| h.values[k] <= b * h.knots[k]);
    let mut out = ConcavePLF {
        knots: vec![0.0],
        slopes: vec![b],
        values: vec![0.0],
        delta: h.delta,
        shift: h.shift,
        residuals: Vec::new(),
    };
    let Some(k) = k else {
        let last = *h.knots.last().expect("knots nonempty");
        out.knots.push(last);
        out.values.push(b * last);
        return Ok(out);
    };
    let (x0, h0, e) = (h.knots[k - 1], h.values[k - 1], h.slopes[k - 1]);
    let cross = (h0 - e * x0) / (b - e);
    let start = if (cross - h.knots[k]).abs() <= 1e-12 * h.knots[k] {
        out.knots.push(h.knots[k]);
        out.values.push(h.values[k]);
        k + 1
    } else {
        out.knots.push(cross);
        out.values.push(b * cross);
        out.slopes.push(e);
        out.knots.push(h.knots[k]);
        out.values.push(h.values[k]);
        k + 1
    };
    for j in start..h.knots.len() {
        out.slopes.push(h.slopes[j - 1]);
        out.knots.push(h.knots[j]);
        out.values.push(h.values[j]);
    }
    Ok(out)
}

/// `A_n = E e^{h(ξ_1 + … + ξ_n)}` on the lattice `F^{*n}` (grid masses only).
pub fn a_n(f: &LatticeDist, h: &ConcavePLF, n: usize) -> Result<f64> {
    if f.offset() < -1e-9 * f.step() {
        return Err(Error::Precondition(format!(
            "A_n needs support on [0, ∞); lattice offset is {}",
            f.offset()
        )));
    }
    let p = conv_power(f, n)?;
    Ok(p.masses()
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(i, m)| m * h.eval_unchecked(p.x(i).max(0.0)).value.exp())
        .sum())
}

/// Whether `Σ_n n P{τ = n} (1+ε)^{n-1}` converges, the sufficient condition
/// for `E τ A_{τ-1} < ∞` when `E e^{h(ξ)} ≤ 1 + ε`.
pub fn weighted_moment_condition(tau: &CountingDist, eps: f64) -> Result<bool> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", eps, "must be finite and nonnegative"));
    }
    Ok(match tau {
        CountingDist::Geometric { p } => p * (1.0 + eps) < 1.0,
        CountingDist::Poisson { .. }
        | CountingDist::Deterministic { .. }
        | CountingDist::Explicit { .. } => true,
    })
}
