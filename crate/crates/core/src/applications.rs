//! Pipelines built on stopped sums: random-walk suprema, compound Poisson
//! laws, infinitely divisible laws and the mean of a branching process.
//!
//! Each pipeline returns a [`TailRatioCurve`] tagged with a
//! `theoretical_c` metadata entry holding the limit the ratio should approach.

use crate::convolve::{
    conv, pair_tail, stopped_sum, stopped_sum_weights, tail_ratio_curve, RatioSource,
    TailRatioCurve,
};
use crate::dist::{
    discretize, discretize_tail, integrated_tail, CountingDist, GridSpec, LatticeDist, LatticePair,
    ParametricDist, Rounding, TailBracket,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::simulate::SupremumSample;

/// `F̄^{*2}/F̄` with brackets, and the long-tail ratio `F̄(x+1)/F̄(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubexpDiagnostic {
    pub ratio: TailRatioCurve,
    pub long_tail: Vec<(f64, f64)>,
}

pub fn subexp_diagnostic(
    dist: &ParametricDist,
    grid: GridSpec,
    xs: &[f64],
) -> Result<SubexpDiagnostic> {
    if dist.support_low() < 0.0 {
        return Err(Error::Precondition(format!(
            "subexponential diagnostic needs support on [0, ∞), got lower end {}",
            dist.support_low()
        )));
    }
    let ratio = tail_ratio_curve(
        RatioSource::Parametric { dist, grid },
        &CountingDist::deterministic(2),
        xs,
    )?
    .with_meta("theoretical_c", 2);
    let long_tail = xs
        .iter()
        .map(|&x| (x, (dist.log_tail(x + 1.0) - dist.log_tail(x)).exp()))
        .collect();
    Ok(SubexpDiagnostic { ratio, long_tail })
}

/// Geometric compound `ψ_1 + … + ψ_τ`, `P{τ = k} = (1-p) p^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricCompoundSpec {
    ladder: LatticeDist,
    p: f64,
}

impl GeometricCompoundSpec {
    pub fn new(ladder: LatticeDist, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(
                "p",
                p,
                "defect parameter must lie in (0, 1)",
            ));
        }
        if ladder.offset() < -1e-9 * ladder.step() {
            return Err(Error::Precondition(format!(
                "ladder heights must be nonnegative; lattice starts at {}",
                ladder.offset()
            )));
        }
        Ok(GeometricCompoundSpec { ladder, p })
    }

    pub fn from_parametric(
        ladder: &ParametricDist,
        p: f64,
        grid: GridSpec,
        rounding: Rounding,
    ) -> Result<Self> {
        Self::new(discretize(ladder, grid.step, grid.x_max, rounding)?, p)
    }

    pub fn ladder(&self) -> &LatticeDist {
        &self.ladder
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Law of `M` as the geometric compound of ladder heights.
pub fn supremum_pk(spec: &GeometricCompoundSpec) -> Result<LatticeDist> {
    stopped_sum(&spec.ladder, &CountingDist::geometric(spec.p)?)
}

/// Where the ladder law comes from in [`supremum_curve`].
#[derive(Debug, Clone)]
pub enum LadderInput<'a> {
    Supplied(GeometricCompoundSpec),
    /// Ladder heights and defect from simulated paths.
    Simulated {
        sample: &'a SupremumSample,
        grid: GridSpec,
        /// Batches used for the standard error of `P{M > x}`.
        batches: usize,
    },
    /// `Ḡ(x) = min(1, (1-p)/(p m) F̄^I(x))`, the asymptotic form of the ladder
    /// tail. Consistent with the limit, not an exact ladder law.
    Asymptotic {
        p: f64,
        grid: GridSpec,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupremumCurve {
    /// `P{M > x} / F̄^I(x)`.
    pub curve: TailRatioCurve,
    /// `m = -Eξ`.
    pub m: f64,
    /// `P{M > x}` as computed, with a standard error when the ladder was simulated.
    pub supremum_tail: Vec<(f64, TailBracket, Option<f64>)>,
    pub label: &'static str,
}

/// Ratio of the supremum tail to `F̄^I(x) = ∫_x^∞ F̄(y) dy`, plateau `1/m`.
pub fn supremum_curve(
    dist: &ParametricDist,
    ladder: LadderInput<'_>,
    xs: &[f64],
) -> Result<SupremumCurve> {
    let mean = dist.mean();
    if !(mean < 0.0) {
        return Err(Error::Precondition(format!(
            "supremum needs a negative drift, got mean {mean}"
        )));
    }
    let m = -mean;
    let fi = integrated_tail(dist)?;
    let (pair, se, label): (LatticePair, Option<Vec<f64>>, &'static str) = match ladder {
        LadderInput::Supplied(spec) => (LatticePair::exact(supremum_pk(&spec)?), None, "supplied"),
        LadderInput::Simulated {
            sample,
            grid,
            batches,
        } => {
            let build = |s: &SupremumSample, rounding: Rounding| -> Result<LatticeDist> {
                let p = s.p_hat().estimate;
                let heights = crate::simulate::EmpiricalTail::new(s.ladder_heights.clone())?;
                let g = heights.to_lattice(grid, rounding)?;
                supremum_pk(&GeometricCompoundSpec::new(g, p)?)
            };
            let pair = LatticePair {
                lower: build(sample, Rounding::Down)?,
                upper: build(sample, Rounding::Up)?,
            };
            let se = if batches >= 2 {
                let per: Vec<Vec<f64>> = sample
                    .batches(batches)
                    .iter()
                    .map(|b| {
                        let l = build(b, Rounding::Up)?;
                        Ok(xs.iter().map(|&x| l.tail(x).mid()).collect())
                    })
                    .collect::<Result<_>>()?;
                let k = batches as f64;
                Some(
                    (0..xs.len())
                        .map(|j| {
                            let mean = per.iter().map(|v| v[j]).sum::<f64>() / k;
                            let var =
                                per.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (k - 1.0);
                            (var / k).sqrt()
                        })
                        .collect(),
                )
            } else {
                None
            };
            (pair, se, "simulated")
        }
        LadderInput::Asymptotic { p, grid } => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(
                    "p",
                    p,
                    "defect parameter must lie in (0, 1)",
                ));
            }
            let c = (1.0 - p) / (p * m);
            let tail = |x: f64| (c * fi.integral(x.max(0.0))).min(1.0);
            let build = |r: Rounding| -> Result<LatticeDist> {
                let g = discretize_tail(tail, 0.0, grid, r)?;
                supremum_pk(&GeometricCompoundSpec::new(g, p)?)
            };
            let pair = LatticePair {
                lower: build(Rounding::Down)?,
                upper: build(Rounding::Up)?,
            };
            (pair, None, "asymptotic-consistent")
        }
    };
    let mut curve = TailRatioCurve::new(1.0 / m)
        .with_meta("theoretical_c", 1.0 / m)
        .with_meta("ladder", label);
    let mut supremum_tail = Vec::with_capacity(xs.len());
    for (j, &x) in xs.iter().enumerate() {
        let t = pair_tail(&pair, x);
        curve.push_exact_den(x, t, fi.integral(x).ln());
        supremum_tail.push((x, t, se.as_ref().map(|v| v[j])));
    }
    Ok(SupremumCurve {
        curve,
        m,
        supremum_tail,
        label,
    })
}

/// Light-tailed stopped sums through the tilt at `γ̂`: the curve is
/// `E φ^{τ-1} · Ḡ^{*ν}(x)/Ḡ(x)`, whose plateau is `E τ φ^{τ-1}(γ̂)` when `G` is
/// subexponential.
pub fn tilted_ratio_curve(
    dist: &ParametricDist,
    tau: &CountingDist,
    grid: GridSpec,
    xs: &[f64],
) -> Result<TailRatioCurve> {
    let profile = crate::dist::gamma_hat(&(*dist).into())?;
    if profile.is_heavy() {
        return Err(Error::Precondition(
            "heavy-tailed law: the tilted route needs γ̂ > 0".into(),
        ));
    }
    if !profile.phi_hat.is_finite() {
        return Err(Error::Precondition(format!(
            "φ(γ̂) is infinite at γ̂ = {}",
            profile.gamma_hat
        )));
    }
    let tilted = crate::tilt::tilt_parametric(dist, profile.gamma_hat, grid)?;
    let phi = tilted.phi;
    let e_phi_tau = tau.pgf(phi);
    if !e_phi_tau.is_finite() {
        return Err(Error::Divergent(format!(
            "E φ(γ̂)^τ diverges at φ(γ̂) = {phi}"
        )));
    }
    let nu = tau.reweighted(phi)?;
    let scale = e_phi_tau / phi;
    let num = tilted.pair.try_map(|g| stopped_sum(g, &nu))?;
    let c = crate::tilt::tilted_plateau_constant(tau, phi)?;
    let mut curve = TailRatioCurve::new(c)
        .with_meta("theoretical_c", c)
        .with_meta("gamma_hat", profile.gamma_hat)
        .with_meta("phi_hat", phi);
    for &x in xs {
        let n = pair_tail(&num, x);
        curve.push(
            x,
            TailBracket {
                lo: n.lo * scale,
                hi: n.hi * scale,
            },
            pair_tail(&tilted.pair, x),
        );
    }
    Ok(curve)
}

/// `e^{-t} Σ t^n/n! F^{*n}`.
pub fn compound_poisson(f: &LatticeDist, t: f64) -> Result<LatticeDist> {
    stopped_sum(f, &CountingDist::poisson(t)?)
}

/// Ratio curve `Ḡ(x)/F̄(x)` for the compound Poisson law, with limit
/// `t e^{t(φ(γ̂)-1)}` (`= t` for heavy tails).
pub fn compound_poisson_curve(
    src: RatioSource<'_>,
    t: f64,
    phi_hat: f64,
    xs: &[f64],
) -> Result<TailRatioCurve> {
    let c = crate::tilt::compound_poisson_constant(t, phi_hat)?;
    Ok(tail_ratio_curve(src, &CountingDist::poisson(t)?, xs)?.with_meta("theoretical_c", c))
}

/// Small-jump part of a Lévy measure, on `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum SmallJumps {
    None,
    /// Point intensities `(x, λ)` with `x ∈ (0, 1]`.
    Atoms(Vec<(f64, f64)>),
    /// Density `c x^{-1-β}` on `(0, 1]`; the first moment is finite iff `β < 1`.
    Stable {
        c: f64,
        beta: f64,
    },
}

/// Drift, big jumps `μ F` on `(1, ∞)` and a small-jump measure.
#[derive(Debug, Clone, PartialEq)]
pub struct LevySpec {
    pub drift: f64,
    pub big: ParametricDist,
    pub mu: f64,
    pub small: SmallJumps,
}

impl LevySpec {
    pub fn new(drift: f64, big: ParametricDist, mu: f64, small: SmallJumps) -> Result<Self> {
        if !(drift >= 0.0 && drift.is_finite()) {
            return Err(Error::invalid(
                "drift",
                drift,
                "must be finite and nonnegative",
            ));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid(
                "mu",
                mu,
                "big-jump intensity must be positive; with μ = 0 the tail ratio is undefined",
            ));
        }
        if big.support_low() < 1.0 - 1e-12 {
            return Err(Error::Precondition(format!(
                "big jumps live on (1, ∞); distribution starts at {}",
                big.support_low()
            )));
        }
        match &small {
            SmallJumps::None => {}
            SmallJumps::Atoms(a) => {
                if let Some((x, l)) = a
                    .iter()
                    .find(|(x, l)| !(*x > 0.0 && *x <= 1.0 && *l >= 0.0 && l.is_finite()))
                {
                    return Err(Error::Precondition(format!(
                        "small-jump atom ({x}, {l}) must sit in (0, 1] with finite intensity"
                    )));
                }
            }
            SmallJumps::Stable { c, beta } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::invalid("c", *c, "must be positive"));
                }
                if !(*beta > 0.0) {
                    return Err(Error::invalid("beta", *beta, "must be positive"));
                }
                if *beta >= 1.0 {
                    return Err(Error::Divergent(format!(
                        "∫_0^1 x ν(dx) diverges for small-jump index β = {beta} ≥ 1"
                    )));
                }
            }
        }
        Ok(LevySpec {
            drift,
            big,
            mu,
            small,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfDivResult {
    pub h: LatticePair,
    /// Light part `G`: drift plus compound Poisson of the kept small jumps.
    pub light: LatticePair,
    /// `ν̄(x)/H̄(x)` with `ν̄ = μ F̄`.
    pub curve: TailRatioCurve,
    /// First moment of the small jumps below one grid cell, moved into the drift.
    pub cut_moment: f64,
}

/// Small jumps at or above the cut, as `(x, λ)` cells, plus the moment of the cut part.
fn small_jump_cells(small: &SmallJumps, cut: f64) -> (Vec<(f64, f64)>, f64) {
    match small {
        SmallJumps::None => (Vec::new(), 0.0),
        SmallJumps::Atoms(a) => {
            let moment = a.iter().filter(|(x, _)| *x < cut).map(|(x, l)| x * l).sum();
            (
                a.iter().copied().filter(|(x, _)| *x >= cut).collect(),
                moment,
            )
        }
        SmallJumps::Stable { c, beta } => {
            let moment = if cut >= 1.0 {
                c / (1.0 - beta)
            } else {
                c * cut.powf(1.0 - beta) / (1.0 - beta)
            };
            let mut cells = Vec::new();
            let mut a = cut;
            while a < 1.0 - 1e-12 {
                let b = (a + cut).min(1.0);
                // intensity of [a, b), located at a
                cells.push((a, c / beta * (a.powf(-beta) - b.powf(-beta))));
                a = b;
            }
            (cells, moment)
        }
    }
}

/// `H = G * CP(F, μ)` with `G` the drift plus compound Poisson small jumps
/// (jumps below one grid cell replaced by their mean), and `ν̄(x)/H̄(x)` on `xs`.
pub fn infdiv_compose(spec: &LevySpec, grid: GridSpec, xs: &[f64]) -> Result<InfDivResult> {
    let step = grid.step;
    let (cells, cut_moment) = small_jump_cells(&spec.small, step);
    let drift = spec.drift + cut_moment;
    let big = LatticePair::from_parametric(&spec.big, grid)?;
    let len = big.upper.len().max(big.lower.len());
    let total: f64 = cells.iter().map(|(_, l)| l).sum();

    let light_one = |r: Rounding| -> Result<LatticeDist> {
        let k = match r {
            Rounding::Down => (drift / step + 1e-9).floor(),
            Rounding::Up => (drift / step - 1e-9).ceil(),
        };
        let shift = LatticeDist::point_mass(k * step, step)?;
        if total == 0.0 {
            return Ok(shift);
        }
        let mut law = vec![0.0; len];
        for (x, l) in &cells {
            let i = match r {
                Rounding::Down => (x / step + 1e-9).floor(),
                Rounding::Up => (x / step - 1e-9).ceil(),
            } as usize;
            law[i.min(len - 1)] += l / total;
        }
        let drift_part = 1.0 - law.iter().sum::<f64>();
        law[0] += drift_part.max(0.0);
        let small = LatticeDist::raw(step, 0.0, law, 0.0, 0.0);
        conv(&shift, &compound_poisson(&small, total)?)
    };
    let light = LatticePair {
        lower: light_one(Rounding::Down)?,
        upper: light_one(Rounding::Up)?,
    };
    let cp = big.try_map(|l| compound_poisson(l, spec.mu))?;
    let h = LatticePair {
        lower: conv(&light.lower, &cp.lower)?,
        upper: conv(&light.upper, &cp.upper)?,
    };
    let mut curve = TailRatioCurve::new(1.0)
        .with_meta("theoretical_c", 1)
        .with_meta("cut_moment", cut_moment);
    for &x in xs {
        let nu = spec.mu * spec.big.tail(x);
        curve.push(x, TailBracket { lo: nu, hi: nu }, pair_tail(&h, x));
    }
    Ok(InfDivResult {
        h,
        light,
        curve,
        cut_moment,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingMean {
    /// `EZ(t)` brackets on the requested grid.
    pub ez: Vec<(f64, TailBracket)>,
    /// `EZ(t)/F̄(t)`.
    pub curve: TailRatioCurve,
    pub n_max: usize,
    /// `A^{n_max}`, which bounds the neglected part of the series.
    pub remainder_bound: f64,
}

/// `EZ(t) = (1-A) Σ_{n≥1} A^{n-1} F̄^{*n}(t)`, truncated at `n_max` (default:
/// smallest `n` with `A^n ≤ 1e-12`).
pub fn branching_mean(
    src: RatioSource<'_>,
    a: f64,
    ts: &[f64],
    n_max: Option<usize>,
) -> Result<BranchingMean> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::invalid(
            "A",
            a,
            "mean offspring must lie in (0, 1) (subcritical process)",
        ));
    }
    let n_max = n_max.unwrap_or_else(|| (1e-12f64.ln() / a.ln()).ceil().max(1.0) as usize);
    let remainder_bound = a.powi(n_max as i32);
    let mut weights = vec![0.0; n_max + 1];
    for (n, w) in weights.iter_mut().enumerate().skip(1) {
        *w = (1.0 - a) * a.powi(n as i32 - 1);
    }
    let series =
        |l: &LatticeDist| stopped_sum_weights(l, &weights, remainder_bound, Exec::default());
    let mut curve =
        TailRatioCurve::new(1.0 / (1.0 - a)).with_meta("theoretical_c", 1.0 / (1.0 - a));
    let mut ez = Vec::with_capacity(ts.len());
    match src {
        RatioSource::Lattice(f) => {
            let s = series(f)?;
            for &t in ts {
                let b = s.tail(t);
                curve.push(t, b, f.tail(t));
                ez.push((t, b));
            }
        }
        RatioSource::Parametric { dist, grid } => {
            let pair = LatticePair::from_parametric(dist, grid)?.try_map(series)?;
            for &t in ts {
                let b = pair_tail(&pair, t);
                curve.push_exact_den(t, b, dist.log_tail(t));
                ez.push((t, b));
            }
        }
    }
    Ok(BranchingMean {
        ez,
        curve,
        n_max,
        remainder_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_ladder() {
        // G = δ_1, p = 1/2: P{M > 1.5} = P{τ ≥ 2} = 1/4
        let g = LatticeDist::point_mass(1.0, 0.5).unwrap().padded_to(200);
        let spec = GeometricCompoundSpec::new(g, 0.5).unwrap();
        let m = supremum_pk(&spec).unwrap();
        let t = m.tail(1.5);
        assert!((t.lo - 0.25).abs() < 1e-12 && (t.hi - 0.25).abs() < 1e-11);
        assert!((m.tail(0.0).mid() - 0.5).abs() < 1e-11);
        assert!((m.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exponential_ladder_closed_form() {
        // geometric compound of Exp(λ): P{M > x} = p e^{-λ(1-p) x}
        let (lambda, p) = (1.0, 0.2);
        let g = ParametricDist::exponential(lambda).unwrap();
        let grid = GridSpec::new(0.02, 40.0).unwrap();
        let lo = supremum_pk(
            &GeometricCompoundSpec::from_parametric(&g, p, grid, Rounding::Down).unwrap(),
        )
        .unwrap();
        let hi = supremum_pk(
            &GeometricCompoundSpec::from_parametric(&g, p, grid, Rounding::Up).unwrap(),
        )
        .unwrap();
        for x in [0.5, 2.0, 5.0] {
            let exact = p * (-lambda * (1.0 - p) * x).exp();
            assert!(lo.tail(x).lo <= exact && exact <= hi.tail(x).hi, "x = {x}");
            let mid = 0.5 * (lo.tail(x).lo + hi.tail(x).hi);
            assert!(
                (mid / exact - 1.0).abs() < 0.02,
                "x = {x}: {mid} vs {exact}"
            );
        }
    }

    #[test]
    fn poisson_point_mass_tail() {
        let f = LatticeDist::point_mass(1.0, 1.0).unwrap().padded_to(30);
        let t = 1.5;
        let g = compound_poisson(&f, t).unwrap();
        for k in 1..6usize {
            let oracle: f64 = 1.0
                - (0..k)
                    .map(|j| CountingDist::poisson(t).unwrap().pmf(j))
                    .sum::<f64>();
            assert!(
                (g.tail(k as f64 - 0.5).mid() - oracle).abs() < 1e-11,
                "k = {k}"
            );
        }
    }

    #[test]
    fn semigroup() {
        let f = discretize(
            &ParametricDist::pareto(2.0, 1.0).unwrap(),
            1.0,
            300.0,
            Rounding::Down,
        )
        .unwrap();
        let a = compound_poisson(&f, 0.5).unwrap();
        let b = compound_poisson(&f, 1.0).unwrap();
        let ab = conv(&a, &b).unwrap();
        let c = compound_poisson(&f, 1.5).unwrap();
        for x in [0.0, 5.0, 50.0, 250.0] {
            assert!((ab.tail(x).lo - c.tail(x).lo).abs() < 1e-9);
            assert!((ab.tail(x).hi - c.tail(x).hi).abs() < 1e-9);
        }
    }

    #[test]
    fn branching_edge_cases() {
        let f = discretize(
            &ParametricDist::pareto(2.0, 1.0).unwrap(),
            1.0,
            200.0,
            Rounding::Down,
        )
        .unwrap();
        let b = branching_mean(RatioSource::Lattice(&f), 0.5, &[0.0], None).unwrap();
        assert!((b.ez[0].1.mid() - 1.0).abs() < 1e-11);
        assert!(branching_mean(RatioSource::Lattice(&f), 1.0, &[0.0], None).is_err());
        // A → 0: EZ ≈ F̄
        let tiny = branching_mean(RatioSource::Lattice(&f), 1e-9, &[20.0], None).unwrap();
        assert!((tiny.curve.points[0].ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn levy_validation_and_bounds() {
        let big = ParametricDist::pareto(2.0, 1.0).unwrap();
        assert!(LevySpec::new(0.0, big, 0.0, SmallJumps::None).is_err());
        assert!(matches!(
            LevySpec::new(0.0, big, 1.0, SmallJumps::Stable { c: 1.0, beta: 1.2 }),
            Err(Error::Divergent(_))
        ));
        let spec = LevySpec::new(0.3, big, 2.0, SmallJumps::Stable { c: 1.0, beta: 0.5 }).unwrap();
        let grid = GridSpec::new(0.25, 100.0).unwrap();
        let r = infdiv_compose(&spec, grid, &[10.0, 40.0]).unwrap();
        assert!(r.cut_moment > 0.0);
        let mu = 2.0f64;
        for x in [5.0, 20.0, 60.0] {
            let h = r.h.lower.tail(x).lo;
            let g_cdf = r.light.lower.cdf_grid(x);
            let f_tail = discretize(&big, 0.25, 100.0, Rounding::Down)
                .unwrap()
                .tail(x)
                .lo;
            assert!(h >= (-mu).exp() * r.light.lower.tail(x).lo - 1e-15);
            assert!(h >= (1.0 - (-mu).exp()) * f_tail * g_cdf * (1.0 - 1e-12));
        }
    }
}
