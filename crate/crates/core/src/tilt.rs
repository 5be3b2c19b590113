//! Exponential change of measure on lattices.
//!
//! `G(du) = e^{γu} F(du) / φ(γ)` and `P{ν = k} = φ^k P{τ = k} / E φ^τ`, so that
//! `G^{*ν}(du) · E φ^τ = e^{γu} F^{*τ}(du)`.

use crate::convolve::{stopped_sum_with, SeriesOpts};
use crate::dist::{
    CountingDist, Family, GridSpec, LatticeDist, LatticePair, ParametricDist, SERIES_TOL,
};
use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_to_inf, QuadOpts};

/// Largest `e^{γ x} ρ / φ` accepted when tilting.
pub const MAX_AMPLIFICATION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TiltedPair {
    pub gamma: f64,
    pub phi: f64,
    pub tilted: LatticeDist,
    pub nu: CountingDist,
    pub e_phi_tau: f64,
    /// Bound on the share of tilted mass coming from the untilted remainder.
    pub amplification: f64,
}

pub fn tilt(f: &LatticeDist, tau: &CountingDist, gamma: f64) -> Result<TiltedPair> {
    if !gamma.is_finite() {
        return Err(Error::invalid("gamma", gamma, "must be finite"));
    }
    let w: Vec<f64> = f
        .masses()
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
    // the remainder is tilted as if it sat at the last grid point
    let at_last = (gamma * f.last_x()).exp();
    let worst = at_last.max((gamma * f.offset()).exp());
    let phi = w.iter().sum::<f64>() + at_last * f.remainder();
    if !(phi.is_finite() && phi > 0.0) {
        return Err(Error::Numeric(format!("φ(γ) = {phi} at γ = {gamma}")));
    }
    let amplification = worst * f.remainder() / phi;
    if amplification > MAX_AMPLIFICATION {
        return Err(Error::Precondition(format!(
            "tilting by γ = {gamma} amplifies the lattice remainder to {amplification:.3e} \
             of the tilted mass (limit {MAX_AMPLIFICATION:e}); extend the grid"
        )));
    }
    let e_phi_tau = tau.pgf(phi);
    if !e_phi_tau.is_finite() {
        return Err(Error::Divergent(format!(
            "E φ^τ diverges at φ(γ) = {phi}: need p·φ < 1 for geometric τ"
        )));
    }
    let nu = tau.reweighted(phi)?;
    let tilted = LatticeDist::raw(
        f.step(),
        f.offset(),
        w.into_iter().map(|m| m / phi).collect(),
        at_last * f.remainder_beyond() / phi,
        at_last * f.remainder_unplaced() / phi,
    );
    Ok(TiltedPair {
        gamma,
        phi,
        tilted,
        nu,
        e_phi_tau,
        amplification,
    })
}

/// Tilted law of a closed-form distribution on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedLattices {
    pub gamma: f64,
    /// `φ(γ)` by quadrature.
    pub phi: f64,
    /// Cell masses of `G` placed at the left (`lower`) and right (`upper`) cell ends.
    pub pair: LatticePair,
}

/// Discretize `G(dy) = e^{γy} F(dy)/φ(γ)` by integrating the tilted density
/// over each grid cell in log space, so neither `e^{γy}` nor `f(y)` has to be
/// representable on its own.
pub fn tilt_parametric(
    dist: &ParametricDist,
    gamma: f64,
    grid: GridSpec,
) -> Result<TiltedLattices> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(
            "gamma",
            gamma,
            "must be finite and nonnegative",
        ));
    }
    if let Family::Degenerate { .. } = dist.family() {
        return Err(Error::Unsupported(
            "tilting a point mass is the identity".into(),
        ));
    }
    let low = dist.support_low();
    let step = grid.step;
    let offset = (low / step + 1e-9).floor() * step;
    if grid.x_max <= low + step {
        return Err(Error::invalid(
            "x_max",
            grid.x_max,
            "grid must extend past the support start",
        ));
    }
    let n = ((grid.x_max - offset) / step - 1e-9).ceil() as usize;
    let density = |y: f64| {
        let d = dist.log_pdf(y);
        if d == f64::NEG_INFINITY {
            0.0
        } else {
            (gamma * y + d).exp()
        }
    };
    let opts = QuadOpts {
        abs_tol: 0.0,
        rel_tol: 1e-12,
        max_intervals: 200,
    };
    let cells: Vec<f64> = (0..n)
        .map(|i| {
            let a = (offset + i as f64 * step).max(low);
            let b = offset + (i + 1) as f64 * step;
            if b <= a {
                0.0
            } else {
                integrate(density, a, b, opts).value
            }
        })
        .collect();
    let top = offset + n as f64 * step;
    let rest = integrate_to_inf(density, top, QuadOpts::rel(1e-12));
    if !rest.converged || !rest.value.is_finite() {
        return Err(Error::Divergent(format!(
            "φ(γ) diverges or failed to converge at γ = {gamma} (tail integral {})",
            rest.value
        )));
    }
    let phi = cells.iter().sum::<f64>() + rest.value;
    let rho = rest.value / phi;
    let mut lower: Vec<f64> = cells.iter().map(|c| c / phi).collect();
    lower.push(0.0);
    let mut upper = vec![0.0];
    upper.extend(cells.iter().map(|c| c / phi));
    Ok(TiltedLattices {
        gamma,
        phi,
        pair: LatticePair {
            lower: LatticeDist::raw(step, offset, lower, rho, 0.0),
            upper: LatticeDist::raw(step, offset, upper, rho, 0.0),
        },
    })
}

/// Both sides of the tilted tail identity at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub x: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentityCheck {
    pub fn rel_err(&self) -> f64 {
        if self.lhs == self.rhs {
            0.0
        } else {
            (self.lhs - self.rhs).abs() / self.lhs.abs().max(self.rhs.abs())
        }
    }
}

/// `Σ_{i: x_i > x} m_i` over grid masses only.
fn grid_tail(l: &LatticeDist, x: f64) -> f64 {
    let j = l.first_above(x);
    l.masses()[j.min(l.len())..].iter().sum()
}

/// `e^{γx} S(x) + ∫_x^{x_last} S(y) γ e^{γy} dy` for the grid tail `S` of `q`.
fn by_parts_tail(q: &LatticeDist, gamma: f64, x: f64) -> f64 {
    let suffix = q.suffix_tails();
    let j = q.first_above(x);
    let s_x = grid_tail(q, x);
    let mut total = (gamma * x).exp() * s_x;
    if j >= q.len() {
        return total;
    }
    // on [x, x_j) the tail is S(x); on [x_i, x_{i+1}) it is suffix[i]
    total += s_x * ((gamma * q.x(j)).exp() - (gamma * x).exp());
    for (i, &s) in suffix.iter().enumerate().take(q.len() - 1).skip(j) {
        if s > 0.0 {
            total += s * ((gamma * q.x(i + 1)).exp() - (gamma * q.x(i)).exp());
        }
    }
    total
}

/// Check `Ḡ^{*ν}(x) E φ^τ = e^{γx} F̄^{*τ}(x) + ∫_x^∞ F̄^{*τ}(y) γ e^{γy} dy` on grid
/// masses, both series truncated at the same `n_max`.
pub fn tilt_tail_identity_check(
    f: &LatticeDist,
    tau: &CountingDist,
    gamma: f64,
    xs: &[f64],
) -> Result<Vec<IdentityCheck>> {
    let pair = tilt(f, tau, gamma)?;
    let n_max = tau.n_max(SERIES_TOL)?;
    let opts = SeriesOpts {
        n_max: Some(n_max),
        ..SeriesOpts::default()
    };
    let g_nu = stopped_sum_with(&pair.tilted, &pair.nu, opts)?;
    let f_tau = stopped_sum_with(f, tau, opts)?;
    Ok(xs
        .iter()
        .map(|&x| IdentityCheck {
            x,
            lhs: grid_tail(&g_nu, x) * pair.e_phi_tau,
            rhs: by_parts_tail(&f_tau, gamma, x),
        })
        .collect())
}

/// `E τ φ^{τ-1}`, summed as a series.
pub fn tilted_plateau_constant(tau: &CountingDist, phi_hat: f64) -> Result<f64> {
    if !(phi_hat >= 1.0 && phi_hat.is_finite()) {
        return Err(Error::invalid(
            "phi_hat",
            phi_hat,
            "must be finite and at least 1",
        ));
    }
    match tau {
        CountingDist::Deterministic { n } => Ok(*n as f64 * phi_hat.powi(*n as i32 - 1)),
        CountingDist::Explicit { pmf } => Ok(pmf
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, q)| k as f64 * q * phi_hat.powi(k as i32 - 1))
            .sum()),
        CountingDist::Geometric { p } if p * phi_hat >= 1.0 => Err(Error::Divergent(format!(
            "E τ φ^(τ-1) diverges for geometric p = {p}, φ = {phi_hat}: p·φ ≥ 1"
        ))),
        _ => {
            // terms k q_k φ^{k-1} in log space; stop once past the peak and negligible
            let log_phi = phi_hat.ln();
            let mut sum = 0.0;
            let mut prev = f64::NEG_INFINITY;
            for k in 1..10_000_000usize {
                let q = tau.pmf(k);
                let term = if q > 0.0 {
                    ((k as f64).ln() + q.ln() + (k as f64 - 1.0) * log_phi).exp()
                } else {
                    0.0
                };
                sum += term;
                if term < prev && term <= 1e-17 * sum {
                    return Ok(sum);
                }
                prev = term;
            }
            Err(Error::Divergent(format!(
                "E τ φ^(τ-1) series did not settle at φ = {phi_hat}"
            )))
        }
    }
}

/// `t e^{t(φ-1)}`.
pub fn compound_poisson_constant(t: f64, phi_hat: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", t, "must be positive"));
    }
    Ok(t * (t * (phi_hat - 1.0)).exp())
}
