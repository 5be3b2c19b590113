//! Acceptance suite, run as a plain binary so its report shows under
//! `cargo test`. Each criterion prints one PASS/FAIL line; the process exits
//! nonzero if any criterion fails or runs past its time budget.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stopsum::applications::{
    branching_mean, compound_poisson, compound_poisson_curve, infdiv_compose, supremum_curve,
    tilted_ratio_curve, LadderInput, LevySpec, SmallJumps,
};
use stopsum::concave::{build_h, divergence_witness};
use stopsum::convolve::{
    conv, liminf_estimate, log_grid, pairwise_lower_bound, snap_to_grid, stopped_sum,
    tail_ratio_curve, RatioSource, Window,
};
use stopsum::dist::{
    discretize, gamma_hat, CountingDist, GridSpec, LatticeDist, ParametricDist, Rounding,
};
use stopsum::exec::Exec;
use stopsum::simulate::{
    estimates_to_csv, simulate_supremum, tilted_tail_estimate, SupremumPolicy,
};
use stopsum::tilt::{tilt, tilt_tail_identity_check, tilted_plateau_constant};

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome, u64);

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn random_lattice(rng: &mut ChaCha8Rng, step: f64) -> LatticeDist {
    let n = rng.random_range(8..40);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut mass: Vec<f64> = raw.iter().map(|m| m / total).collect();
    let fix = 1.0 - mass.iter().sum::<f64>();
    mass[0] += fix;
    LatticeDist::new(step, 0.0, mass, 0.0).unwrap()
}

fn random_tau(rng: &mut ChaCha8Rng) -> CountingDist {
    match rng.random_range(0..3) {
        0 => CountingDist::deterministic(rng.random_range(1..6)),
        1 => CountingDist::geometric(rng.random_range(0.05..0.6)).unwrap(),
        _ => CountingDist::poisson(rng.random_range(0.3..3.0)).unwrap(),
    }
}

fn exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut configs = 0;
    let mut worst_tilt = 0.0f64;
    while configs < 20 {
        let step = [0.25, 0.5, 1.0][rng.random_range(0..3)];
        let f = random_lattice(&mut rng, step);
        let tau = random_tau(&mut rng);
        let gamma = rng.random_range(0.05..0.5);
        if tilt(&f, &tau, gamma).is_err() {
            continue;
        }
        let xs: Vec<f64> = (0..f.len() - 1).map(|i| f.x(i)).collect();
        for c in tilt_tail_identity_check(&f, &tau, gamma, &xs).map_err(err)? {
            worst_tilt = worst_tilt.max(c.rel_err());
        }
        configs += 1;
    }
    let mut pair_ok = true;
    for _ in 0..20 {
        let a = random_lattice(&mut rng, 0.5);
        let b = random_lattice(&mut rng, 0.5);
        let top = a.last_x() + b.last_x();
        for k in 0..=40 {
            let x = top * k as f64 / 40.0;
            pair_ok &= pairwise_lower_bound(&a, &b, x).map_err(err)?.holds();
        }
    }
    let mut worst_semi = 0.0f64;
    for _ in 0..5 {
        let f = random_lattice(&mut rng, 1.0).padded_to(200);
        let (s, t) = (rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
        let lhs = conv(
            &compound_poisson(&f, s).map_err(err)?,
            &compound_poisson(&f, t).map_err(err)?,
        )
        .map_err(err)?;
        let rhs = compound_poisson(&f, s + t).map_err(err)?;
        for (a, b) in lhs.masses().iter().zip(rhs.masses()) {
            worst_semi = worst_semi.max((a - b).abs());
        }
    }
    Ok((
        worst_tilt <= 1e-6 && pair_ok && worst_semi <= 1e-9,
        format!(
            "tilt identity max rel err {worst_tilt:.2e} over {configs} configs; pairwise bound {}; \
             semigroup max abs err {worst_semi:.2e}",
            if pair_ok { "holds" } else { "violated" }
        ),
    ))
}

fn concave_construction() -> Outcome {
    let laws = [
        ("pareto(2)", ParametricDist::pareto(2.0, 1.0).map_err(err)?),
        (
            "weibull(0.5)",
            ParametricDist::weibull(0.5, 1.0).map_err(err)?,
        ),
        (
            "lognormal(0,1)",
            ParametricDist::lognormal(0.0, 1.0).map_err(err)?,
        ),
    ];
    let mut ok = true;
    let mut worst_res = 0.0f64;
    let mut worst_witness = f64::INFINITY;
    for (_, d) in &laws {
        for delta in [0.25, 1.0] {
            let h = build_h(d, delta, 10).map_err(err)?;
            worst_res = h.residuals().iter().fold(worst_res, |m, r| m.max(r.abs()));
            let k = h.knots();
            ok &= (1..k.len()).all(|n| k[n] >= 2f64.powi(n as i32));
            ok &= h.slopes().windows(2).all(|w| w[1] < w[0]);
            for n in 0..=7 {
                let w = divergence_witness(&h, d, n).map_err(err)?;
                worst_witness = worst_witness.min(w / delta);
            }
        }
    }
    ok &= worst_res < 1e-9 && worst_witness >= 1.0 - 1e-6;
    Ok((
        ok,
        format!("max block residual {worst_res:.2e}; min witness/δ {worst_witness:.4}"),
    ))
}

fn heavy_grid() -> Result<(GridSpec, Vec<f64>), String> {
    let step = 3.0;
    Ok((
        GridSpec::new(step, 2000.0).map_err(err)?,
        snap_to_grid(&log_grid(100.0, 1000.0, 40), step, 0.0),
    ))
}

fn heavy_plateau() -> Outcome {
    let d = ParametricDist::pareto(2.0, 1.0).map_err(err)?;
    let (grid, xs) = heavy_grid()?;
    let taus = [
        ("det 2", CountingDist::deterministic(2)),
        ("det 5", CountingDist::deterministic(5)),
        (
            "geometric Eτ=1",
            CountingDist::geometric_with_mean(1.0).map_err(err)?,
        ),
        ("poisson 2", CountingDist::poisson(2.0).map_err(err)?),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, tau) in &taus {
        let curve =
            tail_ratio_curve(RatioSource::Parametric { dist: &d, grid }, tau, &xs).map_err(err)?;
        let est = liminf_estimate(&curve, Window::LastDecade).map_err(err)?;
        let e = tau.mean();
        let pass = rel(est.value, e) <= 0.05 && est.contains(e);
        ok &= pass;
        parts.push(format!(
            "{name}: {:.4} in [{:.4}, {:.4}] vs {e}",
            est.value, est.lo, est.hi
        ));
    }
    Ok((ok, parts.join("; ")))
}

/// `E_1(1)` by its convergent series.
fn expint_e1_at_1() -> f64 {
    let euler = 0.577_215_664_901_532_9;
    let mut sum = 0.0;
    let mut fact = 1.0;
    for k in 1..40 {
        fact *= k as f64;
        sum += (-1f64).powi(k + 1) / (k as f64 * fact);
    }
    -euler + sum
}

fn light_constant() -> Outcome {
    let d = ParametricDist::power_exp(3.0, 1.0, 1.0).map_err(err)?;
    // ∫_1^∞ x^{-3} e^{-x} dx = E_3(1), and the tilt at 1 leaves ∫_1^∞ x^{-3} dx = 1/2
    let e = (-1f64).exp();
    let e2 = e - expint_e1_at_1();
    let e3 = (e - e2) / 2.0;
    let phi_oracle = 0.5 / e3;
    let profile = gamma_hat(&d.into()).map_err(err)?;
    let p = 0.1;
    let tau = CountingDist::geometric(p).map_err(err)?;
    let c_oracle = p * (1.0 - p) / (1.0 - p * phi_oracle).powi(2);
    let c = tilted_plateau_constant(&tau, phi_oracle).map_err(err)?;
    let grid = GridSpec::new(1.0, 2000.0).map_err(err)?;
    let xs = snap_to_grid(&log_grid(100.0, 1000.0, 40), 1.0, 0.0);
    let curve = tilted_ratio_curve(&d, &tau, grid, &xs).map_err(err)?;
    let est = liminf_estimate(&curve, Window::LastDecade).map_err(err)?;
    let ok = rel(profile.gamma_hat, 1.0) <= 1e-6
        && rel(profile.phi_hat, phi_oracle) <= 1e-6
        && rel(c, c_oracle) <= 1e-10
        && rel(est.value, c) <= 0.10;
    Ok((
        ok,
        format!(
            "γ̂ {:.6}, φ̂ {:.6} (oracle {phi_oracle:.6}); plateau {:.5} vs constant {c:.5}",
            profile.gamma_hat, profile.phi_hat, est.value
        ),
    ))
}

fn compound_poisson_plateau() -> Outcome {
    let d = ParametricDist::pareto(2.0, 1.0).map_err(err)?;
    let (grid, xs) = heavy_grid()?;
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.5, 1.5] {
        let curve = compound_poisson_curve(RatioSource::Parametric { dist: &d, grid }, t, 1.0, &xs)
            .map_err(err)?;
        let est = liminf_estimate(&curve, Window::LastDecade).map_err(err)?;
        ok &= rel(est.value, t) <= 0.05;
        parts.push(format!("t={t}: {:.4}", est.value));
    }
    let mut worst = 0.0f64;
    for t in [0.5, 1.5] {
        for phi in [1.0, 1.2, 2.0] {
            let c = tilted_plateau_constant(&CountingDist::poisson(t).map_err(err)?, phi)
                .map_err(err)?;
            worst = worst.max(rel(c, t * (t * (phi - 1.0)).exp()));
        }
    }
    ok &= worst <= 1e-12;
    parts.push(format!("constant identity max rel err {worst:.2e}"));
    Ok((ok, parts.join("; ")))
}

fn supremum() -> Outcome {
    let d = ParametricDist::pareto(2.0, 1.0).map_err(err)?.shifted(-3.0);
    let policy = SupremumPolicy::auto(&d, 1e-4).map_err(err)?;
    let sample = simulate_supremum(&d, 100_000, policy, 11, Exec::default()).map_err(err)?;
    let maxima = sample.maxima_tail().map_err(err)?;
    let xs = log_grid(10.0, 100.0, 10);
    let grid = GridSpec::new(0.25, 1000.0).map_err(err)?;
    let sup = supremum_curve(
        &d,
        LadderInput::Simulated {
            sample: &sample,
            grid,
            batches: 10,
        },
        &xs,
    )
    .map_err(err)?;
    let mut worst_rel = 0.0f64;
    let mut worst_z = 0.0f64;
    for (x, bracket, se) in &sup.supremum_tail {
        let mc = maxima.tail(*x);
        // F̄(y) = (y + 3)^{-2} for y ≥ -2, so ∫_x^∞ F̄ = 1/(x + 3)
        let asym = 1.0 / (x + 3.0) / sup.m;
        worst_rel = worst_rel.max(rel(mc.estimate, asym));
        let se = se.ok_or("no batch standard error")?;
        let z = (bracket.mid() - mc.estimate).abs() / (se * se + mc.stderr * mc.stderr).sqrt();
        worst_z = worst_z.max(z);
    }
    Ok((
        worst_rel <= 0.15 && worst_z <= 3.0,
        format!(
            "m {:.4}; max |MC/asymptotic - 1| {worst_rel:.3} on [10, 100]; max |z| vs ladder route {worst_z:.2}",
            sup.m
        ),
    ))
}

fn infinitely_divisible() -> Outcome {
    let big = ParametricDist::pareto(2.0, 1.0).map_err(err)?;
    let spec =
        LevySpec::new(0.5, big, 2.0, SmallJumps::Stable { c: 1.0, beta: 0.5 }).map_err(err)?;
    let step = 0.5;
    let xs = snap_to_grid(&log_grid(1000.0, 10000.0, 40), step, 0.0);
    let r = infdiv_compose(&spec, GridSpec::new(step, 15000.0).map_err(err)?, &xs).map_err(err)?;
    let est = liminf_estimate(&r.curve, Window::LastDecade).map_err(err)?;
    Ok((
        rel(est.value, 1.0) <= 0.10,
        format!(
            "plateau {:.4} in [{:.4}, {:.4}] on [1e3, 1e4]",
            est.value, est.lo, est.hi
        ),
    ))
}

fn branching() -> Outcome {
    let d = ParametricDist::pareto(2.0, 1.0).map_err(err)?;
    let grid = GridSpec::new(1.0, 2000.0).map_err(err)?;
    let xs = snap_to_grid(&log_grid(100.0, 1000.0, 40), 1.0, 0.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [0.3, 0.5] {
        let b = branching_mean(RatioSource::Parametric { dist: &d, grid }, a, &xs, None)
            .map_err(err)?;
        let long = branching_mean(
            RatioSource::Parametric { dist: &d, grid },
            a,
            &xs,
            Some(3 * b.n_max),
        )
        .map_err(err)?;
        let diff =
            b.ez.iter()
                .zip(&long.ez)
                .map(|((_, s), (_, l))| (s.mid() - l.mid()).abs())
                .fold(0.0, f64::max);
        let est = liminf_estimate(&b.curve, Window::LastDecade).map_err(err)?;
        let target = 1.0 / (1.0 - a);
        ok &= rel(est.value, target) <= 0.10 && diff <= b.remainder_bound;
        parts.push(format!(
            "A={a}: {:.4} vs {target:.4}, series diff {diff:.1e} <= bound {:.1e}",
            est.value, b.remainder_bound
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn negative_control() -> Outcome {
    let d = ParametricDist::exponential(1.0).map_err(err)?;
    let step = 0.05;
    let grid = GridSpec::new(step, 80.0).map_err(err)?;
    let xs = snap_to_grid(&log_grid(1.0, 40.0, 30), step, 0.0);
    let curve = tail_ratio_curve(
        RatioSource::Parametric { dist: &d, grid },
        &CountingDist::deterministic(2),
        &xs,
    )
    .map_err(err)?;
    let top = curve.points.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let cross = curve.points.iter().find(|p| p.ratio > 10.0).map(|p| p.x);
    Ok((
        top > 10.0,
        format!("max ratio {top:.2}; first exceeds 10 at x = {cross:?}"),
    ))
}

fn monte_carlo() -> Outcome {
    let step = 0.1;
    let f = discretize(
        &ParametricDist::exponential(1.0).map_err(err)?,
        step,
        60.0,
        Rounding::Down,
    )
    .map_err(err)?;
    let tau = CountingDist::geometric(0.3).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let raw: Vec<f64> = (0..10).map(|_| rng.random_range(2.0..8.0)).collect();
    let xs = snap_to_grid(&raw, step, f.offset());
    let exact = stopped_sum(&f, &tau).map_err(err)?;
    let mut worst = 0.0f64;
    let mut reproducible = true;
    for gamma in [0.0, 0.5] {
        let run = || tilted_tail_estimate(&f, &tau, gamma, &xs, 100_000, 77, Exec::default());
        let est = run().map_err(err)?;
        reproducible &= estimates_to_csv(&est) == estimates_to_csv(&run().map_err(err)?);
        for e in &est {
            let t = exact.tail(e.x);
            worst = worst.max(e.z_score(t.mid(), 0.5 * t.width()).abs());
        }
    }
    Ok((
        worst <= 3.0 && reproducible,
        format!(
            "max |z| {worst:.2} over 10 points x 2 estimators; reruns {}",
            if reproducible {
                "byte-identical"
            } else {
                "differ"
            }
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("exactness suite", exactness, 60),
        ("concave weight construction", concave_construction, 60),
        ("heavy-tailed plateau at Eτ", heavy_plateau, 300),
        ("light-tailed constant via tilting", light_constant, 300),
        ("compound Poisson plateau", compound_poisson_plateau, 180),
        ("random-walk supremum", supremum, 600),
        ("infinitely divisible law", infinitely_divisible, 300),
        ("branching mean", branching, 180),
        ("negative control (exponential)", negative_control, 60),
        ("Monte Carlo cross-validation", monte_carlo, 300),
    ];
    let mut failed = Vec::new();
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = f();
        let dt = t.elapsed();
        let in_time = dt <= Duration::from_secs(*budget);
        let (pass, detail) = match outcome {
            Ok((p, d)) => (p && in_time, d),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {:>2} {}: {} ({detail}) [{:.1}s, budget {budget}s]",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            dt.as_secs_f64()
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
