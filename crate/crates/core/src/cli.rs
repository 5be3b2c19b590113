//! Command-line front end.
//!
//! Every subcommand writes its CSV and a `summary.txt` of `key=value` lines
//! into the output directory. Exit status is 0 on success, 2 for bad input or
//! a violated precondition, 1 when a computation fails.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::applications::{
    branching_mean, compound_poisson_curve, infdiv_compose, subexp_diagnostic, supremum_curve,
    tilted_ratio_curve, GeometricCompoundSpec, LadderInput, LevySpec, SmallJumps,
};
use crate::concave::{build_h, divergence_witness};
use crate::convolve::{
    liminf_estimate, log_grid, snap_to_grid, stopped_sum, tail_ratio_curve, LiminfEstimate,
    RatioSource, TailRatioCurve, Window,
};
use crate::dist::{
    classify_tail, discretize, gamma_hat, CountingDist, GridSpec, ParametricDist, Rounding,
    TailClass,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::io::curve_to_csv;
use crate::simulate::{estimates_to_csv, simulate_supremum, tilted_tail_estimate, SupremumPolicy};
use crate::tilt::{tilt_tail_identity_check, tilted_plateau_constant};

/// Distribution given as `family:p1,p2,…`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistArg(pub ParametricDist, pub String);

fn params(s: &str, want: std::ops::RangeInclusive<usize>, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = if s.is_empty() {
        Vec::new()
    } else {
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{what}: bad parameter {p:?}: {e}")))
            })
            .collect::<Result<_>>()?
    };
    if !want.contains(&v.len()) {
        return Err(Error::Parse(format!(
            "{what}: expected {}..={} parameters, got {}",
            want.start(),
            want.end(),
            v.len()
        )));
    }
    Ok(v)
}

impl FromStr for DistArg {
    type Err = Error;

    /// `pareto:alpha[,scale]`, `weibull:shape[,scale]`, `lognormal:mu,sigma`,
    /// `exp:rate`, `powerexp:power,rate,low`, `point:x`.
    fn from_str(s: &str) -> Result<Self> {
        let (fam, rest) = s.split_once(':').unwrap_or((s, ""));
        let d = match fam {
            "pareto" => {
                let p = params(rest, 1..=2, "pareto")?;
                ParametricDist::pareto(p[0], p.get(1).copied().unwrap_or(1.0))?
            }
            "weibull" => {
                let p = params(rest, 1..=2, "weibull")?;
                ParametricDist::weibull(p[0], p.get(1).copied().unwrap_or(1.0))?
            }
            "lognormal" => {
                let p = params(rest, 2..=2, "lognormal")?;
                ParametricDist::lognormal(p[0], p[1])?
            }
            "exp" | "exponential" => {
                let p = params(rest, 1..=1, "exp")?;
                ParametricDist::exponential(p[0])?
            }
            "powerexp" => {
                let p = params(rest, 3..=3, "powerexp")?;
                ParametricDist::power_exp(p[0], p[1], p[2])?
            }
            "point" => {
                let p = params(rest, 1..=1, "point")?;
                ParametricDist::degenerate(p[0])?
            }
            _ => return Err(Error::Parse(format!("unknown distribution family {fam:?}"))),
        };
        Ok(DistArg(d, s.to_string()))
    }
}

/// Counting law given as `det:n`, `geom:p`, `geom-mean:m`, `poisson:t` or
/// `explicit:q0,q1,…`.
#[derive(Debug, Clone, PartialEq)]
pub struct TauArg(pub CountingDist, pub String);

impl FromStr for TauArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let t = match kind {
            "det" => CountingDist::deterministic(
                rest.trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("det: bad count {rest:?}: {e}")))?,
            ),
            "geom" => CountingDist::geometric(params(rest, 1..=1, "geom")?[0])?,
            "geom-mean" => CountingDist::geometric_with_mean(params(rest, 1..=1, "geom-mean")?[0])?,
            "poisson" => CountingDist::poisson(params(rest, 1..=1, "poisson")?[0])?,
            "explicit" => CountingDist::explicit(params(rest, 1..=usize::MAX, "explicit")?)?,
            _ => return Err(Error::Parse(format!("unknown counting law {kind:?}"))),
        };
        Ok(TauArg(t, s.to_string()))
    }
}

/// Small-jump measure given as `none`, `stable:c,beta` or `atoms:x:l;x:l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallArg(pub SmallJumps);

impl FromStr for SmallArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        Ok(SmallArg(match kind {
            "none" => SmallJumps::None,
            "stable" => {
                let p = params(rest, 2..=2, "stable")?;
                SmallJumps::Stable {
                    c: p[0],
                    beta: p[1],
                }
            }
            "atoms" => SmallJumps::Atoms(
                rest.split(';')
                    .map(|a| {
                        let p: Vec<&str> = a.split(':').collect();
                        if p.len() != 2 {
                            return Err(Error::Parse(format!("atom {a:?} is not x:intensity")));
                        }
                        Ok((
                            params(p[0], 1..=1, "atom")?[0],
                            params(p[1], 1..=1, "atom")?[0],
                        ))
                    })
                    .collect::<Result<_>>()?,
            ),
            _ => return Err(Error::Parse(format!("unknown small-jump spec {kind:?}"))),
        }))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "stopsum",
    version,
    about = "Tail ratios of randomly stopped sums and related pipelines",
    args_override_self = true
)]
pub struct Cli {
    /// `key=value` file of defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Relative tolerance for the pass/fail line in the summary.
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
    /// Run kernels sequentially.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Lattice step.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Largest x on the evaluation grid; lattices extend to twice this.
    #[arg(long, default_value_t = 1000.0)]
    pub xmax: f64,
    /// Number of log-spaced evaluation points over the last decade below `xmax`.
    #[arg(long, default_value_t = 40)]
    pub points: usize,
}

impl GridArgs {
    fn lattice(&self) -> Result<GridSpec> {
        GridSpec::new(self.step, 2.0 * self.xmax)
    }

    fn xs(&self, offset: f64) -> Result<Vec<f64>> {
        if !(self.xmax > 0.0 && self.points >= 2) {
            return Err(Error::invalid(
                "xmax",
                self.xmax,
                "need xmax > 0 and at least 2 points",
            ));
        }
        Ok(snap_to_grid(
            &log_grid(self.xmax / 10.0, self.xmax, self.points),
            self.step,
            offset,
        ))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tail ratio F̄^{*τ}(x)/F̄(x) and its liminf plateau.
    Ratio {
        #[arg(long)]
        dist: DistArg,
        #[arg(long)]
        tau: TauArg,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Concave piecewise-linear weight h for a heavy-tailed law.
    BuildH {
        #[arg(long)]
        dist: DistArg,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 10)]
        blocks: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Tilted tail identity on a discretized law, plus the light-tail plateau.
    TiltCheck {
        #[arg(long)]
        dist: DistArg,
        #[arg(long)]
        tau: TauArg,
        /// Tilt parameter; defaults to half of γ̂.
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Random-walk supremum against (1/m) F̄^I.
    Pk {
        /// Increment law before the shift.
        #[arg(long)]
        dist: DistArg,
        /// Added to every increment; the result must have negative mean.
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        shift: f64,
        /// `simulate`, `asymptotic`, or a ladder-height distribution spec.
        #[arg(long, default_value = "simulate")]
        ladder: String,
        /// Defect p = P{M > 0} for supplied or asymptotic ladders.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.25)]
        step: f64,
        #[arg(long, default_value_t = 100.0)]
        xmax: f64,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Compound Poisson tail ratio against t e^{t(φ(γ̂)-1)}.
    Cpoisson {
        #[arg(long)]
        dist: DistArg,
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Infinitely divisible law: ν̄(x)/H̄(x).
    Infdiv {
        /// Big-jump law on (1, ∞).
        #[arg(long)]
        dist: DistArg,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 0.0)]
        drift: f64,
        #[arg(long, default_value = "none")]
        small: SmallArg,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Branching-process mean EZ(t)/F̄(t) against 1/(1-A).
    Branching {
        #[arg(long)]
        dist: DistArg,
        #[arg(long)]
        a: f64,
        #[arg(long)]
        nmax: Option<usize>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo tail estimates checked against the lattice engine.
    Simulate {
        #[arg(long)]
        dist: DistArg,
        #[arg(long)]
        tau: TauArg,
        /// Tilt parameter; 0 gives plain Monte Carlo.
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated evaluation points.
        #[arg(long, value_delimiter = ',', required = true)]
        xs: Vec<f64>,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// Right end of the lattice.
        #[arg(long, default_value_t = 100.0)]
        lattice_max: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Tail class, γ̂, φ(γ̂) and the subexponential ratio F̄^{*2}/F̄.
    Diagnose {
        #[arg(long)]
        dist: DistArg,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: Common,
    },
}

/// Ordered `key=value` lines.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Summary(Vec<(String, String)>);

impl Summary {
    fn set(&mut self, k: &str, v: impl ToString) -> &mut Self {
        self.0.push((k.to_string(), v.to_string()));
        self
    }

    /// Measured value, theoretical value, bracket and verdict.
    fn verdict(&mut self, measured: &LiminfEstimate, theoretical: f64, tol: f64) {
        let rel = (measured.value / theoretical - 1.0).abs();
        self.set("measured", measured.value)
            .set("theoretical", theoretical)
            .set("bracket_lo", measured.lo)
            .set("bracket_hi", measured.hi)
            .set("x_at_min", measured.x_at)
            .set("rel_err", rel)
            .set("tolerance", tol)
            .set("pass", rel <= tol);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Expand `--config FILE` into flags placed right after the subcommand, so that
/// flags given on the command line (which come later) win.
fn expand_config(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    if let Some(prog) = it.next() {
        rest.push(prog);
    }
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().ok_or("--config needs a file")?);
        } else if let Some(p) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            config = Some(OsString::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config {}: {e}", Path::new(&path).display()))?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", n + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if v == "true" {
            extra.push(OsString::from(format!("--{k}")));
        } else if v != "false" {
            extra.push(OsString::from(format!("--{k}={v}")));
        }
    }
    let sub = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|i| i + 2)
        .unwrap_or(rest.len());
    rest.splice(sub..sub, extra);
    Ok(rest)
}

/// Parse `argv`, run, and return the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_precondition() {
                2
            } else {
                1
            }
        }
    }
}

fn write_outputs(common: &Common, csv_name: &str, csv: &str, summary: &Summary) -> Result<PathBuf> {
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join(csv_name), csv)?;
    fs::write(common.out.join("summary.txt"), summary.render())?;
    Ok(common.out.clone())
}

fn exec_of(common: &Common) -> Exec {
    if common.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    }
}

fn plateau(curve: &TailRatioCurve) -> Result<LiminfEstimate> {
    liminf_estimate(curve, Window::LastDecade)
}

/// Run one subcommand and return the output directory.
pub fn execute(cmd: &Command) -> Result<PathBuf> {
    let mut s = Summary::default();
    match cmd {
        Command::Ratio {
            dist,
            tau,
            grid,
            common,
        } => {
            s.set("command", "ratio")
                .set("dist", &dist.1)
                .set("tau", &tau.1);
            let curve = tail_ratio_curve(
                RatioSource::Parametric {
                    dist: &dist.0,
                    grid: grid.lattice()?,
                },
                &tau.0,
                &grid.xs(0.0)?,
            )?;
            let est = plateau(&curve)?;
            match classify_tail(&dist.0.into())? {
                TailClass::Heavy => s.verdict(&est, tau.0.mean(), common.tol),
                TailClass::Light => {
                    s.set("tail_class", "light")
                        .set("measured", est.value)
                        .set("theoretical", "none")
                        .set("pass", "n/a");
                }
            }
            write_outputs(common, "ratio.csv", &curve_to_csv(&curve), &s)
        }
        Command::BuildH {
            dist,
            delta,
            blocks,
            common,
        } => {
            s.set("command", "build-h")
                .set("dist", &dist.1)
                .set("delta", delta);
            let h = build_h(&dist.0, *delta, *blocks)?;
            let worst = h.residuals().iter().fold(0.0f64, |m, r| m.max(r.abs()));
            let witness = divergence_witness(&h, &dist.0, 0)?;
            s.set("blocks", blocks)
                .set("max_block_residual", worst)
                .set("residual_limit", 1e-9)
                .set("witness_n0", witness)
                .set("witness_floor", delta)
                .set("pass", worst < 1e-9 && witness >= delta * (1.0 - 1e-6));
            write_outputs(common, "h.csv", &h.to_csv(), &s)
        }
        Command::TiltCheck {
            dist,
            tau,
            gamma,
            grid,
            common,
        } => {
            s.set("command", "tilt-check")
                .set("dist", &dist.1)
                .set("tau", &tau.1);
            let profile = gamma_hat(&dist.0.into())?;
            if profile.is_heavy() {
                return Err(Error::Precondition(
                    "tilt-check needs a light-tailed law (γ̂ > 0)".into(),
                ));
            }
            let g = gamma.unwrap_or(if profile.gamma_hat.is_finite() {
                0.5 * profile.gamma_hat
            } else {
                1.0
            });
            let f = discretize(&dist.0, grid.step, grid.xmax, Rounding::Down)?;
            let xs: Vec<f64> = (0..f.len().saturating_sub(1)).map(|i| f.x(i)).collect();
            let checks = tilt_tail_identity_check(&f, &tau.0, g, &xs)?;
            let worst = checks.iter().fold(0.0f64, |m, c| m.max(c.rel_err()));
            let mut csv = String::from("x,lhs,rhs,rel_err\n");
            for c in &checks {
                let _ = writeln!(csv, "{},{},{},{}", c.x, c.lhs, c.rhs, c.rel_err());
            }
            s.set("gamma", g)
                .set("gamma_hat", profile.gamma_hat)
                .set("phi_hat", profile.phi_hat)
                .set("identity_max_rel_err", worst)
                .set("identity_limit", 1e-6)
                .set("identity_pass", worst <= 1e-6);
            if profile.phi_hat.is_finite() && tau.0.pgf(profile.phi_hat).is_finite() {
                let curve = tilted_ratio_curve(&dist.0, &tau.0, grid.lattice()?, &grid.xs(0.0)?)?;
                let c = tilted_plateau_constant(&tau.0, profile.phi_hat)?;
                s.verdict(&plateau(&curve)?, c, common.tol);
                fs::create_dir_all(&common.out)?;
                fs::write(common.out.join("tilted_ratio.csv"), curve_to_csv(&curve))?;
            } else {
                s.set("theoretical", "none").set("pass", worst <= 1e-6);
            }
            write_outputs(common, "tilt_check.csv", &csv, &s)
        }
        Command::Pk {
            dist,
            shift,
            ladder,
            p,
            paths,
            seed,
            step,
            xmax,
            points,
            common,
        } => {
            let d = dist.0.shifted(*shift);
            s.set("command", "pk")
                .set("dist", &dist.1)
                .set("shift", shift)
                .set("ladder", ladder);
            let grid = GridSpec::new(*step, 10.0 * xmax)?;
            let xs = log_grid(xmax / 10.0, *xmax, (*points).max(2));
            let need_p =
                || p.ok_or_else(|| Error::Precondition("--p is required for this ladder".into()));
            let sample;
            let input = match ladder.as_str() {
                "simulate" => {
                    let policy = SupremumPolicy::auto(&d, 1e-4)?;
                    sample = simulate_supremum(&d, *paths, policy, *seed, exec_of(common))?;
                    s.set("paths", paths)
                        .set("seed", seed)
                        .set("barrier", policy.barrier)
                        .set("bias_bound", policy.bias_bound)
                        .set("p_hat", sample.p_hat().estimate);
                    LadderInput::Simulated {
                        sample: &sample,
                        grid,
                        batches: 10,
                    }
                }
                "asymptotic" => LadderInput::Asymptotic { p: need_p()?, grid },
                spec => {
                    let g = DistArg::from_str(spec)?;
                    LadderInput::Supplied(GeometricCompoundSpec::from_parametric(
                        &g.0,
                        need_p()?,
                        grid,
                        Rounding::Up,
                    )?)
                }
            };
            let sup = supremum_curve(&d, input, &xs)?;
            let est = liminf_estimate(&sup.curve, Window::TopFraction(1.0))?;
            s.set("m", sup.m).set("ladder_kind", sup.label);
            s.verdict(&est, 1.0 / sup.m, common.tol);
            write_outputs(common, "pk.csv", &curve_to_csv(&sup.curve), &s)
        }
        Command::Cpoisson {
            dist,
            t,
            grid,
            common,
        } => {
            s.set("command", "cpoisson")
                .set("dist", &dist.1)
                .set("t", t);
            let profile = gamma_hat(&dist.0.into())?;
            if !profile.phi_hat.is_finite() {
                return Err(Error::Precondition(format!(
                    "φ(γ̂) is infinite for {}; no finite constant",
                    dist.1
                )));
            }
            let xs = grid.xs(0.0)?;
            // light laws go through the tilted side; direct lattice tails underflow
            let curve = if profile.is_heavy() {
                compound_poisson_curve(
                    RatioSource::Parametric {
                        dist: &dist.0,
                        grid: grid.lattice()?,
                    },
                    *t,
                    profile.phi_hat,
                    &xs,
                )?
            } else {
                tilted_ratio_curve(&dist.0, &CountingDist::poisson(*t)?, grid.lattice()?, &xs)?
            };
            let c = crate::tilt::compound_poisson_constant(*t, profile.phi_hat)?;
            s.verdict(&plateau(&curve)?, c, common.tol);
            write_outputs(common, "cpoisson.csv", &curve_to_csv(&curve), &s)
        }
        Command::Infdiv {
            dist,
            mu,
            drift,
            small,
            grid,
            common,
        } => {
            s.set("command", "infdiv")
                .set("dist", &dist.1)
                .set("mu", mu)
                .set("drift", drift);
            let spec = LevySpec::new(*drift, dist.0, *mu, small.0.clone())?;
            let r = infdiv_compose(&spec, grid.lattice()?, &grid.xs(0.0)?)?;
            s.set("cut_moment", r.cut_moment);
            s.verdict(&plateau(&r.curve)?, 1.0, common.tol);
            write_outputs(common, "infdiv.csv", &curve_to_csv(&r.curve), &s)
        }
        Command::Branching {
            dist,
            a,
            nmax,
            grid,
            common,
        } => {
            s.set("command", "branching")
                .set("dist", &dist.1)
                .set("A", a);
            let b = branching_mean(
                RatioSource::Parametric {
                    dist: &dist.0,
                    grid: grid.lattice()?,
                },
                *a,
                &grid.xs(0.0)?,
                *nmax,
            )?;
            s.set("n_max", b.n_max)
                .set("remainder_bound", b.remainder_bound);
            s.verdict(&plateau(&b.curve)?, 1.0 / (1.0 - a), common.tol);
            write_outputs(common, "branching.csv", &curve_to_csv(&b.curve), &s)
        }
        Command::Simulate {
            dist,
            tau,
            gamma,
            samples,
            seed,
            xs,
            step,
            lattice_max,
            common,
        } => {
            s.set("command", "simulate")
                .set("dist", &dist.1)
                .set("tau", &tau.1)
                .set("gamma", gamma)
                .set("seed", seed);
            let f = discretize(&dist.0, *step, *lattice_max, Rounding::Down)?;
            let xs = snap_to_grid(xs, *step, f.offset());
            let est =
                tilted_tail_estimate(&f, &tau.0, *gamma, &xs, *samples, *seed, exec_of(common))?;
            let exact = stopped_sum(&f, &tau.0)?;
            let mut worst = 0.0f64;
            for e in &est {
                let t = exact.tail(e.x);
                worst = worst.max(e.z_score(t.mid(), 0.5 * t.width()));
            }
            s.set("max_z_vs_lattice", worst)
                .set("z_limit", 3)
                .set("pass", worst <= 3.0);
            write_outputs(common, "simulate.csv", &estimates_to_csv(&est), &s)
        }
        Command::Diagnose { dist, grid, common } => {
            s.set("command", "diagnose").set("dist", &dist.1);
            let profile = gamma_hat(&dist.0.into())?;
            let class = classify_tail(&dist.0.into())?;
            s.set("tail_class", format!("{class:?}").to_lowercase())
                .set("gamma_hat", profile.gamma_hat)
                .set("phi_hat", profile.phi_hat);
            let diag = subexp_diagnostic(&dist.0, grid.lattice()?, &grid.xs(0.0)?)?;
            let est = plateau(&diag.ratio)?;
            if let Some((x, r)) = diag.long_tail.last() {
                s.set("long_tail_x", x).set("long_tail_ratio", r);
            }
            s.verdict(&est, 2.0, common.tol);
            write_outputs(common, "diagnose.csv", &curve_to_csv(&diag.ratio), &s)
        }
    }
}
