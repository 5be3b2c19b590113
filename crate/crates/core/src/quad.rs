//! Adaptive Gauss–Kronrod (7/15) quadrature with a global error budget.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts {
            abs_tol: 0.0,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

impl QuadOpts {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOpts {
            rel_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub abs_err: f64,
    pub converged: bool,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: k * h,
        err: ((k - g) * h).abs(),
    }
}

/// Integrate `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOpts) -> Quad {
    if a == b {
        return Quad {
            value: 0.0,
            abs_err: 0.0,
            converged: true,
        };
    }
    if b < a {
        let q = integrate(f, b, a, opts);
        return Quad {
            value: -q.value,
            ..q
        };
    }
    let first = kronrod(&f, a, b);
    let mut total = first.value;
    let mut err = first.err;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    while !(err <= opts.abs_tol.max(opts.rel_tol * total.abs())) {
        if heap.len() >= opts.max_intervals || !err.is_finite() {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = kronrod(&f, worst.a, mid);
        let right = kronrod(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to shed the drift of the running updates
    let (value, abs_err) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.err));
    Quad {
        value,
        abs_err,
        converged: abs_err <= opts.abs_tol.max(opts.rel_tol * value.abs()) && value.is_finite(),
    }
}

/// Integrate `f` over `[a, ∞)` through the map `x = a + t/(1-t)`.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, opts: QuadOpts) -> Quad {
    let g = |t: f64| {
        let s = 1.0 - t;
        let x = a + t / s;
        if !x.is_finite() {
            return 0.0;
        }
        let v = f(x) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, opts)
}

/// Integrate over `[a, b]` with `0 < a < b`, using the log-spaced variable `u = ln x`.
/// Suited to integrands spread over many orders of magnitude.
pub fn integrate_log<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOpts) -> Quad {
    debug_assert!(a > 0.0 && b > 0.0);
    integrate(
        |u| {
            let x = u.exp();
            f(x) * x
        },
        a.ln(),
        b.ln(),
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| x * x * x - 2.0 * x, 0.0, 3.0, QuadOpts::default());
        assert!((q.value - (81.0 / 4.0 - 9.0)).abs() < 1e-13);
        assert!(q.converged);
    }

    #[test]
    fn semi_infinite_exponential() {
        let q = integrate_to_inf(|x| (-x).exp(), 0.0, QuadOpts::rel(1e-12));
        assert!((q.value - 1.0).abs() < 1e-11, "{}", q.value);
    }

    #[test]
    fn power_law_tail() {
        let q = integrate_to_inf(|x| x.powi(-3), 1.0, QuadOpts::rel(1e-12));
        assert!((q.value - 0.5).abs() < 1e-11);
        let q = integrate_log(|x| x.powi(-2), 1.0, 1e8, QuadOpts::rel(1e-12));
        assert!((q.value - (1.0 - 1e-8)).abs() < 1e-11);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let q = integrate(|x| x, 2.0, 0.0, QuadOpts::default());
        assert!((q.value + 2.0).abs() < 1e-14);
    }
}
