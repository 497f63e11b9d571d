//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Integrands with a known kink should be integrated with
//! [`integrate_with_breakpoints`] so that every panel is smooth.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { abs_tol: 0.0, rel_tol: 1e-10, max_intervals: 2000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Panel { a, b, value, error }
}

/// Integrate `f` over `[a, b]`; the interval may be reversed.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadratureOptions) -> Result<QuadratureResult> {
    integrate_with_breakpoints(f, &[a, b], opts)
}

/// Integrate over consecutive panels `points[0]..points[1]..`, refining the
/// panel with the largest error estimate until the total error meets the
/// tolerance. Breakpoints are never bisected across.
pub fn integrate_with_breakpoints<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    opts: QuadratureOptions,
) -> Result<QuadratureResult> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("need at least two integration limits".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("integration limits must be finite".into()));
    }
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[0] != w[1] {
            heap.push(gk15(&mut f, w[0], w[1]));
        }
    }
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target || heap.is_empty() {
            return Ok(QuadratureResult { value, error, intervals: heap.len() });
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature { error, intervals: heap.len() });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid == worst.a || mid == worst.b {
            // panel cannot be split further in floating point
            return Ok(QuadratureResult { value, error, intervals: heap.len() + 1 });
        }
        heap.push(gk15(&mut f, worst.a, mid));
        heap.push(gk15(&mut f, mid, worst.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 2.0 * x * x, 0.0, 2.0, QuadratureOptions::default()).unwrap();
        assert_relative_eq!(r.value, 64.0 / 6.0 - 16.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let r = integrate(f64::exp, 1.0, 0.0, QuadratureOptions::default()).unwrap();
        assert_relative_eq!(r.value, 1.0 - std::f64::consts::E, max_relative = 1e-12);
    }

    #[test]
    fn kink_with_breakpoint() {
        let x0 = 1.0 / 3f64.sqrt();
        let f = |x: f64| (1.0 - 3.0 * x * x).abs();
        // exact: int_0^1 |1-3x^2| dx = 4/(3 sqrt 3)
        let exact = 4.0 / (3.0 * 3f64.sqrt());
        let r = integrate_with_breakpoints(f, &[0.0, x0, 1.0], QuadratureOptions::default()).unwrap();
        assert_relative_eq!(r.value, exact, max_relative = 1e-13);
        assert!(r.intervals <= 2);
    }

    #[test]
    fn sharp_peak_at_endpoint() {
        // int_0^1 c^2 u e^{-c u} du ~ 1 for large c; decade breakpoints expose the peak
        let c = 1e7;
        let points = [0.0, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-3, 1.0];
        let r = integrate_with_breakpoints(|u| c * c * u * (-c * u).exp(), &points, QuadratureOptions::default()).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn interval_budget_is_reported() {
        let opts = QuadratureOptions { abs_tol: 0.0, rel_tol: 1e-15, max_intervals: 3 };
        let res = integrate(|x| (50.0 * x).sin().abs(), 0.0, 10.0, opts);
        assert!(matches!(res, Err(Error::Quadrature { .. })));
    }
}
