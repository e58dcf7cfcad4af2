//! Decision numbers `d_1 >= ... >= d_n`, the exact success probability of the
//! blind threshold policy they induce, and the limiting constants `c` and
//! `gamma`.
//!
//! A policy with decision numbers `d` accepts the `i`-th observation when it
//! is the running maximum and exceeds `tau_i`, where
//! `Pr[max_k X_k <= tau_i] = d_i^n`. For IID continuous draws the success
//! probability is
//!
//! ```text
//! (1 - d_1^n)/n + sum_{r=1}^{n-1} [ sum_{i=1}^{r} (d_i^r/r - d_i^n/n)/(n-r) - d_{r+1}^n/n ]
//! ```
//!
//! and for independent non-identical draws it is a lower bound.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Monotone nonincreasing decision numbers in `[0, 1]`, one per position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionNumbers {
    values: Vec<f64>,
}

impl DecisionNumbers {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate(&values)?;
        Ok(Self { values })
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `d_i`, zero-based.
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn success_probability(&self) -> f64 {
        formula(&self.values)
    }
}

fn validate(d: &[f64]) -> Result<()> {
    if d.is_empty() {
        return Err(domain("decision numbers need a positive horizon"));
    }
    if let Some(x) = d.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(domain(format!("decision number {x} outside [0, 1]")));
    }
    if let Some(i) = d.windows(2).position(|w| w[0] < w[1]) {
        return Err(domain(format!(
            "decision numbers must be nonincreasing: d_{} = {} < d_{} = {}",
            i + 1,
            d[i],
            i + 2,
            d[i + 1]
        )));
    }
    Ok(())
}

/// `x^k`, through logs once `x` is small enough for `powi` to lose it.
#[inline]
fn power(x: f64, k: usize) -> f64 {
    if x == 0.0 {
        if k == 0 {
            1.0
        } else {
            0.0
        }
    } else if x < 1e-12 {
        (k as f64 * x.ln()).exp()
    } else {
        x.powi(k as i32)
    }
}

/// Success probability of the threshold policy with decision numbers `d`.
pub fn success_probability(d: &[f64]) -> Result<f64> {
    validate(d)?;
    Ok(formula(d))
}

fn formula(d: &[f64]) -> f64 {
    let n = d.len();
    let nf = n as f64;
    let full: Vec<f64> = d.iter().map(|&x| power(x, n)).collect();
    let mut total = (1.0 - full[0]) / nf;
    for r in 1..n {
        let rf = r as f64;
        let inner: f64 = d[..r]
            .iter()
            .zip(&full)
            .map(|(&x, &xn)| power(x, r) / rf - xn / nf)
            .sum();
        total += inner / (n - r) as f64 - full[r] / nf;
    }
    total
}

/// The part of the success formula that depends on `d_i` alone (zero-based
/// `i`). The formula is a sum of such terms, one per coordinate.
fn coordinate_objective(n: usize, i: usize, x: f64) -> f64 {
    let nf = n as f64;
    let xn = power(x, n);
    let mut f = -xn / nf;
    for r in (i + 1)..n {
        f += (power(x, r) / r as f64 - xn / nf) / (n - r) as f64;
    }
    f
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

fn coordinate_slope(n: usize, i: usize, x: f64) -> f64 {
    let xn1 = power(x, n - 1);
    let mut g = -xn1;
    for r in (i + 1)..n {
        g += (power(x, r - 1) - xn1) / (n - r) as f64;
    }
    g
}

/// Golden section only pins a flat maximum to about the square root of the
/// machine epsilon; a sign change of the slope nearby is bisected to full
/// precision.
fn polish(n: usize, i: usize, x: f64) -> f64 {
    let (mut lo, mut hi) = ((x - 1e-6).max(0.0), (x + 1e-6).min(1.0));
    if !(coordinate_slope(n, i, lo) > 0.0 && coordinate_slope(n, i, hi) < 0.0) {
        return x;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if coordinate_slope(n, i, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn maximize_coordinate(n: usize, i: usize) -> f64 {
    let f = |x: f64| coordinate_objective(n, i, x);
    let interior = polish(n, i, golden_section_max(f, 0.0, 1.0, 1e-12));
    // The optimum may sit on the boundary (d_n = 0).
    [0.0, interior, 1.0]
        .into_iter()
        .fold((f64::NEG_INFINITY, 0.0), |(best, arg), x| {
            let v = f(x);
            if v > best {
                (v, x)
            } else {
                (best, arg)
            }
        })
        .1
}

fn solve_optimal(n: usize) -> Vec<f64> {
    let c = solve_c();
    let mut d: Vec<f64> = (0..n)
        .map(|i| {
            let remaining = (n - 1 - i) as f64;
            if remaining == 0.0 {
                0.0
            } else {
                (1.0 - c / remaining).clamp(0.0, 1.0)
            }
        })
        .collect();

    for _sweep in 0..100 {
        let mut max_change = 0.0f64;
        for (i, di) in d.iter_mut().enumerate() {
            let next = maximize_coordinate(n, i);
            max_change = max_change.max((next - *di).abs());
            *di = next;
        }
        if max_change < 1e-10 {
            break;
        }
    }

    // Remove golden-section jitter that could break monotonicity between
    // nearly equal neighbours.
    for i in (0..n.saturating_sub(1)).rev() {
        if d[i] < d[i + 1] {
            d[i] = d[i + 1];
        }
    }
    d
}

fn cache() -> &'static RwLock<HashMap<usize, DecisionNumbers>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, DecisionNumbers>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Decision numbers maximizing [`success_probability`] for horizon `n`.
///
/// Computed by coordinate ascent on the exact formula, one golden-section
/// search per coordinate, and cached per horizon.
pub fn optimal_decision_numbers(n: usize) -> Result<DecisionNumbers> {
    if n == 0 {
        return Err(domain("horizon must be at least 1"));
    }
    if let Some(d) = cache().read().expect("decision cache poisoned").get(&n) {
        return Ok(d.clone());
    }
    let d = DecisionNumbers::new(solve_optimal(n))?;
    cache().write().expect("decision cache poisoned").insert(n, d.clone());
    Ok(d)
}

/// `sum_{k>=1} c^k / (k * k!)`, i.e. `int_0^c (e^x - 1)/x dx`.
pub fn threshold_series(c: f64) -> f64 {
    let mut term = 1.0; // c^k / k!
    let mut total = 0.0;
    for k in 1..200 {
        term *= c / k as f64;
        let add = term / k as f64;
        total += add;
        if add < total * 1e-18 {
            break;
        }
    }
    total
}

/// The constant `c` with `int_0^c (e^x - 1)/x dx = 1`.
pub fn solve_c() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let (mut lo, mut hi) = (0.5f64, 1.0f64);
        let mut x = 0.8;
        for _ in 0..100 {
            let g = threshold_series(x) - 1.0;
            if g.abs() < 1e-15 {
                break;
            }
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            // Derivative of the series is (e^x - 1)/x.
            let newton = x - g * x / x.exp_m1();
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-16 {
                break;
            }
        }
        x
    })
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = int_x^inf e^{-t}/t dt` for `x > 0`.
///
/// Power series up to `x = 1`, modified Lentz continued fraction beyond.
pub fn exponential_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(domain(format!("E1 needs a positive argument, got {x}")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0; // (-x)^k / k!
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        Ok(-EULER_GAMMA - x.ln() - sum)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let delta = c * d;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        Ok(h * (-x).exp())
    }
}

/// `(e^c - c - 1) E1(c) + e^{-c}`, the limiting success probability for the
/// threshold constant `c`.
pub fn gamma_limit(c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(domain(format!("gamma_limit needs c > 0, got {c}")));
    }
    let e1 = exponential_integral_e1(c)?;
    Ok((c.exp() - c - 1.0) * e1 + (-c).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitConstants {
    pub c: f64,
    pub gamma: f64,
}

impl LimitConstants {
    pub fn compute() -> Self {
        let c = solve_c();
        let gamma = gamma_limit(c).expect("c is positive");
        Self { c, gamma }
    }
}
