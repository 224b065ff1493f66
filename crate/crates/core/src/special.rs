//! Special functions used by the closed-form fidelities and the position
//! representation: modified Bessel `I0`, (generalized) Laguerre polynomials,
//! and normalized Hermite functions.

use crate::error::{Error, Result};

/// Crossover between the power series and the asymptotic expansion of `I0`.
const I0_ASYMPTOTIC_FROM: f64 = 30.0;

/// Exponentially scaled modified Bessel function `e^{-x} I0(x)` for `x >= 0`.
///
/// Power series below 30 (all terms positive, so no cancellation), Hankel
/// asymptotic expansion above.
pub fn bessel_i0e(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("bessel_i0 requires x >= 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < I0_ASYMPTOTIC_FROM {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        Ok(sum * (-x).exp())
    } else {
        // e^{-x} I0(x) ~ (2 pi x)^{-1/2} sum_k ((2k-1)!!)^2 / (k! 8^k x^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            let kf = k as f64;
            let next = term * (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
            if next.abs() > term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        Ok(sum / (2.0 * std::f64::consts::PI * x).sqrt())
    }
}

/// Modified Bessel function of the first kind of order zero.
pub fn bessel_i0(x: f64) -> Result<f64> {
    Ok(bessel_i0e(x)? * x.exp())
}

/// Laguerre polynomial `L_n(x)` by the three-term recurrence.
pub fn laguerre(n: i64, x: f64) -> Result<f64> {
    if n < 0 {
        return Err(Error::Domain(format!("laguerre order must be >= 0, got {n}")));
    }
    laguerre_generalized(n as usize, 0.0, x)
}

/// Generalized Laguerre polynomial `L_n^{(a)}(x)`, `a > -1`.
pub fn laguerre_generalized(n: usize, a: f64, x: f64) -> Result<f64> {
    if !(a > -1.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "generalized laguerre needs a > -1 and finite x (a={a}, x={x})"
        )));
    }
    let mut prev = 1.0;
    if n == 0 {
        return Ok(prev);
    }
    let mut cur = 1.0 + a - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `ln n!`.
pub fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}

/// Normalized Hermite functions `<x|n>` for `n = 0..count`.
///
/// The recurrence runs on a floating log-scale so that large `|x|` does not
/// underflow the seed `pi^{-1/4} e^{-x^2/2}` before the polynomial growth
/// catches up.
pub fn hermite_functions(count: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let mut log_scale = -0.5 * x * x;
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25);
    out.push(cur);
    for n in 0..count.saturating_sub(1) {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        out.push(cur);
        if cur.abs() > 1e150 {
            for v in out.iter_mut() {
                *v *= 1e-150;
            }
            prev *= 1e-150;
            cur *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    let factor = log_scale.exp();
    for v in out.iter_mut() {
        *v *= factor;
    }
    out
}

/// Normalized Hermite function `<x|n>` (harmonic-oscillator eigenfunction
/// with `x = (a + a^dag)/sqrt 2`).
pub fn hermite_position_amplitude(n: usize, x: f64) -> f64 {
    hermite_functions(n + 1, x)[n]
}
