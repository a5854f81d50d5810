//! Scaled special functions and Gauss rules in double precision.

use std::f64::consts::PI;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Scaled complementary error function `e^{x²} erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 5.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    // Continued fraction x + (1/2)/(x + 1/(x + (3/2)/(x + ...))), evaluated bottom-up.
    let mut t = x;
    for k in (1..=120).rev() {
        t = x + 0.5 * k as f64 / t;
    }
    FRAC_1_SQRT_PI / t
}

/// Derivative of [`erfcx`]: `2x·erfcx(x) − 2/√π`.
pub fn erfcx_derivative(x: f64) -> f64 {
    2.0 * x * erfcx(x) - 2.0 * FRAC_1_SQRT_PI
}

/// Scaled exponential integral `e^{x} E₁(x)` for `x > 0`.
pub fn exp_e1(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        (-EULER_GAMMA - x.ln() - sum) * x.exp()
    } else {
        // Modified Lentz on 1/(x+1- 1/(x+3- 4/(x+5- ...))).
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let delta = c * d;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Normalized Hermite functions `h_0..h_{count-1}` at `z`
/// (eigenfunctions of `-½∂² + ½z²` with eigenvalues `k + ½`).
pub fn hermite_functions(count: usize, z: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let h0 = PI.powf(-0.25) * (-0.5 * z * z).exp();
    out.push(h0);
    if count == 1 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * z * h0);
    for k in 1..count - 1 {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * z * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

/// Least-squares slope and RMS residual of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_branches_meet() {
        let below = (4.999_999_f64 * 4.999_999).exp() * libm::erfc(4.999_999);
        assert!((erfcx(5.0) - below).abs() / below < 1e-6);
        // Asymptotic tail 1/(x√π).
        assert!((erfcx(1e8) * 1e8 * PI.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_e1_known_values() {
        // E1(1) = 0.219383934395520...
        assert!((exp_e1(1.0) / 1f64.exp() - 0.219_383_934_395_520_3).abs() < 1e-14);
        // E1(0.5) = 0.559773594776161
        assert!((exp_e1(0.5) / 0.5f64.exp() - 0.559_773_594_776_160_8).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_orthonormal() {
        let (z, w) = gauss_legendre_on(200, -15.0, 15.0);
        let table: Vec<Vec<f64>> = z.iter().map(|&z| hermite_functions(6, z)).collect();
        for a in 0..6 {
            for b in 0..6 {
                let s: f64 = table.iter().zip(&w).map(|(h, w)| w * h[a] * h[b]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12, "{a} {b} {s}");
            }
        }
    }
}
