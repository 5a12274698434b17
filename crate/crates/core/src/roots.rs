//! Real roots of real polynomials.

use nalgebra::DMatrix;

/// Imaginary parts below this (relative to the root magnitude) count as real.
pub const IMAG_TOL: f64 = 1e-9;

/// Evaluates `Σ c_d x^d` by Horner's rule. Coefficients are in ascending order.
pub fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn horner_derivative(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (d, &c)| acc * x + d as f64 * c)
}

/// Drops leading (highest-degree) coefficients that are negligible.
fn effective(coeffs: &[f64]) -> &[f64] {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut n = coeffs.len();
    while n > 0 && coeffs[n - 1].abs() <= 1e-14 * scale {
        n -= 1;
    }
    &coeffs[..n]
}

/// Real roots of `Σ c_d x^d` (ascending coefficients), sorted ascending.
/// Repeated roots may appear more than once. A constant polynomial has none.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let c = effective(coeffs);
    let mut roots = match c.len() {
        0 | 1 => Vec::new(),
        2 => vec![-c[0] / c[1]],
        3 => quadratic(c[2], c[1], c[0]),
        n => {
            let deg = n - 1;
            let lead = c[deg];
            let mut comp = DMatrix::zeros(deg, deg);
            for i in 1..deg {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..deg {
                comp[(i, deg - 1)] = -c[i] / lead;
            }
            comp.complex_eigenvalues()
                .iter()
                .filter(|z| z.im.abs() <= IMAG_TOL * z.re.abs().max(1.0))
                .map(|z| polish(c, z.re))
                .collect()
        }
    };
    roots.sort_by(f64::total_cmp);
    roots
}

fn quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0, 0.0];
    }
    vec![q / a, c / q]
}

fn polish(c: &[f64], mut x: f64) -> f64 {
    for _ in 0..4 {
        let d = horner_derivative(c, x);
        if d == 0.0 {
            break;
        }
        let step = horner(c, x) / d;
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

/// Lebesgue measure of `{t ∈ [0, upper] : p(t) > 0}` for a polynomial `p`.
pub fn positive_measure(coeffs: &[f64], upper: f64) -> f64 {
    if upper <= 0.0 {
        return 0.0;
    }
    let mut cuts = vec![0.0];
    cuts.extend(real_roots(coeffs).into_iter().filter(|&r| r > 0.0 && r < upper));
    cuts.push(upper);
    cuts.windows(2)
        .filter(|w| w[1] > w[0] && horner(coeffs, 0.5 * (w[0] + w[1])) > 0.0)
        .map(|w| w[1] - w[0])
        .sum()
}
