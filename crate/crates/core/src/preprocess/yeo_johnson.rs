use crate::error::{Error, Result};

/// Search interval for the transformation parameter.
pub const LAMBDA_RANGE: (f64, f64) = (-5.0, 5.0);
const GRID_POINTS: usize = 101;

/// Yeo-Johnson power transform of one value.
pub fn yeo_johnson(y: f64, lambda: f64) -> f64 {
    if y >= 0.0 {
        if lambda == 0.0 {
            y.ln_1p()
        } else {
            // ((y+1)^l - 1)/l = expm1(l ln(1+y))/l, stable near l = 0
            (lambda * y.ln_1p()).exp_m1() / lambda
        }
    } else {
        let m = 2.0 - lambda;
        if m == 0.0 {
            -(-y).ln_1p()
        } else {
            -(m * (-y).ln_1p()).exp_m1() / m
        }
    }
}

/// Gaussian profile log-likelihood of the transformed sample, Jacobian included.
pub fn log_likelihood(values: &[f64], lambda: f64) -> f64 {
    let n = values.len() as f64;
    let z: Vec<f64> = values.iter().map(|&y| yeo_johnson(y, lambda)).collect();
    let m = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    let jac: f64 = values.iter().map(|&y| y.signum() * y.abs().ln_1p()).sum();
    if !(var > 0.0) || !var.is_finite() {
        return f64::NEG_INFINITY;
    }
    -0.5 * n * var.ln() + (lambda - 1.0) * jac
}

pub(crate) fn distinct_count(values: &[f64], cap: usize) -> usize {
    let mut seen: Vec<f64> = Vec::with_capacity(cap);
    for &v in values {
        if !seen.contains(&v) {
            seen.push(v);
            if seen.len() >= cap {
                break;
            }
        }
    }
    seen.len()
}

/// Maximum-likelihood λ on [-5, 5]: grid scan then golden-section refinement
/// around the best grid point.
pub fn fit_lambda(values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in Yeo-Johnson fit"));
    }
    match distinct_count(values, 3) {
        0 | 1 => return Err(Error::Constant("cannot fit Yeo-Johnson λ to a constant sample".into())),
        2 => return Err(Error::invalid("Yeo-Johnson λ needs at least 3 distinct values")),
        _ => {}
    }
    let (lo, hi) = LAMBDA_RANGE;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let ll = |l: f64| log_likelihood(values, l);
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..GRID_POINTS {
        let v = ll(lo + step * i as f64);
        if v > best.1 {
            best = (i, v);
        }
    }
    let center = lo + step * best.0 as f64;
    let (mut a, mut b) = ((center - step).max(lo), (center + step).min(hi));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (ll(c), ll(d));
    while b - a > 1e-9 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = ll(d);
        }
    }
    let refined = (a + b) / 2.0;
    Ok(if ll(refined) >= best.1 { refined } else { center })
}
