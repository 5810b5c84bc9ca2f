use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_SWITCH: f64 = 1.0;
const MAX_TERMS: usize = 500;

/// Exponential integral `E1(x) = ∫_x^∞ e^(−t)/t dt` for `x > 0`.
///
/// Power series below `x = 1`, modified Lentz continued fraction above.
/// Both branches reach ~1e-15 relative accuracy. Returns `0.0` once
/// `e^(−x)` underflows.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("E1 is only defined for x > 0, got {x}")));
    }
    if x.is_infinite() || x > 745.0 {
        return Ok(0.0);
    }
    if x <= SERIES_SWITCH {
        Ok(series(x))
    } else {
        Ok(continued_fraction(x))
    }
}

// E1(x) = −γ − ln x − Σ_{k≥1} (−x)^k / (k·k!)
fn series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut fact_term = 1.0; // (−x)^k / k!
    for k in 1..MAX_TERMS {
        fact_term *= -x / k as f64;
        let term = fact_term / k as f64;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON * 0.5 {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

// E1(x) = e^(−x) · 1/(x+1− 1/(x+3− 4/(x+5− ...)))
fn continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    h * (-x).exp()
}
