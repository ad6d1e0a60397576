//! Rate functions: `J̃` for neighbourhood measures, `δ` for degree measures and
//! `η` for the proportion of isolated vertices, plus Bennett's function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::measures::{
    check_consistency, entropy_against_poisson, ln_factorial, marginal_symbol, poisson_ln_pmf, relative_entropy_ln,
    Consistency, DegreeMeasure, NeighbourhoodMeasure, PairMeasure, PoissonReference, SymbolMeasure,
};

/// Tolerance on `⟨d⟩ = c` and `μ₁ = ν`.
pub const CONSTRAINT_TOL: f64 = 1e-10;
/// Tail mass at which Poisson-type profiles are truncated.
pub const TAIL_TOL: f64 = 1e-14;

/// `J̃_(ν,π)(μ)`: `H(μ ‖ Poi)` when `μ₁ = ν` and `(π, μ)` is (sub-)consistent,
/// `+∞` otherwise.
pub fn rate_neighbourhood(mu: &NeighbourhoodMeasure, nu: &SymbolMeasure, pi: &PairMeasure) -> Result<ExtReal> {
    mu.alphabet().ensure_same(nu.alphabet())?;
    mu.alphabet().ensure_same(pi.alphabet())?;
    let marginal = marginal_symbol(mu);
    let matches = marginal
        .weights()
        .iter()
        .zip(nu.weights())
        .all(|(x, y)| (x - y).abs() <= CONSTRAINT_TOL);
    if !matches || check_consistency(pi, mu)? == Consistency::Neither {
        return Ok(ExtReal::Infinite);
    }
    let reference = PoissonReference::new(nu, pi)?;
    entropy_against_poisson(mu, &reference)
}

/// `δ(d)`: `H(d ‖ q_c)` when `⟨d⟩ = c`, `+∞` otherwise.
pub fn rate_degree(d: &DegreeMeasure, c: f64) -> Result<ExtReal> {
    check_mean(c)?;
    if (d.mean() - c).abs() > CONSTRAINT_TOL {
        return Ok(ExtReal::Infinite);
    }
    Ok(entropy_against_poisson_law(d, c))
}

fn entropy_against_poisson_law(d: &DegreeMeasure, c: f64) -> ExtReal {
    relative_entropy_ln(d.weights().iter().copied().enumerate(), |&k| {
        poisson_ln_pmf(c, k as u64)
    })
}

fn check_mean(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "mean degree must be positive and finite, got {c}"
        )))
    }
}

fn check_proportion(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("proportion must lie in [0, 1], got {x}")))
    }
}

/// `(1 − e^{−λ}) / λ`, continuous at `λ = 0`.
pub fn root_map(lambda: f64) -> f64 {
    if lambda == 0.0 {
        1.0
    } else {
        -(-lambda).exp_m1() / lambda
    }
}

/// `ln(e^λ − 1)` without overflow or cancellation.
pub fn ln_expm1(lambda: f64) -> f64 {
    if lambda > 1.0 {
        lambda + (-(-lambda).exp_m1()).ln()
    } else {
        lambda.exp_m1().ln()
    }
}

/// The unique `λ ≥ 0` with `(1 − e^{−λ}) / λ = (1 − x) / c`.
///
/// `x = 1 − c` gives `0` and `x = 1` gives `+∞`.
pub fn lambda_root(x: f64, c: f64) -> Result<ExtReal> {
    check_mean(c)?;
    check_proportion(x)?;
    if x < 1.0 - c {
        return Err(Error::Domain(format!("x = {x} lies below 1 − c = {}", 1.0 - c)));
    }
    if x == 1.0 {
        return Ok(ExtReal::Infinite);
    }
    let t = (1.0 - x) / c;
    if t >= 1.0 {
        return Ok(ExtReal::Finite(0.0));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0 / t);
    let mut lambda = if t > 0.5 { 2.0 * (1.0 - t) } else { 1.0 / t };
    for _ in 0..200 {
        let r = root_map(lambda) - t;
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let slope = ((-lambda).exp() * (1.0 + lambda) - 1.0) / (lambda * lambda);
        let mut next = lambda - r / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - lambda).abs() <= 4.0 * f64::EPSILON * lambda.max(f64::MIN_POSITIVE) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(ExtReal::Finite(lambda))
}

/// Minimizer of `H(d ‖ q_c)` over `d(0) = x`, `⟨d⟩ = c`:
/// `d(0) = x`, `d(k) = (1 − x) λ^k / (k! (e^λ − 1))` for `k ≥ 1`.
pub fn minimizer_degree_profile(x: f64, c: f64) -> Result<DegreeMeasure> {
    let lambda = match lambda_root(x, c)? {
        ExtReal::Finite(l) => l,
        ExtReal::Infinite => {
            return Err(Error::Domain(
                "x = 1 admits no degree measure with positive mean".into(),
            ))
        }
    };
    if lambda == 0.0 {
        return DegreeMeasure::new(vec![x, 1.0 - x]);
    }
    let scale = (1.0 - x).ln() - ln_expm1(lambda);
    let ln_lambda = lambda.ln();
    let mut weights = vec![x];
    let mut k: u64 = 1;
    loop {
        let term = (scale + k as f64 * ln_lambda - ln_factorial(k)).exp();
        weights.push(term);
        let kf = k as f64;
        // for j > k the ratio of consecutive terms is at most λ / (k + 1)
        if kf + 1.0 > lambda && term * (kf + 1.0) / (kf + 1.0 - lambda) < TAIL_TOL {
            break;
        }
        k += 1;
    }
    DegreeMeasure::new(weights)
}

/// `η(x)` together with its minimizer and root.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IsolatedRateResult {
    pub x: f64,
    pub c: f64,
    /// `None` when `x < 1 − c`, where no root exists.
    pub lambda: Option<ExtReal>,
    pub minimizer: Option<DegreeMeasure>,
    pub value: ExtReal,
    /// `x log(x/e^{−c}) + (1−x) log((1−x)/(1−e^{−c})) + c log λ − c log c`,
    /// reported for comparison only.
    pub closed_form: Option<f64>,
}

/// `η(x) = inf { H(d ‖ q_c) : d(0) = x, ⟨d⟩ = c }`.
pub fn rate_isolated(x: f64, c: f64) -> Result<IsolatedRateResult> {
    check_mean(c)?;
    check_proportion(x)?;
    if x < 1.0 - c {
        return Ok(IsolatedRateResult {
            x,
            c,
            lambda: None,
            minimizer: None,
            value: ExtReal::Infinite,
            closed_form: None,
        });
    }
    let lambda = lambda_root(x, c)?;
    let (minimizer, value) = match lambda {
        ExtReal::Infinite => (None, ExtReal::Infinite),
        ExtReal::Finite(_) => {
            let d = minimizer_degree_profile(x, c)?;
            let value = entropy_against_poisson_law(&d, c);
            (Some(d), value)
        }
    };
    Ok(IsolatedRateResult {
        x,
        c,
        lambda: Some(lambda),
        minimizer,
        value,
        closed_form: lambda.finite().filter(|&l| l > 0.0).map(|l| closed_form(x, c, l)),
    })
}

fn x_ln_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

fn closed_form(x: f64, c: f64, lambda: f64) -> f64 {
    x_ln_ratio(x, (-c).exp()) + x_ln_ratio(1.0 - x, -(-c).exp_m1()) + c * lambda.ln() - c * c.ln()
}

/// Bennett's function `h(x) = (1 + x) log(1 + x) − x`.
pub fn bennett_h(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("Bennett's function needs x ≥ 0, got {x}")));
    }
    Ok((1.0 + x) * x.ln_1p() - x)
}

/// `exp(−v h(t / v))` for `v = m_n σ_n²` and threshold `t`.
pub fn bennett_tail(mean_var: f64, threshold: f64) -> Result<f64> {
    if mean_var.is_nan() || threshold.is_nan() || mean_var <= 0.0 || threshold <= 0.0 {
        return Err(Error::Domain(format!(
            "Bennett tail needs positive variance and threshold, got {mean_var} and {threshold}"
        )));
    }
    Ok((-mean_var * bennett_h(threshold / mean_var)?).exp())
}
