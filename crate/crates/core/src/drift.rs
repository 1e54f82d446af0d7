//! Polynomial drift of odd degree with negative leading coefficient and its
//! tamed modification
//!
//! ```text
//! f_{τ,h}(u) = f(u) / (1 + (β₁τ^θ + β₂h^ρ)|u|^{(2q-2)/α})^α
//! ```

use serde::Serialize;

use crate::error::{Result, SpdeError};

#[derive(Debug, Clone, PartialEq)]
pub struct DriftPolynomial {
    coeffs: Vec<f64>,
    q: usize,
    dim: usize,
}

impl DriftPolynomial {
    /// `coeffs[j]` multiplies `u^j`; the degree `2q - 1` is read from the
    /// length. `dim` is the spatial dimension the drift is used in.
    pub fn new(coeffs: Vec<f64>, dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(SpdeError::InvalidArgument(format!(
                "spatial dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if coeffs.len() < 4 || coeffs.len() % 2 != 0 {
            return Err(SpdeError::InvalidArgument(format!(
                "drift needs 2q coefficients with q >= 2, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(SpdeError::InvalidArgument("non-finite drift coefficient".into()));
        }
        let q = coeffs.len() / 2;
        if !(coeffs[2 * q - 1] < 0.0) {
            return Err(SpdeError::InvalidArgument(format!(
                "leading coefficient a_{} must be negative, got {}",
                2 * q - 1,
                coeffs[2 * q - 1]
            )));
        }
        if dim == 3 && q != 2 {
            return Err(SpdeError::InvalidArgument(format!(
                "in dimension 3 only cubic drifts (q = 2) are admissible, got q = {q}"
            )));
        }
        Ok(DriftPolynomial { coeffs, q, dim })
    }

    /// `u - u^3`.
    pub fn allen_cahn() -> Self {
        DriftPolynomial::new(vec![0.0, 1.0, 0.0, -1.0], 1).expect("valid cubic")
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_odd(&self) -> bool {
        self.coeffs.iter().step_by(2).all(|&c| c == 0.0)
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (j, &c)| acc * u + j as f64 * c)
    }

    /// `f(u) / |u|^{2q-2}` evaluated stably for large `|u|`.
    fn eval_scaled(&self, u: f64) -> f64 {
        let z = 1.0 / u;
        let g = self.coeffs.iter().fold(0.0, |acc, &c| acc * z + c);
        u * g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TamingParams {
    pub alpha: f64,
    pub theta: f64,
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl TamingParams {
    /// `α = 1/4`, `θ = 1`, `ρ = 2`, `β₁ = β₂ = 1`.
    pub const REFERENCE: TamingParams = TamingParams {
        alpha: 0.25,
        theta: 1.0,
        rho: 2.0,
        beta1: 1.0,
        beta2: 1.0,
    };

    fn check_ranges(&self) -> Result<()> {
        let bad = |name: &str, v: f64| {
            Err(SpdeError::InvalidArgument(format!(
                "taming parameter {name} out of range: {v}"
            )))
        };
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha (must lie in (0, 1])", self.alpha);
        }
        for (name, v) in [
            ("theta", self.theta),
            ("rho", self.rho),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(name, v);
            }
        }
        Ok(())
    }
}

/// The three thresholds `1 + d/(k q(2q-1)) - d/4`, `k ∈ {4, 2, 1}`, that
/// appear for the taming constraint. `FourQ` is the strictest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdForm {
    FourQ,
    TwoQ,
    OneQ,
}

impl ThresholdForm {
    pub const ALL: [ThresholdForm; 3] = [ThresholdForm::FourQ, ThresholdForm::TwoQ, ThresholdForm::OneQ];

    pub fn threshold(self, q: usize, d: usize) -> f64 {
        let k = match self {
            ThresholdForm::FourQ => 4.0,
            ThresholdForm::TwoQ => 2.0,
            ThresholdForm::OneQ => 1.0,
        };
        let q = q as f64;
        let d = d as f64;
        1.0 + d / (k * q * (2.0 * q - 1.0)) - d / 4.0
    }
}

/// Parameters that passed `validate_params`, with the per-form verdicts.
#[derive(Debug, Clone, Serialize)]
pub struct ValidatedTaming {
    pub params: TamingParams,
    /// `max{αθ, αρ/2}`.
    pub product: f64,
    pub forms_passed: Vec<(ThresholdForm, bool)>,
}

/// Accept iff `max{αθ, αρ/2} < 1 + d/(4q(2q-1)) - d/4`.
pub fn validate_params(
    poly: &DriftPolynomial,
    params: &TamingParams,
    d: usize,
) -> Result<ValidatedTaming> {
    params.check_ranges()?;
    if d != poly.dim() {
        return Err(SpdeError::InvalidArgument(format!(
            "drift was built for dimension {}, validated for {d}",
            poly.dim()
        )));
    }
    let time = params.alpha * params.theta;
    let space = 0.5 * params.alpha * params.rho;
    let (product, name) = if time >= space {
        (time, "alpha*theta")
    } else {
        (space, "alpha*rho/2")
    };
    let threshold = ThresholdForm::FourQ.threshold(poly.q(), d);
    if !(product < threshold) {
        return Err(SpdeError::Constraint {
            product: name,
            value: product,
            threshold,
        });
    }
    let forms_passed = ThresholdForm::ALL
        .iter()
        .map(|&f| (f, product < f.threshold(poly.q(), d)))
        .collect();
    Ok(ValidatedTaming {
        params: *params,
        product,
        forms_passed,
    })
}

/// `f_{τ,h}` with `(τ, h)` frozen.
#[derive(Debug, Clone)]
pub struct TamedDrift {
    poly: DriftPolynomial,
    params: TamingParams,
    tau: f64,
    h: f64,
    weight: f64,
    exponent: f64,
    int_exponent: Option<i32>,
}

impl TamedDrift {
    pub fn new(poly: DriftPolynomial, params: TamingParams, tau: f64, h: f64) -> Result<Self> {
        params.check_ranges()?;
        if !(tau > 0.0) || !(h > 0.0) {
            return Err(SpdeError::InvalidArgument(format!(
                "taming needs tau > 0 and h > 0, got tau = {tau}, h = {h}"
            )));
        }
        let weight = params.beta1 * tau.powf(params.theta) + params.beta2 * h.powf(params.rho);
        let exponent = (2 * poly.q() - 2) as f64 / params.alpha;
        let int_exponent = (exponent.fract() == 0.0 && exponent <= 64.0).then_some(exponent as i32);
        Ok(TamedDrift {
            poly,
            params,
            tau,
            h,
            weight,
            exponent,
            int_exponent,
        })
    }

    pub fn poly(&self) -> &DriftPolynomial {
        &self.poly
    }

    pub fn params(&self) -> &TamingParams {
        &self.params
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `β₁τ^θ + β₂h^ρ`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// `|u|^{(2q-2)/α}`.
    #[inline]
    pub fn abs_power(&self, u: f64) -> f64 {
        let a = u.abs();
        match self.int_exponent {
            Some(k) => a.powi(k),
            None if a == 0.0 => 0.0,
            None => (self.exponent * a.ln()).exp(),
        }
    }

    #[inline]
    fn root_alpha(&self, x: f64) -> f64 {
        let a = self.params.alpha;
        if a == 1.0 {
            x
        } else if a == 0.5 {
            x.sqrt()
        } else if a == 0.25 {
            x.sqrt().sqrt()
        } else {
            x.powf(a)
        }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        let f = self.poly.eval(u);
        let denom = self.root_alpha(1.0 + self.weight * self.abs_power(u));
        if (f.is_finite() && denom.is_finite()) || !u.is_finite() {
            return f / denom;
        }
        // Overflow for huge |u|: divide numerator and denominator by
        // |u|^{2q-2} = |u|^{αe}.
        let inv = if self.int_exponent.is_some() {
            1.0 / self.abs_power(u)
        } else {
            (-self.exponent * u.abs().ln()).exp()
        };
        self.poly.eval_scaled(u) / self.root_alpha(inv + self.weight)
    }
}

pub fn eval_f(poly: &DriftPolynomial, u: f64) -> f64 {
    poly.eval(u)
}

pub fn eval_f_tamed(
    poly: &DriftPolynomial,
    params: &TamingParams,
    tau: f64,
    h: f64,
    u: f64,
) -> Result<f64> {
    Ok(TamedDrift::new(poly.clone(), *params, tau, h)?.eval(u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OneSidedMethod {
    AnalyticCubic,
    GridScan,
}

/// Upper bound `L_f` of `f'` over the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OneSidedConstant {
    pub l_f: f64,
    pub method: OneSidedMethod,
}

pub fn one_sided_constant(poly: &DriftPolynomial) -> OneSidedConstant {
    let a = poly.coeffs();
    if poly.q() == 2 {
        // f' = a1 + 2 a2 u + 3 a3 u^2 with a3 < 0 peaks at u = -a2 / (3 a3).
        return OneSidedConstant {
            l_f: a[1] - a[2] * a[2] / (3.0 * a[3]),
            method: OneSidedMethod::AnalyticCubic,
        };
    }
    // Critical points of f' are roots of f''; Cauchy's bound keeps them
    // inside [-R, R], and f' decreases outside.
    let n = a.len();
    let second: Vec<f64> = (2..n).map(|j| (j * (j - 1)) as f64 * a[j]).collect();
    let lead = second[second.len() - 1].abs();
    let radius = 1.0
        + second[..second.len() - 1]
            .iter()
            .map(|c| c.abs() / lead)
            .fold(0.0, f64::max);
    const POINTS: usize = 200_000;
    let step = 2.0 * radius / POINTS as f64;
    let mut best_u = -radius;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=POINTS {
        let u = -radius + i as f64 * step;
        let d = poly.derivative(u);
        if d > best {
            best = d;
            best_u = u;
        }
    }
    // Golden-section polish inside the bracketing cell pair.
    let (mut lo, mut hi) = (best_u - step, best_u + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if poly.derivative(x1) > poly.derivative(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    OneSidedConstant {
        l_f: best.max(poly.derivative(0.5 * (lo + hi))),
        method: OneSidedMethod::GridScan,
    }
}

/// Empirical margins of the algebraic taming properties on a finite grid.
#[derive(Debug, Clone, Serialize)]
pub struct TamingReport {
    pub tau: f64,
    pub h: f64,
    /// Grid points where `f_{τ,h}` and `f` have different signs.
    pub sign_violations: usize,
    /// `max (|f_{τ,h}(u)| - |f(u)|)`; non-positive when domination holds.
    pub domination_margin: f64,
    /// `max |f_{τ,h}(u)| / (1 + |u| + (τ^θ + h^ρ)^{-α}|u|)`.
    pub growth_constant: f64,
    /// `max (|f - f_{τ,h}| - (β₁τ^θ + β₂h^ρ)|u|^{(2q-2)/α}|f|)`; non-positive
    /// when the approximation bound holds with constant 1.
    pub approximation_margin: f64,
    /// Candidate `c̃₀` used for the one-sided scan.
    pub one_sided_c0: f64,
    /// Smallest `c̃₁` making
    /// `2(u+v)f_{τ,h}(u) + τ|f_{τ,h}(u)|² + c̃₀u² ≤ c̃₁(1 + |v|^{2q})` on the grid.
    pub one_sided_c1: f64,
}

impl TamingReport {
    pub fn holds(&self) -> bool {
        self.sign_violations == 0 && self.domination_margin <= 0.0 && self.approximation_margin <= 0.0
    }
}

pub fn taming_inequality_suite(
    poly: &DriftPolynomial,
    params: &TamingParams,
    tau: f64,
    h: f64,
    us: &[f64],
    vs: &[f64],
    c0: f64,
) -> Result<TamingReport> {
    let tamed = TamedDrift::new(poly.clone(), *params, tau, h)?;
    let growth_scale = (tau.powf(params.theta) + h.powf(params.rho)).powf(-params.alpha);

    let mut sign_violations = 0;
    let mut domination_margin = f64::NEG_INFINITY;
    let mut growth_constant: f64 = 0.0;
    let mut approximation_margin = f64::NEG_INFINITY;
    for &u in us {
        let f = poly.eval(u);
        let ft = tamed.eval(u);
        if f.signum() != ft.signum() && !(f == 0.0 && ft == 0.0) {
            sign_violations += 1;
        }
        domination_margin = domination_margin.max(ft.abs() - f.abs());
        growth_constant = growth_constant.max(ft.abs() / (1.0 + u.abs() + growth_scale * u.abs()));
        let bound = tamed.weight() * tamed.abs_power(u) * f.abs();
        approximation_margin = approximation_margin.max((f - ft).abs() - bound);
    }

    let two_q = 2 * poly.q() as i32;
    let mut one_sided_c1 = f64::NEG_INFINITY;
    for &u in us {
        let ft = tamed.eval(u);
        let base = tau * ft * ft + c0 * u * u;
        for &v in vs {
            let lhs = 2.0 * (u + v) * ft + base;
            one_sided_c1 = one_sided_c1.max(lhs / (1.0 + v.abs().powi(two_q)));
        }
    }

    Ok(TamingReport {
        tau,
        h,
        sign_violations,
        domination_margin,
        growth_constant,
        approximation_margin,
        one_sided_c0: c0,
        one_sided_c1,
    })
}

/// Grid points where `|f_{τ',h'}(u)| > |f_{τ,h}(u)|` although
/// `τ' >= τ` and `h' >= h`, i.e. violations of monotone taming.
pub fn monotone_taming_violations(
    poly: &DriftPolynomial,
    params: &TamingParams,
    (tau, h): (f64, f64),
    (tau_coarse, h_coarse): (f64, f64),
    us: &[f64],
) -> Result<usize> {
    if tau_coarse < tau || h_coarse < h {
        return Err(SpdeError::InvalidArgument(
            "second step pair must be coarser in both tau and h".into(),
        ));
    }
    let fine = TamedDrift::new(poly.clone(), *params, tau, h)?;
    let coarse = TamedDrift::new(poly.clone(), *params, tau_coarse, h_coarse)?;
    Ok(us
        .iter()
        .filter(|&&u| coarse.eval(u).abs() > fine.eval(u).abs())
        .count())
}
