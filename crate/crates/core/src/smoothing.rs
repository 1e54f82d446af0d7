//! Deterministic bench comparing the fully discrete propagator
//! `E^n_{τ,h} P_h = (I + τA_h)^{-n} P_h` with the heat semigroup `E(t)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, SpdeError};
use crate::fem1d::{sine_hat_moment, FemOperators, GAUSS4_NODES, GAUSS4_WEIGHTS};
use crate::scheme::shifted_matrix;

/// Relative size of the neglected series tail when evaluating `E(t)v`.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Maximum number of modes summed when evaluating the exact solution.
pub const MAX_EVAL_MODES: usize = 1 << 16;

/// Sample points per element for the `p = ∞` error.
const SUP_SAMPLES: usize = 32;

/// Function given by coefficients against `sqrt(2/L) sin(jπx/L)`, `j = 1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFunction {
    pub length: f64,
    pub coeffs: Vec<f64>,
}

impl SpectralFunction {
    pub fn new(length: f64, coeffs: Vec<f64>) -> Result<Self> {
        if !(length > 0.0) {
            return Err(SpdeError::InvalidArgument(format!("domain length must be positive, got {length}")));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(SpdeError::InvalidArgument("non-finite spectral coefficient".into()));
        }
        Ok(SpectralFunction { length, coeffs })
    }

    /// `sqrt(2/L) sin(jπx/L)` scaled by `amplitude`.
    pub fn mode(length: f64, j: usize, amplitude: f64) -> Result<Self> {
        if j == 0 {
            return Err(SpdeError::InvalidArgument("mode index starts at 1".into()));
        }
        let mut coeffs = vec![0.0; j];
        coeffs[j - 1] = amplitude;
        SpectralFunction::new(length, coeffs)
    }

    /// Flat spectrum with random signs and unit L² norm.
    pub fn rough(length: f64, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(SpdeError::InvalidArgument("rough data needs at least one mode".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = 1.0 / (k as f64).sqrt();
        let coeffs = (0..k).map(|_| if rng.gen::<bool>() { a } else { -a }).collect();
        SpectralFunction::new(length, coeffs)
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    fn wave(&self, j: usize) -> f64 {
        j as f64 * std::f64::consts::PI / self.length
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_truncated(x, self.coeffs.len())
    }

    fn eval_truncated(&self, x: f64, modes: usize) -> f64 {
        let norm = (2.0 / self.length).sqrt();
        self.coeffs[..modes]
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| c * (self.wave(j + 1) * x).sin())
            .sum::<f64>()
            * norm
    }

    /// `<v, φ_i>` for every interior node, in closed form.
    pub fn load(&self, ops: &FemOperators) -> Vec<f64> {
        let norm = (2.0 / self.length).sqrt();
        let h = ops.mesh.h();
        ops.mesh
            .nodes()
            .iter()
            .map(|&x| {
                self.coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(j, c)| c * sine_hat_moment(h, self.wave(j + 1), x))
                    .sum::<f64>()
                    * norm
            })
            .collect()
    }

    /// `P_h v`.
    pub fn project(&self, ops: &FemOperators) -> Result<Vec<f64>> {
        if (ops.mesh.length() - self.length).abs() > 1e-12 * self.length {
            return Err(SpdeError::InvalidArgument("function and mesh live on different intervals".into()));
        }
        Ok(ops.project_load(&self.load(ops)))
    }
}

/// `E(t)v`: mode `j` damped by `exp(-(jπ/L)² t)`.
pub fn exact_semigroup(v: &SpectralFunction, t: f64) -> Result<SpectralFunction> {
    if !(t >= 0.0) {
        return Err(SpdeError::InvalidArgument(format!("time must be >= 0, got {t}")));
    }
    let coeffs = v
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let k = v.wave(j + 1);
            c * (-k * k * t).exp()
        })
        .collect();
    Ok(SpectralFunction { length: v.length, coeffs })
}

#[derive(Debug, Clone, Copy)]
pub enum PropagatorInput<'a> {
    Spectral(&'a SpectralFunction),
    /// Already in V_h, so `P_h` is the identity.
    Nodal(&'a [f64]),
}

/// `(I + τA_h)^{-n} P_h v`, realised as `n` solves with `M + τS`.
pub fn discrete_propagator(ops: &FemOperators, tau: f64, n: usize, v: PropagatorInput) -> Result<Vec<f64>> {
    let mut x = match v {
        PropagatorInput::Spectral(f) => f.project(ops)?,
        PropagatorInput::Nodal(x) => {
            if x.len() != ops.dim() {
                return Err(SpdeError::InvalidArgument("nodal vector does not match mesh".into()));
            }
            x.to_vec()
        }
    };
    if n == 0 {
        return Ok(x);
    }
    let factor = shifted_matrix(ops, tau)?.factor()?;
    let mut rhs = vec![0.0; x.len()];
    for _ in 0..n {
        ops.mass.mul_vec_into(&x, &mut rhs);
        factor.solve_in_place(&mut rhs);
        std::mem::swap(&mut x, &mut rhs);
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothingErrorSample {
    pub h: f64,
    pub tau: f64,
    pub t_n: f64,
    pub p: f64,
    pub error: f64,
}

/// Number of leading modes of `E(t)v` needed so that the sup-norm bound of
/// the neglected tail is below `TAIL_TOLERANCE` times the head's L² norm.
fn truncation(v: &SpectralFunction, t: f64) -> Result<usize> {
    let norm = (2.0 / v.length).sqrt();
    let damped: Vec<f64> = v
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let k = v.wave(j + 1);
            c.abs() * (-k * k * t).exp()
        })
        .collect();
    // suffix sums of |c_j| e^{-λ_j t}
    let mut tail = vec![0.0; damped.len() + 1];
    for j in (0..damped.len()).rev() {
        tail[j] = tail[j + 1] + damped[j];
    }
    let mut head_sq = 0.0;
    for (j, d) in damped.iter().enumerate() {
        head_sq += d * d;
        if norm * tail[j + 1] <= TAIL_TOLERANCE * head_sq.sqrt() || tail[j + 1] == 0.0 {
            if j + 1 > MAX_EVAL_MODES {
                break;
            }
            return Ok(j + 1);
        }
    }
    Err(SpdeError::Accuracy(format!(
        "exact series at t = {t} needs more than {MAX_EVAL_MODES} modes; use a larger evaluation time or fewer data modes"
    )))
}

/// `||E(t_n)v - I_h E^n_{τ,h} P_h v||_{L^p}` with `t_n = nτ`.
pub fn smoothing_error(ops: &FemOperators, tau: f64, n: usize, p: f64, v: &SpectralFunction) -> Result<SmoothingErrorSample> {
    if p.is_nan() || p < 2.0 {
        return Err(SpdeError::InvalidArgument(format!("error exponent must lie in [2, ∞], got {p}")));
    }
    if n == 0 || !(tau > 0.0) {
        return Err(SpdeError::InvalidArgument(
            "smoothing errors are measured at t_n = nτ > 0 only".into(),
        ));
    }
    let t = n as f64 * tau;
    let exact = exact_semigroup(v, t)?;
    let modes = truncation(v, t)?;
    let discrete = discrete_propagator(ops, tau, n, PropagatorInput::Spectral(v))?;

    let mesh = &ops.mesh;
    let h = mesh.h();
    let diff = |e: usize, s: f64| {
        let (a, b) = mesh.element_values(&discrete, e);
        let x = (e as f64 + s) * h;
        let u = exact.eval_truncated(x, modes);
        u - ((1.0 - s) * a + s * b)
    };

    let error = if p.is_infinite() {
        let mut m = 0.0f64;
        for e in 0..mesh.n_elements() {
            for k in 0..=SUP_SAMPLES {
                m = m.max(diff(e, k as f64 / SUP_SAMPLES as f64).abs());
            }
        }
        m
    } else {
        let mut acc = 0.0;
        for e in 0..mesh.n_elements() {
            for (s, w) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS.iter()) {
                acc += w * h * diff(e, *s).abs().powf(p);
            }
        }
        acc.powf(1.0 / p)
    };
    Ok(SmoothingErrorSample { h, tau, t_n: t, p, error })
}

/// Empirical constant `C` in `||A_h^{μ/2} E^n_{τ,h} P_h v|| <= C min{t_n^{-μ/2}, t_n^{-2}} ||v||`
/// over the given `(τ, n)` pairs.
pub fn smoothing_constant(ops: &FemOperators, grid: &[(f64, usize)], mu: f64, v: &SpectralFunction) -> Result<f64> {
    if !(0.0..=2.0).contains(&mu) {
        return Err(SpdeError::InvalidArgument(format!("mu must lie in [0, 2], got {mu}")));
    }
    let spectrum = if mu == 0.0 || mu == 1.0 {
        None
    } else {
        Some(crate::fem1d::discrete_spectrum(ops)?)
    };
    let norm = v.l2_norm();
    let mut c: f64 = 0.0;
    for &(tau, n) in grid {
        if n == 0 {
            return Err(SpdeError::InvalidArgument("t_n must be positive".into()));
        }
        let t = n as f64 * tau;
        let x = discrete_propagator(ops, tau, n, PropagatorInput::Spectral(v))?;
        let lhs = match &spectrum {
            None if mu == 0.0 => ops.l2_norm(&x),
            None => ops.stiffness.quadratic_form(&x).max(0.0).sqrt(),
            Some(s) => s.seminorm(ops, mu, &x),
        };
        let rate = t.powf(-mu / 2.0).min(t.powi(-2));
        c = c.max(lhs / (rate * norm));
    }
    Ok(c)
}
