//! Tamed linearly implicit Euler / P1 finite element time stepper:
//!
//! ```text
//! (M + τS) X^m = M X^{m-1} + τ b(X^{m-1}) + w_m
//! ```
//!
//! where `b_i(x) = ∫ f_{τ,h}(I_h x) φ_i` is the tamed drift load and
//! `w_m = <ΔW_m, φ_i>` the noise load. One tridiagonal solve per step.

use std::sync::OnceLock;

use log::warn;

use crate::drift::{validate_params, DriftPolynomial, TamedDrift, TamingParams, ValidatedTaming};
use crate::error::{Result, SpdeError};
use crate::fem1d::{lp_norm, DiscreteSpectrum, FemOperators, LdlFactor, TriDiagSym, GAUSS4_NODES, GAUSS4_WEIGHTS};
use crate::noise::{LoadOperator, PathTape, SpectralIncrement};

/// Sup-norm above which iterates trigger a warning.
pub const SOFT_BLOWUP_THRESHOLD: f64 = 1e6;

#[derive(Debug)]
pub struct SchemeConfig {
    pub ops: FemOperators,
    pub drift: TamedDrift,
    pub tau: f64,
    pub initial: Vec<f64>,
    pub validated: ValidatedTaming,
    /// `L_f < λ_{1,h}`: the linearised dynamics contract.
    pub contraction: bool,
    loads: OnceLock<LoadOperator>,
}

impl SchemeConfig {
    pub fn new(
        ops: FemOperators,
        poly: DriftPolynomial,
        params: TamingParams,
        tau: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(SpdeError::InvalidArgument(format!("time step must be positive, got {tau}")));
        }
        if initial.len() != ops.dim() {
            return Err(SpdeError::InvalidArgument(format!(
                "initial vector has length {}, mesh has {} interior nodes",
                initial.len(),
                ops.dim()
            )));
        }
        let validated = validate_params(&poly, &params, poly.dim())?;
        let l_f = crate::drift::one_sided_constant(&poly).l_f;
        let contraction = l_f < first_discrete_eigenvalue(&ops);
        let drift = TamedDrift::new(poly, params, tau, ops.mesh.h())?;
        Ok(SchemeConfig {
            ops,
            drift,
            tau,
            initial,
            validated,
            contraction,
            loads: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.ops.dim()
    }

    /// Noise load table for `k` modes, cached for the first `k` requested.
    fn load_operator(&self, k: usize) -> std::borrow::Cow<'_, LoadOperator> {
        let cached = self.loads.get_or_init(|| LoadOperator::new(&self.ops.mesh, k));
        if cached.k() == k {
            std::borrow::Cow::Borrowed(cached)
        } else {
            std::borrow::Cow::Owned(LoadOperator::new(&self.ops.mesh, k))
        }
    }
}

/// `λ_{1,h}` of the uniform P1 discretisation,
/// `(6/h²)(1 - cos(πh/L)) / (2 + cos(πh/L))`.
fn first_discrete_eigenvalue(ops: &FemOperators) -> f64 {
    let h = ops.mesh.h();
    let c = (std::f64::consts::PI * h / ops.mesh.length()).cos();
    6.0 / (h * h) * (1.0 - c) / (2.0 + c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub m: usize,
    pub t: f64,
    pub x: Vec<f64>,
}

/// `M + τS`.
pub fn shifted_matrix(ops: &FemOperators, tau: f64) -> Result<TriDiagSym> {
    if !(tau >= 0.0) {
        return Err(SpdeError::InvalidArgument(format!("time step must be >= 0, got {tau}")));
    }
    ops.mass.add_scaled(&ops.stiffness, tau)
}

pub fn shifted_operator(config: &SchemeConfig) -> Result<LdlFactor> {
    shifted_matrix(&config.ops, config.tau)?.factor()
}

/// `b_i = ∫ f_{τ,h}(I_h x) φ_i dx` with the per-element Gauss rule.
pub fn drift_load(config: &SchemeConfig, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    drift_load_into(&config.ops, &config.drift, x, &mut out);
    out
}

fn drift_load_into(ops: &FemOperators, drift: &TamedDrift, x: &[f64], out: &mut [f64]) {
    let mesh = &ops.mesh;
    let h = mesh.h();
    let n = mesh.n_interior();
    out.iter_mut().for_each(|o| *o = 0.0);
    for e in 0..mesh.n_elements() {
        let (a, b) = mesh.element_values(x, e);
        let (mut left, mut right) = (0.0, 0.0);
        for (s, w) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS.iter()) {
            let fv = drift.eval((1.0 - s) * a + s * b) * w * h;
            left += fv * (1.0 - s);
            right += fv * s;
        }
        if e > 0 {
            out[e - 1] += left;
        }
        if e < n {
            out[e] += right;
        }
    }
}

/// Reusable per-trajectory workspace around the factorised `M + τS`.
pub struct Stepper<'a> {
    config: &'a SchemeConfig,
    factor: LdlFactor,
    rhs: Vec<f64>,
    drift: Vec<f64>,
    warned: bool,
}

impl<'a> Stepper<'a> {
    pub fn new(config: &'a SchemeConfig) -> Result<Self> {
        let n = config.dim();
        Ok(Stepper {
            config,
            factor: shifted_operator(config)?,
            rhs: vec![0.0; n],
            drift: vec![0.0; n],
            warned: false,
        })
    }

    /// Advance `x` from step `m - 1` to step `m` in place.
    pub fn advance(&mut self, x: &mut [f64], noise_load: Option<&[f64]>, m: usize) -> Result<()> {
        let cfg = self.config;
        cfg.ops.mass.mul_vec_into(x, &mut self.rhs);
        drift_load_into(&cfg.ops, &cfg.drift, x, &mut self.drift);
        let tau = cfg.tau;
        match noise_load {
            Some(w) => {
                for ((r, d), w) in self.rhs.iter_mut().zip(&self.drift).zip(w) {
                    *r += tau * d + w;
                }
            }
            None => {
                for (r, d) in self.rhs.iter_mut().zip(&self.drift) {
                    *r += tau * d;
                }
            }
        }
        self.factor.solve_in_place(&mut self.rhs);
        x.copy_from_slice(&self.rhs);

        let mut sup = 0.0f64;
        let mut finite = true;
        for v in x.iter() {
            finite &= v.is_finite();
            sup = sup.max(v.abs());
        }
        if !finite {
            return Err(SpdeError::NumericalBlowup { step: m, sup_norm: sup });
        }
        if sup > SOFT_BLOWUP_THRESHOLD && !self.warned {
            self.warned = true;
            warn!("iterate sup norm {sup:e} at step {m} exceeds {SOFT_BLOWUP_THRESHOLD:e}");
        }
        Ok(())
    }
}

/// One step from `state` with the given nodal noise load.
pub fn step(config: &SchemeConfig, state: &SchemeState, inc_load: &[f64]) -> Result<SchemeState> {
    if inc_load.len() != config.dim() || state.x.len() != config.dim() {
        return Err(SpdeError::InvalidArgument("load or state does not match the mesh".into()));
    }
    let mut stepper = Stepper::new(config)?;
    let mut x = state.x.clone();
    let m = state.m + 1;
    stepper.advance(&mut x, Some(inc_load), m)?;
    Ok(SchemeState { m, t: m as f64 * config.tau, x })
}

/// Noise driving a run.
#[derive(Debug, Clone, Copy)]
pub enum Forcing<'a> {
    /// Deterministic run of `steps` steps.
    Zero { steps: usize },
    Increments(&'a [SpectralIncrement]),
    /// A fine tape read at `factor` times its step; coarse increments are
    /// formed exactly as `noise::coarsen` forms them.
    Tape { tape: &'a PathTape, factor: usize },
}

impl Forcing<'_> {
    pub fn steps(&self) -> usize {
        match self {
            Forcing::Zero { steps } => *steps,
            Forcing::Increments(incs) => incs.len(),
            Forcing::Tape { tape, factor } => tape.steps() / factor,
        }
    }
}

pub type Functional<'a> = &'a (dyn Fn(&FemOperators, &[f64]) -> f64 + Sync);

/// What to record along a trajectory, every `stride` steps (including 0).
#[derive(Clone, Copy, Default)]
pub struct RecordSpec<'a> {
    pub stride: usize,
    /// L², L⁴ and L^{2q(2q-1)} norms.
    pub norms: bool,
    /// `||A_h^{γ/2} X||`; `γ = 1` uses the stiffness form, other values need
    /// `spectrum`.
    pub seminorm_gamma: Option<f64>,
    pub spectrum: Option<&'a DiscreteSpectrum>,
    pub functional: Option<Functional<'a>>,
}

impl<'a> RecordSpec<'a> {
    pub fn none() -> Self {
        RecordSpec::default()
    }

    pub fn every(stride: usize) -> Self {
        RecordSpec { stride, ..Default::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservableRecord {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub l2: Vec<f64>,
    pub l4: Vec<f64>,
    /// Norm in `L^{high_exponent}` with `high_exponent = 2q(2q-1)`.
    pub l_high: Vec<f64>,
    pub high_exponent: f64,
    pub seminorm: Vec<f64>,
    pub functional: Vec<f64>,
}

impl ObservableRecord {
    fn push(&mut self, config: &SchemeConfig, spec: &RecordSpec, m: usize, x: &[f64]) -> Result<()> {
        let ops = &config.ops;
        self.steps.push(m);
        self.times.push(m as f64 * config.tau);
        if spec.norms {
            self.l2.push(ops.l2_norm(x));
            self.l4.push(lp_norm(&ops.mesh, x, 4.0)?);
            self.l_high.push(lp_norm(&ops.mesh, x, self.high_exponent)?);
        }
        if let Some(gamma) = spec.seminorm_gamma {
            let v = if gamma == 1.0 {
                ops.stiffness.quadratic_form(x).max(0.0).sqrt()
            } else {
                spec.spectrum
                    .ok_or_else(|| SpdeError::InvalidArgument("seminorm with gamma != 1 needs a spectrum".into()))?
                    .seminorm(ops, gamma, x)
            };
            self.seminorm.push(v);
        }
        if let Some(f) = spec.functional {
            self.functional.push(f(ops, x));
        }
        Ok(())
    }
}

/// Iterate the scheme from `config.initial` over the whole forcing.
pub fn run(config: &SchemeConfig, forcing: Forcing, record: &RecordSpec) -> Result<(SchemeState, ObservableRecord)> {
    let n = config.dim();
    let steps = forcing.steps();
    let q = config.drift.poly().q() as f64;
    let mut rec = ObservableRecord {
        high_exponent: 2.0 * q * (2.0 * q - 1.0),
        ..Default::default()
    };
    let recording = record.stride > 0;
    let mut x = config.initial.clone();
    if recording {
        rec.push(config, record, 0, &x)?;
    }

    let mut stepper = Stepper::new(config)?;
    let mut load = vec![0.0; n];
    let mut coarse: Vec<f64> = Vec::new();
    let loads = match forcing {
        Forcing::Zero { .. } => None,
        Forcing::Increments(incs) => incs.first().map(|i| config.load_operator(i.coeffs.len())),
        Forcing::Tape { tape, factor } => {
            if factor == 0 || tape.steps() % factor != 0 {
                return Err(SpdeError::InvalidArgument(format!(
                    "factor {factor} does not divide {} tape steps",
                    tape.steps()
                )));
            }
            coarse = vec![0.0; tape.k()];
            Some(config.load_operator(tape.k()))
        }
    };

    for m in 1..=steps {
        let noise = match (forcing, loads.as_deref()) {
            (Forcing::Zero { .. }, _) | (_, None) => None,
            (Forcing::Increments(incs), Some(op)) => {
                op.apply_into(&incs[m - 1].coeffs, &mut load);
                Some(load.as_slice())
            }
            (Forcing::Tape { tape, factor }, Some(op)) => {
                let first = (m - 1) * factor;
                coarse.copy_from_slice(tape.increment(first));
                for child in 1..factor {
                    for (a, b) in coarse.iter_mut().zip(tape.increment(first + child)) {
                        *a += b;
                    }
                }
                op.apply_into(&coarse, &mut load);
                Some(load.as_slice())
            }
        };
        stepper.advance(&mut x, noise, m)?;
        if recording && m % record.stride == 0 {
            rec.push(config, record, m, &x)?;
        }
    }
    Ok((
        SchemeState {
            m: steps,
            t: steps as f64 * config.tau,
            x,
        },
        rec,
    ))
}
