//! Monte Carlo study drivers: strong and weak temporal/spatial rates,
//! equilibration from several initial states, long-horizon moment tracking,
//! plus the deterministic smoothing, taming and spectrum checks.
//!
//! Every sample `i` draws its noise from seeds derived from
//! `(master seed, i)` alone, samples are evaluated on a rayon pool and
//! reduced in index order, so reports do not depend on the worker count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::{monotone_taming_violations, taming_inequality_suite, DriftPolynomial, TamingParams, TamingReport};
use crate::error::{Result, SpdeError};
use crate::fem1d::{discrete_spectrum, l2_project_function, DiscreteSpectrum, FemOperators, Mesh1D};
use crate::noise::{coarsen, derive_seed, make_path, NoiseModel, SAMPLER_ID};
use crate::scheme::{run, Forcing, RecordSpec, SchemeConfig};
use crate::smoothing::{smoothing_error, SpectralFunction};
use crate::stats::{mean_stderr, ols, rate_fit, LineFit};

const TAG_PATH: u64 = 1;
const TAG_WEAK_INDEPENDENT: u64 = 0x100;

/// Initial datum `X₀`, projected onto each mesh with `P_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    /// `Σ amp · sin(jπx/L)` over `(j, amp)` pairs.
    Modes(Vec<(usize, f64)>),
}

impl InitialCondition {
    pub fn label(&self) -> String {
        match self {
            InitialCondition::Zero => "zero".into(),
            InitialCondition::Modes(m) => m
                .iter()
                .map(|(j, a)| format!("{a}sin{j}"))
                .collect::<Vec<_>>()
                .join("+"),
        }
    }

    pub fn nodal(&self, ops: &FemOperators) -> Result<Vec<f64>> {
        match self {
            InitialCondition::Zero => Ok(vec![0.0; ops.dim()]),
            InitialCondition::Modes(modes) => {
                if modes.iter().any(|(j, _)| *j == 0) {
                    return Err(SpdeError::InvalidArgument("initial mode index starts at 1".into()));
                }
                let l = ops.mesh.length();
                l2_project_function(ops, |x| {
                    modes
                        .iter()
                        .map(|&(j, a)| a * (j as f64 * std::f64::consts::PI * x / l).sin())
                        .sum()
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub length: f64,
    pub drift: DriftPolynomial,
    pub taming: TamingParams,
    pub initial: InitialCondition,
    /// Spectral exponent of `Q = Λ^{-s}`.
    pub noise_s: f64,
    /// Truncation level; defaults to the interior node count of the finest
    /// mesh in a study.
    pub noise_k: Option<usize>,
    /// Overrides the default regularity label.
    pub gamma: Option<f64>,
}

impl Problem {
    /// `u_t = u_xx + u - u³ + Ẇ` on `(0, 1)`, `u(0) = 0`, reference taming.
    pub fn allen_cahn(noise_s: f64) -> Self {
        Problem {
            length: 1.0,
            drift: DriftPolynomial::allen_cahn(),
            taming: TamingParams::REFERENCE,
            initial: InitialCondition::Zero,
            noise_s,
            noise_k: None,
            gamma: None,
        }
    }
}

/// `τ = T / 2^m`, `h = L / 2^level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Resolution {
    pub m: u32,
    pub level: u32,
}

impl Resolution {
    pub fn new(m: u32, level: u32) -> Self {
        Resolution { m, level }
    }

    pub fn steps(&self) -> usize {
        1usize << self.m
    }

    pub fn tau(&self, horizon: f64) -> f64 {
        horizon / self.steps() as f64
    }

    pub fn mesh(&self, length: f64) -> Result<Mesh1D> {
        Mesh1D::dyadic(length, self.level)
    }
}

/// Functional of the nodal state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `sin(π/4 - ||X||²_{L²})`.
    SinQuarterPiMinusSqNorm,
    /// `||X||²_{L²}`.
    SqL2Norm,
    Constant(f64),
}

impl Observable {
    pub fn eval(&self, ops: &FemOperators, x: &[f64]) -> f64 {
        match *self {
            Observable::SinQuarterPiMinusSqNorm => {
                (std::f64::consts::FRAC_PI_4 - ops.mass.quadratic_form(x)).sin()
            }
            Observable::SqL2Norm => ops.mass.quadratic_form(x),
            Observable::Constant(c) => c,
        }
    }
}

pub type Phi<'a> = &'a (dyn Fn(&FemOperators, &[f64]) -> f64 + Sync);

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub problem: Problem,
    pub grid: Vec<Resolution>,
    pub reference: Resolution,
    pub horizon: f64,
    pub samples: usize,
    pub seed: u64,
    pub stride: usize,
    pub observable: Observable,
    /// Weak studies: drive every resolution with the same path.
    pub crn: bool,
    /// Worker threads; 0 means rayon's default.
    pub workers: usize,
    /// Acceptance window for the fitted order; `None` upper bound is open.
    pub window: Option<(f64, Option<f64>)>,
}

impl StudyConfig {
    pub fn new(problem: Problem, grid: Vec<Resolution>, reference: Resolution, horizon: f64, samples: usize, seed: u64) -> Self {
        StudyConfig {
            problem,
            grid,
            reference,
            horizon,
            samples,
            seed,
            stride: 1,
            observable: Observable::SinQuarterPiMinusSqNorm,
            crn: false,
            workers: 0,
            window: None,
        }
    }

    fn check_common(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(SpdeError::config("study.grid", "grid is empty"));
        }
        if self.samples == 0 {
            return Err(SpdeError::config("study.samples", "need at least one sample"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(SpdeError::config("study.T", "horizon must be positive"));
        }
        Ok(())
    }

    /// Reference strictly finer than every grid entry.
    fn check_reference(&self) -> Result<()> {
        self.check_common()?;
        for r in &self.grid {
            let finer_or_equal = self.reference.m >= r.m && self.reference.level >= r.level;
            if !finer_or_equal || self.reference == *r {
                return Err(SpdeError::config(
                    "study.reference",
                    format!(
                        "reference [{}, {}] is not strictly finer than grid entry [{}, {}]",
                        self.reference.m, self.reference.level, r.m, r.level
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn finest_level(&self) -> u32 {
        self.grid.iter().map(|r| r.level).chain([self.reference.level]).max().unwrap_or(1)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let k = self
            .problem
            .noise_k
            .unwrap_or((1usize << self.finest_level()) - 1);
        let model = NoiseModel::new(self.problem.noise_s, k, self.problem.length)?;
        Ok(match self.problem.gamma {
            Some(g) => model.with_gamma(g),
            None => model,
        })
    }

    fn scheme(&self, res: Resolution, initial: &InitialCondition) -> Result<SchemeConfig> {
        let ops = FemOperators::new(res.mesh(self.problem.length)?)?;
        let x0 = initial.nodal(&ops)?;
        SchemeConfig::new(ops, self.problem.drift.clone(), self.problem.taming, res.tau(self.horizon), x0)
    }

    fn metadata(&self, model: &NoiseModel, started: Instant) -> Metadata {
        Metadata {
            seed: self.seed,
            sampler: SAMPLER_ID.to_string(),
            k: model.k(),
            samples: self.samples,
            s: model.s(),
            gamma: model.gamma_report(),
            crn: self.crn,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        }
    }
}

pub fn sample_seed(master: u64, sample: usize) -> u64 {
    derive_seed(master, sample as u64, TAG_PATH)
}

/// Evaluate `f` for every sample index on a pool with `workers` threads;
/// results come back in index order and the first failing index wins.
fn map_samples<T, F>(workers: usize, samples: usize, master: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SpdeError::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..samples).into_par_iter().map(&f).collect());
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| SpdeError::StudyAborted {
                sample: i,
                seed: sample_seed(master, i),
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub seed: u64,
    pub sampler: String,
    pub k: usize,
    pub samples: usize,
    pub s: f64,
    pub gamma: f64,
    pub crn: bool,
    pub version: String,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitVariable {
    Tau,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub m: u32,
    pub level: u32,
    pub tau: f64,
    pub h: f64,
    pub error: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    StrongRate,
    WeakRate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub kind: StudyKind,
    pub rows: Vec<RateRow>,
    pub fit_variable: FitVariable,
    /// `None` when the errors are not all positive.
    pub fit: Option<LineFit>,
    /// Strong studies: the same fit applied to mean-square errors.
    pub mean_square_fit: Option<LineFit>,
    pub window: (f64, Option<f64>),
    pub pass: bool,
    pub flags: Vec<String>,
    pub metadata: Metadata,
}

impl RateReport {
    pub fn fitted_order(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// Assemble a report from per-resolution errors. Used by the studies and
    /// directly by tests that inject synthetic rows.
    pub fn from_rows(
        kind: StudyKind,
        rows: Vec<RateRow>,
        window: (f64, Option<f64>),
        metadata: Metadata,
    ) -> Result<RateReport> {
        let fit_variable = fit_variable(&rows)?;
        let resolution = |r: &RateRow| match fit_variable {
            FitVariable::Tau => r.tau,
            FitVariable::H => r.h,
        };
        let mut flags = Vec::new();
        let fit = if rows.iter().all(|r| r.error > 0.0) {
            Some(rate_fit(&rows.iter().map(|r| (resolution(r), r.error)).collect::<Vec<_>>())?)
        } else {
            flags.push("non-positive-error".to_string());
            None
        };
        if rows.iter().all(|r| r.error <= 2.0 * r.stderr) {
            flags.push("errors-within-noise".to_string());
        }
        // Decreasing along refinement wherever the error is resolved.
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| resolution(b).total_cmp(&resolution(a)));
        let resolved: Vec<f64> = sorted.iter().filter(|r| r.error > 3.0 * r.stderr).map(|r| r.error).collect();
        if resolved.windows(2).any(|w| w[1] >= w[0]) {
            flags.push("non-monotone".to_string());
        }
        let mean_square_fit = match (kind, &fit) {
            (StudyKind::StrongRate, Some(_)) => Some(rate_fit(
                &rows.iter().map(|r| (resolution(r), r.error * r.error)).collect::<Vec<_>>(),
            )?),
            _ => None,
        };
        let in_window = |x: f64| x >= window.0 && window.1.map_or(true, |hi| x <= hi);
        let mut pass = fit.is_some_and(|f| in_window(f.slope)) && !flags.iter().any(|f| f == "errors-within-noise");
        if kind == StudyKind::WeakRate {
            let smallest = rows.iter().map(|r| r.error).fold(f64::INFINITY, f64::min);
            let resolved = rows.iter().all(|r| r.stderr < 0.5 * smallest);
            if !resolved {
                flags.push("stderr-not-below-half-smallest-error".to_string());
            }
            pass &= resolved;
        }
        Ok(RateReport {
            kind,
            rows,
            fit_variable,
            fit,
            mean_square_fit,
            window,
            pass,
            flags,
            metadata,
        })
    }
}

fn fit_variable(rows: &[RateRow]) -> Result<FitVariable> {
    let same_level = rows.windows(2).all(|w| w[0].level == w[1].level);
    let same_m = rows.windows(2).all(|w| w[0].m == w[1].m);
    match (same_level, same_m) {
        (true, false) => Ok(FitVariable::Tau),
        (false, true) => Ok(FitVariable::H),
        _ => Err(SpdeError::config(
            "study.grid",
            "grid must refine exactly one of tau (fixed h) or h (fixed tau)",
        )),
    }
}

/// Default windows for the fitted orders.
pub fn default_window(kind: StudyKind, s: f64) -> (f64, Option<f64>) {
    match (kind, s == 0.0) {
        (StudyKind::StrongRate, false) => (0.8, Some(1.2)),
        (StudyKind::StrongRate, true) => (0.35, Some(0.65)),
        (StudyKind::WeakRate, false) => (0.7, Some(1.3)),
        (StudyKind::WeakRate, true) => (0.3, Some(0.8)),
    }
}

/// Squared L² distance on the reference mesh after prolongation.
fn sq_distance(reference: &FemOperators, x_ref: &[f64], coarse: &Mesh1D, x: &[f64]) -> f64 {
    let diff: Vec<f64> = if coarse.n_interior() == reference.dim() {
        x_ref.iter().zip(x).map(|(a, b)| a - b).collect()
    } else {
        coarse
            .prolong(x, &reference.mesh)
            .iter()
            .zip(x_ref)
            .map(|(p, r)| r - p)
            .collect()
    };
    reference.mass.quadratic_form(&diff)
}

/// Strong errors `sqrt(E ||X_ref(T) - X(T)||²)` on common noise paths.
/// Rejects statistics that overflowed even though the iterates stayed finite.
fn finite(value: f64, step: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SpdeError::NumericalBlowup { step, sup_norm: value.abs() })
    }
}

pub fn strong_rate_study(cfg: &StudyConfig) -> Result<RateReport> {
    let started = Instant::now();
    cfg.check_reference()?;
    let model = cfg.noise_model()?;
    let reference = cfg.scheme(cfg.reference, &cfg.problem.initial)?;
    let coarse: Vec<SchemeConfig> = cfg
        .grid
        .iter()
        .map(|r| cfg.scheme(*r, &cfg.problem.initial))
        .collect::<Result<_>>()?;
    let fine_steps = cfg.reference.steps();

    let per_sample = map_samples(cfg.workers, cfg.samples, cfg.seed, |i| {
        let tape = make_path(&model, sample_seed(cfg.seed, i), cfg.horizon, fine_steps)?;
        if i == 0 {
            // Coupling check: a coarse increment is the exact sum of its children.
            let factor = 1usize << (cfg.reference.m - cfg.grid[0].m);
            let first = coarsen(&tape, factor)?;
            let mut sum = tape.increment(0).to_vec();
            for c in 1..factor {
                sum.iter_mut().zip(tape.increment(c)).for_each(|(a, b)| *a += b);
            }
            assert_eq!(first[0].coeffs, sum, "coarse increments must sum their children");
        }
        let (x_ref, _) = run(&reference, Forcing::Tape { tape: &tape, factor: 1 }, &RecordSpec::none())?;
        cfg.grid
            .iter()
            .zip(&coarse)
            .map(|(r, c)| {
                let factor = 1usize << (cfg.reference.m - r.m);
                let (x, _) = run(c, Forcing::Tape { tape: &tape, factor }, &RecordSpec::none())?;
                finite(sq_distance(&reference.ops, &x_ref.x, &c.ops.mesh, &x.x), x.m)
            })
            .collect::<Result<Vec<f64>>>()
    })?;

    let rows = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let sq: Vec<f64> = per_sample.iter().map(|s| s[k]).collect();
            let (mse, se) = mean_stderr(&sq);
            let error = mse.sqrt();
            // delta method for the square root
            let stderr = if error > 0.0 { se / (2.0 * error) } else { se.sqrt() };
            RateRow {
                m: r.m,
                level: r.level,
                tau: r.tau(cfg.horizon),
                h: cfg.problem.length / (1u64 << r.level) as f64,
                error,
                stderr: if stderr.is_nan() { 0.0 } else { stderr },
                samples: cfg.samples,
            }
        })
        .collect();
    let window = cfg.window.unwrap_or_else(|| default_window(StudyKind::StrongRate, model.s()));
    let mut metadata = cfg.metadata(&model, started);
    metadata.crn = true;
    RateReport::from_rows(StudyKind::StrongRate, rows, window, metadata)
}

/// Weak errors `|E φ(X(T)) - E φ(X_ref(T))|`.
pub fn weak_rate_study(cfg: &StudyConfig, phi: Phi) -> Result<RateReport> {
    let started = Instant::now();
    cfg.check_reference()?;
    let model = cfg.noise_model()?;
    let reference = cfg.scheme(cfg.reference, &cfg.problem.initial)?;
    let coarse: Vec<SchemeConfig> = cfg
        .grid
        .iter()
        .map(|r| cfg.scheme(*r, &cfg.problem.initial))
        .collect::<Result<_>>()?;

    // per sample: [φ_ref, φ_1, ..., φ_n]
    let per_sample = map_samples(cfg.workers, cfg.samples, cfg.seed, |i| {
        let mut out = Vec::with_capacity(cfg.grid.len() + 1);
        if cfg.crn {
            let tape = make_path(&model, sample_seed(cfg.seed, i), cfg.horizon, cfg.reference.steps())?;
            let (x, _) = run(&reference, Forcing::Tape { tape: &tape, factor: 1 }, &RecordSpec::none())?;
            out.push(finite(phi(&reference.ops, &x.x), x.m)?);
            for (r, c) in cfg.grid.iter().zip(&coarse) {
                let factor = 1usize << (cfg.reference.m - r.m);
                let (x, _) = run(c, Forcing::Tape { tape: &tape, factor }, &RecordSpec::none())?;
                out.push(finite(phi(&c.ops, &x.x), x.m)?);
            }
        } else {
            let seed = derive_seed(cfg.seed, i as u64, TAG_WEAK_INDEPENDENT);
            let tape = make_path(&model, seed, cfg.horizon, cfg.reference.steps())?;
            let (x, _) = run(&reference, Forcing::Tape { tape: &tape, factor: 1 }, &RecordSpec::none())?;
            out.push(finite(phi(&reference.ops, &x.x), x.m)?);
            for (k, (r, c)) in cfg.grid.iter().zip(&coarse).enumerate() {
                let seed = derive_seed(cfg.seed, i as u64, TAG_WEAK_INDEPENDENT + 1 + k as u64);
                let tape = make_path(&model, seed, cfg.horizon, r.steps())?;
                let (x, _) = run(c, Forcing::Tape { tape: &tape, factor: 1 }, &RecordSpec::none())?;
                out.push(finite(phi(&c.ops, &x.x), x.m)?);
            }
        }
        Ok(out)
    })?;

    let column = |k: usize| per_sample.iter().map(|s| s[k]).collect::<Vec<f64>>();
    let reference_values = column(0);
    let (ref_mean, ref_se) = mean_stderr(&reference_values);
    let rows = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let values = column(k + 1);
            let (error, stderr) = if cfg.crn {
                let d: Vec<f64> = values.iter().zip(&reference_values).map(|(a, b)| a - b).collect();
                let (m, se) = mean_stderr(&d);
                (m.abs(), se)
            } else {
                let (m, se) = mean_stderr(&values);
                ((m - ref_mean).abs(), (se * se + ref_se * ref_se).sqrt())
            };
            RateRow {
                m: r.m,
                level: r.level,
                tau: r.tau(cfg.horizon),
                h: cfg.problem.length / (1u64 << r.level) as f64,
                error,
                stderr: if stderr.is_nan() { 0.0 } else { stderr },
                samples: cfg.samples,
            }
        })
        .collect();
    let window = cfg.window.unwrap_or_else(|| default_window(StudyKind::WeakRate, model.s()));
    RateReport::from_rows(StudyKind::WeakRate, rows, window, cfg.metadata(&model, started))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesStats {
    pub label: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean over the final quarter of the horizon, with its standard error.
    pub window_mean: f64,
    pub window_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibrationReport {
    pub times: Vec<f64>,
    pub series: Vec<SeriesStats>,
    pub window: (f64, f64),
    /// Largest `|m_a - m_b| / sqrt(se_a² + se_b²)` over pairs.
    pub max_pairwise_z: Option<f64>,
    /// Final-window means pairwise within 3 combined standard errors;
    /// `None` when there are too few samples to tell.
    pub agreement: Option<bool>,
    pub flags: Vec<String>,
    pub metadata: Metadata,
}

/// Time series of `E φ(X^m)` from each initial condition. All initial
/// conditions share the per-sample noise.
pub fn equilibration_study(cfg: &StudyConfig, initial_conditions: &[InitialCondition], phi: Phi) -> Result<EquilibrationReport> {
    let started = Instant::now();
    cfg.check_common()?;
    if initial_conditions.is_empty() {
        return Err(SpdeError::config("study.initial_conditions", "need at least one initial condition"));
    }
    let res = cfg.grid[0];
    let model = cfg.noise_model()?;
    let schemes: Vec<SchemeConfig> = initial_conditions
        .iter()
        .map(|ic| cfg.scheme(res, ic))
        .collect::<Result<_>>()?;
    if !schemes[0].contraction {
        return Err(SpdeError::InvalidArgument(
            "equilibration needs the contraction regime L_f < λ_1,h".into(),
        ));
    }
    let stride = cfg.stride.max(1);
    let record = RecordSpec {
        functional: Some(phi),
        ..RecordSpec::every(stride)
    };

    let per_sample = map_samples(cfg.workers, cfg.samples, cfg.seed, |i| {
        let tape = make_path(&model, sample_seed(cfg.seed, i), cfg.horizon, res.steps())?;
        schemes
            .iter()
            .map(|s| Ok(run(s, Forcing::Tape { tape: &tape, factor: 1 }, &record)?.1))
            .collect::<Result<Vec<_>>>()
    })?;

    let times = per_sample[0][0].times.clone();
    let window = (0.75 * cfg.horizon, cfg.horizon);
    let in_window: Vec<usize> = (0..times.len())
        .filter(|&k| times[k] >= window.0 - 1e-12 && times[k] <= window.1 + 1e-12)
        .collect();
    let series: Vec<SeriesStats> = initial_conditions
        .iter()
        .enumerate()
        .map(|(c, ic)| {
            let (mean, stderr): (Vec<f64>, Vec<f64>) = (0..times.len())
                .map(|k| {
                    let v: Vec<f64> = per_sample.iter().map(|s| s[c].functional[k]).collect();
                    mean_stderr(&v)
                })
                .unzip();
            let averages: Vec<f64> = per_sample
                .iter()
                .map(|s| in_window.iter().map(|&k| s[c].functional[k]).sum::<f64>() / in_window.len() as f64)
                .collect();
            let (window_mean, window_stderr) = mean_stderr(&averages);
            SeriesStats {
                label: ic.label(),
                mean,
                stderr,
                window_mean,
                window_stderr,
            }
        })
        .collect();

    let mut flags = Vec::new();
    let (max_pairwise_z, agreement) = if cfg.samples < 2 {
        flags.push("insufficient-samples".to_string());
        (None, None)
    } else {
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for a in 0..series.len() {
            for b in (a + 1)..series.len() {
                let (sa, sb) = (&series[a], &series[b]);
                let diff = (sa.window_mean - sb.window_mean).abs();
                let se = (sa.window_stderr.powi(2) + sb.window_stderr.powi(2)).sqrt();
                ok &= diff <= 3.0 * se;
                let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
                worst = worst.max(z);
            }
        }
        (Some(worst), Some(ok))
    };
    Ok(EquilibrationReport {
        times,
        series,
        window,
        max_pairwise_z,
        agreement,
        flags,
        metadata: cfg.metadata(&model, started),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trend {
    /// Mean over samples of the per-path least-squares slope; equals the
    /// slope of the mean series.
    pub slope: f64,
    pub stderr: f64,
}

impl Trend {
    pub fn flat(&self) -> bool {
        self.slope.abs() <= 2.0 * self.stderr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSeries {
    pub resolution: Resolution,
    pub tau: f64,
    pub times: Vec<f64>,
    /// `E||X||²_{L²}`, `E||X||⁴_{L⁴}`, `E||A_h^{γ/2}X||²`.
    pub l2_sq: SeriesStats,
    pub l4_pow4: SeriesStats,
    pub seminorm_sq: SeriesStats,
    pub trends: [Trend; 3],
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub horizon: f64,
    pub gamma: f64,
    pub runs: Vec<MomentSeries>,
    pub pass: bool,
    pub metadata: Metadata,
}

/// Moment series over `horizon_multiplier · T` for every grid entry, with a
/// trend test over the second half of the horizon.
pub fn moment_study(cfg: &StudyConfig, horizon_multiplier: f64) -> Result<MomentReport> {
    let started = Instant::now();
    cfg.check_common()?;
    if !(horizon_multiplier > 0.0) {
        return Err(SpdeError::config("study.horizon_multiplier", "must be positive"));
    }
    let horizon = cfg.horizon * horizon_multiplier;
    let model = cfg.noise_model()?;
    let gamma = model.gamma_report();
    let stride = cfg.stride.max(1);

    let mut runs = Vec::with_capacity(cfg.grid.len());
    for res in &cfg.grid {
        let tau = cfg.horizon / res.steps() as f64;
        let steps_f = horizon / tau;
        if (steps_f - steps_f.round()).abs() > 1e-9 || !(steps_f.round() as usize).is_power_of_two() {
            return Err(SpdeError::config(
                "study.horizon_multiplier",
                "scaled horizon must be a power-of-two multiple of tau",
            ));
        }
        let steps = steps_f.round() as usize;
        let ops = FemOperators::new(res.mesh(cfg.problem.length)?)?;
        let spectrum: Option<DiscreteSpectrum> = if gamma == 1.0 { None } else { Some(discrete_spectrum(&ops)?) };
        let x0 = cfg.problem.initial.nodal(&ops)?;
        let scheme = SchemeConfig::new(ops, cfg.problem.drift.clone(), cfg.problem.taming, tau, x0)?;
        let record = RecordSpec {
            norms: true,
            seminorm_gamma: Some(gamma),
            spectrum: spectrum.as_ref(),
            ..RecordSpec::every(stride)
        };
        let per_sample = map_samples(cfg.workers, cfg.samples, cfg.seed, |i| {
            let tape = make_path(&model, sample_seed(cfg.seed, i), horizon, steps)?;
            Ok(run(&scheme, Forcing::Tape { tape: &tape, factor: 1 }, &record)?.1)
        })?;

        let times = per_sample[0].times.clone();
        let half: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= 0.5 * horizon - 1e-12).collect();
        let half_t: Vec<f64> = half.iter().map(|&k| times[k]).collect();
        let window: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= 0.75 * horizon - 1e-12).collect();
        let extract = |f: &dyn Fn(&crate::scheme::ObservableRecord, usize) -> f64, label: &str| -> Result<(SeriesStats, Trend)> {
            let (mean, stderr): (Vec<f64>, Vec<f64>) = (0..times.len())
                .map(|k| mean_stderr(&per_sample.iter().map(|r| f(r, k)).collect::<Vec<_>>()))
                .unzip();
            let slopes = per_sample
                .iter()
                .map(|r| Ok(ols(&half_t, &half.iter().map(|&k| f(r, k)).collect::<Vec<_>>())?.slope))
                .collect::<Result<Vec<f64>>>()?;
            let (slope, slope_se) = mean_stderr(&slopes);
            let averages: Vec<f64> = per_sample
                .iter()
                .map(|r| window.iter().map(|&k| f(r, k)).sum::<f64>() / window.len() as f64)
                .collect();
            let (window_mean, window_stderr) = mean_stderr(&averages);
            Ok((
                SeriesStats { label: label.to_string(), mean, stderr, window_mean, window_stderr },
                Trend { slope, stderr: if slope_se.is_nan() { 0.0 } else { slope_se } },
            ))
        };
        let (l2_sq, t0) = extract(&|r, k| r.l2[k] * r.l2[k], "l2_sq")?;
        let (l4_pow4, t1) = extract(&|r, k| r.l4[k].powi(4), "l4_pow4")?;
        let (seminorm_sq, t2) = extract(&|r, k| r.seminorm[k] * r.seminorm[k], "seminorm_sq")?;
        let bounded = [&l2_sq, &l4_pow4, &seminorm_sq]
            .iter()
            .all(|s| s.mean.iter().all(|v| v.is_finite()));
        runs.push(MomentSeries {
            resolution: *res,
            tau,
            times,
            l2_sq,
            l4_pow4,
            seminorm_sq,
            trends: [t0, t1, t2],
            bounded,
        });
    }
    let pass = runs.iter().all(|r| r.bounded && r.trends.iter().all(Trend::flat));
    Ok(MomentReport {
        horizon,
        gamma,
        runs,
        pass,
        metadata: cfg.metadata(&model, started),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothingRow {
    pub m: u32,
    pub level: u32,
    pub tau: f64,
    pub h: f64,
    pub t: f64,
    pub p: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingReport {
    pub rows: Vec<SmoothingRow>,
    pub fit_variable: FitVariable,
    pub fit: Option<LineFit>,
    pub window: (f64, Option<f64>),
    /// `(t_late, error(t), error(t_late))` at the first grid entry.
    pub decay: Option<(f64, f64, f64)>,
    pub pass: bool,
    pub data_modes: usize,
    pub data_seed: u64,
}

/// Theoretical smoothing orders `(temporal, spatial) = (1 + d/(2p) - d/4, 2 + d/p - d/2)` for `d = 1`.
pub fn smoothing_orders(p: f64) -> (f64, f64) {
    let inv = if p.is_infinite() { 0.0 } else { 1.0 / p };
    (1.0 + 0.5 * inv - 0.25, 2.0 + inv - 0.5)
}

/// Deterministic `L^p` error of `E^n_{τ,h}P_h v` against `E(t)v` for rough
/// unit-norm data over the grid, evaluated at `t = T`.
pub fn smoothing_study(
    length: f64,
    grid: &[Resolution],
    horizon: f64,
    p: f64,
    data_modes: usize,
    data_seed: u64,
    decay_time: Option<f64>,
    window: Option<(f64, Option<f64>)>,
) -> Result<SmoothingReport> {
    if grid.is_empty() {
        return Err(SpdeError::config("study.grid", "grid is empty"));
    }
    let v = SpectralFunction::rough(length, data_modes, data_seed)?;
    let evaluate = |res: &Resolution, t: f64| -> Result<SmoothingRow> {
        let ops = FemOperators::new(res.mesh(length)?)?;
        let tau = res.tau(horizon);
        let n = t / tau;
        if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
            return Err(SpdeError::config("study.decay_time", "evaluation time must be a positive multiple of tau"));
        }
        let s = smoothing_error(&ops, tau, n.round() as usize, p, &v)?;
        Ok(SmoothingRow { m: res.m, level: res.level, tau, h: s.h, t: s.t_n, p, error: s.error })
    };
    let rows: Vec<SmoothingRow> = grid.iter().map(|r| evaluate(r, horizon)).collect::<Result<_>>()?;
    let rate_rows: Vec<RateRow> = rows
        .iter()
        .map(|r| RateRow { m: r.m, level: r.level, tau: r.tau, h: r.h, error: r.error, stderr: 0.0, samples: 1 })
        .collect();
    let fit_variable = fit_variable(&rate_rows)?;
    let fit = if rows.iter().all(|r| r.error > 0.0) && rows.len() >= 3 {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (if fit_variable == FitVariable::Tau { r.tau } else { r.h }, r.error))
            .collect();
        Some(rate_fit(&pts)?)
    } else {
        None
    };
    let (temporal, spatial) = smoothing_orders(p);
    let window = window.unwrap_or(match fit_variable {
        FitVariable::Tau => (temporal - 0.15, None),
        FitVariable::H => (spatial - 0.3, None),
    });
    let decay = match decay_time {
        Some(t_late) => {
            let late = evaluate(&grid[0], t_late)?;
            Some((t_late, rows[0].error, late.error))
        }
        None => None,
    };
    let in_window = |x: f64| x >= window.0 && window.1.map_or(true, |hi| x <= hi);
    let pass = fit.is_some_and(|f| in_window(f.slope)) && decay.map_or(true, |(_, early, late)| late <= early);
    Ok(SmoothingReport {
        rows,
        fit_variable,
        fit,
        window,
        decay,
        pass,
        data_modes,
        data_seed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TamingCheckRow {
    pub report: TamingReport,
    /// Violations of monotone taming when `τ` is doubled and when `h` is doubled.
    pub monotone_tau_violations: usize,
    pub monotone_h_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TamingCheck {
    pub rows: Vec<TamingCheckRow>,
    pub grid_points: usize,
    pub pass: bool,
}

/// Taming inequalities over `u ∈ [-u_max, u_max]` with step `u_step` at
/// each `(τ, h)`.
pub fn taming_check(
    drift: &DriftPolynomial,
    params: &TamingParams,
    steps: &[(f64, f64)],
    u_max: f64,
    u_step: f64,
) -> Result<TamingCheck> {
    if !(u_step > 0.0) || !(u_max > 0.0) {
        return Err(SpdeError::InvalidArgument("u grid needs positive extent and step".into()));
    }
    let n = (u_max / u_step).round() as i64;
    let us: Vec<f64> = (-n..=n).map(|i| i as f64 * u_step).collect();
    let vs: Vec<f64> = (-100..=100).map(|i| i as f64 * u_max / 100.0).collect();
    let rows = steps
        .iter()
        .map(|&(tau, h)| {
            Ok(TamingCheckRow {
                report: taming_inequality_suite(drift, params, tau, h, &us, &vs, 1.0)?,
                monotone_tau_violations: monotone_taming_violations(drift, params, (tau, h), (2.0 * tau, h), &us)?,
                monotone_h_violations: monotone_taming_violations(drift, params, (tau, h), (tau, 2.0 * h), &us)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = rows
        .iter()
        .all(|r| r.report.holds() && r.monotone_tau_violations == 0 && r.monotone_h_violations == 0);
    Ok(TamingCheck { rows, grid_points: us.len(), pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub level: u32,
    pub dim: usize,
    /// `min_j λ_{j,h} / (4j²/L²)`; at least 1 when the lower bound holds.
    pub lower_ratio: f64,
    /// `max_j λ_{j,h} / (3π²j²/L²)`; at most 1 when the upper bound holds.
    pub upper_ratio: f64,
    /// `min_j λ_{j,h} / (jπ/L)²`; at least 1 by the min-max principle.
    pub minmax_ratio: f64,
    pub lambda_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumCheck {
    pub rows: Vec<SpectrumRow>,
    pub slack: f64,
    pub pass: bool,
}

/// Eigenvalue bounds `4j²/L² <= λ_{j,h} <= 3π²j²/L²` and `λ_{j,h} >= (jπ/L)²`.
pub fn spectrum_check(length: f64, levels: &[u32], slack: f64) -> Result<SpectrumCheck> {
    let pi = std::f64::consts::PI;
    let rows = levels
        .iter()
        .map(|&level| {
            let ops = FemOperators::new(Mesh1D::dyadic(length, level)?)?;
            let spec = discrete_spectrum(&ops)?;
            let mut row = SpectrumRow {
                level,
                dim: spec.dim(),
                lower_ratio: f64::INFINITY,
                upper_ratio: 0.0,
                minmax_ratio: f64::INFINITY,
                lambda_1: spec.lambdas[0],
            };
            for (i, &lam) in spec.lambdas.iter().enumerate() {
                let j = (i + 1) as f64;
                row.lower_ratio = row.lower_ratio.min(lam / (4.0 * j * j / (length * length)));
                row.upper_ratio = row.upper_ratio.max(lam / (3.0 * pi * pi * j * j / (length * length)));
                row.minmax_ratio = row.minmax_ratio.min(lam / (j * pi / length).powi(2));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = rows
        .iter()
        .all(|r| r.lower_ratio >= 1.0 - slack && r.upper_ratio <= 1.0 + slack && r.minmax_ratio >= 1.0 - slack);
    Ok(SpectrumCheck { rows, slack, pass })
}
