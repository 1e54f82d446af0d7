//! Spectral sampling of Q-Wiener increments for `Q = Λ^{-s}` on `(0, L)`
//! with the Dirichlet sine basis `sqrt(2/L) sin(jπx/L)`.
//!
//! Randomness is counter-based: every (seed, time index) pair owns an
//! independent ChaCha8 stream, and mode `j` is the `j`-th standard normal
//! drawn from it. Numbers therefore never depend on sampling order, on
//! worker count or on how a path is later coarsened.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SpdeError};
use crate::fem1d::{sine_hat_moment, Mesh1D};

/// Identifies the normal sampler; part of every study's provenance.
pub const SAMPLER_ID: &str = "chacha8-stream-per-step+rand_distr-standard-normal-ziggurat";

/// Maximum memory a single path tape may occupy.
pub const TAPE_BUDGET_BYTES: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    s: f64,
    k: usize,
    length: f64,
    gamma_report: f64,
    std_devs: Vec<f64>,
}

impl NoiseModel {
    pub fn new(s: f64, k: usize, length: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(SpdeError::InvalidArgument(format!(
                "spectral exponent s must be >= 0, got {s}"
            )));
        }
        if k == 0 {
            return Err(SpdeError::InvalidArgument("truncation level K must be >= 1".into()));
        }
        if !(length > 0.0) {
            return Err(SpdeError::InvalidArgument(format!(
                "domain length must be positive, got {length}"
            )));
        }
        let std_devs = (1..=k)
            .map(|j| (j as f64 * std::f64::consts::PI / length).powf(-s))
            .collect();
        Ok(NoiseModel {
            s,
            k,
            length,
            gamma_report: default_gamma(s),
            std_devs,
        })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma_report = gamma;
        self
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Regularity label used for reporting expected rates.
    pub fn gamma_report(&self) -> f64 {
        self.gamma_report
    }

    /// `λ_j^{-s/2}` for `j = 1..=K`.
    pub fn std_devs(&self) -> &[f64] {
        &self.std_devs
    }

    /// `λ_j` of the continuous Dirichlet Laplacian.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        let k = j as f64 * std::f64::consts::PI / self.length;
        k * k
    }
}

/// `γ = 1/2` for white noise, otherwise `s + 1/2` truncated to two
/// decimals (so `s = 0.5005` reports `γ = 1`), capped at 2.
fn default_gamma(s: f64) -> f64 {
    if s == 0.0 {
        0.5
    } else {
        ((s + 0.5) * 100.0).floor().min(200.0) / 100.0
    }
}

/// Partial sums of `Σ_{j≤K} λ_j^{γ-1-s}`; bounded iff
/// `||A^{(γ-1)/2} Q^{1/2}||_{HS}` is finite.
pub fn hilbert_schmidt_partial_sums(s: f64, gamma: f64, length: f64, k: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=k)
        .map(|j| {
            let lam = (j as f64 * std::f64::consts::PI / length).powi(2);
            acc += lam.powf(gamma - 1.0 - s);
            acc
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralIncrement {
    pub tau: f64,
    pub coeffs: Vec<f64>,
}

/// `coeff_j = sqrt(τ) λ_j^{-s/2} ξ_j`, `ξ_j` i.i.d. standard normal from `rng`.
pub fn sample_increment<R: Rng + ?Sized>(model: &NoiseModel, tau: f64, rng: &mut R) -> SpectralIncrement {
    let mut coeffs = vec![0.0; model.k()];
    fill_increment(model, tau, rng, &mut coeffs);
    SpectralIncrement { tau, coeffs }
}

fn fill_increment<R: Rng + ?Sized>(model: &NoiseModel, tau: f64, rng: &mut R, out: &mut [f64]) {
    let sq = tau.sqrt();
    for (c, sd) in out.iter_mut().zip(model.std_devs()) {
        let xi: f64 = rng.sample(StandardNormal);
        *c = sq * sd * xi;
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stateless derivation of a child seed from `(seed, index, tag)`.
pub fn derive_seed(seed: u64, index: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(tag)) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// The family of per-time-step streams owned by one seed.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    key: [u8; 32],
}

impl NoiseStreams {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        for (w, chunk) in key.chunks_exact_mut(8).enumerate() {
            chunk.copy_from_slice(&derive_seed(seed, w as u64, 0xc4a1).to_le_bytes());
        }
        NoiseStreams { key }
    }

    /// Fresh generator for time index `step`.
    pub fn stream(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(step);
        rng
    }

    pub fn increment(&self, model: &NoiseModel, tau: f64, step: u64) -> SpectralIncrement {
        sample_increment(model, tau, &mut self.stream(step))
    }
}

/// Precomputed `I(j, i) = ∫ φ_i sqrt(2/L) sin(jπx/L) dx` in closed form.
#[derive(Debug, Clone)]
pub struct LoadOperator {
    n: usize,
    k: usize,
    /// Row `j` holds `I(j, ·)`.
    table: Vec<f64>,
}

impl LoadOperator {
    pub fn new(mesh: &Mesh1D, k: usize) -> Self {
        let n = mesh.n_interior();
        let l = mesh.length();
        let norm = (2.0 / l).sqrt();
        let mut table = Vec::with_capacity(k * n);
        for j in 1..=k {
            let wave = j as f64 * std::f64::consts::PI / l;
            table.extend(mesh.nodes().iter().map(|&x| norm * sine_hat_moment(mesh.h(), wave, x)));
        }
        LoadOperator { n, k, table }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entry(&self, j: usize, i: usize) -> f64 {
        self.table[(j - 1) * self.n + i]
    }

    /// `out_i = Σ_j coeffs_j I(j, i)`.
    pub fn apply_into(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, row) in coeffs.iter().zip(self.table.chunks_exact(self.n)) {
            if *c == 0.0 {
                continue;
            }
            for (o, r) in out.iter_mut().zip(row) {
                *o += c * r;
            }
        }
    }

    pub fn apply(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(coeffs, &mut out);
        out
    }
}

/// Nodal load `<ΔW, φ_i>` of a spectral increment.
pub fn increment_load(mesh: &Mesh1D, inc: &SpectralIncrement) -> Vec<f64> {
    LoadOperator::new(mesh, inc.coeffs.len()).apply(&inc.coeffs)
}

/// All increments of one noise path at the finest time resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTape {
    master_seed: u64,
    level: u32,
    tau: f64,
    k: usize,
    data: Vec<f64>,
}

impl PathTape {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn steps(&self) -> usize {
        1usize << self.level
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn increment(&self, m: usize) -> &[f64] {
        &self.data[m * self.k..(m + 1) * self.k]
    }

    pub fn increments(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.k)
    }
}

pub fn make_path(model: &NoiseModel, master_seed: u64, horizon: f64, finest_steps: usize) -> Result<PathTape> {
    if finest_steps == 0 || !finest_steps.is_power_of_two() {
        return Err(SpdeError::InvalidArgument(format!(
            "finest step count must be a power of two, got {finest_steps}"
        )));
    }
    if !(horizon > 0.0) {
        return Err(SpdeError::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let words = model
        .k()
        .checked_mul(finest_steps)
        .filter(|w| w.saturating_mul(8) <= TAPE_BUDGET_BYTES)
        .ok_or_else(|| {
            SpdeError::Capacity(format!(
                "tape of {} modes x {finest_steps} steps exceeds {} bytes",
                model.k(),
                TAPE_BUDGET_BYTES
            ))
        })?;
    let tau = horizon / finest_steps as f64;
    let streams = NoiseStreams::new(master_seed);
    let mut data = vec![0.0; words];
    for (m, chunk) in data.chunks_exact_mut(model.k()).enumerate() {
        fill_increment(model, tau, &mut streams.stream(m as u64), chunk);
    }
    Ok(PathTape {
        master_seed,
        level: finest_steps.trailing_zeros(),
        tau,
        k: model.k(),
        data,
    })
}

/// Coarse increments: coefficient-wise sums of `factor` consecutive
/// children, added left to right.
pub fn coarsen(tape: &PathTape, factor: usize) -> Result<Vec<SpectralIncrement>> {
    if factor == 0 || !factor.is_power_of_two() || factor > tape.steps() {
        return Err(SpdeError::InvalidArgument(format!(
            "coarsening factor {factor} does not divide {} steps",
            tape.steps()
        )));
    }
    let tau = tape.tau * factor as f64;
    Ok((0..tape.steps() / factor)
        .map(|c| {
            let mut coeffs = tape.increment(c * factor).to_vec();
            for child in 1..factor {
                for (a, b) in coeffs.iter_mut().zip(tape.increment(c * factor + child)) {
                    *a += b;
                }
            }
            SpectralIncrement { tau, coeffs }
        })
        .collect())
}
