//! Dense reference implementations assembled from hat functions by
//! quadrature, used as oracles for the tridiagonal code paths.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss–Legendre rule on [-1, 1] by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `∫_a^b g` with `pieces` subintervals and an `order`-point rule on each.
pub fn composite(a: f64, b: f64, pieces: usize, order: usize, g: impl Fn(f64) -> f64) -> f64 {
    let (xs, ws) = gauss_legendre(order);
    let w = (b - a) / pieces as f64;
    let mut total = 0.0;
    for p in 0..pieces {
        let lo = a + p as f64 * w;
        for (x, wt) in xs.iter().zip(&ws) {
            total += 0.5 * w * wt * g(lo + 0.5 * w * (x + 1.0));
        }
    }
    total
}

pub struct DenseMesh {
    pub length: f64,
    pub n: usize,
    pub h: f64,
}

impl DenseMesh {
    pub fn new(length: f64, n: usize) -> Self {
        DenseMesh { length, n, h: length / (n + 1) as f64 }
    }

    /// Hat function of interior node `i` (0-based) and its derivative.
    pub fn hat(&self, i: usize, x: f64) -> f64 {
        let xi = (i + 1) as f64 * self.h;
        (1.0 - (x - xi).abs() / self.h).max(0.0)
    }

    pub fn hat_dx(&self, i: usize, x: f64) -> f64 {
        let xi = (i + 1) as f64 * self.h;
        if x > xi - self.h && x < xi {
            1.0 / self.h
        } else if x > xi && x < xi + self.h {
            -1.0 / self.h
        } else {
            0.0
        }
    }

    /// Integrate over every element separately (integrands are smooth per element).
    pub fn integrate(&self, pieces: usize, order: usize, g: impl Fn(f64) -> f64) -> f64 {
        (0..=self.n)
            .map(|e| composite(e as f64 * self.h, (e + 1) as f64 * self.h, pieces, order, &g))
            .sum()
    }

    pub fn mass(&self) -> Vec<Vec<f64>> {
        self.gram(|i, j, x| self.hat(i, x) * self.hat(j, x))
    }

    pub fn stiffness(&self) -> Vec<Vec<f64>> {
        self.gram(|i, j, x| self.hat_dx(i, x) * self.hat_dx(j, x))
    }

    fn gram(&self, g: impl Fn(usize, usize, f64) -> f64) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.integrate(1, 6, |x| g(i, j, x))).collect())
            .collect()
    }

    /// P1 interpolant of interior nodal values with zero boundary values.
    pub fn interpolant(&self, x_nodal: &[f64], x: f64) -> f64 {
        (0..self.n).map(|i| x_nodal[i] * self.hat(i, x)).sum()
    }

    /// `∫ g(x) φ_i(x) dx` per node.
    pub fn load(&self, pieces: usize, order: usize, g: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| self.integrate(pieces, order, |x| g(x) * self.hat(i, x))).collect()
    }

    /// Load of `Σ_j c_j sqrt(2/L) sin(jπx/L)`.
    pub fn sine_load(&self, coeffs: &[f64]) -> Vec<f64> {
        let l = self.length;
        self.load(16, 10, |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c * (2.0 / l).sqrt() * ((j + 1) as f64 * PI * x / l).sin())
                .sum()
        })
    }
}

/// Tamed polynomial written out directly from its definition.
pub fn tamed(coeffs: &[f64], alpha: f64, theta: f64, rho: f64, beta1: f64, beta2: f64, tau: f64, h: f64, u: f64) -> f64 {
    let q = coeffs.len() / 2;
    let f: f64 = coeffs.iter().enumerate().map(|(k, a)| a * u.powi(k as i32)).sum();
    let weight = beta1 * tau.powf(theta) + beta2 * h.powf(rho);
    f / (1.0 + weight * u.abs().powf((2 * q - 2) as f64 / alpha)).powf(alpha)
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, v)| {
        let mut r = r.clone();
        r.push(*v);
        r
    }).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        for r in (c + 1)..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

pub struct StepInstance {
    pub length: f64,
    pub n: usize,
    pub coeffs: Vec<f64>,
    pub taming: [f64; 5],
    pub tau: f64,
    pub x: Vec<f64>,
    pub noise: Vec<f64>,
}

/// One scheme step assembled densely. `drift_pieces`/`drift_order` select
/// the drift quadrature: `(1, 4)` is the scheme's own rule.
pub fn dense_step(inst: &StepInstance, drift_pieces: usize, drift_order: usize) -> Vec<f64> {
    let mesh = DenseMesh::new(inst.length, inst.n);
    let mass = mesh.mass();
    let stiff = mesh.stiffness();
    let lhs: Vec<Vec<f64>> = mass
        .iter()
        .zip(&stiff)
        .map(|(m, s)| m.iter().zip(s).map(|(a, b)| a + inst.tau * b).collect())
        .collect();
    let [alpha, theta, rho, b1, b2] = inst.taming;
    let drift = mesh.load(drift_pieces, drift_order, |x| {
        tamed(&inst.coeffs, alpha, theta, rho, b1, b2, inst.tau, mesh.h, mesh.interpolant(&inst.x, x))
    });
    let noise = mesh.sine_load(&inst.noise);
    let rhs: Vec<f64> = mat_vec(&mass, &inst.x)
        .iter()
        .zip(&drift)
        .zip(&noise)
        .map(|((a, b), c)| a + inst.tau * b + c)
        .collect();
    dense_solve(&lhs, &rhs)
}

/// Random step instance: dimension 1..=8, random odd drift with negative
/// leading coefficient, admissible taming exponents, state and increment.
pub fn random_instance<R: rand::Rng>(rng: &mut R) -> StepInstance {
    let n = rng.gen_range(1..=8);
    let q = rng.gen_range(2..=3usize);
    let mut coeffs: Vec<f64> = (0..2 * q).map(|_| rng.gen_range(-2.0..2.0)).collect();
    coeffs[2 * q - 1] = -rng.gen_range(0.2..2.0);
    let threshold = 1.0 + 1.0 / (4.0 * (q * (2 * q - 1)) as f64) - 0.25;
    let alpha: f64 = rng.gen_range(0.1..1.0);
    let theta = rng.gen_range(0.1..0.99) * threshold / alpha;
    let rho = 2.0 * rng.gen_range(0.1..0.99) * threshold / alpha;
    StepInstance {
        length: rng.gen_range(0.5..3.0),
        n,
        coeffs,
        taming: [alpha, theta, rho, rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
        tau: rng.gen_range(1e-3..0.5),
        x: (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        noise: (0..rng.gen_range(1..=12)).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    }
}
