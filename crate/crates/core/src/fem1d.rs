//! Uniform piecewise-linear finite elements on `[0, L]` with homogeneous
//! Dirichlet boundary conditions.
//!
//! Only interior nodes are carried. A nodal vector `v` of length
//! `n_interior` is the coefficient vector of the P1 function in the
//! Lagrange (hat) basis, so nodal values and coefficients coincide.

use crate::error::{Result, SpdeError};

/// Default dimension cap for the dense generalized eigensolver.
pub const DEFAULT_SPECTRUM_CAP: usize = 1024;

/// 4-point Gauss-Legendre rule mapped to the reference element `[0, 1]`.
/// Exact for polynomials up to degree 7.
pub const GAUSS4_NODES: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_9,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
pub const GAUSS4_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    length: f64,
    n_interior: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn new(length: f64, n_interior: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(SpdeError::InvalidArgument(format!(
                "domain length must be positive, got {length}"
            )));
        }
        if n_interior == 0 {
            return Err(SpdeError::InvalidArgument(
                "mesh needs at least one interior node".into(),
            ));
        }
        let h = length / (n_interior + 1) as f64;
        let nodes = (1..=n_interior).map(|i| i as f64 * h).collect();
        Ok(Mesh1D {
            length,
            n_interior,
            h,
            nodes,
        })
    }

    /// Mesh with `2^level` elements, i.e. `h = L / 2^level`.
    pub fn dyadic(length: f64, level: u32) -> Result<Self> {
        if level == 0 || level > 30 {
            return Err(SpdeError::InvalidArgument(format!(
                "dyadic level must be in 1..=30, got {level}"
            )));
        }
        Mesh1D::new(length, (1usize << level) - 1)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_elements(&self) -> usize {
        self.n_interior + 1
    }

    /// Nodal values at the two ends of element `e`, with the Dirichlet
    /// zeros filled in at the boundary.
    #[inline]
    pub fn element_values(&self, v: &[f64], e: usize) -> (f64, f64) {
        let left = if e == 0 { 0.0 } else { v[e - 1] };
        let right = if e == self.n_interior { 0.0 } else { v[e] };
        (left, right)
    }

    /// Evaluate the P1 interpolant of `v` at `x`; zero outside `(0, L)`.
    pub fn interpolate(&self, v: &[f64], x: f64) -> f64 {
        if !(x > 0.0 && x < self.length) {
            return 0.0;
        }
        let pos = x / self.h;
        let e = (pos.floor() as usize).min(self.n_interior);
        let s = pos - e as f64;
        let (a, b) = self.element_values(v, e);
        (1.0 - s) * a + s * b
    }

    /// Exact P1 interpolation of `v` onto a finer mesh. Exact when the
    /// meshes are nested.
    pub fn prolong(&self, v: &[f64], fine: &Mesh1D) -> Vec<f64> {
        fine.nodes.iter().map(|&x| self.interpolate(v, x)).collect()
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TriDiagSym {
    main: Vec<f64>,
    off: Vec<f64>,
}

impl TriDiagSym {
    pub fn new(main: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if main.is_empty() || off.len() + 1 != main.len() {
            return Err(SpdeError::InvalidArgument(format!(
                "tridiagonal shape mismatch: main {} / off {}",
                main.len(),
                off.len()
            )));
        }
        Ok(TriDiagSym { main, off })
    }

    pub fn dim(&self) -> usize {
        self.main.len()
    }

    pub fn main(&self) -> &[f64] {
        &self.main
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &TriDiagSym, c: f64) -> Result<TriDiagSym> {
        if other.dim() != self.dim() {
            return Err(SpdeError::InvalidArgument("dimension mismatch".into()));
        }
        let main = self.main.iter().zip(&other.main).map(|(a, b)| a + c * b).collect();
        let off = self.off.iter().zip(&other.off).map(|(a, b)| a + c * b).collect();
        TriDiagSym::new(main, off)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let mut acc = self.main[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.main[i] * x[i] * x[i];
            if i + 1 < n {
                acc += 2.0 * self.off[i] * x[i] * x[i + 1];
            }
        }
        acc
    }

    pub fn inf_norm(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.main[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = self.main[i];
            if i + 1 < n {
                a[i][i + 1] = self.off[i];
                a[i + 1][i] = self.off[i];
            }
        }
        a
    }

    /// LDL^T factorization without pivoting. Fails on the first
    /// non-positive pivot, so success certifies positive definiteness.
    pub fn factor(&self) -> Result<LdlFactor> {
        let n = self.dim();
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n.saturating_sub(1));
        d.push(self.main[0]);
        for i in 0..n {
            if !(d[i] > 0.0) || !d[i].is_finite() {
                return Err(SpdeError::SingularMatrix { row: i, pivot: d[i] });
            }
            if i + 1 < n {
                let li = self.off[i] / d[i];
                l.push(li);
                d.push(self.main[i + 1] - li * self.off[i]);
            }
        }
        Ok(LdlFactor { d, l })
    }
}

/// `A = L D L^T` with unit lower-bidiagonal `L`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl LdlFactor {
    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.d.len();
        debug_assert_eq!(x.len(), n);
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }

    /// Lower-bidiagonal Cholesky factor `C` with `A = C C^T`, returned as
    /// (diagonal, subdiagonal).
    fn cholesky(&self) -> (Vec<f64>, Vec<f64>) {
        let diag: Vec<f64> = self.d.iter().map(|d| d.sqrt()).collect();
        let sub = self.l.iter().zip(&diag).map(|(l, c)| l * c).collect();
        (diag, sub)
    }
}

/// Solve `A x = rhs` for symmetric positive definite tridiagonal `A`.
pub fn solve_tridiag(a: &TriDiagSym, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != a.dim() {
        return Err(SpdeError::InvalidArgument(format!(
            "rhs length {} does not match matrix order {}",
            rhs.len(),
            a.dim()
        )));
    }
    Ok(a.factor()?.solve(rhs))
}

/// Consistent P1 mass matrix: `2h/3` on the diagonal, `h/6` off it.
pub fn assemble_mass(mesh: &Mesh1D) -> TriDiagSym {
    let h = mesh.h();
    let n = mesh.n_interior();
    TriDiagSym {
        main: vec![2.0 * h / 3.0; n],
        off: vec![h / 6.0; n - 1],
    }
}

/// P1 stiffness matrix of the Dirichlet form: `2/h` and `-1/h`.
pub fn assemble_stiffness(mesh: &Mesh1D) -> TriDiagSym {
    let h = mesh.h();
    let n = mesh.n_interior();
    TriDiagSym {
        main: vec![2.0 / h; n],
        off: vec![-1.0 / h; n - 1],
    }
}

/// Mesh together with its assembled mass and stiffness matrices.
#[derive(Debug, Clone)]
pub struct FemOperators {
    pub mesh: Mesh1D,
    pub mass: TriDiagSym,
    pub stiffness: TriDiagSym,
    mass_factor: LdlFactor,
}

impl FemOperators {
    pub fn new(mesh: Mesh1D) -> Result<Self> {
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh);
        let mass_factor = mass.factor()?;
        Ok(FemOperators {
            mesh,
            mass,
            stiffness,
            mass_factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.mesh.n_interior()
    }

    pub fn mass_factor(&self) -> &LdlFactor {
        &self.mass_factor
    }

    /// Exact `L^2(0, L)` norm of the P1 function with nodal values `v`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.mass.quadratic_form(v).max(0.0).sqrt()
    }

    /// `M^{-1} b`: the V_h element whose moments against the hat
    /// functions are `b`.
    pub fn project_load(&self, load: &[f64]) -> Vec<f64> {
        self.mass_factor.solve(load)
    }
}

/// Load vector `b_i = ∫ g φ_i dx` by per-element 4-point Gauss quadrature.
pub fn load_vector<G: Fn(f64) -> f64>(mesh: &Mesh1D, g: G) -> Vec<f64> {
    let n = mesh.n_interior();
    let h = mesh.h();
    let mut b = vec![0.0; n];
    for e in 0..mesh.n_elements() {
        let x0 = e as f64 * h;
        let (mut left, mut right) = (0.0, 0.0);
        for (s, w) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS.iter()) {
            let gv = g(x0 + s * h) * w * h;
            left += gv * (1.0 - s);
            right += gv * s;
        }
        if e > 0 {
            b[e - 1] += left;
        }
        if e < n {
            b[e] += right;
        }
    }
    b
}

/// L^2 projection `P_h g` onto V_h.
pub fn l2_project_function<G: Fn(f64) -> f64>(ops: &FemOperators, g: G) -> Result<Vec<f64>> {
    let b = load_vector(&ops.mesh, g);
    Ok(ops.project_load(&b))
}

/// Closed form of `∫ φ_i(x) sin(k x) dx` on a uniform mesh.
#[inline]
pub fn sine_hat_moment(h: f64, k: f64, x_i: f64) -> f64 {
    let half = (0.5 * k * h).sin();
    (2.0 / (k * k * h)) * (k * x_i).sin() * 2.0 * half * half
}

/// L^p norm of the P1 interpolant of `v`. Finite `p` uses the Gauss rule
/// per element; `p = ∞` is the nodal maximum, which is exact for P1.
pub fn lp_norm(mesh: &Mesh1D, v: &[f64], p: f64) -> Result<f64> {
    if v.len() != mesh.n_interior() {
        return Err(SpdeError::InvalidArgument(format!(
            "vector length {} does not match mesh ({} interior nodes)",
            v.len(),
            mesh.n_interior()
        )));
    }
    if p.is_nan() || p < 1.0 {
        return Err(SpdeError::InvalidArgument(format!(
            "norm exponent must be >= 1, got {p}"
        )));
    }
    if p.is_infinite() {
        return Ok(v.iter().fold(0.0, |m, x| m.max(x.abs())));
    }
    let h = mesh.h();
    let int_p = (p.fract() == 0.0 && p <= 64.0).then_some(p as i32);
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        let (a, b) = mesh.element_values(v, e);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        for (s, w) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS.iter()) {
            let u = ((1.0 - s) * a + s * b).abs();
            let up = match int_p {
                Some(k) => u.powi(k),
                None => u.powf(p),
            };
            acc += w * h * up;
        }
    }
    Ok(acc.powf(1.0 / p))
}

/// Eigen-pairs of `S v = λ M v`, ascending, with M-orthonormal modes.
#[derive(Debug, Clone)]
pub struct DiscreteSpectrum {
    pub lambdas: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
}

impl DiscreteSpectrum {
    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// Coefficients `<v, e_j>` in the L^2 inner product, i.e. `e_j^T M v`.
    pub fn coefficients(&self, ops: &FemOperators, v: &[f64]) -> Vec<f64> {
        let mv = ops.mass.mul_vec(v);
        self.modes
            .iter()
            .map(|e| e.iter().zip(&mv).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Discrete seminorm `|v|_{γ,h} = ||A_h^{γ/2} v||`.
    pub fn seminorm(&self, ops: &FemOperators, gamma: f64, v: &[f64]) -> f64 {
        self.coefficients(ops, v)
            .iter()
            .zip(&self.lambdas)
            .map(|(c, l)| l.powf(gamma) * c * c)
            .sum::<f64>()
            .sqrt()
    }
}

pub fn discrete_spectrum(ops: &FemOperators) -> Result<DiscreteSpectrum> {
    discrete_spectrum_with_cap(ops, DEFAULT_SPECTRUM_CAP)
}

/// Solves `S v = λ M v` by reducing to `C^{-1} S C^{-T} w = λ w` with the
/// Cholesky factor `M = C C^T` and diagonalizing with cyclic Jacobi.
pub fn discrete_spectrum_with_cap(ops: &FemOperators, cap: usize) -> Result<DiscreteSpectrum> {
    let n = ops.dim();
    if n > cap {
        return Err(SpdeError::Capacity(format!(
            "dense eigensolver dimension {n} exceeds cap {cap}"
        )));
    }
    let (cd, cs) = ops.mass_factor().cholesky();
    // Y = C^{-1} S, column by column (S is symmetric so rows work too).
    let s_dense = ops.stiffness.to_dense();
    let forward = |col: &mut [f64]| {
        col[0] /= cd[0];
        for i in 1..n {
            col[i] = (col[i] - cs[i - 1] * col[i - 1]) / cd[i];
        }
    };
    let mut y = s_dense; // y[j] holds column j of S
    for col in y.iter_mut() {
        forward(col);
    }
    // a = C^{-1} Y^T; column j of Y^T is row j of Y.
    let mut a = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut col: Vec<f64> = (0..n).map(|k| y[k][j]).collect();
        forward(&mut col);
        for i in 0..n {
            a[i][j] = col[i];
        }
    }
    // Symmetrize away rounding.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = m;
            a[j][i] = m;
        }
    }
    let (vals, vecs) = jacobi_eigen(a, 1e-12)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));

    let mut lambdas = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    for &k in &order {
        // v = C^{-T} w
        let mut v: Vec<f64> = (0..n).map(|i| vecs[i][k]).collect();
        v[n - 1] /= cd[n - 1];
        for i in (0..n - 1).rev() {
            v[i] = (v[i] - cs[i] * v[i + 1]) / cd[i];
        }
        // Sign convention: the first entry of largest magnitude is positive.
        let mut pivot = 0.0f64;
        for &x in &v {
            if x.abs() > pivot.abs() * (1.0 + 1e-9) {
                pivot = x;
            }
        }
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        lambdas.push(vals[k]);
        modes.push(v);
    }
    Ok(DiscreteSpectrum { lambdas, modes })
}

/// Cyclic Jacobi for a dense symmetric matrix. Returns eigenvalues and the
/// matrix whose columns are the eigenvectors.
fn jacobi_eigen(mut a: Vec<Vec<f64>>, tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if frob == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= tol * frob {
            let vals = (0..n).map(|i| a[i][i]).collect();
            return Ok((vals, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(SpdeError::Accuracy(format!(
        "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
    )))
}

/// `A_h^power v = Σ_j λ_j^power <v, e_j> e_j`.
pub fn apply_fractional_ah(
    spectrum: &DiscreteSpectrum,
    ops: &FemOperators,
    power: f64,
    v: &[f64],
) -> Result<Vec<f64>> {
    if v.len() != ops.dim() || spectrum.dim() != ops.dim() {
        return Err(SpdeError::InvalidArgument(format!(
            "dimension mismatch: vector {}, spectrum {}, operators {}",
            v.len(),
            spectrum.dim(),
            ops.dim()
        )));
    }
    let coeffs = spectrum.coefficients(ops, v);
    let mut out = vec![0.0; v.len()];
    for ((c, lambda), mode) in coeffs.iter().zip(&spectrum.lambdas).zip(&spectrum.modes) {
        let w = lambda.powf(power) * c;
        for (o, e) in out.iter_mut().zip(mode) {
            *o += w * e;
        }
    }
    Ok(out)
}
