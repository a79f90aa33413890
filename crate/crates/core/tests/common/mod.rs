//! Reference implementations used as independent oracles by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

/// Real trigonometric polynomial `Σ_{|m| ≤ D} a_m e^{iπmv/L}` on `[-L, L)`.
#[derive(Clone, Debug)]
pub struct TrigPoly {
    pub half_width: f64,
    pub coeffs: Vec<Complex64>,
}

impl TrigPoly {
    pub fn constant(half_width: f64, c: f64) -> Self {
        Self { half_width, coeffs: vec![Complex64::new(c, 0.0)] }
    }

    pub fn random<R: Rng>(rng: &mut R, half_width: f64, degree: usize, scale: f64) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * degree + 1];
        coeffs[degree] = Complex64::new(scale * (2.0 * rng.random::<f64>() - 1.0), 0.0);
        for m in 1..=degree {
            let a = Complex64::new(2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0) * scale;
            coeffs[degree + m] = a;
            coeffs[degree - m] = a.conj();
        }
        Self { half_width, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() / 2
    }

    /// Upper bound on `sup |p|`.
    pub fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Adds a constant so that the polynomial is at least `floor` everywhere.
    pub fn lifted(mut self, floor: f64) -> Self {
        let d = self.degree();
        let rest: f64 = self.abs_sum() - self.coeffs[d].norm();
        self.coeffs[d] = Complex64::new(rest + floor, 0.0);
        self
    }

    pub fn eval(&self, v: f64) -> f64 {
        let d = self.degree() as i64;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (c * Complex64::cis(PI * (i as i64 - d) as f64 * v / self.half_width)).re)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeakForm {
    Gradient,
    Divergence,
}

/// Right-hand side `A⁻¹(B c + g)` of the Galerkin system for `ψ_k = e^{iπkv/L}`,
/// `|k| ≤ K`, in one dimension, with every matrix entry computed by a dense
/// trapezoidal sum that is exact for the trigonometric integrands involved.
///
/// gradient form:   `B_kj = ∫ -G ψ_j' conj(ψ_k)' + J ψ_j' conj(ψ_k) + ψ_j conj(ψ_k)`
/// divergence form: `B_kj = ∫ -G ψ_j' conj(ψ_k)' + J ψ_j conj(ψ_k)' + ψ_j conj(ψ_k)`
pub fn galerkin_rhs_1d(
    form: WeakForm,
    modes: usize,
    half_width: f64,
    g: &TrigPoly,
    j: &TrigPoly,
    src: &TrigPoly,
    c: &[Complex64],
) -> Vec<Complex64> {
    let kk = modes as i64;
    let deg = g.degree().max(j.degree()).max(src.degree());
    let q = 8 * (modes + deg) + 8;
    let h = 2.0 * half_width / q as f64;
    let nodes: Vec<f64> = (0..q).map(|i| -half_width + h * i as f64).collect();
    let gv: Vec<f64> = nodes.iter().map(|&v| g.eval(v)).collect();
    let jv: Vec<f64> = nodes.iter().map(|&v| j.eval(v)).collect();
    let sv: Vec<f64> = nodes.iter().map(|&v| src.eval(v)).collect();
    let psi = |k: i64, v: f64| Complex64::cis(PI * k as f64 * v / half_width);
    let dpsi = |k: i64, v: f64| Complex64::new(0.0, PI * k as f64 / half_width) * psi(k, v);
    let n = 2 * modes + 1;
    let mass = 2.0 * half_width;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (row, o) in out.iter_mut().enumerate() {
        let k = row as i64 - kk;
        let mut acc = Complex64::new(0.0, 0.0);
        for (col, cj) in c.iter().enumerate() {
            let jx = col as i64 - kk;
            let mut b = Complex64::new(0.0, 0.0);
            for (qi, &v) in nodes.iter().enumerate() {
                let pk = psi(k, v).conj();
                let dpk = dpsi(k, v).conj();
                let diffusion = -gv[qi] * dpsi(jx, v) * dpk;
                let drift = match form {
                    WeakForm::Gradient => jv[qi] * dpsi(jx, v) * pk,
                    WeakForm::Divergence => jv[qi] * psi(jx, v) * dpk,
                };
                b += (diffusion + drift + psi(jx, v) * pk) * h;
            }
            acc += b * cj;
        }
        let gk: Complex64 = nodes.iter().zip(&sv).map(|(&v, &s)| s * psi(k, v).conj() * h).sum();
        *o = (acc + gk) / mass;
    }
    out
}

/// Isotropic Gaussian mixture `ρ(v) = Σ_m a_m exp(-‖v - μ_m‖² / (2 s_m²))`.
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
}

impl GaussianMixture {
    pub fn random<R: Rng>(rng: &mut R, dim: usize, terms: usize, center_box: f64, widths: (f64, f64)) -> Self {
        let mut g = Self { weights: vec![], means: vec![], widths: vec![] };
        for _ in 0..terms {
            g.weights.push(0.2 + rng.random::<f64>());
            g.means.push((0..dim).map(|_| center_box * (2.0 * rng.random::<f64>() - 1.0)).collect());
            g.widths.push(widths.0 + (widths.1 - widths.0) * rng.random::<f64>());
        }
        g
    }

    /// Value, gradient and the diagonal of the Hessian at `v`.
    pub fn jet(&self, v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let d = v.len();
        let (mut val, mut grad, mut hess) = (0.0, vec![0.0; d], vec![0.0; d]);
        for ((a, mu), s) in self.weights.iter().zip(&self.means).zip(&self.widths) {
            let s2 = s * s;
            let r2: f64 = v.iter().zip(mu).map(|(x, m)| (x - m) * (x - m)).sum();
            let e = a * (-r2 / (2.0 * s2)).exp();
            val += e;
            for i in 0..d {
                let y = v[i] - mu[i];
                grad[i] += -y / s2 * e;
                hess[i] += (y * y / (s2 * s2) - 1.0 / s2) * e;
            }
        }
        (val, grad, hess)
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        self.jet(v).0
    }

    /// `λ div((v - c)ρ) + (σ²/2) Δ(‖v - c‖² ρ)` by the product rule applied to
    /// the two products separately.
    pub fn cbo_divergence_form(&self, v: &[f64], center: &[f64], lambda: f64, sigma: f64) -> f64 {
        let (rho, grad, hess) = self.jet(v);
        let d = v.len();
        let g: f64 = v.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
        let mut div_j_rho = 0.0;
        let mut lap_g_rho = 0.0;
        for i in 0..d {
            let ji = v[i] - center[i];
            div_j_rho += rho + ji * grad[i];
            let dg = 2.0 * ji;
            lap_g_rho += 2.0 * rho + 2.0 * dg * grad[i] + g * hess[i];
        }
        lambda * div_j_rho + 0.5 * sigma * sigma * lap_g_rho
    }
}

/// Second-order finite-volume style solver for the one-dimensional CBO equation
/// `∂ρ = λ ∂((v - c)ρ) + (σ²/2) ∂²((v - c)² ρ)` with a fixed center `c`, central
/// differences on `n` periodic nodes of `[-L, L)` and classical RK4 in time.
pub fn fd_cbo_1d(initial: &[f64], half_width: f64, center: f64, lambda: f64, sigma: f64, horizon: f64) -> Vec<f64> {
    let n = initial.len();
    let h = 2.0 * half_width / n as f64;
    let x: Vec<f64> = (0..n).map(|i| -half_width + h * i as f64).collect();
    let jx: Vec<f64> = x.iter().map(|v| v - center).collect();
    let gx: Vec<f64> = jx.iter().map(|y| y * y).collect();
    let diff = 0.5 * sigma * sigma;
    let gmax = gx.iter().copied().fold(0.0, f64::max);
    let dt_max = 2.0 * h * h / (4.0 * diff * gmax);
    let steps = (horizon / dt_max).ceil() as usize;
    let dt = horizon / steps as f64;
    let rhs = |rho: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let (l, r) = ((i + n - 1) % n, (i + 1) % n);
            let adv = (jx[r] * rho[r] - jx[l] * rho[l]) / (2.0 * h);
            let lap = (gx[r] * rho[r] - 2.0 * gx[i] * rho[i] + gx[l] * rho[l]) / (h * h);
            out[i] = lambda * adv + diff * lap;
        }
    };
    let mut rho = initial.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..steps {
        rhs(&rho, &mut k1);
        for i in 0..n {
            y[i] = rho[i] + 0.5 * dt * k1[i];
        }
        rhs(&y, &mut k2);
        for i in 0..n {
            y[i] = rho[i] + 0.5 * dt * k2[i];
        }
        rhs(&y, &mut k3);
        for i in 0..n {
            y[i] = rho[i] + dt * k3[i];
        }
        rhs(&y, &mut k4);
        for i in 0..n {
            rho[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    rho
}

/// Tensor midpoint-rule integral of `f` over `[-L, L]^d` with `n` cells per axis.
pub fn box_quadrature(dim: usize, half_width: f64, n: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let h = 2.0 * half_width / n as f64;
    let mut v = vec![0.0; dim];
    let total = n.pow(dim as u32);
    let mut sum = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        for x in v.iter_mut() {
            *x = -half_width + h * ((rem % n) as f64 + 0.5);
            rem /= n;
        }
        sum += f(&v);
    }
    sum * h.powi(dim as i32)
}
