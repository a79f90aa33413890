use num_complex::Complex64;

use crate::error::{CboError, Result};

/// Truncated Fourier representation `ρ(v) = Σ_k c_k e^{iκ_k·v}`, `κ_k = πk/L`,
/// on the periodic box `[-L, L]^d` with `|k_a| ≤ K`. Coefficients are stored
/// row-major with `k_a + K` as the index along each axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    dim: usize,
    half_width: f64,
    modes: usize,
    grid: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(dim: usize, half_width: f64, modes: usize, grid: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(CboError::Config(format!("spectral fields support d = 1 or 2, got {dim}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(CboError::Config(format!("box half-width must be positive, got {half_width}")));
        }
        if modes == 0 {
            return Err(CboError::Config("at least one Fourier mode per axis is required".into()));
        }
        if grid < 4 * modes {
            return Err(CboError::Config(format!("grid size M = {grid} must be at least 4K = {}", 4 * modes)));
        }
        let n = (2 * modes + 1).pow(dim as u32);
        Ok(Self { dim, half_width, modes, grid, coeffs: vec![Complex64::new(0.0, 0.0); n] })
    }

    pub fn same_shape(&self) -> Self {
        Self { coeffs: vec![Complex64::new(0.0, 0.0); self.coeffs.len()], ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Modes per axis, `2K + 1`.
    pub fn width(&self) -> usize {
        2 * self.modes + 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn index(&self, k: &[i64]) -> Option<usize> {
        let kk = self.modes as i64;
        if k.len() != self.dim || k.iter().any(|&x| x.abs() > kk) {
            return None;
        }
        Some(k.iter().fold(0usize, |acc, &x| acc * self.width() + (x + kk) as usize))
    }

    /// Wavevector of flat index `idx`.
    pub fn wavevector(&self, idx: usize) -> Vec<i64> {
        let w = self.width();
        let kk = self.modes as i64;
        match self.dim {
            1 => vec![idx as i64 - kk],
            _ => vec![(idx / w) as i64 - kk, (idx % w) as i64 - kk],
        }
    }

    pub fn coeff(&self, k: &[i64]) -> Complex64 {
        self.index(k).map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    pub fn set_coeff(&mut self, k: &[i64], c: Complex64) {
        let i = self.index(k).expect("wavevector outside the truncation");
        self.coeffs[i] = c;
    }

    pub fn wavenumber(&self, k: i64) -> f64 {
        std::f64::consts::PI * k as f64 / self.half_width
    }

    /// `(πK/L)² d`.
    pub fn max_wavenumber_sq(&self) -> f64 {
        self.dim as f64 * self.wavenumber(self.modes as i64).powi(2)
    }

    pub fn grid_point(&self, j: usize) -> f64 {
        -self.half_width + 2.0 * self.half_width * j as f64 / self.grid as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (2.0 * self.half_width / self.grid as f64).powi(self.dim as i32)
    }

    pub fn box_volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// `c_0 (2L)^d`.
    pub fn mass(&self) -> f64 {
        self.coeff(&vec![0; self.dim]).re * self.box_volume()
    }

    /// Largest `|c_k - conj(c_{-k})|`; zero for a real density.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let n = self.coeffs.len();
        (0..n).map(|i| (self.coeffs[i] - self.coeffs[n - 1 - i].conj()).norm()).fold(0.0, f64::max)
    }

    /// Projects onto real fields by averaging each coefficient with its mirror.
    pub fn symmetrize(&mut self) {
        let n = self.coeffs.len();
        for i in 0..n / 2 + 1 {
            let j = n - 1 - i;
            let avg = 0.5 * (self.coeffs[i] + self.coeffs[j].conj());
            self.coeffs[i] = avg;
            self.coeffs[j] = avg.conj();
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= a);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += a * o;
        }
    }

    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Free-function form of [`SpectralField::mass`].
pub fn mass(field: &SpectralField) -> f64 {
    field.mass()
}
