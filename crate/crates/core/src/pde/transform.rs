use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::field::SpectralField;
use crate::error::{CboError, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Maps between truncated coefficients and values on the `M^d` grid
/// `v_j = -L + 2Lj/M`. Only the `2K + 1` nonzero rows are transformed in the
/// first pass of each 2D transform.
pub struct SpectralTransform {
    dim: usize,
    modes: usize,
    grid: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    rows: Vec<Complex64>,
    full: Vec<Complex64>,
    packed: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SpectralTransform {
    pub fn new(dim: usize, modes: usize, grid: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) || grid < 4 * modes || modes == 0 {
            return Err(CboError::Config(format!("unsupported transform shape d = {dim}, K = {modes}, M = {grid}")));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid);
        let inverse = planner.plan_fft_inverse(grid);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        let w = 2 * modes + 1;
        Ok(Self {
            dim,
            modes,
            grid,
            forward,
            inverse,
            rows: if dim == 2 { vec![ZERO; w * grid] } else { Vec::new() },
            full: vec![ZERO; grid.pow(dim as u32)],
            packed: Vec::new(),
            scratch: vec![ZERO; scratch_len],
        })
    }

    pub fn for_field(field: &SpectralField) -> Result<Self> {
        Self::new(field.dim(), field.modes(), field.grid())
    }

    pub fn grid_len(&self) -> usize {
        self.grid.pow(self.dim as u32)
    }

    fn sign(k: i64) -> f64 {
        if k & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn slot(&self, k: i64) -> usize {
        k.rem_euclid(self.grid as i64) as usize
    }

    /// Complex grid values `Σ_k c_k e^{iκ_k·v_j}` of arbitrary coefficients.
    pub fn synthesize(&mut self, coeffs: &[Complex64], out: &mut [Complex64]) {
        let (m, kk) = (self.grid, self.modes as i64);
        let w = 2 * self.modes + 1;
        if self.dim == 1 {
            out.iter_mut().for_each(|z| *z = ZERO);
            for (i, c) in coeffs.iter().enumerate() {
                let k = i as i64 - kk;
                out[self.slot(k)] = c * Self::sign(k);
            }
            self.inverse.process_with_scratch(out, &mut self.scratch);
            return;
        }
        // Pass 1: along axis 0 for each of the 2K + 1 nonzero k1 columns.
        self.rows.iter_mut().for_each(|z| *z = ZERO);
        for b in 0..w {
            let k1 = b as i64 - kk;
            let col = &mut self.rows[b * m..(b + 1) * m];
            for a in 0..w {
                let k0 = a as i64 - kk;
                col[k0.rem_euclid(m as i64) as usize] = coeffs[a * w + b] * Self::sign(k0 + k1);
            }
        }
        self.inverse.process_with_scratch(&mut self.rows, &mut self.scratch);
        // Pass 2: along axis 1 for every grid row j0.
        out.iter_mut().for_each(|z| *z = ZERO);
        for b in 0..w {
            let slot = (b as i64 - kk).rem_euclid(m as i64) as usize;
            let col = &self.rows[b * m..(b + 1) * m];
            for (j0, z) in col.iter().enumerate() {
                out[j0 * m + slot] = *z;
            }
        }
        self.inverse.process_with_scratch(out, &mut self.scratch);
    }

    /// Truncated coefficients `c_k = (-1)^{Σk}/M^d Σ_j z_j e^{-2πi k·j/M}` of complex grid values.
    pub fn analyze(&mut self, values: &mut [Complex64], out: &mut [Complex64]) {
        let (m, kk) = (self.grid, self.modes as i64);
        let w = 2 * self.modes + 1;
        let norm = 1.0 / (m as f64).powi(self.dim as i32);
        if self.dim == 1 {
            self.forward.process_with_scratch(values, &mut self.scratch);
            for (i, c) in out.iter_mut().enumerate() {
                let k = i as i64 - kk;
                *c = values[self.slot(k)] * (Self::sign(k) * norm);
            }
            return;
        }
        // Pass 1: all rows along axis 1, keeping the 2K + 1 retained k1.
        self.forward.process_with_scratch(values, &mut self.scratch);
        // Pass 2: gather the retained columns and transform along axis 0.
        for b in 0..w {
            let k1 = b as i64 - kk;
            let slot = k1.rem_euclid(m as i64) as usize;
            let col = &mut self.rows[b * m..(b + 1) * m];
            for (j0, z) in col.iter_mut().enumerate() {
                *z = values[j0 * m + slot];
            }
        }
        self.forward.process_with_scratch(&mut self.rows, &mut self.scratch);
        for b in 0..w {
            let k1 = b as i64 - kk;
            let col = &self.rows[b * m..(b + 1) * m];
            for a in 0..w {
                let k0 = a as i64 - kk;
                out[a * w + b] = col[k0.rem_euclid(m as i64) as usize] * (Self::sign(k0 + k1) * norm);
            }
        }
    }

    /// Real grid values of a conjugate-symmetric coefficient set.
    pub fn to_grid(&mut self, coeffs: &[Complex64], out: &mut [f64]) {
        let mut buf = std::mem::take(&mut self.full);
        self.synthesize(coeffs, &mut buf);
        for (o, z) in out.iter_mut().zip(&buf) {
            *o = z.re;
        }
        self.full = buf;
    }

    /// Grid values of two real fields from one complex transform of `a + i b`.
    pub fn to_grid_pair(&mut self, a: &[Complex64], b: &[Complex64], out_a: &mut [f64], out_b: &mut [f64], buf: &mut Vec<Complex64>) {
        self.packed.clear();
        self.packed.extend(a.iter().zip(b).map(|(x, y)| x + Complex64::i() * y));
        let packed = std::mem::take(&mut self.packed);
        buf.resize(self.grid_len(), ZERO);
        self.synthesize(&packed, buf);
        self.packed = packed;
        for ((z, oa), ob) in buf.iter().zip(out_a.iter_mut()).zip(out_b.iter_mut()) {
            *oa = z.re;
            *ob = z.im;
        }
    }

    pub fn from_grid(&mut self, values: &[f64], out: &mut [Complex64]) {
        let mut buf = std::mem::take(&mut self.full);
        for (z, &x) in buf.iter_mut().zip(values) {
            *z = Complex64::new(x, 0.0);
        }
        self.analyze(&mut buf, out);
        self.full = buf;
        symmetrize(out);
    }

    /// Coefficients of two real grid functions from one complex transform,
    /// separated with `A_k = (Z_k + conj Z_{-k})/2`, `B_k = (Z_k - conj Z_{-k})/(2i)`.
    pub fn from_grid_pair(&mut self, a: &[f64], b: &[f64], out_a: &mut [Complex64], out_b: &mut [Complex64], buf: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend(a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)));
        let mut z = std::mem::take(&mut self.packed);
        z.resize(out_a.len(), ZERO);
        self.analyze(buf, &mut z);
        let n = z.len();
        for i in 0..n {
            let zm = z[n - 1 - i].conj();
            out_a[i] = 0.5 * (z[i] + zm);
            out_b[i] = (z[i] - zm) * Complex64::new(0.0, -0.5);
        }
        self.packed = z;
    }
}

fn symmetrize(c: &mut [Complex64]) {
    let n = c.len();
    for i in 0..n / 2 + 1 {
        let j = n - 1 - i;
        let avg = 0.5 * (c[i] + c[j].conj());
        c[i] = avg;
        c[j] = avg.conj();
    }
}
