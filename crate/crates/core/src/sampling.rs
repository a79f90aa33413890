//! Deterministic low-discrepancy samplers for the inequality scans.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::noise::{derive_seed, NoiseStream};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton sequence with a seeded Cranley-Patterson rotation.
#[derive(Clone, Debug)]
pub struct Halton {
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1 && dim <= PRIMES.len(), "Halton dimension must be in 1..=16");
        let mut shift = vec![0.0; dim];
        NoiseStream::new(derive_seed(seed, 0x4841_4C54)).uniform(0, 0, &mut shift);
        Self { shift, index: 1 }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        for (j, x) in out.iter_mut().enumerate() {
            let u = radical_inverse(self.index, PRIMES[j]) + self.shift[j];
            *x = u - u.floor();
        }
        self.index += 1;
    }
}

/// Axis-aligned box sampled by a rotated Halton sequence.
#[derive(Clone, Debug)]
pub struct BoxSampler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub count: usize,
    pub seed: u64,
}

impl BoxSampler {
    pub fn cube(dim: usize, half_width: f64, count: usize, seed: u64) -> Self {
        Self { lo: vec![-half_width; dim], hi: vec![half_width; dim], count, seed }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo.len() != self.hi.len() || self.lo.iter().zip(&self.hi).any(|(a, b)| !(b > a))
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut h = Halton::new(self.dim(), self.seed);
        let mut u = vec![0.0; self.dim()];
        (0..self.count)
            .map(|_| {
                h.next_into(&mut u);
                u.iter().zip(self.lo.iter().zip(&self.hi)).map(|(t, (a, b))| a + t * (b - a)).collect()
            })
            .collect()
    }
}

/// Points whose radii are uniform on `[0, r_max]` and whose directions are
/// quasi-uniform on the sphere, so thin radial shells get equal coverage.
#[derive(Clone, Debug)]
pub struct RadialSampler {
    pub dim: usize,
    pub r_max: f64,
    pub count: usize,
    pub seed: u64,
}

impl RadialSampler {
    pub fn points(&self) -> Vec<Vec<f64>> {
        let d = self.dim;
        let normal = Normal::standard();
        let mut h = Halton::new(d + 1, self.seed);
        let mut u = vec![0.0; d + 1];
        let mut out = Vec::with_capacity(self.count);
        while out.len() < self.count {
            h.next_into(&mut u);
            let r = u[0] * self.r_max;
            let mut dir: Vec<f64> = if d == 1 {
                vec![if u[1] < 0.5 { -1.0 } else { 1.0 }]
            } else {
                u[1..].iter().map(|&t| normal.inverse_cdf(t.clamp(1e-15, 1.0 - 1e-15))).collect()
            };
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-12 {
                continue;
            }
            dir.iter_mut().for_each(|x| *x *= r / n);
            out.push(dir);
        }
        out
    }
}
