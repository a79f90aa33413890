//! Mollifier-based cutoffs: the step S, shell S_i, plateau H_i and the
//! truncated coefficients G_i, J_i, plus sampled checks of the coefficient
//! inequalities.

use std::sync::{Arc, OnceLock};

use crate::error::{CboError, Result};
use crate::quadrature::integrate;

pub const DEFAULT_H_TABLE: f64 = 1e-3;
pub const DEFAULT_H_FD: f64 = 1e-5;

fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

/// The normalized mollifier `φ(x) = e^{-1/(1-x²)} / I` and its distribution
/// function `Φ`, tabulated on `[-1, 0]` and mirrored so that `Φ(0) = 1/2` exactly.
#[derive(Clone, Debug)]
pub struct Mollifier {
    h: f64,
    cdf: Vec<f64>,
    normalizer: f64,
}

impl Mollifier {
    pub fn new(h_table: f64) -> Result<Self> {
        if !(h_table > 0.0 && h_table <= 0.25) {
            return Err(CboError::Config(format!("h_table must lie in (0, 0.25], got {h_table}")));
        }
        let cells = (1.0 / h_table).round().max(4.0) as usize;
        let h = 1.0 / cells as f64;
        let tol = 1e-15 / cells as f64;
        let mut cdf = Vec::with_capacity(cells + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for j in 0..cells {
            let a = -1.0 + j as f64 * h;
            acc += integrate(bump, a, a + h, tol);
            cdf.push(acc);
        }
        let normalizer = 2.0 * acc;
        cdf.iter_mut().for_each(|c| *c /= normalizer);
        Ok(Self { h, cdf, normalizer })
    }

    /// Process-wide table with the default spacing.
    pub fn shared() -> Arc<Mollifier> {
        static SHARED: OnceLock<Arc<Mollifier>> = OnceLock::new();
        SHARED.get_or_init(|| Arc::new(Mollifier::new(DEFAULT_H_TABLE).expect("default table"))).clone()
    }

    pub fn table_spacing(&self) -> f64 {
        self.h
    }

    /// `I = ∫ e^{-1/(1-x²)} dx` over `(-1, 1)`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn phi(&self, x: f64) -> f64 {
        bump(x) / self.normalizer
    }

    /// `Φ(x) = ∫_{-∞}^x φ`, cubic Hermite between table nodes using `φ` as slope.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -1.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        if x > 0.0 {
            return 1.0 - self.cdf_left(-x);
        }
        self.cdf_left(x)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        let cells = self.cdf.len() - 1;
        let u = (x + 1.0) / self.h;
        let j = (u.floor() as usize).min(cells - 1);
        let t = u - j as f64;
        let x0 = -1.0 + j as f64 * self.h;
        let (y0, y1) = (self.cdf[j], self.cdf[j + 1]);
        let (m0, m1) = (self.phi(x0) * self.h, self.phi(x0 + self.h) * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1
    }

    /// `S = χ_{[1/2,∞)} * φ_{1/8}`: 0 for `x ≤ 3/8`, 1 for `x ≥ 5/8`.
    pub fn step(&self, x: f64) -> f64 {
        self.cdf(8.0 * (x - 0.5))
    }

    pub fn step_derivative(&self, x: f64) -> f64 {
        8.0 * self.phi(8.0 * (x - 0.5))
    }

    /// `H = χ_{[-10,10]} * φ`: 1 on `[-9, 9]`, 0 outside `(-11, 11)`.
    pub fn plateau(&self, x: f64) -> f64 {
        self.cdf(x + 10.0) - self.cdf(x - 10.0)
    }

    pub fn plateau_derivative(&self, x: f64) -> f64 {
        self.phi(x + 10.0) - self.phi(x - 10.0)
    }
}

/// Free-function form of [`Mollifier::step`] on the shared table.
pub fn step_function_s(x: f64) -> f64 {
    Mollifier::shared().step(x)
}

/// Cutoff parameters. `plateau_scale` is the argument scale of
/// `H_i(v) = H(‖v‖ / plateau_scale)`; it equals `n` unless the box is too
/// small for `H(‖v‖/n)` to vanish inside it.
#[derive(Clone, Debug)]
pub struct CutoffSpec {
    pub r: f64,
    pub n: f64,
    pub plateau_scale: f64,
    pub h_fd: f64,
    mollifier: Arc<Mollifier>,
}

impl CutoffSpec {
    pub fn new(r: f64, n: f64) -> Result<Self> {
        Self::with_plateau(r, n, n)
    }

    pub fn with_plateau(r: f64, n: f64, plateau_scale: f64) -> Result<Self> {
        if !(r > 1.0 && r.is_finite()) {
            return Err(CboError::Config(format!("shell radius R must exceed 1, got {r}")));
        }
        if !(n > 0.0 && n.is_finite()) || !(plateau_scale > 0.0 && plateau_scale.is_finite()) {
            return Err(CboError::Config(format!("cutoff heights must be positive, got n = {n}, plateau = {plateau_scale}")));
        }
        Ok(Self { r, n, plateau_scale, h_fd: DEFAULT_H_FD, mollifier: Mollifier::shared() })
    }

    pub fn with_table(mut self, h_table: f64) -> Result<Self> {
        self.mollifier = Arc::new(Mollifier::new(h_table)?);
        Ok(self)
    }

    pub fn with_h_fd(mut self, h_fd: f64) -> Self {
        self.h_fd = h_fd;
        self
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.mollifier
    }

    /// `S_i` as a function of the radius `‖v‖`.
    pub fn shell_at_radius(&self, r: f64) -> f64 {
        self.mollifier.step(r - self.r + 1.0)
    }

    /// `H_i` as a function of the radius `‖v‖`.
    pub fn plateau_at_radius(&self, r: f64) -> f64 {
        self.mollifier.plateau(r / self.plateau_scale)
    }

    /// Initial-data and source taper `1 - S(‖v‖ - n)`.
    pub fn taper_at_radius(&self, r: f64) -> f64 {
        1.0 - self.mollifier.step(r - self.n)
    }

    /// Radius beyond which `G_i` and `J_i` vanish identically.
    pub fn support_radius(&self) -> f64 {
        11.0 * self.plateau_scale
    }
}

pub fn shell_cutoff_si(v: &[f64], spec: &CutoffSpec) -> f64 {
    spec.shell_at_radius(norm(v))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spatial coefficients `G ≥ 0`, `J` and source `g` of the drift-diffusion equation.
pub trait CoefficientField: Send + Sync {
    fn dim(&self) -> usize;
    fn g(&self, v: &[f64], t: f64) -> f64;
    fn j(&self, v: &[f64], t: f64, out: &mut [f64]);
    fn source(&self, _v: &[f64], _t: f64) -> f64 {
        0.0
    }
    fn holder_exponent(&self) -> f64 {
        1.0
    }
}

/// `G = ‖v - c‖²`, `J = v - c`, `g = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CboCoefficients {
    pub center: Vec<f64>,
}

impl CoefficientField for CboCoefficients {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn g(&self, v: &[f64], _t: f64) -> f64 {
        v.iter().zip(&self.center).map(|(x, c)| (x - c) * (x - c)).sum()
    }

    fn j(&self, v: &[f64], _t: f64, out: &mut [f64]) {
        for ((o, x), c) in out.iter_mut().zip(v).zip(&self.center) {
            *o = x - c;
        }
    }
}

/// CBO coefficients following a time-dependent consensus path.
#[derive(Clone)]
pub struct CboPathCoefficients {
    pub dim: usize,
    pub path: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
}

impl CoefficientField for CboPathCoefficients {
    fn dim(&self) -> usize {
        self.dim
    }

    fn g(&self, v: &[f64], t: f64) -> f64 {
        CboCoefficients { center: (self.path)(t) }.g(v, t)
    }

    fn j(&self, v: &[f64], t: f64, out: &mut [f64]) {
        CboCoefficients { center: (self.path)(t) }.j(v, t, out)
    }

    fn holder_exponent(&self) -> f64 {
        0.5
    }
}

/// `G = ‖v - c‖^{g_power}`, `J = ‖v - c‖^{j_power - 1} (v - c)` so `‖J‖ = ‖v - c‖^{j_power}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerCoefficients {
    pub center: Vec<f64>,
    pub g_power: f64,
    pub j_power: f64,
}

impl CoefficientField for PowerCoefficients {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn g(&self, v: &[f64], _t: f64) -> f64 {
        let r2: f64 = v.iter().zip(&self.center).map(|(x, c)| (x - c) * (x - c)).sum();
        r2.powf(0.5 * self.g_power)
    }

    fn j(&self, v: &[f64], _t: f64, out: &mut [f64]) {
        let r2: f64 = v.iter().zip(&self.center).map(|(x, c)| (x - c) * (x - c)).sum();
        let scale = if r2 == 0.0 { 0.0 } else { r2.powf(0.5 * (self.j_power - 1.0)) };
        for ((o, x), c) in out.iter_mut().zip(v).zip(&self.center) {
            *o = scale * (x - c);
        }
    }
}

type GFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
type JFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// Coefficients given by closures.
#[derive(Clone)]
pub struct FnCoefficients {
    pub dim: usize,
    pub g: GFn,
    pub j: JFn,
    pub source: Option<GFn>,
}

impl FnCoefficients {
    pub fn new<G, J>(dim: usize, g: G, j: J) -> Self
    where
        G: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        J: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        Self { dim, g: Arc::new(g), j: Arc::new(j), source: None }
    }

    pub fn with_source<S>(mut self, s: S) -> Self
    where
        S: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        self.source = Some(Arc::new(s));
        self
    }
}

impl CoefficientField for FnCoefficients {
    fn dim(&self) -> usize {
        self.dim
    }

    fn g(&self, v: &[f64], t: f64) -> f64 {
        (self.g)(v, t)
    }

    fn j(&self, v: &[f64], t: f64, out: &mut [f64]) {
        (self.j)(v, t, out)
    }

    fn source(&self, v: &[f64], t: f64) -> f64 {
        self.source.as_ref().map_or(0.0, |s| s(v, t))
    }
}

/// Combines base values into `G_i = H_i² Ḡ_i` and `J_i = H_i J̄_i`, where
/// `Ḡ_i = G(1 - S_i) + (1 + G(R v̂)) S_i` and `J̄_i = J(1 - S_i) + √(G(R v̂) + 1) e S_i`.
/// `g_radial` is ignored when `s == 0`.
#[inline]
pub fn blend(g: f64, j: &[f64], g_radial: f64, s: f64, h: f64, j_out: &mut [f64]) -> f64 {
    if s == 0.0 {
        for (o, x) in j_out.iter_mut().zip(j) {
            *o = h * x;
        }
        return h * h * g;
    }
    let shell = (g_radial + 1.0).sqrt() * s;
    for (o, x) in j_out.iter_mut().zip(j) {
        *o = h * (x * (1.0 - s) + shell);
    }
    h * h * (g * (1.0 - s) + (1.0 + g_radial) * s)
}

/// A base field composed with the cutoff construction.
#[derive(Clone)]
pub struct TruncatedCoefficients<B> {
    pub base: B,
    pub spec: CutoffSpec,
}

impl<B: CoefficientField> TruncatedCoefficients<B> {
    pub fn new(base: B, spec: CutoffSpec) -> Self {
        Self { base, spec }
    }

    /// `(G_i, J_i)` at `v`.
    pub fn evaluate(&self, v: &[f64], t: f64, j_out: &mut [f64]) -> Result<f64> {
        let d = v.len();
        let r = norm(v);
        let s = self.spec.shell_at_radius(r);
        let h = self.spec.plateau_at_radius(r);
        let mut j = vec![0.0; d];
        if h == 0.0 {
            j_out.iter_mut().for_each(|o| *o = 0.0);
            return Ok(0.0);
        }
        let g = if s < 1.0 {
            self.base.j(v, t, &mut j);
            self.base.g(v, t)
        } else {
            0.0
        };
        let g_radial = if s > 0.0 {
            if r == 0.0 {
                return Err(CboError::RadialSingularity);
            }
            let proj: Vec<f64> = v.iter().map(|x| self.spec.r * x / r).collect();
            self.base.g(&proj, t)
        } else {
            0.0
        };
        Ok(blend(g, &j, g_radial, s, h, j_out))
    }
}

impl<B: CoefficientField> CoefficientField for TruncatedCoefficients<B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn g(&self, v: &[f64], t: f64) -> f64 {
        let mut j = vec![0.0; v.len()];
        self.evaluate(v, t, &mut j).expect("R > 1 keeps the origin out of the shell")
    }

    fn j(&self, v: &[f64], t: f64, out: &mut [f64]) {
        self.evaluate(v, t, out).expect("R > 1 keeps the origin out of the shell");
    }

    /// `g_i = g (1 - S(‖v‖ - n))`.
    fn source(&self, v: &[f64], t: f64) -> f64 {
        let taper = self.spec.taper_at_radius(norm(v));
        if taper == 0.0 {
            0.0
        } else {
            taper * self.base.source(v, t)
        }
    }

    fn holder_exponent(&self) -> f64 {
        self.base.holder_exponent()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSample {
    pub g: f64,
    pub j: Vec<f64>,
    pub grad_g: Vec<f64>,
}

/// `G_i`, `J_i` and a central-difference gradient of `G_i` at `v`.
pub fn truncated_coefficients<B: CoefficientField>(
    base: &B,
    spec: &CutoffSpec,
    v: &[f64],
    t: f64,
) -> Result<TruncatedSample> {
    let d = v.len();
    let tc = TruncatedCoefficients { base, spec: spec.clone() };
    let mut j = vec![0.0; d];
    let g = tc.evaluate(v, t, &mut j)?;
    let h = spec.h_fd * (1.0 + norm(v));
    let mut scratch = vec![0.0; d];
    let mut grad_g = vec![0.0; d];
    let mut p = v.to_vec();
    for k in 0..d {
        p[k] = v[k] + h;
        let gp = tc.evaluate(&p, t, &mut scratch)?;
        p[k] = v[k] - h;
        let gm = tc.evaluate(&p, t, &mut scratch)?;
        p[k] = v[k];
        grad_g[k] = (gp - gm) / (2.0 * h);
    }
    Ok(TruncatedSample { g, j, grad_g })
}

impl<B: CoefficientField + ?Sized> CoefficientField for &B {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn g(&self, v: &[f64], t: f64) -> f64 {
        (**self).g(v, t)
    }
    fn j(&self, v: &[f64], t: f64, out: &mut [f64]) {
        (**self).j(v, t, out)
    }
    fn source(&self, v: &[f64], t: f64) -> f64 {
        (**self).source(v, t)
    }
    fn holder_exponent(&self) -> f64 {
        (**self).holder_exponent()
    }
}

/// Central-difference derivatives of a coefficient field at one point.
struct LocalDerivatives {
    g: f64,
    j: Vec<f64>,
    grad_g: Vec<f64>,
    hess_g_norm: f64,
    jac_j_norm: f64,
}

fn local_derivatives(field: &dyn CoefficientField, v: &[f64], t: f64, h_fd: f64, second: bool) -> LocalDerivatives {
    let d = v.len();
    let h = h_fd * (1.0 + norm(v));
    let g0 = field.g(v, t);
    let mut j0 = vec![0.0; d];
    field.j(v, t, &mut j0);
    let mut p = v.to_vec();
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut jp = vec![0.0; d];
    let mut jm = vec![0.0; d];
    let mut jac2 = 0.0;
    let mut grad_g = vec![0.0; d];
    for k in 0..d {
        p[k] = v[k] + h;
        gp[k] = field.g(&p, t);
        field.j(&p, t, &mut jp);
        p[k] = v[k] - h;
        gm[k] = field.g(&p, t);
        field.j(&p, t, &mut jm);
        p[k] = v[k];
        grad_g[k] = (gp[k] - gm[k]) / (2.0 * h);
        jac2 += jp.iter().zip(&jm).map(|(a, b)| ((a - b) / (2.0 * h)).powi(2)).sum::<f64>();
    }
    let mut hess2 = 0.0;
    if second {
        for a in 0..d {
            hess2 += ((gp[a] - 2.0 * g0 + gm[a]) / (h * h)).powi(2);
            for b in (a + 1)..d {
                let mut corner = |sa: f64, sb: f64| {
                    p[a] = v[a] + sa * h;
                    p[b] = v[b] + sb * h;
                    let val = field.g(&p, t);
                    p[a] = v[a];
                    p[b] = v[b];
                    val
                };
                let mixed = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h * h);
                hess2 += 2.0 * mixed * mixed;
            }
        }
    }
    LocalDerivatives { g: g0, j: j0, grad_g, hess_g_norm: hess2.sqrt(), jac_j_norm: jac2.sqrt() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityEntry {
    pub quantity: String,
    /// Supremum of the ratio (an infimum for entries whose name ends in `_min`).
    pub sup: f64,
    pub bound: f64,
    pub sample_count: usize,
    /// Samples where the ratio is undefined and the inequality fails outright.
    pub violations: usize,
    pub satisfied: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InequalityReport {
    pub entries: Vec<InequalityEntry>,
}

impl InequalityReport {
    pub fn satisfied(&self) -> bool {
        self.entries.iter().all(|e| e.satisfied)
    }

    pub fn get(&self, quantity: &str) -> Option<&InequalityEntry> {
        self.entries.iter().find(|e| e.quantity == quantity)
    }

    fn push_sup(&mut self, quantity: &str, sup: f64, bound: f64, count: usize, violations: usize) {
        self.entries.push(InequalityEntry {
            quantity: quantity.to_string(),
            sup,
            bound,
            sample_count: count,
            violations,
            satisfied: sup.is_finite() && sup <= bound && violations == 0,
        });
    }
}

/// Options shared by the inequality scans.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    pub t: f64,
    pub max_order: usize,
    pub bound: f64,
    pub h_fd: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { t: 0.0, max_order: 2, bound: f64::INFINITY, h_fd: DEFAULT_H_FD }
    }
}

pub const Q_GRAD: &str = "grad_g_over_sqrt_g_one_plus_sqrt_g";
pub const Q_HESS: &str = "hess_g_over_one_plus_g";
pub const Q_J: &str = "j_sq_over_g";
pub const Q_JAC: &str = "jac_j_over_one_plus_sqrt_g";

/// Sups of `‖∇G‖/(√G(1+√G))`, `‖∇²G‖/(1+G)`, `‖J‖²/G`, `‖∂J‖/(1+√G)` over
/// the sample points. Where `G = 0` a ratio with nonzero numerator counts as a
/// violation; a zero numerator is admitted with ratio 0.
pub fn coefficient_inequalities(
    field: &dyn CoefficientField,
    points: &[Vec<f64>],
    opts: &CheckOptions,
) -> InequalityReport {
    let second = opts.max_order >= 2;
    let mut sup = [0.0f64; 4];
    let mut bad = [0usize; 4];
    for v in points {
        let ld = local_derivatives(field, v, opts.t, opts.h_fd, second);
        let sg = ld.g.max(0.0).sqrt();
        let grad = norm(&ld.grad_g);
        let jn2 = ld.j.iter().map(|x| x * x).sum::<f64>();
        if ld.g > 0.0 {
            sup[0] = sup[0].max(grad / (sg * (1.0 + sg)));
            sup[2] = sup[2].max(jn2 / ld.g);
        } else {
            bad[0] += (grad > 0.0) as usize;
            bad[2] += (jn2 > 0.0) as usize;
        }
        sup[1] = sup[1].max(ld.hess_g_norm / (1.0 + ld.g.max(0.0)));
        sup[3] = sup[3].max(ld.jac_j_norm / (1.0 + sg));
    }
    let n = points.len();
    let mut report = InequalityReport::default();
    report.push_sup(Q_GRAD, sup[0], opts.bound, n, bad[0]);
    if second {
        report.push_sup(Q_HESS, sup[1], opts.bound, n, bad[1]);
    }
    report.push_sup(Q_J, sup[2], opts.bound, n, bad[2]);
    report.push_sup(Q_JAC, sup[3], opts.bound, n, bad[3]);
    report
}

/// Sampled check of the base coefficient inequalities.
pub fn verify_assumption_g1(
    base: &dyn CoefficientField,
    points: &[Vec<f64>],
    opts: &CheckOptions,
) -> InequalityReport {
    coefficient_inequalities(base, points, opts)
}

/// The same four ratio families evaluated on the truncated `G_i`, `J_i`.
pub fn verify_lemma_g4<B: CoefficientField>(
    base: &B,
    spec: &CutoffSpec,
    points: &[Vec<f64>],
    opts: &CheckOptions,
) -> Result<InequalityReport> {
    if points.iter().any(|v| norm(v) == 0.0 && spec.shell_at_radius(0.0) > 0.0) {
        return Err(CboError::RadialSingularity);
    }
    let tc = TruncatedCoefficients { base, spec: spec.clone() };
    Ok(coefficient_inequalities(&tc, points, opts))
}

/// Options for the `Q_i := G_i(·, t0)` check.
#[derive(Clone, Debug, PartialEq)]
pub struct QCheckOptions {
    pub t0: f64,
    pub times: Vec<f64>,
    pub bound: f64,
    pub h_fd: f64,
    /// Half-width of the cube used for the source integral.
    pub box_half_width: f64,
    /// Midpoint-rule nodes per axis for the source integral.
    pub quad_nodes: usize,
}

pub const Q_PREMISE_GRAD: &str = "premise_grad_g_over_one_plus_sqrt_g";
pub const Q_PREMISE_TIME: &str = "premise_time_comparability";
pub const Q_Q_GRAD: &str = "grad_q_over_one_plus_sqrt_q";
pub const Q_UPPER: &str = "q_plus_one_over_one_plus_gi";
pub const Q_LOWER: &str = "q_plus_one_over_one_plus_gi_min";
pub const Q_SOURCE: &str = "weighted_source_integral";

/// Checks the premises of the sufficient condition and the three properties of
/// `Q_i := G_i(·, t0)` over sample points and times.
pub fn verify_assumption_g3_q<B: CoefficientField>(
    base: &B,
    spec: &CutoffSpec,
    points: &[Vec<f64>],
    opts: &QCheckOptions,
) -> Result<InequalityReport> {
    if opts.times.is_empty() {
        return Err(CboError::Config("Q check needs at least one time sample".into()));
    }
    let tc = TruncatedCoefficients { base, spec: spec.clone() };
    let n = points.len();
    let mut premise_grad = 0.0f64;
    let mut premise_time = 0.0f64;
    let mut q_grad = 0.0f64;
    let mut upper = 0.0f64;
    let mut lower = f64::INFINITY;
    for v in points {
        let d = local_derivatives(base, v, opts.t0, opts.h_fd, false);
        premise_grad = premise_grad.max(norm(&d.grad_g) / (1.0 + d.g.max(0.0).sqrt()));
        let g_times: Vec<f64> = opts.times.iter().map(|&t| base.g(v, t)).collect();
        for &g2 in &g_times {
            for &g1 in &g_times {
                premise_time = premise_time.max((g2 + 1.0) / (1.0 + g1));
            }
        }
        let q = local_derivatives(&tc, v, opts.t0, opts.h_fd, false);
        q_grad = q_grad.max(norm(&q.grad_g) / (1.0 + q.g.max(0.0).sqrt()));
        let mut scratch = vec![0.0; v.len()];
        for &t in &opts.times {
            let gi = tc.evaluate(v, t, &mut scratch)?;
            let ratio = (q.g + 1.0) / (1.0 + gi);
            upper = upper.max(ratio);
            lower = lower.min(ratio);
        }
    }
    let mut source = 0.0f64;
    for &t in &opts.times {
        source = source.max(weighted_source_integral(&tc, t, opts.box_half_width, opts.quad_nodes, opts.h_fd));
    }
    let mut report = InequalityReport::default();
    report.push_sup(Q_PREMISE_GRAD, premise_grad, opts.bound, n, 0);
    report.push_sup(Q_PREMISE_TIME, premise_time, opts.bound, n, 0);
    report.push_sup(Q_Q_GRAD, q_grad, opts.bound, n, 0);
    report.push_sup(Q_UPPER, upper, opts.bound, n, 0);
    report.entries.push(InequalityEntry {
        quantity: Q_LOWER.to_string(),
        sup: lower,
        bound: 1.0 / opts.bound,
        sample_count: n,
        violations: 0,
        satisfied: lower.is_finite() && lower >= 1.0 / opts.bound,
    });
    report.push_sup(Q_SOURCE, source, opts.bound, opts.quad_nodes.pow(base.dim() as u32), 0);
    Ok(report)
}

/// `∫ (1 + G_i²)(g_i² + ‖∇g_i‖²)` over a cube by the midpoint rule.
fn weighted_source_integral(field: &dyn CoefficientField, t: f64, half: f64, nodes: usize, h_fd: f64) -> f64 {
    let d = field.dim();
    let nodes = nodes.max(1);
    let cell = 2.0 * half / nodes as f64;
    let total = nodes.pow(d as u32);
    let mut v = vec![0.0; d];
    let mut acc = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        for x in v.iter_mut() {
            *x = -half + (rem % nodes) as f64 * cell + 0.5 * cell;
            rem /= nodes;
        }
        let s = field.source(&v, t);
        let h = h_fd * (1.0 + norm(&v));
        let mut grad2 = 0.0;
        for k in 0..d {
            let c = v[k];
            v[k] = c + h;
            let sp = field.source(&v, t);
            v[k] = c - h;
            let sm = field.source(&v, t);
            v[k] = c;
            grad2 += ((sp - sm) / (2.0 * h)).powi(2);
        }
        let g = field.g(&v, t);
        acc += (1.0 + g * g) * (s * s + grad2);
    }
    acc * cell.powi(d as i32)
}

/// Radii split evenly over the core, the shell, the plateau, the `H_i`
/// roll-off and the far field, with quasi-uniform directions.
pub fn stratified_radial_points(dim: usize, spec: &CutoffSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use crate::sampling::Halton;
    use statrs::distribution::{ContinuousCDF, Normal};
    let outer = spec.support_radius();
    let edges = [0.0, spec.r - 1.0, spec.r, 9.0 * spec.plateau_scale, outer, outer * 1.1];
    let mut bands: Vec<(f64, f64)> = edges.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect();
    bands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let normal = Normal::standard();
    let mut h = Halton::new(dim + 1, seed);
    let mut u = vec![0.0; dim + 1];
    let mut out = Vec::with_capacity(count);
    let mut k = 0usize;
    while out.len() < count {
        h.next_into(&mut u);
        let (lo, hi) = bands[k % bands.len()];
        let r = lo + u[0] * (hi - lo);
        let mut dir: Vec<f64> = if dim == 1 {
            vec![if u[1] < 0.5 { -1.0 } else { 1.0 }]
        } else {
            u[1..].iter().map(|&t| normal.inverse_cdf(t.clamp(1e-15, 1.0 - 1e-15))).collect()
        };
        let nd = norm(&dir);
        if nd < 1e-12 || r == 0.0 {
            continue;
        }
        dir.iter_mut().for_each(|x| *x *= r / nd);
        out.push(dir);
        k += 1;
    }
    out
}

/// Independent check of the mollifier table against direct quadrature.
pub fn cdf_by_quadrature(m: &Mollifier, x: f64) -> f64 {
    if x <= -1.0 {
        return 0.0;
    }
    let upper = x.min(1.0);
    integrate(bump, -1.0, upper, 1e-15) / m.normalizer()
}
