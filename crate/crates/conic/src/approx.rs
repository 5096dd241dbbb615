//! Orthogonal projections, near-best operators, spectral multipliers, moduli of
//! smoothness and K-functionals, and the spectral eigenrelation check.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ConicError, Result};
use crate::geometry::{probe_point, DomainKind, DomainSpec, PointXT, WeightSpec};
use crate::kernels::{eigenvalue, Basis, BasisIndex};
use crate::par::chunked_sum;
use crate::orthopoly::{jacobi_eval, CutoffSpec, JacobiParams};
use crate::quadrature::{cubature_solve, reference_rule, ReferenceRule};
use crate::sampling::halton_point;

/// Orthonormal coefficients of a function up to degree `nmax`.
#[derive(Debug, Clone)]
pub struct ProjectionSeries {
    pub basis: Arc<Basis>,
    pub coeffs: Vec<f64>,
}

impl ProjectionSeries {
    pub fn zeros(basis: Arc<Basis>) -> Self {
        let coeffs = vec![0.0; basis.len()];
        Self { basis, coeffs }
    }

    pub fn nmax(&self) -> usize {
        self.basis.nmax
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.basis.dom
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.basis.w
    }

    pub fn block(&self, n: usize) -> &[f64] {
        &self.coeffs[self.basis.starts[n]..self.basis.starts[n + 1]]
    }

    /// ‖proj_n f‖².
    pub fn block_norm2(&self, n: usize) -> f64 {
        self.block(n).iter().map(|c| c * c).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    /// (Σ_{k>n} ‖proj_k f‖²)^{1/2}: the L² best error for the represented function.
    pub fn tail(&self, n: usize) -> f64 {
        ((n + 1)..=self.nmax()).map(|k| self.block_norm2(k)).sum::<f64>().sqrt()
    }

    pub fn eval(&self, p: &PointXT) -> f64 {
        let mut buf = Vec::new();
        self.basis.eval_all_orthonormal(p, &mut buf);
        buf.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }

    /// Scale the degree-k block by m(k).
    pub fn multiply(&self, m: impl Fn(usize) -> f64) -> Self {
        let mut out = self.clone();
        for k in 0..=self.nmax() {
            let s = m(k);
            for c in &mut out.coeffs[self.basis.starts[k]..self.basis.starts[k + 1]] {
                *c *= s;
            }
        }
        out
    }

    /// Coefficient-wise difference; both series must share a basis layout.
    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let long = if self.coeffs.len() >= other.coeffs.len() { self } else { other };
        let coeffs = (0..n)
            .map(|i| self.coeffs.get(i).copied().unwrap_or(0.0) - other.coeffs.get(i).copied().unwrap_or(0.0))
            .collect();
        Self { basis: long.basis.clone(), coeffs }
    }

    pub fn coefficient(&self, idx: &BasisIndex) -> Option<f64> {
        if idx.n > self.nmax() {
            return None;
        }
        let s = self.basis.starts[idx.n];
        self.basis.indices[s..self.basis.starts[idx.n + 1]].iter().position(|i| i == idx).map(|o| self.coeffs[s + o])
    }
}

/// Domain probes, lifted to the domain's ρ.
pub fn domain_probe(dom: &DomainSpec, i: u64) -> PointXT {
    dom.from_zero(&probe_point(dom.kind, i))
}

/// Rejects f unless f(x,t) = f(x,−t) at a set of probes.
pub fn check_even(dom: &DomainSpec, f: &(impl Fn(&PointXT) -> f64 + Sync)) -> Result<()> {
    let mut worst: f64 = 0.0;
    for i in 0..32 {
        let p = domain_probe(dom, 7 * i + 3);
        let (a, b) = (f(&p), f(&p.flip_t()));
        let rel = (a - b).abs() / (1.0 + a.abs().max(b.abs()));
        worst = worst.max(rel);
    }
    if worst > 1e-9 {
        return Err(ConicError::Symmetry(worst));
    }
    Ok(())
}

/// Σ_i w_i f(p_i) Φ(p_i) over a reference rule.
pub fn project_with(basis: Arc<Basis>, rule: &ReferenceRule, f: impl Fn(&PointXT) -> f64 + Sync) -> Result<ProjectionSeries> {
    let nb = basis.len();
    let vals: Vec<f64> = rule.points.par_iter().map(&f).collect();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(ConicError::Integration { node: i });
    }
    let coeffs = chunked_sum(rule.points.len(), nb, |r, acc| {
        let mut buf = Vec::new();
        for i in r {
            basis.eval_all_orthonormal(&rule.points[i], &mut buf);
            let s = vals[i] * rule.weights[i];
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += s * b;
            }
        }
    });
    Ok(ProjectionSeries { basis, coeffs })
}

/// Default reference level for projecting to degree n: products of degree 2n plus slack.
pub fn default_level(n: usize) -> usize {
    2 * n + 16
}

pub fn project(dom: &DomainSpec, w: &WeightSpec, f: impl Fn(&PointXT) -> f64 + Sync, n: usize) -> Result<ProjectionSeries> {
    project_level(dom, w, f, n, default_level(n))
}

pub fn project_level(
    dom: &DomainSpec,
    w: &WeightSpec,
    f: impl Fn(&PointXT) -> f64 + Sync,
    n: usize,
    level: usize,
) -> Result<ProjectionSeries> {
    check_even(dom, &f)?;
    let basis = Arc::new(Basis::new(dom, w, n)?);
    let rule = reference_rule(dom, w, level)?;
    project_with(basis, &rule, f)
}

/// How L_n^E * f is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NearBestMode {
    /// Reference product quadrature.
    Continuous,
    /// A positive cubature exact on Π_{4n}^E at this δ.
    Discrete { delta: f64 },
}

/// L_n^E * f as a series of degree < 2n.
pub fn near_best(
    dom: &DomainSpec,
    w: &WeightSpec,
    f: impl Fn(&PointXT) -> f64 + Sync,
    n: usize,
    c: &CutoffSpec,
    mode: NearBestMode,
) -> Result<ProjectionSeries> {
    if c.kind != crate::orthopoly::CutoffKind::TypeA {
        return Err(ConicError::Param("near-best operator needs a TypeA cut-off".into()));
    }
    check_even(dom, &f)?;
    let top = (2 * n).saturating_sub(1);
    let basis = Arc::new(Basis::new(dom, w, top)?);
    let series = match mode {
        NearBestMode::Continuous => project_with(basis, &reference_rule(dom, w, default_level(top))?, &f)?,
        NearBestMode::Discrete { delta } => {
            let rule = cubature_solve(dom, w, (4 * n).max(2), delta, 1e-10)?;
            let nb = basis.len();
            let mut coeffs = vec![0.0; nb];
            let mut buf = Vec::new();
            for node in &rule.nodes {
                let p = node.point();
                let v = f(&p) * node.lambda;
                basis.eval_all_orthonormal(&p, &mut buf);
                coeffs.iter_mut().zip(&buf).for_each(|(a, b)| *a += v * b);
            }
            ProjectionSeries { basis, coeffs }
        }
    };
    Ok(apply_cutoff(&series, n, c))
}

/// Scale by â(k/n); n = 0 keeps the constant only.
pub fn apply_cutoff(s: &ProjectionSeries, n: usize, c: &CutoffSpec) -> ProjectionSeries {
    if n == 0 {
        return s.multiply(|k| if k == 0 { 1.0 } else { 0.0 });
    }
    s.multiply(|k| c.eval(k as f64 / n as f64))
}

/// Best-approximation error with a flag telling whether it is exact or an upper estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestError {
    pub value: f64,
    pub exact: bool,
}

/// E_n(f)_p. p = 2 from the projection tail; p ∈ {1, ∞} bounded by the near-best error of L_{⌊n/2⌋}.
pub fn best_error(dom: &DomainSpec, w: &WeightSpec, f: impl Fn(&PointXT) -> f64 + Sync, n: usize, p: f64) -> Result<BestError> {
    check_even(dom, &f)?;
    let level = default_level(4 * n.max(4));
    let rule = reference_rule(dom, w, level)?;
    if p == 2.0 {
        let total = rule.integrate(|q| f(q).powi(2))?;
        let basis = Arc::new(Basis::new(dom, w, n)?);
        let s = project_with(basis, &rule, &f)?;
        return Ok(BestError { value: (total - s.norm2()).max(0.0).sqrt(), exact: true });
    }
    if p != 1.0 && p != f64::INFINITY {
        return Err(ConicError::Param(format!("p must be 1, 2 or inf, got {p}")));
    }
    let m = n / 2;
    let c = CutoffSpec::type_a();
    let top = (2 * m).saturating_sub(1);
    let basis = Arc::new(Basis::new(dom, w, top)?);
    let g = apply_cutoff(&project_with(basis, &rule, &f)?, m, &c);
    let value = if p == 1.0 {
        rule.integrate(|q| (f(q) - g.eval(q)).abs())?
    } else {
        (0..4000u64).map(|i| domain_probe(dom, i)).map(|q| (f(&q) - g.eval(&q)).abs()).fold(0.0, f64::max)
    };
    Ok(BestError { value, exact: false })
}

/// Jacobi index a with S_θ acting on degree n by R_n^{(a,a)}(cos θ).
pub fn s_theta_index(dom: &DomainSpec, w: &WeightSpec) -> f64 {
    let d = dom.d as f64;
    match dom.kind {
        // C_n^{λ−1/2}/C_n^{λ−1/2}(1) with λ = γ + (d−1)/2 is R_n^{(λ−1, λ−1)}
        DomainKind::Surface => w.gamma + (d - 1.0) / 2.0 - 1.0,
        DomainKind::Solid => w.gamma + w.mu + d / 2.0 - 0.5,
    }
}

/// m_{S_θ}(n) = R_n^{(a,a)}(cos θ), normalized to 1 at θ = 0.
pub fn s_theta(dom: &DomainSpec, w: &WeightSpec, theta: f64, n: usize) -> f64 {
    let a = s_theta_index(dom, w);
    let jp = JacobiParams { alpha: a, beta: a };
    jacobi_eval(n, jp, theta.cos()) / jp.value_at_one(n)
}

/// (1 − m_{S_θ}(n))^{r/2}.
pub fn one_minus_s_power(dom: &DomainSpec, w: &WeightSpec, theta: f64, r: f64, n: usize) -> Result<f64> {
    let base = 1.0 - s_theta(dom, w, theta, n);
    if base < -1e-12 {
        return Err(ConicError::Numeric(format!("negative base {base} in (I - S_theta)^(r/2)")));
    }
    Ok(base.max(0.0).powf(r / 2.0))
}

pub fn apply_one_minus_s(s: &ProjectionSeries, theta: f64, r: f64) -> Result<ProjectionSeries> {
    let m: Vec<f64> = (0..=s.nmax()).map(|n| one_minus_s_power(s.domain(), s.weight(), theta, r, n)).collect::<Result<_>>()?;
    Ok(s.multiply(|k| m[k]))
}

/// (−𝔇)^{r/2}: degree k scaled by μ(k)^{r/2}.
pub fn apply_spectral_power(s: &ProjectionSeries, r: f64) -> ProjectionSeries {
    let (dom, w) = (*s.domain(), *s.weight());
    s.multiply(|k| eigenvalue(&dom, &w, k).powf(r / 2.0))
}

/// ω_r(f; θ) = sup_{0<φ≤θ} ‖(I − S_φ)^{r/2} f‖₂, sup over 16 log-spaced φ per halving, down to θ/1024.
pub fn modulus(s: &ProjectionSeries, r: f64, theta: f64) -> Result<f64> {
    let mut best: f64 = 0.0;
    for i in 0..=160 {
        let phi = theta * 2f64.powf(-(i as f64) / 16.0);
        best = best.max(apply_one_minus_s(s, phi, r)?.norm());
    }
    Ok(best)
}

/// K̃_r(f; t): infimum of ‖f − g‖₂ + t^r ‖(−𝔇)^{r/2} g‖₂ over g = L_m f, m ∈ {0, 1, 2, 4, …}.
pub fn k_functional(s: &ProjectionSeries, r: f64, t: f64) -> f64 {
    let c = CutoffSpec::type_a();
    let mut best = f64::INFINITY;
    let mut m = 0usize;
    loop {
        let g = apply_cutoff(s, m, &c);
        let v = s.sub(&g).norm() + t.powf(r) * apply_spectral_power(&g, r).norm();
        best = best.min(v);
        if 2 * m > s.nmax() + 1 {
            break;
        }
        m = if m == 0 { 1 } else { 2 * m };
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub theta: f64,
    pub omega: f64,
    pub k: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacksonRow {
    pub n: usize,
    pub best_error: f64,
    pub k: f64,
    /// E_n / K̃_r(f; 1/n).
    pub jackson: f64,
    /// K̃_r(f; 1/n) / (n^{−r} Σ_{k≤n} (k+1)^{r−1} E_k).
    pub inverse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub r: f64,
    pub rows: Vec<ModulusRow>,
    pub jackson: Vec<JacksonRow>,
    /// Whether the Jackson direction applies (γ ≥ 0 for the reference weight).
    pub jackson_applies: bool,
}

impl ModulusReport {
    pub fn ratio_range(&self) -> (f64, f64) {
        self.rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.ratio), hi.max(r.ratio)))
    }

    pub fn jackson_max(&self) -> f64 {
        self.jackson.iter().map(|j| j.jackson).fold(0.0, f64::max)
    }

    pub fn inverse_max(&self) -> f64 {
        self.jackson.iter().map(|j| j.inverse).fold(0.0, f64::max)
    }
}

pub fn modulus_and_k(s: &ProjectionSeries, r: f64, thetas: &[f64], ns: &[usize]) -> Result<ModulusReport> {
    let rows = thetas
        .par_iter()
        .map(|&th| {
            let omega = modulus(s, r, th)?;
            let k = k_functional(s, r, th);
            Ok(ModulusRow { theta: th, omega, k, ratio: omega / k })
        })
        .collect::<Result<Vec<_>>>()?;
    let jackson = ns
        .iter()
        .map(|&n| {
            let e = s.tail(n);
            let k = k_functional(s, r, 1.0 / n as f64);
            let sum: f64 = (0..=n).map(|j| (j as f64 + 1.0).powf(r - 1.0) * s.tail(j)).sum();
            let bound = (n as f64).powf(-r) * sum;
            JacksonRow { n, best_error: e, k, jackson: e / k, inverse: k / bound }
        })
        .collect();
    Ok(ModulusReport { r, rows, jackson, jackson_applies: s.weight().gamma >= 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub index: BasisIndex,
    pub eigenvalue: f64,
    /// max |𝔇u + μu| / max(|μu|, |u|) over the probes used.
    pub max_rel_dev: f64,
    pub probes_used: usize,
    pub skipped: usize,
    pub richardson: bool,
}

const FD_H: f64 = 1e-4;

fn d1(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
}

fn d2(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2.0 * h)) / (12.0 * h * h)
}

/// Apply the spectral operator to u at p with step h.
fn apply_operator(dom: &DomainSpec, w: &WeightSpec, u: &dyn Fn(&PointXT) -> f64, p: &PointXT, h: f64) -> f64 {
    let rho2 = dom.rho * dom.rho;
    let t = p.t;
    let t2 = t * t;
    let d = dom.d as f64;
    match dom.kind {
        DomainKind::Surface => {
            // polar coordinates x = √(t²−ρ²)(cos φ, sin φ)
            let phi0 = p.x[1].atan2(p.x[0]);
            let g = |tt: f64, ph: f64| {
                let r = (tt * tt - rho2).max(0.0).sqrt();
                u(&PointXT { x: vec![r * ph.cos(), r * ph.sin()], t: tt })
            };
            let ut = d1(&|e| g(t + e, phi0), h);
            let utt = d2(&|e| g(t + e, phi0), h);
            let upp = d2(&|e| g(t, phi0 + e), h);
            let a = 1.0 + rho2 - t2;
            a * (1.0 - rho2 / t2) * utt + ((a * rho2 / t2 - (2.0 * w.gamma + d) * (t2 - rho2)) / t + (d - 1.0) / t) * ut
                + upp / (t2 - rho2)
        }
        DomainKind::Solid => {
            let at = |a: f64, b: f64, dt: f64| u(&PointXT { x: vec![p.x[0] + a, p.x[1] + b], t: t + dt });
            let ut = d1(&|s| at(0.0, 0.0, s), h);
            let utt = d2(&|s| at(0.0, 0.0, s), h);
            let grad = [d1(&|s| at(s, 0.0, 0.0), h), d1(&|s| at(0.0, s, 0.0), h)];
            let u11 = d2(&|s| at(s, 0.0, 0.0), h);
            let u22 = d2(&|s| at(0.0, s, 0.0), h);
            let u12 = d1(&|s| d1(&|r| at(s, r, 0.0), h), h);
            let u1t = d1(&|s| d1(&|r| at(s, 0.0, r), h), h);
            let u2t = d1(&|s| d1(&|r| at(0.0, s, r), h), h);
            let lap = u11 + u22;
            let xhx = p.x[0] * p.x[0] * u11 + 2.0 * p.x[0] * p.x[1] * u12 + p.x[1] * p.x[1] * u22;
            let xgt = p.x[0] * u1t + p.x[1] * u2t;
            let xg: f64 = p.x.iter().zip(&grad).map(|(a, b)| a * b).sum();
            let a = 1.0 + rho2 - t2;
            let k = 2.0 * w.gamma + 2.0 * w.mu + d + 1.0;
            // Δ − ⟨x,∇⟩² + ⟨x,∇⟩ reduces to Δ − Σ x_i x_j ∂_ij
            a * (1.0 - rho2 / t2) * utt + lap - xhx + 2.0 / t * a * xgt + (a * rho2 / t2 + 2.0 * w.mu + d) / t * ut
                - k * ((1.0 - rho2 / t2) * t * ut + xg)
        }
    }
}

/// Interior probes away from t = 0, the rims, and the lateral boundary.
pub fn interior_probes(dom: &DomainSpec, count: usize) -> Vec<PointXT> {
    let rho2 = dom.rho * dom.rho;
    let tmax = dom.t_max();
    (0..count as u64)
        .map(|i| {
            let u = halton_point(i, 4);
            let lo = (rho2 + 0.04).sqrt().max(0.25);
            let t = lo + (0.9 * tmax - lo) * u[0];
            let t = if u[3] < 0.5 { t } else { -t };
            let ph = 2.0 * PI * u[1];
            let rr = (t * t - rho2).sqrt();
            let r = match dom.kind {
                DomainKind::Surface => rr,
                DomainKind::Solid => 0.8 * rr * u[2].sqrt(),
            };
            PointXT { x: vec![r * ph.cos(), r * ph.sin()], t }
        })
        .collect()
}

/// Finite-difference check of 𝔇 Φ_idx = −μ(n) Φ_idx (d = 2).
pub fn spectral_check(dom: &DomainSpec, w: &WeightSpec, idx: &BasisIndex, probes: &[PointXT]) -> Result<SpectralReport> {
    if dom.d != 2 {
        return Err(ConicError::Param("spectral check is implemented for d = 2".into()));
    }
    let basis = Basis::new(dom, w, idx.n)?;
    basis.eval(idx, &PointXT { x: vec![0.0; 2], t: 1.0 })?;
    let u = |q: &PointXT| basis.eval(idx, q).unwrap_or(f64::NAN);
    let mu = eigenvalue(dom, w, idx.n);
    let rho2 = dom.rho * dom.rho;
    let (mut used, mut skipped) = (0, 0);
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    let mut vals = Vec::new();
    for p in probes {
        let t2 = p.t * p.t;
        let near = p.t.abs() < 0.1 || t2 - rho2 < 0.05 || p.t.abs() > 0.97 * dom.t_max();
        let lateral = dom.kind == DomainKind::Solid && p.norm_x2() > 0.9 * (t2 - rho2);
        if near || lateral {
            skipped += 1;
            continue;
        }
        used += 1;
        let v = u(p);
        vals.push((p.clone(), v));
        num = num.max((apply_operator(dom, w, &u, p, FD_H) + mu * v).abs());
        den = den.max((mu * v).abs()).max(v.abs());
    }
    let den = den.max(f64::MIN_POSITIVE);
    let mut dev = num / den;
    let mut richardson = false;
    if dev > 1e-3 {
        // Richardson on h and h/2 for a 4th-order stencil
        richardson = true;
        let mut n2: f64 = 0.0;
        for (p, v) in &vals {
            let a = apply_operator(dom, w, &u, p, FD_H);
            let b = apply_operator(dom, w, &u, p, FD_H / 2.0);
            let r = (16.0 * b - a) / 15.0;
            n2 = n2.max((r + mu * v).abs());
        }
        dev = n2 / den;
    }
    Ok(SpectralReport { index: *idx, eigenvalue: -mu, max_rel_dev: dev, probes_used: used, skipped, richardson })
}
