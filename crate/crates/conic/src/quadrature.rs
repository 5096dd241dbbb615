//! Reference product rules, positive cubature on separated sets, and
//! Marcinkiewicz–Zygmund sampling checks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ConicError, Result};
use crate::geometry::{ball_measure, build_separated, DomainKind, DomainSpec, PointXT, SeparatedSet, WeightSpec};
use crate::kernels::{Basis, KernelContext};
use crate::orthopoly::CutoffSpec;
use crate::orthopoly::{gauss_jacobi, JacobiParams};
use crate::par::chunked_sum;
use crate::sampling::{halton_point, stream_rng};

/// Product quadrature on the whole domain (both sheets).
#[derive(Debug, Clone)]
pub struct ReferenceRule {
    pub points: Vec<PointXT>,
    pub weights: Vec<f64>,
    /// Exact on Π_L^E ⊗ Π_L^E products up to total degree L.
    pub exact_degree: usize,
}

/// Product rule exact for polynomials of degree ≤ `level` (d = 2): Gauss–Jacobi in u = 2t² − 1,
/// equispaced angles, and for the solid a Gauss–Jacobi radial factor in 2‖y′‖² − 1.
pub fn reference_rule(dom: &DomainSpec, w: &WeightSpec, level: usize) -> Result<ReferenceRule> {
    if dom.d != 2 {
        return Err(ConicError::Param("reference rule is implemented for d = 2".into()));
    }
    let m = level / 2 + 1;
    let na = level + 1;
    let a = w.gamma - 0.5;
    let (ub, ball) = match dom.kind {
        DomainKind::Surface => (w.beta, None),
        DomainKind::Solid => (w.beta + w.mu, Some(gauss_jacobi(m, JacobiParams::new(w.mu - 0.5, 0.0)?)?)),
    };
    let urule = gauss_jacobi(m, JacobiParams::new(a, ub)?)?;
    let (radii, rw): (Vec<f64>, Vec<f64>) = match &ball {
        None => (vec![1.0], vec![1.0]),
        Some(b) => (b.nodes.iter().map(|v| ((1.0 + v) / 2.0).sqrt()).collect(), b.weights.clone()),
    };
    let mut points = Vec::with_capacity(2 * urule.len() * radii.len() * na);
    let mut weights = Vec::with_capacity(points.capacity());
    for (&u, &wu) in urule.nodes.iter().zip(&urule.weights) {
        let t = ((1.0 + u) / 2.0).sqrt();
        for (&r, &wr) in radii.iter().zip(&rw) {
            for k in 0..na {
                let ph = 2.0 * PI * (k as f64 + 0.5) / na as f64;
                let wt = wu * wr / (2.0 * na as f64);
                for sheet in [1.0, -1.0] {
                    let p0 = PointXT { x: vec![t * r * ph.cos(), t * r * ph.sin()], t: sheet * t };
                    points.push(dom.from_zero(&p0));
                    weights.push(wt);
                }
            }
        }
    }
    Ok(ReferenceRule { points, weights, exact_degree: level })
}

impl ReferenceRule {
    pub fn integrate(&self, f: impl Fn(&PointXT) -> f64 + Sync) -> Result<f64> {
        let vals: Vec<f64> = self.points.par_iter().map(&f).collect();
        let mut acc = 0.0;
        for (i, (v, w)) in vals.iter().zip(&self.weights).enumerate() {
            if !v.is_finite() {
                return Err(ConicError::Integration { node: i });
            }
            acc += v * w;
        }
        Ok(acc)
    }
}

pub fn reference_integrate(dom: &DomainSpec, w: &WeightSpec, f: impl Fn(&PointXT) -> f64 + Sync, level: usize) -> Result<f64> {
    reference_rule(dom, w, level)?.integrate(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleNode {
    pub x: Vec<f64>,
    pub t: f64,
    pub lambda: f64,
}

impl RuleNode {
    pub fn point(&self) -> PointXT {
        PointXT { x: self.x.clone(), t: self.t }
    }
}

/// Positive cubature exact on Π_degree^E.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubatureRule {
    pub domain: DomainSpec,
    pub weight: WeightSpec,
    pub degree: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub residual: f64,
    pub nodes: Vec<RuleNode>,
}

impl CubatureRule {
    pub fn points(&self) -> Vec<PointXT> {
        self.nodes.iter().map(RuleNode::point).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.lambda).collect()
    }

    pub fn integrate(&self, f: impl Fn(&PointXT) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.lambda * f(&n.point())).sum()
    }
}

/// ‖Σ λ_z Φ(z) − e₀‖₂ over an orthonormal basis of Π_n^E.
pub fn moment_residual(basis: &Basis, pts: &[PointXT], lambdas: &[f64]) -> f64 {
    let nb = basis.len();
    let mom = chunked_sum(pts.len(), nb, |r, acc| {
        let mut buf = Vec::new();
        for i in r {
            basis.eval_all_orthonormal(&pts[i], &mut buf);
            for (a, v) in acc.iter_mut().zip(&buf) {
                *a += lambdas[i] * v;
            }
        }
    });
    mom.iter()
        .enumerate()
        .map(|(k, v)| {
            let e = if k == 0 { v - 1.0 } else { *v };
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

/// Index of the antipode (−x,−t) of each node, if the set is evenly symmetric.
fn antipode_map(pts: &[PointXT]) -> Option<Vec<usize>> {
    let key = |x: &[f64], t: f64| -> Vec<i64> { x.iter().chain(std::iter::once(&t)).map(|v| (v * 1e9).round() as i64).collect() };
    let mut keyed: Vec<(Vec<i64>, usize)> = pts.iter().enumerate().map(|(i, p)| (key(&p.x, p.t), i)).collect();
    keyed.sort();
    pts.iter()
        .map(|p| {
            let neg: Vec<f64> = p.x.iter().map(|v| -v).collect();
            let k = key(&neg, -p.t);
            keyed.binary_search_by(|(kk, _)| kk.cmp(&k)).ok().map(|pos| keyed[pos].1)
        })
        .collect()
}

/// Weighted minimum-norm correction of the prior ν: λ = ν(1 + Φᵀy) with (Σ ν ΦΦᵀ) y = e₀ − Σ ν Φ.
fn min_norm_correction(basis: &Basis, pts: &[PointXT], prior: &[f64]) -> Result<Vec<f64>> {
    let nb = basis.len();
    // G = Σ ν a aᵀ assembled by blocks of scaled columns so the product runs as a dense gemm
    const BLOCK: usize = 1024;
    let mut g = DMatrix::<f64>::zeros(nb, nb);
    let mut r = DVector::<f64>::zeros(nb);
    for (cp, cn) in pts.chunks(BLOCK).zip(prior.chunks(BLOCK)) {
        let cols: Vec<Vec<f64>> = cp
            .par_iter()
            .map_init(Vec::new, |buf, p| {
                basis.eval_all_orthonormal(p, buf);
                buf.clone()
            })
            .collect();
        let mut b = DMatrix::<f64>::zeros(nb, cp.len());
        for (k, (col, &nu)) in cols.iter().zip(cn).enumerate() {
            let s = nu.sqrt();
            for (i, v) in col.iter().enumerate() {
                b[(i, k)] = s * v;
                r[i] += nu * v;
            }
        }
        g.gemm(1.0, &b, &b.transpose(), 1.0);
    }
    let mut rhs = -r;
    rhs[0] += 1.0;
    let chol = match g.clone().cholesky() {
        Some(c) => c,
        None => {
            let ridge = 1e-14 * g.trace().max(1e-300);
            for i in 0..nb {
                g[(i, i)] += ridge;
            }
            g.cholesky().ok_or_else(|| ConicError::Numeric("moment Gram matrix is singular".into()))?
        }
    };
    let y = chol.solve(&rhs);
    Ok(pts
        .par_iter()
        .zip(prior.par_iter())
        .map_init(Vec::new, |buf, (p, &nu)| {
            basis.eval_all_orthonormal(p, buf);
            let s: f64 = buf.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            nu * (1.0 + s)
        })
        .collect())
}

/// Lawson–Hanson active-set NNLS for min ‖Ax − b‖, x ≥ 0, with Tikhonov damping on the
/// passive-set normal equations.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let ncol = a.ncols();
    let mut x = DVector::<f64>::zeros(ncol);
    let mut passive = vec![false; ncol];
    let tol = 1e-12 * a.norm().max(1.0);
    let solve_passive = |passive: &[bool]| -> (Vec<usize>, DVector<f64>) {
        let idx: Vec<usize> = (0..ncol).filter(|&j| passive[j]).collect();
        let ap = a.select_columns(idx.iter());
        let mut m = ap.transpose() * &ap;
        for i in 0..idx.len() {
            m[(i, i)] += 1e-12;
        }
        let rhs = ap.transpose() * b;
        let z = m.clone().cholesky().map(|c| c.solve(&rhs)).unwrap_or_else(|| m.lu().solve(&rhs).unwrap_or(rhs));
        (idx, z)
    };
    for _ in 0..3 * ncol {
        let wv = a.transpose() * (b - a * &x);
        let cand = (0..ncol).filter(|&j| !passive[j]).max_by(|&i, &j| wv[i].total_cmp(&wv[j]));
        let Some(j) = cand else { break };
        if wv[j] <= tol {
            break;
        }
        passive[j] = true;
        loop {
            let (idx, z) = solve_passive(&passive);
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[k]));
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// NNLS is tried only when the dense moment matrix stays small.
const NNLS_MAX_NODES: usize = 4000;

/// One attempt on a fixed node set: min-norm positive correction, then NNLS.
pub fn cubature_on(dom: &DomainSpec, w: &WeightSpec, n: usize, nodes: &SeparatedSet, delta: f64, tol: f64) -> Result<CubatureRule> {
    let basis = Basis::new(dom, w, n)?;
    let pts = nodes.points();
    if pts.len() < basis.len() {
        return Err(ConicError::Infeasible { degree: n, residual: f64::INFINITY });
    }
    let prior = nodes.cell_masses(w);
    let mut lam = min_norm_correction(&basis, &pts, &prior)?;
    let mut res = moment_residual(&basis, &pts, &lam);
    let positive = |l: &[f64]| l.iter().all(|&v| v > 0.0);
    if !(positive(&lam) && res <= tol) && pts.len() <= NNLS_MAX_NODES {
        let nb = basis.len();
        let mut a = DMatrix::<f64>::zeros(nb, pts.len());
        let mut buf = Vec::new();
        for (j, p) in pts.iter().enumerate() {
            basis.eval_all_orthonormal(p, &mut buf);
            a.set_column(j, &DVector::from_column_slice(&buf));
        }
        let mut b = DVector::zeros(nb);
        b[0] = 1.0;
        let x: Vec<f64> = nnls(&a, &b).iter().copied().collect();
        let rx = moment_residual(&basis, &pts, &x);
        if positive(&x) && rx <= tol {
            lam = x;
            res = rx;
        } else if !positive(&lam) {
            res = res.max(rx.min(res));
        }
    }
    if !positive(&lam) || res > tol {
        return Err(ConicError::Infeasible { degree: n, residual: if positive(&lam) { res } else { f64::INFINITY } });
    }
    if let Some(anti) = antipode_map(&pts) {
        let sym: Vec<f64> = (0..lam.len()).map(|i| 0.5 * (lam[i] + lam[anti[i]])).collect();
        lam = sym;
        res = moment_residual(&basis, &pts, &lam);
    }
    Ok(CubatureRule {
        domain: *dom,
        weight: *w,
        degree: n,
        delta,
        epsilon: nodes.epsilon,
        residual: res,
        nodes: pts.into_iter().zip(lam).map(|(p, l)| RuleNode { x: p.x, t: p.t, lambda: l }).collect(),
    })
}

/// Separation ε = δ/n, capped at π/4.
pub fn separation(delta: f64, n: usize) -> f64 {
    (delta / n.max(1) as f64).min(PI / 4.0)
}

/// Positive cubature exact on Π_n^E over a symmetric δ/n-separated set, halving δ on failure.
pub fn cubature_solve(dom: &DomainSpec, w: &WeightSpec, n: usize, delta: f64, tol: f64) -> Result<CubatureRule> {
    let mut best = f64::INFINITY;
    for k in 0..3 {
        let dl = delta / f64::from(1u32 << k);
        let nodes = build_separated(dom, separation(dl, n))?;
        match cubature_on(dom, w, n, &nodes, dl, tol) {
            Ok(r) => return Ok(r),
            Err(ConicError::Infeasible { residual, .. }) => best = best.min(residual),
            Err(e) => return Err(e),
        }
    }
    Err(ConicError::Infeasible { degree: n, residual: best })
}

/// Ratios λ_z / w(c(z, δ/n)) over every `stride`-th node.
pub fn ball_ratios(rule: &CubatureRule, stride: usize) -> Result<Vec<f64>> {
    let r = separation(rule.delta, rule.degree);
    rule.nodes
        .par_iter()
        .step_by(stride.max(1))
        .map(|n| Ok(n.lambda / ball_measure(&rule.domain, &rule.weight, &n.point(), r)?))
        .collect()
}

/// K quasi-random points in node `i`'s cell, on the set's domain.
pub fn cell_samples(s: &SeparatedSet, i: usize, k: usize) -> Vec<PointXT> {
    let c = s.cell(i);
    let sheet = if s.nodes[i].t < 0.0 { -1.0 } else { 1.0 };
    (0..k as u64)
        .map(|q| {
            let h = halton_point(q, 3);
            let th = c.theta.0 + h[0] * (c.theta.1 - c.theta.0);
            let ph = c.phi.0 + h[1] * (c.phi.1 - c.phi.0);
            let r = match s.domain.kind {
                DomainKind::Surface => 1.0,
                DomainKind::Solid => (c.arc_r.0 + h[2] * (c.arc_r.1 - c.arc_r.0)).sin(),
            };
            let t = th.cos();
            let p0 = PointXT { x: vec![t * r * ph.cos(), t * r * ph.sin()], t: sheet * t };
            s.domain.from_zero(&p0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MzReport {
    pub degree: usize,
    pub delta: f64,
    pub p: f64,
    pub trials: usize,
    pub cells: usize,
    /// max over trials of Σ_cells max|f|^p w(cell) / ‖f‖_p^p
    pub upper: f64,
    /// max over trials of ‖f‖_p^p / Σ_cells min|f|^p w(cell)
    pub lower: f64,
}

/// Samples per cell for extrema.
pub const MZ_SAMPLES: usize = 16;

/// Marcinkiewicz–Zygmund ratios for random f ∈ Π_n^E over the cells of `nodes`; p ∈ {1, 2}.
#[allow(clippy::too_many_arguments)]
pub fn mz_check(dom: &DomainSpec, w: &WeightSpec, n: usize, nodes: &SeparatedSet, delta: f64, p: f64, trials: usize, seed: u64) -> Result<MzReport> {
    if p != 1.0 && p != 2.0 {
        return Err(ConicError::Param(format!("mz_check supports p = 1 or 2, got {p}")));
    }
    let basis = Basis::new(dom, w, n)?;
    let nb = basis.len();
    let mut rng = stream_rng(seed, 0x4d5a);
    let coeffs: Vec<Vec<f64>> = (0..trials).map(|_| (0..nb).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let eval = |buf: &[f64], c: &[f64]| -> f64 { buf.iter().zip(c).map(|(a, b)| a * b).sum::<f64>().abs().powf(p) };
    let norms: Vec<f64> = if p == 2.0 {
        coeffs.iter().map(|c| c.iter().map(|v| v * v).sum()).collect()
    } else {
        let rr = reference_rule(dom, w, 2 * n + 8)?;
        let mut acc = vec![0.0; trials];
        let mut buf = Vec::new();
        for (pt, wt) in rr.points.iter().zip(&rr.weights) {
            basis.eval_all_orthonormal(pt, &mut buf);
            for (a, c) in acc.iter_mut().zip(&coeffs) {
                *a += wt * eval(&buf, c);
            }
        }
        acc
    };
    let masses = nodes.cell_masses(w);
    // hi[k] and lo[k] packed side by side
    let acc = chunked_sum(nodes.len(), 2 * trials, |r, acc| {
        let mut buf = Vec::new();
        for i in r {
            let mut mx = vec![0.0f64; trials];
            let mut mn = vec![f64::INFINITY; trials];
            let mut samples = cell_samples(nodes, i, MZ_SAMPLES);
            samples.push(nodes.nodes[i].point());
            for s in &samples {
                basis.eval_all_orthonormal(s, &mut buf);
                for (k, c) in coeffs.iter().enumerate() {
                    let v = eval(&buf, c);
                    mx[k] = mx[k].max(v);
                    mn[k] = mn[k].min(v);
                }
            }
            for k in 0..trials {
                acc[k] += masses[i] * mx[k];
                acc[trials + k] += masses[i] * mn[k];
            }
        }
    });
    let (hi, lo) = acc.split_at(trials);
    let upper = (0..trials).map(|k| hi[k] / norms[k]).fold(0.0, f64::max);
    let lower = (0..trials).map(|k| norms[k] / lo[k]).fold(0.0, f64::max);
    Ok(MzReport { degree: n, delta, p, trials, cells: nodes.len(), upper, lower })
}

/// ∫ |L_n^E(p, q)| w(q) dq on a reference rule of the given level.
/// The kernel sees q only through (⟨x,y⟩, s², ‖y‖²), so repeated keys are evaluated once;
/// for a centre on the axis x = 0 this collapses the angular and sheet sums.
pub fn localized_l1(ctx: &KernelContext, n: usize, c: &CutoffSpec, p: &PointXT, level: usize) -> Result<f64> {
    let rule = reference_rule(&ctx.dom, &ctx.w, level)?;
    let key = |q: &PointXT| {
        let r = |v: f64| (v * 1e12).round() as i64;
        (r(crate::geometry::dot(&p.x, &q.x)), r(q.t * q.t), r(q.norm_x2()))
    };
    let mut groups: std::collections::BTreeMap<(i64, i64, i64), (usize, f64)> = std::collections::BTreeMap::new();
    for (i, (q, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        groups.entry(key(q)).or_insert((i, 0.0)).1 += w;
    }
    let reps: Vec<(usize, f64)> = groups.into_values().collect();
    let vals: Vec<f64> = reps
        .par_iter()
        .map(|&(i, w)| ctx.localized(n, c, p, &rule.points[i]).map(|v| v.abs() * w))
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::BasisIndex;

    fn surface(rho: f64, g: f64) -> (DomainSpec, WeightSpec) {
        let d = DomainSpec::surface(2, rho).unwrap();
        let w = WeightSpec::surface(&d, g).unwrap();
        (d, w)
    }

    fn solid(rho: f64, g: f64, m: f64) -> (DomainSpec, WeightSpec) {
        let d = DomainSpec::solid(2, rho).unwrap();
        let w = WeightSpec::solid(&d, g, m).unwrap();
        (d, w)
    }

    #[test]
    fn constant_integrates_to_one() {
        for (d, w) in [surface(0.0, 0.5), surface(0.5, 0.0), solid(0.0, 0.5, 1.0), solid(0.5, 0.0, 0.0)] {
            let v = reference_integrate(&d, &w, |_| 1.0, 4).unwrap();
            assert!((v - 1.0).abs() < 1e-13);
        }
        // general β on the surface as well
        let d = DomainSpec::surface(2, 0.0).unwrap();
        let w = WeightSpec::new(&d, 0.7, 0.3, 0.0).unwrap();
        assert!((reference_integrate(&d, &w, |_| 1.0, 2).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn reference_matches_weight_density() {
        // closed-form t-marginals of the weight
        let (d, w) = surface(0.0, 0.5);
        let v = reference_integrate(&d, &w, |p| p.t * p.t, 4).unwrap();
        // density ∝ |t|(1−t²)^0 on the cone with d = 2: ∫ t³ dt / ∫ t dt over [0,1] = 1/2
        assert!((v - 0.5).abs() < 1e-13);
        let (d, w) = solid(0.0, 0.5, 0.5);
        // solid: density ∝ |t|^3 in t after integrating the disk, so E[t²] = (1/6)/(1/4) = 2/3
        let v = reference_integrate(&d, &w, |p| p.t * p.t, 4).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn non_finite_integrand_reports_node() {
        let (d, w) = surface(0.0, 0.5);
        let e = reference_integrate(&d, &w, |p| if p.t < 0.0 { f64::NAN } else { 1.0 }, 2).unwrap_err();
        assert!(matches!(e, ConicError::Integration { .. }));
    }

    #[test]
    fn basis_gram_is_identity() {
        for (d, w) in [surface(0.0, 0.5), surface(0.5, 1.0), solid(0.0, 0.5, 0.5), solid(0.5, 1.0, 0.0)] {
            let b = Basis::new(&d, &w, 6).unwrap();
            let rr = reference_rule(&d, &w, 12).unwrap();
            let nb = b.len();
            let mut g = vec![0.0; nb * nb];
            let mut buf = Vec::new();
            for (p, wt) in rr.points.iter().zip(&rr.weights) {
                b.eval_all_orthonormal(p, &mut buf);
                for i in 0..nb {
                    for j in 0..nb {
                        g[i * nb + j] += wt * buf[i] * buf[j];
                    }
                }
            }
            for i in 0..nb {
                for j in 0..nb {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((g[i * nb + j] - e).abs() < 1e-10, "{:?} ({i},{j}) {}", d.kind, g[i * nb + j]);
                }
            }
        }
    }

    #[test]
    fn basis_element_checks() {
        let (d, w) = surface(0.0, 0.5);
        let b = Basis::new(&d, &w, 3).unwrap();
        let idx = BasisIndex { n: 3, k: 1, j: 0, m: 1, sin: false };
        let nrm = b.norm_of(&idx).unwrap();
        let sq = reference_integrate(&d, &w, |p| b.eval(&idx, p).unwrap().powi(2) / nrm, 6).unwrap();
        assert!((sq - 1.0).abs() < 1e-10);
        let mean = reference_integrate(&d, &w, |p| b.eval(&idx, p).unwrap(), 6).unwrap();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn nnls_small_problem() {
        // min ‖Ax − b‖ with x ≥ 0: solution clips the negative component
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, -1.0]);
        let x = nnls(&a, &b);
        assert!((x[0] - 2.0).abs() < 1e-9 && x[1] == 0.0);
    }

    #[test]
    fn degree_zero_rule() {
        let (d, w) = surface(0.0, 0.5);
        let r = cubature_solve(&d, &w, 0, 0.25, 1e-10).unwrap();
        let s: f64 = r.lambdas().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(r.lambdas().iter().all(|&l| l > 0.0));
    }

    #[test]
    fn surface_rule_is_exact_and_positive() {
        let (d, w) = surface(0.0, 0.5);
        let r = cubature_solve(&d, &w, 8, 0.25, 1e-8).unwrap();
        assert!(r.residual <= 1e-8);
        assert!(r.lambdas().iter().all(|&l| l > 0.0));
        assert!((r.lambdas().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let b = Basis::new(&d, &w, 8).unwrap();
        let mut rng = stream_rng(3, 1);
        let rr = reference_rule(&d, &w, 8).unwrap();
        for _ in 0..20 {
            let c: Vec<f64> = (0..b.len()).map(|_| rng.sample(StandardNormal)).collect();
            let f = |p: &PointXT| {
                let mut buf = Vec::new();
                b.eval_all_orthonormal(p, &mut buf);
                buf.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
            };
            let exact = rr.integrate(f).unwrap();
            assert!((r.integrate(f) - exact).abs() < 1e-8);
        }
        // symmetric weights on antipodal nodes
        let anti = antipode_map(&r.points()).unwrap();
        for (i, &j) in anti.iter().enumerate() {
            assert!((r.nodes[i].lambda - r.nodes[j].lambda).abs() < 1e-15);
        }
    }

    #[test]
    fn rule_round_trips_json() {
        let (d, w) = solid(0.5, 0.5, 0.5);
        let r = cubature_solve(&d, &w, 2, 0.5, 1e-10).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: CubatureRule = serde_json::from_str(&s).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn mz_constant_function_is_one() {
        let (d, w) = surface(0.0, 0.5);
        let s = build_separated(&d, 0.25).unwrap();
        let m = mz_check(&d, &w, 0, &s, 1.0, 2.0, 1, 1).unwrap();
        assert!((m.upper - 1.0).abs() < 1e-10 && (m.lower - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cell_samples_stay_in_domain_and_cell_masses_sum_to_one() {
        for (d, w) in [surface(0.5, 0.5), solid(0.5, 0.5, 0.5)] {
            let s = build_separated(&d, 0.3).unwrap();
            let tot: f64 = s.cell_masses(&w).iter().sum();
            assert!((tot - 1.0).abs() < 1e-10);
            for i in (0..s.len()).step_by(7) {
                for p in cell_samples(&s, i, 4) {
                    d.validate(&p).unwrap();
                    assert_eq!(p.t.signum(), s.nodes[i].t.signum());
                }
            }
        }
    }
}
