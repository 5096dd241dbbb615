//! Jacobi and Gegenbauer polynomials, Gauss–Jacobi rules, cut-off functions
//! and the one-dimensional localized kernel.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ConicError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiParams {
    pub alpha: f64,
    pub beta: f64,
}

impl JacobiParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > -1.0 && beta > -1.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(ConicError::Param(format!(
                "Jacobi parameters must exceed -1, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// log of c'_{α,β}, the constant making c' w_{α,β} a probability measure.
    pub fn ln_cprime(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        ln_gamma(a + b + 2.0)
            - ln_gamma(a + 1.0)
            - ln_gamma(b + 1.0)
            - (a + b + 1.0) * std::f64::consts::LN_2
    }

    pub fn cprime(&self) -> f64 {
        self.ln_cprime().exp()
    }

    /// P_n(1) = (α+1)_n / n!
    pub fn value_at_one(&self, n: usize) -> f64 {
        (ln_poch(self.alpha + 1.0, n) - ln_poch(1.0, n)).exp()
    }
}

/// ln of the Pochhammer symbol (a)_n for a > 0.
pub fn ln_poch(a: f64, n: usize) -> f64 {
    (0..n).map(|i| (a + i as f64).ln()).sum()
}

/// Fills `out[k] = P_k^{(α,β)}(x)` for k = 0..=n.
pub fn jacobi_all(n: usize, p: JacobiParams, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if n == 0 {
        return;
    }
    let (a, b) = (p.alpha, p.beta);
    out.push((a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0);
    let ab = a + b;
    let a2b2 = a * a - b * b;
    for k in 2..=n {
        let k = k as f64;
        let c = 2.0 * k + ab;
        let den = 2.0 * k * (k + ab) * (c - 2.0);
        let p1 = (c - 1.0) * (c * (c - 2.0) * x + a2b2);
        let p2 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
        let len = out.len();
        let v = (p1 * out[len - 1] - p2 * out[len - 2]) / den;
        out.push(v);
    }
}

pub fn jacobi_eval(n: usize, p: JacobiParams, x: f64) -> f64 {
    let mut buf = Vec::with_capacity(n + 1);
    jacobi_all(n, p, x, &mut buf);
    buf[n]
}

/// log of h_n^{(α,β)} = c'_{α,β} ∫ P_n² w_{α,β}.
pub fn ln_jacobi_norm(n: usize, p: JacobiParams) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (a, b) = (p.alpha, p.beta);
    let nf = n as f64;
    ln_poch(a + 1.0, n) + ln_poch(b + 1.0, n) + (a + b + nf + 1.0).ln()
        - ln_poch(1.0, n)
        - ln_poch(a + b + 2.0, n)
        - (a + b + 2.0 * nf + 1.0).ln()
}

pub fn jacobi_norm(n: usize, p: JacobiParams) -> f64 {
    ln_jacobi_norm(n, p).exp()
}

/// Fills `out[k] = C_k^λ(x)` for k = 0..=n.
pub fn gegenbauer_all(n: usize, lambda: f64, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if n == 0 {
        return;
    }
    out.push(2.0 * lambda * x);
    for k in 2..=n {
        let kf = k as f64;
        let v = (2.0 * x * (kf + lambda - 1.0) * out[k - 1] - (kf + 2.0 * lambda - 2.0) * out[k - 2]) / kf;
        out.push(v);
    }
}

/// Z_n^λ(x) = ((n+λ)/λ) C_n^λ(x).
pub fn gegenbauer_z(n: usize, lambda: f64, x: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(ConicError::Param(format!("Gegenbauer index must be positive, got {lambda}")));
    }
    let mut buf = Vec::with_capacity(n + 1);
    gegenbauer_all(n, lambda, x, &mut buf);
    Ok((n as f64 + lambda) / lambda * buf[n])
}

/// Fills `out[k] = Z_k^λ(x)` for k = 0..=n; λ > 0 is assumed.
pub fn gegenbauer_z_all(n: usize, lambda: f64, x: f64, out: &mut Vec<f64>) {
    gegenbauer_all(n, lambda, x, out);
    for (k, v) in out.iter_mut().enumerate() {
        *v *= (k as f64 + lambda) / lambda;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadRule1D {
    pub alpha: f64,
    pub beta: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Two-point endpoint average, the λ→0 limit of the normalized (1−v²)^{λ−1} measure.
    pub fn endpoint_average() -> Self {
        Self { alpha: -1.0, beta: -1.0, nodes: vec![-1.0, 1.0], weights: vec![0.5, 0.5] }
    }
}

/// m-point Gauss rule for the normalized Jacobi measure (Golub–Welsch).
pub fn gauss_jacobi(m: usize, p: JacobiParams) -> Result<QuadRule1D> {
    if m == 0 {
        return Err(ConicError::Param("quadrature size must be at least 1".into()));
    }
    let (a, b) = (p.alpha, p.beta);
    let ab = a + b;
    let mut jm = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let n = i as f64;
        let c = 2.0 * n + ab;
        jm[(i, i)] = if i == 0 {
            (b - a) / (ab + 2.0)
        } else {
            (b * b - a * a) / (c * (c + 2.0))
        };
        if i + 1 < m {
            let k = n + 1.0;
            let c = 2.0 * k + ab;
            let off = if i == 0 {
                (4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))).sqrt()
            } else {
                (4.0 * k * (k + a) * (k + b) * (k + ab) / (c * c * (c + 1.0) * (c - 1.0))).sqrt()
            };
            jm[(i, i + 1)] = off;
            jm[(i + 1, i)] = off;
        }
    }
    let eig = SymmetricEigen::try_new(jm, f64::EPSILON, 10_000).ok_or_else(|| {
        ConicError::Numeric(format!("Golub–Welsch eigen-solver did not converge for m={m} after 10000 sweeps"))
    })?;
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(QuadRule1D {
        alpha: a,
        beta: b,
        nodes: pairs.iter().map(|p| p.0.clamp(-1.0 + 1e-300, 1.0 - 1e-16)).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    })
}

/// Gauss–Legendre rule on [lo, hi] with unnormalized weights.
pub fn gauss_legendre_on(m: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = gauss_jacobi(m, JacobiParams { alpha: 0.0, beta: 0.0 }).expect("legendre rule");
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let nodes = rule.nodes.iter().map(|x| mid + half * x).collect();
    let weights = rule.weights.iter().map(|w| 2.0 * half * w).collect();
    (nodes, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffKind {
    TypeA,
    TypeB,
    FrameWindow,
}

/// Admissible cut-off built from the C^∞ step ν(s) = h(s)/(h(s)+h(1−s)), h(s) = e^{−1/s}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub kind: CutoffKind,
    pub smoothness: u32,
}

impl CutoffSpec {
    pub fn type_a() -> Self {
        Self { kind: CutoffKind::TypeA, smoothness: 8 }
    }

    pub fn type_b() -> Self {
        Self { kind: CutoffKind::TypeB, smoothness: 8 }
    }

    pub fn frame_window() -> Self {
        Self { kind: CutoffKind::FrameWindow, smoothness: 8 }
    }

    /// â(t). TypeB and FrameWindow share the profile √(b(t) − b(2t)), supported on [1/2, 2].
    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            CutoffKind::TypeA => step_b(t),
            CutoffKind::TypeB | CutoffKind::FrameWindow => (step_b(t) - step_b(2.0 * t)).max(0.0).sqrt(),
        }
    }

    /// g_j(t) with g_0 = √b and g_j(t)² = b(t/2^j) − b(t/2^{j−1}).
    pub fn window(&self, j: usize, t: f64) -> f64 {
        window_eval(j, t)
    }

    /// Support of â as a closed interval.
    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            CutoffKind::TypeA => (0.0, 2.0),
            _ => (0.5, 2.0),
        }
    }
}

fn h_exp(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// Smooth monotone step: 0 for s ≤ 0, 1 for s ≥ 1, ν(s) + ν(1−s) = 1.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let a = h_exp(s);
    let b = h_exp(1.0 - s);
    a / (a + b)
}

/// TypeA cut-off b: 1 on [0,1], 1 − ν(t−1) on [1,2], 0 beyond.
pub fn step_b(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        smooth_step(2.0 - t)
    }
}

pub fn cutoff_eval(c: &CutoffSpec, t: f64) -> f64 {
    c.eval(t)
}

pub fn window_eval(j: usize, t: f64) -> f64 {
    if j == 0 {
        return step_b(t).sqrt();
    }
    let s = 2f64.powi(j as i32);
    (step_b(t / s) - step_b(2.0 * t / s)).max(0.0).sqrt()
}

/// L_n^{(α,β)}(t) = Σ_j â(j/n) P_j(t) P_j(1) / h_j.
pub fn kernel1d(n: usize, p: JacobiParams, c: &CutoffSpec, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(ConicError::Param("kernel1d needs n >= 1".into()));
    }
    let top = 2 * n;
    let mut pt = Vec::new();
    jacobi_all(top, p, t, &mut pt);
    let mut acc = 0.0;
    for (j, v) in pt.iter().enumerate() {
        let a = c.eval(j as f64 / n as f64);
        if a == 0.0 {
            continue;
        }
        acc += a * v * p.value_at_one(j) / jacobi_norm(j, p);
    }
    Ok(acc)
}
