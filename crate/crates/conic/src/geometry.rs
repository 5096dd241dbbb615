//! Domains, points, intrinsic distances, weights, ball measures and
//! maximal separated node sets.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ConicError, Result};
use crate::orthopoly::{gauss_jacobi, gauss_legendre_on, JacobiParams};
use crate::sampling::halton_point;

pub const MEMBER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Surface,
    Solid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub d: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointXT {
    pub x: Vec<f64>,
    pub t: f64,
}

impl PointXT {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self { x, t }
    }

    pub fn norm_x2(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum()
    }

    pub fn sheet(&self) -> i8 {
        if self.t >= 0.0 {
            1
        } else {
            -1
        }
    }

    /// (x, t) ↦ (x, −t)
    pub fn flip_t(&self) -> Self {
        Self { x: self.x.clone(), t: -self.t }
    }

    /// (x, t) ↦ (−x, −t)
    pub fn antipode(&self) -> Self {
        Self { x: self.x.iter().map(|v| -v).collect(), t: -self.t }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sqrt_pos(v: f64) -> f64 {
    v.max(0.0).sqrt()
}

impl DomainSpec {
    pub fn new(kind: DomainKind, d: usize, rho: f64) -> Result<Self> {
        if d < 2 {
            return Err(ConicError::Param(format!("base dimension must be >= 2, got {d}")));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(ConicError::Param(format!("rho must be >= 0, got {rho}")));
        }
        Ok(Self { kind, d, rho })
    }

    pub fn surface(d: usize, rho: f64) -> Result<Self> {
        Self::new(DomainKind::Surface, d, rho)
    }

    pub fn solid(d: usize, rho: f64) -> Result<Self> {
        Self::new(DomainKind::Solid, d, rho)
    }

    pub fn at_rho(&self, rho: f64) -> Self {
        Self { rho, ..*self }
    }

    pub fn t_max(&self) -> f64 {
        (1.0 + self.rho * self.rho).sqrt()
    }

    pub fn validate(&self, p: &PointXT) -> Result<()> {
        if p.x.len() != self.d {
            return Err(ConicError::Domain(format!("x has dimension {}, expected {}", p.x.len(), self.d)));
        }
        let at = p.t.abs();
        if at < self.rho - MEMBER_TOL || at > self.t_max() + MEMBER_TOL {
            return Err(ConicError::Domain(format!("|t| = {at} outside [{}, {}]", self.rho, self.t_max())));
        }
        let r2 = p.norm_x2();
        let s2 = p.t * p.t - self.rho * self.rho;
        let ok = match self.kind {
            DomainKind::Surface => (r2 - s2).abs() <= MEMBER_TOL.max(1e-12 * s2.abs()) * 10.0,
            DomainKind::Solid => r2 <= s2 + MEMBER_TOL,
        };
        if ok {
            Ok(())
        } else {
            Err(ConicError::Domain(format!("‖x‖² = {r2} incompatible with t² − ρ² = {s2}")))
        }
    }

    pub fn point(&self, x: Vec<f64>, t: f64) -> Result<PointXT> {
        let p = PointXT::new(x, t);
        self.validate(&p)?;
        Ok(p)
    }

    /// The image of `p` on the ρ = 0 domain.
    pub fn to_zero(&self, p: &PointXT) -> PointXT {
        if self.rho == 0.0 {
            return p.clone();
        }
        let s = sqrt_pos(p.t * p.t - self.rho * self.rho);
        PointXT { x: p.x.clone(), t: if p.t >= 0.0 { s } else { -s } }
    }

    /// The image of a ρ = 0 point on this domain.
    pub fn from_zero(&self, p: &PointXT) -> PointXT {
        if self.rho == 0.0 {
            return p.clone();
        }
        let s = (p.t * p.t + self.rho * self.rho).sqrt();
        PointXT { x: p.x.clone(), t: if p.t >= 0.0 { s } else { -s } }
    }
}

/// Maps (x,t) at `from_rho` to (x, sign(t)·√(t² − from² + to²)) at `to_rho`.
pub fn rho_lift(p: &PointXT, from_rho: f64, to_rho: f64) -> Result<PointXT> {
    if from_rho == to_rho {
        return Ok(p.clone());
    }
    let arg = p.t * p.t - from_rho * from_rho + to_rho * to_rho;
    if arg < -MEMBER_TOL {
        return Err(ConicError::Domain(format!("negative radicand {arg} in rho lift")));
    }
    let s = sqrt_pos(arg);
    Ok(PointXT { x: p.x.clone(), t: if p.t >= 0.0 { s } else { -s } })
}

fn clamped_acos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

/// Cosine of the ρ = 0 distance; defined for any pair (a pseudo-metric across sheets).
pub fn cos_distance0(kind: DomainKind, p: &PointXT, q: &PointXT) -> f64 {
    let mut c = dot(&p.x, &q.x) + sqrt_pos(1.0 - p.t * p.t) * sqrt_pos(1.0 - q.t * q.t);
    if kind == DomainKind::Solid {
        c += sqrt_pos(p.t * p.t - p.norm_x2()) * sqrt_pos(q.t * q.t - q.norm_x2());
    }
    c
}

pub fn distance0(kind: DomainKind, p: &PointXT, q: &PointXT) -> f64 {
    clamped_acos(cos_distance0(kind, p, q))
}

/// Intrinsic distance on the domain; for ρ > 0 both points must share a sheet.
pub fn distance(dom: &DomainSpec, p: &PointXT, q: &PointXT) -> Result<f64> {
    if dom.rho > 0.0 && p.sheet() != q.sheet() {
        return Err(ConicError::CrossSheet);
    }
    let r2 = dom.rho * dom.rho;
    let mut c = dot(&p.x, &q.x) + sqrt_pos(1.0 + r2 - p.t * p.t) * sqrt_pos(1.0 + r2 - q.t * q.t);
    if dom.kind == DomainKind::Solid {
        c += sqrt_pos(p.t * p.t - r2 - p.norm_x2()) * sqrt_pos(q.t * q.t - r2 - q.norm_x2());
    }
    Ok(clamped_acos(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub normalization: f64,
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// ln of the surface area of S^{d−1}.
fn ln_sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    (2.0f64).ln() + h * PI.ln() - ln_gamma(h)
}

impl WeightSpec {
    pub fn new(dom: &DomainSpec, beta: f64, gamma: f64, mu: f64) -> Result<Self> {
        let d = dom.d as f64;
        if !(gamma > -0.5) {
            return Err(ConicError::Param(format!("gamma must exceed -1/2, got {gamma}")));
        }
        let beta_min = if dom.rho > 0.0 { -0.5 } else { -d / 2.0 };
        let ln_total = match dom.kind {
            DomainKind::Surface => {
                if !(beta > beta_min) {
                    return Err(ConicError::Param(format!("beta must exceed {beta_min}, got {beta}")));
                }
                ln_sphere_area(dom.d) + ln_beta(beta + d / 2.0, gamma + 0.5)
            }
            DomainKind::Solid => {
                if !(mu > -0.5) {
                    return Err(ConicError::Param(format!("mu must exceed -1/2, got {mu}")));
                }
                if !(beta > beta_min) || !(beta + mu + d / 2.0 > 0.0) {
                    return Err(ConicError::Param(format!("beta = {beta} not integrable")));
                }
                ln_beta(beta + mu + d / 2.0, gamma + 0.5)
                    + ln_sphere_area(dom.d)
                    + ln_beta(d / 2.0, mu + 0.5)
                    - (2.0f64).ln()
            }
        };
        Ok(Self { beta, gamma, mu, normalization: (-ln_total).exp() })
    }

    /// w_{0,γ} on the surface.
    pub fn surface(dom: &DomainSpec, gamma: f64) -> Result<Self> {
        Self::new(dom, 0.0, gamma, 0.0)
    }

    /// W_{1/2,γ,μ} on the solid.
    pub fn solid(dom: &DomainSpec, gamma: f64, mu: f64) -> Result<Self> {
        Self::new(dom, 0.5, gamma, mu)
    }

    /// Whether the addition-formula kernels apply.
    pub fn kernel_ready(&self, dom: &DomainSpec) -> bool {
        match dom.kind {
            DomainKind::Surface => self.beta == 0.0 && self.gamma >= 0.0,
            DomainKind::Solid => self.beta == 0.5 && self.gamma >= 0.0 && self.mu >= 0.0,
        }
    }
}

fn spow(base: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if base <= 0.0 {
        if e > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        base.powf(e)
    }
}

/// Normalized weight density at `p` (+∞ on a singular boundary).
pub fn weight_eval(dom: &DomainSpec, w: &WeightSpec, p: &PointXT) -> f64 {
    let r2 = dom.rho * dom.rho;
    let s2 = p.t * p.t - r2;
    let mut v = w.normalization * p.t.abs() * spow(s2, w.beta - 0.5) * spow(1.0 + r2 - p.t * p.t, w.gamma - 0.5);
    if dom.kind == DomainKind::Solid {
        v *= spow(s2 - p.norm_x2(), w.mu - 0.5);
    }
    v
}

/// w(n; ·): the surface function (t²−ρ²+n⁻²)^β(1+ρ²−t²+n⁻²)^γ, or its solid
/// analogue (1+ρ²−t²+n⁻²)^γ(t²−ρ²−‖x‖²+n⁻²)^μ.
pub fn wn_eval(dom: &DomainSpec, w: &WeightSpec, n: f64, p: &PointXT) -> f64 {
    let r2 = dom.rho * dom.rho;
    let e = 1.0 / (n * n);
    let s2 = p.t * p.t - r2;
    match dom.kind {
        DomainKind::Surface => spow(s2 + e, w.beta) * spow(1.0 + r2 - p.t * p.t + e, w.gamma),
        DomainKind::Solid => spow(1.0 + r2 - p.t * p.t + e, w.gamma) * spow(s2 - p.norm_x2() + e, w.mu),
    }
}

/// Comparison quantity for the weighted measure of a ball of radius r.
pub fn ball_formula(dom: &DomainSpec, w: &WeightSpec, p: &PointXT, r: f64) -> f64 {
    let r2 = dom.rho * dom.rho;
    let s2 = p.t * p.t - r2;
    let rr = r * r;
    let g = spow(1.0 + r2 - p.t * p.t + rr, w.gamma);
    match dom.kind {
        DomainKind::Surface => r.powi(dom.d as i32) * spow(s2 + rr, w.beta) * g,
        // the ball factor (r/t)^d eats one power of t, hence β − 1/2
        DomainKind::Solid => r.powi(dom.d as i32 + 1) * spow(s2 + rr, w.beta - 0.5) * g * spow(s2 - p.norm_x2() + rr, w.mu),
    }
}

fn composite(lo: f64, hi: f64, panels: usize, order: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let (gx, gw) = gauss_legendre_on(order, 0.0, 1.0);
    let h = (hi - lo) / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let a = lo + k as f64 * h;
        for (x, wt) in gx.iter().zip(&gw) {
            acc += wt * h * f(a + x * h);
        }
    }
    acc
}

/// ∫ h^{2μ} dσ over the spherical cap of angular radius ψ around the lift of x′,
/// intersected with the upper hemisphere (h = height).
fn ball_cap(xp_norm: f64, psi: f64, mu: f64) -> f64 {
    if psi <= 0.0 {
        return 0.0;
    }
    let a = xp_norm.clamp(0.0, 1.0).asin();
    let psi = psi.min(PI);
    composite(0.0, psi, 8, 12, |al| {
        let (sa, ca) = al.sin_cos();
        let den = sa * a.sin();
        let phim = if den <= 1e-300 {
            if ca * a.cos() >= 0.0 {
                PI
            } else {
                0.0
            }
        } else {
            clamped_acos(-ca * a.cos() / den)
        };
        let inner = if mu == 0.0 {
            2.0 * phim
        } else {
            2.0 * composite(0.0, phim, 2, 12, |ph| spow(ca * a.cos() + sa * a.sin() * ph.cos(), 2.0 * mu))
        };
        inner * sa
    })
}

/// Normalized weighted measure of the same-sheet ball c(p, r); d = 2.
pub fn ball_measure(dom: &DomainSpec, w: &WeightSpec, p: &PointXT, r: f64) -> Result<f64> {
    if dom.d != 2 {
        return Err(ConicError::Param("ball_measure is implemented for d = 2".into()));
    }
    dom.validate(p)?;
    let q = dom.to_zero(p);
    let t = q.t.abs().min(1.0);
    let th = t.acos();
    let lo = (th - r).max(0.0);
    let hi = (th + r).min(FRAC_PI_2);
    let cr = r.cos();
    let st = sqrt_pos(1.0 - t * t);
    let v = match dom.kind {
        DomainKind::Surface => composite(lo, hi, 48, 10, |ph| {
            let (sp, s) = ph.sin_cos();
            let c = t * s;
            let e = st * sp;
            let arc = if c <= 1e-300 {
                if e >= cr {
                    2.0 * PI
                } else {
                    0.0
                }
            } else {
                2.0 * clamped_acos((cr - e) / c)
            };
            spow(s, 2.0 * w.beta + 1.0) * spow(sp, 2.0 * w.gamma) * arc
        }),
        DomainKind::Solid => {
            let xp = if t > 0.0 { (q.norm_x2().sqrt() / t).min(1.0) } else { 0.0 };
            composite(lo, hi, 32, 8, |ph| {
                let (sp, s) = ph.sin_cos();
                let c = t * s;
                let e = st * sp;
                let psi = if c <= 1e-300 {
                    if e >= cr {
                        PI
                    } else {
                        0.0
                    }
                } else {
                    clamped_acos((cr - e) / c)
                };
                spow(s, 2.0 * w.beta + 2.0 * w.mu + 1.0) * spow(sp, 2.0 * w.gamma) * ball_cap(xp, psi, w.mu)
            })
        }
    };
    Ok(w.normalization * v)
}

/// ∫_{θ0}^{θ1} |cos θ|^p sin^{2γ} θ dθ for 0 ≤ θ0 < θ1 ≤ π/2, with endpoint singularities absorbed.
pub fn band_integral(p: f64, gamma: f64, th0: f64, th1: f64) -> f64 {
    let left = if th0 <= 0.0 && gamma != 0.0 { 2.0 * gamma } else { 0.0 };
    let right = if th1 >= FRAC_PI_2 - 1e-15 && p != 0.0 { p } else { 0.0 };
    let jp = JacobiParams { alpha: right, beta: left };
    let rule = gauss_jacobi(24, jp).expect("band rule");
    let len = th1 - th0;
    let mass = ((right + left + 1.0) * (2.0f64).ln() + ln_beta(right + 1.0, left + 1.0)).exp();
    let mut acc = 0.0;
    for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
        let th = th0 + (1.0 + x) * len / 2.0;
        let mut g = spow(th.cos().abs(), p) * spow(th.sin(), 2.0 * gamma);
        if left != 0.0 {
            g /= ((1.0 + x) * len / 2.0).powf(left);
        }
        if right != 0.0 {
            g /= ((1.0 - x) * len / 2.0).powf(right);
        }
        acc += wt * mass * g;
    }
    acc * (len / 2.0).powf(1.0 + left + right)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub t: f64,
    pub tminus: f64,
    pub tplus: f64,
    pub epsj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub x: Vec<f64>,
    pub t: f64,
    pub band: usize,
    pub cell: usize,
}

impl Node {
    pub fn point(&self) -> PointXT {
        PointXT { x: self.x.clone(), t: self.t }
    }
}

/// Product cell of a node on the ρ = 0 domain (angles in radians, `r` in arcsin scale for the ball).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub theta: (f64, f64),
    pub phi: (f64, f64),
    pub arc_r: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedSet {
    pub domain: DomainSpec,
    pub epsilon: f64,
    pub bands: Vec<Band>,
    pub nodes: Vec<Node>,
}

/// Number of equispaced points on a circle of radius `radius` (in the unit ball metric scale)
/// keeping chord-distance 2·arcsin(radius·sin(π/M)) ≥ `sep`.
fn ring_count(radius: f64, sep: f64) -> usize {
    let s = (sep / 2.0).sin() / radius;
    if s > 1.0 || sep >= PI {
        return 1;
    }
    let m = (PI / s.asin() + 1e-12).floor() as usize;
    m.max(1)
}

/// Ball-metric spacing η with 2·arcsin(|t|·sin(η/2)) = ε, the exact same-band separation.
fn ball_spacing(eps: f64, t: f64) -> f64 {
    2.0 * ((eps / 2.0).sin() / t.abs()).min(1.0).asin()
}

fn ring_radii(epsj: f64) -> Vec<f64> {
    let k_max = (FRAC_PI_2 / epsj + 1e-12).floor() as usize;
    (0..=k_max).map(|k| (k as f64 * epsj).min(FRAC_PI_2)).collect()
}

fn surface_count(epsj: f64) -> usize {
    (((2.0 * PI / epsj) + 1e-12).floor() as usize).max(2)
}

/// 0 or 1 by the parity of the band index counted from the nearer rim; antipodal bands agree.
fn stagger(j: usize, n_bands: usize) -> f64 {
    (j.min(n_bands - 1 - j) % 2) as f64
}

pub fn band_count(eps: f64) -> usize {
    2 * (PI / (2.0 * eps)).floor() as usize
}

/// Maximal ε-separated, evenly symmetric node set (d = 2).
pub fn build_separated(dom: &DomainSpec, eps: f64) -> Result<SeparatedSet> {
    if dom.d != 2 {
        return Err(ConicError::Param("separated sets are constructed for d = 2".into()));
    }
    if !(eps > 0.0) || eps > PI / 4.0 + 1e-15 {
        return Err(ConicError::Param(format!("eps must lie in (0, π/4], got {eps}")));
    }
    let n_bands = band_count(eps);
    if n_bands < 2 {
        return Err(ConicError::Param(format!("eps = {eps} gives fewer than 2 bands")));
    }
    let h = PI / (2.0 * n_bands as f64);
    let mut bands = Vec::with_capacity(n_bands);
    let mut nodes = Vec::new();
    for j in 0..n_bands {
        let th = (2 * j + 1) as f64 * h;
        let t0 = th.cos();
        let epsj = PI * eps / (2.0 * t0.abs());
        let band0 = Band { t: t0, tminus: (th + h).cos(), tplus: (th - h).cos(), epsj };
        match dom.kind {
            DomainKind::Surface => {
                let m = surface_count(epsj);
                let shift = stagger(j, n_bands) * PI / m as f64;
                for k in 0..m {
                    let ph = 2.0 * PI * k as f64 / m as f64 + shift;
                    nodes.push(Node { x: vec![t0 * ph.cos(), t0 * ph.sin()], t: t0, band: j, cell: k });
                }
            }
            DomainKind::Solid => {
                let eta = ball_spacing(eps, t0);
                let mut cell = 0;
                for (ring, al) in ring_radii(eta).into_iter().enumerate() {
                    let r = al.sin();
                    let m = if ring == 0 { 1 } else { ring_count(r, eta) };
                    for k in 0..m {
                        let ph = 2.0 * PI * k as f64 / m as f64;
                        nodes.push(Node {
                            x: vec![t0 * r * ph.cos(), t0 * r * ph.sin()],
                            t: t0,
                            band: j,
                            cell,
                        });
                        cell += 1;
                    }
                }
            }
        }
        bands.push(band0);
    }
    let zero = SeparatedSet { domain: dom.at_rho(0.0), epsilon: eps, bands, nodes };
    Ok(zero.lifted(dom.rho))
}

impl SeparatedSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Same set on the domain with parameter `rho` (bands and nodes mapped by the ρ-lift).
    pub fn lifted(&self, rho: f64) -> SeparatedSet {
        let from = self.domain.rho;
        if from == rho {
            return self.clone();
        }
        let lt = |t: f64| {
            let s = (t * t - from * from + rho * rho).max(0.0).sqrt();
            if t >= 0.0 {
                s
            } else {
                -s
            }
        };
        SeparatedSet {
            domain: self.domain.at_rho(rho),
            epsilon: self.epsilon,
            bands: self
                .bands
                .iter()
                .map(|b| Band { t: lt(b.t), tminus: lt(b.tminus), tplus: lt(b.tplus), epsj: b.epsj })
                .collect(),
            nodes: self.nodes.iter().map(|n| Node { t: lt(n.t), ..n.clone() }).collect(),
        }
    }

    pub fn points(&self) -> Vec<PointXT> {
        self.nodes.iter().map(Node::point).collect()
    }

    fn band_t0(&self, j: usize) -> f64 {
        let h = PI / (2.0 * self.bands.len() as f64);
        ((2 * j + 1) as f64 * h).cos()
    }

    fn band_theta(&self, j: usize) -> (f64, f64) {
        let h = PI / (2.0 * self.bands.len() as f64);
        let th = (2 * j + 1) as f64 * h;
        (th - h, th + h)
    }

    /// Product cell of node `i`, expressed on the upper sheet of the ρ = 0 domain.
    pub fn cell(&self, i: usize) -> Cell {
        let node = &self.nodes[i];
        let (a, b) = self.band_theta(node.band);
        let theta = if b <= FRAC_PI_2 + 1e-15 { (a, b.min(FRAC_PI_2)) } else { ((PI - b).max(0.0), PI - a) };
        let epsj = self.bands[node.band].epsj;
        let eta = ball_spacing(self.epsilon, self.band_t0(node.band));
        let lower = self.bands[node.band].t < 0.0;
        let sector = |k: usize, m: usize| {
            let w = 2.0 * PI / m as f64;
            let c = w * k as f64 + if lower { PI } else { 0.0 };
            (c - w / 2.0, c + w / 2.0)
        };
        match self.domain.kind {
            DomainKind::Surface => {
                let m = surface_count(epsj);
                let shift = stagger(node.band, self.bands.len()) * PI / m as f64;
                let (a, b) = sector(node.cell, m);
                Cell { theta, phi: (a + shift, b + shift), arc_r: (0.0, 0.0) }
            }
            DomainKind::Solid => {
                let radii = ring_radii(eta);
                let mut idx = node.cell;
                for (ring, &al) in radii.iter().enumerate() {
                    let m = if ring == 0 { 1 } else { ring_count(al.sin(), eta) };
                    if idx < m {
                        let lo = if ring == 0 { 0.0 } else { al - eta / 2.0 };
                        let hi = if ring + 1 == radii.len() { FRAC_PI_2 } else { al + eta / 2.0 };
                        let phi = if ring == 0 { (-PI, PI) } else { sector(idx, m) };
                        return Cell { theta, phi, arc_r: (lo, hi) };
                    }
                    idx -= m;
                }
                unreachable!("cell index beyond ring structure")
            }
        }
    }

    /// Normalized weighted measure of each node's cell (cells partition the domain).
    pub fn cell_masses(&self, w: &WeightSpec) -> Vec<f64> {
        let dom = &self.domain;
        let d = dom.d as f64;
        let p = match dom.kind {
            DomainKind::Surface => 2.0 * w.beta + d - 1.0,
            DomainKind::Solid => 2.0 * w.beta + 2.0 * w.mu + d - 1.0,
        };
        let mut band_cache = vec![f64::NAN; self.bands.len()];
        (0..self.nodes.len())
            .map(|i| {
                let c = self.cell(i);
                let j = self.nodes[i].band;
                if band_cache[j].is_nan() {
                    band_cache[j] = band_integral(p, w.gamma, c.theta.0, c.theta.1);
                }
                let ang = c.phi.1 - c.phi.0;
                let radial = match dom.kind {
                    DomainKind::Surface => 1.0,
                    DomainKind::Solid => {
                        let e = 2.0 * w.mu + 1.0;
                        (c.arc_r.0.cos().powf(e) - c.arc_r.1.cos().max(0.0).powf(e)) / e
                    }
                };
                w.normalization * band_cache[j] * ang * radial
            })
            .collect()
    }

    /// Whether (x,t) ↦ (−x,−t) maps the node set onto itself.
    pub fn is_evenly_symmetric(&self) -> bool {
        let key = |x: &[f64], t: f64| -> Vec<i64> {
            x.iter().chain(std::iter::once(&t)).map(|v| (v * 1e9).round() as i64).collect()
        };
        let mut keys: Vec<Vec<i64>> = self.nodes.iter().map(|n| key(&n.x, n.t)).collect();
        keys.sort();
        self.nodes.iter().all(|n| {
            let neg: Vec<f64> = n.x.iter().map(|v| -v).collect();
            keys.binary_search(&key(&neg, -n.t)).is_ok()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub epsilon: f64,
    pub node_count: usize,
    pub min_distance: f64,
    pub closest_pair: Option<(usize, usize)>,
    pub separated: bool,
    pub probes: usize,
    pub multiplicity_min: usize,
    pub multiplicity_max: usize,
    pub histogram: Vec<usize>,
    pub evenly_symmetric: bool,
}

/// Probe point `i` of a Halton sequence mapped onto the ρ = 0 domain.
pub fn probe_point(kind: DomainKind, i: u64) -> PointXT {
    match kind {
        DomainKind::Surface => {
            let u = halton_point(i, 2);
            let t = 2.0 * u[0] - 1.0;
            let ph = 2.0 * PI * u[1];
            PointXT { x: vec![t.abs() * ph.cos(), t.abs() * ph.sin()], t }
        }
        DomainKind::Solid => {
            let u = halton_point(i, 3);
            let t = 2.0 * u[0] - 1.0;
            let r = t.abs() * u[1].sqrt();
            let ph = 2.0 * PI * u[2];
            PointXT { x: vec![r * ph.cos(), r * ph.sin()], t }
        }
    }
}

fn theta_of(p: &PointXT) -> f64 {
    p.t.abs().min(1.0).acos()
}

/// Indices of same-sheet nodes, sorted by θ = arccos|t|, used for neighbour sweeps.
struct SheetIndex {
    upper: Vec<(f64, usize)>,
    lower: Vec<(f64, usize)>,
}

impl SheetIndex {
    fn new(pts: &[PointXT]) -> Self {
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for (i, p) in pts.iter().enumerate() {
            if p.t >= 0.0 {
                upper.push((theta_of(p), i));
            } else {
                lower.push((theta_of(p), i));
            }
        }
        upper.sort_by(|a, b| a.0.total_cmp(&b.0));
        lower.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { upper, lower }
    }

    /// Nodes on the sheet of `p` with |θ − θ_p| ≤ r (a superset of the ball of radius r).
    fn near(&self, p: &PointXT, r: f64) -> impl Iterator<Item = usize> + '_ {
        let list = if p.t >= 0.0 { &self.upper } else { &self.lower };
        let th = theta_of(p);
        let start = list.partition_point(|e| e.0 < th - r - 1e-12);
        list[start..].iter().take_while(move |e| e.0 <= th + r + 1e-12).map(|e| e.1)
    }
}

pub fn verify_separated(s: &SeparatedSet, probes: usize) -> SeparationReport {
    let kind = s.domain.kind;
    let zero = s.lifted(0.0);
    let pts = zero.points();
    let idx = SheetIndex::new(&pts);
    let eps = s.epsilon;
    let mut min_d = f64::INFINITY;
    let mut pair = None;
    for (i, p) in pts.iter().enumerate() {
        for j in idx.near(p, eps) {
            if j <= i {
                continue;
            }
            let dd = distance0(kind, p, &pts[j]);
            if dd < min_d {
                min_d = dd;
                pair = Some((i, j));
            }
        }
    }
    let mut hist = Vec::new();
    let (mut mmin, mut mmax) = (usize::MAX, 0);
    for i in 0..probes {
        let q = probe_point(kind, i as u64);
        let m = idx.near(&q, eps).filter(|&j| distance0(kind, &q, &pts[j]) <= eps).count();
        if hist.len() <= m {
            hist.resize(m + 1, 0);
        }
        hist[m] += 1;
        mmin = mmin.min(m);
        mmax = mmax.max(m);
    }
    if probes == 0 {
        mmin = 0;
    }
    SeparationReport {
        epsilon: eps,
        node_count: pts.len(),
        min_distance: min_d,
        closest_pair: pair,
        separated: min_d >= eps * (1.0 - 1e-12),
        probes,
        multiplicity_min: mmin,
        multiplicity_max: mmax,
        histogram: hist,
        evenly_symmetric: s.is_evenly_symmetric(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surf() -> DomainSpec {
        DomainSpec::surface(2, 0.0).unwrap()
    }

    fn random_point(kind: DomainKind, rho: f64, a: f64, b: f64, c: f64, sheet: f64) -> PointXT {
        let t0 = sheet * a;
        let r = match kind {
            DomainKind::Surface => a,
            DomainKind::Solid => a * c.sqrt(),
        };
        let p = PointXT::new(vec![r * (2.0 * PI * b).cos(), r * (2.0 * PI * b).sin()], t0);
        rho_lift(&p, 0.0, rho).unwrap()
    }

    #[test]
    fn distance_examples() {
        let d = surf();
        let p = d.point(vec![1.0, 0.0], 1.0).unwrap();
        let q = d.point(vec![-1.0, 0.0], -1.0).unwrap();
        let r = d.point(vec![0.0, 1.0], 1.0).unwrap();
        assert_eq!(distance(&d, &p, &p).unwrap(), 0.0);
        assert!((distance(&d, &p, &q).unwrap() - PI).abs() < 1e-15);
        assert!((distance(&d, &p, &r).unwrap() - FRAC_PI_2).abs() < 1e-15);
        let h = DomainSpec::surface(2, 0.5).unwrap();
        let a = h.point(vec![0.0, 0.0], 0.5).unwrap();
        let b = h.point(vec![0.0, 0.0], -0.5).unwrap();
        assert_eq!(distance(&h, &a, &b), Err(ConicError::CrossSheet));
    }

    #[test]
    fn membership() {
        let d = surf();
        assert!(d.point(vec![0.5, 0.0], 0.6).is_err());
        let s = DomainSpec::solid(2, 0.0).unwrap();
        assert!(s.point(vec![0.3, 0.0], 0.6).is_ok());
        assert!(s.point(vec![0.7, 0.0], 0.6).is_err());
        assert!(d.point(vec![0.0, 0.0], 1.2).is_err());
    }

    #[test]
    fn lift_example() {
        let p = PointXT::new(vec![0.6, 0.0], 0.6);
        let q = rho_lift(&p, 0.0, 0.5).unwrap();
        assert!((q.t - 0.61f64.sqrt()).abs() < 1e-15);
        assert_eq!(rho_lift(&p, 0.3, 0.3).unwrap(), p);
        assert!(rho_lift(&PointXT::new(vec![0.0, 0.0], 0.1), 0.5, 0.0).is_err());
    }

    #[test]
    fn normalization_matches_cells() {
        for (kind, beta, gamma, mu) in [
            (DomainKind::Surface, 0.0, 0.5, 0.0),
            (DomainKind::Surface, 0.7, -0.3, 0.0),
            (DomainKind::Solid, 0.5, 1.0, 0.5),
            (DomainKind::Solid, 0.5, 0.0, 0.0),
        ] {
            let dom = DomainSpec::new(kind, 2, 0.0).unwrap();
            let w = WeightSpec::new(&dom, beta, gamma, mu).unwrap();
            let s = build_separated(&dom, 0.2).unwrap();
            let tot: f64 = s.cell_masses(&w).iter().sum();
            assert!((tot - 1.0).abs() < 1e-11, "{kind:?} {tot}");
        }
    }

    #[test]
    fn weight_values() {
        let d = surf();
        let w = WeightSpec::new(&d, 0.0, 1.0, 0.0).unwrap();
        let p = d.point(vec![1.0, 0.0], 1.0).unwrap();
        assert!((wn_eval(&d, &w, 10.0, &p) - 0.01).abs() < 1e-15);
        let w0 = WeightSpec::new(&d, 0.0, 0.0, 0.0).unwrap();
        let q = d.point(vec![0.3, 0.0], 0.3).unwrap();
        assert_eq!(wn_eval(&d, &w0, 7.0, &q), 1.0);
        assert!(weight_eval(&d, &w0, &p).is_infinite());
        let expect = w0.normalization * 0.3 * 0.3f64.powf(-1.0) * (1.0 - 0.09f64).powf(-0.5);
        assert!((weight_eval(&d, &w0, &q) - expect).abs() < 1e-14);
    }

    #[test]
    fn separated_set_example() {
        let s = build_separated(&surf(), PI / 8.0).unwrap();
        assert_eq!(s.bands.len(), 8);
        assert!((s.bands[0].t - (PI / 16.0).cos()).abs() < 1e-15);
        assert!(s.is_evenly_symmetric());
        assert!(build_separated(&surf(), 1.0).is_err());
    }

    #[test]
    fn separation_exhaustive() {
        for kind in [DomainKind::Surface, DomainKind::Solid] {
            let dom = DomainSpec::new(kind, 2, 0.0).unwrap();
            for eps in [0.2, PI / 16.0] {
                let s = build_separated(&dom, eps).unwrap();
                let pts = s.points();
                let mut m = f64::INFINITY;
                for i in 0..pts.len() {
                    for j in i + 1..pts.len() {
                        if pts[i].sheet() == pts[j].sheet() {
                            m = m.min(distance0(kind, &pts[i], &pts[j]));
                        }
                    }
                }
                assert!(m >= eps * (1.0 - 1e-12), "{kind:?} eps={eps} min={m}");
                let rep = verify_separated(&s, 2000);
                assert!(rep.separated && rep.min_distance >= m - 1e-14);
                assert!(rep.multiplicity_min >= 1, "{kind:?} {rep:?}");
            }
        }
    }

    #[test]
    fn duplicate_and_asymmetric_flagged() {
        let mut s = build_separated(&surf(), PI / 8.0).unwrap();
        let extra = s.nodes[3].clone();
        s.nodes.push(extra);
        let rep = verify_separated(&s, 100);
        assert!(rep.min_distance < 1e-7);
        assert!(!rep.separated);
        let mut s = build_separated(&surf(), PI / 8.0).unwrap();
        s.nodes.remove(0);
        assert!(!verify_separated(&s, 10).evenly_symmetric);
    }

    #[test]
    fn ball_measure_against_grid() {
        let dom = surf();
        let w = WeightSpec::new(&dom, 0.0, 0.5, 0.0).unwrap();
        let p = dom.point(vec![0.5, 0.0], 0.5).unwrap();
        let r = 0.05;
        let v = ball_measure(&dom, &w, &p, r).unwrap();
        // brute force: midpoint grid in (s, φ) near the centre
        let (ns, nphi) = (1500, 1500);
        let (s0, s1) = (0.5 - 0.08, 0.5 + 0.08);
        let (f0, f1) = (-0.2, 0.2);
        let mut acc = 0.0;
        for i in 0..ns {
            let s = s0 + (i as f64 + 0.5) * (s1 - s0) / ns as f64;
            for k in 0..nphi {
                let ph: f64 = f0 + (k as f64 + 0.5) * (f1 - f0) / nphi as f64;
                let q = PointXT::new(vec![s * ph.cos(), s * ph.sin()], s);
                if distance0(DomainKind::Surface, &p, &q) <= r {
                    acc += s; // |s|^{2β}(1−s²)^{γ−1/2}·s^{d−1} with β=0, γ=1/2
                }
            }
        }
        acc *= (s1 - s0) / ns as f64 * (f1 - f0) / nphi as f64 * w.normalization;
        assert!((v - acc).abs() < 0.01 * acc, "{v} vs {acc}");
    }

    #[test]
    fn ball_measure_scaling() {
        let dom = surf();
        let w = WeightSpec::new(&dom, 0.0, 0.0, 0.0).unwrap();
        let p = dom.point(vec![0.0, 0.6], 0.6).unwrap();
        let a = ball_measure(&dom, &w, &p, 0.02).unwrap();
        let b = ball_measure(&dom, &w, &p, 0.04).unwrap();
        assert!((b / a - 4.0).abs() < 0.2, "{}", b / a);
        let w1 = WeightSpec::new(&dom, 1.0, 0.0, 0.0).unwrap();
        let apex = dom.point(vec![0.0, 0.0], 0.0).unwrap();
        let a = ball_measure(&dom, &w1, &apex, 0.02).unwrap();
        let b = ball_measure(&dom, &w1, &apex, 0.04).unwrap();
        assert!((b / a - 16.0).abs() < 0.5, "{}", b / a);
    }

    #[test]
    fn lift_preserves_ball_measure() {
        let sol = DomainSpec::solid(2, 0.0).unwrap();
        let hyp = DomainSpec::solid(2, 0.5).unwrap();
        let w = WeightSpec::solid(&sol, 0.5, 0.5).unwrap();
        let wh = WeightSpec::solid(&hyp, 0.5, 0.5).unwrap();
        let p = PointXT::new(vec![0.2, 0.1], 0.6);
        let a = ball_measure(&sol, &w, &p, 0.1).unwrap();
        let b = ball_measure(&hyp, &wh, &rho_lift(&p, 0.0, 0.5).unwrap(), 0.1).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
        assert!((w.normalization - wh.normalization).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn metric_axioms(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0,
                         a2 in 0.0f64..1.0, b2 in 0.0f64..1.0, c2 in 0.0f64..1.0,
                         a3 in 0.0f64..1.0, b3 in 0.0f64..1.0, c3 in 0.0f64..1.0,
                         solid in proptest::bool::ANY, rho in prop_oneof![Just(0.0), Just(0.5)]) {
            let kind = if solid { DomainKind::Solid } else { DomainKind::Surface };
            let dom = DomainSpec::new(kind, 2, rho).unwrap();
            let p = random_point(kind, rho, a, b, c, 1.0);
            let q = random_point(kind, rho, a2, b2, c2, 1.0);
            let r = random_point(kind, rho, a3, b3, c3, 1.0);
            let pq = distance(&dom, &p, &q).unwrap();
            prop_assert_eq!(pq, distance(&dom, &q, &p).unwrap());
            let pr = distance(&dom, &p, &r).unwrap();
            let rq = distance(&dom, &r, &q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-12);
            // lift preserves distance
            let p0 = dom.to_zero(&p);
            let q0 = dom.to_zero(&q);
            prop_assert!((distance0(kind, &p0, &q0) - pq).abs() < 1e-12);
        }

        #[test]
        fn cosine_identity(a in 0.01f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0,
                           a2 in 0.01f64..1.0, b2 in 0.0f64..1.0, c2 in 0.0f64..1.0,
                           solid in proptest::bool::ANY) {
            let kind = if solid { DomainKind::Solid } else { DomainKind::Surface };
            let p = random_point(kind, 0.0, a, b, c, 1.0);
            let q = random_point(kind, 0.0, a2, b2, c2, 1.0);
            let (t, s) = (p.t, q.t);
            let dd = distance0(kind, &p, &q);
            let d1 = (t * s + ((1.0 - t * t) * (1.0 - s * s)).sqrt()).clamp(-1.0, 1.0);
            let inner = match kind {
                DomainKind::Surface => dot(&p.x, &q.x) / (t * s),
                DomainKind::Solid => {
                    let xp: Vec<f64> = p.x.iter().map(|v| v / t).collect();
                    let yp: Vec<f64> = q.x.iter().map(|v| v / s).collect();
                    dot(&xp, &yp) + (1.0 - dot(&xp, &xp)).max(0.0).sqrt() * (1.0 - dot(&yp, &yp)).max(0.0).sqrt()
                }
            };
            let lhs = 1.0 - dd.cos();
            let rhs = 1.0 - d1 + t * s * (1.0 - inner);
            prop_assert!((lhs - rhs).abs() < 1e-12);
            // |t − s| and |√(1−t²) − √(1−s²)| bounded by the distance
            prop_assert!((t - s).abs() <= dd + 1e-12);
            prop_assert!(((1.0 - t * t).sqrt() - (1.0 - s * s).sqrt()).abs() <= dd + 1e-12);
            if solid {
                let u = (t * t - p.norm_x2()).max(0.0).sqrt();
                let v = (s * s - q.norm_x2()).max(0.0).sqrt();
                prop_assert!((u - v).abs() <= (2f64.sqrt() + PI) * dd + 1e-12);
            }
        }
    }
}
