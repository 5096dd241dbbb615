//! Semi-discrete tight frames built from window kernels and level-matched cubature.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{check_even, project_level, ProjectionSeries};
use crate::error::{ConicError, Result};
use crate::geometry::{DomainKind, DomainSpec, PointXT, WeightSpec};
use crate::kernels::{Basis, KernelContext};
use crate::par::chunked_sum;
use crate::orthopoly::{window_eval, CutoffSpec};
use crate::quadrature::{cubature_solve, CubatureRule};

/// Default node-density parameter for frame rules.
pub const FRAME_DELTA: f64 = 2.0;

/// Window on degrees: g_j(k), supported on 2^{j−2} < k < 2^j (k = 0 only for j = 0).
pub fn frame_window(j: usize, k: usize) -> f64 {
    window_eval(j, 2.0 * k as f64)
}

/// Highest degree with g_j ≠ 0.
pub fn level_top(j: usize) -> usize {
    (1usize << j).saturating_sub(1)
}

/// Cubature exactness needed at level j.
pub fn level_degree(j: usize) -> usize {
    1usize << (j + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLevel {
    pub j: usize,
    pub rule: CubatureRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub domain: DomainSpec,
    pub weight: WeightSpec,
    pub j_max: usize,
    pub delta: f64,
    pub cutoff: CutoffSpec,
    pub levels: Vec<FrameLevel>,
}

pub fn build_frame(dom: &DomainSpec, w: &WeightSpec, j_max: usize, delta: f64) -> Result<Frame> {
    let levels = (0..=j_max)
        .map(|j| {
            cubature_solve(dom, w, level_degree(j), delta, 1e-10)
                .map(|rule| FrameLevel { j, rule })
                .map_err(|e| ConicError::Level { level: j, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Frame { domain: *dom, weight: *w, j_max, delta, cutoff: CutoffSpec::frame_window(), levels })
}

/// ⟨f, ψ_{z,j}⟩ per level, in node order; `high_pass` is the energy the windows leave out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCoefficients {
    pub levels: Vec<Vec<f64>>,
    pub high_pass: f64,
}

impl FrameCoefficients {
    pub fn energy(&self) -> f64 {
        self.levels.iter().flatten().map(|c| c * c).sum()
    }

    pub fn level_energy(&self, j: usize) -> f64 {
        self.levels[j].iter().map(|c| c * c).sum()
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Zero all but the `keep` largest coefficients in magnitude.
    pub fn threshold(&self, keep: usize) -> Self {
        let mut mags: Vec<f64> = self.levels.iter().flatten().map(|c| c.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        let cut = if keep == 0 { f64::INFINITY } else { mags.get(keep - 1).copied().unwrap_or(0.0) };
        let mut left = keep;
        let levels = self
            .levels
            .iter()
            .map(|l| {
                l.iter()
                    .map(|&c| {
                        if c.abs() >= cut && left > 0 {
                            left -= 1;
                            c
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Self { levels, high_pass: self.high_pass }
    }
}

impl Frame {
    /// Degree of the largest window support.
    pub fn top_degree(&self) -> usize {
        level_top(self.j_max)
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.rule.nodes.len()).collect()
    }

    fn basis(&self) -> Result<Arc<Basis>> {
        Ok(Arc::new(Basis::new(&self.domain, &self.weight, self.top_degree())?))
    }

    /// Reference projection of f up to the top window degree.
    pub fn project(&self, f: impl Fn(&PointXT) -> f64 + Sync) -> Result<ProjectionSeries> {
        let n = self.top_degree();
        project_level(&self.domain, &self.weight, f, n, 2 * n + 16)
    }

    pub fn analyze(&self, f: impl Fn(&PointXT) -> f64 + Sync) -> Result<FrameCoefficients> {
        check_even(&self.domain, &f)?;
        Ok(self.analyze_series(&self.project(f)?))
    }

    /// coeff_{j,z} = √λ_z Σ_b g_j(deg b) c_b Φ_b(z).
    pub fn analyze_series(&self, s: &ProjectionSeries) -> FrameCoefficients {
        let b = &s.basis;
        let levels = self
            .levels
            .iter()
            .map(|lv| {
                let top = level_top(lv.j).min(s.nmax());
                let gc: Vec<f64> = (0..b.dim(top)).map(|i| frame_window(lv.j, b.indices[i].n) * s.coeffs[i]).collect();
                lv.rule
                    .nodes
                    .par_iter()
                    .map_init(Vec::new, |buf, node| {
                        b.eval_all_orthonormal(&node.point(), buf);
                        node.lambda.sqrt() * gc.iter().zip(buf.iter()).map(|(a, v)| a * v).sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        let high_pass = (0..=s.nmax())
            .map(|k| {
                let kept: f64 = (0..=self.j_max).map(|j| frame_window(j, k).powi(2)).sum();
                (1.0 - kept).max(0.0) * s.block_norm2(k)
            })
            .sum();
        FrameCoefficients { levels, high_pass }
    }

    /// Σ_j Σ_z coeff_{j,z} ψ_{z,j} as an orthonormal series.
    pub fn synthesize(&self, c: &FrameCoefficients) -> Result<ProjectionSeries> {
        let basis = self.basis()?;
        let mut out = ProjectionSeries::zeros(basis.clone());
        for (lv, cs) in self.levels.iter().zip(&c.levels) {
            let top = level_top(lv.j);
            let nbl = basis.dim(top);
            let nodes = &lv.rule.nodes;
            let acc = chunked_sum(nodes.len(), nbl, |r, acc| {
                let mut buf = Vec::new();
                for i in r {
                    basis.eval_all_orthonormal(&nodes[i].point(), &mut buf);
                    let s = cs[i] * nodes[i].lambda.sqrt();
                    for (a, v) in acc.iter_mut().zip(&buf[..nbl]) {
                        *a += s * v;
                    }
                }
            });
            for (i, a) in acc.iter().enumerate().take(nbl) {
                out.coeffs[i] += frame_window(lv.j, basis.indices[i].n) * a;
            }
        }
        Ok(out)
    }

    /// Kernel context able to evaluate every frame element.
    pub fn kernel_context(&self) -> Result<KernelContext> {
        KernelContext::new(&self.domain, &self.weight, self.top_degree().max(1))
    }

    /// ψ_{z,j}(q) = √λ_z Σ_k g_j(k) P_k(q, z) by the addition formula.
    pub fn element(&self, ctx: &KernelContext, j: usize, node: usize, q: &PointXT) -> Result<f64> {
        let lv = &self.levels[j];
        let z = &lv.rule.nodes[node];
        let k = ctx.multiplier_kernel(level_top(j), |k| frame_window(j, k), q, &z.point())?;
        Ok(z.lambda.sqrt() * k)
    }

    /// Dimension exponent in the needlet normalization: 2^{j·e/2}.
    pub fn needle_exponent(&self) -> f64 {
        match self.domain.kind {
            DomainKind::Surface => self.domain.d as f64,
            DomainKind::Solid => self.domain.d as f64 + 1.0,
        }
    }
}

/// Parseval defect |Σ|c|² − ‖f‖²| / ‖f‖² and round-trip L² error ‖f − S(A f)‖/‖f‖ for a series.
pub fn tightness(fr: &Frame, s: &ProjectionSeries) -> Result<(f64, f64)> {
    let c = fr.analyze_series(s);
    let nf = s.norm2();
    let parseval = (c.energy() - nf).abs() / nf;
    let back = fr.synthesize(&c)?;
    let round = back.sub(s).norm() / nf.sqrt();
    Ok((parseval, round))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wn_eval;
    use crate::kernels::decay_fit;
    use crate::sampling::stream_rng;
    use rand::Rng;
    use std::sync::OnceLock;

    fn surface_frame() -> &'static Frame {
        static F: OnceLock<Frame> = OnceLock::new();
        F.get_or_init(|| {
            let d = DomainSpec::surface(2, 0.0).unwrap();
            let w = WeightSpec::surface(&d, 0.5).unwrap();
            build_frame(&d, &w, 3, FRAME_DELTA).unwrap()
        })
    }

    fn random_band(fr: &Frame, n: usize, seed: u64) -> ProjectionSeries {
        let b = Arc::new(Basis::new(&fr.domain, &fr.weight, fr.top_degree()).unwrap());
        let mut s = ProjectionSeries::zeros(b.clone());
        let mut rng = stream_rng(seed, 1);
        for c in &mut s.coeffs[..b.dim(n)] {
            *c = rng.random::<f64>() - 0.5;
        }
        s
    }

    #[test]
    fn windows_telescope() {
        for jm in 0..6 {
            for k in 0..=(1usize << jm) / 2 {
                let s: f64 = (0..=jm).map(|j| frame_window(j, k).powi(2)).sum();
                assert!((s - 1.0).abs() < 1e-14, "J={jm} k={k}: {s}");
            }
        }
        assert_eq!(frame_window(1, 0), 0.0);
        assert_eq!(frame_window(0, 1), 0.0);
    }

    #[test]
    fn constants_live_on_level_zero() {
        let fr = surface_frame();
        let c = fr.analyze(|_| 1.0).unwrap();
        assert!(c.level_energy(0) > 0.5);
        for j in 1..=fr.j_max {
            assert!(c.level_energy(j) < 1e-24);
        }
        let back = fr.synthesize(&c).unwrap();
        for i in 0..40 {
            let p = crate::approx::domain_probe(&fr.domain, i);
            assert!((back.eval(&p) - 1.0).abs() < 1e-9);
        }
        let d = DomainSpec::surface(2, 0.0).unwrap();
        let w = WeightSpec::surface(&d, 0.5).unwrap();
        let f0 = build_frame(&d, &w, 0, FRAME_DELTA).unwrap();
        let c0 = f0.analyze(|_| 1.0).unwrap();
        let b0 = f0.synthesize(&c0).unwrap();
        assert!((b0.eval(&PointXT::new(vec![0.3, 0.4], -0.5)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn parseval_and_round_trip() {
        let fr = surface_frame();
        for seed in 0..5 {
            let s = random_band(fr, 4, seed);
            let (p, r) = tightness(fr, &s).unwrap();
            assert!(p < 1e-9 && r < 1e-9, "{p} {r}");
        }
    }

    #[test]
    fn degree_five_support() {
        let d = DomainSpec::surface(2, 0.0).unwrap();
        let w = WeightSpec::surface(&d, 0.5).unwrap();
        let fr = build_frame(&d, &w, 4, FRAME_DELTA).unwrap();
        let b = Arc::new(Basis::new(&d, &w, fr.top_degree()).unwrap());
        let mut s = ProjectionSeries::zeros(b.clone());
        s.coeffs[b.starts[5] + 1] = 1.0;
        let c = fr.analyze_series(&s);
        for j in 0..=4 {
            let on = (1usize << j) > 5 && (j < 2 || (1usize << (j - 2)) < 5);
            let e = c.level_energy(j);
            assert_eq!(e > 1e-20, on, "level {j}: {e}");
        }
    }

    #[test]
    fn elements_match_expansion() {
        let fr = surface_frame();
        let ctx = fr.kernel_context().unwrap();
        let b = Arc::new(Basis::new(&fr.domain, &fr.weight, fr.top_degree()).unwrap());
        let j = 2;
        let z = fr.levels[j].rule.nodes[3].point();
        let lam = fr.levels[j].rule.nodes[3].lambda;
        let mut bz = Vec::new();
        b.eval_all_orthonormal(&z, &mut bz);
        for i in 0..10 {
            let q = crate::approx::domain_probe(&fr.domain, i);
            let mut bq = Vec::new();
            b.eval_all_orthonormal(&q, &mut bq);
            let direct: f64 = (0..b.len()).map(|k| frame_window(j, b.indices[k].n) * bz[k] * bq[k]).sum::<f64>() * lam.sqrt();
            assert!((fr.element(&ctx, j, 3, &q).unwrap() - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let fr = surface_frame();
        assert!(matches!(fr.analyze(|p| p.t), Err(ConicError::Symmetry(_))));
    }

    #[test]
    fn thresholding_error_bounded_by_dropped_energy() {
        let fr = surface_frame();
        let s = fr.project(|p| (-(p.x[0] - 0.3).powi(2) - p.x[1].powi(2)).exp() * (1.0 + p.t * p.t)).unwrap();
        let c = fr.analyze_series(&s);
        let kept = c.threshold(c.len() / 2);
        let dropped: f64 = c.energy() - kept.energy();
        let full = fr.synthesize(&c).unwrap();
        let part = fr.synthesize(&kept).unwrap();
        // synthesis is a contraction, so the error is at most the dropped coefficient norm
        assert!(full.sub(&part).norm() <= dropped.sqrt() * (1.0 + 1e-9));
    }

    #[test]
    fn level_counts_grow() {
        let n = surface_frame().node_counts();
        for w in n.windows(2) {
            assert!(w[1] > w[0], "{n:?}");
        }
    }

    #[test]
    fn needlets_decay() {
        let fr = surface_frame();
        let ctx = fr.kernel_context().unwrap();
        let j = 3;
        let lv = &fr.levels[j];
        let node = lv.rule.nodes.iter().position(|n| n.t > 0.4 && n.t < 0.8).unwrap();
        let z = lv.rule.nodes[node].point();
        let scale = 2f64.powi(j as i32);
        let mut s = Vec::new();
        for i in 0..3000 {
            let q = crate::approx::domain_probe(&fr.domain, i);
            let dist = crate::geometry::distance0(fr.domain.kind, &z, &q);
            let v = fr.element(&ctx, j, node, &q).unwrap().abs() * wn_eval(&fr.domain, &fr.weight, scale, &q).sqrt()
                / scale.powf(fr.needle_exponent() / 2.0);
            s.push((1.0 + scale * dist, v));
        }
        let (sigma, _) = decay_fit(&s, 1.0).unwrap();
        assert!(sigma > 1.0, "{sigma}");
    }
}
