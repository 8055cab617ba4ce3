//! Measurements of the quantities the regularity theory bounds: discrete
//! second-difference sup norms, sampled Holder seminorms, the contact-set
//! eigenvalue inequality, free-boundary growth curves, and refinement
//! studies.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{discrete_hessian, second_difference, Domain, Field, FrameSet, NodeClass, Shape};
use crate::pucci::eigen_sym;
use crate::solver::{solve_two_membranes, ProblemSpec, SolutionPair, SolverConfig};

/// Interior nodes within `radius` of the origin (sup norm on boxes and
/// intervals, Euclidean on the disc).
pub fn inner_region_mask(domain: &Arc<Domain>, radius: f64) -> Vec<bool> {
    (0..domain.node_count())
        .map(|idx| {
            if !domain.is_interior(idx) {
                return false;
            }
            let p = domain.pos(idx);
            let d = match domain.shape() {
                Shape::Disc => f64::hypot(p[0], p[1]),
                Shape::Box => p[0].abs().max(p[1].abs()),
                Shape::Interval => p[0].abs(),
            };
            d <= radius + 1e-12
        })
        .collect()
}

/// Max of `|delta^2_e u|` over the region nodes and frame directions; the
/// discrete proxy for the second-derivative sup norm. Directions whose
/// stencil leaves the grid near a box edge are skipped.
pub fn second_diff_supnorm(u: &Field, fs: &FrameSet, region: &[bool]) -> Result<f64> {
    let dom = u.domain();
    if region.len() != dom.node_count() {
        return Err(Error::Config("region mask length does not match the domain".into()));
    }
    if fs.dim() != dom.dim() {
        return Err(Error::DomainMismatch("second_diff_supnorm frame set".into()));
    }
    let mut sup = 0.0f64;
    for &idx in dom.interior() {
        if !region[idx] {
            continue;
        }
        for frame in fs.frames() {
            for dir in &frame.dirs {
                match second_difference(u, idx, *dir) {
                    Ok(d2) => sup = sup.max(d2.abs()),
                    Err(Error::OutOfStencil { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(sup)
}

/// Deterministic pair sampling for the Holder quotient.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SamplingSpec {
    /// below this many nodes every pair is used
    pub all_pairs_threshold: usize,
    pub sample_pairs: usize,
    pub seed: u64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self { all_pairs_threshold: 2500, sample_pairs: 200_000, seed: 0 }
    }
}

/// Max of `|u(x) - u(y)| / |x - y|^eta` over sampled node pairs.
pub fn holder_seminorm(u: &Field, eta: f64, sampling: &SamplingSpec) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Config(format!("eta must lie in (0, 1], got {eta}")));
    }
    let dom = u.domain();
    let nodes: Vec<usize> =
        (0..dom.node_count()).filter(|&i| dom.class(i) != NodeClass::Exterior).collect();
    let quotient = |a: usize, b: usize| -> f64 {
        let pa = dom.pos(a);
        let pb = dom.pos(b);
        let dist = f64::hypot(pa[0] - pb[0], pa[1] - pb[1]);
        if dist == 0.0 {
            return 0.0;
        }
        (u.get(a) - u.get(b)).abs() / dist.powf(eta)
    };
    let mut sup = 0.0f64;
    if nodes.len() <= sampling.all_pairs_threshold {
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                sup = sup.max(quotient(nodes[i], nodes[j]));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
        for _ in 0..sampling.sample_pairs {
            let i = rng.gen_range(0..nodes.len());
            let j = rng.gen_range(0..nodes.len());
            if i != j {
                sup = sup.max(quotient(nodes[i], nodes[j]));
            }
        }
    }
    Ok(sup)
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenViolation {
    pub pos: [f64; 2],
    pub membrane: &'static str,
    /// `(lam_max - lam) * sum |e|`
    pub lhs: f64,
    /// `(f - g)(x)`
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContactEigenReport {
    pub tol: f64,
    pub nodes_checked: usize,
    pub violation_count: usize,
    pub violations: Vec<EigenViolation>,
    pub max_margin: f64,
    pub passed: bool,
}

/// Checks the contact-set eigenvalue inequality
/// `(lam_max - lam) sum |e| <= f - g` for the discrete Hessians of both
/// membranes, at contact nodes whose full Hessian stencil stays in the
/// contact region.
pub fn contact_eigen_check(
    pair: &SolutionPair,
    problem: &ProblemSpec,
    tol: f64,
) -> Result<ContactEigenReport> {
    let dom = &problem.domain;
    if !pair.u.domain().same_grid(dom) {
        return Err(Error::DomainMismatch("contact_eigen_check pair".into()));
    }
    let params = problem.f_op.params;
    let spread = params.lambda_max - params.lambda;
    let mask = &pair.contact_mask;
    let hessian_stencil_in_mask = |idx: usize| -> bool {
        let offsets: &[[i32; 2]] =
            if dom.dim() == 1 { &[[1, 0]] } else { &[[1, 0], [0, 1], [1, 1], [1, -1]] };
        offsets.iter().all(|d| {
            [1, -1].iter().all(|&sign| match dom.step(idx, *d, sign) {
                Some(nb) => dom.class(nb) != NodeClass::Exterior && mask[nb],
                None => false,
            })
        })
    };
    let mut nodes_checked = 0usize;
    let mut violations = Vec::new();
    let mut max_margin = f64::NEG_INFINITY;
    for &idx in dom.interior() {
        if !mask[idx] || !hessian_stencil_in_mask(idx) {
            continue;
        }
        nodes_checked += 1;
        let fg = problem.f.get(idx) - problem.g.get(idx);
        for (membrane, field) in [("u", &pair.u), ("v", &pair.v)] {
            let hess = discrete_hessian(field, idx)?;
            let sum_abs: f64 = eigen_sym(&hess).values().iter().map(|e| e.abs()).sum();
            let lhs = spread * sum_abs;
            let margin = lhs - fg;
            max_margin = max_margin.max(margin);
            if margin > tol {
                violations.push(EigenViolation { pos: dom.pos(idx), membrane, lhs, rhs: fg, margin });
            }
        }
    }
    if nodes_checked == 0 {
        max_margin = 0.0;
    }
    let violation_count = violations.len();
    violations.truncate(64);
    Ok(ContactEigenReport {
        tol,
        nodes_checked,
        violation_count,
        violations,
        max_margin,
        passed: violation_count == 0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NondegeneracyCurve {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    /// radius of the node attaining each sup (what the fit uses)
    pub achieved_radii: Vec<f64>,
    pub sup_values: Vec<f64>,
    pub ring_nodes: Vec<usize>,
    pub slope: Option<f64>,
    pub fit_residual: f64,
    pub degenerate: bool,
}

/// Sup of `w` over discrete spheres (nodes within `h/2` of each radius)
/// and the least-squares slope of `log sup` against `log r` where the sup
/// is positive.
pub fn nondegeneracy_curve(
    w: &Field,
    center_idx: usize,
    radii: &[f64],
) -> Result<NondegeneracyCurve> {
    let dom = w.domain();
    if dom.class(center_idx) == NodeClass::Exterior {
        return Err(Error::Config("curve center must be a domain node".into()));
    }
    if radii.windows(2).any(|p| p[1] <= p[0]) || radii.is_empty() {
        return Err(Error::Config("radii must be strictly increasing and nonempty".into()));
    }
    let center = dom.pos(center_idx);
    let h = dom.h();
    let mut sup_values = Vec::with_capacity(radii.len());
    let mut achieved = Vec::with_capacity(radii.len());
    let mut ring_nodes = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut sup = f64::NEG_INFINITY;
        let mut at = f64::NAN;
        let mut count = 0usize;
        for idx in 0..dom.node_count() {
            if dom.class(idx) == NodeClass::Exterior {
                continue;
            }
            let p = dom.pos(idx);
            let dist = f64::hypot(p[0] - center[0], p[1] - center[1]);
            if (dist - r).abs() <= 0.5 * h {
                count += 1;
                if w.get(idx) > sup {
                    sup = w.get(idx);
                    at = dist;
                }
            }
        }
        if count == 0 {
            return Err(Error::Config(format!("no nodes on the discrete sphere r = {r}")));
        }
        sup_values.push(sup);
        achieved.push(at);
        ring_nodes.push(count);
    }
    // least squares on the positive entries, against the achieved radii
    let pts: Vec<(f64, f64)> = sup_values
        .iter()
        .zip(&achieved)
        .filter(|(s, a)| **s > 0.0 && **a > 0.0)
        .map(|(s, a)| (a.ln(), s.ln()))
        .collect();
    let (slope, fit_residual, degenerate) = if pts.len() < 2 {
        (None, 0.0, true)
    } else {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let b = sxy / sxx;
        let rms = (pts
            .iter()
            .map(|p| {
                let e = p.1 - (my + b * (p.0 - mx));
                e * e
            })
            .sum::<f64>()
            / n)
            .sqrt();
        (Some(b), rms, false)
    };
    Ok(NondegeneracyCurve {
        center,
        radii: radii.to_vec(),
        achieved_radii: achieved,
        sup_values,
        ring_nodes,
        slope,
        fit_residual,
        degenerate,
    })
}

/// One problem family instantiated at several resolutions.
pub struct StudySpec<'a> {
    pub build: &'a dyn Fn(usize) -> Result<ProblemSpec>,
    pub exact_u: Option<&'a (dyn Fn(&[f64]) -> f64 + Sync)>,
    pub exact_v: Option<&'a (dyn Fn(&[f64]) -> f64 + Sync)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    pub sup_err_u: Option<f64>,
    pub sup_err_v: Option<f64>,
    /// second-difference sup norm of each membrane on the inner quarter
    pub second_diff_u: f64,
    pub second_diff_v: f64,
    pub iterations: usize,
    pub contact_nodes: usize,
    #[serde(skip)]
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    /// observed order between consecutive rows from the u errors
    pub observed_orders: Vec<f64>,
}

pub const INNER_QUARTER_RADIUS: f64 = 0.25;

/// Solves the family at each resolution and records errors against the
/// exact fields (when given) plus the inner-region second differences.
pub fn refinement_study(
    spec: &StudySpec,
    resolutions: &[usize],
    cfg: &SolverConfig,
    width: u32,
) -> Result<StudyTable> {
    if resolutions.windows(2).any(|p| p[1] <= p[0]) || resolutions.is_empty() {
        return Err(Error::Config("resolutions must be strictly increasing".into()));
    }
    let mut rows: Vec<StudyRow> = Vec::with_capacity(resolutions.len());
    for &n in resolutions {
        let t0 = Instant::now();
        let problem = (spec.build)(n)?;
        let dom = Arc::clone(&problem.domain);
        let fs = FrameSet::new(dom.dim(), width)?;
        let pair = solve_two_membranes(&problem, cfg, &fs)?;
        let sup_err =
            |exact: Option<&(dyn Fn(&[f64]) -> f64 + Sync)>, field: &Field| -> Option<f64> {
                exact.map(|f| {
                    let reference = Field::from_fn(&dom, f);
                    field.sup_diff(&reference)
                })
            };
        let region = inner_region_mask(&dom, INNER_QUARTER_RADIUS);
        let row = StudyRow {
            n,
            h: dom.h(),
            sup_err_u: sup_err(spec.exact_u, &pair.u),
            sup_err_v: sup_err(spec.exact_v, &pair.v),
            second_diff_u: second_diff_supnorm(&pair.u, &fs, &region)?,
            second_diff_v: second_diff_supnorm(&pair.v, &fs, &region)?,
            iterations: pair.report.eps_trace.iter().map(|s| s.iterations).sum(),
            contact_nodes: pair.report.contact_nodes,
            wall_ms: t0.elapsed().as_millis(),
        };
        rows.push(row);
    }
    let mut observed_orders = Vec::new();
    for pair in rows.windows(2) {
        if let (Some(e0), Some(e1)) = (pair[0].sup_err_u, pair[1].sup_err_u) {
            if e0 > 0.0 && e1 > 0.0 {
                observed_orders.push((e0 / e1).ln() / (pair[0].h / pair[1].h).ln());
            }
        }
    }
    Ok(StudyTable { rows, observed_orders })
}

/// Summary bundle for a single field, as emitted by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub region_radius: f64,
    pub second_diff_sup: f64,
    pub holder_estimates: Vec<HolderEstimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderEstimate {
    pub eta: f64,
    pub seminorm: f64,
}
