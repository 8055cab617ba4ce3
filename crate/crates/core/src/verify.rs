//! Certification of candidate pairs against the discrete constrained
//! system, the closed-form case library, the non-uniqueness construction,
//! and the boundary-growth barrier check.
//!
//! On a grid the viscosity inequalities are surrogated by the signs of the
//! monotone discrete residuals: the upper membrane must be a discrete
//! supersolution everywhere and an exact solution where the gap certifies
//! separation, symmetrically for the lower one.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{build_domain, Domain, Field, FrameSet, NodeClass, Shape};
use crate::pucci::{OperatorSpec, PucciParams};
use crate::solver::{discrete_residuals, ProblemSpec, SolutionPair};

/// Registered description of a closed-form contact set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactRegion {
    Empty,
    /// `{ x <= 0 }` in any dimension.
    LeftHalf,
    /// `{ |x| <= radius }`.
    Ball { radius: f64 },
}

impl ContactRegion {
    pub fn contains(&self, pos: &[f64]) -> bool {
        match self {
            ContactRegion::Empty => false,
            ContactRegion::LeftHalf => pos[0] <= 1e-12,
            ContactRegion::Ball { radius } => {
                let r = if pos.len() == 1 { pos[0].abs() } else { f64::hypot(pos[0], pos[1]) };
                r <= radius + 1e-12
            }
        }
    }
}

type Closed = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A closed-form solution pair with its data and known contact set.
pub struct AnalyticCase {
    pub name: &'static str,
    pub dim: usize,
    pub shape: Shape,
    pub params: PucciParams,
    pub u: Closed,
    pub v: Closed,
    pub f: Closed,
    pub g: Closed,
    pub contact: ContactRegion,
    /// Residual tolerance constant: reports use `tol = tol_factor * h`.
    pub tol_factor: f64,
}

impl AnalyticCase {
    pub fn fields_on(&self, domain: &Arc<Domain>) -> (Field, Field, Field, Field) {
        (
            Field::from_fn(domain, &self.u),
            Field::from_fn(domain, &self.v),
            Field::from_fn(domain, &self.f),
            Field::from_fn(domain, &self.g),
        )
    }

    pub fn contact_mask_on(&self, domain: &Arc<Domain>) -> Vec<bool> {
        (0..domain.node_count())
            .map(|idx| {
                domain.class(idx) != NodeClass::Exterior
                    && self.contact.contains(&domain.pos(idx)[..domain.dim()])
            })
            .collect()
    }

    /// The closed forms sampled as a synthetic solution pair with the
    /// registered contact mask.
    pub fn pair_on(&self, domain: &Arc<Domain>) -> SolutionPair {
        let (u, v, _, _) = self.fields_on(domain);
        SolutionPair::synthetic(u, v, self.contact_mask_on(domain))
    }

    pub fn problem_on(&self, domain: &Arc<Domain>) -> Result<ProblemSpec> {
        let (_, _, f, g) = self.fields_on(domain);
        let u0 = Field::dirichlet_data(domain, &self.u);
        let v0 = Field::dirichlet_data(domain, &self.v);
        ProblemSpec::new(
            OperatorSpec::pucci_max(self.params),
            OperatorSpec::pucci_min(self.params),
            f,
            g,
            u0,
            v0,
        )
    }

    pub fn problem(&self, n: usize) -> Result<ProblemSpec> {
        let domain = build_domain(self.dim, self.shape, n)?;
        self.problem_on(&domain)
    }
}

/// The case library with default ellipticity constants (1, 2).
pub fn analytic_library() -> Vec<AnalyticCase> {
    analytic_library_with(PucciParams::new(1.0, 2.0).expect("default ellipticity"))
}

/// The case library:
/// - `one_d_optimal`: the sharp one-dimensional pair with a quadratic kink,
/// - `radial_2d`: its radial analogue with contact disc of radius 1/2,
/// - `fb_counterexample`: the cubic perturbation of a saddle whose gap
///   grows like the cube of the distance to the free boundary.
pub fn analytic_library_with(params: PucciParams) -> Vec<AnalyticCase> {
    let (lam, lam_max) = (params.lambda, params.lambda_max);
    let cases = vec![
        AnalyticCase {
            name: "one_d_optimal",
            dim: 1,
            shape: Shape::Interval,
            params,
            u: Box::new(|p| {
                let xp = p[0].max(0.0);
                0.5 * xp * xp
            }),
            v: Box::new(|p| {
                let xp = p[0].max(0.0);
                -0.5 * xp * xp
            }),
            f: Box::new(move |_| lam_max),
            g: Box::new(move |_| -lam_max),
            contact: ContactRegion::LeftHalf,
            tol_factor: 10.0,
        },
        AnalyticCase {
            name: "radial_2d",
            dim: 2,
            shape: Shape::Disc,
            params,
            u: Box::new(|p| {
                let s = (f64::hypot(p[0], p[1]) - 0.5).max(0.0);
                s * s
            }),
            v: Box::new(|p| {
                let s = (f64::hypot(p[0], p[1]) - 0.5).max(0.0);
                -s * s
            }),
            // radial Hessian eigenvalues are (2, 2 - 1/r) outside the
            // contact disc, both nonnegative, so the upper operator sees
            // lam_max times the trace; inside the pair is flat
            f: Box::new(move |p| {
                let r = f64::hypot(p[0], p[1]);
                if r <= 0.5 {
                    2.0 * lam_max
                } else {
                    lam_max * (4.0 - 1.0 / r)
                }
            }),
            g: Box::new(move |p| {
                let r = f64::hypot(p[0], p[1]);
                if r <= 0.5 {
                    -2.0 * lam_max
                } else {
                    -lam_max * (4.0 - 1.0 / r)
                }
            }),
            contact: ContactRegion::Ball { radius: 0.5 },
            tol_factor: 60.0,
        },
        AnalyticCase {
            name: "fb_counterexample",
            dim: 2,
            shape: Shape::Box,
            params,
            u: Box::new(|p| {
                let xp = p[0].max(0.0);
                p[0] * p[0] - p[1] * p[1] + xp * xp * xp
            }),
            v: Box::new(|p| p[0] * p[0] - p[1] * p[1]),
            f: Box::new(move |p| 2.0 * (lam_max - lam) + 6.0 * lam_max * p[0].max(0.0)),
            g: Box::new(move |_| -2.0 * (lam_max - lam)),
            contact: ContactRegion::LeftHalf,
            tol_factor: 30.0,
        },
    ];
    for case in &cases {
        self_check(case);
    }
    cases
}

/// Registration check: the stored closed forms must satisfy the discrete
/// system they claim to solve on a coarse grid.
fn self_check(case: &AnalyticCase) {
    let domain = build_domain(case.dim, case.shape, 21).expect("self-check domain");
    let problem = case.problem_on(&domain).expect("self-check problem");
    let pair = case.pair_on(&domain);
    let fs = FrameSet::new(case.dim, domain.stencil_width()).expect("self-check frames");
    let tol = case.tol_factor * domain.h();
    let report = residual_report(&pair, &problem, tol, &fs).expect("self-check report");
    assert!(
        report.flags.all(),
        "analytic case {} fails its own residual check: {:?}",
        case.name,
        report.flags
    );
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResidualFlags {
    pub supersolution_f: bool,
    pub equation_f_on_omega: bool,
    pub subsolution_g: bool,
    pub equation_g_on_omega: bool,
    pub ordering: bool,
}

impl ResidualFlags {
    pub fn all(&self) -> bool {
        self.supersolution_f
            && self.equation_f_on_omega
            && self.subsolution_g
            && self.equation_g_on_omega
            && self.ordering
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub flag: &'static str,
    pub pos: [f64; 2],
    pub value: f64,
    pub near_free_boundary: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub tol: f64,
    pub flags: ResidualFlags,
    pub passed: bool,
    /// largest value of `F(D^2 u) - f` over interior nodes
    pub max_rf: f64,
    pub max_rf_at: [f64; 2],
    /// most negative value of `G(D^2 v) - g` over interior nodes
    pub min_rg: f64,
    pub min_rg_at: [f64; 2],
    pub max_abs_rf_on_omega: f64,
    pub max_abs_rg_on_omega: f64,
    pub min_gap: f64,
    pub min_gap_at: [f64; 2],
    pub omega_nodes: usize,
    pub violation_count: usize,
    /// capped listing of the violating nodes
    pub violations: Vec<Violation>,
    /// every violation sits within one stencil width of the free boundary
    pub violations_near_free_boundary: bool,
    #[serde(skip)]
    pub rf: Vec<f64>,
    #[serde(skip)]
    pub rg: Vec<f64>,
    #[serde(skip)]
    pub gap: Vec<f64>,
}

const MAX_LISTED_VIOLATIONS: usize = 64;

/// Nodes where the contact mask flips across an axis neighbor.
fn free_boundary_nodes(domain: &Domain, mask: &[bool]) -> Vec<usize> {
    let mut fb = Vec::new();
    for idx in 0..domain.node_count() {
        if domain.class(idx) == NodeClass::Exterior {
            continue;
        }
        let mut flips = false;
        for dir in [[1, 0], [0, 1]].iter().take(domain.dim()) {
            for sign in [1, -1] {
                if let Some(nb) = domain.step(idx, *dir, sign) {
                    if domain.class(nb) != NodeClass::Exterior && mask[nb] != mask[idx] {
                        flips = true;
                    }
                }
            }
        }
        if flips {
            fb.push(idx);
        }
    }
    fb
}

/// Evaluates the residual arrays of the discrete system and the five
/// certification flags at tolerance `tol`. The equation flags apply on the
/// non-contact nodes recorded in the pair's mask.
pub fn residual_report(
    pair: &SolutionPair,
    problem: &ProblemSpec,
    tol: f64,
    fs: &FrameSet,
) -> Result<ResidualReport> {
    let dom = &problem.domain;
    if !pair.u.domain().same_grid(dom) || !pair.v.domain().same_grid(dom) {
        return Err(Error::DomainMismatch("residual_report pair".into()));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::Config(format!("tolerance must be nonnegative, got {tol}")));
    }
    let count = dom.node_count();
    let (rf, rg) = discrete_residuals(problem, &pair.u, &pair.v, fs)?;
    let mut gap = vec![f64::NAN; count];

    let mut flags = ResidualFlags {
        supersolution_f: true,
        equation_f_on_omega: true,
        subsolution_g: true,
        equation_g_on_omega: true,
        ordering: true,
    };
    let mut max_rf = f64::NEG_INFINITY;
    let mut max_rf_at = [f64::NAN; 2];
    let mut min_rg = f64::INFINITY;
    let mut min_rg_at = [f64::NAN; 2];
    let mut max_abs_rf_on_omega = 0.0f64;
    let mut max_abs_rg_on_omega = 0.0f64;
    let mut min_gap = f64::INFINITY;
    let mut min_gap_at = [f64::NAN; 2];
    let mut omega_nodes = 0usize;
    let mut raw_violations: Vec<(&'static str, usize, f64)> = Vec::new();

    for idx in 0..count {
        if dom.class(idx) == NodeClass::Exterior {
            continue;
        }
        let g = pair.u.get(idx) - pair.v.get(idx);
        gap[idx] = g;
        if g < min_gap {
            min_gap = g;
            min_gap_at = dom.pos(idx);
        }
        if g < -tol {
            flags.ordering = false;
            raw_violations.push(("ordering", idx, g));
        }
    }

    for &idx in dom.interior() {
        let (vf, vg) = (rf[idx], rg[idx]);
        if vf > max_rf {
            max_rf = vf;
            max_rf_at = dom.pos(idx);
        }
        if vg < min_rg {
            min_rg = vg;
            min_rg_at = dom.pos(idx);
        }
        if vf > tol {
            flags.supersolution_f = false;
            raw_violations.push(("supersolution_f", idx, vf));
        }
        if vg < -tol {
            flags.subsolution_g = false;
            raw_violations.push(("subsolution_g", idx, vg));
        }
        if !pair.contact_mask[idx] {
            omega_nodes += 1;
            max_abs_rf_on_omega = max_abs_rf_on_omega.max(vf.abs());
            max_abs_rg_on_omega = max_abs_rg_on_omega.max(vg.abs());
            if vf.abs() > tol {
                flags.equation_f_on_omega = false;
                raw_violations.push(("equation_f_on_omega", idx, vf));
            }
            if vg.abs() > tol {
                flags.equation_g_on_omega = false;
                raw_violations.push(("equation_g_on_omega", idx, vg));
            }
        }
    }

    let fb = free_boundary_nodes(dom, &pair.contact_mask);
    let near_radius =
        (dom.stencil_width() as f64 * std::f64::consts::SQRT_2 + 0.5) * dom.h() + 1e-12;
    let near_fb = |idx: usize| -> bool {
        let p = dom.pos(idx);
        fb.iter().any(|&b| {
            let q = dom.pos(b);
            f64::hypot(p[0] - q[0], p[1] - q[1]) <= near_radius
        })
    };
    let violations_near_free_boundary = raw_violations.iter().all(|&(_, idx, _)| near_fb(idx));
    let violation_count = raw_violations.len();
    let violations: Vec<Violation> = raw_violations
        .iter()
        .take(MAX_LISTED_VIOLATIONS)
        .map(|&(flag, idx, value)| Violation {
            flag,
            pos: dom.pos(idx),
            value,
            near_free_boundary: near_fb(idx),
        })
        .collect();

    Ok(ResidualReport {
        tol,
        flags,
        passed: flags.all(),
        max_rf,
        max_rf_at,
        min_rg,
        min_rg_at,
        max_abs_rf_on_omega,
        max_abs_rg_on_omega,
        min_gap,
        min_gap_at,
        omega_nodes,
        violation_count,
        violations,
        violations_near_free_boundary,
        rf,
        rg,
        gap,
    })
}

// ---------------------------------------------------------------------------
// non-uniqueness construction

/// Compactly supported C2 bump on `(-1, 0)` built from two quintic
/// smoothstep ramps, scaled to peak value `amplitude` at `x = -1/2`.
/// `max |psi''| = amplitude * 40 / sqrt(3)`.
pub fn nonuniqueness_bump(amplitude: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| {
        let t = x + 1.0;
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        let ramp = |s: f64| s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
        let q = if t <= 0.5 { ramp(2.0 * t) } else { ramp(2.0 - 2.0 * t) };
        amplitude * q
    }
}

/// Largest peak value keeping `|psi''| <= 1` on the unit support:
/// `sqrt(3) / 40`.
pub const MAX_BUMP_AMPLITUDE: f64 = 0.043_301_270_189_221_93;

#[derive(Debug)]
pub struct NonuniquenessDemo {
    pub pair1: SolutionPair,
    pub pair2: SolutionPair,
    pub report1: ResidualReport,
    pub report2: ResidualReport,
    pub sup_diff: f64,
    pub amplitude: f64,
}

/// Two distinct pairs solving the same data: the sharp one-dimensional
/// case, and the same pair shifted by an admissible bump supported in the
/// contact region. The bump is added to both membranes so the gap, and
/// with it both memberships, are unchanged.
pub fn nonuniqueness_demo(domain: &Arc<Domain>, amplitude: f64) -> Result<NonuniquenessDemo> {
    if domain.dim() != 1 {
        return Err(Error::UnsupportedDimension(domain.dim()));
    }
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(Error::Config(format!("amplitude must be nonnegative, got {amplitude}")));
    }
    if amplitude > MAX_BUMP_AMPLITUDE * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "amplitude {amplitude} drives |psi''| beyond 1 (max admissible {MAX_BUMP_AMPLITUDE:.6})"
        )));
    }
    let library = analytic_library();
    let case = library
        .iter()
        .find(|c| c.name == "one_d_optimal")
        .expect("one_d_optimal is registered");
    let problem = case.problem_on(domain)?;
    let pair1 = case.pair_on(domain);
    let bump = nonuniqueness_bump(amplitude);
    let mut u2 = pair1.u.clone();
    let mut v2 = pair1.v.clone();
    for idx in 0..domain.node_count() {
        let b = bump(domain.pos(idx)[0]);
        u2.set(idx, u2.get(idx) + b);
        v2.set(idx, v2.get(idx) + b);
    }
    let pair2 = SolutionPair::synthetic(u2, v2, pair1.contact_mask.clone());
    let fs = FrameSet::new(1, domain.stencil_width())?;
    let tol = case.tol_factor * domain.h();
    let report1 = residual_report(&pair1, &problem, tol, &fs)?;
    let report2 = residual_report(&pair2, &problem, tol, &fs)?;
    let sup_diff = pair1.u.sup_diff(&pair2.u);
    Ok(NonuniquenessDemo { pair1, pair2, report1, report2, sup_diff, amplitude })
}

// ---------------------------------------------------------------------------
// barrier check

#[derive(Debug, Clone, Serialize)]
pub struct BarrierCertificate {
    pub c: f64,
    pub gamma: f64,
    pub hnorm: f64,
    pub lambda: f64,
    pub samples: usize,
    /// sample where the inequality is tightest (the largest abscissa)
    pub binding_x: f64,
    /// slack `|M+(D^2 psi)| - hnorm` at the binding sample, nonnegative
    pub margin_at_binding: f64,
    pub all_samples_ok: bool,
}

/// Smallest constant from a geometric candidate list such that the barrier
/// `psi(x) = C x^(gamma/2)` pushes the extremal operator below `-hnorm` at
/// every sampled abscissa in `(0, 2]`. The profile term decays in `x`, so
/// the binding sample is the right endpoint.
pub fn barrier_check(
    gamma: f64,
    hnorm: f64,
    p: &PucciParams,
    samples: usize,
) -> Result<(f64, BarrierCertificate)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(hnorm.is_finite() && hnorm >= 0.0) {
        return Err(Error::Config(format!("hnorm must be nonnegative, got {hnorm}")));
    }
    if samples < 2 {
        return Err(Error::Config("need at least 2 samples".into()));
    }
    // abscissas geometric in (0, 2], ending exactly at 2
    let xs: Vec<f64> = (0..samples)
        .map(|j| {
            let e = -16.0 + 17.0 * (j as f64) / (samples as f64 - 1.0);
            2f64.powf(e)
        })
        .collect();
    // M+(D^2 psi) = C lambda (g/2)(g/2 - 1) x^(g/2 - 2): the single
    // nonzero eigenvalue is negative, the others vanish
    let exponent = gamma / 2.0 - 2.0;
    let coeff = p.lambda * (gamma / 2.0) * (gamma / 2.0 - 1.0);
    let passes = |c: f64| xs.iter().all(|&x| c * coeff * x.powf(exponent) <= -hnorm);

    let ratio: f64 = 1.002;
    let c0: f64 = 1e-8;
    let count = ((1e12f64 / c0).ln() / ratio.ln()).ceil() as usize;
    let candidate = |k: usize| c0 * ratio.powi(k as i32);
    if !passes(candidate(count)) {
        return Err(Error::Config(format!(
            "no admissible barrier constant up to {:.3e}",
            candidate(count)
        )));
    }
    // the predicate is monotone in C, so binary search the candidate list
    let (mut lo, mut hi) = (0usize, count);
    if passes(candidate(0)) {
        hi = 0;
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if passes(candidate(mid)) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let c = candidate(hi);

    let mut binding_x = xs[0];
    let mut margin = f64::INFINITY;
    for &x in &xs {
        let m = -(c * coeff * x.powf(exponent)) - hnorm;
        if m < margin {
            margin = m;
            binding_x = x;
        }
    }
    let cert = BarrierCertificate {
        c,
        gamma,
        hnorm,
        lambda: p.lambda,
        samples,
        binding_x,
        margin_at_binding: margin,
        all_samples_ok: passes(c),
    };
    Ok((c, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_domain;
    use approx::assert_relative_eq;

    #[test]
    fn library_registers_and_self_checks() {
        let lib = analytic_library();
        assert_eq!(lib.len(), 3);
        let names: Vec<_> = lib.iter().map(|c| c.name).collect();
        assert_eq!(names, ["one_d_optimal", "radial_2d", "fb_counterexample"]);
    }

    #[test]
    fn library_data_values() {
        let lib = analytic_library();
        let one_d = &lib[0];
        assert_eq!((one_d.f)(&[0.3]), 2.0);
        assert_eq!((one_d.g)(&[-0.4]), -2.0);
        let radial = &lib[1];
        // at the kink circle the tangential eigenvalue vanishes, leaving
        // twice lam_max from the radial one
        assert_relative_eq!((radial.f)(&[0.5 + 1e-9, 0.0]), 4.0, max_relative = 1e-6);
        assert_eq!((radial.f)(&[0.25, 0.0]), 4.0);
        let fb = &lib[2];
        assert_eq!((fb.g)(&[0.1, 0.2]), -2.0);
        assert_eq!((fb.f)(&[0.5, 0.0]), 2.0 + 6.0 * 2.0 * 0.5);
    }

    #[test]
    fn residual_report_flags_on_exact_case() {
        let lib = analytic_library();
        let case = &lib[0];
        let dom = build_domain(1, Shape::Interval, 101).unwrap();
        let problem = case.problem_on(&dom).unwrap();
        let pair = case.pair_on(&dom);
        let fs = FrameSet::new(1, 2).unwrap();
        let report = residual_report(&pair, &problem, case.tol_factor * dom.h(), &fs).unwrap();
        assert!(report.passed, "violations: {:?}", report.violations);
        assert!(report.violations_near_free_boundary);
        // off the contact set the equations hold to roundoff, which
        // scales like ulp(u) / h^2
        assert!(report.max_abs_rf_on_omega < 1e-10);
    }

    #[test]
    fn ordering_flag_fires() {
        let lib = analytic_library();
        let case = &lib[0];
        let dom = build_domain(1, Shape::Interval, 41).unwrap();
        let problem = case.problem_on(&dom).unwrap();
        let mut pair = case.pair_on(&dom);
        // push u below v somewhere inside the contact region
        let idx = dom.n() / 4;
        pair.u.set(idx, pair.v.get(idx) - 1.0);
        let fs = FrameSet::new(1, 2).unwrap();
        let report = residual_report(&pair, &problem, case.tol_factor * dom.h(), &fs).unwrap();
        assert!(!report.flags.ordering);
        assert!(!report.passed);
        assert!(report.violations.iter().any(|v| v.flag == "ordering"));
    }

    #[test]
    fn flags_monotone_in_tol() {
        let lib = analytic_library();
        let case = &lib[2];
        let dom = build_domain(2, Shape::Box, 41).unwrap();
        let problem = case.problem_on(&dom).unwrap();
        let pair = case.pair_on(&dom);
        let fs = FrameSet::new(2, 2).unwrap();
        let tols = [1e-6, 1e-3, 0.1, 1.0, 10.0];
        let mut prev_pass = [false; 5];
        for tol in tols {
            let report = residual_report(&pair, &problem, tol, &fs).unwrap();
            let cur = [
                report.flags.supersolution_f,
                report.flags.equation_f_on_omega,
                report.flags.subsolution_g,
                report.flags.equation_g_on_omega,
                report.flags.ordering,
            ];
            for k in 0..5 {
                assert!(!prev_pass[k] || cur[k], "flag {k} regressed when tol grew to {tol}");
            }
            prev_pass = cur;
        }
    }

    #[test]
    fn nonuniqueness_zero_amplitude_identical() {
        let dom = build_domain(1, Shape::Interval, 101).unwrap();
        let demo = nonuniqueness_demo(&dom, 0.0).unwrap();
        assert_eq!(demo.sup_diff, 0.0);
        assert!(demo.report1.passed && demo.report2.passed);
    }

    #[test]
    fn nonuniqueness_admissible_amplitude() {
        let dom = build_domain(1, Shape::Interval, 201).unwrap();
        let amplitude = 0.02;
        let demo = nonuniqueness_demo(&dom, amplitude).unwrap();
        assert!(demo.report1.passed, "{:?}", demo.report1.violations);
        assert!(demo.report2.passed, "{:?}", demo.report2.violations);
        assert!(demo.sup_diff >= amplitude / 2.0);
        // the pairs differ only inside (-1, 0)
        for idx in 0..dom.node_count() {
            let x = dom.pos(idx)[0];
            if x >= 0.0 {
                assert_eq!(demo.pair1.u.get(idx), demo.pair2.u.get(idx));
            }
        }
    }

    #[test]
    fn nonuniqueness_rejects_excessive_amplitude() {
        let dom = build_domain(1, Shape::Interval, 101).unwrap();
        assert!(nonuniqueness_demo(&dom, 0.1).is_err());
    }

    #[test]
    fn inadmissible_bump_fails_a_flag() {
        // bypass the guard: a bump with |psi''| > 1 makes the shifted pair
        // violate a one-sided inequality inside the contact set
        let dom = build_domain(1, Shape::Interval, 201).unwrap();
        let lib = analytic_library();
        let case = &lib[0];
        let problem = case.problem_on(&dom).unwrap();
        let pair1 = case.pair_on(&dom);
        let bump = nonuniqueness_bump(4.0 * MAX_BUMP_AMPLITUDE);
        let mut u2 = pair1.u.clone();
        let mut v2 = pair1.v.clone();
        for idx in 0..dom.node_count() {
            let b = bump(dom.pos(idx)[0]);
            u2.set(idx, u2.get(idx) + b);
            v2.set(idx, v2.get(idx) + b);
        }
        let pair2 = SolutionPair::synthetic(u2, v2, pair1.contact_mask.clone());
        let fs = FrameSet::new(1, 2).unwrap();
        let report = residual_report(&pair2, &problem, case.tol_factor * dom.h(), &fs).unwrap();
        assert!(!report.flags.supersolution_f || !report.flags.subsolution_g);
    }

    #[test]
    fn barrier_matches_hand_value() {
        // C (1/4)(3/4) 2^(gamma/2 - 2) = 1 at the binding point x = 2
        // gives C = 16 * 2^(7/4) / 3
        let p = PucciParams::new(1.0, 2.0).unwrap();
        let (c, cert) = barrier_check(0.5, 1.0, &p, 512).unwrap();
        let exact = 16.0 * 2f64.powf(7.0 / 4.0) / 3.0;
        assert!((c - exact).abs() / exact < 0.01, "c = {c}, exact = {exact}");
        assert!(c >= exact);
        assert_eq!(cert.binding_x, 2.0);
        assert!(cert.all_samples_ok);
        assert!(cert.margin_at_binding >= 0.0);
    }

    #[test]
    fn barrier_zero_hnorm() {
        let p = PucciParams::new(1.0, 2.0).unwrap();
        let (c, cert) = barrier_check(0.5, 0.0, &p, 64).unwrap();
        assert_eq!(c, 1e-8);
        assert!(cert.all_samples_ok);
    }

    #[test]
    fn barrier_constant_decreases_toward_gamma_one() {
        // the required constant is hnorm / (lambda k(gamma) 2^(gamma/2 - 2))
        // with k(gamma) = (gamma/2)(1 - gamma/2) increasing on (0, 1), so
        // it shrinks as gamma grows
        let p = PucciParams::new(1.0, 2.0).unwrap();
        let mut prev = f64::INFINITY;
        for gamma in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let (c, _) = barrier_check(gamma, 1.0, &p, 128).unwrap();
            assert!(c < prev, "gamma {gamma}: {c} !< {prev}");
            prev = c;
        }
    }

    #[test]
    fn barrier_input_guards() {
        let p = PucciParams::new(1.0, 2.0).unwrap();
        assert!(barrier_check(0.0, 1.0, &p, 16).is_err());
        assert!(barrier_check(1.0, 1.0, &p, 16).is_err());
        assert!(barrier_check(0.5, -1.0, &p, 16).is_err());
    }
}
