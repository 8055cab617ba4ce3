//! Dirichlet solves for single Bellman-type equations, the penalized
//! fixed-point map for the coupled pair, and the penalty-scale continuation
//! that produces the two-membranes solution.
//!
//! The discrete operator is strictly decreasing in the center value, so
//! each nodal update solves a scalar root problem with a guaranteed
//! bracket (safeguarded Newton with bisection fallback). Sweeping those
//! updates is the reference relaxation; an over-relaxation factor
//! accelerates it without changing the fixed point.
//!
//! Two routes to the penalized system are provided. `t_map` iterates the
//! decoupled fixed-point map (solve both equations against the frozen
//! gap); it mirrors the existence construction but the map is antitone in
//! the gap with a Lipschitz constant growing like `N / epsilon`, so plain
//! iteration cycles once the penalty scale is small. The `coupled` sweep
//! treats the penalty implicitly inside each nodal solve (a 2x2 monotone
//! system reduced to a scalar root in the gap) and is the production path
//! for the continuation.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Domain, Field, FrameSet, NodeClass};
use crate::penalty::{beta_eps_eval, beta_eps_prime, PenaltyConfig, PenaltyProfile};
use crate::pucci::{operator_eval, OperatorKind, OperatorSpec, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    GaussSeidel,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    /// Penalty handled implicitly in each nodal solve.
    Coupled,
    /// Picard iteration of the decoupled penalized map.
    TMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageCount {
    /// Continue until the penalty scale drops below `h^2`.
    Auto,
    Fixed(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relaxation {
    /// `2 / (1 + sin(pi h))`, capped at 1.95; plain sweeps for Jacobi.
    Auto,
    Factor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub eps0: f64,
    pub eps_factor: f64,
    pub eps_stages: StageCount,
    pub inner_tol: f64,
    pub picard_tol: f64,
    pub max_inner: usize,
    pub max_picard: usize,
    pub sweep: Sweep,
    pub relaxation: Relaxation,
    pub coupling: CouplingMode,
    pub picard_damping: f64,
    /// `None` selects `4 h^2`, matched to the quadratic kink of the
    /// constrained pair.
    pub contact_tol: Option<f64>,
    pub profile: PenaltyProfile,
    pub stencil_width: u32,
}

impl SolverConfig {
    pub fn for_dim(dim: usize) -> Self {
        Self {
            eps0: 0.5,
            eps_factor: 0.5,
            eps_stages: StageCount::Auto,
            inner_tol: if dim == 1 { 1e-8 } else { 1e-7 },
            picard_tol: 1e-8,
            max_inner: 200_000,
            max_picard: 200,
            sweep: Sweep::GaussSeidel,
            relaxation: Relaxation::Auto,
            coupling: CouplingMode::Coupled,
            picard_damping: 1.0,
            contact_tol: None,
            profile: PenaltyProfile::default(),
            stencil_width: crate::grid::DEFAULT_STENCIL_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("eps0", self.eps0),
            ("inner_tol", self.inner_tol),
            ("picard_tol", self.picard_tol),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eps_factor > 0.0 && self.eps_factor < 1.0) {
            return Err(Error::Config(format!(
                "eps_factor must lie in (0, 1), got {}",
                self.eps_factor
            )));
        }
        if !(self.picard_damping > 0.0 && self.picard_damping <= 1.0) {
            return Err(Error::Config(format!(
                "picard_damping must lie in (0, 1], got {}",
                self.picard_damping
            )));
        }
        if let Relaxation::Factor(w) = self.relaxation {
            if !(w > 0.0 && w < 2.0) {
                return Err(Error::Config(format!(
                    "relaxation factor must lie in (0, 2), got {w}"
                )));
            }
        }
        if let Some(tol) = self.contact_tol {
            if !(tol > 0.0) {
                return Err(Error::Config(format!("contact_tol must be positive, got {tol}")));
            }
        }
        if self.max_inner == 0 || self.max_picard == 0 {
            return Err(Error::Config("iteration caps must be >= 1".into()));
        }
        if self.stencil_width == 0 {
            return Err(Error::Config("stencil width must be >= 1".into()));
        }
        Ok(())
    }

    pub fn resolved_contact_tol(&self, h: f64) -> f64 {
        self.contact_tol.unwrap_or(4.0 * h * h)
    }

    pub fn resolved_stages(&self, h: f64) -> u32 {
        match self.eps_stages {
            StageCount::Fixed(k) => k.max(1),
            StageCount::Auto => {
                let target = h * h;
                let mut eps = self.eps0;
                let mut k = 1u32;
                while eps > target && k < 60 {
                    eps *= self.eps_factor;
                    k += 1;
                }
                k
            }
        }
    }

    fn omega(&self, h: f64) -> f64 {
        match (self.relaxation, self.sweep) {
            (Relaxation::Factor(w), _) => w,
            (Relaxation::Auto, Sweep::Jacobi) => 1.0,
            (Relaxation::Auto, Sweep::GaussSeidel) => {
                (2.0 / (1.0 + (std::f64::consts::PI * h).sin())).min(1.95)
            }
        }
    }
}

/// Full data of the constrained problem on a discrete domain.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: Arc<Domain>,
    pub f_op: OperatorSpec,
    pub g_op: OperatorSpec,
    pub f: Field,
    pub g: Field,
    pub u0: Field,
    pub v0: Field,
    /// Accept operator pairs with `F(X) <= -G(-X)` instead of equality.
    pub relaxed_compatibility: bool,
    /// Accept `f - g < 0` (the regime with no contact set).
    pub allow_degenerate: bool,
}

impl ProblemSpec {
    pub fn new(
        f_op: OperatorSpec,
        g_op: OperatorSpec,
        f: Field,
        g: Field,
        u0: Field,
        v0: Field,
    ) -> Result<Self> {
        Self::with_flags(f_op, g_op, f, g, u0, v0, false, false)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_flags(
        f_op: OperatorSpec,
        g_op: OperatorSpec,
        f: Field,
        g: Field,
        u0: Field,
        v0: Field,
        relaxed_compatibility: bool,
        allow_degenerate: bool,
    ) -> Result<Self> {
        let spec = Self {
            domain: Arc::clone(f.domain()),
            f_op,
            g_op,
            f,
            g,
            u0,
            v0,
            relaxed_compatibility,
            allow_degenerate,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let dom = &self.domain;
        for (name, field) in [
            ("f", &self.f),
            ("g", &self.g),
            ("u0", &self.u0),
            ("v0", &self.v0),
        ] {
            if !field.domain().same_grid(dom) {
                return Err(Error::DomainMismatch(format!("field {name}")));
            }
            field.check_finite()?;
        }
        if !self.f_op.kind.is_convex() {
            return Err(Error::Config(format!(
                "upper operator must be a max kind, got {:?}",
                self.f_op.kind
            )));
        }
        if self.g_op.kind.is_convex() {
            return Err(Error::Config(format!(
                "lower operator must be a min kind, got {:?}",
                self.g_op.kind
            )));
        }
        self.f_op.validate(Some(dom.dim()))?;
        self.g_op.validate(Some(dom.dim()))?;
        self.check_compatibility()?;

        for &idx in dom.boundary() {
            if self.u0.get(idx) < self.v0.get(idx) {
                let p = dom.boundary_point(idx);
                return Err(Error::Config(format!(
                    "boundary data must satisfy u0 > v0 on the domain boundary; \
                     u0 - v0 = {:.3e} at ({:.4}, {:.4})",
                    self.u0.get(idx) - self.v0.get(idx),
                    p[0],
                    p[1]
                )));
            }
        }
        if !self.allow_degenerate {
            for idx in 0..dom.node_count() {
                if dom.class(idx) == NodeClass::Exterior {
                    continue;
                }
                let d = self.f.get(idx) - self.g.get(idx);
                let scale = 1.0 + self.f.get(idx).abs() + self.g.get(idx).abs();
                if d < -1e-12 * scale {
                    let p = dom.pos(idx);
                    return Err(Error::Config(format!(
                        "f - g must be nonnegative (or set allow_degenerate); \
                         f - g = {:.3e} at ({:.4}, {:.4})",
                        d, p[0], p[1]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sampled check of `G(X) = -F(-X)` (or the relaxed one-sided version).
    fn check_compatibility(&self) -> Result<()> {
        let dim = self.domain.dim();
        let mut samples: Vec<SymMatrix> = Vec::new();
        let grid = [-2.0, -0.7, 0.0, 0.4, 1.5];
        if dim == 1 {
            for &a in &grid {
                samples.push(SymMatrix::sym1(a));
            }
        } else {
            for &a in &grid {
                for &d in &grid {
                    samples.push(SymMatrix::sym2(a, 0.0, d));
                }
            }
            let pucci_pair = self.f_op.family.is_empty() && self.g_op.family.is_empty();
            if pucci_pair {
                samples.push(SymMatrix::sym2(1.0, 0.8, -0.5));
                samples.push(SymMatrix::sym2(-2.0, 1.3, 0.1));
                samples.push(SymMatrix::sym2(0.0, -1.0, 0.0));
            }
        }
        for x in &samples {
            let lhs = operator_eval(&self.g_op, x)?;
            let rhs = -operator_eval(&self.f_op, &x.neg())?;
            let scale = 1.0 + lhs.abs().max(rhs.abs());
            let ok = if self.relaxed_compatibility {
                // F(X) <= -G(-X), i.e. -rhs side of the identity may slack
                operator_eval(&self.f_op, x)? <= -operator_eval(&self.g_op, &x.neg())? + 1e-12 * scale
            } else {
                (lhs - rhs).abs() <= 1e-12 * scale
            };
            if !ok {
                return Err(Error::Config(
                    "operators are not compatible (G(X) = -F(-X) fails on a sample; \
                     set relaxed_compatibility to accept one-sided pairs)"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    /// Penalty depth `N = sup |f - g|`.
    pub fn penalty_depth(&self) -> f64 {
        let mut m = 0.0f64;
        for idx in 0..self.domain.node_count() {
            if self.domain.class(idx) != NodeClass::Exterior {
                m = m.max((self.f.get(idx) - self.g.get(idx)).abs());
            }
        }
        m
    }

    pub fn penalty(&self, eps: f64, profile: PenaltyProfile) -> Result<PenaltyConfig> {
        PenaltyConfig::new(self.penalty_depth(), eps, profile)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsStage {
    pub eps: f64,
    pub iterations: usize,
    pub residual_f: f64,
    pub residual_g: f64,
    /// sup-norm change of (u, v) relative to the previous stage
    pub change: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub frames: Vec<String>,
    pub stencil_width: u32,
    pub inner_tol: f64,
    pub contact_tol: f64,
    pub penalty_depth: f64,
    pub init_iterations: usize,
    pub eps_trace: Vec<EpsStage>,
    pub residual_f: f64,
    pub residual_g: f64,
    pub min_gap: f64,
    pub contact_nodes: usize,
    #[serde(skip)]
    pub wall: Duration,
}

impl SolveReport {
    pub fn synthetic() -> Self {
        Self {
            frames: Vec::new(),
            stencil_width: 0,
            inner_tol: 0.0,
            contact_tol: 0.0,
            penalty_depth: 0.0,
            init_iterations: 0,
            eps_trace: Vec::new(),
            residual_f: 0.0,
            residual_g: 0.0,
            min_gap: 0.0,
            contact_nodes: 0,
            wall: Duration::ZERO,
        }
    }
}

/// The computed pair with its contact mask and convergence report.
#[derive(Debug, Clone)]
pub struct SolutionPair {
    pub u: Field,
    pub v: Field,
    pub contact_mask: Vec<bool>,
    pub report: SolveReport,
}

impl SolutionPair {
    /// Wraps externally produced fields (analytic cases, loaded files).
    pub fn synthetic(u: Field, v: Field, contact_mask: Vec<bool>) -> Self {
        Self { u, v, contact_mask, report: SolveReport::synthetic() }
    }

    pub fn gap(&self) -> Field {
        let mut gap = self.u.clone();
        for idx in 0..gap.domain().node_count() {
            let v = self.v.get(idx);
            let g = gap.get(idx) - v;
            gap.set(idx, g);
        }
        gap
    }
}

// ---------------------------------------------------------------------------
// sweep machinery

/// Precomputed stencil data for fast sweeps: per interior node the arm
/// indices for every frame direction, the admissible-frame mask, and the
/// denominators `h^2 |e|^2`. The arithmetic matches
/// [`crate::grid::discrete_operator`] term by term so residuals agree
/// bitwise with the public evaluation path.
struct Plan {
    frame_count: usize,
    dirs_per_frame: usize,
    den: Vec<f64>,
    nodes: Vec<u32>,
    arms: Vec<u32>,
    frame_ok: Vec<u32>,
    /// per node: min over admissible frames of `sum_d 1/den_d`, giving the
    /// lower bound `2 lambda * min_inv_sum` on the center slope magnitude
    min_inv_sum: Vec<f64>,
}

impl Plan {
    fn n_dirs(&self) -> usize {
        self.frame_count * self.dirs_per_frame
    }

    fn build(dom: &Arc<Domain>, fs: &FrameSet) -> Result<Self> {
        if fs.dim() != dom.dim() {
            return Err(Error::DomainMismatch(format!(
                "frame set is {}D, domain is {}D",
                fs.dim(),
                dom.dim()
            )));
        }
        if fs.frames().len() > 32 {
            return Err(Error::Config("frame sets above 32 frames are not supported".into()));
        }
        let frame_count = fs.frames().len();
        let dirs_per_frame = dom.dim();
        let n_dirs = frame_count * dirs_per_frame;
        let h2 = dom.h() * dom.h();
        let mut den = Vec::with_capacity(n_dirs);
        for frame in fs.frames() {
            for k in 0..dirs_per_frame {
                den.push(h2 * frame.norm2[k] as f64);
            }
        }
        let interior = dom.interior();
        let mut arms = vec![u32::MAX; interior.len() * n_dirs * 2];
        let mut frame_ok = vec![0u32; interior.len()];
        let mut min_inv_sum = vec![0.0f64; interior.len()];
        for (slot, &idx) in interior.iter().enumerate() {
            let base = slot * n_dirs * 2;
            let mut mask = 0u32;
            let mut best_inv = f64::INFINITY;
            for (fi, frame) in fs.frames().iter().enumerate() {
                let mut ok = true;
                let mut inv_sum = 0.0;
                for (k, dir) in frame.dirs.iter().enumerate() {
                    match dom.arm(idx, *dir) {
                        Some((plus, minus)) => {
                            let d = fi * dirs_per_frame + k;
                            arms[base + 2 * d] = plus as u32;
                            arms[base + 2 * d + 1] = minus as u32;
                            inv_sum += 1.0 / den[d];
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    mask |= 1 << fi;
                    best_inv = best_inv.min(inv_sum);
                }
            }
            if mask == 0 {
                return Err(Error::OutOfStencil { node: idx, dx: 1, dy: 0 });
            }
            frame_ok[slot] = mask;
            min_inv_sum[slot] = best_inv;
        }
        Ok(Self {
            frame_count,
            dirs_per_frame,
            den,
            nodes: interior.iter().map(|&i| i as u32).collect(),
            arms,
            frame_ok,
            min_inv_sum,
        })
    }
}

/// Operator value and its slope in the center value, at center value `s`.
#[inline]
fn value_slope(spec: &OperatorSpec, plan: &Plan, slot: usize, vals: &[f64], s: f64) -> (f64, f64) {
    let nd = plan.n_dirs();
    let base = slot * nd * 2;
    let mask = plan.frame_ok[slot];
    let convex = spec.kind.is_convex();
    let mut best = f64::NAN;
    let mut best_slope = 0.0;
    let mut deltas = [0.0f64; 2];
    for fi in 0..plan.frame_count {
        if mask & (1 << fi) == 0 {
            continue;
        }
        for k in 0..plan.dirs_per_frame {
            let d = fi * plan.dirs_per_frame + k;
            let p = plan.arms[base + 2 * d] as usize;
            let m = plan.arms[base + 2 * d + 1] as usize;
            deltas[k] = (vals[p] - 2.0 * s + vals[m]) / plan.den[d];
        }
        let (v, slope) = match spec.kind {
            OperatorKind::PucciMax | OperatorKind::PucciMin => {
                let mut v = 0.0;
                let mut sl = 0.0;
                for k in 0..plan.dirs_per_frame {
                    let d = fi * plan.dirs_per_frame + k;
                    let delta = deltas[k];
                    let up = delta > 0.0;
                    let c = if spec.kind == OperatorKind::PucciMax {
                        if up { spec.params.lambda_max } else { spec.params.lambda }
                    } else if up {
                        spec.params.lambda
                    } else {
                        spec.params.lambda_max
                    };
                    v += c * delta;
                    sl -= 2.0 * c / plan.den[d];
                }
                (v, sl)
            }
            OperatorKind::BellmanMax | OperatorKind::BellmanMin => {
                let mut v = f64::NAN;
                let mut sl = 0.0;
                for row in &spec.family {
                    let mut rv = 0.0;
                    let mut rs = 0.0;
                    for k in 0..plan.dirs_per_frame {
                        let d = fi * plan.dirs_per_frame + k;
                        rv += row[k] * deltas[k];
                        rs -= 2.0 * row[k] / plan.den[d];
                    }
                    let take = v.is_nan()
                        || (spec.kind == OperatorKind::BellmanMax && rv > v)
                        || (spec.kind == OperatorKind::BellmanMin && rv < v);
                    if take {
                        v = rv;
                        sl = rs;
                    }
                }
                (v, sl)
            }
        };
        let take = best.is_nan() || (convex && v > best) || (!convex && v < best);
        if take {
            best = v;
            best_slope = slope;
        }
    }
    (best, best_slope)
}

/// Root of `op(center = s) = rhs`. The operator is piecewise linear and
/// strictly decreasing in `s`, so the residual gives an exact bracket and
/// Newton with bisection fallback terminates fast. Returns the root and
/// the operator slope there.
fn solve_center(
    spec: &OperatorSpec,
    plan: &Plan,
    slot: usize,
    vals: &[f64],
    rhs: f64,
    init: f64,
) -> (f64, f64) {
    let min_slope = 2.0 * spec.params.lambda * plan.min_inv_sum[slot];
    let mut s = init;
    let (v, mut slope) = value_slope(spec, plan, slot, vals, s);
    let mut r = v - rhs;
    if r == 0.0 {
        return (s, slope);
    }
    let dist = r.abs() / min_slope * 1.000_001 + f64::MIN_POSITIVE;
    let (mut lo, mut hi) = if r > 0.0 { (s, s + dist) } else { (s - dist, s) };
    for _ in 0..200 {
        let tol = 1e-13 * (1.0 + s.abs());
        if hi - lo <= tol {
            break;
        }
        let mut s_new = if slope < 0.0 { s - r / slope } else { 0.5 * (lo + hi) };
        if !(s_new > lo && s_new < hi) {
            s_new = 0.5 * (lo + hi);
        }
        s = s_new;
        let (vv, sl) = value_slope(spec, plan, slot, vals, s);
        slope = sl;
        r = vv - rhs;
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
    }
    (s, slope)
}

fn residual_single(spec: &OperatorSpec, plan: &Plan, vals: &[f64], rhs: &[f64]) -> f64 {
    let mut sup = 0.0f64;
    for slot in 0..plan.nodes.len() {
        let idx = plan.nodes[slot] as usize;
        let (v, _) = value_slope(spec, plan, slot, vals, vals[idx]);
        sup = sup.max((v - rhs[idx]).abs());
    }
    sup
}

fn sweep_single(
    spec: &OperatorSpec,
    plan: &Plan,
    vals: &mut [f64],
    scratch: &mut Vec<f64>,
    rhs: &[f64],
    omega: f64,
    sweep: Sweep,
    forward: bool,
) {
    match sweep {
        Sweep::GaussSeidel => {
            let count = plan.nodes.len();
            for step in 0..count {
                let slot = if forward { step } else { count - 1 - step };
                let idx = plan.nodes[slot] as usize;
                let s0 = vals[idx];
                let (root, _) = solve_center(spec, plan, slot, vals, rhs[idx], s0);
                vals[idx] = s0 + omega * (root - s0);
            }
        }
        Sweep::Jacobi => {
            scratch.clear();
            scratch.extend_from_slice(vals);
            for slot in 0..plan.nodes.len() {
                let idx = plan.nodes[slot] as usize;
                let s0 = scratch[idx];
                let (root, _) = solve_center(spec, plan, slot, scratch, rhs[idx], s0);
                vals[idx] = s0 + omega * (root - s0);
            }
        }
    }
}

struct SweepRun {
    iterations: usize,
}

/// Shared sweep loop: residual check first (a converged warm start exits
/// untouched), divergence guard with a deterministic one-shot restart at
/// omega = 1.
fn run_sweeps(
    vals: &mut Vec<f64>,
    mut residual: impl FnMut(&[f64]) -> f64,
    mut sweep: impl FnMut(&mut [f64], f64, bool),
    omega0: f64,
    inner_tol: f64,
    max_inner: usize,
    context: &str,
) -> Result<SweepRun> {
    let saved = vals.clone();
    let mut omega = omega0;
    let mut history = Vec::new();
    let mut total = 0usize;
    loop {
        let mut first_res = f64::NAN;
        let mut restarted = false;
        for k in 0..=max_inner {
            let res = residual(vals);
            history.push(res);
            if k == 0 {
                first_res = res;
            }
            let blown = !res.is_finite() || (k > 10 && res > 1e3 * (first_res + 1e-12));
            if blown {
                if omega > 1.0 {
                    // over-relaxation ran away; redo plainly
                    omega = 1.0;
                    *vals = saved.clone();
                    restarted = true;
                    break;
                }
                return Err(Error::Divergence(format!(
                    "{context}: residual {res:.3e} after {total} sweeps"
                )));
            }
            if res <= inner_tol {
                return Ok(SweepRun { iterations: total });
            }
            if k == max_inner {
                return Err(Error::NonConvergence {
                    context: context.to_string(),
                    iterations: total,
                    last: res,
                    history,
                });
            }
            sweep(vals, omega, k % 2 == 0);
            total += 1;
        }
        if !restarted {
            unreachable!("sweep loop exits by return unless restarting");
        }
    }
}

fn boundary_mean(boundary: &Field) -> f64 {
    let dom = boundary.domain();
    let nodes = dom.boundary();
    let sum: f64 = nodes.iter().map(|&i| boundary.get(i)).sum();
    sum / nodes.len() as f64
}

fn init_single(boundary: &Field, warm: Option<&Field>) -> Field {
    let dom = boundary.domain();
    let mut u = match warm {
        Some(w) => w.clone(),
        None => Field::constant(dom, boundary_mean(boundary)),
    };
    for &idx in dom.boundary() {
        u.set(idx, boundary.get(idx));
    }
    u
}

/// Solves `op(D^2 u) = rhs` in the interior with Dirichlet data from
/// `boundary`, to residual sup-norm `inner_tol` over interior nodes.
pub fn solve_dirichlet(
    spec: &OperatorSpec,
    rhs: &Field,
    boundary: &Field,
    dom: &Arc<Domain>,
    fs: &FrameSet,
    cfg: &SolverConfig,
    warm: Option<&Field>,
) -> Result<Field> {
    cfg.validate()?;
    if !rhs.domain().same_grid(dom) || !boundary.domain().same_grid(dom) {
        return Err(Error::DomainMismatch("solve_dirichlet fields".into()));
    }
    spec.validate(Some(dom.dim()))?;
    rhs.check_finite()?;
    let plan = Plan::build(dom, fs)?;
    let mut u = init_single(boundary, warm);
    let mut vals: Vec<f64> = u.values().to_vec();
    let mut scratch = Vec::new();
    let rhs_vals = rhs.values();
    run_sweeps(
        &mut vals,
        |v| residual_single(spec, &plan, v, rhs_vals),
        |v, omega, forward| {
            sweep_single(spec, &plan, v, &mut scratch, rhs_vals, omega, cfg.sweep, forward)
        },
        cfg.omega(dom.h()),
        cfg.inner_tol,
        cfg.max_inner,
        "dirichlet solve",
    )?;
    u.values_mut().copy_from_slice(&vals);
    u.check_finite()?;
    Ok(u)
}

// ---------------------------------------------------------------------------
// penalized system

/// One application of the decoupled fixed-point map: solve the two
/// Dirichlet problems against the frozen gap. The solves are independent
/// and run on separate threads.
pub fn penalized_map(
    problem: &ProblemSpec,
    ubar: &Field,
    vbar: &Field,
    eps: f64,
    cfg: &SolverConfig,
    fs: &FrameSet,
) -> Result<(Field, Field)> {
    let pen = problem.penalty(eps, cfg.profile)?;
    let dom = &problem.domain;
    let mut rhs_f = problem.f.clone();
    let mut rhs_g = problem.g.clone();
    for &idx in dom.interior() {
        let b = beta_eps_eval(&pen, ubar.get(idx) - vbar.get(idx));
        rhs_f.set(idx, rhs_f.get(idx) + b);
        rhs_g.set(idx, rhs_g.get(idx) - b);
    }
    let (ru, rv) = std::thread::scope(|scope| {
        let handle = scope.spawn(|| {
            solve_dirichlet(&problem.f_op, &rhs_f, &problem.u0, dom, fs, cfg, Some(ubar))
        });
        let rv = solve_dirichlet(&problem.g_op, &rhs_g, &problem.v0, dom, fs, cfg, Some(vbar));
        let ru = handle.join().expect("dirichlet solve thread panicked");
        (ru, rv)
    });
    Ok((ru?, rv?))
}

/// Residual arrays of the constrained system without the penalty term:
/// `rF = F_h(u) - f` and `rG = G_h(v) - g` at interior nodes (NaN
/// elsewhere), full-length and indexed by node.
pub fn discrete_residuals(
    problem: &ProblemSpec,
    u: &Field,
    v: &Field,
    fs: &FrameSet,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dom = &problem.domain;
    if !u.domain().same_grid(dom) || !v.domain().same_grid(dom) {
        return Err(Error::DomainMismatch("discrete_residuals fields".into()));
    }
    let plan = Plan::build(dom, fs)?;
    let mut rf = vec![f64::NAN; dom.node_count()];
    let mut rg = vec![f64::NAN; dom.node_count()];
    let (uv, vv) = (u.values(), v.values());
    let (f, g) = (problem.f.values(), problem.g.values());
    for slot in 0..plan.nodes.len() {
        let idx = plan.nodes[slot] as usize;
        let (fv, _) = value_slope(&problem.f_op, &plan, slot, uv, uv[idx]);
        let (gv, _) = value_slope(&problem.g_op, &plan, slot, vv, vv[idx]);
        rf[idx] = fv - f[idx];
        rg[idx] = gv - g[idx];
    }
    Ok((rf, rg))
}

fn residual_coupled(
    problem: &ProblemSpec,
    plan: &Plan,
    pen: &PenaltyConfig,
    u: &[f64],
    v: &[f64],
) -> (f64, f64) {
    let f = problem.f.values();
    let g = problem.g.values();
    let mut sup_f = 0.0f64;
    let mut sup_g = 0.0f64;
    for slot in 0..plan.nodes.len() {
        let idx = plan.nodes[slot] as usize;
        let b = beta_eps_eval(pen, u[idx] - v[idx]);
        let (fv, _) = value_slope(&problem.f_op, plan, slot, u, u[idx]);
        let (gv, _) = value_slope(&problem.g_op, plan, slot, v, v[idx]);
        sup_f = sup_f.max((fv - f[idx] - b).abs());
        sup_g = sup_g.max((gv - g[idx] + b).abs());
    }
    (sup_f, sup_g)
}

/// Nodal solve of the 2x2 penalized system with neighbors frozen:
/// `F(s) = rhs_f + beta_eps(s - t)`, `G(t) = rhs_g - beta_eps(s - t)`.
/// Reduced to a scalar root in the gap `q = s - t`; the reduced function
/// has slope <= -1 so the bracket `[0, eps]` (after the two saturated
/// cases are ruled out) pins the root.
#[allow(clippy::too_many_arguments)]
fn coupled_node_solve(
    problem: &ProblemSpec,
    plan: &Plan,
    slot: usize,
    u_vals: &[f64],
    v_vals: &[f64],
    pen: &PenaltyConfig,
    rhs_f: f64,
    rhs_g: f64,
    u_init: f64,
    v_init: f64,
) -> (f64, f64) {
    // beta inactive: gap at least eps
    let (s_free, _) = solve_center(&problem.f_op, plan, slot, u_vals, rhs_f, u_init);
    let (t_free, _) = solve_center(&problem.g_op, plan, slot, v_vals, rhs_g, v_init);
    let q_free = s_free - t_free;
    if q_free >= pen.epsilon {
        return (s_free, t_free);
    }
    // beta saturated at -N: gap nonpositive
    let (s_full, _) = solve_center(&problem.f_op, plan, slot, u_vals, rhs_f - pen.depth, s_free);
    let (t_full, _) = solve_center(&problem.g_op, plan, slot, v_vals, rhs_g + pen.depth, t_free);
    let q_full = s_full - t_full;
    if q_full <= 0.0 {
        return (s_full, t_full);
    }
    // transition: phi(0) = q_full > 0, phi(eps) = q_free - eps < 0
    let (mut lo, mut hi) = (0.0f64, pen.epsilon);
    let mut q = pen.epsilon * q_full / (q_full - (q_free - pen.epsilon));
    if !(q > lo && q < hi) {
        q = 0.5 * pen.epsilon;
    }
    let (mut s, mut t) = (s_full, t_full);
    for _ in 0..200 {
        let b = beta_eps_eval(pen, q);
        let (ns, s_slope) = solve_center(&problem.f_op, plan, slot, u_vals, rhs_f + b, s);
        let (nt, t_slope) = solve_center(&problem.g_op, plan, slot, v_vals, rhs_g - b, t);
        s = ns;
        t = nt;
        let phi = s - t - q;
        let tol = 1e-13 * (1.0 + q.abs());
        if phi == 0.0 {
            break;
        }
        if phi > 0.0 {
            lo = q;
        } else {
            hi = q;
        }
        if hi - lo <= tol {
            break;
        }
        let bp = beta_eps_prime(pen, q);
        let dphi = bp * (1.0 / s_slope + 1.0 / t_slope) - 1.0;
        let mut q_new = q - phi / dphi;
        if !(q_new > lo && q_new < hi) {
            q_new = 0.5 * (lo + hi);
        }
        q = q_new;
    }
    (s, t)
}

#[allow(clippy::too_many_arguments)]
fn sweep_coupled(
    problem: &ProblemSpec,
    plan: &Plan,
    pen: &PenaltyConfig,
    u: &mut [f64],
    v: &mut [f64],
    scratch_u: &mut Vec<f64>,
    scratch_v: &mut Vec<f64>,
    omega: f64,
    sweep: Sweep,
    forward: bool,
) {
    let f = problem.f.values();
    let g = problem.g.values();
    match sweep {
        Sweep::GaussSeidel => {
            let count = plan.nodes.len();
            for step in 0..count {
                let slot = if forward { step } else { count - 1 - step };
                let idx = plan.nodes[slot] as usize;
                let (s0, t0) = (u[idx], v[idx]);
                let (s, t) = coupled_node_solve(
                    problem, plan, slot, u, v, pen, f[idx], g[idx], s0, t0,
                );
                u[idx] = s0 + omega * (s - s0);
                v[idx] = t0 + omega * (t - t0);
            }
        }
        Sweep::Jacobi => {
            scratch_u.clear();
            scratch_u.extend_from_slice(u);
            scratch_v.clear();
            scratch_v.extend_from_slice(v);
            for slot in 0..plan.nodes.len() {
                let idx = plan.nodes[slot] as usize;
                let (s0, t0) = (scratch_u[idx], scratch_v[idx]);
                let (s, t) = coupled_node_solve(
                    problem, plan, slot, scratch_u, scratch_v, pen, f[idx], g[idx], s0, t0,
                );
                u[idx] = s0 + omega * (s - s0);
                v[idx] = t0 + omega * (t - t0);
            }
        }
    }
}

struct StageOutcome {
    u: Field,
    v: Field,
    iterations: usize,
    residual_f: f64,
    residual_g: f64,
}

fn unconstrained_pair(
    problem: &ProblemSpec,
    cfg: &SolverConfig,
    fs: &FrameSet,
) -> Result<(Field, Field)> {
    let dom = &problem.domain;
    let (ru, rv) = std::thread::scope(|scope| {
        let handle = scope.spawn(|| {
            solve_dirichlet(&problem.f_op, &problem.f, &problem.u0, dom, fs, cfg, None)
        });
        let rv = solve_dirichlet(&problem.g_op, &problem.g, &problem.v0, dom, fs, cfg, None);
        let ru = handle.join().expect("dirichlet solve thread panicked");
        (ru, rv)
    });
    Ok((ru?, rv?))
}

fn solve_penalized_stage(
    problem: &ProblemSpec,
    eps: f64,
    cfg: &SolverConfig,
    fs: &FrameSet,
    warm: Option<(&Field, &Field)>,
) -> Result<StageOutcome> {
    let dom = &problem.domain;
    let (mut u, mut v) = match warm {
        Some((wu, wv)) => (wu.clone(), wv.clone()),
        None => unconstrained_pair(problem, cfg, fs)?,
    };
    let pen = problem.penalty(eps, cfg.profile)?;
    let plan = Plan::build(dom, fs)?;
    match cfg.coupling {
        CouplingMode::Coupled => {
            let mut su = Vec::new();
            let mut sv = Vec::new();
            // residual and sweep act on the concatenated pair buffer
            let half = u.values().len();
            let mut pair_buf = Vec::with_capacity(2 * half);
            pair_buf.extend_from_slice(u.values());
            pair_buf.extend_from_slice(v.values());
            let run = run_sweeps(
                &mut pair_buf,
                |buf| {
                    let (a, b) = buf.split_at(half);
                    let (rf, rg) = residual_coupled(problem, &plan, &pen, a, b);
                    rf.max(rg)
                },
                |buf, omega, forward| {
                    let (a, b) = buf.split_at_mut(half);
                    sweep_coupled(
                        problem, &plan, &pen, a, b, &mut su, &mut sv, omega, cfg.sweep, forward,
                    );
                },
                cfg.omega(dom.h()),
                cfg.inner_tol,
                cfg.max_inner,
                "coupled penalized solve",
            )?;
            u.values_mut().copy_from_slice(&pair_buf[..half]);
            v.values_mut().copy_from_slice(&pair_buf[half..]);
            u.check_finite()?;
            v.check_finite()?;
            let (rf, rg) = residual_coupled(problem, &plan, &pen, u.values(), v.values());
            Ok(StageOutcome { u, v, iterations: run.iterations, residual_f: rf, residual_g: rg })
        }
        CouplingMode::TMap => {
            let theta = cfg.picard_damping;
            let mut history = Vec::new();
            for it in 0..cfg.max_picard {
                let (nu, nv) = penalized_map(problem, &u, &v, eps, cfg, fs)?;
                let mut change = 0.0f64;
                for &idx in dom.interior() {
                    let du = nu.get(idx) - u.get(idx);
                    let dv = nv.get(idx) - v.get(idx);
                    u.set(idx, u.get(idx) + theta * du);
                    v.set(idx, v.get(idx) + theta * dv);
                    change = change.max((theta * du).abs()).max((theta * dv).abs());
                }
                history.push(change);
                if change <= cfg.picard_tol {
                    let (rf, rg) = residual_coupled(problem, &plan, &pen, u.values(), v.values());
                    return Ok(StageOutcome {
                        u,
                        v,
                        iterations: it + 1,
                        residual_f: rf,
                        residual_g: rg,
                    });
                }
            }
            let last = history.last().copied().unwrap_or(f64::NAN);
            Err(Error::NonConvergence {
                context: "picard iteration of the penalized map".into(),
                iterations: cfg.max_picard,
                last,
                history,
            })
        }
    }
}

/// Solves the penalized system at a fixed scale `eps`, starting from the
/// warm pair or from the unconstrained solves.
pub fn solve_penalized(
    problem: &ProblemSpec,
    eps: f64,
    cfg: &SolverConfig,
    fs: &FrameSet,
    warm: Option<(&Field, &Field)>,
) -> Result<(Field, Field)> {
    cfg.validate()?;
    let out = solve_penalized_stage(problem, eps, cfg, fs, warm)?;
    Ok((out.u, out.v))
}

/// Full continuation: geometric penalty-scale schedule with warm starts,
/// contact-mask extraction, and the solve report.
pub fn solve_two_membranes(
    problem: &ProblemSpec,
    cfg: &SolverConfig,
    fs: &FrameSet,
) -> Result<SolutionPair> {
    let t0 = Instant::now();
    cfg.validate()?;
    problem.validate()?;
    let dom = &problem.domain;
    let h = dom.h();
    let stages = cfg.resolved_stages(h);
    let contact_tol = cfg.resolved_contact_tol(h);

    let (mut u, mut v) = unconstrained_pair(problem, cfg, fs)?;
    let init_iterations = 0usize;

    let mut trace = Vec::with_capacity(stages as usize);
    let mut residual_f = f64::NAN;
    let mut residual_g = f64::NAN;
    for k in 0..stages {
        let eps = cfg.eps0 * cfg.eps_factor.powi(k as i32);
        let out = solve_penalized_stage(problem, eps, cfg, fs, Some((&u, &v))).map_err(|e| {
            match e {
                Error::NonConvergence { context, iterations, last, history } => {
                    Error::NonConvergence {
                        context: format!("continuation stage {k} (eps = {eps:.4e}): {context}"),
                        iterations,
                        last,
                        history,
                    }
                }
                Error::Divergence(msg) => {
                    Error::Divergence(format!("continuation stage {k} (eps = {eps:.4e}): {msg}"))
                }
                other => other,
            }
        })?;
        let change = out.u.sup_diff(&u).max(out.v.sup_diff(&v));
        trace.push(EpsStage {
            eps,
            iterations: out.iterations,
            residual_f: out.residual_f,
            residual_g: out.residual_g,
            change,
        });
        u = out.u;
        v = out.v;
        residual_f = out.residual_f;
        residual_g = out.residual_g;
    }

    let mut contact_mask = vec![false; dom.node_count()];
    let mut contact_nodes = 0usize;
    let mut min_gap = f64::INFINITY;
    for idx in 0..dom.node_count() {
        if dom.class(idx) == NodeClass::Exterior {
            continue;
        }
        let gap = u.get(idx) - v.get(idx);
        min_gap = min_gap.min(gap);
        if gap <= contact_tol {
            contact_mask[idx] = true;
            contact_nodes += 1;
        }
    }
    if min_gap < -contact_tol {
        return Err(Error::Divergence(format!(
            "ordering violated: min(u - v) = {min_gap:.3e} with contact tolerance {contact_tol:.3e}"
        )));
    }
    if residual_f > cfg.inner_tol * 10.0 || residual_g > cfg.inner_tol * 10.0 {
        return Err(Error::Divergence(format!(
            "terminal residuals ({residual_f:.3e}, {residual_g:.3e}) exceed 10x inner_tol"
        )));
    }

    let report = SolveReport {
        frames: fs.describe(),
        stencil_width: fs.width(),
        inner_tol: cfg.inner_tol,
        contact_tol,
        penalty_depth: problem.penalty_depth(),
        init_iterations,
        eps_trace: trace,
        residual_f,
        residual_g,
        min_gap,
        contact_nodes,
        wall: t0.elapsed(),
    };
    Ok(SolutionPair { u, v, contact_mask, report })
}
