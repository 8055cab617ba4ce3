//! Discrete domains (interval, box, disc), scalar fields on them, and the
//! monotone wide-stencil evaluation of the discrete Pucci/Bellman operators.
//!
//! The continuum sup/inf over the ellipticity class is restricted to a
//! finite set of orthogonal lattice frames. Along each frame direction the
//! scheme uses the centered second difference, which is nondecreasing in
//! the neighbor values and decreasing in the center value, so the combined
//! operator inherits the discrete comparison principle.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pucci::{OperatorKind, OperatorSpec, SymMatrix};

pub const DEFAULT_STENCIL_WIDTH: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Interval,
    Box,
    Disc,
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval => 1,
            Shape::Box | Shape::Disc => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

/// A uniform lattice over `[-1, 1]^dim` with nodes classified against the
/// requested shape. Disc boundary nodes carry their radial projection onto
/// the unit circle, where Dirichlet data is evaluated.
#[derive(Debug)]
pub struct Domain {
    dim: usize,
    shape: Shape,
    n: usize,
    h: f64,
    stencil_width: u32,
    class: Vec<NodeClass>,
    projection: Vec<Option<[f64; 2]>>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

/// Primitive lattice directions in the canonical half-plane, one per line
/// through the origin, up to the given width.
pub fn stencil_directions(dim: usize, width: u32) -> Vec<[i32; 2]> {
    if dim == 1 {
        return vec![[1, 0]];
    }
    let w = width as i32;
    let mut dirs = Vec::new();
    for a in -w..=w {
        for b in -w..=w {
            if (a, b) == (0, 0) || !(a > 0 || (a == 0 && b > 0)) {
                continue;
            }
            if gcd(a.unsigned_abs(), b.unsigned_abs()) != 1 {
                continue;
            }
            dirs.push([a, b]);
        }
    }
    dirs.sort();
    dirs
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn build_domain(dim: usize, shape: Shape, n: usize) -> Result<Arc<Domain>> {
    build_domain_with_width(dim, shape, n, DEFAULT_STENCIL_WIDTH)
}

pub fn build_domain_with_width(
    dim: usize,
    shape: Shape,
    n: usize,
    stencil_width: u32,
) -> Result<Arc<Domain>> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if shape.dim() != dim {
        return Err(Error::Config(format!("shape {shape:?} is {}-dimensional", shape.dim())));
    }
    if n < 5 || n % 2 == 0 {
        return Err(Error::BadResolution(n));
    }
    if stencil_width == 0 {
        return Err(Error::Config("stencil width must be >= 1".into()));
    }
    let h = 2.0 / ((n - 1) as f64);
    let count = if dim == 1 { n } else { n * n };
    let mut class = vec![NodeClass::Exterior; count];
    let mut projection = vec![None; count];

    match shape {
        Shape::Interval => {
            for i in 0..n {
                class[i] = if i == 0 || i == n - 1 {
                    NodeClass::Boundary
                } else {
                    NodeClass::Interior
                };
            }
        }
        Shape::Box => {
            for j in 0..n {
                for i in 0..n {
                    let idx = j * n + i;
                    class[idx] = if i == 0 || i == n - 1 || j == 0 || j == n - 1 {
                        NodeClass::Boundary
                    } else {
                        NodeClass::Interior
                    };
                }
            }
        }
        Shape::Disc => {
            let inside = |i: i64, j: i64| -> bool {
                if i < 0 || j < 0 || i >= n as i64 || j >= n as i64 {
                    return false;
                }
                let x = -1.0 + i as f64 * h;
                let y = -1.0 + j as f64 * h;
                f64::hypot(x, y) <= 1.0 + 1e-12
            };
            let dirs = stencil_directions(2, stencil_width);
            for j in 0..n {
                for i in 0..n {
                    let idx = j * n + i;
                    if !inside(i as i64, j as i64) {
                        continue;
                    }
                    let exits = dirs.iter().any(|d| {
                        !inside(i as i64 + d[0] as i64, j as i64 + d[1] as i64)
                            || !inside(i as i64 - d[0] as i64, j as i64 - d[1] as i64)
                    });
                    if exits {
                        class[idx] = NodeClass::Boundary;
                        let x = -1.0 + i as f64 * h;
                        let y = -1.0 + j as f64 * h;
                        let r = f64::hypot(x, y);
                        projection[idx] = Some(if r > 0.0 { [x / r, y / r] } else { [1.0, 0.0] });
                    } else {
                        class[idx] = NodeClass::Interior;
                    }
                }
            }
        }
    }

    let interior: Vec<usize> =
        (0..count).filter(|&i| class[i] == NodeClass::Interior).collect();
    let boundary: Vec<usize> =
        (0..count).filter(|&i| class[i] == NodeClass::Boundary).collect();
    if interior.is_empty() {
        return Err(Error::Config(format!(
            "domain {shape:?} with n={n}, width={stencil_width} has no interior nodes"
        )));
    }

    Ok(Arc::new(Domain {
        dim,
        shape,
        n,
        h,
        stencil_width,
        class,
        projection,
        interior,
        boundary,
    }))
}

impl Domain {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn stencil_width(&self) -> u32 {
        self.stencil_width
    }

    pub fn node_count(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    pub fn class(&self, idx: usize) -> NodeClass {
        self.class[idx]
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.class[idx] == NodeClass::Interior
    }

    /// Interior node indices in fixed lexicographic sweep order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            i
        } else {
            j * self.n + i
        }
    }

    pub fn coords_of(&self, idx: usize) -> (usize, usize) {
        if self.dim == 1 {
            (idx, 0)
        } else {
            (idx % self.n, idx / self.n)
        }
    }

    pub fn pos(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.coords_of(idx);
        let x = -1.0 + i as f64 * self.h;
        let y = if self.dim == 1 { 0.0 } else { -1.0 + j as f64 * self.h };
        [x, y]
    }

    /// Where Dirichlet data is sampled for a boundary node: the node itself,
    /// or its projection onto the circle for disc domains.
    pub fn boundary_point(&self, idx: usize) -> [f64; 2] {
        self.projection[idx].unwrap_or_else(|| self.pos(idx))
    }

    /// Lattice neighbor along an integer direction, when it exists.
    pub fn step(&self, idx: usize, dir: [i32; 2], sign: i32) -> Option<usize> {
        let (i, j) = self.coords_of(idx);
        let ni = i as i64 + (sign * dir[0]) as i64;
        let nj = j as i64 + (sign * dir[1]) as i64;
        if ni < 0 || ni >= self.n as i64 {
            return None;
        }
        if self.dim == 1 {
            if nj != 0 {
                return None;
            }
            return Some(ni as usize);
        }
        if nj < 0 || nj >= self.n as i64 {
            return None;
        }
        Some(nj as usize * self.n + ni as usize)
    }

    /// Both arms of the centered stencil along `dir`, or `None` if either
    /// leaves the grid or lands on an exterior node.
    pub fn arm(&self, idx: usize, dir: [i32; 2]) -> Option<(usize, usize)> {
        let plus = self.step(idx, dir, 1)?;
        let minus = self.step(idx, dir, -1)?;
        if self.class[plus] == NodeClass::Exterior || self.class[minus] == NodeClass::Exterior {
            return None;
        }
        Some((plus, minus))
    }

    pub fn same_grid(&self, other: &Domain) -> bool {
        self.dim == other.dim
            && self.shape == other.shape
            && self.n == other.n
            && self.stencil_width == other.stencil_width
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let interior = self.interior.len();
        let boundary = self.boundary.len();
        (interior, boundary, self.node_count() - interior - boundary)
    }
}

/// Orthogonal lattice frames up to a stencil width. In 1D the single axis
/// direction; in 2D pairs of orthogonal primitive vectors of equal squared
/// length, deduplicated up to sign and order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSet {
    dim: usize,
    width: u32,
    frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub dirs: Vec<[i32; 2]>,
    pub norm2: Vec<i32>,
}

impl FrameSet {
    pub fn new(dim: usize, width: u32) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if width == 0 {
            return Err(Error::Config("frame width must be >= 1".into()));
        }
        if dim == 1 {
            return Ok(Self {
                dim,
                width,
                frames: vec![Frame { dirs: vec![[1, 0]], norm2: vec![1] }],
            });
        }
        let canon = |v: [i32; 2]| -> [i32; 2] {
            if v[0] > 0 || (v[0] == 0 && v[1] > 0) {
                v
            } else {
                [-v[0], -v[1]]
            }
        };
        let mut frames: Vec<Frame> = Vec::new();
        for d in stencil_directions(2, width) {
            let partner = canon([-d[1], d[0]]);
            let mut pair = [d, partner];
            pair.sort();
            if frames.iter().any(|f| f.dirs == pair) {
                continue;
            }
            let norm2 = pair.map(|v| v[0] * v[0] + v[1] * v[1]);
            frames.push(Frame { dirs: pair.to_vec(), norm2: norm2.to_vec() });
        }
        frames.sort_by_key(|f| (f.norm2[0], f.dirs.clone()));
        Ok(Self { dim, width, frames })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// Human-readable frame list for solve reports.
    pub fn describe(&self) -> Vec<String> {
        self.frames
            .iter()
            .map(|f| {
                f.dirs
                    .iter()
                    .map(|d| {
                        if self.dim == 1 {
                            "(1)".to_string()
                        } else {
                            format!("({},{})", d[0], d[1])
                        }
                    })
                    .collect::<Vec<_>>()
                    .join("/")
            })
            .collect()
    }
}

/// Scalar grid function with finite values on every non-exterior node.
#[derive(Debug, Clone)]
pub struct Field {
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl Field {
    pub fn constant(domain: &Arc<Domain>, value: f64) -> Self {
        Self { domain: Arc::clone(domain), values: vec![value; domain.node_count()] }
    }

    /// Samples a closed form at the node positions of every non-exterior
    /// node.
    pub fn from_fn(domain: &Arc<Domain>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; domain.node_count()];
        for idx in 0..domain.node_count() {
            if domain.class(idx) != NodeClass::Exterior {
                let p = domain.pos(idx);
                values[idx] = f(&p[..domain.dim()]);
            }
        }
        Self { domain: Arc::clone(domain), values }
    }

    /// Samples Dirichlet data: boundary nodes are evaluated at their
    /// projection onto the true boundary (the circle for disc domains),
    /// everything else at the node position. Use this for `u0`/`v0`.
    pub fn dirichlet_data(domain: &Arc<Domain>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; domain.node_count()];
        for idx in 0..domain.node_count() {
            match domain.class(idx) {
                NodeClass::Exterior => {}
                NodeClass::Boundary => {
                    let p = domain.boundary_point(idx);
                    values[idx] = f(&p[..domain.dim()]);
                }
                NodeClass::Interior => {
                    let p = domain.pos(idx);
                    values[idx] = f(&p[..domain.dim()]);
                }
            }
        }
        Self { domain: Arc::clone(domain), values }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn set(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    pub fn check_finite(&self) -> Result<()> {
        for idx in 0..self.domain.node_count() {
            if self.domain.class(idx) != NodeClass::Exterior && !self.values[idx].is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite value at node {:?}",
                    self.domain.pos(idx)
                )));
            }
        }
        Ok(())
    }

    /// Sup norm over non-exterior nodes.
    pub fn sup_norm(&self) -> f64 {
        let mut m = 0.0f64;
        for idx in 0..self.domain.node_count() {
            if self.domain.class(idx) != NodeClass::Exterior {
                m = m.max(self.values[idx].abs());
            }
        }
        m
    }

    pub fn sup_diff(&self, other: &Field) -> f64 {
        let mut m = 0.0f64;
        for idx in 0..self.domain.node_count() {
            if self.domain.class(idx) != NodeClass::Exterior {
                m = m.max((self.values[idx] - other.values[idx]).abs());
            }
        }
        m
    }
}

/// Centered second difference along an integer direction:
/// `(u(x + h e) - 2 u(x) + u(x - h e)) / (h^2 |e|^2)`.
pub fn second_difference(u: &Field, idx: usize, dir: [i32; 2]) -> Result<f64> {
    let dom = u.domain();
    let (plus, minus) = dom.arm(idx, dir).ok_or(Error::OutOfStencil {
        node: idx,
        dx: dir[0],
        dy: dir[1],
    })?;
    let norm2 = (dir[0] * dir[0] + dir[1] * dir[1]) as f64;
    let h2 = dom.h() * dom.h();
    Ok((u.get(plus) - 2.0 * u.get(idx) + u.get(minus)) / (h2 * norm2))
}

/// Value of one frame given its directional second differences.
pub(crate) fn frame_value(spec: &OperatorSpec, deltas: &[f64]) -> f64 {
    match spec.kind {
        OperatorKind::PucciMax => deltas
            .iter()
            .map(|&d| if d > 0.0 { spec.params.lambda_max * d } else { spec.params.lambda * d })
            .sum(),
        OperatorKind::PucciMin => deltas
            .iter()
            .map(|&d| if d > 0.0 { spec.params.lambda * d } else { spec.params.lambda_max * d })
            .sum(),
        OperatorKind::BellmanMax | OperatorKind::BellmanMin => {
            let mut best = f64::NAN;
            for row in &spec.family {
                let v: f64 = row.iter().zip(deltas).map(|(c, d)| c * d).sum();
                best = if best.is_nan() {
                    v
                } else if spec.kind == OperatorKind::BellmanMax {
                    best.max(v)
                } else {
                    best.min(v)
                };
            }
            best
        }
    }
}

pub(crate) fn combine_frames(kind: OperatorKind, acc: Option<f64>, v: f64) -> f64 {
    match acc {
        None => v,
        Some(a) => {
            if kind.is_convex() {
                a.max(v)
            } else {
                a.min(v)
            }
        }
    }
}

/// Monotone wide-stencil operator at an interior node: max (convex kinds)
/// or min (concave kinds) over the admissible frames of the per-frame
/// values. Frames whose stencil leaves the grid near a box edge are
/// skipped; the axis frame is always available at interior nodes.
pub fn discrete_operator(
    spec: &OperatorSpec,
    u: &Field,
    idx: usize,
    fs: &FrameSet,
) -> Result<f64> {
    let dom = u.domain();
    if !dom.is_interior(idx) {
        return Err(Error::Config(format!(
            "discrete operator requested at non-interior node {:?}",
            dom.pos(idx)
        )));
    }
    if fs.dim() != dom.dim() {
        return Err(Error::DomainMismatch(format!(
            "frame set is {}D, domain is {}D",
            fs.dim(),
            dom.dim()
        )));
    }
    spec.validate(Some(dom.dim()))?;
    let h2 = dom.h() * dom.h();
    let mut acc: Option<f64> = None;
    let mut deltas = [0.0f64; 2];
    for frame in fs.frames() {
        let mut ok = true;
        for (k, dir) in frame.dirs.iter().enumerate() {
            match dom.arm(idx, *dir) {
                Some((plus, minus)) => {
                    deltas[k] = (u.get(plus) - 2.0 * u.get(idx) + u.get(minus))
                        / (h2 * frame.norm2[k] as f64);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let v = frame_value(spec, &deltas[..frame.dirs.len()]);
        acc = Some(combine_frames(spec.kind, acc, v));
    }
    acc.ok_or(Error::OutOfStencil { node: idx, dx: 1, dy: 0 })
}

/// Full centered Hessian: axis second differences on the diagonal, the
/// four-corner quotient for the cross term.
pub fn discrete_hessian(u: &Field, idx: usize) -> Result<SymMatrix> {
    let dom = u.domain();
    if dom.dim() == 1 {
        return Ok(SymMatrix::sym1(second_difference(u, idx, [1, 0])?));
    }
    let a = second_difference(u, idx, [1, 0])?;
    let d = second_difference(u, idx, [0, 1])?;
    let fetch = |di: i32, dj: i32| -> Result<f64> {
        let nb = dom
            .step(idx, [di, dj], 1)
            .filter(|&k| dom.class(k) != NodeClass::Exterior)
            .ok_or(Error::OutOfStencil { node: idx, dx: di, dy: dj })?;
        Ok(u.get(nb))
    };
    let h = dom.h();
    let b = (fetch(1, 1)? - fetch(1, -1)? - fetch(-1, 1)? + fetch(-1, -1)?) / (4.0 * h * h);
    Ok(SymMatrix::sym2(a, b, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pucci::{operator_eval, PucciParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p12() -> PucciParams {
        PucciParams::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn interval_classification() {
        let dom = build_domain(1, Shape::Interval, 5).unwrap();
        assert_eq!(dom.counts(), (3, 2, 0));
        assert_eq!(dom.pos(0)[0], -1.0);
        assert_eq!(dom.pos(2)[0], 0.0);
        assert_eq!(dom.pos(4)[0], 1.0);
        assert!((dom.h() * (dom.n() as f64 - 1.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn box_classification() {
        let dom = build_domain(2, Shape::Box, 5).unwrap();
        let (interior, boundary, exterior) = dom.counts();
        assert_eq!((interior, boundary, exterior), (9, 16, 0));
    }

    #[test]
    fn disc_interior_count_sandwich() {
        let n = 41;
        let dom = build_domain(2, Shape::Disc, n).unwrap();
        let (interior, _, _) = dom.counts();

        // independent enumeration: interior nodes are those whose whole
        // width-2 stencil stays inside the closed unit disc
        let h = 2.0 / (n as f64 - 1.0);
        let dirs = stencil_directions(2, 2);
        let mut oracle = 0usize;
        for j in 0..n as i64 {
            for i in 0..n as i64 {
                let inside = |i: i64, j: i64| {
                    i >= 0
                        && j >= 0
                        && i < n as i64
                        && j < n as i64
                        && f64::hypot(-1.0 + i as f64 * h, -1.0 + j as f64 * h) <= 1.0 + 1e-12
                };
                if inside(i, j)
                    && dirs.iter().all(|d| {
                        inside(i + d[0] as i64, j + d[1] as i64)
                            && inside(i - d[0] as i64, j - d[1] as i64)
                    })
                {
                    oracle += 1;
                }
            }
        }
        assert_eq!(interior, oracle);

        // strictly between the inscribed box and the full box
        let half = 1.0 / std::f64::consts::SQRT_2;
        let per_axis = (0..n)
            .filter(|&i| {
                let x: f64 = -1.0 + i as f64 * h;
                x.abs() < half
            })
            .count();
        assert!(interior > per_axis * per_axis);
        assert!(interior < (n - 2) * (n - 2));
    }

    #[test]
    fn resolution_guards() {
        assert!(matches!(build_domain(1, Shape::Interval, 6), Err(Error::BadResolution(6))));
        assert!(matches!(build_domain(1, Shape::Interval, 3), Err(Error::BadResolution(3))));
        assert!(build_domain(2, Shape::Interval, 7).is_err());
    }

    #[test]
    fn frame_sets() {
        let fs1 = FrameSet::new(1, 2).unwrap();
        assert_eq!(fs1.frames().len(), 1);
        let fs2w1 = FrameSet::new(2, 1).unwrap();
        assert_eq!(fs2w1.frames().len(), 2);
        let fs2 = FrameSet::new(2, 2).unwrap();
        assert_eq!(fs2.frames().len(), 4);
        for f in fs2.frames() {
            let d = &f.dirs;
            assert_eq!(d[0][0] * d[1][0] + d[0][1] * d[1][1], 0, "not orthogonal: {d:?}");
            assert_eq!(f.norm2[0], f.norm2[1]);
        }
    }

    #[test]
    fn second_difference_quadratics() {
        let dom = build_domain(2, Shape::Box, 9).unwrap();
        let sq = Field::from_fn(&dom, |p| p[0] * p[0]);
        let xy = Field::from_fn(&dom, |p| p[0] * p[1]);
        let affine = Field::from_fn(&dom, |p| 3.0 * p[0] - 2.0 * p[1] + 0.5);
        let center = dom.index(4, 4);
        assert_eq!(second_difference(&sq, center, [1, 0]).unwrap(), 2.0);
        assert_eq!(second_difference(&xy, center, [1, 1]).unwrap(), 1.0);
        assert_eq!(second_difference(&affine, center, [1, 0]).unwrap(), 0.0);
        assert_eq!(second_difference(&affine, center, [1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn discrete_operator_saddle() {
        let dom = build_domain(2, Shape::Box, 9).unwrap();
        let fs_axis = FrameSet::new(2, 1).unwrap();
        let u = Field::from_fn(&dom, |p| p[0] * p[0] - p[1] * p[1]);
        let spec = OperatorSpec::pucci_max(p12());
        let center = dom.index(4, 4);
        // axis frame: 2*2 + 1*(-2) = 2; diagonal frame deltas are 0
        assert_eq!(discrete_operator(&spec, &u, center, &fs_axis).unwrap(), 2.0);
    }

    #[test]
    fn discrete_operator_zero_hessian() {
        let dom = build_domain(2, Shape::Box, 9).unwrap();
        let fs = FrameSet::new(2, 2).unwrap();
        let u = Field::from_fn(&dom, |p| 1.0 + p[0] - 0.5 * p[1]);
        let spec = OperatorSpec::pucci_max(p12());
        assert_eq!(discrete_operator(&spec, &u, dom.index(4, 4), &fs).unwrap(), 0.0);
    }

    #[test]
    fn discrete_operator_cross_term() {
        // the diagonal frame sees u = x*y with second differences (1, -1),
        // so M+ picks lambda_max - lambda there; the axis frame gives 0
        let dom = build_domain(2, Shape::Box, 9).unwrap();
        let fs = FrameSet::new(2, 1).unwrap();
        let u = Field::from_fn(&dom, |p| p[0] * p[1]);
        let spec = OperatorSpec::pucci_max(p12());
        assert_eq!(discrete_operator(&spec, &u, dom.index(4, 4), &fs).unwrap(), 1.0);
    }

    #[test]
    fn discrete_hessian_exact_on_quadratics() {
        let dom = build_domain(2, Shape::Box, 9).unwrap();
        let saddle = Field::from_fn(&dom, |p| p[0] * p[0] - p[1] * p[1]);
        let xy = Field::from_fn(&dom, |p| p[0] * p[1]);
        let center = dom.index(4, 4);
        assert_eq!(discrete_hessian(&saddle, center).unwrap(), SymMatrix::sym2(2.0, 0.0, -2.0));
        assert_eq!(discrete_hessian(&xy, center).unwrap(), SymMatrix::sym2(0.0, 1.0, 0.0));
    }

    #[test]
    fn discrete_hessian_cubic_kink() {
        let dom = build_domain(1, Shape::Interval, 41).unwrap();
        let u = Field::from_fn(&dom, |p| p[0].max(0.0).powi(3));
        let h = dom.h();
        // exact 6x for nodes at x >= h
        for k in 1..5 {
            let idx = (dom.n() - 1) / 2 + k;
            let x = dom.pos(idx)[0];
            assert!(x >= h - 1e-15);
            let d2 = second_difference(&u, idx, [1, 0]).unwrap();
            assert_relative_eq!(d2, 6.0 * x, max_relative = 1e-10);
        }
    }

    #[test]
    fn consistency_on_frame_diagonal_quadratics() {
        // quadratic with Hessian diagonal in the (2,1)/(-1,2) frame
        let dom = build_domain(2, Shape::Box, 21).unwrap();
        let fs = FrameSet::new(2, 2).unwrap();
        let (alpha, beta) = (1.3, -0.6);
        let u = Field::from_fn(&dom, |p| {
            let s = (2.0 * p[0] + p[1]) / 5f64.sqrt();
            let t = (-p[0] + 2.0 * p[1]) / 5f64.sqrt();
            0.5 * (alpha * s * s + beta * t * t)
        });
        let spec = OperatorSpec::pucci_max(p12());
        let idx = dom.index(10, 10);
        let got = discrete_operator(&spec, &u, idx, &fs).unwrap();
        let expect =
            operator_eval(&spec, &SymMatrix::diag(&[alpha, beta]).unwrap()).unwrap();
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }

    #[test]
    fn near_edge_nodes_fall_back_to_admissible_frames() {
        let dom = build_domain(2, Shape::Box, 9).unwrap();
        let fs = FrameSet::new(2, 2).unwrap();
        let u = Field::from_fn(&dom, |p| p[0] * p[0]);
        let spec = OperatorSpec::pucci_max(p12());
        // node adjacent to the left edge: wide frames exit the grid, the
        // axis frame still sees the exact curvature
        let idx = dom.index(1, 4);
        assert_eq!(discrete_operator(&spec, &u, idx, &fs).unwrap(), 2.0 * 2.0);
    }

    proptest! {
        #[test]
        fn scheme_is_monotone(seed in 0u64..1000, bump in 0.0f64..1.0) {
            use rand::{Rng, SeedableRng};
            let dom = build_domain(2, Shape::Box, 9).unwrap();
            let fs = FrameSet::new(2, 2).unwrap();
            let spec_max = OperatorSpec::pucci_max(p12());
            let spec_min = OperatorSpec::pucci_min(p12());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut u = Field::constant(&dom, 0.0);
            for idx in 0..dom.node_count() {
                u.set(idx, rng.gen_range(-1.0..1.0));
            }
            let center = dom.index(4, 4);
            let base_max = discrete_operator(&spec_max, &u, center, &fs).unwrap();
            let base_min = discrete_operator(&spec_min, &u, center, &fs).unwrap();
            prop_assert!(base_min <= base_max);

            // raising any neighbor does not decrease either operator
            let nb = dom.index(5, 4);
            let mut up = u.clone();
            up.set(nb, up.get(nb) + bump);
            prop_assert!(discrete_operator(&spec_max, &up, center, &fs).unwrap() >= base_max);
            prop_assert!(discrete_operator(&spec_min, &up, center, &fs).unwrap() >= base_min);

            // lowering the center value does not decrease either operator
            let mut down = u.clone();
            down.set(center, down.get(center) - bump);
            prop_assert!(discrete_operator(&spec_max, &down, center, &fs).unwrap() >= base_max);
            prop_assert!(discrete_operator(&spec_min, &down, center, &fs).unwrap() >= base_min);
        }

        #[test]
        fn discrete_compatibility_exact(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let dom = build_domain(2, Shape::Box, 9).unwrap();
            let fs = FrameSet::new(2, 2).unwrap();
            let spec_max = OperatorSpec::pucci_max(p12());
            let spec_min = OperatorSpec::pucci_min(p12());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut u = Field::constant(&dom, 0.0);
            let mut neg = Field::constant(&dom, 0.0);
            for idx in 0..dom.node_count() {
                let v = rng.gen_range(-1.0..1.0);
                u.set(idx, v);
                neg.set(idx, -v);
            }
            for &idx in dom.interior() {
                let a = discrete_operator(&spec_max, &u, idx, &fs).unwrap();
                let b = discrete_operator(&spec_min, &neg, idx, &fs).unwrap();
                prop_assert_eq!(a, -b);
            }
        }
    }
}
