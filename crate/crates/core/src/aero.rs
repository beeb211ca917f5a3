//! Deterministic aerodynamic coefficients for canonical profiles.
//!
//! Lift comes from an incompressible linear-strength vortex panel method:
//! node strengths are found from zero normal velocity at every panel
//! midpoint plus a Kutta condition equating the trailing-edge surface
//! speeds (`gamma_first + gamma_last = 0`). Sections with zero thickness
//! have coincident surfaces, which makes that system singular, so they are
//! solved as a lumped-vortex mean line instead.
//!
//! Drag is an estimate: Schlichting's turbulent flat-plate skin friction
//! over the wetted perimeter, times a `1 + 2 t/c` form factor.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, AirfoilProfile, GeometryError, Point};

/// Angles of attack must stay strictly inside this bound.
pub const MAX_ALPHA: f64 = PI / 6.0;
const THIN_TOL: f64 = 1e-9;
const PIVOT_RATIO_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AeroError {
    #[error("panel system is singular (degenerate geometry)")]
    SingularSystem,
    #[error("flow condition outside the oracle envelope: {0}")]
    EnvelopeExceeded(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowCondition {
    /// Angle of attack in radians.
    pub alpha: f64,
    pub reynolds: f64,
}

impl Default for FlowCondition {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            reynolds: 1e6,
        }
    }
}

impl FlowCondition {
    pub fn new(alpha: f64, reynolds: f64) -> Result<Self, AeroError> {
        let f = Self { alpha, reynolds };
        f.validate()?;
        Ok(f)
    }

    pub fn from_degrees(alpha_deg: f64, reynolds: f64) -> Result<Self, AeroError> {
        Self::new(alpha_deg.to_radians(), reynolds)
    }

    pub fn validate(&self) -> Result<(), AeroError> {
        if !(self.alpha.abs() < MAX_ALPHA) {
            return Err(AeroError::EnvelopeExceeded("|alpha| must be below 30 degrees"));
        }
        // The friction correlation needs log10(Re) > 0.
        if !(self.reynolds > 1.0) || !self.reynolds.is_finite() {
            return Err(AeroError::EnvelopeExceeded("reynolds number must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeroCoefficients {
    pub cl: f64,
    pub cd: f64,
    pub lift_to_drag: f64,
}

impl AeroCoefficients {
    fn new(cl: f64, cd: f64) -> Self {
        Self {
            cl,
            cd,
            lift_to_drag: cl / cd,
        }
    }
}

/// Turbulent flat-plate skin-friction coefficient (Schlichting).
pub fn skin_friction(reynolds: f64) -> f64 {
    0.455 / libm::pow(libm::log10(reynolds), 2.58)
}

/// Coefficients of a canonical (200-point) profile.
pub fn evaluate(profile: &AirfoilProfile, flow: &FlowCondition) -> Result<AeroCoefficients, AeroError> {
    flow.validate()?;
    let metrics = geometry::geometric_metrics(profile)?;
    let chord = metrics.chord;

    let circulation = if metrics.max_thickness <= THIN_TOL * chord {
        mean_line_circulation(&metrics.camber_line, flow.alpha)?
    } else {
        surface_circulation(&profile.points, chord, flow.alpha)?
    };
    let cl = 2.0 * circulation / chord;

    let wetted = profile.perimeter() / chord;
    let form = 1.0 + 2.0 * metrics.thickness_ratio.max(0.0);
    let cd = skin_friction(flow.reynolds) * wetted * form;
    Ok(AeroCoefficients::new(cl, cd))
}

/// Evaluates each profile independently; order is preserved and failures
/// stay per-item.
pub fn evaluate_batch(
    profiles: &[AirfoilProfile],
    flow: &FlowCondition,
) -> Vec<Result<AeroCoefficients, AeroError>> {
    profiles.iter().map(|p| evaluate(p, flow)).collect()
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    start: Point,
    length: f64,
    // Unit tangent (start to end) and its left normal.
    tx: f64,
    ty: f64,
    nx: f64,
    ny: f64,
}

impl Panel {
    fn new(a: Point, b: Point) -> Self {
        let length = a.distance(&b);
        let (tx, ty) = ((b.x - a.x) / length, (b.y - a.y) / length);
        Self {
            start: a,
            length,
            tx,
            ty,
            nx: -ty,
            ny: tx,
        }
    }

    fn at(&self, frac: f64) -> Point {
        Point::new(
            self.start.x + frac * self.length * self.tx,
            self.start.y + frac * self.length * self.ty,
        )
    }

    fn local(&self, p: Point) -> (f64, f64) {
        let (dx, dy) = (p.x - self.start.x, p.y - self.start.y);
        (dx * self.tx + dy * self.ty, dx * self.nx + dy * self.ny)
    }

    /// Velocity at `p` induced by a unit linear vortex distribution that is
    /// 1 at the start node and 0 at the end node (`a`), and vice versa (`b`),
    /// in global axes. Clockwise-positive vortex convention.
    fn linear_vortex_influence(&self, p: Point, on_panel: bool) -> ((f64, f64), (f64, f64)) {
        let (x, mut z) = self.local(p);
        if on_panel {
            z = 0.0;
        }
        let s = self.length;
        let theta1 = libm::atan2(z, x);
        let theta2 = libm::atan2(z, x - s);
        let dtheta = theta2 - theta1;
        let r1_sq = x * x + z * z;
        let r2_sq = (x - s) * (x - s) + z * z;
        let log_ratio = 0.5 * libm::log(r1_sq / r2_sq);

        let iu0 = dtheta;
        let iu1 = x * dtheta - z * log_ratio;
        let iw0 = log_ratio;
        let iw1 = x * log_ratio - s + z * dtheta;

        let k = 1.0 / (2.0 * PI);
        let (ua, wa) = (k * (iu0 - iu1 / s), -k * (iw0 - iw1 / s));
        let (ub, wb) = (k * iu1 / s, -k * iw1 / s);
        (self.to_global(ua, wa), self.to_global(ub, wb))
    }

    fn to_global(&self, u: f64, w: f64) -> (f64, f64) {
        (u * self.tx + w * self.nx, u * self.ty + w * self.ny)
    }
}

fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

fn solve(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>, AeroError> {
    let lu = matrix.lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max > 0.0) || min / max < PIVOT_RATIO_TOL {
        return Err(AeroError::SingularSystem);
    }
    let sol = lu.solve(&rhs).ok_or(AeroError::SingularSystem)?;
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(AeroError::SingularSystem)
    }
}

/// Total clockwise circulation of the closed surface at unit freestream.
fn surface_circulation(points: &[Point], chord: f64, alpha: f64) -> Result<f64, AeroError> {
    let mut nodes: Vec<Point> = Vec::with_capacity(points.len());
    for p in points {
        match nodes.last() {
            Some(q) if q.distance(p) <= 1e-12 * chord => {}
            _ => nodes.push(*p),
        }
    }
    if nodes.len() < 4 {
        return Err(AeroError::SingularSystem);
    }
    // Counter-clockwise traversal keeps the vortex sheet sign convention.
    if signed_area(&nodes) < 0.0 {
        nodes.reverse();
    }
    let panels: Vec<Panel> = nodes.windows(2).map(|w| Panel::new(w[0], w[1])).collect();
    let n = panels.len();
    let (vx, vy) = (libm::cos(alpha), libm::sin(alpha));

    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for (i, pi) in panels.iter().enumerate() {
        let c = pi.at(0.5);
        for (j, pj) in panels.iter().enumerate() {
            let ((uax, uay), (ubx, uby)) = pj.linear_vortex_influence(c, i == j);
            a[(i, j)] += uax * pi.nx + uay * pi.ny;
            a[(i, j + 1)] += ubx * pi.nx + uby * pi.ny;
        }
        rhs[i] = -(vx * pi.nx + vy * pi.ny);
    }
    a[(n, 0)] = 1.0;
    a[(n, n)] = 1.0;

    let gamma = solve(a, rhs)?;
    Ok(panels
        .iter()
        .enumerate()
        .map(|(j, p)| 0.5 * (gamma[j] + gamma[j + 1]) * p.length)
        .sum())
}

/// Lumped-vortex circulation of a zero-thickness mean line: vortex at the
/// quarter point of each panel, collocation at the three-quarter point.
fn mean_line_circulation(line: &[Point], alpha: f64) -> Result<f64, AeroError> {
    let panels: Vec<Panel> = line
        .windows(2)
        .filter(|w| w[0].distance(&w[1]) > 0.0)
        .map(|w| Panel::new(w[0], w[1]))
        .collect();
    let n = panels.len();
    if n == 0 {
        return Err(AeroError::SingularSystem);
    }
    let (vx, vy) = (libm::cos(alpha), libm::sin(alpha));
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, pi) in panels.iter().enumerate() {
        let c = pi.at(0.75);
        for (j, pj) in panels.iter().enumerate() {
            let v = pj.at(0.25);
            let (dx, dz) = (c.x - v.x, c.y - v.y);
            let r_sq = dx * dx + dz * dz;
            let (u, w) = (dz / (2.0 * PI * r_sq), -dx / (2.0 * PI * r_sq));
            a[(i, j)] = u * pi.nx + w * pi.ny;
        }
        rhs[i] = -(vx * pi.nx + vy * pi.ny);
    }
    Ok(solve(a, rhs)?.iter().sum())
}
