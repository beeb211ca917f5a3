//! Airfoil coordinate handling: Selig parsing and export, normalization,
//! arc-length spline repanelization onto the shared cosine grid, the
//! two-channel canonical layout, and geometric metrics.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spline::ArcLengthCurve;

/// Points per surface in the canonical layout.
pub const SURFACE_POINTS: usize = 100;
/// Total points in a canonical profile.
pub const CANONICAL_POINTS: usize = 2 * SURFACE_POINTS;

const DUPLICATE_TOL: f64 = 1e-9;
const LEADING_EDGE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("empty input")]
    EmptyInput,
    #[error("malformed line {line}: {content:?}")]
    MalformedLine { line: usize, content: String },
    #[error("too few points: found {found}, need at least 4")]
    TooFewPoints { found: usize },
    #[error("degenerate profile: {0}")]
    DegenerateProfile(&'static str),
    #[error("no leading edge near x = 0 (min x = {min_x})")]
    NoLeadingEdge { min_x: f64 },
    #[error("zero chord")]
    ZeroChord,
    #[error("y out of range after normalization (max |y| = {max_abs_y})")]
    YOutOfRange { max_abs_y: f64 },
    #[error("expected {expected} points, found {found}")]
    WrongPointCount { expected: usize, found: usize },
    #[error("panel count per surface must be at least 4, got {0}")]
    InvalidPanelCount(usize),
}

pub type Result<T, E = GeometryError> = core::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }
}

/// An airfoil as an ordered point sequence: upper surface from trailing
/// edge to leading edge, then lower surface from leading edge back to the
/// trailing edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirfoilProfile {
    pub name: String,
    pub points: Vec<Point>,
}

impl AirfoilProfile {
    pub fn new(name: impl Into<String>, points: Vec<Point>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }

    pub fn x_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.x), hi.max(p.x))
            })
    }

    /// Reflection about `y = 0`. Point order is reversed so the reflected
    /// lower surface becomes the new upper surface.
    pub fn mirrored(&self) -> Self {
        Self {
            name: self.name.clone(),
            points: self
                .points
                .iter()
                .rev()
                .map(|p| Point::new(p.x, -p.y))
                .collect(),
        }
    }

    /// Uniform scaling of both coordinates.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            name: self.name.clone(),
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x * factor, p.y * factor))
                .collect(),
        }
    }

    /// Total polyline length.
    pub fn perimeter(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }
}

/// Cosine-spaced abscissae `x_k = (1 - cos(pi k / (n - 1))) / 2`, increasing
/// from exactly 0 to exactly 1.
pub fn cosine_grid(n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..n)
        .map(|k| 0.5 * (1.0 - libm::cos(core::f64::consts::PI * k as f64 / (n - 1) as f64)))
        .collect();
    g[0] = 0.0;
    g[n - 1] = 1.0;
    g
}

/// The shared x-grid of every canonical sample, increasing 0 to 1. The
/// upper channel walks it backwards.
pub fn canonical_grid() -> [f64; SURFACE_POINTS] {
    let mut out = [0.0; SURFACE_POINTS];
    out.copy_from_slice(&cosine_grid(SURFACE_POINTS));
    out
}

/// The fixed-size y-channel representation consumed by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSample {
    /// Upper surface y at grid x decreasing from 1 to 0.
    pub upper: [f64; SURFACE_POINTS],
    /// Lower surface y at grid x increasing from 0 to 1.
    pub lower: [f64; SURFACE_POINTS],
}

impl CanonicalSample {
    pub fn zeros() -> Self {
        Self {
            upper: [0.0; SURFACE_POINTS],
            lower: [0.0; SURFACE_POINTS],
        }
    }

    /// Channel-major flat layout: upper then lower.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(CANONICAL_POINTS);
        v.extend_from_slice(&self.upper);
        v.extend_from_slice(&self.lower);
        v
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() != CANONICAL_POINTS {
            return Err(GeometryError::WrongPointCount {
                expected: CANONICAL_POINTS,
                found: values.len(),
            });
        }
        let mut s = Self::zeros();
        s.upper.copy_from_slice(&values[..SURFACE_POINTS]);
        s.lower.copy_from_slice(&values[SURFACE_POINTS..]);
        Ok(s)
    }

    pub fn mirrored(&self) -> Self {
        let mut m = Self::zeros();
        for k in 0..SURFACE_POINTS {
            m.upper[k] = -self.lower[SURFACE_POINTS - 1 - k];
            m.lower[k] = -self.upper[SURFACE_POINTS - 1 - k];
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().chain(&self.lower).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricMetrics {
    pub chord: f64,
    pub max_thickness: f64,
    pub thickness_ratio: f64,
    /// Largest absolute mean-line offset.
    pub max_camber: f64,
    pub camber_line: Vec<Point>,
    /// Set when the lower surface rises above the upper surface somewhere.
    pub self_intersecting: bool,
}

/// Parses a Selig-format coordinate file: a name line followed by one
/// `x y` pair per line. Blank lines are skipped. Files in Lednicer layout
/// (a point-count line, then both surfaces leading edge first) are
/// recognized and reordered.
pub fn parse_selig(text: &str) -> Result<AirfoilProfile> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, name) = lines.next().ok_or(GeometryError::EmptyInput)?;
    let mut points = Vec::new();
    for (idx, line) in lines {
        let mut tokens = line.split_whitespace();
        let malformed = || GeometryError::MalformedLine {
            line: idx + 1,
            content: line.to_string(),
        };
        let x = tokens.next().and_then(|t| t.parse::<f64>().ok());
        let y = tokens.next().and_then(|t| t.parse::<f64>().ok());
        match (x, y, tokens.next()) {
            (Some(x), Some(y), None) if x.is_finite() && y.is_finite() => {
                points.push(Point::new(x, y))
            }
            _ => return Err(malformed()),
        }
    }
    let points = lednicer_to_selig(points);
    if points.len() < 4 {
        return Err(GeometryError::TooFewPoints {
            found: points.len(),
        });
    }
    Ok(AirfoilProfile::new(name.trim(), points))
}

fn lednicer_to_selig(points: Vec<Point>) -> Vec<Point> {
    let Some(first) = points.first() else {
        return points;
    };
    let (nu, nl) = (first.x, first.y);
    let is_count = |v: f64| v >= 2.0 && libm::trunc(v) == v;
    if !(is_count(nu) && is_count(nl)) || (nu + nl) as usize != points.len() - 1 {
        return points;
    }
    let nu = nu as usize;
    let mut out: Vec<Point> = points[1..=nu].iter().rev().copied().collect();
    out.extend_from_slice(&points[nu + 1..]);
    out
}

/// Writes the Selig format with six decimals per coordinate.
pub fn to_selig_string(profile: &AirfoilProfile) -> String {
    let mut s = String::with_capacity(24 * (profile.points.len() + 1));
    s.push_str(profile.name.trim());
    s.push('\n');
    for p in &profile.points {
        let _ = writeln!(s, "{} {}", fixed6(p.x), fixed6(p.y));
    }
    s
}

fn fixed6(v: f64) -> String {
    let out = format!("{v:.6}");
    // Avoid "-0.000000".
    if out.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        "0.000000".to_string()
    } else {
        out
    }
}

/// Maps x onto `[0, 1]` and scales y by the same factor.
pub fn normalize(profile: &AirfoilProfile) -> Result<AirfoilProfile> {
    let (lo, hi) = profile.x_range();
    let chord = hi - lo;
    if !(chord > 0.0) {
        return Err(GeometryError::ZeroChord);
    }
    let points: Vec<Point> = profile
        .points
        .iter()
        .map(|p| Point::new((p.x - lo) / chord, p.y / chord))
        .collect();
    let max_abs_y = points.iter().fold(0.0f64, |m, p| m.max(p.y.abs()));
    if max_abs_y > 1.0 {
        return Err(GeometryError::YOutOfRange { max_abs_y });
    }
    Ok(AirfoilProfile::new(profile.name.clone(), points))
}

fn collapse_duplicates(points: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(points.len());
    for p in points {
        match out.last() {
            Some(q) if (p.x - q.x).abs() <= DUPLICATE_TOL && (p.y - q.y).abs() <= DUPLICATE_TOL => {}
            _ => out.push(*p),
        }
    }
    out
}

/// Index of the leading edge: minimum x, ties broken by minimum |y|.
fn leading_edge(points: &[Point]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        let b = &points[best];
        if p.x < b.x || (p.x == b.x && p.y.abs() < b.y.abs()) {
            best = i;
        }
    }
    best
}

/// Resamples both surfaces onto a cosine grid of `n_per_surface` points
/// with arc-length cubic splines. The input must already be normalized so
/// its leading edge sits at x = 0.
pub fn repanelize(profile: &AirfoilProfile, n_per_surface: usize) -> Result<AirfoilProfile> {
    if n_per_surface < 4 {
        return Err(GeometryError::InvalidPanelCount(n_per_surface));
    }
    let pts = collapse_duplicates(&profile.points);
    let le = leading_edge(&pts);
    let min_x = pts[le].x;
    if min_x.abs() > LEADING_EDGE_TOL {
        return Err(GeometryError::NoLeadingEdge { min_x });
    }
    if le < 2 || pts.len() - le < 3 {
        return Err(GeometryError::DegenerateProfile(
            "a surface has fewer than three distinct points",
        ));
    }
    // One spline through both surfaces keeps the nose curvature; natural end
    // conditions apply at the trailing edges only.
    let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.x, p.y)).collect();
    let curve = ArcLengthCurve::fit(&xy)
        .ok_or(GeometryError::DegenerateProfile("zero arc length"))?;
    let last = curve.knot_count() - 1;

    let grid = cosine_grid(n_per_surface);
    let mut points = Vec::with_capacity(2 * n_per_surface);
    for &x in grid.iter().rev() {
        points.push(Point::new(x, curve.y_at_x(x, le, 0)));
    }
    for &x in &grid {
        points.push(Point::new(x, curve.y_at_x(x, le, last)));
    }
    Ok(AirfoilProfile::new(profile.name.clone(), points))
}

/// Normalize, then repanelize onto the canonical grid.
pub fn canonicalize(profile: &AirfoilProfile) -> Result<AirfoilProfile> {
    repanelize(&normalize(profile)?, SURFACE_POINTS)
}

pub fn to_canonical(profile: &AirfoilProfile) -> Result<CanonicalSample> {
    if profile.points.len() != CANONICAL_POINTS {
        return Err(GeometryError::WrongPointCount {
            expected: CANONICAL_POINTS,
            found: profile.points.len(),
        });
    }
    let mut s = CanonicalSample::zeros();
    for k in 0..SURFACE_POINTS {
        s.upper[k] = profile.points[k].y;
        s.lower[k] = profile.points[SURFACE_POINTS + k].y;
    }
    Ok(s)
}

pub fn from_canonical(sample: &CanonicalSample, name: impl Into<String>) -> AirfoilProfile {
    let grid = canonical_grid();
    let mut points = Vec::with_capacity(CANONICAL_POINTS);
    for k in 0..SURFACE_POINTS {
        points.push(Point::new(grid[SURFACE_POINTS - 1 - k], sample.upper[k]));
    }
    for k in 0..SURFACE_POINTS {
        points.push(Point::new(grid[k], sample.lower[k]));
    }
    AirfoilProfile::new(name, points)
}

/// Chord, thickness and camber of a canonical profile, measured vertically
/// at each shared grid abscissa.
pub fn geometric_metrics(profile: &AirfoilProfile) -> Result<GeometricMetrics> {
    let sample = to_canonical(profile)?;
    let (lo, hi) = profile.x_range();
    let chord = hi - lo;
    if !(chord > 0.0) {
        return Err(GeometryError::ZeroChord);
    }
    Ok(sample_metrics(&sample, chord))
}

pub(crate) fn sample_metrics(sample: &CanonicalSample, chord: f64) -> GeometricMetrics {
    let grid = canonical_grid();
    let mut max_thickness = 0.0f64;
    let mut max_camber = 0.0f64;
    let mut self_intersecting = false;
    let mut camber_line = Vec::with_capacity(SURFACE_POINTS);
    for (j, &x) in grid.iter().enumerate() {
        let up = sample.upper[SURFACE_POINTS - 1 - j];
        let lo = sample.lower[j];
        let thickness = up - lo;
        if thickness < -1e-12 {
            self_intersecting = true;
        }
        max_thickness = max_thickness.max(thickness);
        let camber = (up + lo) / 2.0;
        max_camber = max_camber.max(camber.abs());
        camber_line.push(Point::new(x, camber));
    }
    GeometricMetrics {
        chord,
        max_thickness,
        thickness_ratio: max_thickness / chord,
        max_camber,
        camber_line,
        self_intersecting,
    }
}

/// Analytic NACA 4-digit sections.
pub mod naca {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct FourDigit {
        /// Maximum camber as a chord fraction.
        pub camber: f64,
        /// Chordwise position of maximum camber.
        pub camber_position: f64,
        /// Thickness ratio.
        pub thickness: f64,
    }

    impl FourDigit {
        /// Parses codes such as `"2412"`.
        pub fn from_code(code: &str) -> Option<Self> {
            let d: Vec<u32> = code.chars().map(|c| c.to_digit(10)).collect::<Option<_>>()?;
            if d.len() != 4 {
                return None;
            }
            Some(Self {
                camber: d[0] as f64 / 100.0,
                camber_position: d[1] as f64 / 10.0,
                thickness: (d[2] * 10 + d[3]) as f64 / 100.0,
            })
        }

        /// Half-thickness distribution with the closed trailing-edge coefficient.
        pub fn half_thickness(&self, x: f64) -> f64 {
            5.0 * self.thickness
                * (0.2969 * libm::sqrt(x) - 0.1260 * x - 0.3516 * x * x + 0.2843 * x * x * x
                    - 0.1036 * x * x * x * x)
        }

        pub fn camber_line(&self, x: f64) -> (f64, f64) {
            let (m, p) = (self.camber, self.camber_position);
            if m == 0.0 || p == 0.0 {
                return (0.0, 0.0);
            }
            if x < p {
                (m / (p * p) * (2.0 * p * x - x * x), 2.0 * m / (p * p) * (p - x))
            } else {
                let q = (1.0 - p) * (1.0 - p);
                (
                    m / q * ((1.0 - 2.0 * p) + 2.0 * p * x - x * x),
                    2.0 * m / q * (p - x),
                )
            }
        }

        /// Upper and lower surface points at mean-line station `x`.
        pub fn surface_points(&self, x: f64) -> (Point, Point) {
            let yt = self.half_thickness(x);
            let (yc, slope) = self.camber_line(x);
            let theta = libm::atan(slope);
            let (s, c) = (libm::sin(theta), libm::cos(theta));
            (
                Point::new(x - yt * s, yc + yt * c),
                Point::new(x + yt * s, yc - yt * c),
            )
        }

        /// Selig-ordered profile from the given mean-line stations, which
        /// must increase from 0 to 1. The leading-edge point is shared.
        pub fn profile_at(&self, name: impl Into<String>, stations: &[f64]) -> AirfoilProfile {
            let mut points = Vec::with_capacity(2 * stations.len() - 1);
            for &x in stations.iter().rev() {
                points.push(self.surface_points(x).0);
            }
            for &x in &stations[1..] {
                points.push(self.surface_points(x).1);
            }
            AirfoilProfile::new(name, points)
        }

        /// Cosine-spaced profile with `per_surface` stations, `2 * per_surface - 1` points.
        pub fn profile(&self, name: impl Into<String>, per_surface: usize) -> AirfoilProfile {
            self.profile_at(name, &cosine_grid(per_surface))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::naca::FourDigit;
    use super::*;
    use alloc::vec;

    fn flat_plate() -> AirfoilProfile {
        from_canonical(&CanonicalSample::zeros(), "plate")
    }

    #[test]
    fn parses_minimal_file() {
        let p = parse_selig("flat\n1 0\n0.5 0\n0 0\n0.5 0\n1 0\n").unwrap();
        assert_eq!(p.name, "flat");
        assert_eq!(p.points.len(), 5);
        assert_eq!(p.points[1], Point::new(0.5, 0.0));
    }

    #[test]
    fn parse_trims_name_and_skips_blank_lines() {
        let p = parse_selig("  NACA 0012  \n\n1 0\n0 0\n\n0.5 -0.1\n1 0\n").unwrap();
        assert_eq!(p.name, "NACA 0012");
        assert_eq!(p.points.len(), 4);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_selig(""), Err(GeometryError::EmptyInput));
        assert_eq!(parse_selig("\n  \n"), Err(GeometryError::EmptyInput));
        assert!(matches!(
            parse_selig("x\n1 0\n0.5 abc\n0 0\n1 0\n"),
            Err(GeometryError::MalformedLine { line: 3, .. })
        ));
        assert!(matches!(
            parse_selig("x\n1 0 3\n0 0\n"),
            Err(GeometryError::MalformedLine { line: 2, .. })
        ));
        assert!(matches!(
            parse_selig("x\n1\n"),
            Err(GeometryError::MalformedLine { .. })
        ));
        assert_eq!(
            parse_selig("x\n1 0\n0 0\n1 0\n"),
            Err(GeometryError::TooFewPoints { found: 3 })
        );
    }

    #[test]
    fn lednicer_layout_is_reordered() {
        let text = "led\n3. 3.\n\n0 0\n0.5 0.05\n1 0\n\n0 0\n0.5 -0.05\n1 0\n";
        let p = parse_selig(text).unwrap();
        let ys: Vec<f64> = p.points.iter().map(|q| q.y).collect();
        assert_eq!(ys, vec![0.0, 0.05, 0.0, 0.0, -0.05, 0.0]);
        assert_eq!(p.points[0].x, 1.0);
    }

    #[test]
    fn selig_export_round_trips_at_six_decimals() {
        let p = FourDigit::from_code("2412").unwrap().profile("NACA 2412", 30);
        let text = to_selig_string(&p);
        let q = parse_selig(&text).unwrap();
        assert_eq!(q.name, "NACA 2412");
        for (a, b) in p.points.iter().zip(&q.points) {
            assert!((a.x - b.x).abs() <= 5e-7 && (a.y - b.y).abs() <= 5e-7);
        }
        assert!(!text.contains("-0.000000"));
    }

    #[test]
    fn normalize_maps_chord_to_unit() {
        let p = AirfoilProfile::new(
            "p",
            vec![
                Point::new(4.0, 0.1),
                Point::new(3.0, 0.3),
                Point::new(2.0, 0.2),
                Point::new(3.0, 0.1),
                Point::new(4.0, 0.1),
            ],
        );
        let n = normalize(&p).unwrap();
        assert_eq!(n.x_range(), (0.0, 1.0));
        for (a, b) in p.points.iter().zip(&n.points) {
            assert!((b.y - a.y / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_identity_and_errors() {
        let p = FourDigit::from_code("0012").unwrap().profile("n", 20);
        let n = normalize(&p).unwrap();
        for (a, b) in p.points.iter().zip(&n.points) {
            assert!((a.x - b.x).abs() <= 1e-12 && (a.y - b.y).abs() <= 1e-12);
        }
        let vertical = AirfoilProfile::new(
            "v",
            vec![
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 2.0),
                Point::new(1.0, 3.0),
            ],
        );
        assert_eq!(normalize(&vertical), Err(GeometryError::ZeroChord));
        let tall = AirfoilProfile::new(
            "t",
            vec![
                Point::new(1.0, 0.0),
                Point::new(0.5, 2.0),
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
            ],
        );
        assert!(matches!(normalize(&tall), Err(GeometryError::YOutOfRange { .. })));
    }

    #[test]
    fn repanelize_on_grid_is_identity() {
        let p = canonicalize(&FourDigit::from_code("4415").unwrap().profile("a", 57)).unwrap();
        let q = repanelize(&p, 100).unwrap();
        for (a, b) in p.points.iter().zip(&q.points) {
            assert_eq!(a.x, b.x);
            assert!((a.y - b.y).abs() <= 1e-9);
        }
    }

    #[test]
    fn repanelize_grid_layout() {
        let p = canonicalize(&FourDigit::from_code("0012").unwrap().profile("a", 66)).unwrap();
        assert_eq!(p.points.len(), 200);
        assert_eq!(p.points[0].x, 1.0);
        assert_eq!(p.points[99].x, 0.0);
        assert_eq!(p.points[100].x, 0.0);
        assert_eq!(p.points[199].x, 1.0);
        assert!(p.points[..100].windows(2).all(|w| w[1].x < w[0].x));
        assert!(p.points[100..].windows(2).all(|w| w[1].x > w[0].x));
    }

    #[test]
    fn repanelize_errors() {
        let tiny = AirfoilProfile::new(
            "t",
            vec![
                Point::new(1.0, 0.0),
                Point::new(0.0, 0.0),
                Point::new(0.5, -0.1),
                Point::new(1.0, 0.0),
            ],
        );
        assert!(matches!(
            repanelize(&tiny, 100),
            Err(GeometryError::DegenerateProfile(_))
        ));
        let shifted = FourDigit::from_code("0012").unwrap().profile("s", 20).scaled(2.0);
        let shifted = AirfoilProfile::new(
            "s",
            shifted.points.iter().map(|p| Point::new(p.x + 1.0, p.y)).collect(),
        );
        assert!(matches!(
            repanelize(&shifted, 100),
            Err(GeometryError::NoLeadingEdge { .. })
        ));
        let p = FourDigit::from_code("0012").unwrap().profile("s", 20);
        assert_eq!(repanelize(&p, 3), Err(GeometryError::InvalidPanelCount(3)));
    }

    #[test]
    fn canonical_layout_and_errors() {
        let s = to_canonical(&flat_plate()).unwrap();
        assert!(s.upper.iter().chain(&s.lower).all(|&v| v == 0.0));
        let short = AirfoilProfile::new("s", vec![Point::new(0.0, 0.0); 150]);
        assert_eq!(
            to_canonical(&short),
            Err(GeometryError::WrongPointCount {
                expected: 200,
                found: 150
            })
        );
    }

    #[test]
    fn from_canonical_uses_global_grid() {
        let p = flat_plate();
        let grid = canonical_grid();
        for k in 0..100 {
            assert_eq!(p.points[k].x, grid[99 - k]);
            assert_eq!(p.points[100 + k].x, grid[k]);
        }
    }

    #[test]
    fn flat_plate_metrics() {
        let m = geometric_metrics(&flat_plate()).unwrap();
        assert_eq!(m.chord, 1.0);
        assert_eq!(m.max_thickness, 0.0);
        assert_eq!(m.max_camber, 0.0);
        assert!(!m.self_intersecting);
    }

    #[test]
    fn crossing_surfaces_flagged() {
        let mut s = CanonicalSample::zeros();
        s.lower[50] = 0.01;
        let m = geometric_metrics(&from_canonical(&s, "x")).unwrap();
        assert!(m.self_intersecting);
    }

    #[test]
    fn mirrored_sample_matches_mirrored_profile() {
        let p = canonicalize(&FourDigit::from_code("2412").unwrap().profile("a", 40)).unwrap();
        let s = to_canonical(&p).unwrap();
        let via_profile = to_canonical(&p.mirrored()).unwrap();
        assert_eq!(via_profile, s.mirrored());
    }

    #[test]
    fn naca_code_parsing() {
        let f = FourDigit::from_code("2412").unwrap();
        assert_eq!(f.camber, 0.02);
        assert_eq!(f.camber_position, 0.4);
        assert_eq!(f.thickness, 0.12);
        assert!(FourDigit::from_code("241").is_none());
        assert!(FourDigit::from_code("24a2").is_none());
        assert_eq!(f.profile("x", 66).points.len(), 131);
    }
}
