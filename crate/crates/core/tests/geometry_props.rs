use foildiff_core::geometry::naca::FourDigit;
use foildiff_core::geometry::{
    canonical_grid, canonicalize, from_canonical, geometric_metrics, parse_selig, repanelize,
    to_canonical, to_selig_string, AirfoilProfile, CanonicalSample, Point,
};
use proptest::prelude::*;

/// The closed-form section as one curve: `u` in [-1, 0] walks the upper
/// surface from trailing edge to nose (`x_c = -u`), `u` in [0, 1] the lower
/// surface back (`x_c = u`). Expressed in the frame the implementation
/// normalizes into (shift by the sampled minimum x, divide by the sampled
/// chord) and split into surfaces at the sampled minimum-x point.
struct AnalyticOracle {
    section: FourDigit,
    x0: f64,
    chord: f64,
    u_split: f64,
}

impl AnalyticOracle {
    fn new(section: FourDigit, raw: &AirfoilProfile) -> Self {
        let (lo, hi) = raw.x_range();
        let le = raw
            .points
            .iter()
            .copied()
            .min_by(|a, b| a.x.total_cmp(&b.x).then(a.y.abs().total_cmp(&b.y.abs())))
            .unwrap();
        let mut oracle = Self {
            section,
            x0: lo,
            chord: hi - lo,
            u_split: 0.0,
        };
        // The sampled nose point lies on the curve; recover its parameter.
        let target = oracle.normalize(le);
        let n = 200_000;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=n {
            let u = -0.05 + 0.1 * i as f64 / n as f64;
            let d = oracle.point(u).distance(&target);
            if d < best.0 {
                best = (d, u);
            }
        }
        let step = 0.1 / n as f64;
        let (mut a, mut b) = (best.1 - step, best.1 + step);
        for _ in 0..100 {
            let m1 = a + 0.382 * (b - a);
            let m2 = a + 0.618 * (b - a);
            if oracle.point(m1).distance(&target) < oracle.point(m2).distance(&target) {
                b = m2;
            } else {
                a = m1;
            }
        }
        oracle.u_split = 0.5 * (a + b);
        let miss = oracle.point(oracle.u_split).distance(&target);
        assert!(miss < 1e-9, "nose point off the curve by {miss}");
        oracle
    }

    fn normalize(&self, p: Point) -> Point {
        Point::new((p.x - self.x0) / self.chord, p.y / self.chord)
    }

    fn point(&self, u: f64) -> Point {
        let (up, lo) = self.section.surface_points(u.abs());
        self.normalize(if u < 0.0 { up } else { lo })
    }

    /// y where a surface reaches abscissa `x`, taking the crossing nearest
    /// the trailing edge: scan from the trailing edge toward the split, then
    /// bisect.
    fn y_at(&self, x: f64, upper: bool) -> f64 {
        let n = 20_000;
        let (start, end) = if upper { (-1.0, self.u_split) } else { (1.0, self.u_split) };
        let param = |i: usize| {
            let t = 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / n as f64).cos());
            start + (end - start) * t
        };
        for i in 0..n {
            let (mut a, mut b) = (param(i), param(i + 1));
            let fa = self.point(a).x - x;
            let fb = self.point(b).x - x;
            if fa == 0.0 {
                return self.point(a).y;
            }
            if fa * fb < 0.0 {
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if (self.point(m).x - x) * fa > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return self.point(0.5 * (a + b)).y;
            }
        }
        panic!("abscissa {x} not reached");
    }

    /// Distance from `p` to the closed analytic curve.
    fn distance(&self, p: Point) -> f64 {
        let n = 40_000;
        (0..=n)
            .map(|i| {
                let t = 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / n as f64).cos());
                self.point(-1.0 + 2.0 * t).distance(&p)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Largest deviation of the canonicalized profile from the closed form:
/// vertical error at every grid station off the nose, and point-to-curve
/// distance at x = 0, where the contour is vertical.
fn max_error_vs_analytic(section: FourDigit, raw: &AirfoilProfile) -> f64 {
    let oracle = AnalyticOracle::new(section, raw);
    let p = canonicalize(raw).unwrap();
    let grid = canonical_grid();
    let mut worst = oracle
        .distance(p.points[99])
        .max(oracle.distance(p.points[100]));
    for k in 1..100 {
        let up = p.points[99 - k];
        worst = worst.max((up.y - oracle.y_at(grid[k], true)).abs());
        let lo = p.points[100 + k];
        worst = worst.max((lo.y - oracle.y_at(grid[k], false)).abs());
    }
    worst
}

#[test]
fn naca0012_file_parses_to_131_symmetric_points() {
    let raw = FourDigit::from_code("0012").unwrap().profile("NACA 0012", 66);
    let parsed = parse_selig(&to_selig_string(&raw)).unwrap();
    assert_eq!(parsed.points.len(), 131);
    let n = parsed.points.len();
    for i in 0..n {
        let (a, b) = (parsed.points[i], parsed.points[n - 1 - i]);
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, -b.y);
    }
}

#[test]
fn irregular_naca0012_repanelizes_within_tolerance() {
    // 19 stations per surface with alternating jitter off cosine spacing.
    let section = FourDigit::from_code("0012").unwrap();
    let n = 19;
    let stations: Vec<f64> = (0..n)
        .map(|k| {
            let base = 0.5 * (1.0 - (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos());
            if k == 0 || k == n - 1 {
                base
            } else {
                let jitter = if k % 2 == 0 { 0.15 } else { -0.1 };
                let next = 0.5 * (1.0 - (std::f64::consts::PI * (k + 1) as f64 / (n - 1) as f64).cos());
                base + jitter * (next - base)
            }
        })
        .collect();
    let raw = section.profile_at("irregular", &stations);
    assert_eq!(raw.points.len(), 37);
    let err = max_error_vs_analytic(section, &raw);
    assert!(err <= 1e-3, "max error {err}");
}

#[test]
fn naca_sections_match_closed_form() {
    for code in ["0012", "2412"] {
        let section = FourDigit::from_code(code).unwrap();
        let err = max_error_vs_analytic(section, &section.profile(code, 66));
        assert!(err <= 1e-3, "{code}: max error {err}");
    }
}

#[test]
fn thickness_and_camber_from_code() {
    let m = geometric_metrics(
        &canonicalize(&FourDigit::from_code("0012").unwrap().profile("a", 66)).unwrap(),
    )
    .unwrap();
    assert!((m.thickness_ratio - 0.12).abs() <= 2e-3, "t/c {}", m.thickness_ratio);
    assert!(m.max_camber < 1e-12);
    let m = geometric_metrics(
        &canonicalize(&FourDigit::from_code("2412").unwrap().profile("a", 66)).unwrap(),
    )
    .unwrap();
    assert!((m.max_camber - 0.02).abs() <= 2e-3, "camber {}", m.max_camber);
    assert!((m.thickness_ratio - 0.12).abs() <= 2e-3);
    assert_eq!(m.thickness_ratio, m.max_thickness / m.chord);
    let grid = canonical_grid();
    for (c, x) in m.camber_line.iter().zip(grid) {
        assert_eq!(c.x, x);
    }
}

#[test]
fn canonical_naca0012_channels_are_mirror_images() {
    let p = canonicalize(&FourDigit::from_code("0012").unwrap().profile("a", 66)).unwrap();
    let s = to_canonical(&p).unwrap();
    for k in 0..100 {
        assert!((s.upper[k] + s.lower[99 - k]).abs() <= 1e-12);
    }
}

#[test]
fn ingested_profiles_share_the_grid() {
    let a = canonicalize(&FourDigit::from_code("0008").unwrap().profile("a", 30)).unwrap();
    let b = canonicalize(&FourDigit::from_code("6318").unwrap().profile("b", 90)).unwrap();
    let xa: Vec<f64> = a.points.iter().map(|p| p.x).collect();
    let xb: Vec<f64> = b.points.iter().map(|p| p.x).collect();
    assert_eq!(xa, xb);
}

fn naca_strategy() -> impl Strategy<Value = (FourDigit, usize)> {
    (0u32..7, 2u32..7, 6u32..25, 30usize..90).prop_map(|(m, p, t, n)| {
        (
            FourDigit::from_code(&format!("{m}{p}{t:02}")).unwrap(),
            n,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn repanelization_is_idempotent((section, n) in naca_strategy()) {
        let once = canonicalize(&section.profile("p", n)).unwrap();
        let twice = repanelize(&once, 100).unwrap();
        for (a, b) in once.points.iter().zip(&twice.points) {
            prop_assert_eq!(a.x, b.x);
            prop_assert!((a.y - b.y).abs() <= 1e-9);
        }
    }

    #[test]
    fn shape_is_preserved((section, n) in naca_strategy()) {
        let err = max_error_vs_analytic(section, &section.profile("p", n));
        prop_assert!(err <= 1e-3, "max error {}", err);
    }

    #[test]
    fn canonical_round_trip_is_exact(values in prop::collection::vec(-1.0f64..1.0, 200)) {
        let s = CanonicalSample::from_flat(&values).unwrap();
        let back = to_canonical(&from_canonical(&s, "s")).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn mirroring_negates_camber_and_keeps_thickness((section, n) in naca_strategy()) {
        let p = canonicalize(&section.profile("p", n)).unwrap();
        let a = geometric_metrics(&p).unwrap();
        let b = geometric_metrics(&p.mirrored()).unwrap();
        prop_assert_eq!(a.max_thickness, b.max_thickness);
        prop_assert_eq!(a.max_camber, b.max_camber);
        for (ca, cb) in a.camber_line.iter().zip(&b.camber_line) {
            prop_assert_eq!(ca.y, -cb.y);
        }
    }
}
