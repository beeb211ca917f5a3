//! Natural cubic splines over a strictly increasing parameter.

use alloc::vec;
use alloc::vec::Vec;

/// A natural cubic spline `f(s)` through `(knots[i], values[i])`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    // Second derivatives at the knots; zero at both ends.
    curvature: Vec<f64>,
}

impl CubicSpline {
    /// Fits a spline. `knots` must be strictly increasing and at least two long.
    pub fn natural(knots: &[f64], values: &[f64]) -> Self {
        assert_eq!(knots.len(), values.len());
        assert!(knots.len() >= 2);
        let n = knots.len();
        let mut curvature = vec![0.0; n];
        if n > 2 {
            // Tridiagonal solve (Thomas algorithm) for interior second derivatives.
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                let h0 = knots[i + 1] - knots[i];
                let h1 = knots[i + 2] - knots[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0
                    * ((values[i + 2] - values[i + 1]) / h1 - (values[i + 1] - values[i]) / h0);
            }
            for i in 1..m {
                let lower = knots[i + 1] - knots[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            curvature[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                curvature[i + 1] = (rhs[i] - upper[i] * curvature[i + 2]) / diag[i];
            }
        }
        Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            curvature,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the segment containing `s`, clamped to the valid range.
    fn segment(&self, s: f64) -> usize {
        let n = self.knots.len();
        match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&s).unwrap_or(core::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Evaluates the spline on segment `i` at `s`.
    pub fn eval_in(&self, i: usize, s: f64) -> f64 {
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - s) / h;
        let b = (s - self.knots[i]) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.curvature[i] + (b * b * b - b) * self.curvature[i + 1]) * h
                * h
                / 6.0
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.eval_in(self.segment(s), s)
    }

    /// First derivative on segment `i`.
    pub fn derivative_in(&self, i: usize, s: f64) -> f64 {
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - s) / h;
        let b = (s - self.knots[i]) / h;
        (self.values[i + 1] - self.values[i]) / h
            + ((1.0 - 3.0 * a * a) * self.curvature[i] + (3.0 * b * b - 1.0) * self.curvature[i + 1])
                * h
                / 6.0
    }
}

/// A planar curve `(x(s), y(s))` splined against cumulative chord length.
#[derive(Debug, Clone)]
pub struct ArcLengthCurve {
    x: CubicSpline,
    y: CubicSpline,
}

impl ArcLengthCurve {
    /// Returns `None` when the points span zero length.
    pub fn fit(points: &[(f64, f64)]) -> Option<Self> {
        if points.len() < 2 {
            return None;
        }
        let mut s = Vec::with_capacity(points.len());
        s.push(0.0);
        for w in points.windows(2) {
            let d = libm::hypot(w[1].0 - w[0].0, w[1].1 - w[0].1);
            if d <= 0.0 {
                return None;
            }
            s.push(s[s.len() - 1] + d);
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        Some(Self {
            x: CubicSpline::natural(&s, &xs),
            y: CubicSpline::natural(&s, &ys),
        })
    }

    pub fn length(&self) -> f64 {
        let k = self.x.knots();
        k[k.len() - 1]
    }

    pub fn point(&self, s: f64) -> (f64, f64) {
        (self.x.eval(s), self.y.eval(s))
    }

    /// The y value where the curve first reaches abscissa `x`, walking the
    /// knots from index `from` to index `to` (either direction). Abscissae
    /// outside that stretch take the y of the knot nearest in x.
    pub fn y_at_x(&self, x: f64, from: usize, to: usize) -> f64 {
        let xs = self.x.values();
        let ys = self.y.values();
        let order: Vec<usize> = if from <= to {
            (from..=to).collect()
        } else {
            (to..=from).rev().collect()
        };
        for w in order.windows(2) {
            let (i, j) = (w[0], w[1]);
            if xs[i] == x {
                return ys[i];
            }
            let lo = xs[i] - x;
            let hi = xs[j] - x;
            if lo * hi < 0.0 {
                let seg = i.min(j);
                let knots = self.x.knots();
                let rising = xs[seg] < x;
                let s = self.solve_x(seg, x, knots[seg], knots[seg + 1], rising);
                return self.y.eval_in(seg, s);
            }
        }
        let last = order[order.len() - 1];
        if xs[last] == x {
            return ys[last];
        }
        let mut best = order[0];
        for &i in &order {
            if (xs[i] - x).abs() < (xs[best] - x).abs() {
                best = i;
            }
        }
        ys[best]
    }

    pub fn knot_count(&self) -> usize {
        self.x.knots().len()
    }

    // Safeguarded Newton/bisection for x(s) = target on segment i, where
    // x - target changes sign between `a` and `b`.
    fn solve_x(&self, i: usize, target: f64, mut a: f64, mut b: f64, rising: bool) -> f64 {
        let mut s = 0.5 * (a + b);
        for _ in 0..100 {
            let f = self.x.eval_in(i, s) - target;
            if f == 0.0 {
                return s;
            }
            if (f < 0.0) == rising {
                a = s;
            } else {
                b = s;
            }
            let d = self.x.derivative_in(i, s);
            let newton = s - f / d;
            s = if d != 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if (b - a).abs() <= 1e-15 * (1.0 + b.abs()) {
                break;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots() {
        let k = [0.0, 0.3, 1.0, 1.7, 2.0];
        let v = [1.0, -2.0, 0.5, 4.0, 3.0];
        let sp = CubicSpline::natural(&k, &v);
        for (s, y) in k.iter().zip(v) {
            assert!((sp.eval(*s) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_linear_data() {
        let k = [0.0, 0.5, 1.25, 3.0];
        let v: Vec<f64> = k.iter().map(|s| 2.0 * s - 1.0).collect();
        let sp = CubicSpline::natural(&k, &v);
        for i in 0..=30 {
            let s = 3.0 * i as f64 / 30.0;
            assert!((sp.eval(s) - (2.0 * s - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_y_at_x_follows_parabola() {
        let pts: Vec<(f64, f64)> = (0..=40)
            .map(|i| {
                let x = i as f64 / 40.0;
                (x, x * x)
            })
            .collect();
        let c = ArcLengthCurve::fit(&pts).unwrap();
        for i in 0..=17 {
            let x = i as f64 / 17.0;
            assert!((c.y_at_x(x, 0, 40) - x * x).abs() < 1e-5, "x={x}");
            assert!((c.y_at_x(x, 40, 0) - x * x).abs() < 1e-5, "x={x}");
        }
        // Outside the walked stretch: nearest knot in x.
        assert_eq!(c.y_at_x(0.9, 0, 20), 0.25);
    }

    #[test]
    fn zero_length_curve_rejected() {
        assert!(ArcLengthCurve::fit(&[(0.0, 0.0), (0.0, 0.0)]).is_none());
    }
}
