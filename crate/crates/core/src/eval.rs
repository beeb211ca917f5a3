//! Quality statistics for generated profiles: Chamfer novelty against a
//! training set, conditioning fidelity, shared-bin histograms and
//! lift-to-drag box statistics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aero::{self, FlowCondition};
use crate::geometry::{self, CanonicalSample, Point};

pub const DEFAULT_BINS: usize = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("point set is empty")]
    EmptySet,
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("{targets} targets but {evaluated} evaluated values")]
    LengthMismatch { targets: usize, evaluated: usize },
    #[error("fewer than two values")]
    TooFewValues,
    #[error("all targets are identical; no best-fit line exists")]
    DegenerateFit,
    #[error("histogram needs at least one bin")]
    NoBins,
}

pub type Result<T> = core::result::Result<T, EvalError>;

fn nearest_squared(p: &Point, set: &[Point]) -> f64 {
    set.iter().fold(f64::INFINITY, |m, q| {
        let (dx, dy) = (p.x - q.x, p.y - q.y);
        m.min(dx * dx + dy * dy)
    })
}

fn mean_nearest(a: &[Point], b: &[Point]) -> f64 {
    a.iter().map(|p| libm::sqrt(nearest_squared(p, b))).sum::<f64>() / a.len() as f64
}

/// Sum of the two mean nearest-neighbour distances between `a` and `b`.
pub fn chamfer_distance(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySet);
    }
    Ok(mean_nearest(a, b) + mean_nearest(b, a))
}

/// The 200 `(x, y)` points of a canonical sample.
pub fn profile_points(sample: &CanonicalSample) -> Vec<Point> {
    geometry::from_canonical(sample, "").points
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// ascending `sorted` values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let s = sorted(values);
        Some(Self {
            min: s[0],
            q1: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q3: quantile(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoveltyRow {
    pub chamfer: f64,
    pub nearest_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyResult {
    pub rows: Vec<NoveltyRow>,
    pub summary: Summary,
}

/// For each generated sample, the smallest Chamfer distance to any training
/// sample and the lowest index attaining it.
pub fn novelty_analysis(generated: &[CanonicalSample], training: &[CanonicalSample]) -> Result<NoveltyResult> {
    if generated.is_empty() || training.is_empty() {
        return Err(EvalError::EmptyCohort);
    }
    let train_points: Vec<Vec<Point>> = training.iter().map(profile_points).collect();
    let rows = generated
        .iter()
        .map(|g| {
            let gp = profile_points(g);
            let mut best = NoveltyRow {
                chamfer: f64::INFINITY,
                nearest_index: 0,
            };
            for (k, tp) in train_points.iter().enumerate() {
                let d = chamfer_distance(&gp, tp)?;
                if d < best.chamfer {
                    best = NoveltyRow {
                        chamfer: d,
                        nearest_index: k,
                    };
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = rows.iter().map(|r| r.chamfer).collect();
    let summary = Summary::of(&values).ok_or(EvalError::EmptyCohort)?;
    Ok(NoveltyResult { rows, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityResult {
    /// `(evaluated - target) / |target| * 100`; `None` where the target is 0.
    pub percent_diff: Vec<Option<f64>>,
    pub mae: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the best-fit residuals.
    pub residual_std: f64,
}

impl FidelityResult {
    pub fn percent_summary(&self) -> Option<Summary> {
        let v: Vec<f64> = self.percent_diff.iter().flatten().copied().collect();
        Summary::of(&v)
    }
}

/// Agreement between conditioning targets and the values measured on the
/// generated profiles, with an ordinary least-squares fit of evaluated on
/// target.
pub fn fidelity_analysis(targets: &[f64], evaluated: &[f64]) -> Result<FidelityResult> {
    if targets.len() != evaluated.len() {
        return Err(EvalError::LengthMismatch {
            targets: targets.len(),
            evaluated: evaluated.len(),
        });
    }
    if targets.len() < 2 {
        return Err(EvalError::TooFewValues);
    }
    let n = targets.len() as f64;
    let percent_diff = targets
        .iter()
        .zip(evaluated)
        .map(|(t, e)| (*t != 0.0).then(|| (e - t) / t.abs() * 100.0))
        .collect();
    let mae = targets.iter().zip(evaluated).map(|(t, e)| (e - t).abs()).sum::<f64>() / n;

    let mx = targets.iter().sum::<f64>() / n;
    let my = evaluated.iter().sum::<f64>() / n;
    let sxx: f64 = targets.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(EvalError::DegenerateFit);
    }
    let sxy: f64 = targets.iter().zip(evaluated).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = targets
        .iter()
        .zip(evaluated)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(FidelityResult {
        percent_diff,
        mae,
        slope,
        intercept,
        residual_std: libm::sqrt(ssr / n),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; the last bin is closed. Values
    /// outside the range or non-finite are not counted.
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(EvalError::NoBins);
        }
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            if !(v >= lo && v <= hi) {
                continue;
            }
            let k = if width > 0.0 {
                (((v - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[k] += 1;
        }
        Ok(Self { lo, hi, counts })
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Range spanning every finite value in every group, widened by 0.5 on both
/// sides when all values coincide.
pub fn shared_range<'a>(groups: impl IntoIterator<Item = &'a [f64]>) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for g in groups {
        for v in g.iter().filter(|v| v.is_finite()) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if lo > hi {
        return None;
    }
    if lo == hi {
        return Some((lo - 0.5, hi + 0.5));
    }
    Some((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Most extreme values within 1.5 IQR of the quartiles.
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let s = sorted(values);
        let (q1, median, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
        let iqr = q3 - q1;
        let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = |v: &&f64| **v >= fence_lo && **v <= fence_hi;
        let whisker_lo = s.iter().find(inside).copied().unwrap_or(q1);
        let whisker_hi = s.iter().rev().find(inside).copied().unwrap_or(q3);
        let outliers = s.iter().filter(|v| !inside(v)).copied().collect();
        Some(Self {
            q1,
            median,
            q3,
            whisker_lo,
            whisker_hi,
            outliers,
        })
    }
}

/// Indices of the `k` largest finite values, highest first; ties keep the
/// lower index first.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|i| values[*i].is_finite()).collect();
    idx.sort_by(|a, b| values[*b].total_cmp(&values[*a]).then(a.cmp(b)));
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub index: usize,
    pub cl: f64,
    pub cd: f64,
    pub lift_to_drag: f64,
    pub max_camber: f64,
    pub max_thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub reason: String,
}

/// Geometry and coefficients of one canonical sample.
pub fn evaluate_profile(sample: &CanonicalSample, flow: &FlowCondition) -> core::result::Result<ProfileRow, String> {
    let profile = geometry::from_canonical(sample, "");
    let metrics = geometry::geometric_metrics(&profile).map_err(|e| format!("{e}"))?;
    let coeffs = aero::evaluate(&profile, flow).map_err(|e| format!("{e}"))?;
    let row = ProfileRow {
        index: 0,
        cl: coeffs.cl,
        cd: coeffs.cd,
        lift_to_drag: coeffs.lift_to_drag,
        max_camber: metrics.max_camber,
        max_thickness: metrics.thickness_ratio,
    };
    if [row.cl, row.cd, row.lift_to_drag].iter().any(|v| !v.is_finite()) {
        return Err("non-finite coefficients".into());
    }
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Cl,
    Cd,
    MaxCamber,
    MaxThickness,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::Cl, Quantity::Cd, Quantity::MaxCamber, Quantity::MaxThickness];

    pub fn of(self, row: &ProfileRow) -> f64 {
        match self {
            Quantity::Cl => row.cl,
            Quantity::Cd => row.cd,
            Quantity::MaxCamber => row.max_camber,
            Quantity::MaxThickness => row.max_thickness,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Quantity::Cl => "lift coefficient",
            Quantity::Cd => "drag coefficient",
            Quantity::MaxCamber => "max camber",
            Quantity::MaxThickness => "max thickness",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Quantity::Cl => "cl",
            Quantity::Cd => "cd",
            Quantity::MaxCamber => "max_camber",
            Quantity::MaxThickness => "max_thickness",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cohort<'a> {
    pub name: String,
    pub samples: &'a [CanonicalSample],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub name: String,
    pub size: usize,
    pub rows: Vec<ProfileRow>,
    pub failures: Vec<Failure>,
    pub lift_to_drag: Option<BoxStats>,
    /// Sample indices of the best lift-to-drag ratios, best first.
    pub top: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityHistograms {
    pub quantity: Quantity,
    /// One histogram per cohort, all over the same bins.
    pub per_cohort: Vec<Histogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub flow: FlowCondition,
    pub cohorts: Vec<CohortReport>,
    pub histograms: Vec<QuantityHistograms>,
}

/// Evaluates every profile of every cohort. Failed evaluations are listed
/// per cohort and left out of the statistics.
pub fn distribution_report(
    cohorts: &[Cohort<'_>],
    flow: &FlowCondition,
    bins: usize,
    top: usize,
) -> Result<DistributionReport> {
    if bins == 0 {
        return Err(EvalError::NoBins);
    }
    if cohorts.iter().any(|c| c.samples.is_empty()) {
        return Err(EvalError::EmptyCohort);
    }
    let reports: Vec<CohortReport> = cohorts
        .iter()
        .map(|c| {
            let mut rows = Vec::new();
            let mut failures = Vec::new();
            for (index, s) in c.samples.iter().enumerate() {
                match evaluate_profile(s, flow) {
                    Ok(row) => rows.push(ProfileRow { index, ..row }),
                    Err(reason) => failures.push(Failure { index, reason }),
                }
            }
            let ld: Vec<f64> = rows.iter().map(|r| r.lift_to_drag).collect();
            let top = top_k(&ld, top).into_iter().map(|k| rows[k].index).collect();
            CohortReport {
                name: c.name.clone(),
                size: c.samples.len(),
                lift_to_drag: BoxStats::of(&ld),
                rows,
                failures,
                top,
            }
        })
        .collect();

    let mut histograms = Vec::new();
    for q in Quantity::ALL {
        let values: Vec<Vec<f64>> = reports.iter().map(|r| r.rows.iter().map(|row| q.of(row)).collect()).collect();
        let (lo, hi) = shared_range(values.iter().map(|v| v.as_slice())).unwrap_or((0.0, 1.0));
        let per_cohort = values
            .iter()
            .map(|v| Histogram::build(v, lo, hi, bins))
            .collect::<Result<Vec<_>>>()?;
        histograms.push(QuantityHistograms { quantity: q, per_cohort });
    }
    Ok(DistributionReport {
        flow: *flow,
        cohorts: reports,
        histograms,
    })
}

/// Everything `evaluate` reports about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub distribution: DistributionReport,
    pub fidelity: Option<FidelityResult>,
    pub novelty: Option<NoveltyResult>,
}
