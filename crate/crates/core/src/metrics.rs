//! Ideal-sphere comparison and error statistics.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::Serialize;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::WorldPoint;
use crate::image::{Image, ImageF64};

/// Singular-value ratio below which the Coope system is treated as rank deficient.
const DEGENERACY_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereFit {
    pub center: [f64; 3],
    pub radius: f64,
    /// RMS geometric residual `|p − c| − r` (mm).
    pub rms_residual: f64,
}

impl SphereFit {
    pub fn new(center: Vector3<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid("radius", "must be > 0"));
        }
        Ok(SphereFit {
            center: center.into(),
            radius,
            rms_residual: 0.0,
        })
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    pub fn signed_distance(&self, p: &WorldPoint) -> f64 {
        (p - self.center()).norm() - self.radius
    }
}

/// Kahan–Babuška–Neumaier summation in input order.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn neumaier<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut s = NeumaierSum::default();
    values.into_iter().for_each(|v| s.add(v));
    s.total()
}

fn centroid(points: &[WorldPoint]) -> Vector3<f64> {
    let n = points.len() as f64;
    Vector3::new(
        neumaier(points.iter().map(|p| p.x)) / n,
        neumaier(points.iter().map(|p| p.y)) / n,
        neumaier(points.iter().map(|p| p.z)) / n,
    )
}

fn rms_residual(points: &[WorldPoint], center: &Vector3<f64>, radius: f64) -> f64 {
    let ss = neumaier(points.iter().map(|p| ((p - center).norm() - radius).powi(2)));
    (ss / points.len() as f64).sqrt()
}

/// Least-squares solve of `a x = b` through the SVD.
fn solve_lsq(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.svd(true, true).solve(b, 1e-14).ok()
}

/// Gauss–Newton step on `|p − c| − r` over `(c, r)`, or over `c` alone.
fn gauss_newton_step(
    points: &[WorldPoint],
    center: &Vector3<f64>,
    radius: f64,
    fixed: bool,
) -> Option<(Vector3<f64>, f64)> {
    let cols = if fixed { 3 } else { 4 };
    let mut j = DMatrix::zeros(points.len(), cols);
    let mut r = DVector::zeros(points.len());
    for (i, p) in points.iter().enumerate() {
        let d = p - center;
        let n = d.norm();
        if n == 0.0 {
            return None;
        }
        for k in 0..3 {
            j[(i, k)] = -d[k] / n;
        }
        if !fixed {
            j[(i, 3)] = -1.0;
        }
        r[i] = -(n - radius);
    }
    let step = solve_lsq(j, &r)?;
    let dc = Vector3::new(step[0], step[1], step[2]);
    let dr = if fixed { 0.0 } else { step[3] };
    Some((center + dc, radius + dr))
}

/// Algebraic (Coope) sphere fit refined by one geometric Gauss–Newton step.
///
/// With `fixed_radius` only the centre is estimated, starting from a point one
/// radius behind the centroid as seen from the origin.
pub fn fit_sphere_points(points: &[WorldPoint], fixed_radius: Option<f64>) -> Result<SphereFit> {
    if let Some(r) = fixed_radius {
        return fit_sphere_fixed(points, r);
    }
    if points.len() < 4 {
        return Err(Error::DegenerateInput(format!(
            "sphere fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    let m = centroid(points);
    let n = points.len();
    let mut a = DMatrix::zeros(n, 4);
    let mut b = DVector::zeros(n);
    for (i, p) in points.iter().enumerate() {
        let q = p - m;
        a[(i, 0)] = 2.0 * q.x;
        a[(i, 1)] = 2.0 * q.y;
        a[(i, 2)] = 2.0 * q.z;
        a[(i, 3)] = 1.0;
        b[i] = q.norm_squared();
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < DEGENERACY_RATIO {
        return Err(Error::DegenerateInput("points are coplanar or coincident".into()));
    }
    let x = svd.solve(&b, 0.0).map_err(|e| Error::DegenerateInput(e.to_string()))?;
    let c = Vector3::new(x[0], x[1], x[2]);
    let r2 = x[3] + c.norm_squared();
    if !(r2 > 0.0) {
        return Err(Error::DegenerateInput("algebraic fit produced no real sphere".into()));
    }
    let (c, r) = gauss_newton_step(points, &(c + m), r2.sqrt(), false)
        .ok_or_else(|| Error::DegenerateInput("geometric refinement failed".into()))?;
    if !(r > 0.0) {
        return Err(Error::DegenerateInput("refined radius is not positive".into()));
    }
    Ok(SphereFit {
        center: c.into(),
        radius: r,
        rms_residual: rms_residual(points, &c, r),
    })
}

fn fit_sphere_fixed(points: &[WorldPoint], radius: f64) -> Result<SphereFit> {
    if !(radius > 0.0) {
        return Err(Error::invalid("fixed_radius", "must be > 0"));
    }
    if points.is_empty() {
        return Err(Error::DegenerateInput("sphere fit needs at least 1 point".into()));
    }
    let m = centroid(points);
    let mut c = match m.try_normalize(0.0) {
        Some(dir) => m + dir * radius,
        None => m + Vector3::z() * radius,
    };
    for _ in 0..50 {
        let Some((next, _)) = gauss_newton_step(points, &c, radius, true) else {
            break;
        };
        let moved = (next - c).norm();
        c = next;
        if moved < 1e-12 * radius {
            break;
        }
    }
    Ok(SphereFit {
        center: c.into(),
        radius,
        rms_residual: rms_residual(points, &c, radius),
    })
}

pub fn fit_sphere(cloud: &PointCloud, fixed_radius: Option<f64>) -> Result<SphereFit> {
    let points: Vec<WorldPoint> = cloud.positions().copied().collect();
    fit_sphere_points(&points, fixed_radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReportOptions {
    /// Exclude points whose error is more than `k` scaled MADs from the median.
    pub mad_threshold: Option<f64>,
    /// Exclude points within this many pixels of a pixel without a point.
    pub erode_boundary: usize,
}

/// Population statistics of signed errors (mm).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub mean: f64,
    pub std: f64,
    pub rmse: f64,
    pub count: usize,
    pub excluded: usize,
    /// Signed error per camera pixel; NaN where there is no point or it was excluded.
    #[serde(skip)]
    pub error_map: ImageF64,
}

impl ErrorReport {
    pub fn to_csv(&self) -> String {
        format!(
            "# population statistics, mm\nmean,std,rmse,count,excluded\n{:.6},{:.6},{:.6},{},{}\n",
            self.mean, self.std, self.rmse, self.count, self.excluded
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain fields serialize")
    }

    /// Largest absolute finite error, for colour scaling.
    pub fn max_abs_error(&self) -> f64 {
        self.error_map
            .as_slice()
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Mean, population std and RMSE of `values`, summed in order.
pub fn population_stats(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = neumaier(values.iter().copied()) / n;
    let var = neumaier(values.iter().map(|v| (v - mean).powi(2))) / n;
    let ms = neumaier(values.iter().map(|v| v * v)) / n;
    (mean, var.sqrt(), ms.sqrt())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

fn near_boundary(grid: &Image<Option<WorldPoint>>, x: usize, y: usize, radius: usize) -> bool {
    let r = radius as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            match grid.get_checked(x as i64 + dx, y as i64 + dy) {
                Some(Some(_)) => {}
                _ => return true,
            }
        }
    }
    false
}

/// Statistics of per-point signed errors `errors[i]` belonging to `cloud.points[i]`.
pub fn report_from_errors(cloud: &PointCloud, errors: &[f64], options: &ReportOptions) -> Result<ErrorReport> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud has no points".into()));
    }
    debug_assert_eq!(errors.len(), cloud.len());
    let mut keep: Vec<bool> = errors.iter().map(|e| e.is_finite()).collect();
    if options.erode_boundary > 0 {
        let grid = cloud.to_grid();
        for (k, p) in cloud.points.iter().enumerate() {
            if near_boundary(&grid, p.pixel.0 as usize, p.pixel.1 as usize, options.erode_boundary) {
                keep[k] = false;
            }
        }
    }
    if let Some(k) = options.mad_threshold {
        let kept = || errors.iter().zip(&keep).filter(|(_, k)| **k).map(|(e, _)| *e);
        let s = sorted(kept());
        if !s.is_empty() {
            let med = median(&s);
            let mad = 1.4826 * median(&sorted(kept().map(|e| (e - med).abs())));
            for (e, keep) in errors.iter().zip(keep.iter_mut()) {
                if (e - med).abs() > k * mad {
                    *keep = false;
                }
            }
        }
    }
    let used: Vec<f64> = errors.iter().zip(&keep).filter(|(_, k)| **k).map(|(e, _)| *e).collect();
    if used.is_empty() {
        return Err(Error::EmptyInput("no points left after exclusion".into()));
    }
    let (mean, std, rmse) = population_stats(&used);
    let mut error_map = Image::filled(cloud.width, cloud.height, f64::NAN);
    for ((p, e), k) in cloud.points.iter().zip(errors).zip(&keep) {
        if *k {
            error_map.set(p.pixel.0 as usize, p.pixel.1 as usize, *e);
        }
    }
    Ok(ErrorReport {
        mean,
        std,
        rmse,
        count: used.len(),
        excluded: cloud.len() - used.len(),
        error_map,
    })
}

/// Signed error `|p − c| − r` against an ideal sphere.
pub fn error_report(cloud: &PointCloud, sphere: &SphereFit) -> Result<ErrorReport> {
    error_report_with(cloud, sphere, &ReportOptions::default())
}

pub fn error_report_with(cloud: &PointCloud, sphere: &SphereFit, options: &ReportOptions) -> Result<ErrorReport> {
    let errors: Vec<f64> = cloud.positions().map(|p| sphere.signed_distance(p)).collect();
    report_from_errors(cloud, &errors, options)
}

/// Signed depth error `z − z_true` against a per-pixel truth depth map.
/// Points on pixels without truth are excluded.
pub fn depth_error_report(cloud: &PointCloud, truth: &ImageF64, options: &ReportOptions) -> Result<ErrorReport> {
    truth.ensure_dims((cloud.width, cloud.height))?;
    let errors: Vec<f64> = cloud
        .points
        .iter()
        .map(|p| p.position.z - truth.get(p.pixel.0 as usize, p.pixel.1 as usize))
        .collect();
    report_from_errors(cloud, &errors, options)
}

/// Relative change from a baseline report `a` to a report `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub baseline_rmse: f64,
    pub rmse: f64,
    pub rmse_change_pct: f64,
    pub baseline_std: f64,
    pub std: f64,
    pub std_change_pct: f64,
}

impl Comparison {
    pub fn summary(&self) -> String {
        format!(
            "rmse {:.3} -> {:.3} mm ({:+.1}%), std {:.3} -> {:.3} mm ({:+.1}%)",
            self.baseline_rmse, self.rmse, self.rmse_change_pct, self.baseline_std, self.std, self.std_change_pct
        )
    }
}

fn pct_change(from: f64, to: f64) -> f64 {
    if from == to {
        0.0
    } else {
        (to - from) / from * 100.0
    }
}

pub fn compare_stats(baseline: &Stats, other: &Stats) -> Comparison {
    Comparison {
        baseline_rmse: baseline.rmse,
        rmse: other.rmse,
        rmse_change_pct: pct_change(baseline.rmse, other.rmse),
        baseline_std: baseline.std,
        std: other.std,
        std_change_pct: pct_change(baseline.std, other.std),
    }
}

pub fn compare_reports(baseline: &ErrorReport, other: &ErrorReport) -> Comparison {
    compare_stats(&Stats::from(baseline), &Stats::from(other))
}

/// Summary statistics without the error map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub rmse: f64,
}

impl From<&ErrorReport> for Stats {
    fn from(r: &ErrorReport) -> Self {
        Stats {
            mean: r.mean,
            std: r.std,
            rmse: r.rmse,
        }
    }
}

/// Sphere-measurement statistics (mm) reported for a physical rig, kept as
/// regression references for report formatting; not reproduced by the simulator.
pub mod reference {
    use super::Stats;

    pub const UNIFORM_CONVENTIONAL: Stats = Stats {
        mean: 0.176,
        std: 0.537,
        rmse: 0.565,
    };
    pub const UNIFORM_CAMERA_ONLY: Stats = Stats {
        mean: -0.313,
        std: 0.987,
        rmse: 1.035,
    };
    pub const UNIFORM_CORRECTED: Stats = Stats {
        mean: 0.011,
        std: 0.337,
        rmse: 0.337,
    };
    pub const ACCELERATING_CONVENTIONAL: Stats = Stats {
        mean: -0.031,
        std: 0.402,
        rmse: 0.403,
    };
    pub const ACCELERATING_UNIFORM_MODE: Stats = Stats {
        mean: -0.192,
        std: 0.331,
        rmse: 0.382,
    };
    pub const ACCELERATING_GENERAL_MODE: Stats = Stats {
        mean: -0.183,
        std: 0.326,
        rmse: 0.374,
    };
    pub const STATIONARY: Stats = Stats {
        mean: -0.152,
        std: 0.324,
        rmse: 0.358,
    };
}
