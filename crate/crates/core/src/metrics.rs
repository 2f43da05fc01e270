//! Off-policy and on-policy driving metrics and the statistics used to
//! relate them.

use alloc::vec;
use alloc::vec::Vec;

use crate::datalog::{DriveLog, TrajectoryPoint, DPI_CAP_M};
use crate::numerics::Rng;

/// Offset above which a trajectory sample counts as a failure, meters.
pub const FAILURE_THRESHOLD_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },
}

/// Root-mean-square rate of change of a steering sequence, degrees/second.
///
/// The mean runs over the `D − 1` consecutive differences.
pub fn whiteness(angles: &[f64], dt: f64) -> Result<f64, MetricError> {
    if angles.len() < 2 {
        return Err(MetricError::Domain("whiteness needs at least two samples"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(MetricError::Domain("whiteness needs a positive time step"));
    }
    let sum: f64 = angles
        .windows(2)
        .map(|w| {
            let rate = (w[1] - w[0]) / dt;
            rate * rate
        })
        .sum();
    Ok(libm::sqrt(sum / (angles.len() - 1) as f64))
}

/// Uniform bucket grid over the human points for nearest-neighbour queries.
struct Grid<'a> {
    points: &'a [(f64, f64)],
    origin: (f64, f64),
    cell: f64,
    cols: usize,
    rows: usize,
    starts: Vec<usize>,
    members: Vec<usize>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [(f64, f64)]) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (w, h) = ((x1 - x0).max(1e-9), (y1 - y0).max(1e-9));
        let cell = (libm::sqrt(w * h / points.len() as f64)).max((w.max(h)) / 4096.0).max(1e-6);
        let cols = (w / cell) as usize + 1;
        let rows = (h / cell) as usize + 1;
        let mut counts = vec![0usize; cols * rows + 1];
        let key = |p: (f64, f64)| -> usize {
            let cx = (((p.0 - x0) / cell) as usize).min(cols - 1);
            let cy = (((p.1 - y0) / cell) as usize).min(rows - 1);
            cy * cols + cx
        };
        for &p in points {
            counts[key(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut members = vec![0usize; points.len()];
        for (i, &p) in points.iter().enumerate() {
            let k = key(p);
            members[fill[k]] = i;
            fill[k] += 1;
        }
        Self {
            points,
            origin: (x0, y0),
            cell,
            cols,
            rows,
            starts,
            members,
        }
    }

    /// The two smallest distances from `q` to grid points.
    fn two_nearest(&self, q: (f64, f64)) -> (f64, f64) {
        let qx = libm::floor((q.0 - self.origin.0) / self.cell) as i64;
        let qy = libm::floor((q.1 - self.origin.1) / self.cell) as i64;
        let (last_x, last_y) = (self.cols as i64 - 1, self.rows as i64 - 1);
        // ring distances from q's cell to the nearest and farthest grid cells
        let gap = |v: i64, last: i64| if v < 0 { -v } else if v > last { v - last } else { 0 };
        let first = gap(qx, last_x).max(gap(qy, last_y));
        let last = qx.abs().max((qx - last_x).abs()).max(qy.abs()).max((qy - last_y).abs());
        let mut best = (f64::INFINITY, f64::INFINITY);
        for ring in first..=last {
            let (x0, x1) = ((qx - ring).max(0), (qx + ring).min(last_x));
            for cy in (qy - ring).max(0)..=(qy + ring).min(last_y) {
                if (cy - qy).abs() == ring {
                    for cx in x0..=x1 {
                        self.visit(cx, cy, q, &mut best);
                    }
                } else {
                    if qx - ring >= 0 {
                        self.visit(qx - ring, cy, q, &mut best);
                    }
                    if ring > 0 && qx + ring <= last_x {
                        self.visit(qx + ring, cy, q, &mut best);
                    }
                }
            }
            // every cell beyond this ring is at least `ring·cell` away
            if best.1 <= ring as f64 * self.cell {
                break;
            }
        }
        best
    }

    fn visit(&self, cx: i64, cy: i64, q: (f64, f64), best: &mut (f64, f64)) {
        let k = cy as usize * self.cols + cx as usize;
        for &i in &self.members[self.starts[k]..self.starts[k + 1]] {
            let p = self.points[i];
            let d = libm::hypot(p.0 - q.0, p.1 - q.1);
            if d < best.0 {
                *best = (d, best.0);
            } else if d < best.1 {
                best.1 = d;
            }
        }
    }
}

/// For every model point, the mean distance to its two nearest human points.
pub fn trajectory_offsets(model: &[(f64, f64)], human: &[(f64, f64)]) -> Result<Vec<f64>, MetricError> {
    if model.is_empty() {
        return Err(MetricError::Domain("empty model trajectory"));
    }
    if human.len() < 2 {
        return Err(MetricError::Domain("human trajectory needs at least two points"));
    }
    if model.iter().chain(human).any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(MetricError::Domain("non-finite trajectory point"));
    }
    let grid = Grid::new(human);
    Ok(model
        .iter()
        .map(|&q| {
            let (d1, d2) = grid.two_nearest(q);
            (d1 + d2) / 2.0
        })
        .collect())
}

pub fn mae_trajectory(offsets: &[f64]) -> Result<f64, MetricError> {
    if offsets.is_empty() {
        return Err(MetricError::Domain("no trajectory offsets"));
    }
    Ok(offsets.iter().sum::<f64>() / offsets.len() as f64)
}

/// Fraction of samples strictly above `threshold`.
pub fn failure_rate(offsets: &[f64], threshold: f64) -> Result<f64, MetricError> {
    if offsets.is_empty() {
        return Err(MetricError::Domain("no trajectory offsets"));
    }
    Ok(offsets.iter().filter(|&&o| o > threshold).count() as f64 / offsets.len() as f64)
}

/// Distance per intervention, never above `cap`; runs without interventions
/// score `cap`.
pub fn dpi(distance: f64, interventions: usize, cap: f64) -> Result<f64, MetricError> {
    if !(distance.is_finite() && distance >= 0.0) || !(cap > 0.0) {
        return Err(MetricError::Domain("distance must be non-negative"));
    }
    Ok(if interventions == 0 {
        cap
    } else {
        (distance / interventions as f64).min(cap)
    })
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::Length {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check_lengths(x, y)?;
    if x.len() < 3 {
        return Err(MetricError::Domain("correlation needs at least three pairs"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) || !(sxx.is_finite() && syy.is_finite()) {
        return Err(MetricError::Degenerate("zero variance"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Z-scores with the population standard deviation.
pub fn standardize(x: &[f64]) -> Result<Vec<f64>, MetricError> {
    if x.len() < 2 {
        return Err(MetricError::Domain("standardizing needs at least two values"));
    }
    let m = mean(x);
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64;
    if !(var > 0.0) {
        return Err(MetricError::Degenerate("zero variance"));
    }
    let sd = libm::sqrt(var);
    Ok(x.iter().map(|v| (v - m) / sd).collect())
}

/// Sum of the standardized off-policy MAE and whiteness columns.
pub fn combined_score(mae_steer: &[f64], w_off: &[f64]) -> Result<Vec<f64>, MetricError> {
    check_lengths(mae_steer, w_off)?;
    let a = standardize(mae_steer)?;
    let b = standardize(w_off)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrDiffTest {
    /// `r(dpi, A) − r(dpi, B)` on the full sample.
    pub observed: f64,
    pub mean_effect: f64,
    pub p_value: f64,
}

fn corr_diff(a: &[f64], b: &[f64], dpi: &[f64]) -> Result<f64, MetricError> {
    Ok(pearson(dpi, a)? - pearson(dpi, b)?)
}

/// Resampling test of whether metric A correlates with DpI more strongly
/// (more negatively) than metric B.
///
/// Deployments are resampled with replacement `n_resamples` times and the
/// signed difference `r(dpi, A) − r(dpi, B)` is recomputed on each draw;
/// resamples with a zero-variance column are redrawn. The mean effect is
/// the average difference, the p-value the fraction of differences on the
/// far side of zero from the observed one, ties included.
pub fn permutation_test_corr_diff(
    a: &[f64],
    b: &[f64],
    dpi: &[f64],
    n_resamples: usize,
    seed: u64,
) -> Result<CorrDiffTest, MetricError> {
    check_lengths(a, b)?;
    check_lengths(a, dpi)?;
    if n_resamples < 1000 {
        return Err(MetricError::Domain("at least 1000 resamples are required"));
    }
    let observed = corr_diff(a, b, dpi)?;
    let n = a.len();
    let mut rng = Rng::new(seed);
    let (mut sa, mut sb, mut sd) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut total, mut opposite, mut drawn, mut redraws) = (0.0, 0usize, 0usize, 0usize);
    while drawn < n_resamples {
        for i in 0..n {
            let j = rng.below(n);
            sa[i] = a[j];
            sb[i] = b[j];
            sd[i] = dpi[j];
        }
        let d = match corr_diff(&sa, &sb, &sd) {
            Ok(d) => d,
            Err(MetricError::Degenerate(_)) => {
                redraws += 1;
                if redraws > 100 * n_resamples {
                    return Err(MetricError::Degenerate("resamples are almost always constant"));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        total += d;
        let far_side = if observed < 0.0 { d >= 0.0 } else if observed > 0.0 { d <= 0.0 } else { true };
        opposite += usize::from(far_side);
        drawn += 1;
    }
    Ok(CorrDiffTest {
        observed,
        mean_effect: total / n_resamples as f64,
        p_value: opposite as f64 / n_resamples as f64,
    })
}

/// Label-swap variant: the statistic is `|r(dpi, A)| − |r(dpi, B)|` and the
/// null swaps A and B within each deployment with probability ½. The
/// reported mean effect is the observed signed difference.
pub fn paired_swap_test_corr_diff(
    a: &[f64],
    b: &[f64],
    dpi: &[f64],
    n_perm: usize,
    seed: u64,
) -> Result<CorrDiffTest, MetricError> {
    check_lengths(a, b)?;
    check_lengths(a, dpi)?;
    if n_perm < 1000 {
        return Err(MetricError::Domain("at least 1000 permutations are required"));
    }
    let stat = |x: &[f64], y: &[f64]| -> Result<f64, MetricError> { Ok(pearson(dpi, x)?.abs() - pearson(dpi, y)?.abs()) };
    let observed = stat(a, b)?;
    let mut rng = Rng::new(seed);
    let (mut pa, mut pb) = (a.to_vec(), b.to_vec());
    let mut extreme = 0usize;
    for _ in 0..n_perm {
        for i in 0..a.len() {
            let swap = rng.next_u64() >> 63 == 1;
            (pa[i], pb[i]) = if swap { (b[i], a[i]) } else { (a[i], b[i]) };
        }
        let s = match stat(&pa, &pb) {
            Ok(s) => s,
            Err(MetricError::Degenerate(_)) => 0.0,
            Err(e) => return Err(e),
        };
        extreme += usize::from(s.abs() >= observed.abs());
    }
    Ok(CorrDiffTest {
        observed,
        mean_effect: corr_diff(a, b, dpi)?,
        p_value: extreme as f64 / n_perm as f64,
    })
}

/// Closed-loop metrics of one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct OnPolicySummary {
    pub distance: f64,
    pub interventions: usize,
    pub dpi: f64,
    pub mae_trajectory: f64,
    pub failure_rate: f64,
    pub w_on_policy: f64,
    pub w_effective: f64,
}

impl OnPolicySummary {
    /// Scores `log` against the human reference trajectory of the same route.
    pub fn from_log(log: &DriveLog, human: &[TrajectoryPoint]) -> Result<Self, MetricError> {
        let points = |t: &[TrajectoryPoint]| t.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>();
        let offsets = trajectory_offsets(&points(&log.trajectory), &points(human))?;
        let angles = |s: &[crate::datalog::SteeringSample]| s.iter().map(|p| p.angle).collect::<Vec<_>>();
        Ok(Self {
            distance: log.distance_m,
            interventions: log.interventions.len(),
            dpi: dpi(log.distance_m, log.interventions.len(), DPI_CAP_M)?,
            mae_trajectory: mae_trajectory(&offsets)?,
            failure_rate: failure_rate(&offsets, FAILURE_THRESHOLD_M)?,
            w_on_policy: whiteness(&angles(&log.steering_cmd), log.dt_policy)?,
            w_effective: whiteness(&angles(&log.steering_eff), log.dt_policy)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_offsets(model: &[(f64, f64)], human: &[(f64, f64)]) -> Vec<f64> {
        model
            .iter()
            .map(|q| {
                let mut d: Vec<f64> = human.iter().map(|p| libm::hypot(p.0 - q.0, p.1 - q.1)).collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                (d[0] + d[1]) / 2.0
            })
            .collect()
    }

    #[test]
    fn whiteness_examples() {
        assert_eq!(whiteness(&[3.0; 5], 0.1).unwrap(), 0.0);
        assert_eq!(whiteness(&[0.0, 1.0, 2.0, 3.0], 0.1).unwrap(), 10.0);
        assert!((whiteness(&[0.0, 2.0], 0.033).unwrap() - 60.606).abs() < 1e-3);
        assert!(whiteness(&[1.0], 0.1).is_err());
        assert!(whiteness(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn offsets_examples() {
        let human = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)];
        let o = trajectory_offsets(&[(1.0, 0.5), (1.0, 0.0)], &human).unwrap();
        assert!((o[0] - (0.5 + libm::sqrt(1.25)) / 2.0).abs() < 1e-12);
        assert!((o[0] - 0.809).abs() < 1e-3);
        assert_eq!(o[1], 0.5);
        let dense: Vec<(f64, f64)> = (0..20).flat_map(|i| [(i as f64, 0.0), (i as f64, 0.0)]).collect();
        assert!(trajectory_offsets(&dense, &dense).unwrap().iter().all(|&v| v == 0.0));
        assert!(trajectory_offsets(&[], &human).is_err());
        assert!(trajectory_offsets(&[(0.0, 0.0)], &human[..1]).is_err());
    }

    #[test]
    fn grid_matches_brute_force() {
        let mut rng = Rng::new(12);
        for case in 0..20 {
            let n = 2 + rng.below(300);
            let spread = [1e-3, 1.0, 500.0][case % 3];
            let human: Vec<(f64, f64)> = (0..n)
                .map(|i| {
                    let s = i as f64 * spread / n as f64;
                    (s + rng.normal() * 0.01 * spread, libm::sin(s) * spread * 0.3)
                })
                .collect();
            let model: Vec<(f64, f64)> = (0..50)
                .map(|_| (rng.uniform_range(-1.0, 2.0) * spread, rng.uniform_range(-1.0, 1.0) * spread))
                .collect();
            let fast = trajectory_offsets(&model, &human).unwrap();
            let slow = brute_offsets(&model, &human);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "case {case}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn mae_and_failure_examples() {
        let o = [0.5, 1.5, 0.8, 2.0];
        assert!((mae_trajectory(&o).unwrap() - 1.2).abs() < 1e-12);
        assert_eq!(failure_rate(&o, 1.0).unwrap(), 0.5);
        assert_eq!(mae_trajectory(&[0.0; 3]).unwrap(), 0.0);
        assert_eq!(failure_rate(&[0.0; 3], 1.0).unwrap(), 0.0);
        assert_eq!(failure_rate(&[1.0], 1.0).unwrap(), 0.0);
        assert!(mae_trajectory(&[]).is_err() && failure_rate(&[], 1.0).is_err());
    }

    #[test]
    fn dpi_examples() {
        let v1 = dpi(8442.5, 2, DPI_CAP_M).unwrap();
        assert_eq!(v1, 4221.25);
        // reported to one decimal as 4221.3
        assert_eq!(libm::round(v1 * 10.0) / 10.0, 4221.3);
        assert_eq!(dpi(8436.9, 0, DPI_CAP_M).unwrap(), 10_000.0);
        assert_eq!(dpi(1000.0, 4, DPI_CAP_M).unwrap(), 250.0);
        assert_eq!(dpi(25_000.0, 2, DPI_CAP_M).unwrap(), 10_000.0);
        assert!(dpi(-1.0, 1, DPI_CAP_M).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 5.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &z).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&x, &[1.0; 5]), Err(MetricError::Degenerate(_))));
        assert!(pearson(&x[..2], &y[..2]).is_err());
    }

    #[test]
    fn combined_examples() {
        let col = [1.0, 4.0, 2.0, 9.0];
        let z = standardize(&col).unwrap();
        let c = combined_score(&col, &col).unwrap();
        for (a, b) in c.iter().zip(&z) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
        // [1,2,3]: mean 2, population sd √(2/3)
        let z = standardize(&[1.0, 2.0, 3.0]).unwrap();
        let s = libm::sqrt(2.0 / 3.0);
        assert!((z[0] + 1.0 / s).abs() < 1e-12 && z[1] == 0.0 && (z[2] - 1.0 / s).abs() < 1e-12);
    }

    #[test]
    fn identical_metrics_have_no_effect() {
        let mut rng = Rng::new(3);
        let a: Vec<f64> = (0..15).map(|_| rng.normal()).collect();
        let d: Vec<f64> = (0..15).map(|_| rng.uniform() * 1000.0).collect();
        let t = permutation_test_corr_diff(&a, &a, &d, 1000, 1).unwrap();
        assert_eq!(t.mean_effect, 0.0);
        assert!(t.p_value >= 0.99);
        let s = paired_swap_test_corr_diff(&a, &a, &d, 1000, 1).unwrap();
        assert_eq!(s.mean_effect, 0.0);
        assert!(s.p_value >= 0.99);
        assert!(permutation_test_corr_diff(&a, &a, &d, 999, 1).is_err());
    }

    #[test]
    fn resampling_test_is_seeded() {
        let mut rng = Rng::new(4);
        let a: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let d: Vec<f64> = (0..12).map(|_| rng.uniform()).collect();
        let x = permutation_test_corr_diff(&a, &b, &d, 2000, 5).unwrap();
        assert_eq!(x, permutation_test_corr_diff(&a, &b, &d, 2000, 5).unwrap());
        assert!((0.0..=1.0).contains(&x.p_value));
    }
}
