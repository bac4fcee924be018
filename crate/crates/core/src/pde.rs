//! Sphere spectrum, heat diffusion and Laplacian smoothing driven by the
//! discrete Laplace–Beltrami operator, with their error metrics.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::operator::{KernelSpec, LbOperator};
use crate::output::{fmt_f64, write_csv};
use crate::pointcloud::{estimate_normals, mean_spacing, Point, PointCloud, DEFAULT_NORMAL_K};

/// Neighbor count used by [`normal_angle_metric`].
pub const ANGLE_METRIC_K: usize = 6;

/// Default smoothing scale as a multiple of `h²`.
pub const DEFAULT_SMOOTH_SCALE_FACTOR: f64 = 0.01;

/// Default heat step as a multiple of `h²`.
pub const DEFAULT_HEAT_DT_FACTOR: f64 = 0.1;

/// Eigenvalues of `−LB`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// Smallest `m` real parts, ascending.
    pub computed: Vec<f64>,
    /// Largest imaginary magnitude over all eigenvalues.
    pub max_imag: f64,
    /// Set when `max_imag` exceeds a tenth of the spread of the real parts.
    pub unreliable: bool,
}

/// Computes the `m` smallest eigenvalues of `−LB` from the dense operator.
pub fn lb_spectrum(op: &LbOperator, m: usize) -> Result<SpectrumResult> {
    if m == 0 || m > op.n() {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue count {m} must be in 1..={}",
            op.n()
        )));
    }
    let dense = op.to_dense();
    let eig = dense
        .eigenvalues()
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let mut real: Vec<f64> = eig.iter().map(|z| -z.re).collect();
    if real.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let max_imag = eig.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    real.sort_by(f64::total_cmp);
    let spread = real[real.len() - 1] - real[0];
    real.truncate(m);
    Ok(SpectrumResult {
        computed: real,
        max_imag,
        unreliable: max_imag > 0.1 * spread,
    })
}

/// `l(l+1)` repeated `2l+1` times, truncated to `m` entries.
pub fn exact_sphere_spectrum(m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m);
    let mut l = 0u64;
    while out.len() < m {
        let value = (l * (l + 1)) as f64;
        for _ in 0..(2 * l + 1) {
            if out.len() == m {
                break;
            }
            out.push(value);
        }
        l += 1;
    }
    out
}

/// Euclidean distance between two equally long lists.
pub fn spectrum_distance(computed: &[f64], exact: &[f64]) -> Result<f64> {
    if computed.len() != exact.len() {
        return Err(Error::DimensionMismatch {
            expected: exact.len(),
            found: computed.len(),
        });
    }
    Ok(computed
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// `(1/2)·√(3/π)·x` at every node.
pub fn sph_harmonic_y10(cloud: &PointCloud) -> Vec<f64> {
    let k = 0.5 * (3.0 / std::f64::consts::PI).sqrt();
    cloud.points().iter().map(|p| k * p.x).collect()
}

/// `amplitude · exp(−width·‖x − center‖²)` at every node.
pub fn gaussian_bell(cloud: &PointCloud, center: &Point, amplitude: f64, width: f64) -> Vec<f64> {
    cloud
        .points()
        .iter()
        .map(|p| amplitude * (-width * (p - center).norm_squared()).exp())
        .collect()
}

/// Recorded states of a time-stepping run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    /// Step index of each recorded state.
    pub steps: Vec<usize>,
    pub states: Vec<S>,
    pub dt: f64,
    pub h: Option<f64>,
}

impl<S> Trajectory<S> {
    pub fn initial(&self) -> &S {
        &self.states[0]
    }

    pub fn last(&self) -> &S {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }
}

/// Number of steps to reach `t_end`, tolerating a quotient that lands a
/// rounding error above an integer.
fn step_count(t_end: f64, dt: f64) -> usize {
    let q = t_end / dt;
    let rounded = q.round();
    if (q - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        q.ceil() as usize
    }
}

/// Forward Euler for `u_t = eps·LB u`. Records every `snapshot_every`-th
/// state plus the final one; the last step is shortened to end on `t_end`.
pub fn heat_solve(
    op: &LbOperator,
    u0: &[f64],
    eps: f64,
    t_end: f64,
    dt: f64,
    snapshot_every: usize,
) -> Result<Trajectory<Vec<f64>>> {
    if !(dt > 0.0) || !(t_end >= 0.0) || !(eps >= 0.0) || snapshot_every == 0 {
        return Err(Error::InvalidArgument(format!(
            "heat requires dt > 0, t_end >= 0, eps >= 0 and snapshot_every >= 1 \
             (got dt={dt}, t_end={t_end}, eps={eps}, snapshot_every={snapshot_every})"
        )));
    }
    if u0.len() != op.n() {
        return Err(Error::DimensionMismatch {
            expected: op.n(),
            found: u0.len(),
        });
    }
    let n = step_count(t_end, dt);
    let mut traj = Trajectory {
        times: vec![0.0],
        steps: vec![0],
        states: vec![u0.to_vec()],
        dt,
        h: None,
    };
    let mut u = u0.to_vec();
    for step in 1..=n {
        let (t, tau) = if step == n {
            (t_end, t_end - (n - 1) as f64 * dt)
        } else {
            (step as f64 * dt, dt)
        };
        if eps != 0.0 {
            let lu = op.apply(&u)?;
            for (ui, li) in u.iter_mut().zip(&lu) {
                *ui += tau * eps * li;
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { step });
            }
        }
        if step % snapshot_every == 0 || step == n {
            traj.times.push(t);
            traj.steps.push(step);
            traj.states.push(u.clone());
        }
    }
    Ok(traj)
}

/// Discrete relative L² error and absolute L∞ error of `u` against `exact`.
pub fn field_errors(u: &[f64], exact: &[f64]) -> (f64, f64) {
    let diff: Vec<f64> = u.iter().zip(exact).map(|(a, b)| a - b).collect();
    let l2 = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    let linf = diff.iter().map(|d| d.abs()).fold(0.0, f64::max);
    (if norm > 0.0 { l2 / norm } else { l2 }, linf)
}

/// Laplacian smoothing settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothConfig {
    pub kernel: KernelSpec,
    pub steps: usize,
    /// Step scale; `None` means `DEFAULT_SMOOTH_SCALE_FACTOR · h²`.
    pub scale: Option<f64>,
    /// Neighbor count for the normals rebuilt each step.
    pub normal_k: usize,
    pub snapshot_every: usize,
    /// Build the operator once from the initial cloud and reuse it.
    pub freeze_operator: bool,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        SmoothConfig {
            kernel: KernelSpec::default(),
            steps: 60,
            scale: None,
            normal_k: DEFAULT_NORMAL_K,
            snapshot_every: 10,
            freeze_operator: false,
        }
    }
}

/// Iterates `X ← X + scale·LB X` on the coordinate columns. The kernel is
/// resolved once from the initial cloud; normals and the operator are
/// rebuilt from the current positions every step unless frozen. Times in
/// the trajectory are step indices.
pub fn laplace_smooth(cloud: &PointCloud, cfg: &SmoothConfig) -> Result<Trajectory<PointCloud>> {
    if cfg.snapshot_every == 0 {
        return Err(Error::InvalidArgument(
            "snapshot_every must be at least 1".into(),
        ));
    }
    let h = mean_spacing(cloud.points())?;
    let scale = cfg.scale.unwrap_or(DEFAULT_SMOOTH_SCALE_FACTOR * h * h);
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "smoothing scale {scale} must be >= 0"
        )));
    }
    let kernel: KernelConfig = cfg.kernel.resolve(cloud)?;
    let start = if cloud.has_normals() {
        cloud.clone()
    } else {
        estimate_normals(cloud, cfg.normal_k)?
    };

    let mut traj = Trajectory {
        times: vec![0.0],
        steps: vec![0],
        states: vec![start.clone()],
        dt: scale,
        h: Some(h),
    };
    let frozen = if cfg.freeze_operator && cfg.steps > 0 {
        Some(LbOperator::from_cloud(&start, &kernel).map_err(|e| step_failed(1, e))?)
    } else {
        None
    };

    let mut current = start;
    for step in 1..=cfg.steps {
        let rebuilt;
        let op = match &frozen {
            Some(op) => op,
            None => {
                rebuilt =
                    LbOperator::from_cloud(&current, &kernel).map_err(|e| step_failed(step, e))?;
                &rebuilt
            }
        };
        let mut columns = [const { Vec::new() }; 3];
        for (axis, col) in columns.iter_mut().enumerate() {
            let x: Vec<f64> = current.points().iter().map(|p| p[axis]).collect();
            *col = op.apply(&x)?;
        }
        let moved: Vec<Point> = current
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| p + scale * Vector3::new(columns[0][i], columns[1][i], columns[2][i]))
            .collect();
        if moved.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::BlowUp { step });
        }
        let cloud = PointCloud::new(moved, None).map_err(|e| step_failed(step, e))?;
        current = estimate_normals(&cloud, cfg.normal_k).map_err(|e| step_failed(step, e))?;
        if step % cfg.snapshot_every == 0 || step == cfg.steps {
            traj.times.push(step as f64);
            traj.steps.push(step);
            traj.states.push(current.clone());
        }
    }
    Ok(traj)
}

fn step_failed(step: usize, source: Error) -> Error {
    Error::StepFailed {
        step,
        source: Box::new(source),
    }
}

/// Per-point angles between PCA normals of two clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleMetric {
    pub angles: Vec<f64>,
    pub mean: f64,
    pub max: f64,
}

/// Re-estimates normals of both clouds with `k = 6` and returns
/// `arccos|n_i · m_i|` per point.
pub fn normal_angle_metric(cloud: &PointCloud, reference: &PointCloud) -> Result<AngleMetric> {
    if cloud.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: cloud.len(),
        });
    }
    let a = estimate_normals(cloud, ANGLE_METRIC_K)?;
    let b = estimate_normals(reference, ANGLE_METRIC_K)?;
    Ok(angles_between(a.require_normals()?, b.require_normals()?))
}

/// `arccos|n_i · m_i|` for given unit normals.
pub fn angles_between(normals: &[Point], reference: &[Point]) -> AngleMetric {
    let angles: Vec<f64> = normals
        .iter()
        .zip(reference)
        .map(|(n, m)| n.dot(m).abs().min(1.0).acos())
        .collect();
    let mean = angles.iter().sum::<f64>() / angles.len().max(1) as f64;
    let max = angles.iter().copied().fold(0.0, f64::max);
    AngleMetric { angles, mean, max }
}

/// Columns `index, computed, exact, abserr`.
pub fn write_spectrum_csv(path: impl AsRef<Path>, computed: &[f64], exact: &[f64]) -> Result<()> {
    let rows = computed.iter().zip(exact).enumerate().map(|(i, (c, e))| {
        vec![
            i.to_string(),
            fmt_f64(*c),
            fmt_f64(*e),
            fmt_f64((c - e).abs()),
        ]
    });
    write_csv(path, &["index", "computed", "exact", "abserr"], rows)
}

/// Columns `t, L2_err, Linf_err`.
pub fn write_heat_csv(path: impl AsRef<Path>, rows: &[(f64, f64, f64)]) -> Result<()> {
    let rows = rows
        .iter()
        .map(|(t, l2, linf)| vec![fmt_f64(*t), fmt_f64(*l2), fmt_f64(*linf)]);
    write_csv(path, &["t", "L2_err", "Linf_err"], rows)
}

/// Columns `step, mean_angle, max_angle`.
pub fn write_smoothing_csv(path: impl AsRef<Path>, rows: &[(usize, AngleMetric)]) -> Result<()> {
    let rows = rows
        .iter()
        .map(|(s, m)| vec![s.to_string(), fmt_f64(m.mean), fmt_f64(m.max)]);
    write_csv(path, &["step", "mean_angle", "max_angle"], rows)
}
