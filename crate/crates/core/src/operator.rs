//! Collocation matrix `A` (kernel values), differential matrix `B` (kernel
//! Laplacians) and the discrete Laplace–Beltrami operator `LB = B A⁻¹`.
//!
//! Entry `(i, j)` evaluates the basis function centered at node `j`, with
//! node `j`'s normal, at node `i`. Neither matrix is symmetric. With a
//! finite support radius only pairs within Euclidean distance `ρ` are
//! enumerated, and `A` and `B` always share that sparsity pattern.

use std::path::Path;

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatMut};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{
    gaussian, laplacian_of, project, shape_from_support, KernelConfig, Vec3,
    DEFAULT_TRUNCATION_EPSILON,
};
use crate::output::{fmt_f64, write_atomic};
use crate::pointcloud::{mean_spacing, PointCloud};

/// Support radius as a multiple of the mean nearest-neighbor spacing.
pub const DEFAULT_SUPPORT_MULTIPLIER: f64 = 4.0;

/// Reciprocal condition number below which an operator is reported as
/// ill-conditioned.
pub const RCOND_WARN: f64 = 1e-12;

/// Reciprocal condition number below which `A` is treated as singular.
pub const RCOND_FAIL: f64 = 1e-15;

/// Largest dimension for which [`condition_estimate`] computes the exact
/// 1-norm condition number instead of estimating it.
pub const EXACT_CONDITION_LIMIT: usize = 500;

/// How the kernel for a cloud is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `ρ = multiplier · h` with `h` the mean spacing, `c` from
    /// [`shape_from_support`].
    Multiplier {
        multiplier: f64,
        truncation_epsilon: f64,
    },
    Explicit(KernelConfig),
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Multiplier {
            multiplier: DEFAULT_SUPPORT_MULTIPLIER,
            truncation_epsilon: DEFAULT_TRUNCATION_EPSILON,
        }
    }
}

impl KernelSpec {
    pub fn resolve(&self, cloud: &PointCloud) -> Result<KernelConfig> {
        match *self {
            KernelSpec::Explicit(cfg) => Ok(cfg),
            KernelSpec::Multiplier {
                multiplier,
                truncation_epsilon,
            } => {
                if !(multiplier > 0.0) {
                    return Err(Error::InvalidKernel(format!(
                        "support multiplier {multiplier} must be positive"
                    )));
                }
                let h = mean_spacing(cloud.points())?;
                shape_from_support(multiplier * h, truncation_epsilon)
            }
        }
    }
}

/// Compressed-row storage shared by `A` and `B`.
#[derive(Debug, Clone, PartialEq)]
struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in rows {
            for (j, v) in row {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Csr {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }
}

/// Storage for a kernel matrix: sparse for a finite support radius, dense
/// for a global kernel.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    storage: Storage,
    config: KernelConfig,
}

#[derive(Debug, Clone)]
enum Storage {
    Sparse(Csr),
    Dense(Mat<f64>),
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        match &self.storage {
            Storage::Sparse(m) => m.n,
            Storage::Dense(m) => m.nrows(),
        }
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Sparse(m) => m.values.len(),
            Storage::Dense(m) => m.nrows() * m.ncols(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Sparse(m) => m.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v),
            Storage::Dense(m) => m[(i, j)],
        }
    }

    /// Stored `(row, col, value)` entries in row-major order.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        match &self.storage {
            Storage::Sparse(m) => (0..m.n)
                .flat_map(|i| m.row(i).map(move |(j, v)| (i, j, v)))
                .collect(),
            Storage::Dense(m) => (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| (i, j, m[(i, j)])))
                .collect(),
        }
    }

    /// Positions of stored entries in row-major order.
    pub fn pattern(&self) -> Vec<(usize, usize)> {
        self.entries().into_iter().map(|(i, j, _)| (i, j)).collect()
    }

    fn same_pattern(&self, other: &KernelMatrix) -> bool {
        match (&self.storage, &other.storage) {
            (Storage::Sparse(a), Storage::Sparse(b)) => {
                a.row_ptr == b.row_ptr && a.col_idx == b.col_idx
            }
            (Storage::Dense(a), Storage::Dense(b)) => {
                a.nrows() == b.nrows() && a.ncols() == b.ncols()
            }
            _ => false,
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(m) => {
                let mut out = Mat::zeros(m.n, m.n);
                for i in 0..m.n {
                    for (j, v) in m.row(i) {
                        out[(i, j)] = v;
                    }
                }
                out
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        match &self.storage {
            Storage::Sparse(m) => (0..m.n)
                .map(|i| m.row(i).map(|(j, v)| v * x[j]).sum())
                .collect(),
            Storage::Dense(m) => (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
                .collect(),
        }
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.n()];
        for (_, j, v) in self.entries() {
            sums[j] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    fn factorize(&self) -> Result<Factorization> {
        match &self.storage {
            Storage::Dense(m) => Ok(Factorization::Dense(m.partial_piv_lu())),
            Storage::Sparse(m) => {
                let triplets: Vec<_> = (0..m.n)
                    .flat_map(|i| m.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
                    .collect();
                let csc = SparseColMat::<usize, f64>::try_new_from_triplets(m.n, m.n, &triplets)
                    .map_err(|e| Error::IncompatibleMatrices(format!("{e:?}")))?;
                let lu = csc.sp_lu().map_err(|_| Error::SingularCollocation {
                    condition: f64::INFINITY,
                })?;
                Ok(Factorization::Sparse(lu))
            }
        }
    }

    /// Writes the matrix in MatrixMarket coordinate format (1-based).
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let entries = self.entries();
        write_atomic(path, |w| {
            writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
            writeln!(w, "{} {} {}", self.n(), self.n(), entries.len())?;
            for (i, j, v) in &entries {
                writeln!(w, "{} {} {}", i + 1, j + 1, fmt_f64(*v))?;
            }
            Ok(())
        })
    }
}

/// `a_ij = φ(r_ij)`.
#[derive(Debug, Clone)]
pub struct CollocationMatrix(KernelMatrix);

/// `b_ij = Δφ(r_ij)`.
#[derive(Debug, Clone)]
pub struct DifferentialMatrix(KernelMatrix);

impl CollocationMatrix {
    /// Wraps an arbitrary dense square matrix, e.g. for diagnostics.
    pub fn from_dense(matrix: Mat<f64>, config: KernelConfig) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        Ok(CollocationMatrix(KernelMatrix {
            storage: Storage::Dense(matrix),
            config,
        }))
    }

    pub fn matrix(&self) -> &KernelMatrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }
}

impl DifferentialMatrix {
    pub fn from_dense(matrix: Mat<f64>, config: KernelConfig) -> Result<Self> {
        CollocationMatrix::from_dense(matrix, config).map(|a| DifferentialMatrix(a.0))
    }

    pub fn matrix(&self) -> &KernelMatrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }
}

#[derive(Clone, Copy)]
enum Entry {
    Value,
    Laplacian,
}

fn assemble_rows(
    cloud: &PointCloud,
    cfg: &KernelConfig,
    which: &[Entry],
) -> Result<Vec<KernelMatrix>> {
    let normals = cloud.require_normals()?;
    let points = cloud.points();
    let n = points.len();
    let tree = (!cfg.is_global()).then(|| cloud.kdtree());

    let rows: Vec<Vec<(usize, Vec<f64>)>> = points
        .par_iter()
        .map(|x| {
            let candidates: Vec<usize> = match &tree {
                Some(t) => t.within_radius(x, cfg.support_radius()),
                None => (0..n).collect(),
            };
            candidates
                .into_iter()
                .filter_map(|j| {
                    let ev = project(x, &points[j], &normals[j]);
                    cfg.in_support(ev.r).then(|| {
                        let vals = which
                            .iter()
                            .map(|e| match e {
                                Entry::Value => gaussian(ev.r, cfg),
                                Entry::Laplacian => laplacian_of(&ev, &normals[j], cfg),
                            })
                            .collect();
                        (j, vals)
                    })
                })
                .collect()
        })
        .collect();

    Ok((0..which.len())
        .map(|k| {
            let storage = if cfg.is_global() {
                let mut m = Mat::zeros(n, n);
                for (i, row) in rows.iter().enumerate() {
                    for (j, vals) in row {
                        m[(i, *j)] = vals[k];
                    }
                }
                Storage::Dense(m)
            } else {
                let per_row = rows
                    .iter()
                    .map(|row| row.iter().map(|(j, vals)| (*j, vals[k])).collect())
                    .collect();
                Storage::Sparse(Csr::from_rows(n, per_row))
            };
            KernelMatrix {
                storage,
                config: *cfg,
            }
        })
        .collect())
}

/// Collocation matrix `a_ij = φ(r_j(x_i))`.
pub fn assemble_collocation(cloud: &PointCloud, cfg: &KernelConfig) -> Result<CollocationMatrix> {
    let mut m = assemble_rows(cloud, cfg, &[Entry::Value])?;
    Ok(CollocationMatrix(m.remove(0)))
}

/// Differential matrix `b_ij = Δφ(r_j(x_i))`.
pub fn assemble_differential(cloud: &PointCloud, cfg: &KernelConfig) -> Result<DifferentialMatrix> {
    let mut m = assemble_rows(cloud, cfg, &[Entry::Laplacian])?;
    Ok(DifferentialMatrix(m.remove(0)))
}

/// Both matrices from a single neighbor enumeration.
pub fn assemble(
    cloud: &PointCloud,
    cfg: &KernelConfig,
) -> Result<(CollocationMatrix, DifferentialMatrix)> {
    let mut m = assemble_rows(cloud, cfg, &[Entry::Value, Entry::Laplacian])?;
    let b = m.pop().unwrap();
    let a = m.pop().unwrap();
    Ok((CollocationMatrix(a), DifferentialMatrix(b)))
}

enum Factorization {
    Sparse(Lu<usize, f64>),
    Dense(PartialPivLu<f64>),
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Factorization::Sparse(_) => f.write_str("Factorization::Sparse"),
            Factorization::Dense(_) => f.write_str("Factorization::Dense"),
        }
    }
}

impl Factorization {
    fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        match self {
            Factorization::Sparse(lu) => lu.solve_in_place(rhs),
            Factorization::Dense(lu) => lu.solve_in_place(rhs),
        }
    }

    fn solve_transpose_in_place(&self, rhs: MatMut<'_, f64>) {
        match self {
            Factorization::Sparse(lu) => lu.solve_transpose_in_place(rhs),
            Factorization::Dense(lu) => lu.solve_transpose_in_place(rhs),
        }
    }

    fn solve(&self, f: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::from_fn(f.len(), 1, |i, _| f[i]);
        self.solve_in_place(rhs.as_mut());
        (0..f.len()).map(|i| rhs[(i, 0)]).collect()
    }

    fn solve_transpose(&self, f: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::from_fn(f.len(), 1, |i, _| f[i]);
        self.solve_transpose_in_place(rhs.as_mut());
        (0..f.len()).map(|i| rhs[(i, 0)]).collect()
    }

    /// `‖A⁻¹‖₁`, exact up to [`EXACT_CONDITION_LIMIT`], Hager's estimator
    /// above it.
    fn inverse_norm_one(&self, n: usize) -> f64 {
        if n <= EXACT_CONDITION_LIMIT {
            let mut inv = Mat::<f64>::identity(n, n);
            self.solve_in_place(inv.as_mut());
            return (0..n)
                .map(|j| (0..n).map(|i| inv[(i, j)].abs()).sum::<f64>())
                .fold(0.0, |acc, s| if s.is_nan() { f64::NAN } else { acc.max(s) });
        }

        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        let mut last_index = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            estimate = y.iter().map(|v| v.abs()).sum::<f64>();
            if !estimate.is_finite() {
                return f64::INFINITY;
            }
            let xi: Vec<f64> = y
                .iter()
                .map(|&v| if v >= 0.0 { 1.0 } else { -1.0 })
                .collect();
            let z = self.solve_transpose(&xi);
            let (jmax, zmax) =
                z.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bj, bv), (j, &v)| {
                        if v.abs() > bv {
                            (j, v.abs())
                        } else {
                            (bj, bv)
                        }
                    });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx || jmax == last_index {
                break;
            }
            last_index = jmax;
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        // Higham's alternating-sign lower bound guards against a poor start
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * (1.0 + i as f64 / (n as f64 - 1.0).max(1.0))
            })
            .collect();
        let w = self.solve(&alt);
        let alt_est = 2.0 * w.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        estimate.max(alt_est)
    }
}

fn condition_from(a: &KernelMatrix, lu: &Factorization) -> f64 {
    let cond = a.norm_one() * lu.inverse_norm_one(a.n());
    if cond.is_finite() {
        cond
    } else {
        f64::INFINITY
    }
}

/// 1-norm condition number of `A`; `+∞` when `A` cannot be factored.
pub fn condition_estimate(a: &CollocationMatrix) -> f64 {
    match a.0.factorize() {
        Ok(lu) => condition_from(&a.0, &lu),
        Err(_) => f64::INFINITY,
    }
}

/// Solution of `Aλ = f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolation {
    pub coefficients: Vec<f64>,
    /// `‖Aλ − f‖∞`.
    pub residual: f64,
    /// Set when the residual exceeds `1e-8·‖f‖∞`.
    pub warning: Option<String>,
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

fn interpolate_with(a: &KernelMatrix, lu: &Factorization, f: &[f64]) -> Result<Interpolation> {
    check_len(a.n(), f.len())?;
    let coefficients = lu.solve(f);
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCollocation {
            condition: f64::INFINITY,
        });
    }
    let residual = a
        .mul_vec(&coefficients)
        .iter()
        .zip(f)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let warning = (residual > 1e-8 * scale).then(|| {
        format!("interpolation residual {residual:e} exceeds 1e-8 of the data scale {scale:e}")
    });
    Ok(Interpolation {
        coefficients,
        residual,
        warning,
    })
}

/// Solves the collocation system `Aλ = f`.
pub fn interpolate(a: &CollocationMatrix, f: &[f64]) -> Result<Interpolation> {
    check_len(a.n(), f.len())?;
    let lu = a.0.factorize()?;
    interpolate_with(&a.0, &lu, f)
}

/// Evaluates `Σ_j λ_j φ(r_j(x))` at an arbitrary point, using the same
/// support rule as matrix assembly.
pub fn evaluate_interpolant(
    cloud: &PointCloud,
    cfg: &KernelConfig,
    coefficients: &[f64],
    x: &Vec3,
) -> Result<f64> {
    check_len(cloud.len(), coefficients.len())?;
    let normals = cloud.require_normals()?;
    let rho = cfg.support_radius();
    Ok(cloud
        .points()
        .iter()
        .zip(normals)
        .zip(coefficients)
        .filter(|((p, _), _)| (x - *p).norm() <= rho)
        .map(|((p, n), lambda)| lambda * gaussian(project(x, p, n).r, cfg))
        .sum())
}

/// The discrete Laplace–Beltrami operator `B A⁻¹`, held as a factorization
/// of `A` together with `B`.
#[derive(Debug)]
pub struct LbOperator {
    a: KernelMatrix,
    lu: Factorization,
    b: KernelMatrix,
    condition: f64,
    warning: Option<String>,
}

/// Factors `A` and pairs it with `B`.
pub fn build_lb(a: CollocationMatrix, b: DifferentialMatrix) -> Result<LbOperator> {
    let (a, b) = (a.0, b.0);
    if a.n() != b.n() {
        return Err(Error::IncompatibleMatrices(format!(
            "A is {0}x{0} but B is {1}x{1}",
            a.n(),
            b.n()
        )));
    }
    if a.config != b.config {
        return Err(Error::IncompatibleMatrices(
            "A and B were built with different kernel configurations".into(),
        ));
    }
    if !a.same_pattern(&b) {
        return Err(Error::IncompatibleMatrices(
            "A and B have different sparsity patterns".into(),
        ));
    }
    let lu = a.factorize()?;
    let condition = condition_from(&a, &lu);
    if !(1.0 / condition >= RCOND_FAIL) {
        return Err(Error::SingularCollocation { condition });
    }
    let warning = (1.0 / condition < RCOND_WARN)
        .then(|| format!("collocation matrix is ill-conditioned (condition {condition:e})"));
    Ok(LbOperator {
        a,
        lu,
        b,
        condition,
        warning,
    })
}

/// `B A⁻¹ f`.
pub fn apply_lb(op: &LbOperator, f: &[f64]) -> Result<Vec<f64>> {
    op.apply(f)
}

impl LbOperator {
    /// Assembles `A` and `B` for `cloud` and builds the operator.
    pub fn from_cloud(cloud: &PointCloud, cfg: &KernelConfig) -> Result<Self> {
        let (a, b) = assemble(cloud, cfg)?;
        build_lb(a, b)
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn config(&self) -> &KernelConfig {
        &self.a.config
    }

    pub fn collocation(&self) -> &KernelMatrix {
        &self.a
    }

    pub fn differential(&self) -> &KernelMatrix {
        &self.b
    }

    /// 1-norm condition number of `A` computed at build time.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), f.len())?;
        Ok(self.b.mul_vec(&self.lu.solve(f)))
    }

    /// Applies the operator to each column of an `n × m` matrix.
    pub fn apply_columns(&self, f: &Mat<f64>) -> Result<Mat<f64>> {
        check_len(self.n(), f.nrows())?;
        let mut lambda = f.clone();
        self.lu.solve_in_place(lambda.as_mut());
        let cols: Vec<Vec<f64>> = (0..f.ncols())
            .map(|j| {
                let col: Vec<f64> = (0..f.nrows()).map(|i| lambda[(i, j)]).collect();
                self.b.mul_vec(&col)
            })
            .collect();
        Ok(Mat::from_fn(f.nrows(), f.ncols(), |i, j| cols[j][i]))
    }

    pub fn interpolate(&self, f: &[f64]) -> Result<Interpolation> {
        interpolate_with(&self.a, &self.lu, f)
    }

    /// Materializes `B A⁻¹` by solving `Aᵀ Xᵀ = Bᵀ`.
    pub fn to_dense(&self) -> Mat<f64> {
        let mut bt = self.b.to_dense().transpose().to_owned();
        self.lu.solve_transpose_in_place(bt.as_mut());
        bt.transpose().to_owned()
    }
}
