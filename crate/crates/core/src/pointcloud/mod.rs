//! Point clouds: storage, neighbor search, PCA normals and test geometry.

mod io;
mod kdtree;
mod normals;
mod sphere;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub use io::{load_cloud, write_xyz, CloudFormat};
pub use kdtree::KdTree;
pub use normals::{estimate_normals, DEFAULT_NORMAL_K};
pub use sphere::{generate_sphere_nodes, SphereLevel};

pub type Point = Vector3<f64>;

/// Tolerance on `‖n‖ = 1` for stored normals.
pub const NORMAL_TOLERANCE: f64 = 1e-12;

/// A sampled closed surface: `N ≥ 4` distinct points, optionally with unit
/// normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    normals: Option<Vec<Point>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, normals: Option<Vec<Point>>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::TooFewPoints(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "point {i} has non-finite coordinates"
            )));
        }
        if let Some(ns) = &normals {
            if ns.len() != points.len() {
                return Err(Error::DimensionMismatch {
                    expected: points.len(),
                    found: ns.len(),
                });
            }
            check_unit_normals(ns)?;
        }
        if let Some((first, second)) = find_duplicate(&points) {
            return Err(Error::DuplicatePoint { first, second });
        }
        Ok(PointCloud { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Point]> {
        self.normals.as_deref()
    }

    /// The normals, or [`Error::MissingNormals`].
    pub fn require_normals(&self) -> Result<&[Point]> {
        self.normals().ok_or(Error::MissingNormals)
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Replaces the normals. Each must be unit length.
    pub fn with_normals(mut self, normals: Vec<Point>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                found: normals.len(),
            });
        }
        check_unit_normals(&normals)?;
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn centroid(&self) -> Point {
        self.points.iter().sum::<Point>() / self.points.len() as f64
    }

    /// Applies `f` to every point and every normal.
    pub fn map(&self, f: impl Fn(&Point) -> Point) -> Result<Self> {
        let points = self.points.iter().map(&f).collect();
        let normals = self
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| f(n).normalize()).collect());
        PointCloud::new(points, normals)
    }

    pub fn kdtree(&self) -> KdTree<'_> {
        KdTree::new(&self.points)
    }

    pub fn into_parts(self) -> (Vec<Point>, Option<Vec<Point>>) {
        (self.points, self.normals)
    }
}

fn check_unit_normals(normals: &[Point]) -> Result<()> {
    for n in normals {
        let norm = n.norm();
        if !((norm - 1.0).abs() <= NORMAL_TOLERANCE) {
            return Err(Error::NonUnitNormal { norm });
        }
    }
    Ok(())
}

fn find_duplicate(points: &[Point]) -> Option<(usize, usize)> {
    let tree = KdTree::new(points);
    points.iter().enumerate().find_map(|(i, p)| {
        tree.nearest(p, 1, Some(i))
            .first()
            .filter(|(_, d)| *d == 0.0)
            .map(|&(j, _)| (i.min(j), i.max(j)))
    })
}

/// `k` nearest neighbors of every point, excluding the point itself.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborLists {
    pub k: usize,
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

/// Exact k-nearest neighbors; ties go to the lower point index.
pub fn knn(cloud: &PointCloud, k: usize) -> Result<NeighborLists> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidNeighborCount {
            k,
            n,
            reason: "need 0 < k < N",
        });
    }
    let tree = cloud.kdtree();
    let rows: Vec<(Vec<usize>, Vec<f64>)> = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| tree.nearest(p, k, Some(i)).into_iter().unzip())
        .collect();
    let (indices, distances) = rows.into_iter().unzip();
    Ok(NeighborLists {
        k,
        indices,
        distances,
    })
}

/// Mean distance from each point to its nearest other point.
pub fn mean_spacing(points: &[Point]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "mean spacing needs at least two points".into(),
        ));
    }
    let tree = KdTree::new(points);
    let nearest: Vec<f64> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| tree.nearest(p, 1, Some(i))[0].1)
        .collect();
    // sequential sum keeps the result independent of the thread count
    Ok(nearest.iter().sum::<f64>() / points.len() as f64)
}

/// Displaces every point along its normal by an offset drawn uniformly from
/// `[-amplitude, amplitude]`, then re-estimates normals with
/// [`DEFAULT_NORMAL_K`] neighbors.
pub fn perturb_cloud(cloud: &PointCloud, amplitude: f64, seed: u64) -> Result<PointCloud> {
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "perturbation amplitude must be nonnegative, got {amplitude}"
        )));
    }
    let estimated;
    let normals = match cloud.normals() {
        Some(ns) => ns,
        None => {
            estimated = estimate_normals(cloud, DEFAULT_NORMAL_K)?;
            estimated.require_normals()?
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = cloud
        .points()
        .iter()
        .zip(normals.iter())
        .map(|(p, n)| p + n * rng.random_range(-amplitude..=amplitude))
        .collect();
    let moved = PointCloud::new(points, None)?;
    estimate_normals(&moved, DEFAULT_NORMAL_K)
}
