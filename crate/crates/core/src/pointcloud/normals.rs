use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use super::{KdTree, Point, PointCloud};
use crate::error::{Error, Result};

/// Neighbor count used for normal estimation when none is given.
pub const DEFAULT_NORMAL_K: usize = 12;

/// Relative gap below which the two smallest covariance eigenvalues count as
/// equal.
const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// PCA normals from the `k` nearest neighbors of each point.
///
/// The normal at `p_i` is the eigenvector of `YᵀY` with the smallest
/// eigenvalue, where the rows of `Y` are the neighbors minus their mean. It
/// is oriented away from the cloud centroid; when `p_i − centroid` is
/// tangent to the fitted plane the largest-magnitude component is made
/// positive instead. Existing normals are replaced.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let n = cloud.len();
    if k < 3 || k >= n {
        return Err(Error::InvalidNeighborCount {
            k,
            n,
            reason: "normal estimation needs 3 <= k < N",
        });
    }
    let points = cloud.points();
    let tree = KdTree::new(points);
    let centroid = cloud.centroid();

    let normals = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let neighbors = tree.nearest(p, k, Some(i));
            let normal = pca_normal(neighbors.iter().map(|&(j, _)| &points[j]))
                .ok_or(Error::DegenerateNormal { index: i })?;
            Ok(orient(normal, p - centroid))
        })
        .collect::<Result<Vec<_>>>()?;

    cloud.clone().with_normals(normals)
}

fn pca_normal<'a>(neighbors: impl Iterator<Item = &'a Point> + Clone) -> Option<Point> {
    let count = neighbors.clone().count() as f64;
    let mean = neighbors.clone().sum::<Point>() / count;
    let cov = neighbors.fold(Matrix3::zeros(), |acc, x| {
        let y = x - mean;
        acc + y * y.transpose()
    });

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1, l2) = (
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    if !(l2 > 0.0) || (l1 - l0) <= DEGENERACY_TOLERANCE * l2 {
        return None;
    }
    Some(eig.eigenvectors.column(order[0]).normalize())
}

fn orient(normal: Point, outward: Vector3<f64>) -> Point {
    let dot = normal.dot(&outward);
    let flip = if dot.abs() <= 1e-12 * outward.norm() {
        normal[normal.iamax()] < 0.0
    } else {
        dot < 0.0
    };
    if flip {
        -normal
    } else {
        normal
    }
}
