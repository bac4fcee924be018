use std::collections::HashMap;

use nalgebra::Vector3;

use super::{Point, PointCloud};
use crate::error::{Error, Result};

/// Octahedron subdivision depth. Level `l` has `4·4^l + 2` nodes:
/// 258 at level 3, 1026 at 4, 4098 at 5, 16386 at 6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SphereLevel(u32);

impl SphereLevel {
    pub const MAX: u32 = 8;

    pub fn new(level: u32) -> Result<Self> {
        if level > Self::MAX {
            return Err(Error::InvalidArgument(format!(
                "sphere level {level} exceeds the maximum of {}",
                Self::MAX
            )));
        }
        Ok(SphereLevel(level))
    }

    pub fn level(self) -> u32 {
        self.0
    }

    pub fn node_count(self) -> usize {
        4 * 4usize.pow(self.0) + 2
    }
}

/// Unit-sphere nodes from a regular octahedron whose faces are split into
/// four `level` times, with new vertices pushed onto the sphere after every
/// split. Normals are the position vectors.
pub fn generate_sphere_nodes(level: SphereLevel) -> Result<PointCloud> {
    let mut vertices: Vec<Point> = vec![
        Vector3::x(),
        -Vector3::x(),
        Vector3::y(),
        -Vector3::y(),
        Vector3::z(),
        -Vector3::z(),
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];

    for _ in 0..level.level() {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push((vertices[a] + vertices[b]).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }

    debug_assert_eq!(vertices.len(), level.node_count());
    let normals = vertices.clone();
    PointCloud::new(vertices, Some(normals))
}
