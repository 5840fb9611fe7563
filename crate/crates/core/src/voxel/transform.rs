use nalgebra::{Matrix3, Vector3};

use super::grid::VoxelGrid;

/// Rigid map `q = R p + t` in voxel units, where cell `i` has its centre at `i + 0.5`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidAlignment {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidAlignment {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation about the centre of an `n³` grid.
    pub fn about_center(rotation: Matrix3<f64>, n: usize) -> Self {
        let c = Vector3::repeat(n as f64 / 2.0);
        Self {
            rotation,
            translation: c - rotation * c,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }
}

/// Nearest-neighbour resampling of `g` under `a`: each output cell takes the
/// value of the source cell containing its pre-image centre.
pub fn resample(g: &VoxelGrid, a: &RigidAlignment) -> VoxelGrid {
    let n = g.resolution();
    let inv = a.inverse();
    let mut values = vec![0.0f32; n * n * n];
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let q = Vector3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                let p = inv.apply(&q);
                let (sx, sy, sz) = (p.x.floor(), p.y.floor(), p.z.floor());
                let limit = n as f64;
                if sx < 0.0 || sy < 0.0 || sz < 0.0 || sx >= limit || sy >= limit || sz >= limit {
                    continue;
                }
                values[(x * n + y) * n + z] = g.get(sx as usize, sy as usize, sz as usize);
            }
        }
    }
    VoxelGrid::new(n, g.spacing(), values, g.kind()).expect("resampling preserves grid validity")
}
