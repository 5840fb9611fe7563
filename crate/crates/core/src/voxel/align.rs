use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::grid::VoxelGrid;
use super::transform::{resample, RigidAlignment};
use crate::error::{Error, Result};

/// Relative eigenvalue gap below which principal axes are treated as undetermined.
const EIGEN_TIE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct PcaAlignment {
    pub grid: VoxelGrid,
    pub alignment: RigidAlignment,
    /// Set when the covariance has repeated or vanishing eigenvalues; the
    /// undetermined axes were filled from the identity.
    pub degenerate: bool,
}

/// Rotates the occupied cells so the principal axes land on x, y, z in
/// descending variance order, and moves the centroid to the grid centre.
///
/// Each axis is signed to point along its positive target axis, falling back
/// to the first non-zero component. The third axis is `e1 × e2` so the
/// rotation is proper.
pub fn pca_align(g: &VoxelGrid) -> Result<PcaAlignment> {
    let alignment = principal_alignment(g)?;
    Ok(PcaAlignment {
        grid: resample(g, &alignment.0),
        alignment: alignment.0,
        degenerate: alignment.1,
    })
}

/// The transform [`pca_align`] would apply, without resampling.
pub fn principal_alignment(g: &VoxelGrid) -> Result<(RigidAlignment, bool)> {
    let points: Vec<Vector3<f64>> = g
        .occupied_cells()
        .map(|[x, y, z]| Vector3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5))
        .collect();
    if points.is_empty() {
        return Err(Error::Grid("cannot align an empty grid".into()));
    }
    let count = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / count;
    let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - centroid;
        acc + d * d.transpose()
    }) / count;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let scale = values[0].abs().max(f64::MIN_POSITIVE);
    let distinct = |k: usize| {
        let below = k == 0 || (values[k - 1] - values[k]) > EIGEN_TIE * scale;
        let above = k == 2 || (values[k] - values[k + 1]) > EIGEN_TIE * scale;
        below && above
    };
    let mut degenerate = values[2] <= EIGEN_TIE * scale;

    let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(3);
    for (k, &col) in order.iter().enumerate().take(2) {
        let candidate = if distinct(k) {
            eig.eigenvectors.column(col).into_owned()
        } else {
            degenerate = true;
            identity_fill(&axes, k)
        };
        axes.push(orient(gram_schmidt(candidate, &axes), k));
    }
    let third = axes[0].cross(&axes[1]);
    axes.push(third);

    let rotation = Matrix3::from_rows(&[axes[0].transpose(), axes[1].transpose(), axes[2].transpose()]);
    let center = Vector3::repeat(g.resolution() as f64 / 2.0);
    let alignment = RigidAlignment {
        rotation,
        translation: center - rotation * centroid,
    };
    Ok((alignment, degenerate))
}

fn identity_fill(chosen: &[Vector3<f64>], k: usize) -> Vector3<f64> {
    let mut best = Vector3::zeros();
    for axis in std::iter::once(k).chain(0..3) {
        let v = gram_schmidt(Vector3::ith(axis, 1.0), chosen);
        if v.norm() > best.norm() + 1e-9 {
            best = v;
        }
        if best.norm() > 0.5 {
            break;
        }
    }
    best
}

fn gram_schmidt(mut v: Vector3<f64>, basis: &[Vector3<f64>]) -> Vector3<f64> {
    for b in basis {
        v -= b * b.dot(&v);
    }
    let norm = v.norm();
    if norm > 0.0 {
        v / norm
    } else {
        v
    }
}

fn orient(v: Vector3<f64>, target: usize) -> Vector3<f64> {
    let tol = 1e-12;
    let sign = if v[target].abs() > tol {
        v[target].signum()
    } else {
        v.iter().find(|c| c.abs() > tol).map(|c| c.signum()).unwrap_or(1.0)
    };
    v * sign
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::camera::{rotate_grid, CameraPose};
    use std::f64::consts::FRAC_PI_2;

    fn centered_box(n: usize, lx: usize, ly: usize, lz: usize) -> VoxelGrid {
        let lo = |l: usize| (n - l) / 2;
        VoxelGrid::from_fn(n, 1.0, |x, y, z| {
            (lo(lx)..lo(lx) + lx).contains(&x) && (lo(ly)..lo(ly) + ly).contains(&y) && (lo(lz)..lo(lz) + lz).contains(&z)
        })
        .unwrap()
    }

    fn changed_fraction(a: &VoxelGrid, b: &VoxelGrid) -> f64 {
        let diff = a.values().iter().zip(b.values()).filter(|(x, y)| x != y).count();
        diff as f64 / a.occupied_count().max(1) as f64
    }

    #[test]
    fn aligned_box_is_untouched() {
        let g = centered_box(16, 10, 6, 4);
        let out = pca_align(&g).unwrap();
        assert!(!out.degenerate);
        assert!((out.alignment.rotation - Matrix3::identity()).abs().max() < 1e-9);
        assert_eq!(out.grid, g);
    }

    #[test]
    fn quarter_turn_is_undone() {
        let g = centered_box(16, 10, 6, 4);
        let turned = rotate_grid(&g, &CameraPose { angles: [0.0, 0.0, FRAC_PI_2] });
        assert_ne!(turned, g);
        let out = pca_align(&turned).unwrap();
        let long_axis = out.alignment.rotation.transpose().column(0).into_owned();
        assert!(long_axis.y.abs() > 0.999, "long axis should come from y, got {long_axis:?}");
        assert_eq!(out.grid.occupied_count(), g.occupied_count());
        assert!(changed_fraction(&out.grid, &g) * g.occupied_count() as f64 <= 2.0 * 40.0);
    }

    #[test]
    fn cube_is_degenerate() {
        let out = pca_align(&centered_box(8, 4, 4, 4)).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.alignment.rotation, Matrix3::identity());
    }

    #[test]
    fn flat_plate_is_flagged_rank_deficient() {
        let out = pca_align(&centered_box(16, 8, 4, 1)).unwrap();
        assert!(out.degenerate);
        let det = out.alignment.rotation.determinant();
        assert!((det - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_is_proper_and_idempotent() {
        let g = VoxelGrid::from_fn(16, 1.0, |x, y, z| x + 2 * y < 20 && x > 2 && y > 1 && z < 3 + x / 3).unwrap();
        let first = pca_align(&g).unwrap();
        let r = first.alignment.rotation;
        assert!((r * r.transpose() - Matrix3::identity()).abs().max() < 1e-9);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
        let second = pca_align(&first.grid).unwrap();
        assert!(changed_fraction(&second.grid, &first.grid) <= 0.02);
    }

    #[test]
    fn round_trip_through_inverse() {
        let g = VoxelGrid::from_fn(16, 1.0, |x, y, z| (3..13).contains(&x) && (5..9).contains(&y) && z < 6 && (x < 6 || x > 9 || z > 3)).unwrap();
        let out = pca_align(&g).unwrap();
        let back = resample(&out.grid, &out.alignment.inverse());
        assert!(changed_fraction(&back, &g) <= 0.02);
    }

    #[test]
    fn empty_grid_is_an_error() {
        assert!(pca_align(&VoxelGrid::empty(4, 1.0).unwrap()).is_err());
    }
}
