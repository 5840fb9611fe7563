use nalgebra::{Matrix3, Vector3};

use super::mesh::HexMesh;
use super::solver::DisplacementField;
use super::stiffness::{shape_gradients, shape_values};
use crate::error::{Error, Result};
use crate::voxel::VoxelGrid;

/// Moves every node by `u` and marks each cell whose centre lies inside a
/// deformed element. Cells falling outside the grid are dropped.
pub fn deform_and_revoxelize(mesh: &HexMesh, u: &DisplacementField, resolution: usize, spacing: f64) -> Result<VoxelGrid> {
    if u.u.len() != mesh.nodes.len() {
        return Err(Error::Dimension(format!(
            "displacement has {} nodes, mesh has {}",
            u.u.len(),
            mesh.nodes.len()
        )));
    }
    if u.u.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::Parameter("displacement field is not finite".into()));
    }
    let mut grid = VoxelGrid::empty(resolution, spacing)?;
    let n = resolution as i64;
    let (mut clipped, mut total) = (0usize, 0usize);
    for element in &mesh.elements {
        let corners: [Vector3<f64>; 8] = std::array::from_fn(|a| (mesh.nodes[element[a]] + u.u[element[a]]) / spacing);
        let lo = corners.iter().fold(Vector3::repeat(f64::INFINITY), |m, c| m.inf(c));
        let hi = corners.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |m, c| m.sup(c));
        // Cell i has its centre at i + 0.5.
        let first = (lo - Vector3::repeat(0.5)).map(|v| v.ceil() as i64);
        let last = (hi - Vector3::repeat(0.5)).map(|v| v.floor() as i64);
        for x in first.x..=last.x {
            for y in first.y..=last.y {
                for z in first.z..=last.z {
                    let centre = Vector3::new(x as f64, y as f64, z as f64).add_scalar(0.5);
                    if !contains(&corners, &centre) {
                        continue;
                    }
                    total += 1;
                    if [x, y, z].iter().any(|&c| c < 0 || c >= n) {
                        clipped += 1;
                        continue;
                    }
                    grid.set(x as usize, y as usize, z as usize, true);
                }
            }
        }
    }
    if clipped > 0 {
        log::warn!(
            "deformed shape left the grid: {:.2}% of covered cells clipped",
            100.0 * clipped as f64 / total as f64
        );
    }
    Ok(grid)
}

/// Whether `p` lies in the trilinear hexahedron with the given corners,
/// found by Newton iteration on the reference coordinates.
fn contains(corners: &[Vector3<f64>; 8], p: &Vector3<f64>) -> bool {
    let mut xi = Vector3::zeros();
    for _ in 0..25 {
        let w = shape_values(xi.into());
        let x: Vector3<f64> = corners.iter().zip(w).map(|(c, w)| c * w).sum();
        let r = p - x;
        if r.norm() < 1e-12 {
            break;
        }
        // Gradients in reference units (element of edge 2).
        let grads = shape_gradients(xi.into(), 2.0);
        let mut jac = Matrix3::zeros();
        for (c, g) in corners.iter().zip(grads) {
            jac += c * Vector3::from(g).transpose();
        }
        let Some(inv) = jac.try_inverse() else {
            return false;
        };
        xi += inv * r;
        if xi.amax() > 3.0 {
            return false;
        }
    }
    let w = shape_values(xi.into());
    let x: Vector3<f64> = corners.iter().zip(w).map(|(c, w)| c * w).sum();
    (p - x).norm() < 1e-9 && xi.amax() <= 1.0 + 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastic::{build_hex_mesh, solve_displacement, ForceSpec, MaterialParams};

    fn shape() -> VoxelGrid {
        VoxelGrid::from_fn(8, 0.01, |x, y, z| (1..6).contains(&x) && (2..5).contains(&y) && z < 4 + x % 2).unwrap()
    }

    #[test]
    fn zero_displacement_is_identity() {
        let g = shape();
        let mesh = build_hex_mesh(&g, 1).unwrap();
        let out = deform_and_revoxelize(&mesh, &DisplacementField::zeros(mesh.nodes.len()), 8, 0.01).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn translation_shifts_by_one_cell() {
        let g = shape();
        let mesh = build_hex_mesh(&g, 1).unwrap();
        let shift = DisplacementField {
            u: vec![Vector3::new(0.01, 0.0, 0.0); mesh.nodes.len()],
        };
        let out = deform_and_revoxelize(&mesh, &shift, 8, 0.01).unwrap();
        let expected = VoxelGrid::from_fn(8, 0.01, |x, y, z| x >= 1 && g.is_occupied(x - 1, y, z)).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn clipping_drops_cells() {
        let g = VoxelGrid::from_fn(4, 1.0, |x, _, z| x == 3 && z == 0).unwrap();
        let mesh = build_hex_mesh(&g, 1).unwrap();
        let shift = DisplacementField {
            u: vec![Vector3::new(1.0, 0.0, 0.0); mesh.nodes.len()],
        };
        assert_eq!(deform_and_revoxelize(&mesh, &shift, 4, 1.0).unwrap().occupied_count(), 0);
    }

    #[test]
    fn loaded_column_keeps_its_volume() {
        let g = VoxelGrid::from_fn(16, 0.01, |x, y, _| (6..10).contains(&x) && (6..10).contains(&y)).unwrap();
        let mesh = build_hex_mesh(&g, 1).unwrap();
        let m = MaterialParams::new(0.01, 0.3).unwrap();
        let f = ForceSpec::new(15.0, 0, [1.0, 0.0, 0.0]).unwrap();
        let u = solve_displacement(&mesh, &m, &f).unwrap();
        let out = deform_and_revoxelize(&mesh, &u, 16, 0.01).unwrap();
        assert_ne!(out, g);
        let change = (out.occupied_count() as f64 - g.occupied_count() as f64).abs() / g.occupied_count() as f64;
        assert!(change < 0.10, "occupied count changed by {change}");
        assert!((0..16).any(|x| (0..16).any(|y| out.is_occupied(x, y, 0))));
    }

    #[test]
    fn mismatched_field_is_rejected() {
        let mesh = build_hex_mesh(&shape(), 1).unwrap();
        assert!(deform_and_revoxelize(&mesh, &DisplacementField::zeros(3), 8, 0.01).is_err());
    }
}
