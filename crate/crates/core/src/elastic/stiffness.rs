use nalgebra::{SMatrix, SVector};

use super::material::MaterialParams;
use super::mesh::CORNERS;
use crate::error::{Error, Result};

pub type ElementMatrix = SMatrix<f64, 24, 24>;
type Strain = SMatrix<f64, 6, 24>;

/// Isotropic constitutive matrix in Voigt order `xx, yy, zz, xy, yz, zx`
/// with engineering shear strains. `e` is in pascals.
pub fn constitutive(e: f64, nu: f64) -> SMatrix<f64, 6, 6> {
    let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mut d = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            d[(i, j)] = c * if i == j { 1.0 - nu } else { nu };
        }
        d[(i + 3, i + 3)] = c * (1.0 - 2.0 * nu) / 2.0;
    }
    d
}

/// Trilinear shape function gradients at reference point `xi`, in
/// physical units for a cube of edge `h`.
pub(crate) fn shape_gradients(xi: [f64; 3], h: f64) -> [[f64; 3]; 8] {
    let mut out = [[0.0; 3]; 8];
    for (a, corner) in CORNERS.iter().enumerate() {
        let s = corner.map(|c| if c == 0 { -1.0 } else { 1.0 });
        let f = |k: usize| 1.0 + s[k] * xi[k];
        out[a] = [
            s[0] * f(1) * f(2) / 8.0 * 2.0 / h,
            s[1] * f(0) * f(2) / 8.0 * 2.0 / h,
            s[2] * f(0) * f(1) / 8.0 * 2.0 / h,
        ];
    }
    out
}

pub(crate) fn shape_values(xi: [f64; 3]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for (a, corner) in CORNERS.iter().enumerate() {
        let s = corner.map(|c| if c == 0 { -1.0 } else { 1.0 });
        out[a] = (0..3).map(|k| 1.0 + s[k] * xi[k]).product::<f64>() / 8.0;
    }
    out
}

fn strain_matrix(grads: &[[f64; 3]; 8]) -> Strain {
    let mut b = Strain::zeros();
    for (a, g) in grads.iter().enumerate() {
        let c = 3 * a;
        b[(0, c)] = g[0];
        b[(1, c + 1)] = g[1];
        b[(2, c + 2)] = g[2];
        b[(3, c)] = g[1];
        b[(3, c + 1)] = g[0];
        b[(4, c + 1)] = g[2];
        b[(4, c + 2)] = g[1];
        b[(5, c)] = g[2];
        b[(5, c + 2)] = g[0];
    }
    b
}

/// Stiffness of a cubic trilinear hexahedron of edge `spacing` metres, by
/// 2×2×2 Gauss quadrature. DOFs are ordered node-major (`3a + axis`).
pub fn element_stiffness(m: &MaterialParams, spacing: f64) -> Result<ElementMatrix> {
    if m.poissons_ratio >= 0.5 {
        return Err(Error::SingularMaterial(format!(
            "Poisson's ratio {} makes the constitutive matrix singular",
            m.poissons_ratio
        )));
    }
    m.validate()?;
    if !(spacing > 0.0) {
        return Err(Error::Parameter(format!("element size {spacing} must be positive")));
    }
    let d = constitutive(m.youngs_modulus_pa(), m.poissons_ratio);
    let g = 1.0 / 3f64.sqrt();
    let det_j = (spacing / 2.0).powi(3);
    let mut k = ElementMatrix::zeros();
    for &a in &[-g, g] {
        for &b in &[-g, g] {
            for &c in &[-g, g] {
                let bm = strain_matrix(&shape_gradients([a, b, c], spacing));
                k += bm.transpose() * d * bm * det_j;
            }
        }
    }
    Ok((k + k.transpose()) * 0.5)
}

/// Nodal displacement vector of a rigid translation.
pub fn rigid_translation(t: [f64; 3]) -> SVector<f64, 24> {
    SVector::<f64, 24>::from_fn(|i, _| t[i % 3])
}
