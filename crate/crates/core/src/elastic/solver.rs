use nalgebra::{DMatrix, Vector3};

use super::material::{ForceSpec, MaterialParams};
use super::mesh::HexMesh;
use super::stiffness::element_stiffness;
use crate::error::{Error, Result};

/// Per-node displacement in metres.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    pub u: Vec<Vector3<f64>>,
}

impl DisplacementField {
    pub fn zeros(nodes: usize) -> Self {
        Self {
            u: vec![Vector3::zeros(); nodes],
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.u.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            u: self.u.iter().map(|v| v * k).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Stop once `‖r‖ ≤ tolerance · ‖b‖`.
    pub tolerance: f64,
    /// Iteration cap as a multiple of the free DOF count.
    pub iterations_per_dof: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            iterations_per_dof: 20,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *out = self.col_idx[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .find(|&k| self.col_idx[k] == r)
                    .map_or(0.0, |k| self.values[k])
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }
}

/// Global stiffness of a mesh with the fixed DOFs eliminated.
#[derive(Clone, Debug)]
pub struct ElasticSystem<'m> {
    mesh: &'m HexMesh,
    /// Free-DOF index of every global DOF, `None` where fixed.
    dof_map: Vec<Option<usize>>,
    matrix: CsrMatrix,
}

impl<'m> ElasticSystem<'m> {
    pub fn assemble(mesh: &'m HexMesh, material: &MaterialParams) -> Result<Self> {
        if mesh.fixed_nodes.is_empty() {
            return Err(Error::Ungrounded("mesh has no fixed nodes".into()));
        }
        let ke = element_stiffness(material, mesh.spacing)?;
        let mut fixed = vec![false; mesh.nodes.len()];
        for &i in &mesh.fixed_nodes {
            fixed[i] = true;
        }
        let mut dof_map = Vec::with_capacity(mesh.dof_count());
        let mut free = 0;
        for node in 0..mesh.nodes.len() {
            for _ in 0..3 {
                dof_map.push(if fixed[node] {
                    None
                } else {
                    free += 1;
                    Some(free - 1)
                });
            }
        }
        let mut triplets = Vec::with_capacity(mesh.elements.len() * 576);
        for element in &mesh.elements {
            let dofs: Vec<Option<usize>> = (0..24).map(|l| dof_map[3 * element[l / 3] + l % 3]).collect();
            for (a, ra) in dofs.iter().enumerate() {
                let Some(r) = ra else { continue };
                for (b, cb) in dofs.iter().enumerate() {
                    if let Some(c) = cb {
                        triplets.push((*r, *c, ke[(a, b)]));
                    }
                }
            }
        }
        Ok(Self {
            mesh,
            dof_map,
            matrix: CsrMatrix::from_triplets(free, triplets),
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn free_dofs(&self) -> usize {
        self.matrix.n
    }

    /// Solves for point loads `(node, force in newtons)`.
    pub fn solve(&self, loads: &[(usize, Vector3<f64>)], opts: &SolverOptions) -> Result<DisplacementField> {
        let mut b = vec![0.0; self.free_dofs()];
        for (node, f) in loads {
            if *node >= self.mesh.nodes.len() {
                return Err(Error::Parameter(format!("load on missing node {node}")));
            }
            for axis in 0..3 {
                if let Some(i) = self.dof_map[3 * node + axis] {
                    b[i] += f[axis];
                }
            }
        }
        let x = pcg(&self.matrix, &b, opts)?;
        let mut field = DisplacementField::zeros(self.mesh.nodes.len());
        for (g, slot) in self.dof_map.iter().enumerate() {
            if let Some(i) = slot {
                field.u[g / 3][g % 3] = x[*i];
            }
        }
        Ok(field)
    }

    /// Solves for `f` spread equally over the nodes of its load site.
    pub fn solve_force(&self, f: &ForceSpec, opts: &SolverOptions) -> Result<DisplacementField> {
        f.validate()?;
        let site = self.mesh.load_sites.get(f.location_index).ok_or_else(|| {
            Error::Parameter(format!(
                "force location {} but the mesh has {} load sites",
                f.location_index,
                self.mesh.load_sites.len()
            ))
        })?;
        let share = f.vector() / site.len() as f64;
        let loads: Vec<_> = site.iter().map(|&n| (n, share)).collect();
        self.solve(&loads, opts)
    }
}

/// Assembles and solves `K u = f` with default solver settings.
pub fn solve_displacement(mesh: &HexMesh, m: &MaterialParams, f: &ForceSpec) -> Result<DisplacementField> {
    ElasticSystem::assemble(mesh, m)?.solve_force(f, &SolverOptions::default())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradient.
pub fn pcg(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    let n = a.n;
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let cap = opts.iterations_per_dof * n.max(1);
    let mut residual = 1.0;
    for _ in 0..cap {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Ungrounded(format!(
                "stiffness matrix is singular (pᵀKp = {pap:e}); the solid is not sufficiently constrained"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= opts.tolerance {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver {
        iterations: cap,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastic::mesh::build_hex_mesh;
    use crate::voxel::VoxelGrid;

    fn block(n: usize, lx: usize, ly: usize, lz: usize) -> HexMesh {
        let g = VoxelGrid::from_fn(n, 0.01, |x, y, z| x < lx && y < ly && z < lz).unwrap();
        build_hex_mesh(&g, 2).unwrap()
    }

    fn rel_diff(a: &DisplacementField, b: &DisplacementField) -> f64 {
        let num: f64 = a.u.iter().zip(&b.u).map(|(x, y)| (x - y).norm_squared()).sum();
        let den: f64 = b.u.iter().map(|y| y.norm_squared()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn zero_load_gives_zero_displacement() {
        let mesh = block(4, 2, 2, 3);
        let u = solve_displacement(&mesh, &MaterialParams::new(1.0, 0.3).unwrap(), &ForceSpec::downward(0.0, 0).unwrap()).unwrap();
        assert!(u.u.iter().all(|v| *v == Vector3::zeros()));
    }

    #[test]
    fn fixed_nodes_stay_put() {
        let mesh = block(4, 3, 2, 3);
        let u = solve_displacement(&mesh, &MaterialParams::new(0.01, 0.3).unwrap(), &ForceSpec::downward(10.0, 1).unwrap()).unwrap();
        assert!(mesh.fixed_nodes.iter().all(|&i| u.u[i] == Vector3::zeros()));
        assert!(u.max_magnitude() > 0.0);
        let top = mesh.load_sites[1][0];
        assert!(u.u[top].z < 0.0);
    }

    #[test]
    fn reduced_stiffness_is_symmetric_positive_definite() {
        for (lx, ly, lz) in [(1, 1, 1), (2, 2, 2), (3, 2, 4), (6, 6, 6)] {
            let mesh = block(8, lx, ly, lz);
            let sys = ElasticSystem::assemble(&mesh, &MaterialParams::new(1.0, 0.3).unwrap()).unwrap();
            let k = sys.matrix().to_dense();
            let scale = k.abs().max();
            assert!((&k - k.transpose()).abs().max() <= 1e-12 * scale);
            let smallest = k.symmetric_eigenvalues().min();
            assert!(smallest > 0.0, "{lx}x{ly}x{lz}: smallest eigenvalue {smallest}");
        }
    }

    #[test]
    fn linear_in_force_and_material() {
        let mesh = block(8, 3, 2, 5);
        let m = MaterialParams::new(0.2, 0.3).unwrap();
        let u1 = solve_displacement(&mesh, &m, &ForceSpec::downward(5.0, 0).unwrap()).unwrap();
        let u2 = solve_displacement(&mesh, &m, &ForceSpec::downward(10.0, 0).unwrap()).unwrap();
        assert!(rel_diff(&u2, &u1.scaled(2.0)) <= 1e-8);
        let stiff = MaterialParams::new(0.6, 0.3).unwrap();
        let u3 = solve_displacement(&mesh, &stiff, &ForceSpec::downward(15.0, 0).unwrap()).unwrap();
        assert!(rel_diff(&u3, &u1) <= 1e-8);
    }

    #[test]
    fn reciprocity() {
        let mesh = block(4, 2, 2, 3);
        let sys = ElasticSystem::assemble(&mesh, &MaterialParams::new(0.05, 0.25).unwrap()).unwrap();
        let opts = SolverOptions {
            tolerance: 1e-14,
            ..SolverOptions::default()
        };
        let top = mesh.top_nodes();
        let (i, j) = (top[0], *top.last().unwrap());
        let ex = Vector3::x();
        let ez = Vector3::z();
        let ui = sys.solve(&[(i, ex)], &opts).unwrap();
        let uj = sys.solve(&[(j, ez)], &opts).unwrap();
        let a = uj.u[i].x;
        let b = ui.u[j].z;
        assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()), "{a} vs {b}");
    }

    #[test]
    fn bad_location_and_ungrounded() {
        let mesh = block(4, 2, 2, 2);
        let m = MaterialParams::new(1.0, 0.3).unwrap();
        assert!(solve_displacement(&mesh, &m, &ForceSpec::downward(1.0, 5).unwrap()).is_err());
        let mut floating = mesh.clone();
        floating.fixed_nodes.clear();
        assert!(matches!(ElasticSystem::assemble(&floating, &m), Err(Error::Ungrounded(_))));
        let mut loose = mesh.clone();
        loose.fixed_nodes.truncate(1);
        let err = solve_displacement(&loose, &m, &ForceSpec::new(1.0, 0, [1.0, 0.0, 0.0]).unwrap());
        assert!(matches!(err, Err(Error::Ungrounded(_)) | Err(Error::Solver { .. })), "{err:?}");
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let mesh = block(4, 2, 2, 3);
        let sys = ElasticSystem::assemble(&mesh, &MaterialParams::new(1.0, 0.3).unwrap()).unwrap();
        let opts = SolverOptions {
            tolerance: 1e-30,
            iterations_per_dof: 0,
        };
        let err = sys.solve(&[(mesh.top_nodes()[0], Vector3::z())], &opts).unwrap_err();
        assert!(matches!(err, Error::Solver { iterations: 0, .. }));
    }
}
