use nalgebra::Vector3;
use physnet_core::elastic::{build_hex_mesh, ElasticSystem, ForceSpec, HexMesh, MaterialParams, SolverOptions};
use physnet_core::voxel::VoxelGrid;

const H: f64 = 0.01;

/// Vertical `w × w × len` column standing on the ground.
fn column(n: usize, w: usize, len: usize) -> HexMesh {
    let lo = (n - w) / 2;
    let g = VoxelGrid::from_fn(n, H, |x, y, z| (lo..lo + w).contains(&x) && (lo..lo + w).contains(&y) && z < len).unwrap();
    build_hex_mesh(&g, 1).unwrap()
}

#[test]
fn cantilever_tip_deflection_matches_beam_theory() {
    let (w, len) = (4usize, 16usize);
    let mesh = column(16, w, len);
    assert_eq!(mesh.elements.len(), w * w * len);
    let m = MaterialParams::new(0.01, 0.3).unwrap();
    let force = 2.0;
    let f = ForceSpec::new(force, 0, [1.0, 0.0, 0.0]).unwrap();
    let u = ElasticSystem::assemble(&mesh, &m).unwrap().solve_force(&f, &SolverOptions::default()).unwrap();
    let top = mesh.top_nodes();
    let tip = top.iter().map(|&i| u.u[i].x).sum::<f64>() / top.len() as f64;

    let side = w as f64 * H;
    let inertia = side.powi(4) / 12.0;
    let length = len as f64 * H;
    let expected = force * length.powi(3) / (3.0 * m.youngs_modulus_pa() * inertia);
    let ratio = tip / expected;
    println!("tip {tip:e} m, beam theory {expected:e} m, ratio {ratio:.4}");
    assert!((ratio - 1.0).abs() <= 0.15, "ratio {ratio}");
}

#[test]
fn uniaxial_compression_recovers_poisson_ratio() {
    let (w, len) = (4usize, 24usize);
    let mesh = column(32, w, len);
    for nu in [0.1, 0.3, 0.45] {
        let m = MaterialParams::new(0.05, nu).unwrap();
        let f = ForceSpec::downward(50.0, 0).unwrap();
        let u = ElasticSystem::assemble(&mesh, &m).unwrap().solve_force(&f, &SolverOptions::default()).unwrap();
        let mid = len / 2;
        let (a, b) = (mid - 2, mid + 2);
        let at = |z: usize| -> Vec<usize> { (0..mesh.nodes.len()).filter(|&i| mesh.lattice[i][2] == z).collect() };
        let mean = |nodes: &[usize], f: &dyn Fn(&Vector3<f64>) -> f64| nodes.iter().map(|&i| f(&u.u[i])).sum::<f64>() / nodes.len() as f64;
        let axial = (mean(&at(b), &|v| v.z) - mean(&at(a), &|v| v.z)) / ((b - a) as f64 * H);
        let ring = at(mid);
        let lo = (32 - w) / 2;
        let left: Vec<usize> = ring.iter().copied().filter(|&i| mesh.lattice[i][0] == lo).collect();
        let right: Vec<usize> = ring.iter().copied().filter(|&i| mesh.lattice[i][0] == lo + w).collect();
        let lateral = (mean(&right, &|v| v.x) - mean(&left, &|v| v.x)) / (w as f64 * H);
        let measured = -lateral / axial;
        println!("ν = {nu}: measured {measured:.5}");
        assert!(axial < 0.0);
        assert!((measured - nu).abs() <= 0.05 * nu, "ν = {nu}, measured {measured}");
    }
}
