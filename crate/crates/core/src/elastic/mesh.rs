use std::collections::{HashMap, VecDeque};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::voxel::VoxelGrid;

/// Local corner offsets of a hexahedron: bottom face counter-clockwise, then top.
pub const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Hexahedral mesh with one element per occupied voxel.
#[derive(Clone, Debug)]
pub struct HexMesh {
    /// Node positions in metres.
    pub nodes: Vec<Vector3<f64>>,
    /// Lattice coordinates of each node (node `i` sits at `lattice[i] * spacing`).
    pub lattice: Vec<[usize; 3]>,
    pub elements: Vec<[usize; 8]>,
    /// Voxel coordinates each element was built from.
    pub element_cells: Vec<[usize; 3]>,
    /// Nodes clamped in all directions, sorted.
    pub fixed_nodes: Vec<usize>,
    /// One node set per force location, ordered by increasing x.
    pub load_sites: Vec<Vec<usize>>,
    pub spacing: f64,
}

impl HexMesh {
    pub fn dof_count(&self) -> usize {
        3 * self.nodes.len()
    }

    /// Nodes on the highest node layer.
    pub fn top_nodes(&self) -> Vec<usize> {
        let top = self.lattice.iter().map(|c| c[2]).max().unwrap_or(0);
        (0..self.nodes.len()).filter(|&i| self.lattice[i][2] == top).collect()
    }
}

/// Builds the mesh of the largest face-connected occupied region of `g`.
///
/// All nodes on `z = 0` are fixed. The top node layer is split into
/// `n_locations` equal bins along x, each bin forming one load site; a bin
/// with no nodes takes the node column nearest its centre.
pub fn build_hex_mesh(g: &VoxelGrid, n_locations: usize) -> Result<HexMesh> {
    if n_locations == 0 {
        return Err(Error::Parameter("at least one load location is required".into()));
    }
    let cells = largest_component(g);
    if cells.is_empty() {
        return Err(Error::Ungrounded("grid has no occupied cells".into()));
    }
    if !cells.iter().any(|c| c[2] == 0) {
        return Err(Error::Ungrounded("occupied region does not touch z = 0".into()));
    }

    let mut node_ids: HashMap<[usize; 3], usize> = HashMap::new();
    let mut lattice = Vec::new();
    let mut elements = Vec::with_capacity(cells.len());
    for &[x, y, z] in &cells {
        let mut element = [0usize; 8];
        for (slot, off) in element.iter_mut().zip(CORNERS) {
            let key = [x + off[0], y + off[1], z + off[2]];
            *slot = *node_ids.entry(key).or_insert_with(|| {
                lattice.push(key);
                lattice.len() - 1
            });
        }
        elements.push(element);
    }
    let h = g.spacing();
    let nodes = lattice
        .iter()
        .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64) * h)
        .collect();
    let fixed_nodes = (0..lattice.len()).filter(|&i| lattice[i][2] == 0).collect();

    let mut mesh = HexMesh {
        nodes,
        lattice,
        elements,
        element_cells: cells,
        fixed_nodes,
        load_sites: Vec::new(),
        spacing: h,
    };
    mesh.load_sites = load_sites(&mesh, n_locations);
    Ok(mesh)
}

fn load_sites(mesh: &HexMesh, n_locations: usize) -> Vec<Vec<usize>> {
    let top = mesh.top_nodes();
    let xs = |i: usize| mesh.lattice[i][0];
    let lo = top.iter().map(|&i| xs(i)).min().unwrap();
    let hi = top.iter().map(|&i| xs(i)).max().unwrap();
    let width = (hi - lo) as f64 / n_locations as f64;
    let mut sites = vec![Vec::new(); n_locations];
    for &i in &top {
        let bin = if width > 0.0 {
            (((xs(i) - lo) as f64 / width).floor() as usize).min(n_locations - 1)
        } else {
            0
        };
        sites[bin].push(i);
    }
    for (k, site) in sites.iter_mut().enumerate() {
        if site.is_empty() {
            let centre = lo as f64 + (k as f64 + 0.5) * width;
            let nearest = top
                .iter()
                .map(|&i| xs(i))
                .min_by(|a, b| (*a as f64 - centre).abs().total_cmp(&(*b as f64 - centre).abs()))
                .unwrap();
            site.extend(top.iter().copied().filter(|&i| xs(i) == nearest));
        }
    }
    sites
}

/// Cells of the largest 6-connected occupied component, in grid index order.
fn largest_component(g: &VoxelGrid) -> Vec<[usize; 3]> {
    let n = g.resolution();
    let mut label = vec![usize::MAX; n * n * n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..label.len() {
        if label[start] != usize::MAX || g.values()[start] < 0.5 {
            continue;
        }
        let id = components.len();
        let mut members = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let [x, y, z] = g.coords(i);
            let mut visit = |x: usize, y: usize, z: usize| {
                let j = g.index(x, y, z);
                if label[j] == usize::MAX && g.values()[j] >= 0.5 {
                    label[j] = id;
                    members.push(j);
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(x - 1, y, z);
            }
            if x + 1 < n {
                visit(x + 1, y, z);
            }
            if y > 0 {
                visit(x, y - 1, z);
            }
            if y + 1 < n {
                visit(x, y + 1, z);
            }
            if z > 0 {
                visit(x, y, z - 1);
            }
            if z + 1 < n {
                visit(x, y, z + 1);
            }
        }
        components.push(members);
    }
    if components.len() > 1 {
        log::warn!(
            "occupied region has {} disconnected parts; meshing the largest",
            components.len()
        );
    }
    let Some(best) = components.into_iter().max_by_key(|c| c.len()) else {
        return Vec::new();
    };
    let mut best = best;
    best.sort_unstable();
    best.into_iter().map(|i| g.coords(i)).collect()
}
