//! Virtual orthographic depth camera and the rotations it is placed at.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::grid::{GridKind, VoxelGrid};
use super::transform::{resample, RigidAlignment};
use crate::error::{Error, Result};

/// Depth recorded for rays that hit nothing.
pub const NO_HIT: f64 = f64::INFINITY;

/// Object rotation applied before an orthographic render along `+y`.
///
/// Angles are radians, composed as intrinsic X then Y then Z
/// (`R = Rx · Ry · Rz`).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraPose {
    pub angles: [f64; 3],
}

impl CameraPose {
    pub const IDENTITY: CameraPose = CameraPose { angles: [0.0; 3] };

    pub fn new(angles: [f64; 3]) -> Result<Self> {
        if angles.iter().any(|a| !(0.0..TAU).contains(a)) {
            return Err(Error::Parameter(format!("pose angles {angles:?} outside [0, 2π)")));
        }
        Ok(Self { angles })
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        let [a, b, c] = self.angles;
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), a);
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), b);
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), c);
        (rx * ry * rz).into_inner()
    }

    /// Rotation about the centre of an `n³` grid.
    pub fn alignment(&self, n: usize) -> RigidAlignment {
        RigidAlignment::about_center(self.rotation(), n)
    }
}

/// All `n³` poses on a uniform angle lattice, x-major then y then z.
pub fn enumerate_rotations(n_per_axis: usize) -> Vec<CameraPose> {
    let n = n_per_axis.max(1);
    let angle = |k: usize| TAU * k as f64 / n as f64;
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out.push(CameraPose {
                    angles: [angle(i), angle(j), angle(k)],
                });
            }
        }
    }
    out
}

/// Nearest-neighbour rotation of `g` about its centre.
pub fn rotate_grid(g: &VoxelGrid, pose: &CameraPose) -> VoxelGrid {
    resample(g, &pose.alignment(g.resolution()))
}

/// Orthographic depth image. Pixel `(i, j)` is the ray through grid column
/// `x = i, z = j`, travelling along `+y`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub spacing: f64,
    /// Metres from the `y = 0` face, `width * height` entries, index `i * height + j`.
    pub depths: Vec<f64>,
    pub camera: CameraPose,
}

impl DepthImage {
    pub fn depth(&self, i: usize, j: usize) -> f64 {
        self.depths[i * self.height + j]
    }

    pub fn hit_count(&self) -> usize {
        self.depths.iter().filter(|d| d.is_finite()).count()
    }

    /// `VXD1` header (magic, u32 width, u32 height, f32 spacing, 3×f32
    /// angles) followed by little-endian f32 depths, `+inf` for no hit.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 4 * self.depths.len());
        out.extend_from_slice(b"VXD1");
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.spacing as f32).to_le_bytes());
        for a in self.camera.angles {
            out.extend_from_slice(&(a as f32).to_le_bytes());
        }
        for &d in &self.depths {
            out.extend_from_slice(&(d as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 28 || &bytes[..4] != b"VXD1" {
            return Err(Error::Format("bad magic: not a VXD1 depth image".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
        let (width, height) = (u32_at(4) as usize, u32_at(8) as usize);
        if width == 0 || height == 0 || bytes.len() != 28 + 4 * width * height {
            return Err(Error::Format(format!("depth image {width}x{height} with {} bytes", bytes.len())));
        }
        Ok(Self {
            width,
            height,
            spacing: f32_at(12),
            camera: CameraPose {
                angles: [f32_at(16), f32_at(20), f32_at(24)],
            },
            depths: (0..width * height).map(|k| f32_at(28 + 4 * k)).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Renders the rotated grid: each ray records the front face of the first
/// occupied cell it meets.
pub fn render_depth(g: &VoxelGrid, pose: &CameraPose) -> DepthImage {
    let rotated = rotate_grid(g, pose);
    let n = g.resolution();
    let mut depths = vec![NO_HIT; n * n];
    for i in 0..n {
        for j in 0..n {
            if let Some(y) = (0..n).find(|&y| rotated.is_occupied(i, y, j)) {
                depths[i * n + j] = y as f64 * g.spacing();
            }
        }
    }
    DepthImage {
        width: n,
        height: n,
        spacing: g.spacing(),
        depths,
        camera: *pose,
    }
}

/// Voxelizes the visible surface: one occupied cell per finite-depth pixel,
/// in the camera (rotated) frame.
pub fn depth_to_partial_grid(d: &DepthImage) -> Result<VoxelGrid> {
    if d.width != d.height {
        return Err(Error::Dimension(format!("depth image {}x{} is not square", d.width, d.height)));
    }
    let n = d.width;
    let mut grid = VoxelGrid::empty(n, d.spacing)?;
    let mut clamped = 0usize;
    for i in 0..n {
        for j in 0..n {
            let depth = d.depth(i, j);
            if !depth.is_finite() {
                continue;
            }
            if depth < 0.0 {
                return Err(Error::Range(format!("negative depth {depth} at pixel ({i}, {j})")));
            }
            let mut y = (depth / d.spacing).round() as usize;
            if y >= n {
                y = n - 1;
                clamped += 1;
            }
            grid.set(i, y, j, true);
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} depth pixels beyond the grid extent were clamped to the far boundary");
    }
    debug_assert_eq!(grid.kind(), GridKind::Binary);
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rotation_lattice_counts() {
        assert_eq!(enumerate_rotations(5).len(), 125);
        assert_eq!(enumerate_rotations(1), vec![CameraPose::IDENTITY]);
        let two = enumerate_rotations(2);
        assert_eq!(two.len(), 8);
        assert!(two.iter().all(|p| p.angles.iter().all(|&a| a == 0.0 || a == PI)));
        assert_eq!(two[1].angles, [0.0, 0.0, PI]);
        for n in 1..5 {
            let poses = enumerate_rotations(n);
            for (i, a) in poses.iter().enumerate() {
                assert!(poses[i + 1..].iter().all(|b| b != a));
            }
        }
    }

    #[test]
    fn pose_validation() {
        assert!(CameraPose::new([0.0, TAU, 0.0]).is_err());
        assert!(CameraPose::new([0.0, PI, 1.0]).is_ok());
    }

    #[test]
    fn full_grid_renders_front_face() {
        let g = VoxelGrid::from_fn(4, 0.5, |_, _, _| true).unwrap();
        let d = render_depth(&g, &CameraPose::IDENTITY);
        assert!(d.depths.iter().all(|&v| v == 0.0));
        let e = render_depth(&VoxelGrid::empty(4, 0.5).unwrap(), &CameraPose::IDENTITY);
        assert!(e.depths.iter().all(|v| *v == NO_HIT));
        assert_eq!(depth_to_partial_grid(&e).unwrap().occupied_count(), 0);
    }

    #[test]
    fn single_cell_depth() {
        let g = VoxelGrid::from_fn(8, 0.25, |x, y, z| (x, y, z) == (2, 5, 3)).unwrap();
        let d = render_depth(&g, &CameraPose::IDENTITY);
        assert_eq!(d.hit_count(), 1);
        assert_eq!(d.depth(2, 3), 5.0 * 0.25);
    }

    #[test]
    fn cube_round_trip_gives_front_layer() {
        let g = VoxelGrid::from_fn(8, 1.0, |x, y, z| (2..6).contains(&x) && (3..7).contains(&y) && z < 4).unwrap();
        let partial = depth_to_partial_grid(&render_depth(&g, &CameraPose::IDENTITY)).unwrap();
        let front = VoxelGrid::from_fn(8, 1.0, |x, y, z| (2..6).contains(&x) && y == 3 && z < 4).unwrap();
        assert_eq!(partial, front);
    }

    #[test]
    fn partial_view_is_subset_of_rotated_solid() {
        let g = VoxelGrid::from_fn(8, 1.0, |x, y, z| x + y < 9 && z < 3 + x / 2).unwrap();
        for pose in enumerate_rotations(3) {
            let d = render_depth(&g, &pose);
            let partial = depth_to_partial_grid(&d).unwrap();
            let rotated = rotate_grid(&g, &pose);
            assert_eq!(partial.occupied_count(), d.hit_count());
            for [x, y, z] in partial.occupied_cells() {
                assert!(rotated.is_occupied(x, y, z));
            }
        }
    }

    #[test]
    fn far_depths_are_clamped() {
        let mut d = render_depth(&VoxelGrid::from_fn(4, 1.0, |_, _, _| true).unwrap(), &CameraPose::IDENTITY);
        d.depths[0] = 100.0;
        let g = depth_to_partial_grid(&d).unwrap();
        assert!(g.is_occupied(0, 3, 0));
    }

    #[test]
    fn half_turns_are_exact_permutations() {
        let g = VoxelGrid::from_fn(8, 1.0, |x, y, z| x < 5 && y < 2 && z < 3).unwrap();
        let r = rotate_grid(&g, &CameraPose { angles: [0.0, 0.0, PI] });
        assert_eq!(r.occupied_count(), g.occupied_count());
        assert!(r.is_occupied(7, 7, 0));
        let back = rotate_grid(&r, &CameraPose { angles: [0.0, 0.0, PI] });
        assert_eq!(back, g);
    }

    #[test]
    fn depth_image_bytes_round_trip() {
        let g = VoxelGrid::from_fn(4, 0.5, |x, _, z| x > z).unwrap();
        let d = render_depth(&g, &CameraPose { angles: [0.0, PI, 0.0] });
        let back = DepthImage::from_bytes(&d.to_bytes()).unwrap();
        assert_eq!(back.depths, d.depths);
        assert!(DepthImage::from_bytes(b"nope").is_err());
    }
}
