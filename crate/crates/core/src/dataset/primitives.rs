use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::VoxelGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Bridge,
    Beam,
    Block,
    Cylinder,
    Custom,
}

impl std::str::FromStr for PrimitiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bridge" => Self::Bridge,
            "beam" => Self::Beam,
            "block" => Self::Block,
            "cylinder" => Self::Cylinder,
            "custom" => Self::Custom,
            other => return Err(Error::Parameter(format!("unknown primitive '{other}'"))),
        })
    }
}

/// Rasterizes a primitive at resolution `n`, stretched by `scale` about the
/// vertical centre line and the ground plane. `custom` supplies the base
/// shape for [`PrimitiveKind::Custom`].
///
/// Unit-scale proportions, in cells of an `n³` grid:
/// block `n/2` cube; beam `n/2 × n/4 × n/4` along x; cylinder radius `n/4`,
/// height `n/2`; bridge deck `5n/8 × n/4 × n/8` resting on two `n/8`-wide
/// pillars `n/4` tall at its ends.
pub fn build_primitive(
    kind: PrimitiveKind,
    scale: [f64; 3],
    resolution: usize,
    spacing: f64,
    custom: Option<&VoxelGrid>,
) -> Result<VoxelGrid> {
    if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Parameter(format!("stretch factors {scale:?} must be positive")));
    }
    let n = resolution as f64;
    let c = n / 2.0;
    let [sx, sy, sz] = scale;
    let extents = match kind {
        PrimitiveKind::Block => [n / 2.0, n / 2.0, n / 2.0],
        PrimitiveKind::Beam => [n / 2.0, n / 4.0, n / 4.0],
        PrimitiveKind::Cylinder => [n / 2.0, n / 2.0, n / 2.0],
        PrimitiveKind::Bridge => [5.0 * n / 8.0, n / 4.0, 3.0 * n / 8.0],
        PrimitiveKind::Custom => {
            let src = custom.ok_or_else(|| Error::Parameter("custom primitive needs a base grid".into()))?;
            return stretch_custom(src, scale, resolution, spacing);
        }
    };
    let scaled = [extents[0] * sx, extents[1] * sy, extents[2] * sz];
    if scaled.iter().any(|&e| e > n + 1e-9) {
        return Err(Error::Grid(format!(
            "{kind:?} stretched by {scale:?} spans {scaled:?} cells, exceeding the {resolution}³ grid"
        )));
    }
    let [hx, hy, hz] = [scaled[0] / 2.0, scaled[1] / 2.0, scaled[2]];
    let g = VoxelGrid::from_fn(resolution, spacing, |x, y, z| {
        let (px, py, pz) = (x as f64 + 0.5 - c, y as f64 + 0.5 - c, z as f64 + 0.5);
        match kind {
            PrimitiveKind::Block | PrimitiveKind::Beam => px.abs() < hx && py.abs() < hy && pz < hz,
            PrimitiveKind::Cylinder => (px / hx).powi(2) + (py / hy).powi(2) < 1.0 && pz < hz,
            PrimitiveKind::Bridge => {
                let pillar_w = (n / 8.0 * sx).max(1.0);
                let pillar_h = n / 4.0 * sz;
                let inside = px.abs() < hx && py.abs() < hy && pz < hz;
                inside && (pz >= pillar_h || px.abs() + 0.5 > hx - pillar_w)
            }
            PrimitiveKind::Custom => unreachable!(),
        }
    })?;
    if g.occupied_count() == 0 {
        return Err(Error::Grid(format!("{kind:?} stretched by {scale:?} rasterizes to nothing")));
    }
    Ok(g)
}

fn stretch_custom(src: &VoxelGrid, scale: [f64; 3], resolution: usize, spacing: f64) -> Result<VoxelGrid> {
    let m = src.resolution() as f64;
    let n = resolution as f64;
    let k = n / m;
    let (cs, cn) = (m / 2.0, n / 2.0);
    let f = [k * scale[0], k * scale[1], k * scale[2]];
    for [x, y, z] in src.occupied_cells() {
        let lo = [(x as f64 - cs) * f[0] + cn, (y as f64 - cs) * f[1] + cn, z as f64 * f[2]];
        let hi = [(x as f64 + 1.0 - cs) * f[0] + cn, (y as f64 + 1.0 - cs) * f[1] + cn, (z as f64 + 1.0) * f[2]];
        if lo.iter().chain(&hi).any(|&v| v < -1e-9 || v > n + 1e-9) {
            return Err(Error::Grid(format!("custom shape stretched by {scale:?} exceeds the {resolution}³ grid")));
        }
    }
    let g = VoxelGrid::from_fn(resolution, spacing, |x, y, z| {
        let sx = ((x as f64 + 0.5 - cn) / f[0] + cs).floor();
        let sy = ((y as f64 + 0.5 - cn) / f[1] + cs).floor();
        let sz = ((z as f64 + 0.5) / f[2]).floor();
        [sx, sy, sz].iter().all(|&v| v >= 0.0 && v < m) && src.is_occupied(sx as usize, sy as usize, sz as usize)
    })?;
    if g.occupied_count() == 0 {
        return Err(Error::Grid("custom shape rasterizes to nothing at this scale".into()));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn extent(g: &VoxelGrid, axis: usize) -> (usize, usize) {
        let vals: Vec<usize> = g.occupied_cells().map(|c| c[axis]).collect();
        (*vals.iter().min().unwrap(), *vals.iter().max().unwrap())
    }

    #[test]
    fn unit_block_is_central_cube() {
        let g = build_primitive(PrimitiveKind::Block, [1.0; 3], 16, 0.01, None).unwrap();
        let expected = VoxelGrid::from_fn(16, 0.01, |x, y, z| (4..12).contains(&x) && (4..12).contains(&y) && z < 8).unwrap();
        assert_eq!(g, expected);
    }

    #[test]
    fn beam_stretch_doubles_length_only() {
        let a = build_primitive(PrimitiveKind::Beam, [1.0; 3], 16, 0.01, None).unwrap();
        let b = build_primitive(PrimitiveKind::Beam, [2.0, 1.0, 1.0], 16, 0.01, None).unwrap();
        let len = |g: &VoxelGrid, axis| {
            let (lo, hi) = extent(g, axis);
            hi - lo + 1
        };
        assert_eq!((len(&a, 0), len(&b, 0)), (8, 16));
        assert_eq!(len(&a, 1), len(&b, 1));
        assert_eq!(len(&a, 2), len(&b, 2));
        assert!(build_primitive(PrimitiveKind::Beam, [2.5, 1.0, 1.0], 16, 0.01, None).is_err());
    }

    #[test]
    fn cylinder_cross_section_is_round() {
        let g = build_primitive(PrimitiveKind::Cylinder, [1.0; 3], 32, 0.01, None).unwrap();
        let r = 8.0;
        for [x, y, _] in g.occupied_cells() {
            let d = ((x as f64 + 0.5 - 16.0).powi(2) + (y as f64 + 0.5 - 16.0).powi(2)).sqrt();
            assert!(d <= r + 1.0);
        }
        let (lo, hi) = extent(&g, 0);
        assert!(((hi - lo + 1) as f64 - 2.0 * r).abs() <= 1.0);
        let area = g.occupied_cells().filter(|c| c[2] == 0).count() as f64;
        assert!((area / (std::f64::consts::PI * r * r) - 1.0).abs() < 0.1);
    }

    #[test]
    fn all_primitives_touch_ground_at_every_scale() {
        for kind in [PrimitiveKind::Bridge, PrimitiveKind::Beam, PrimitiveKind::Block, PrimitiveKind::Cylinder] {
            for s in [0.5, 1.0, 1.5] {
                let g = build_primitive(kind, [s, 1.5 - s / 2.0, s], 16, 0.01, None).unwrap();
                assert!(g.occupied_cells().any(|c| c[2] == 0), "{kind:?} at {s}");
            }
        }
    }

    #[test]
    fn bridge_has_an_opening_under_the_deck() {
        let g = build_primitive(PrimitiveKind::Bridge, [1.0; 3], 16, 0.01, None).unwrap();
        assert!(!g.is_occupied(8, 8, 0));
        assert!(g.is_occupied(8, 8, 5));
        assert!(g.is_occupied(3, 8, 0) && g.is_occupied(12, 8, 0));
        let mesh = crate::elastic::build_hex_mesh(&g, 10).unwrap();
        assert_eq!(mesh.elements.len(), g.occupied_count());
    }

    #[test]
    fn custom_shapes_are_stretched() {
        let base = VoxelGrid::from_fn(8, 0.02, |x, y, z| (2..6).contains(&x) && (3..5).contains(&y) && z < 2).unwrap();
        let same = build_primitive(PrimitiveKind::Custom, [1.0; 3], 8, 0.02, Some(&base)).unwrap();
        assert_eq!(same, base);
        let up = build_primitive(PrimitiveKind::Custom, [1.0; 3], 16, 0.01, Some(&base)).unwrap();
        assert_eq!(up.occupied_count(), 8 * base.occupied_count());
        let tall = build_primitive(PrimitiveKind::Custom, [1.0, 1.0, 2.0], 8, 0.02, Some(&base)).unwrap();
        assert_eq!(extent(&tall, 2), (0, 3));
        assert!(build_primitive(PrimitiveKind::Custom, [3.0, 1.0, 1.0], 8, 0.02, Some(&base)).is_err());
        assert!(build_primitive(PrimitiveKind::Custom, [1.0; 3], 8, 0.02, None).is_err());
    }
}
