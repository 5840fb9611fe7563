use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VXG1";
pub const HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Binary,
    Probabilistic,
}

impl GridKind {
    fn tag(self) -> u8 {
        match self {
            GridKind::Binary => 0,
            GridKind::Probabilistic => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(GridKind::Binary),
            1 => Ok(GridKind::Probabilistic),
            t => Err(Error::Format(format!("unknown grid kind tag {t}"))),
        }
    }
}

/// Cubic occupancy grid of `resolution³` cells with values in `[0, 1]`.
///
/// Spacing is held at `f32` precision so that grids survive serialization unchanged.
///
/// Cell `(x, y, z)` lives at linear index `(x * n + y) * n + z`; `z` is up
/// and `z = 0` is the ground plane.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    spacing: f64,
    values: Vec<f32>,
    kind: GridKind,
}

fn check_geometry(resolution: usize, spacing: f64) -> Result<()> {
    if resolution == 0 || !resolution.is_power_of_two() {
        return Err(Error::Grid(format!("resolution {resolution} is not a power of two")));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::Grid(format!("spacing {spacing} must be positive")));
    }
    Ok(())
}

impl VoxelGrid {
    pub fn new(resolution: usize, spacing: f64, values: Vec<f32>, kind: GridKind) -> Result<Self> {
        check_geometry(resolution, spacing)?;
        if values.len() != resolution.pow(3) {
            return Err(Error::Dimension(format!(
                "{} values for a {resolution}³ grid",
                values.len()
            )));
        }
        for &v in &values {
            let ok = match kind {
                GridKind::Binary => v == 0.0 || v == 1.0,
                GridKind::Probabilistic => (0.0..=1.0).contains(&v),
            };
            if !ok {
                return Err(Error::Grid(format!("value {v} not allowed in a {kind:?} grid")));
            }
        }
        Ok(Self {
            resolution,
            spacing: spacing as f32 as f64,
            values,
            kind,
        })
    }

    pub fn empty(resolution: usize, spacing: f64) -> Result<Self> {
        check_geometry(resolution, spacing)?;
        Ok(Self {
            resolution,
            spacing: spacing as f32 as f64,
            values: vec![0.0; resolution.pow(3)],
            kind: GridKind::Binary,
        })
    }

    /// Binary grid with the cells selected by `occupied(x, y, z)`.
    pub fn from_fn(resolution: usize, spacing: f64, occupied: impl Fn(usize, usize, usize) -> bool) -> Result<Self> {
        let mut g = Self::empty(resolution, spacing)?;
        for x in 0..resolution {
            for y in 0..resolution {
                for z in 0..resolution {
                    if occupied(x, y, z) {
                        g.set(x, y, z, true);
                    }
                }
            }
        }
        Ok(g)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.resolution + y) * self.resolution + z
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let n = self.resolution;
        [index / (n * n), (index / n) % n, index % n]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[self.index(x, y, z)]
    }

    pub fn is_occupied(&self, x: usize, y: usize, z: usize) -> bool {
        self.get(x, y, z) >= 0.5
    }

    /// Sets a binary cell. Panics on probabilistic grids.
    pub fn set(&mut self, x: usize, y: usize, z: usize, occupied: bool) {
        assert_eq!(self.kind, GridKind::Binary, "set() on a probabilistic grid");
        let i = self.index(x, y, z);
        self.values[i] = if occupied { 1.0 } else { 0.0 };
    }

    pub fn occupied_count(&self) -> usize {
        self.values.iter().filter(|&&v| v >= 0.5).count()
    }

    /// Cell coordinates with value ≥ 0.5.
    pub fn occupied_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= 0.5)
            .map(|(i, _)| self.coords(i))
    }

    /// Builds a probabilistic grid from network outputs, clamping to `[0, 1]`.
    pub fn from_probabilities(resolution: usize, spacing: f64, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let values: Vec<f32> = values.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
        Self::new(resolution, spacing, values, GridKind::Probabilistic)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + payload_len(self.resolution, self.kind)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut header = [0u8; HEADER_LEN];
        header[..4].copy_from_slice(MAGIC);
        header[4..8].copy_from_slice(&(self.resolution as u32).to_le_bytes());
        header[8..12].copy_from_slice(&(self.spacing as f32).to_le_bytes());
        header[12] = self.kind.tag();
        w.write_all(&header)?;
        match self.kind {
            GridKind::Binary => {
                let mut bytes = vec![0u8; self.values.len().div_ceil(8)];
                for (i, &v) in self.values.iter().enumerate() {
                    if v == 1.0 {
                        bytes[i / 8] |= 1 << (i % 8);
                    }
                }
                w.write_all(&bytes)?;
            }
            GridKind::Probabilistic => {
                let mut bytes = Vec::with_capacity(self.values.len() * 4);
                for v in &self.values {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&bytes)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated grid header: {e}")))?;
        if &header[..4] != MAGIC {
            return Err(Error::Format("bad magic: not a VXG1 grid".into()));
        }
        let resolution = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let spacing = f32::from_le_bytes(header[8..12].try_into().unwrap()) as f64;
        let kind = GridKind::from_tag(header[12])?;
        check_geometry(resolution, spacing)?;
        if resolution > 1024 {
            return Err(Error::Format(format!("implausible resolution {resolution}")));
        }
        let mut payload = vec![0u8; payload_len(resolution, kind)];
        r.read_exact(&mut payload)
            .map_err(|e| Error::Format(format!("truncated grid payload: {e}")))?;
        let n = resolution.pow(3);
        let values = match kind {
            GridKind::Binary => (0..n).map(|i| ((payload[i / 8] >> (i % 8)) & 1) as f32).collect(),
            GridKind::Probabilistic => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        Self::new(resolution, spacing, values, kind)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        Self::read_from(&mut cursor)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn payload_len(resolution: usize, kind: GridKind) -> usize {
    let n = resolution.pow(3);
    match kind {
        GridKind::Binary => n.div_ceil(8),
        GridKind::Probabilistic => n * 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_geometry_and_values() {
        assert!(VoxelGrid::empty(12, 1.0).is_err());
        assert!(VoxelGrid::empty(8, 0.0).is_err());
        assert!(VoxelGrid::new(2, 1.0, vec![0.5; 8], GridKind::Binary).is_err());
        assert!(VoxelGrid::new(2, 1.0, vec![1.5; 8], GridKind::Probabilistic).is_err());
        assert!(VoxelGrid::new(2, 1.0, vec![0.0; 7], GridKind::Binary).is_err());
    }

    #[test]
    fn header_layout_is_sixteen_bytes() {
        let g = VoxelGrid::from_fn(4, 0.25, |x, _, _| x == 0).unwrap();
        let bytes = g.to_bytes();
        assert_eq!(&bytes[..4], b"VXG1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 4);
        assert_eq!(f32::from_le_bytes(bytes[8..12].try_into().unwrap()), 0.25);
        assert_eq!(bytes[12], 0);
        assert_eq!(&bytes[13..16], &[0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 8);
    }

    #[test]
    fn bad_magic_is_reported() {
        let mut bytes = VoxelGrid::empty(2, 1.0).unwrap().to_bytes();
        bytes[0] = b'X';
        let err = VoxelGrid::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    proptest! {
        #[test]
        fn serialization_round_trips(bits in proptest::collection::vec(any::<bool>(), 64), probs in proptest::collection::vec(0.0f32..=1.0, 64)) {
            let b = VoxelGrid::new(4, 0.5, bits.iter().map(|&o| o as u8 as f32).collect(), GridKind::Binary).unwrap();
            prop_assert_eq!(VoxelGrid::from_bytes(&b.to_bytes()).unwrap(), b);
            let p = VoxelGrid::new(4, 0.5, probs, GridKind::Probabilistic).unwrap();
            prop_assert_eq!(VoxelGrid::from_bytes(&p.to_bytes()).unwrap(), p);
        }
    }
}
