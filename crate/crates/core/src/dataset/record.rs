use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::voxel::VoxelGrid;

use super::condition::{ConditionVector, LocationEncoding};

pub const RECORD_VERSION: u32 = 1;

/// Where a record's input grid came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Full3d,
    Partial,
    Reconstructed,
}

impl InputKind {
    fn tag(self) -> u8 {
        match self {
            InputKind::Full3d => 0,
            InputKind::Partial => 1,
            InputKind::Reconstructed => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(InputKind::Full3d),
            1 => Ok(InputKind::Partial),
            2 => Ok(InputKind::Reconstructed),
            t => Err(Error::Format(format!("unknown input kind tag {t}"))),
        }
    }
}

/// Raw physical parameters behind a record.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordMetadata {
    pub object_id: String,
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    pub force: f64,
    /// Force range maximum used to normalize `force`.
    pub force_max: f64,
    pub location_index: usize,
    pub location_count: usize,
    pub scale: [f64; 3],
    /// Camera pose angles (radians); zero for full-3D records.
    pub rotation: [f64; 3],
    pub seed: u64,
    /// Undeformed full shape in the input's frame, carried by partial records.
    pub reference: Option<VoxelGrid>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub input_kind: InputKind,
    pub input: VoxelGrid,
    pub target: VoxelGrid,
    pub condition: ConditionVector,
    pub metadata: RecordMetadata,
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format("truncated record".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn grid(&mut self) -> Result<VoxelGrid> {
        let mut cursor = self.bytes;
        let g = VoxelGrid::read_from(&mut cursor)?;
        self.bytes = cursor;
        Ok(g)
    }
}

impl SampleRecord {
    /// Layout: u32 version, u8 input kind, input grid, target grid, u16
    /// condition length, f32 condition values, then a u32-length-prefixed
    /// metadata block (see [`RecordMetadata`] field order; strings are
    /// u16-length-prefixed UTF-8, the reference grid is preceded by a u8 flag).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&RECORD_VERSION.to_le_bytes());
        out.push(self.input_kind.tag());
        self.input.write_to(&mut out).expect("Vec write");
        self.target.write_to(&mut out).expect("Vec write");
        let cond = self.condition.to_vec();
        out.extend_from_slice(&(cond.len() as u16).to_le_bytes());
        for v in cond {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let meta = self.metadata_bytes();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out
    }

    fn metadata_bytes(&self) -> Vec<u8> {
        let m = &self.metadata;
        let mut out = Vec::new();
        let id = m.object_id.as_bytes();
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id);
        for v in [m.youngs_modulus, m.poissons_ratio, m.force, m.force_max] {
            put_f64(&mut out, v);
        }
        out.extend_from_slice(&(m.location_index as u32).to_le_bytes());
        out.extend_from_slice(&(m.location_count as u32).to_le_bytes());
        for v in m.scale.iter().chain(&m.rotation) {
            put_f64(&mut out, *v);
        }
        out.extend_from_slice(&m.seed.to_le_bytes());
        match &m.reference {
            Some(g) => {
                out.push(1);
                g.write_to(&mut out).expect("Vec write");
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], encoding: LocationEncoding) -> Result<Self> {
        let mut r = Reader { bytes };
        let version = r.u32()?;
        if version != RECORD_VERSION {
            return Err(Error::Format(format!("record version {version}, expected {RECORD_VERSION}")));
        }
        let input_kind = InputKind::from_tag(r.u8()?)?;
        let input = r.grid()?;
        let target = r.grid()?;
        if input.resolution() != target.resolution() {
            return Err(Error::Format("record grids differ in resolution".into()));
        }
        let len = r.u16()? as usize;
        let values = (0..len).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
        let condition = ConditionVector::from_values(&values, encoding)?;
        let meta_len = r.u32()? as usize;
        let mut m = Reader { bytes: r.take(meta_len)? };
        if !r.bytes.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after record", r.bytes.len())));
        }
        let id_len = m.u16()? as usize;
        let object_id = String::from_utf8(m.take(id_len)?.to_vec()).map_err(|e| Error::Format(format!("object id: {e}")))?;
        let (youngs_modulus, poissons_ratio, force, force_max) = (m.f64()?, m.f64()?, m.f64()?, m.f64()?);
        let (location_index, location_count) = (m.u32()? as usize, m.u32()? as usize);
        let scale = [m.f64()?, m.f64()?, m.f64()?];
        let rotation = [m.f64()?, m.f64()?, m.f64()?];
        let seed = m.u64()?;
        let reference = match m.u8()? {
            0 => None,
            1 => Some(m.grid()?),
            t => return Err(Error::Format(format!("bad reference flag {t}"))),
        };
        Ok(Self {
            input_kind,
            input,
            target,
            condition,
            metadata: RecordMetadata {
                object_id,
                youngs_modulus,
                poissons_ratio,
                force,
                force_max,
                location_index,
                location_count,
                scale,
                rotation,
                seed,
                reference,
            },
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read, encoding: LocationEncoding) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, encoding)
    }

    /// Re-encodes the condition from metadata under `encoding`.
    pub fn reencoded(&self, encoding: LocationEncoding) -> Result<Self> {
        let m = &self.metadata;
        let material = crate::elastic::MaterialParams {
            youngs_modulus: m.youngs_modulus,
            poissons_ratio: m.poissons_ratio,
        };
        let force = crate::elastic::ForceSpec {
            magnitude: m.force,
            location_index: m.location_index,
            direction: crate::elastic::DOWN,
        };
        let mut out = self.clone();
        out.condition = super::condition::encode_condition(&material, &force, m.force_max, encoding, m.location_count)?;
        Ok(out)
    }
}
