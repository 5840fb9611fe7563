use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::condition::LocationEncoding;
use super::plan::SamplingPlan;
use super::primitives::PrimitiveKind;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    Full3d,
    Partial,
}

/// One object of a dataset: a primitive, or a custom VXG1 grid on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    pub kind: PrimitiveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<PathBuf>,
}

impl ObjectSpec {
    pub fn primitive(kind: PrimitiveKind) -> Self {
        let id = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        Self { id, kind, grid: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    /// Path relative to the dataset directory.
    pub file: String,
    /// Byte offset of the record were all records concatenated in order.
    pub offset: u64,
    pub length: u64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub plan: SamplingPlan,
    pub mode: GenerationMode,
    pub encoding: LocationEncoding,
    pub resolution: usize,
    pub spacing: f64,
    pub seed: u64,
    pub objects: Vec<ObjectSpec>,
    pub record_count: usize,
    pub skipped: usize,
    pub records: Vec<RecordEntry>,
}

impl DatasetManifest {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "manifest version {}, expected {MANIFEST_VERSION}",
                self.format_version
            )));
        }
        if self.record_count != self.records.len() {
            return Err(Error::Format(format!(
                "manifest lists {} records but claims {}",
                self.records.len(),
                self.record_count
            )));
        }
        if self.records.windows(2).any(|w| w[1].offset <= w[0].offset) {
            return Err(Error::Format("record offsets are not strictly increasing".into()));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(Self::path(dir), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = Self::path(dir);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn record_hash(seed: u64, index: usize) -> u64 {
    fnv1a(seed.to_le_bytes().into_iter().chain((index as u64).to_le_bytes()))
}

/// Assigns 80/10/10 splits by ranking records on their hash. Validation and
/// test each get at least one record once there are three or more.
pub fn assign_splits(seed: u64, count: usize) -> Vec<Split> {
    let held = |frac: f64| if count >= 3 { ((count as f64 * frac).round() as usize).max(1) } else { 0 };
    let (n_val, n_test) = (held(0.1), held(0.1));
    let n_train = count - n_val - n_test;
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by_key(|&i| (record_hash(seed, i), i));
    let mut out = vec![Split::Train; count];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference() {
        assert_eq!(fnv1a(*b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(*b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn split_proportions() {
        let s = assign_splits(7, 100);
        let count = |k| s.iter().filter(|&&x| x == k).count();
        assert_eq!((count(Split::Train), count(Split::Validation), count(Split::Test)), (80, 10, 10));
        let small = assign_splits(7, 25);
        assert_eq!(small.iter().filter(|&&x| x == Split::Validation).count(), 3);
        assert!(assign_splits(1, 2).iter().all(|&x| x == Split::Train));
    }

    proptest! {
        #[test]
        fn splits_are_exhaustive_and_deterministic(seed in any::<u64>(), n in 0usize..300) {
            let a = assign_splits(seed, n);
            prop_assert_eq!(a.len(), n);
            prop_assert_eq!(&a, &assign_splits(seed, n));
        }
    }
}
