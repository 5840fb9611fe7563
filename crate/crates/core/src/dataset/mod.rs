//! Condition encoding, sampling plans, primitive shapes and dataset generation.

mod condition;
mod generate;
mod manifest;
mod plan;
mod primitives;
mod record;

pub use condition::{encode_condition, scale_modulus, unscale_modulus, ConditionVector, DecodedCondition, LocationCode, LocationEncoding};
pub use generate::{generate_dataset, generate_dataset_with_base, Dataset, GenerationConfig, MAX_SKIP_RATE};
pub use manifest::{assign_splits, fnv1a, record_hash, DatasetManifest, GenerationMode, ObjectSpec, RecordEntry, Split, MANIFEST_VERSION};
pub use plan::{sample_materials, SamplingPlan, DEFAULT_CONSTANT_NU};
pub use primitives::{build_primitive, PrimitiveKind};
pub use record::{InputKind, RecordMetadata, SampleRecord, RECORD_VERSION};
