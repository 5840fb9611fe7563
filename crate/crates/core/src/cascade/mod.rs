//! Partial-view prediction: a reconstruction network completes the visible
//! shell, PCA alignment canonicalizes it, and the deformation network runs on
//! the result. Also the single-network alternative trained on partial inputs.

mod pipeline;
mod reconstructor;

pub use pipeline::{aligned_examples, completed_examples, CascadeOutput, CascadePipeline, PipelineDescriptor, DESCRIPTOR_FILE};
pub use reconstructor::{
    reconstruction_examples, reconstructor_config, train_direct_partial, train_reconstructor, Reconstruction, ReconstructionBackend,
    Reconstructor,
};

#[cfg(test)]
mod tests;
