//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Backward passes are recorded on the same tape as forward ops, which gives
//! gradients of gradients for free. That is what a gradient-penalty critic
//! loss needs: the penalty depends on `∂D/∂input`, and training it needs the
//! derivative of that with respect to the critic weights.
//!
//! ```
//! use physnet_autograd::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]));
//! let y = x.square().sum_all();
//! let dx = g.grad(y, &[x])[0];
//! assert_eq!(dx.value().data(), &[2.0, 4.0, 6.0]);
//! let ddx = g.grad(dx.sum_all(), &[x])[0];
//! assert_eq!(ddx.value().data(), &[2.0, 2.0, 2.0]);
//! ```

mod conv;
mod graph;
mod tensor;

pub use conv::{ConvGeometry, ConvShape};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
