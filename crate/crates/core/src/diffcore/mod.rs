//! Reverse-mode autodiff over dense f64 tensors, plus the attention and
//! optimizer primitives the model is built from.

mod attention;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use attention::{multi_head_attention, AttnOutput, MhaParams, MhaVars, MhaWeights, ValueOut};
pub use gradcheck::{grad_check, grad_check_many, GradCheckReport};
pub use graph::{CustomOp, Graph, Grads, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use tensor::{matmul, Tensor};

pub(crate) use graph::sigmoid;
