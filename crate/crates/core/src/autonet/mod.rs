//! Small reverse-mode autodiff engine, the attention beamforming network
//! built on it, Adam, and the checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod graph;
pub mod model;
pub mod real;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_model, save_model, FBCK_MAGIC, FBCK_VERSION};
pub use graph::{Graph, Tensor, UnaryOp, Var};
pub use model::{count_params, normalize_columns, Bound, InputNorm, Model, ModelConfig, Param};
pub use real::Real;
