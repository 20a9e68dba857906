//! Convolutional regression network with hand-written backpropagation and
//! Adam, generic over `f32` and `f64`.

mod checkpoint;
mod gradcheck;
mod layers;
mod model;
mod real;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use gradcheck::{check_gradients, GradCheck};
pub use layers::{Activations, BatchNorm2d, Conv2d, Dense};
pub use model::{loss_and_gradients, mse, Architecture, CnnModel, Gradients, Layer, Mode, Tape};
pub use real::{gemm, Real};
pub use train::{adam_step, batch_from_tensors, freeze_and_finetune, predict, train, AdamState, TrainConfig};
