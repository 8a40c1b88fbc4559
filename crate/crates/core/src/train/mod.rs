//! Losses, the pairwise regularizer, optimizers, models, the training loop,
//! finite-difference gradient checks and the single-neuron XOR solver.

mod checkpoint;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod regularizer;
mod trainer;
mod xor;

pub use checkpoint::{
    load_checkpoint, read_manifest, read_tensor, save_checkpoint, CheckpointManifest, LayerEntry, TensorEntry,
};
pub use gradcheck::{fd_max_rel_err, grad_check, grad_check_encoder_block, rel_err, GradCheckReport, GradTarget, FD_STEP};
pub use loss::{accuracy, argmax, cross_entropy, cross_entropy_grad, mse, PROB_FLOOR};
pub use model::{Body, ForwardCache, HeadKind, LayerKind, Model, ModelSpec, Vit};
pub use optim::{optimizer_step, OptState, OptimizerConfig};
pub use regularizer::{e_regularizer_grad, e_regularizer_penalty};
pub use trainer::{
    check_finite, evaluate, metrics_csv, train, train_with, EpochMetrics, Evaluation, TrainConfig,
    TrainReport,
};
pub use xor::{solve_xor, xor_forward, DecisionGrid, XorSolution, XOR_GRID_MAX, XOR_GRID_MIN, XOR_GRID_SIZE};
