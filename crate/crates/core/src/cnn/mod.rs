//! Convolutional patch classifier trained from scratch.

mod arch;
mod layers;
mod network;
mod solver;
mod volume;

pub use arch::{
    caffenet_layers, compact_layers, infer_shapes, validate_saliency_pattern, ArchPreset, LayerKind, LayerSpec,
    DEFAULT_LRN, SALIENCY_PATTERN,
};
pub use layers::{
    conv_backward, conv_forward, cross_entropy, inner_product_backward, inner_product_forward, lrn_backward,
    lrn_forward, maxpool_backward, maxpool_forward, pool_output_dim, relu, relu_backward, softmax, ConvGeometry,
    LrnParams,
};
pub use network::{ForwardCache, Gradients, Init, LayerParams, NetworkModel, Sample};
pub use solver::{
    compute_iterations, train, train_resumable, LrSchedule, SolverConfig, Strategy, TrainOutcome, TrainReport,
    TrainState, ValidationPoint,
};
pub use volume::{Shape, Volume};
