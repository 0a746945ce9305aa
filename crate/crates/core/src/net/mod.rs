//! Plain fully convolutional despeckling network.
//!
//! `depth` zero-padded `k x k` convolutions map the noisy intensity image to
//! the filtered one, with rectifiers between layers and a linear last layer.
//! Everything runs in `f64`; weight files store `f32`, and trained or freshly
//! initialized parameters are kept `f32`-representable so that files
//! round-trip exactly.

mod adam;
mod conv;
mod params;
mod train;
mod weights_io;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{backward, despeckle, forward, ForwardCache};
pub use params::{init_params, ArchSpec, LayerParams, NetworkParams, ParamGrads};
pub use train::{evaluate_pairs, train, train_with, EpochRecord, Schedule, TermLosses, TrainLog};
pub use weights_io::{
    load_params, load_params_expecting, params_from_bytes, params_to_bytes, save_params,
    WEIGHTS_MAGIC, WEIGHTS_VERSION,
};
