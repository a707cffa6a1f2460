//! LSTM mortality model: matrices, the recurrent network, Adam and training.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;
pub mod matrix;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use lstm::{
    backward, bce_loss, forward, forward_batch, loss_and_grad, lstm_cell, mean_bce, predict,
    LstmLayerParams, LstmModel, Sample, SampleRef, DEFAULT_HIDDEN, N_LAYERS,
};
pub use matrix::Matrix;
pub use train::{train, train_from, EarlyStopping, EpochRecord, History, Monitor, TrainConfig};

use crate::featurize::FeatureTensor;

impl FeatureTensor {
    /// Borrowed 48×13 sequence and statics in the network's input form.
    pub fn as_sample(&self) -> SampleRef<'_> {
        SampleRef {
            seq: self.seq.as_flattened(),
            static_features: &self.static_features,
            label: self.label_f64(),
        }
    }
}
