//! The completion models: DMF (latent columns through a decoder), RNN-DMF
//! (latents pass through a recurrent encoder first) and TIME-DMF (the encoder
//! is gated by the intervals between timestamps).

mod config;
mod decoder;
mod encoder;
mod model;
mod qg;
mod train;

pub use config::{ModelConfig, ModelKind, TauMode};
pub use decoder::{decoder_parameter_count, dmf_decode, Decoder, DecoderLayer, DecoderWeights};
pub use encoder::{
    intervals, rnn_encode, time_encode, EncoderState, EncoderTrace, EncoderWeights, GateWeights, InitialState,
    LatentPath,
};
pub use model::{closed_form_parameter_count, query_latent, Forward, Model};
pub use qg::{qg_insert, query, query_many, query_many_with, Insertion, QueryResult};
pub use train::{fit, train, train_model, CompletionResult, TrainingReport};
