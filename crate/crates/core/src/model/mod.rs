//! Encoder/decoder networks and the assembled codec.

pub mod codec;
pub mod fourier;
pub mod layers;
pub mod perceiver;

pub use codec::{ActionCodec, CodecConfig};
pub use fourier::{fourier_time_embed, geometric_frequencies};
pub use perceiver::{Decoder, Encoder, PerceiverConfig, SoftPromptTable, Variant};
