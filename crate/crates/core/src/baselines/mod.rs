//! Reference tokenizers.

pub mod binning;
pub mod dct_bpe;
pub mod string;

pub use binning::{BinningConfig, BinningTokenizer};
pub use dct_bpe::{dct_forward, dct_inverse, DctBpeConfig, DctBpeTokenizer};
pub use string::StringTokenizer;
