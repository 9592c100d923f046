//! Range coder, fixed-point Laplace model and the GOP bitstream.

mod bitstream;
mod coding;
mod model;
mod range_coder;

pub use bitstream::{
    read_gop, read_header, write_gop, DecoderBytes, DecoderPayload, FrameBytes, FrameRecord, Gop, GopHeader,
    StreamStats, CUSTOM_LAMBDA, HEADER_BYTES, MAGIC, VERSION,
};
pub use coding::{
    decode_level, decode_param, decode_pyramid, encode_level, encode_param, encode_pyramid, level_cost_bits,
};
pub use model::{LaplaceModel, ALPHABET_MAX, ALPHABET_MIN, K_MAX};
pub use range_coder::{RangeDecoder, RangeEncoder, FREQ_BITS, TOTAL_FREQ};
