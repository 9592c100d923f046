//! Frame reconstruction: warping, blending, coding-mode masking, colour
//! format handling and GOP decoding.

mod decode;
mod frame;
mod gop;
pub mod io;
mod ops;
pub mod synthetic;

pub use decode::{decode_frame, decode_gop, decoders_from_record, DecodedVideo};
pub use frame::{max_value, Frame, Planes420};
pub use gop::{FrameKind, GopFrame, GopPreset, GopStructure};
pub use ops::{
    blend, blend_tensor, frame_reconstruction, reconstruct, reconstruct_tensor, split_motion, split_residue,
    to_yuv420, warp_tensor, yuv420_mse, MotionVars, ResidueVars,
};
