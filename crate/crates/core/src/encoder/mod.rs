//! Overfitting every decoder of a GOP to its content.

mod config;
mod schedule;
mod train;
mod video;

pub use config::{
    EncoderConfig, FlowSource, Iterations, RateConstraint, ScheduleConfig, DEFAULT_LAMBDA_V_FACTOR, LAMBDA_PRESETS,
};
pub use schedule::{Phase, PhaseKind, Schedule, Step};
pub use train::{
    decoder_rng, encode_frame, guide_target, joint_optimize, joint_terms, optimize, pretrain_motion, stage_rng, CurvePoint,
    StageLog, Target,
};
pub use video::{encode_video, EncodeReport, EncodedVideo, FrameReport};
