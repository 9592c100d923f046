//! The Cool-chic decoder: latent pyramid, auto-regressive entropy model,
//! upsampler and synthesis network.

mod arch;
pub mod arm;
mod decoder;
mod quantize;

pub use arch::{
    level_dims, macs_per_pixel, pyramid_density, ConvSpec, DecoderKind, MacBreakdown, ParamRole, ParamShape,
    N_LEVELS, SIZE_MULTIPLE,
};
pub use arm::{arm_context, context_template, ArmEvaluator};
pub use decoder::{
    bilinear_kernel, synthesis_graph, CoolChicDecoder, DecoderVars, LatentGrid, LatentPyramid, LATENT_MAX, LATENT_MIN,
};
pub use quantize::{
    laplace_scale, quantize_decoder_params, quantize_values, QuantizedParam, QuantizedParams, STEP_LOG2_MAX,
    STEP_LOG2_MIN,
};
