//! Fixed network shapes of the four decoder kinds.

use serde::{Deserialize, Serialize};

use crate::numerics::kernels::TCONV_KERNEL;

/// Number of latent resolutions; also the synthesis input width.
pub const N_LEVELS: usize = 7;

/// Spatial extents must be multiples of this so every level is integral.
pub const SIZE_MULTIPLE: usize = 1 << (N_LEVELS - 1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecoderKind {
    Intra,
    Residue,
    MotionP,
    MotionB,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 4] =
        [DecoderKind::Intra, DecoderKind::Residue, DecoderKind::MotionP, DecoderKind::MotionB];

    pub fn code(self) -> u8 {
        match self {
            DecoderKind::Intra => 0,
            DecoderKind::Residue => 1,
            DecoderKind::MotionP => 2,
            DecoderKind::MotionB => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Intra => "intra",
            DecoderKind::Residue => "residue",
            DecoderKind::MotionP => "motion-p",
            DecoderKind::MotionB => "motion-b",
        }
    }

    pub fn is_motion(self) -> bool {
        matches!(self, DecoderKind::MotionP | DecoderKind::MotionB)
    }

    /// Context size and hidden width of the auto-regressive model.
    pub fn arm_width(self) -> usize {
        match self {
            DecoderKind::Intra => 24,
            _ => 8,
        }
    }

    /// Number of hidden `width -> width` layers before the final `width -> 2`.
    pub fn arm_hidden_layers(self) -> usize {
        match self {
            DecoderKind::Intra | DecoderKind::Residue => 2,
            DecoderKind::MotionP | DecoderKind::MotionB => 1,
        }
    }

    pub fn output_channels(self) -> usize {
        match self {
            DecoderKind::Intra => 3,
            DecoderKind::Residue => 4,
            DecoderKind::MotionP => 2,
            DecoderKind::MotionB => 5,
        }
    }

    pub fn synthesis(self) -> Vec<ConvSpec> {
        let c = |k, cin, cout, relu, residual| ConvSpec { k, cin, cout, relu, residual };
        match self {
            DecoderKind::Intra => vec![
                c(1, N_LEVELS, 40, true, false),
                c(1, 40, 3, false, false),
                c(3, 3, 3, true, true),
                c(3, 3, 3, false, true),
            ],
            DecoderKind::Residue => vec![
                c(1, N_LEVELS, 28, true, false),
                c(1, 28, 4, false, false),
                c(3, 4, 4, false, true),
            ],
            DecoderKind::MotionP | DecoderKind::MotionB => {
                let m = self.output_channels();
                vec![c(1, N_LEVELS, 9, true, false), c(1, 9, m, false, false), c(3, m, m, false, true)]
            }
        }
    }

    /// Linear layers of the auto-regressive model as (inputs, outputs).
    pub fn arm_layers(self) -> Vec<(usize, usize)> {
        let w = self.arm_width();
        let mut v = vec![(w, w); self.arm_hidden_layers()];
        v.push((w, 2));
        v
    }

    /// Shapes of every parameter tensor, in storage order: ARM (weight, bias)
    /// pairs, upsampler (kernel, bias), synthesis (weight, bias) pairs.
    pub fn param_shapes(self) -> Vec<ParamShape> {
        let mut out = Vec::new();
        for (i, (n_in, n_out)) in self.arm_layers().into_iter().enumerate() {
            out.push(ParamShape::new(format!("arm.{i}.weight"), vec![n_out, n_in], ParamRole::ArmWeight));
            out.push(ParamShape::new(format!("arm.{i}.bias"), vec![n_out], ParamRole::ArmBias));
        }
        out.push(ParamShape::new("upsampler.kernel".into(), vec![TCONV_KERNEL, TCONV_KERNEL], ParamRole::UpKernel));
        out.push(ParamShape::new("upsampler.bias".into(), vec![1], ParamRole::UpBias));
        for (i, l) in self.synthesis().into_iter().enumerate() {
            out.push(ParamShape::new(
                format!("synthesis.{i}.weight"),
                vec![l.cout, l.cin, l.k, l.k],
                ParamRole::SynWeight,
            ));
            out.push(ParamShape::new(format!("synthesis.{i}.bias"), vec![l.cout], ParamRole::SynBias));
        }
        out
    }

    pub fn n_arm_params(self) -> usize {
        2 * self.arm_layers().len()
    }
}

/// One synthesis convolution: `k`-`cin`-`cout`, optional ReLU and identity skip.
/// With a skip the layer computes `act(x + conv(x))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
    pub relu: bool,
    pub residual: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    ArmWeight,
    ArmBias,
    UpKernel,
    UpBias,
    SynWeight,
    SynBias,
}

impl ParamRole {
    pub fn is_arm(self) -> bool {
        matches!(self, ParamRole::ArmWeight | ParamRole::ArmBias)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: ParamRole,
}

impl ParamShape {
    fn new(name: String, shape: Vec<usize>, role: ParamRole) -> Self {
        ParamShape { name, shape, role }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn fan_in(&self) -> usize {
        match self.role {
            ParamRole::ArmWeight => self.shape[1],
            ParamRole::SynWeight => self.shape[1] * self.shape[2] * self.shape[3],
            _ => 1,
        }
    }
}

/// Extents of every pyramid level for an `h` x `w` frame.
pub fn level_dims(h: usize, w: usize) -> Vec<(usize, usize)> {
    (0..N_LEVELS).map(|l| (h.div_ceil(1 << l), w.div_ceil(1 << l))).collect()
}

/// Fraction of latents per output pixel: sum over levels of 4^-l.
pub fn pyramid_density() -> f64 {
    (0..N_LEVELS).map(|l| 0.25f64.powi(l as i32)).sum()
}

/// Multiply-accumulates per decoded pixel, split by sub-network. Biases,
/// activations and warping are not counted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacBreakdown {
    pub arm: f64,
    pub upsampler: f64,
    pub synthesis: f64,
}

impl MacBreakdown {
    pub fn total(&self) -> f64 {
        self.arm + self.upsampler + self.synthesis
    }
}

pub fn macs_per_pixel(kind: DecoderKind) -> MacBreakdown {
    let arm_per_latent: usize = kind.arm_layers().iter().map(|(i, o)| i * o).sum();
    // A stride-2 transposed convolution touches k*k/4 kernel taps per output sample.
    let tconv_per_output = (TCONV_KERNEL * TCONV_KERNEL / 4) as f64;
    let mut up = 0.0;
    for l in 1..N_LEVELS {
        for step in 0..l {
            up += tconv_per_output * 0.25f64.powi(step as i32);
        }
    }
    let syn: usize = kind.synthesis().iter().map(|c| c.k * c.k * c.cin * c.cout).sum();
    MacBreakdown { arm: arm_per_latent as f64 * pyramid_density(), upsampler: up, synthesis: syn as f64 }
}
