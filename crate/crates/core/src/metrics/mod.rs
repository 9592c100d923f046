//! Quality, rate and complexity measurements.

mod audit;
mod bdrate;
mod psnr;

pub use audit::{mac_audit, FrameMacs, KindMacs, MacAudit};
pub use bdrate::{bd_rate, fit_log_rate, parse_rd_points, CubicFit, RdPoint};
pub use psnr::{bpp, mse_rgb, mse_yuv420, psnr_from_mse, psnr_rgb, psnr_video, psnr_yuv420, rgb_bt709, ColorDomain, PSNR_CAP};
