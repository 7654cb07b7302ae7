//! Camera model, rigid motions, patch warping and bilinear sampling.

mod camera;
mod image;
mod pose;

pub use camera::{
    backproject, project, support_domain, warp_patch, Intrinsics, PixelPoint, SupportDomain,
    WarpedPatch, CENTER_SAMPLE, CHEIRALITY_EPS,
};
pub(crate) use camera::projection_jacobian;
pub use image::{bilinear_sample, ChannelSample, DepthMap, Image, LUMA};
pub(crate) use image::{bilinear_cell, bilinear_in_cell};
pub use pose::{
    hat, left_update, pose_compose, pose_inverse, rotation_angle, se3_exp, se3_log, PoseSE3,
    Twist, SMALL_ANGLE,
};
