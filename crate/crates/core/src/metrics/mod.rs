//! Evaluation metrics and the accumulated motion heatmap.

mod beats;
mod frechet;
mod heatmap;
mod ssim;
mod stats;

pub use beats::{
    beat_alignment_score, frame_speed, landmark_beats, motion_beats, speed_minima, BeatTrack, BAS_SIGMA,
    BEAT_MIN_SEPARATION,
};
pub use frechet::{frechet_distance, FRECHET_EPS};
pub use heatmap::{motion_heatmap, MotionHeatmap};
pub use ssim::{ssim, ssim_plane, SSIM_SIGMA, SSIM_WINDOW};
pub use stats::{cosine, hand_variance, identity_cossim};
