//! Part-colored interaction representations: palette, mask videos,
//! trajectory rendering, blurring, compositing and quantization.

pub mod blur;
pub mod palette;
pub mod render;
pub mod tracks;
pub mod video;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use palette::{build_palette, PartPalette};
pub use render::{class_map, composite_hoi, quantize_to_palette, render_trajectories, render_visibility};
pub use tracks::sample_track_points;
pub use video::{MaskVideo, RealVideo, TrajectorySet};
