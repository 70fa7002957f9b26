//! Regional refinement DiT: audio-free, prior-guided inpainting of face and hand regions.

mod mask;
mod model;
mod prior;
mod refine;

pub use mask::{build_inpaint_mask, InpaintMask, RegionBoxes};
pub use model::{assemble_refine_input, R2Conds, R2Dit, REFINE_FRAMES};
pub use prior::StructuralPrior;
pub use refine::{inpaint, refine_clip, RefineInputs};
