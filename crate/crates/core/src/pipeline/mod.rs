//! End-to-end generation, refinement, evaluation and ablation sweeps.

mod ablate;
mod cascade;
mod eval;
mod generate;

pub use ablate::{generate_eval_set, run_ablation, AblationSetup, Variant};
pub use cascade::{cascade_generate, refine_chunk, CascadeOutput, Stage2};
pub use eval::{clip_bas, evaluate, face_features, format_table, generated_hands, EvalPair, MetricRow, COLUMNS};
pub use generate::{generate_long, sample_chunk, seam_stats, Driving, LongVideo, SeamStats, Stage1, StaticConds, INFER_HEAD_MARGIN};
