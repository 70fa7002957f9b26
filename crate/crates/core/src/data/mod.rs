//! Procedural speaker generator and the on-disk clip bundle.

mod bundle;
mod synth;
mod track;

pub use bundle::{
    clip_seeds, parse_key_values, list_bundles, read_dataset, synth_bundles, synth_split, write_dataset, BundleMeta, ClipBundle, DatasetSpec,
    BUNDLE_FILES,
};
pub use synth::{generate_session, Identity, Session, SynthConfig, HAND_POINTS};
pub use track::track_hands;
