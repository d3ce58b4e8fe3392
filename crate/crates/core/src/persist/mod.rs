//! On-disk formats: `<name>.manifest` (TOML index) beside `<name>.bin`
//! (raw little-endian f64), plus the plain-text configuration format.

mod bundle;
pub mod ini;
mod objects;

pub use bundle::{bundle_paths, read_bundle, read_manifest, write_bundle, Bundle, EntryIndex, Manifest, FORMAT_VERSION};
pub use objects::*;

pub use crate::harness::config::{config_to_text, parse_config};
